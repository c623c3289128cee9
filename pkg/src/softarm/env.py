"""Control-rate environment around the coupled rod / end-effector simulation.

Each control step clamps and interpolates the torque command, runs a fixed
number of simulation substeps, applies the gripper command, and emits the
tracking reward against the active target pose.  Environments are cheap to
clone, which the sampling controller uses for candidate rollouts.
"""

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels as K
from . import rod as rodmod
from . import scene as scenemod
from .body import CouplingParams, EndEffector, Shape
from .errors import EpisodeFinished, SceneInvalid
from .se3 import Pose, PoseDiff, RdParams, RsParams, pose_log, reward_d, reward_s, success

DONE_SUCCESS = "success"
DONE_HORIZON = "horizon"
DONE_BLOWUP = "blowup"


@dataclass
class EnvConfig:
    # control-run rod: noticeably more dissipative than the bare-rod default
    # so active braking can settle the arm inside the tracking budget; the
    # strong spin damping keeps torque switching from ringing the distal
    # elements without braking the swing of the arm
    rod: rodmod.RodConfig = field(
        default_factory=lambda: rodmod.RodConfig(damping=3.0,
                                                 angular_damping=150.0,
                                                 internal_damping=40.0))
    coupling: CouplingParams = field(default_factory=CouplingParams)
    substeps: int = 7
    horizon: int = 1500
    obs_segments: int = 8
    alpha: float = 0.2
    rd_params: RdParams = field(default_factory=RdParams)
    rs_params: RsParams = field(default_factory=RsParams)
    gravity: tuple = (0.0, 0.0, -9.81)
    n_controls: int = 6
    tau_max: float = 10.0
    eef_mass: float = 1.5e-4
    eef_inertia: float = 1.0e-4
    eef_radius: float = 0.05
    contact_stiffness: float = 1.0e4
    friction_mu: float = 0.5
    friction_v_eps: float = 1.0e-3
    rod_contact: bool = True
    eef_gravity_compensated: bool = True
    terminate_on_success: bool = True

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")
        if self.n_controls < 2 or self.n_controls > self.rod.n_elements:
            raise ValueError("n_controls must lie in [2, n_elements]")

    @property
    def control_frequency(self):
        return 1.0 / (self.substeps * self.rod.dt)


@dataclass
class Action:
    """Torque command at the control points plus the gripper state to hold."""

    torques: np.ndarray                 # (n_controls, 3), element frames
    gripper_close: bool = False

    def __post_init__(self):
        self.torques = np.asarray(self.torques, dtype=np.float64)


@dataclass
class Observation:
    segment_positions: np.ndarray    # (K, 3) element midpoints
    segment_velocities: np.ndarray   # (K, 3)
    eef_pose: Pose
    target_pose: Pose
    object_poses: dict               # id -> Pose
    gripper_open: bool
    step_index: int


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    done_reason: str = None          # success | horizon | blowup
    diff: PoseDiff = None


def torque_interpolation_matrix(n_elements: int, n_controls: int):
    """(N x M) map from control-point torques to per-element torques: cubic
    spline over normalized arc length, evaluated at element centres."""
    s_ctrl = np.linspace(0.0, 1.0, n_controls)
    s_elem = (np.arange(n_elements) + 0.5) / n_elements
    w = np.empty((n_elements, n_controls))
    for m in range(n_controls):
        unit = np.zeros(n_controls)
        unit[m] = 1.0
        w[:, m] = CubicSpline(s_ctrl, unit)(s_elem)
    return np.ascontiguousarray(w)


class SoftArmEnv:
    """Torque-actuated arm above a tabletop scene.

    One environment is one logical thread of mutation; clone() produces an
    independent copy in O(N).
    """

    def __init__(self, scene: scenemod.Scene, config: EnvConfig = None):
        self.scene = scene
        self.config = config if config is not None else EnvConfig()
        self.mat = rodmod.derive_material(self.config.rod)
        self._w = torque_interpolation_matrix(self.config.rod.n_elements,
                                              self.config.n_controls)
        self._mount = Pose(translation=scenemod.MOUNT_POSITION.copy())
        self.reset(seed=scene.rng_seed)

    # -- construction -------------------------------------------------------

    def _params(self):
        cfg = self.config
        par = rodmod._rod_params(cfg.rod, self.mat, cfg.gravity, self._mount)
        par[K.P_KF] = cfg.coupling.k_f
        par[K.P_KM] = cfg.coupling.k_m
        par[K.P_CF] = cfg.coupling.c_f
        par[K.P_CM] = cfg.coupling.c_m
        par[K.P_KC] = cfg.contact_stiffness
        par[K.P_MU] = cfg.friction_mu
        par[K.P_VEPS] = cfg.friction_v_eps
        x0, x1, y0, y1 = scenemod.TABLE_RECT
        par[K.P_TBX0] = x0
        par[K.P_TBX1] = x1
        par[K.P_TBY0] = y0
        par[K.P_TBY1] = y1
        par[K.P_EEFR] = cfg.eef_radius
        par[K.P_EEFM] = cfg.eef_mass
        par[K.P_EI1:K.P_EI1 + 3] = cfg.eef_inertia
        par[K.P_RODCT] = 1.0 if cfg.rod_contact else 0.0
        par[K.P_EEFGC] = 1.0 if cfg.eef_gravity_compensated else 0.0
        return par

    def reset(self, seed: int = 0) -> Observation:
        """Rebuild the initial state: straight vertical rod on its mount, the
        end-effector at the tip with zero offset, objects at scene poses.

        Deterministic: equal (scene, seed) gives bitwise-equal states."""
        self.scene.validate()
        cfg = self.config
        self.seed = int(seed)
        self._rod = rodmod.straight_state(cfg.rod, self._mount)
        self._rod.rate_dt = cfg.rod.dt
        self._par = self._params()
        self._node_mass = rodmod.node_masses(cfg.rod, self.mat)
        rl = self._rod.element_rest_lengths
        self._vor = np.ascontiguousarray(0.5 * (rl[:-1] + rl[1:]))
        tip = self._rod.tip_pose()
        self._eef_p = tip.translation.copy()
        self._eef_q = tip.rotation.copy()
        self._eef_v = np.zeros(3)
        self._eef_w = np.zeros(3)
        objs = self.scene.objects
        self._obj_ids = [o.id for o in objs]
        self._obj_pos = np.ascontiguousarray(
            np.stack([o.pose.translation for o in objs])
            if objs else np.zeros((0, 3)))
        self._obj_quat = np.ascontiguousarray(
            np.stack([o.pose.rotation for o in objs])
            if objs else np.zeros((0, 4)))
        self._obj_vel = np.zeros((len(objs), 3))
        self._obj_shape = np.ascontiguousarray(
            np.array([o.shape.code for o in objs], dtype=np.int64))
        self._obj_params = np.ascontiguousarray(
            np.stack([o.shape.params3 for o in objs])
            if objs else np.zeros((0, 3)))
        self._obj_mass = np.ascontiguousarray(
            np.array([o.mass for o in objs], dtype=np.float64))
        self._obj_flags = np.ascontiguousarray(
            np.array([1 if o.is_obstacle else 0 for o in objs], dtype=np.int64))
        self._obj_bound = np.ascontiguousarray(
            np.array([o.shape.bounding_radius for o in objs], dtype=np.float64))
        self._held_idx = -1
        self._held_rel_p = np.zeros(3)
        self._held_rel_q = np.array([1.0, 0.0, 0.0, 0.0])
        self._gripper_open = True
        self._buffers = self._make_buffers()
        self.step_index = 0
        self.substep_count = 0
        self._done = False
        self._done_reason = None
        self._d_prev = None
        self._target = self.eef_pose()
        return self.observe()

    def _make_buffers(self):
        n = self.config.rod.n_elements
        return (np.empty((n + 1, 3)), np.empty((n, 3)), np.empty(n),
                np.empty((n, 3)), np.empty((n - 1, 3)), np.empty((n - 1, 3)))

    # -- views --------------------------------------------------------------

    def eef_pose(self) -> Pose:
        return Pose(self._eef_q.copy(), self._eef_p.copy())

    def tip_pose(self) -> Pose:
        return self._rod.tip_pose()

    def end_effector(self) -> EndEffector:
        cfg = self.config
        return EndEffector(pose=self.eef_pose(),
                           linear_velocity=self._eef_v.copy(),
                           angular_velocity=self._eef_w.copy(),
                           mass=cfg.eef_mass,
                           inertia=np.eye(3) * cfg.eef_inertia,
                           radius=cfg.eef_radius,
                           gripper_open=self._gripper_open,
                           held_object=(self._obj_ids[self._held_idx]
                                        if self._held_idx >= 0 else None))

    def object_pose(self, object_id) -> Pose:
        i = self._obj_ids.index(object_id)
        return Pose(self._obj_quat[i].copy(), self._obj_pos[i].copy())

    @property
    def done(self):
        return self._done

    @property
    def done_reason(self):
        return self._done_reason

    @property
    def target(self) -> Pose:
        return self._target.copy()

    def set_target(self, pose: Pose):
        """Install a new tracking target.  Re-arms a success-terminated
        episode and restarts the reward trend from scratch."""
        self._target = pose.copy()
        self._d_prev = None
        if self._done and self._done_reason == DONE_SUCCESS:
            self._done = False
            self._done_reason = None

    def pose_diff(self) -> PoseDiff:
        return pose_log(self.eef_pose(), self._target, self.config.alpha)

    def observe(self) -> Observation:
        cfg = self.config
        n = cfg.rod.n_elements
        k = cfg.obs_segments
        idx = (np.arange(k) * n) // k
        x = self._rod.node_positions
        v = self._rod.node_velocities
        seg_p = 0.5 * (x[idx] + x[idx + 1])
        seg_v = 0.5 * (v[idx] + v[idx + 1])
        if not (np.all(np.isfinite(seg_p)) and np.all(np.isfinite(self._eef_p))):
            raise SceneInvalid("non-finite state in observation")
        return Observation(
            segment_positions=np.ascontiguousarray(seg_p),
            segment_velocities=np.ascontiguousarray(seg_v),
            eef_pose=self.eef_pose(),
            target_pose=self._target.copy(),
            object_poses={oid: Pose(self._obj_quat[i].copy(),
                                    self._obj_pos[i].copy())
                          for i, oid in enumerate(self._obj_ids)},
            gripper_open=self._gripper_open,
            step_index=self.step_index)

    def state_fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self._rod.node_positions, self._rod.node_velocities,
                  self._rod.element_rotations,
                  self._rod.element_angular_velocities, self._rod.prev_stretch,
                  self._eef_p, self._eef_q, self._eef_v, self._eef_w,
                  self._obj_pos, self._obj_quat, self._obj_vel):
            h.update(a.tobytes())
        h.update(np.int64(self._held_idx).tobytes())
        h.update(np.int64(self.step_index).tobytes())
        return h.hexdigest()

    def clone(self) -> "SoftArmEnv":
        new = object.__new__(SoftArmEnv)
        new.scene = self.scene
        new.config = self.config
        new.mat = self.mat
        new._w = self._w
        new._mount = self._mount
        new.seed = self.seed
        new._rod = self._rod.copy()
        new._par = self._par            # read-only in kernels
        new._node_mass = self._node_mass
        new._vor = self._vor
        new._eef_p = self._eef_p.copy()
        new._eef_q = self._eef_q.copy()
        new._eef_v = self._eef_v.copy()
        new._eef_w = self._eef_w.copy()
        new._obj_ids = self._obj_ids
        new._obj_pos = self._obj_pos.copy()
        new._obj_quat = self._obj_quat.copy()
        new._obj_vel = self._obj_vel.copy()
        new._obj_shape = self._obj_shape
        new._obj_params = self._obj_params
        new._obj_mass = self._obj_mass
        new._obj_flags = self._obj_flags
        new._obj_bound = self._obj_bound
        new._held_idx = self._held_idx
        new._held_rel_p = self._held_rel_p.copy()
        new._held_rel_q = self._held_rel_q.copy()
        new._gripper_open = self._gripper_open
        new._buffers = new._make_buffers()
        new.step_index = self.step_index
        new.substep_count = self.substep_count
        new._done = self._done
        new._done_reason = self._done_reason
        new._d_prev = self._d_prev
        new._target = self._target.copy()
        return new

    # -- stepping -----------------------------------------------------------

    def element_torques(self, action: Action):
        cp = np.clip(action.torques, -self.config.tau_max, self.config.tau_max)
        if cp.shape != (self.config.n_controls, 3):
            raise ValueError(
                f"torques must be ({self.config.n_controls}, 3)")
        return np.ascontiguousarray(self._w @ cp)

    def _apply_gripper(self, close: bool):
        # a commanded-closed empty gripper keeps trying to bind, so a close
        # held through an approach engages at the first in-tolerance step
        if close:
            if self._held_idx < 0:
                best = None
                eefp = self.eef_pose()
                for i, o in enumerate(self.scene.objects):
                    if o.is_obstacle:
                        continue
                    # binding while interpenetrating would make the contact
                    # shove the payload apart again on release
                    pen = K._sphere_object_gap(
                        eefp.translation[0], eefp.translation[1],
                        eefp.translation[2], self.config.eef_radius,
                        self._obj_shape[i], self._obj_params[i],
                        self._obj_pos[i], self._obj_quat[i])[0]
                    if pen > 1.0e-3:
                        continue
                    opose = Pose(self._obj_quat[i].copy(),
                                 self._obj_pos[i].copy())
                    for gp in o.grasp_poses:
                        world = opose.compose(gp)
                        diff = pose_log(eefp, world, self.config.alpha)
                        dp = float(np.linalg.norm(diff.d_p))
                        dr = float(np.linalg.norm(diff.d_r))
                        if (dp < 0.03 and dr < 0.3
                                and (best is None or dp < best[0])):
                            best = (dp, i)
                if best is not None:
                    i = best[1]
                    self._held_idx = i
                    inv = self.eef_pose().inverse()
                    rel = inv.compose(Pose(self._obj_quat[i].copy(),
                                           self._obj_pos[i].copy()))
                    self._held_rel_p = rel.translation.copy()
                    self._held_rel_q = rel.rotation.copy()
            self._gripper_open = False
        else:
            self._gripper_open = True
            if self._held_idx >= 0:
                # released object keeps the carried velocity
                self._held_idx = -1

    def step(self, action: Action) -> StepResult:
        if self._done:
            raise EpisodeFinished(f"episode over ({self._done_reason})")
        tau = self.element_torques(action)
        nf, et, eb, ng, bc, b3 = self._buffers
        rc = K.control_step(self._par, self._rod.node_positions,
                            self._rod.node_velocities,
                            self._rod.element_rotations,
                            self._rod.element_angular_velocities,
                            self._rod.prev_stretch,
                            self._rod.element_rest_lengths, self._vor,
                            self._node_mass, self._eef_p, self._eef_q,
                            self._eef_v, self._eef_w, self._obj_pos,
                            self._obj_quat, self._obj_vel, self._obj_shape,
                            self._obj_params, self._obj_mass, self._obj_flags,
                            self._obj_bound, self._held_idx, self._held_rel_p,
                            self._held_rel_q, tau, self.config.substeps,
                            nf, et, eb, ng, bc, b3)
        self.step_index += 1
        if rc != 0:
            self._done = True
            self._done_reason = DONE_BLOWUP
            obs = Observation(segment_positions=np.zeros((self.config.obs_segments, 3)),
                              segment_velocities=np.zeros((self.config.obs_segments, 3)),
                              eef_pose=self.eef_pose(),
                              target_pose=self._target.copy(),
                              object_poses={}, gripper_open=self._gripper_open,
                              step_index=self.step_index)
            return StepResult(obs, 0.0, True, DONE_BLOWUP, None)
        self.substep_count += self.config.substeps
        self._apply_gripper(action.gripper_close)

        diff = self.pose_diff()
        r = reward_d(diff.d, self.config.rd_params)
        if self._d_prev is not None:
            r += reward_s(diff.d, self._d_prev, self.config.rs_params)
        self._d_prev = diff.d

        reached = success(diff)
        if reached and self.config.terminate_on_success:
            self._done = True
            self._done_reason = DONE_SUCCESS
        elif self.step_index >= self.config.horizon:
            self._done = True
            self._done_reason = DONE_HORIZON
        return StepResult(self.observe(), float(r), self._done,
                          self._done_reason, diff)
