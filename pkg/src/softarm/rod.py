"""Discrete elastic rod: state, material derivation, strains, loads, stepping.

The rod is a chain of N straight elements between N+1 nodes.  Nodes carry
position/velocity, elements carry an orientation quaternion (body frame,
e3 = nominal tangent) and a body-frame angular velocity.  The first node and
element can be clamped to a mount pose.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import NumericBlowup
from .se3 import Pose

# Timoshenko-style shear correction for a circular section
SHEAR_CORRECTION = 4.0 / 3.0

MIN_SEGMENT_LENGTH = 1.0e-12


@dataclass
class RodConfig:
    n_elements: int = 40
    rest_length: float = 1.0
    radius: float = 0.05
    density: float = 1000.0
    youngs_modulus: float = 1.0e7
    poisson_ratio: float = 0.5
    dt: float = 2.0e-4
    damping: float = 0.1
    # element spin modes are much faster than the swing of the arm; damping
    # them separately mimics rate-dependent material dissipation.  None
    # follows `damping`.
    angular_damping: float = None
    # pairwise dashpot between adjacent nodes (N*s/m): damps internal
    # deformation waves, transparent to rigid translation
    internal_damping: float = 0.0
    clamp_base: bool = True

    def __post_init__(self):
        if self.n_elements < 2:
            raise ValueError("n_elements must be at least 2")
        for name in ("rest_length", "radius", "density", "youngs_modulus", "dt"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.poisson_ratio <= 0.5:
            raise ValueError("poisson_ratio must lie in [0, 0.5]")
        if self.angular_damping is None:
            self.angular_damping = self.damping
        if (self.damping < 0.0 or self.angular_damping < 0.0
                or self.internal_damping < 0.0):
            raise ValueError("damping must be non-negative")


@dataclass
class MaterialMatrices:
    shear_stiffness: np.ndarray     # diag(a_c G A, a_c G A, E A)
    bending_stiffness: np.ndarray   # diag(E I1, E I2, G I3)
    area: float
    second_moment: np.ndarray       # diag(I1, I2, I3)
    mass_per_element: float


def derive_material(config: RodConfig) -> MaterialMatrices:
    """Section and stiffness properties from the rod geometry and material."""
    if config.youngs_modulus <= 0.0 or config.radius <= 0.0:
        raise ValueError("youngs_modulus and radius must be positive")
    r = config.radius
    area = np.pi * r * r
    i1 = np.pi * r ** 4 / 4.0
    second_moment = np.diag([i1, i1, 2.0 * i1])
    g = config.youngs_modulus / (2.0 * (1.0 + config.poisson_ratio))
    shear = np.diag([SHEAR_CORRECTION * g * area,
                     SHEAR_CORRECTION * g * area,
                     config.youngs_modulus * area])
    bending = np.diag([config.youngs_modulus * i1,
                       config.youngs_modulus * i1,
                       g * 2.0 * i1])
    mass = config.density * area * config.rest_length / config.n_elements
    return MaterialMatrices(shear_stiffness=shear, bending_stiffness=bending,
                            area=area, second_moment=second_moment,
                            mass_per_element=mass)


class RodState:
    """Mutable discrete rod state.

    prev_stretch holds the per-element stretch at the previous force
    evaluation; the stretch-rate term of the angular balance is its backward
    difference over rate_dt (zero right after construction).
    """

    def __init__(self, node_positions, node_velocities, element_rotations,
                 element_angular_velocities, element_rest_lengths,
                 prev_stretch=None, rate_dt=None):
        self.node_positions = np.ascontiguousarray(node_positions, dtype=np.float64)
        self.node_velocities = np.ascontiguousarray(node_velocities, dtype=np.float64)
        self.element_rotations = np.ascontiguousarray(element_rotations, dtype=np.float64)
        self.element_angular_velocities = np.ascontiguousarray(
            element_angular_velocities, dtype=np.float64)
        self.element_rest_lengths = np.ascontiguousarray(
            element_rest_lengths, dtype=np.float64)
        n = self.element_rotations.shape[0]
        if self.node_positions.shape != (n + 1, 3):
            raise ValueError("node_positions must be (n_elements+1, 3)")
        nrm = np.linalg.norm(self.element_rotations, axis=1)
        if np.any(np.abs(nrm - 1.0) > 1.0e-9):
            raise ValueError("element rotations must be unit quaternions")
        if prev_stretch is None:
            prev_stretch = self.segment_lengths() / self.element_rest_lengths
        self.prev_stretch = np.ascontiguousarray(prev_stretch, dtype=np.float64)
        self.rate_dt = rate_dt

    @property
    def n_elements(self):
        return self.element_rotations.shape[0]

    def segment_lengths(self):
        return np.linalg.norm(np.diff(self.node_positions, axis=0), axis=1)

    def tip_pose(self) -> Pose:
        return Pose(self.element_rotations[-1].copy(),
                    self.node_positions[-1].copy())

    def copy(self) -> "RodState":
        return RodState(self.node_positions.copy(), self.node_velocities.copy(),
                        self.element_rotations.copy(),
                        self.element_angular_velocities.copy(),
                        self.element_rest_lengths.copy(),
                        self.prev_stretch.copy(), self.rate_dt)


@dataclass
class StrainState:
    stretch: np.ndarray    # (n,)   current / rest segment length
    shear: np.ndarray      # (n, 3) tangent misalignment, element frames
    curvature: np.ndarray  # (n-1, 3) rotation rate between elements, 1/m


def straight_state(config: RodConfig, mount: Pose = None) -> RodState:
    """Undeformed rod extending along the mount frame's local z axis."""
    if mount is None:
        mount = Pose.identity()
    n = config.n_elements
    ds = config.rest_length / n
    axis = mount.rotate(np.array([0.0, 0.0, 1.0]))
    pos = mount.translation[None, :] + np.arange(n + 1)[:, None] * ds * axis[None, :]
    rot = np.tile(mount.rotation, (n, 1))
    return RodState(pos, np.zeros((n + 1, 3)), rot, np.zeros((n, 3)),
                    np.full(n, ds))


def compute_strains(state: RodState, config: RodConfig) -> StrainState:
    """Stretch, shear and curvature measures of the current configuration."""
    n = state.n_elements
    seg = np.diff(state.node_positions, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    if np.any(~np.isfinite(lengths)) or np.any(lengths < MIN_SEGMENT_LENGTH):
        raise ValueError("segment length underflow")
    stretch = lengths / state.element_rest_lengths
    tangents = seg / lengths[:, None]
    shear = np.empty((n, 3))
    q = state.element_rotations
    for i in range(n):
        tl = K._qrot_inv(q[i, 0], q[i, 1], q[i, 2], q[i, 3],
                         tangents[i, 0], tangents[i, 1], tangents[i, 2])
        shear[i, 0] = tl[0]
        shear[i, 1] = tl[1]
        shear[i, 2] = tl[2] - 1.0
    vor = 0.5 * (state.element_rest_lengths[:-1] + state.element_rest_lengths[1:])
    curvature = np.empty((n - 1, 3))
    for j in range(n - 1):
        rw, rx, ry, rz = K._qmul(q[j, 0], -q[j, 1], -q[j, 2], -q[j, 3],
                                 q[j + 1, 0], q[j + 1, 1], q[j + 1, 2], q[j + 1, 3])
        lx, ly, lz = K._qlog(rw, rx, ry, rz)
        curvature[j] = np.array([lx, ly, lz]) / vor[j]
    return StrainState(stretch=stretch, shear=shear, curvature=curvature)


def _stiffness_diags(mat: MaterialMatrices):
    return (np.ascontiguousarray(np.diag(mat.shear_stiffness)),
            np.ascontiguousarray(np.diag(mat.bending_stiffness)))


def _rot_inertia_diag(config: RodConfig, mat: MaterialMatrices):
    ds = config.rest_length / config.n_elements
    return config.density * np.diag(mat.second_moment) * ds


def node_masses(config: RodConfig, mat: MaterialMatrices):
    n = config.n_elements
    m = np.full(n + 1, mat.mass_per_element)
    m[0] *= 0.5
    m[-1] *= 0.5
    return m


def internal_loads(strains: StrainState, state: RodState, mat: MaterialMatrices):
    """Elastic and gyroscopic loads: (node forces (n+1)x3 global,
    element torques nx3 in element frames).  External loads excluded."""
    n = state.n_elements
    if strains.stretch.shape[0] != n:
        raise ValueError("strain/state element counts differ")
    s3, b3 = _stiffness_diags(mat)
    # rho * I * rest_length with rho = mass / (A * rest_length)
    j3 = mat.mass_per_element * np.diag(mat.second_moment) / mat.area
    vor = 0.5 * (state.element_rest_lengths[:-1] + state.element_rest_lengths[1:])
    node_f = np.zeros((n + 1, 3))
    elem_t = np.zeros((n, 3))
    e_buf = np.empty(n)
    nglob = np.empty((n, 3))
    bendc = np.empty((max(n - 1, 1), 3))
    bend3 = np.empty((max(n - 1, 1), 3))
    rate_dt = state.rate_dt if state.rate_dt else 1.0
    ok = K.rod_internal_loads(state.node_positions, state.element_rotations,
                              state.element_angular_velocities,
                              state.prev_stretch, rate_dt,
                              np.ascontiguousarray(s3), np.ascontiguousarray(b3),
                              np.ascontiguousarray(j3),
                              state.element_rest_lengths, vor,
                              node_f, elem_t, e_buf, nglob, bendc, bend3)
    if not ok:
        raise ValueError("segment length underflow")
    return node_f, elem_t


def _rod_params(config: RodConfig, mat: MaterialMatrices, gravity, mount: Pose):
    par = np.zeros(K.N_PARAMS)
    par[K.P_DT] = config.dt
    par[K.P_DAMP] = config.damping
    par[K.P_ADAMP] = config.angular_damping
    par[K.P_IDAMP] = config.internal_damping
    s3, b3 = _stiffness_diags(mat)
    par[K.P_S1:K.P_S1 + 3] = s3
    par[K.P_B1:K.P_B1 + 3] = b3
    par[K.P_J1:K.P_J1 + 3] = _rot_inertia_diag(config, mat)
    par[K.P_GX:K.P_GX + 3] = gravity
    par[K.P_BPX:K.P_BPX + 3] = mount.translation
    par[K.P_BQW:K.P_BQW + 4] = mount.rotation
    par[K.P_CLAMP] = 1.0 if config.clamp_base else 0.0
    par[K.P_RODR] = config.radius
    return par


def run(state: RodState, config: RodConfig, mat: MaterialMatrices,
        ext_force=None, ext_torque=None, n_steps: int = 1,
        gravity=(0.0, 0.0, 0.0), mount: Pose = None) -> RodState:
    """Advance the bare rod n_steps timesteps under constant external loads.

    ext_force: per-node force (n+1)x3, global frame.  ext_torque: per-element
    torque nx3, element frames.  Mutates and returns `state`.
    """
    n = config.n_elements
    if mount is None:
        mount = Pose(state.element_rotations[0].copy(),
                     state.node_positions[0].copy())
    if ext_force is None:
        ext_force = np.zeros((n + 1, 3))
    if ext_torque is None:
        ext_torque = np.zeros((n, 3))
    ext_force = np.ascontiguousarray(ext_force, dtype=np.float64)
    ext_torque = np.ascontiguousarray(ext_torque, dtype=np.float64)
    par = _rod_params(config, mat, gravity, mount)
    vor = 0.5 * (state.element_rest_lengths[:-1] + state.element_rest_lengths[1:])
    rc = K.rod_only_run(par, state.node_positions, state.node_velocities,
                        state.element_rotations,
                        state.element_angular_velocities,
                        state.prev_stretch, state.element_rest_lengths,
                        np.ascontiguousarray(vor),
                        node_masses(config, mat), ext_force, ext_torque,
                        int(n_steps))
    state.rate_dt = config.dt
    if rc == 1:
        raise NumericBlowup("rod velocity or position left the finite regime")
    if rc == 2:
        raise NumericBlowup("rod segment length collapsed")
    return state


def step(state: RodState, config: RodConfig, mat: MaterialMatrices,
         ext_force=None, ext_torque=None, gravity=(0.0, 0.0, 0.0),
         mount: Pose = None) -> RodState:
    """Single timestep; see run()."""
    return run(state, config, mat, ext_force, ext_torque, 1, gravity, mount)
