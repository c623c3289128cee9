"""Rigid end-effector, elastic tip coupling, penalty contact and grasping.

The end-effector is a small rigid body tied to the rod tip by a zero-rest-
length translational/rotational spring.  Grasping is kinematic: a close
command within tolerance of an annotated grasp pose attaches the object, an
open command hands it back to contact dynamics.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import NumericBlowup
from .se3 import (SUCCESS_POS_TOL, SUCCESS_ROT_TOL, Pose, pose_log)

DEFAULT_EEF_MASS = 1.5e-4
DEFAULT_EEF_INERTIA = 1.0e-4
DEFAULT_EEF_RADIUS = 0.05

CONTACT_STIFFNESS = 1.0e4
FRICTION_MU = 0.5
FRICTION_V_EPS = 1.0e-3

GRASP_POS_TOL = SUCCESS_POS_TOL
GRASP_ROT_TOL = SUCCESS_ROT_TOL

_SHAPE_CODES = {"box": 0, "sphere": 1, "cylinder": 2}


@dataclass
class CouplingParams:
    """Zero-rest-length spring between rod tip and end-effector.

    c_f / c_m default to the critical values 2*sqrt(k*m) for the default
    end-effector; pass explicit values to override.
    """

    k_f: float = 0.1
    k_m: float = 10.0
    c_f: float = None
    c_m: float = None

    def __post_init__(self):
        if self.k_f <= 0.0 or self.k_m <= 0.0:
            raise ValueError("stiffnesses must be positive")
        if self.c_f is None:
            self.c_f = 2.0 * np.sqrt(self.k_f * DEFAULT_EEF_MASS)
        if self.c_m is None:
            self.c_m = 2.0 * np.sqrt(self.k_m * DEFAULT_EEF_INERTIA)
        if self.c_f < 0.0 or self.c_m < 0.0:
            raise ValueError("damping must be non-negative")


@dataclass
class Shape:
    """Collision primitive: box(half extents), sphere(radius) or
    cylinder(radius, half height; axis = local z)."""

    kind: str
    dims: np.ndarray

    def __post_init__(self):
        if self.kind not in _SHAPE_CODES:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        self.dims = np.asarray(self.dims, dtype=np.float64).reshape(-1)
        need = {"box": 3, "sphere": 1, "cylinder": 2}[self.kind]
        if self.dims.shape[0] != need or np.any(self.dims <= 0.0):
            raise ValueError(f"{self.kind} needs {need} positive dimensions")

    @classmethod
    def box(cls, hx, hy, hz):
        return cls("box", np.array([hx, hy, hz]))

    @classmethod
    def sphere(cls, r):
        return cls("sphere", np.array([r]))

    @classmethod
    def cylinder(cls, r, half_height):
        return cls("cylinder", np.array([r, half_height]))

    @property
    def code(self):
        return _SHAPE_CODES[self.kind]

    @property
    def params3(self):
        p = np.zeros(3)
        p[:self.dims.shape[0]] = self.dims
        return p

    @property
    def bounding_radius(self):
        if self.kind == "box":
            return float(np.linalg.norm(self.dims))
        if self.kind == "sphere":
            return float(self.dims[0])
        return float(np.hypot(self.dims[0], self.dims[1]))

    @property
    def top_offset(self):
        """Height of the highest point above the centre, axis-aligned pose."""
        if self.kind == "box":
            return float(self.dims[2])
        if self.kind == "sphere":
            return float(self.dims[0])
        return float(self.dims[1])


@dataclass
class SceneObject:
    id: str
    shape: Shape
    pose: Pose
    mass: float = 0.2
    grasp_poses: list = field(default_factory=list)  # object-local Pose list
    is_obstacle: bool = False

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if not self.is_obstacle and not self.grasp_poses:
            raise ValueError(f"manipulable object {self.id!r} needs a grasp pose")

    def world_grasp_poses(self):
        return [self.pose.compose(g) for g in self.grasp_poses]


@dataclass
class EndEffector:
    """6-DoF rigid body; angular_velocity is expressed in the body frame."""

    pose: Pose = field(default_factory=Pose.identity)
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mass: float = DEFAULT_EEF_MASS
    inertia: np.ndarray = field(
        default_factory=lambda: np.eye(3) * DEFAULT_EEF_INERTIA)
    radius: float = DEFAULT_EEF_RADIUS
    gripper_open: bool = True
    held_object: str = None

    def __post_init__(self):
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=np.float64)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=np.float64)
        self.inertia = np.asarray(self.inertia, dtype=np.float64)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0.0):
            raise ValueError("inertia must be positive definite")
        if self.held_object is not None and self.gripper_open:
            raise ValueError("cannot hold an object with the gripper open")

    def copy(self):
        return EndEffector(self.pose.copy(), self.linear_velocity.copy(),
                           self.angular_velocity.copy(), self.mass,
                           self.inertia.copy(), self.radius,
                           self.gripper_open, self.held_object)


def coupling_wrench(rod_tip: Pose, rod_tip_velocity, eef: EndEffector,
                    p: CouplingParams):
    """Restoring wrench (force, torque) on the end-effector; the rod tip
    reaction is the exact negative.

    rod_tip_velocity: (linear, angular) world-frame twist of the tip.
    """
    tip_v, tip_w = rod_tip_velocity
    eq = eef.pose.rotation
    ew_world = np.array(K._qrot(eq[0], eq[1], eq[2], eq[3],
                                eef.angular_velocity[0],
                                eef.angular_velocity[1],
                                eef.angular_velocity[2]))
    fx, fy, fz, mx, my, mz = K.coupling_wrench(
        rod_tip.translation, rod_tip.rotation,
        np.asarray(tip_v, dtype=np.float64),
        np.asarray(tip_w, dtype=np.float64),
        eef.pose.translation, eq, eef.linear_velocity, ew_world,
        p.k_f, p.k_m, p.c_f, p.c_m)
    return np.array([fx, fy, fz]), np.array([mx, my, mz])


def contact_forces(objects, eef: EndEffector, table_height: float = 0.0,
                   k_c: float = CONTACT_STIFFNESS, mu: float = FRICTION_MU,
                   v_eps: float = FRICTION_V_EPS, dt: float = 2.0e-4):
    """Penalty contact wrenches against the table plane and between the
    end-effector sphere and every object.

    Returns (eef_wrench, {object_id: wrench}) with wrench = (force, torque);
    action/reaction pairs are exactly opposite, normals never attract.
    """
    eef_f = np.zeros(3)
    obj_f = {o.id: np.zeros(3) for o in objects}

    ep = eef.pose.translation
    pen = eef.radius - (ep[2] - table_height)
    if pen > 0.0:
        g = K._penalty_force(pen, 0.0, 0.0, 1.0,
                             eef.linear_velocity[0], eef.linear_velocity[1],
                             eef.linear_velocity[2], k_c, mu, v_eps,
                             eef.mass, dt)
        eef_f += np.array(g)

    for o in objects:
        if o.id == eef.held_object:
            continue
        pen, nx, ny, nz = K._sphere_object_gap(
            ep[0], ep[1], ep[2], eef.radius, o.shape.code, o.shape.params3,
            o.pose.translation, o.pose.rotation)
        if pen > 0.0:
            meff = eef.mass if o.is_obstacle else eef.mass * o.mass / (eef.mass + o.mass)
            g = np.array(K._penalty_force(pen, nx, ny, nz,
                                          eef.linear_velocity[0],
                                          eef.linear_velocity[1],
                                          eef.linear_velocity[2],
                                          k_c, mu, v_eps, meff, dt))
            eef_f += g
            obj_f[o.id] -= g
        tpen = K._object_table_pen(o.shape.code, o.shape.params3,
                                   o.pose.translation, o.pose.rotation) + table_height
        if tpen > 0.0:
            g = np.array(K._penalty_force(tpen, 0.0, 0.0, 1.0,
                                          0.0, 0.0, 0.0, k_c, mu, v_eps,
                                          o.mass, dt))
            obj_f[o.id] += g

    zero = np.zeros(3)
    return ((eef_f, zero.copy()),
            {oid: (f, zero.copy()) for oid, f in obj_f.items()})


def grasp_update(eef: EndEffector, objects, commanded_close: bool) -> EndEffector:
    """Apply a gripper command.

    Closing attaches the nearest manipulable object whose closest annotated
    grasp pose is within the reach tolerances; closing with nothing in range
    just closes empty, and a commanded-closed empty gripper keeps trying on
    later commands.  Opening releases any held object.
    """
    if commanded_close:
        if eef.held_object is None:
            best = None
            for o in objects:
                if o.is_obstacle:
                    continue
                for gp in o.world_grasp_poses():
                    diff = pose_log(eef.pose, gp)
                    dp = float(np.linalg.norm(diff.d_p))
                    dr = float(np.linalg.norm(diff.d_r))
                    if dp < GRASP_POS_TOL and dr < GRASP_ROT_TOL:
                        if best is None or dp < best[0]:
                            best = (dp, o.id)
            eef.held_object = best[1] if best is not None else None
        eef.gripper_open = False
    else:
        eef.gripper_open = True
        eef.held_object = None
    return eef


def eef_step(eef: EndEffector, total_wrench, dt: float,
             gravity=(0.0, 0.0, -9.81)) -> EndEffector:
    """Semi-implicit Euler update of the rigid body under a world wrench."""
    force, torque = total_wrench
    force = np.asarray(force, dtype=np.float64)
    torque = np.asarray(torque, dtype=np.float64)
    eef.linear_velocity = eef.linear_velocity + dt * (
        force / eef.mass + np.asarray(gravity, dtype=np.float64))
    q = eef.pose.rotation
    mb = np.array(K._qrot_inv(q[0], q[1], q[2], q[3],
                              torque[0], torque[1], torque[2]))
    idiag = np.diag(eef.inertia)
    w = eef.angular_velocity
    gyro = np.cross(w, idiag * w)
    eef.angular_velocity = w + dt * (mb - gyro) / idiag
    p = eef.pose.translation + dt * eef.linear_velocity
    dq = np.array(K._qexp(*(eef.angular_velocity * dt)))
    nq = np.array(K._qmul(q[0], q[1], q[2], q[3], dq[0], dq[1], dq[2], dq[3]))
    nq /= np.linalg.norm(nq)
    eef.pose = Pose(nq, p)
    if (not np.all(np.isfinite(p))
            or np.any(np.abs(eef.linear_velocity) > K.BLOWUP_SPEED)):
        raise NumericBlowup("end-effector state left the finite regime")
    return eef
