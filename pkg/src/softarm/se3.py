"""Rigid-body pose algebra, pose distance and tracking rewards.

A pose is a unit quaternion (w, x, y, z) plus a translation.  The scalar
distance between two poses is ||dp|| + alpha * ||dr|| where (dp, dr) is the
twist of the relative pose.  The distance is exactly symmetric in its
arguments: the twist is evaluated through a canonical argument order and
negated, so both directions share one floating-point path.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

DEFAULT_ALPHA = 0.2

# task-level tolerance: reaching counts as successful below these
SUCCESS_POS_TOL = 0.03
SUCCESS_ROT_TOL = 0.3


def _as_vec(v, n, name):
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape[0] != n:
        raise ValueError(f"{name} must have {n} components")
    return a.copy()


@dataclass
class Pose:
    """Rigid transform: unit quaternion (w, x, y, z) and translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = _as_vec(self.rotation, 4, "rotation")
        self.translation = _as_vec(self.translation, 3, "translation")
        nrm = float(np.linalg.norm(self.rotation))
        if abs(nrm - 1.0) > 1.0e-9:
            if nrm < 1.0e-12:
                raise ValueError("rotation quaternion has zero norm")
            self.rotation = self.rotation / nrm

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_axis_angle(cls, axis, angle, translation=(0.0, 0.0, 0.0)):
        axis = _as_vec(axis, 3, "axis")
        n = np.linalg.norm(axis)
        if n < 1.0e-12:
            q = np.array([1.0, 0.0, 0.0, 0.0])
        else:
            half = 0.5 * angle
            q = np.concatenate(([np.cos(half)], np.sin(half) * axis / n))
        return cls(q, np.asarray(translation, dtype=np.float64))

    def rotate(self, v):
        v = np.asarray(v, dtype=np.float64)
        q = self.rotation
        return np.array(K._qrot(q[0], q[1], q[2], q[3], v[0], v[1], v[2]))

    def transform(self, v):
        return self.rotate(v) + self.translation

    def compose(self, other: "Pose") -> "Pose":
        q = self.rotation
        o = other.rotation
        qw, qx, qy, qz = K._qmul(q[0], q[1], q[2], q[3], o[0], o[1], o[2], o[3])
        return Pose(np.array([qw, qx, qy, qz]), self.transform(other.translation))

    def inverse(self) -> "Pose":
        q = self.rotation
        conj = np.array([q[0], -q[1], -q[2], -q[3]])
        t = self.translation
        ti = -np.array(K._qrot(conj[0], conj[1], conj[2], conj[3], t[0], t[1], t[2]))
        return Pose(conj, ti)

    def copy(self) -> "Pose":
        return Pose(self.rotation.copy(), self.translation.copy())


@dataclass
class PoseDiff:
    """Decomposed pose error: translational and rotational twist components
    plus the weighted scalar distance d = ||d_p|| + alpha * ||d_r||."""

    d_p: np.ndarray
    d_r: np.ndarray
    d: float
    alpha: float = DEFAULT_ALPHA


@dataclass
class RdParams:
    """Distance-reward shaping: -d plus bonuses inside two shrinking shells.

    Thresholds scale as d1 = 0.1/lam, d2 = 0.05/lam.
    """

    k1: float = 0.5
    k2: float = 1.5
    lam: float = 1.0
    d1: float = None
    d2: float = None

    def __post_init__(self):
        if self.d1 is None:
            self.d1 = 0.1 / self.lam
        if self.d2 is None:
            self.d2 = 0.05 / self.lam
        if not self.d2 < self.d1:
            raise ValueError("d2 must be smaller than d1")


@dataclass
class RsParams:
    """Stability-reward shaping: +/-beta on the sign of the d trend, active
    only within radius big_d of the target."""

    beta: float = 1.0
    big_d: float = 0.3

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError("beta must be non-negative")


def pose_log(current: Pose, target: Pose, alpha: float = DEFAULT_ALPHA) -> PoseDiff:
    """Twist of the relative pose current^-1 . target and the weighted scalar
    distance.  alpha balances rotation against translation."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    dpx, dpy, dpz, drx, dry, drz = K.se3_log(
        current.translation, current.rotation,
        target.translation, target.rotation)
    d_p = np.array([dpx, dpy, dpz])
    d_r = np.array([drx, dry, drz])
    d = float(np.sqrt(dpx * dpx + dpy * dpy + dpz * dpz)
              + alpha * np.sqrt(drx * drx + dry * dry + drz * drz))
    return PoseDiff(d_p=d_p, d_r=d_r, d=d, alpha=alpha)


def pose_exp(d_p, d_r) -> Pose:
    """Inverse of pose_log: rebuild the relative pose from its twist."""
    d_p = np.asarray(d_p, dtype=np.float64)
    d_r = np.asarray(d_r, dtype=np.float64)
    th2 = float(d_r @ d_r)
    K1 = np.array([[0.0, -d_r[2], d_r[1]],
                   [d_r[2], 0.0, -d_r[0]],
                   [-d_r[1], d_r[0], 0.0]])
    if th2 < 1.0e-12:
        a = 0.5 - th2 / 24.0
        b = 1.0 / 6.0 - th2 / 120.0
    else:
        th = np.sqrt(th2)
        a = (1.0 - np.cos(th)) / th2
        b = (th - np.sin(th)) / (th2 * th)
    V = np.eye(3) + a * K1 + b * (K1 @ K1)
    th = np.sqrt(th2)
    if th < 1.0e-12:
        q = np.array([1.0, 0.5 * d_r[0], 0.5 * d_r[1], 0.5 * d_r[2]])
        q = q / np.linalg.norm(q)
    else:
        half = 0.5 * th
        q = np.concatenate(([np.cos(half)], np.sin(half) * d_r / th))
    return Pose(q, V @ d_p)


def reward_d(d: float, p: RdParams = None) -> float:
    """Shell-shaped tracking reward: -d plus k1 below d1 and k2 below d2."""
    if p is None:
        p = RdParams()
    if d < 0.0:
        raise ValueError("distance must be non-negative")
    r = -d
    if d < p.d1:
        r += p.k1
    if d < p.d2:
        r += p.k2
    return r


def reward_s(d: float, d_prev: float, p: RsParams = None) -> float:
    """Trend reward near the target: +beta when d shrinks, -beta when it
    grows, zero on no change or outside the activation radius."""
    if p is None:
        p = RsParams()
    if d < 0.0 or d_prev < 0.0:
        raise ValueError("distances must be non-negative")
    if d > p.big_d:
        return 0.0
    dd = d - d_prev
    if dd > 0.0:
        return -p.beta
    if dd < 0.0:
        return p.beta
    return 0.0


def stability_variance(d_series, window: int = 1000) -> float:
    """Population variance of the final `window` values of a distance series."""
    a = np.asarray(d_series, dtype=np.float64).reshape(-1)
    if window < 1:
        raise ValueError("window must be positive")
    if a.shape[0] < window:
        raise ValueError(f"series length {a.shape[0]} shorter than window {window}")
    tail = a[-window:]
    if np.all(tail == tail[0]):
        return 0.0
    return float(np.mean((tail - tail.mean()) ** 2))


def success(diff: PoseDiff) -> bool:
    """Reaching criterion: both error norms strictly inside their tolerances."""
    return (float(np.linalg.norm(diff.d_p)) < SUCCESS_POS_TOL
            and float(np.linalg.norm(diff.d_r)) < SUCCESS_ROT_TOL)
