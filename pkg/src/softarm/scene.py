"""Tabletop scene model and procedural generation.

The arm is mounted behind a finite table and reaches over it.  Scenes hold
primitive objects resting on the table surface (z = 0), a deposit region for
collecting tasks, and an optional goal pose for alignment tasks.  Obstacles
are static; manipulable objects carry procedurally annotated grasp poses.
"""

from dataclasses import dataclass, field

import numpy as np

from .body import Shape, SceneObject
from .errors import PlacementFailed, SceneInvalid
from .se3 import Pose

TASK_COLLECT = "coll"
TASK_ALIGN = "aln"

# geometry of the fixed stage
MOUNT_POSITION = np.array([0.0, -0.25, 0.0])
ROD_LENGTH = 1.0
TABLE_RECT = (-0.55, 0.55, 0.0, 0.85)          # x0, x1, y0, y1 at z = 0
# grasp-point band chosen so the end-effector, pulled back from the object
# along a from-above approach axis, sits at chord distances the arm holds
# with moderate bend; the deposit region and obstacles may use a wider area
WORKSPACE_RECT = (-0.12, 0.12, 0.60, 0.66)
PLACE_RECT = (-0.22, 0.22, 0.56, 0.67)
OBSTACLE_RECT = (-0.30, 0.30, 0.42, 0.72)
REACH_FACTOR = 1.05

CONTAINER_HALF_EXTENTS = np.array([0.06, 0.06, 0.04])

PLACEMENT_MARGIN = 0.05        # gap between bounding circles on the table
MAX_PLACEMENT_ATTEMPTS = 1000

GRASP_TILT = np.deg2rad(45.0)  # fallback approach pitch below vertical
GRASP_STANDOFF = 0.03
EEF_RADIUS = 0.05


def arc_bend_angle(chord: float, rod_length: float = ROD_LENGTH) -> float:
    """Total bend of the constant-curvature arc of the given length whose
    endpoints are `chord` apart: solves chord = (2/k) sin(k L / 2)."""
    c = min(max(float(chord), 1e-9), rod_length)
    if c >= rod_length * (1.0 - 1e-12):
        return 0.0
    lo, hi = 1e-9, 2.0 * np.pi / rod_length
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if (2.0 / mid) * np.sin(mid * rod_length / 2.0) > c:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) * rod_length


# settled (tip chord distance, tip pitch) pairs of the default arm under a
# uniformly held bending torque with gravity on; measured once from the
# simulator.  The natural approach tilt for a grasp at a given distance.
_NATURAL_CHORD = np.array([0.790, 0.854, 0.911, 0.958, 0.989, 1.0])
_NATURAL_PITCH = np.array([2.218, 1.822, 1.402, 0.951, 0.480, 0.0])


def natural_pitch(chord: float) -> float:
    """Tip pitch (rad from vertical) the arm naturally shows when its tip
    sits `chord` metres from the mount; interpolated from settled poses."""
    return float(np.interp(float(chord), _NATURAL_CHORD, _NATURAL_PITCH))


def natural_arc_pose(pitch: float, azimuth: float,
                     rod_length: float = ROD_LENGTH) -> Pose:
    """Tip pose of the uniformly bent arm at the given bend pitch, with the
    bend plane rotated `azimuth` around vertical (0 faces the table)."""
    phi = float(np.clip(pitch, 0.0, 2.4))
    dirh = np.array([np.sin(azimuth), np.cos(azimuth), 0.0])
    if phi < 1e-6:
        return Pose(translation=MOUNT_POSITION + np.array([0.0, 0.0, rod_length]))
    kappa = phi / rod_length
    h = (1.0 - np.cos(phi)) / kappa
    v = np.sin(phi) / kappa
    pos = MOUNT_POSITION + h * dirh + np.array([0.0, 0.0, v])
    axis = np.array([-np.cos(azimuth), np.sin(azimuth), 0.0])
    return Pose(Pose.from_axis_angle(axis, phi).rotation, pos)


def rotation_to_quat(m):
    """Unit quaternion (w, x, y, z) of a rotation matrix; at trace minimum the
    axis follows the largest diagonal entry, which keeps the result
    deterministic for half-turn rotations."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + m[i, i] - m[j, j] - m[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return q / np.linalg.norm(q)


def frame_from_axis(d3):
    """Frame with local z along d3 and the roll an upright-based arm carries
    after bending its tangent onto d3 in one plane: the frame is exactly that
    single bend rotation, so poses built this way never demand a twist on top
    of the bend."""
    d3 = np.asarray(d3, dtype=np.float64)
    d3 = d3 / np.linalg.norm(d3)
    pitch = float(np.arccos(np.clip(d3[2], -1.0, 1.0)))
    h = np.hypot(d3[0], d3[1])
    azimuth = float(np.arctan2(d3[0], d3[1])) if h > 1.0e-8 else 0.0
    axis = np.array([-np.cos(azimuth), np.sin(azimuth), 0.0])
    return Pose.from_axis_angle(axis, pitch).rotation


def grasp_tilt_for(shape: Shape, center) -> float:
    """Approach tilt for an object at `center`: the arm's natural tip pitch
    at the end-effector's standoff position, solved by fixed point; clamped
    to from-above approaches."""
    center = np.asarray(center, dtype=np.float64)
    standoff = shape.bounding_radius + EEF_RADIUS + GRASP_STANDOFF
    rel = center - MOUNT_POSITION
    u = rel[:2] / max(np.linalg.norm(rel[:2]), 1e-9)
    tilt = natural_pitch(float(np.linalg.norm(rel)))
    for _ in range(4):
        axis = np.array([np.sin(tilt) * u[0], np.sin(tilt) * u[1],
                         np.cos(tilt)])
        eef_pos = center - standoff * axis
        tilt = natural_pitch(float(np.linalg.norm(eef_pos - MOUNT_POSITION)))
    return float(np.clip(tilt, 1.7, 2.3))


def annotate_grasp_poses(shape: Shape, n_candidates: int = 8, tilt: float = None):
    """Object-local grasp candidates fanned around the object in yaw.

    The approach axis pitches `tilt` away from vertical; callers pass the
    natural arm tangent for the object's distance.  Candidates aim at the
    object centre from just beyond the combined bounding radii, so the
    end-effector sphere clears the object at the annotated pose regardless
    of primitive and tilt."""
    if tilt is None:
        tilt = 1.8
    pitch = float(np.clip(tilt, 0.5, 2.3))  # approach-axis angle from +z
    standoff = shape.bounding_radius + EEF_RADIUS + GRASP_STANDOFF
    poses = []
    for k in range(n_candidates):
        yaw = 2.0 * np.pi * k / n_candidates
        axis = np.array([np.sin(pitch) * np.cos(yaw),
                         np.sin(pitch) * np.sin(yaw),
                         np.cos(pitch)])
        q = frame_from_axis(axis)
        poses.append(Pose(q, -standoff * axis))
    return poses


@dataclass
class Scene:
    objects: list
    container_pose: Pose
    task: str
    target_object_id: str
    aln_goal_pose: Pose = None
    randomized: bool = False
    rng_seed: int = 0
    instruction: str = ""
    container_half_extents: np.ndarray = field(
        default_factory=lambda: CONTAINER_HALF_EXTENTS.copy())

    def __post_init__(self):
        if self.task not in (TASK_COLLECT, TASK_ALIGN):
            raise SceneInvalid(f"unknown task {self.task!r}")
        target = self.find(self.target_object_id)
        if target is None:
            raise SceneInvalid("target object missing from scene")
        if target.is_obstacle:
            raise SceneInvalid("target object must be manipulable")
        if self.task == TASK_ALIGN and self.aln_goal_pose is None:
            raise SceneInvalid("alignment scene needs a goal pose")

    def find(self, object_id):
        for o in self.objects:
            if o.id == object_id:
                return o
        return None

    @property
    def target(self):
        return self.find(self.target_object_id)

    def validate(self):
        """Raise SceneInvalid on overlap or out-of-workspace placement.

        Objects rest upright on the table, so overlap is judged on their
        bounding circles in the table plane.
        """
        wx0, wx1, wy0, wy1 = TABLE_RECT
        items = [(o.id, o.pose.translation, o.shape.bounding_radius)
                 for o in self.objects]
        for oid, p, r in items:
            if not (wx0 <= p[0] <= wx1 and wy0 <= p[1] <= wy1):
                raise SceneInvalid(f"object {oid!r} outside the table")
            if p[2] < -1.0e-9:
                raise SceneInvalid(f"object {oid!r} below the table")
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                pi, ri = items[i][1], items[i][2]
                pj, rj = items[j][1], items[j][2]
                if np.hypot(pi[0] - pj[0], pi[1] - pj[1]) < ri + rj:
                    raise SceneInvalid(
                        f"objects {items[i][0]!r} and {items[j][0]!r} overlap")


def _target_library(rng):
    """Small manipulable-primitive library; one entry sampled per scene."""
    kind = ("box", "sphere", "cylinder")[int(rng.integers(0, 3))]
    if kind == "box":
        s = float(rng.uniform(0.022, 0.032))
        return Shape.box(s, s, s)
    if kind == "sphere":
        return Shape.sphere(float(rng.uniform(0.026, 0.036)))
    return Shape.cylinder(float(rng.uniform(0.024, 0.032)),
                          float(rng.uniform(0.030, 0.042)))


def _obstacle_library(rng):
    kind = ("box", "sphere", "cylinder")[int(rng.integers(0, 3))]
    if kind == "box":
        return Shape.box(float(rng.uniform(0.025, 0.05)),
                         float(rng.uniform(0.025, 0.05)),
                         float(rng.uniform(0.03, 0.08)))
    if kind == "sphere":
        return Shape.sphere(float(rng.uniform(0.025, 0.05)))
    return Shape.cylinder(float(rng.uniform(0.025, 0.04)),
                          float(rng.uniform(0.04, 0.08)))


def _rest_height(shape: Shape):
    if shape.kind == "sphere":
        return shape.dims[0]
    if shape.kind == "box":
        return shape.dims[2]
    return shape.dims[1]


def _sample_position(rng, shape_or_radius, placed, workspace,
                     margin=PLACEMENT_MARGIN):
    """Rejection-sample an object centre (x, y) inside `workspace` whose
    bounding circle stays on the table and clears every placed circle by
    `margin`.  placed: list of (x, y, radius)."""
    if isinstance(shape_or_radius, Shape):
        r = shape_or_radius.bounding_radius
    else:
        r = float(shape_or_radius)
    x0, x1, y0, y1 = workspace
    tx0, tx1, ty0, ty1 = TABLE_RECT
    if x0 > x1 or y0 > y1:
        raise PlacementFailed("empty workspace")
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        x = float(rng.uniform(x0, x1))
        y = float(rng.uniform(y0, y1))
        if not (tx0 + r <= x <= tx1 - r and ty0 + r <= y <= ty1 - r):
            continue
        ok = all(np.hypot(x - px, y - py) >= r + pr + margin
                 for px, py, pr in placed)
        if ok:
            return x, y, r
    raise PlacementFailed(
        f"no collision-free placement after {MAX_PLACEMENT_ATTEMPTS} attempts")


def generate_scene(task: str, difficulty: str, seed: int,
                   workspace=None) -> Scene:
    """Procedural scene: a manipulable target (plus a deposit region or goal
    pose) and, in the randomized setting, 2-5 static obstacle primitives.
    Deterministic per seed."""
    if task not in (TASK_COLLECT, TASK_ALIGN):
        raise ValueError(f"unknown task {task!r}")
    if difficulty not in ("clean", "randomized"):
        raise ValueError(f"unknown difficulty {difficulty!r}")
    if workspace is None:
        workspace = WORKSPACE_RECT
        place_region = PLACE_RECT
        obstacle_region = OBSTACLE_RECT
    else:
        place_region = workspace
        obstacle_region = workspace
    rng = np.random.default_rng(seed)
    placed = []
    objects = []

    shape = _target_library(rng)
    x, y, r = _sample_position(rng, shape, placed, workspace)
    placed.append((x, y, r))
    center = np.array([x, y, _rest_height(shape)])
    tilt = grasp_tilt_for(shape, center)
    target = SceneObject(
        id="target", shape=shape, pose=Pose(translation=center),
        mass=0.2, grasp_poses=annotate_grasp_poses(shape, tilt=tilt))
    objects.append(target)

    aln_goal = None
    if task == TASK_COLLECT:
        container_r = float(np.hypot(*CONTAINER_HALF_EXTENTS[:2]))
        cx, cy, _ = _sample_position(rng, container_r, placed, place_region)
        placed.append((cx, cy, container_r))
        container_pose = Pose(
            translation=np.array([cx, cy, CONTAINER_HALF_EXTENTS[2]]))
    else:
        # alignment scenes have no deposit region; park the marker off to a
        # fixed table corner
        container_pose = Pose(
            translation=np.array([-0.45, 0.15, CONTAINER_HALF_EXTENTS[2]]))
        gx, gy, gr = _sample_position(rng, shape, placed, place_region)
        placed.append((gx, gy, gr))
        yaw = float(rng.uniform(-0.5, 0.5))
        aln_goal = Pose(np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)]),
                        np.array([gx, gy, _rest_height(shape)]))

    if difficulty == "randomized":
        n_obstacles = int(rng.integers(2, 6))
        for k in range(n_obstacles):
            oshape = _obstacle_library(rng)
            ox, oy, orr = _sample_position(rng, oshape, placed, obstacle_region,
                                           margin=0.035)
            placed.append((ox, oy, orr))
            objects.append(SceneObject(
                id=f"obstacle{k}", shape=oshape,
                pose=Pose(translation=np.array([ox, oy, _rest_height(oshape)])),
                mass=0.5, is_obstacle=True))

    verb = "collect" if task == TASK_COLLECT else "align"
    scene = Scene(objects=objects, container_pose=container_pose, task=task,
                  target_object_id="target", aln_goal_pose=aln_goal,
                  randomized=(difficulty == "randomized"), rng_seed=int(seed),
                  instruction=f"{verb} the {shape.kind} target")
    scene.validate()
    return scene


def in_reach(point, factor=REACH_FACTOR, rod_length=1.0):
    return float(np.linalg.norm(np.asarray(point) - MOUNT_POSITION)) <= factor * rod_length


def inside_container(scene: Scene, point) -> bool:
    """Deposit check: point inside the container's axis-aligned volume,
    extended a little upward so a just-released object counts."""
    h = scene.container_half_extents
    c = scene.container_pose.translation
    p = np.asarray(point, dtype=np.float64)
    return (abs(p[0] - c[0]) <= h[0] and abs(p[1] - c[1]) <= h[1]
            and -1.0e-6 <= p[2] <= c[2] + h[2] + 0.1)
