"""Rule-based waypoint planning for the collect and align tasks.

A plan is an ordered list of 6-DoF end-effector waypoints with the gripper
state to command on arrival.  The transfer altitude is raised above any
obstacle near the straight-line path, and long hops are subdivided so that
consecutive waypoints stay close.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import Unreachable
from .scene import (MOUNT_POSITION, REACH_FACTOR, Scene, TASK_ALIGN,
                    TASK_COLLECT)
from .se3 import Pose

APPROACH_OFFSET = 0.1
LIFT_HEIGHT = 0.15
OBSTACLE_CLEARANCE = 0.1
PATH_WIDTH = 0.15          # lateral corridor checked for obstacles
MAX_WAYPOINT_SPACING = 0.4
DROP_HEIGHT = 0.02         # released object falls this far; low drops land true

PHASES = ("approach", "grasp", "lift", "transfer", "place", "release",
          "retract")


@dataclass
class Waypoint:
    pose: Pose
    gripper_close: bool
    phase: str
    # desired pose of the carried object at this waypoint, when one applies;
    # executors re-derive the end-effector pose from the actual grasp offset
    object_pose: Pose = None


@dataclass
class WaypointPlan:
    waypoints: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.waypoints)

    def __len__(self):
        return len(self.waypoints)


def _approach_axis(pose: Pose):
    return pose.rotate(np.array([0.0, 0.0, 1.0]))


def _select_grasp(scene: Scene):
    """World grasp pose whose approach direction best faces away from the
    mount, so the arm can arc over the object; deterministic tie-break by
    annotation order."""
    target = scene.target
    away = target.pose.translation[:2] - MOUNT_POSITION[:2]
    away = away / max(np.linalg.norm(away), 1e-9)
    best = None
    for idx, local in enumerate(target.grasp_poses):
        world = target.pose.compose(local)
        ax = _approach_axis(world)
        score = float(ax[:2] @ away)
        if best is None or score > best[0] + 1e-12:
            best = (score, idx, local, world)
    return best[2], best[3]


def _segment_obstacle_top(scene: Scene, a, b):
    """Highest clearance altitude demanded by obstacles near segment a->b
    (xy projection); returns -inf when the corridor is free."""
    top = -np.inf
    a2 = np.asarray(a[:2])
    b2 = np.asarray(b[:2])
    ab = b2 - a2
    denom = float(ab @ ab)
    for o in scene.objects:
        if not o.is_obstacle:
            continue
        c = o.pose.translation
        r = o.shape.bounding_radius
        if denom < 1e-12:
            t = 0.0
        else:
            t = float(np.clip((c[:2] - a2) @ ab / denom, 0.0, 1.0))
        closest = a2 + t * ab
        if np.linalg.norm(c[:2] - closest) <= r + PATH_WIDTH:
            top = max(top, c[2] + r)
    return top


def _subdivide(waypoints):
    """Insert intermediate waypoints so consecutive spacings stay bounded;
    inserted points inherit the gripper state already in force and the
    destination's phase label."""
    out = [waypoints[0]]
    for prev, nxt in zip(waypoints, waypoints[1:]):
        a = prev.pose.translation
        b = nxt.pose.translation
        dist = float(np.linalg.norm(b - a))
        n_extra = int(np.ceil(dist / MAX_WAYPOINT_SPACING)) - 1
        for k in range(1, n_extra + 1):
            t = k / (n_extra + 1)
            p = Pose(nxt.pose.rotation.copy(), a + t * (b - a))
            out.append(Waypoint(p, prev.gripper_close, nxt.phase))
        out.append(nxt)
    return out


def plan_waypoints(scene: Scene) -> WaypointPlan:
    """Approach, grasp, lift, transfer, place, release, retract for the
    selected grasp candidate.  Raises Unreachable if any waypoint leaves the
    arm's reachable sphere.

    Staging offsets are vertical: the arm naturally arcs over the table, so
    descending onto the grasp keeps the demanded tip pose near the statically
    comfortable manifold at every waypoint."""
    local_gp, grasp = _select_grasp(scene)
    target = scene.target

    approach = Pose(grasp.rotation.copy(),
                    grasp.translation + np.array([0.0, 0.0, APPROACH_OFFSET]))
    lift = Pose(grasp.rotation.copy(),
                grasp.translation + np.array([0.0, 0.0, LIFT_HEIGHT]))

    rest_z = float(target.pose.translation[2])
    if scene.task == TASK_COLLECT:
        c = scene.container_pose.translation
        desired_obj = Pose(target.pose.rotation.copy(),
                           np.array([c[0], c[1], rest_z + DROP_HEIGHT]))
    elif scene.task == TASK_ALIGN:
        g = scene.aln_goal_pose
        desired_obj = Pose(g.rotation.copy(),
                           np.array([g.translation[0], g.translation[1],
                                     rest_z + DROP_HEIGHT]))
    else:
        raise ValueError(f"unplannable task {scene.task!r}")
    place = desired_obj.compose(local_gp)

    z_safe = max(lift.translation[2], place.translation[2] + LIFT_HEIGHT)
    obst_top = _segment_obstacle_top(scene, lift.translation, place.translation)
    if np.isfinite(obst_top):
        z_safe = max(z_safe, obst_top + OBSTACLE_CLEARANCE)
    transfer = Pose(place.rotation.copy(),
                    np.array([place.translation[0], place.translation[1],
                              z_safe]))
    lift = Pose(lift.rotation.copy(),
                np.array([lift.translation[0], lift.translation[1],
                          max(lift.translation[2], z_safe)]))

    release = Pose(place.rotation.copy(), place.translation.copy())
    retract = Pose(place.rotation.copy(),
                   place.translation + np.array([0.0, 0.0, LIFT_HEIGHT]))

    rise = z_safe - place.translation[2]
    transfer_obj = Pose(desired_obj.rotation.copy(),
                        desired_obj.translation + np.array([0.0, 0.0, rise]))

    raw = [Waypoint(approach, False, "approach"),
           Waypoint(grasp, True, "grasp"),
           Waypoint(lift, True, "lift"),
           Waypoint(transfer, True, "transfer", transfer_obj),
           Waypoint(place, True, "place", desired_obj),
           Waypoint(release, False, "release", desired_obj),
           Waypoint(retract, False, "retract")]

    rod_len = 1.0
    for w in raw:
        dist = float(np.linalg.norm(w.pose.translation - MOUNT_POSITION))
        if dist > REACH_FACTOR * rod_len + 1e-12:
            raise Unreachable(
                f"waypoint {w.phase!r} at distance {dist:.3f} m from mount")

    return WaypointPlan(_subdivide(raw))
