"""Scene and trajectory serialization.

Scenes are single JSON documents; trajectories are JSON Lines (header record,
one record per control step, footer record).  Writing is canonical: fixed key
order and floats at 17 significant digits, so write -> read -> write is
byte-identical.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .body import SceneObject, Shape
from .errors import SceneInvalid
from .scene import Scene
from .se3 import Pose

SCENE_FORMAT_VERSION = 1
TRAJECTORY_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------

def _canon(value, out):
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            raise ValueError("non-finite float in serialized document")
        out.append(format(v, ".17g"))
    elif isinstance(value, str):
        out.append(json.dumps(value))
    elif isinstance(value, dict):
        out.append("{")
        for i, (k, v) in enumerate(value.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(k)))
            out.append(":")
            _canon(v, out)
        out.append("}")
    elif isinstance(value, (list, tuple, np.ndarray)):
        seq = value.tolist() if isinstance(value, np.ndarray) else value
        out.append("[")
        for i, v in enumerate(seq):
            if i:
                out.append(",")
            _canon(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_canonical(obj) -> str:
    out = []
    _canon(obj, out)
    return "".join(out)


# ---------------------------------------------------------------------------
# scene documents
# ---------------------------------------------------------------------------

def pose_to_obj(pose: Pose):
    return {"rotation": list(pose.rotation), "translation": list(pose.translation)}


def obj_to_pose(obj) -> Pose:
    return Pose(np.asarray(obj["rotation"], dtype=np.float64),
                np.asarray(obj["translation"], dtype=np.float64))


def scene_to_obj(scene: Scene):
    return {
        "format_version": SCENE_FORMAT_VERSION,
        "task": scene.task,
        "randomized": scene.randomized,
        "rng_seed": scene.rng_seed,
        "instruction": scene.instruction,
        "target_object_id": scene.target_object_id,
        "container": {
            "pose": pose_to_obj(scene.container_pose),
            "half_extents": list(scene.container_half_extents),
        },
        "aln_goal_pose": (pose_to_obj(scene.aln_goal_pose)
                          if scene.aln_goal_pose is not None else None),
        "objects": [
            {
                "id": o.id,
                "shape": {"kind": o.shape.kind, "dims": list(o.shape.dims)},
                "pose": pose_to_obj(o.pose),
                "mass": o.mass,
                "is_obstacle": o.is_obstacle,
                "grasp_poses": [pose_to_obj(g) for g in o.grasp_poses],
            }
            for o in scene.objects
        ],
    }


def obj_to_scene(obj) -> Scene:
    if obj.get("format_version") != SCENE_FORMAT_VERSION:
        raise SceneInvalid(
            f"unsupported scene format_version {obj.get('format_version')!r}")
    objects = [
        SceneObject(
            id=o["id"],
            shape=Shape(o["shape"]["kind"],
                        np.asarray(o["shape"]["dims"], dtype=np.float64)),
            pose=obj_to_pose(o["pose"]),
            mass=float(o["mass"]),
            grasp_poses=[obj_to_pose(g) for g in o["grasp_poses"]],
            is_obstacle=bool(o["is_obstacle"]),
        )
        for o in obj["objects"]
    ]
    goal = obj.get("aln_goal_pose")
    return Scene(
        objects=objects,
        container_pose=obj_to_pose(obj["container"]["pose"]),
        task=obj["task"],
        target_object_id=obj["target_object_id"],
        aln_goal_pose=obj_to_pose(goal) if goal is not None else None,
        randomized=bool(obj["randomized"]),
        rng_seed=int(obj["rng_seed"]),
        instruction=obj.get("instruction", ""),
        container_half_extents=np.asarray(obj["container"]["half_extents"],
                                          dtype=np.float64),
    )


def write_scene(scene: Scene, path):
    with open(path, "w") as f:
        f.write(dumps_canonical(scene_to_obj(scene)))
        f.write("\n")


def read_scene(path) -> Scene:
    with open(path) as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise SceneInvalid(f"malformed scene file: {e}") from e
    return obj_to_scene(obj)


# ---------------------------------------------------------------------------
# trajectory documents
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryStep:
    t: int
    action_torques: np.ndarray
    action_gripper: bool
    observation: dict
    reward: float
    d: float
    gripper_open: bool
    phase: str


@dataclass
class Trajectory:
    scene: Scene
    configs: dict
    seed: int
    created_utc: str
    steps: list = field(default_factory=list)
    success: bool = False
    done_reason: str = ""
    total_reward: float = 0.0
    failure_reason: str = ""

    @property
    def total_steps(self):
        return len(self.steps)


def observation_to_obj(obs):
    return {
        "segment_positions": obs.segment_positions,
        "segment_velocities": obs.segment_velocities,
        "eef_pose": pose_to_obj(obs.eef_pose),
        "target_pose": pose_to_obj(obs.target_pose),
        "object_poses": {k: pose_to_obj(v) for k, v in obs.object_poses.items()},
        "gripper_open": obs.gripper_open,
        "step_index": obs.step_index,
    }


def step_to_obj(s: TrajectoryStep):
    return {
        "kind": "step",
        "t": s.t,
        "action": {"torques": s.action_torques,
                   "gripper": 1 if s.action_gripper else 0},
        "observation": (s.observation if isinstance(s.observation, dict)
                        else observation_to_obj(s.observation)),
        "reward": s.reward,
        "d": s.d,
        "gripper_open": s.gripper_open,
        "phase": s.phase,
    }


def write_trajectory(traj: Trajectory, path):
    with open(path, "w") as f:
        header = {
            "kind": "header",
            "format_version": TRAJECTORY_FORMAT_VERSION,
            "scene": scene_to_obj(traj.scene),
            "configs": traj.configs,
            "seed": traj.seed,
            "created_utc": traj.created_utc,
        }
        f.write(dumps_canonical(header))
        f.write("\n")
        for s in traj.steps:
            f.write(dumps_canonical(step_to_obj(s)))
            f.write("\n")
        footer = {
            "kind": "footer",
            "success": traj.success,
            "done_reason": traj.done_reason,
            "failure_reason": traj.failure_reason,
            "total_steps": traj.total_steps,
            "total_reward": traj.total_reward,
        }
        f.write(dumps_canonical(footer))
        f.write("\n")


def read_trajectory(path) -> Trajectory:
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValueError("trajectory file needs header and footer records")
    try:
        header = json.loads(lines[0])
        footer = json.loads(lines[-1])
        step_objs = [json.loads(ln) for ln in lines[1:-1]]
    except json.JSONDecodeError as e:
        raise ValueError(f"malformed trajectory file: {e}") from e
    if header.get("kind") != "header" or footer.get("kind") != "footer":
        raise ValueError("trajectory file missing header or footer record")
    if header.get("format_version") != TRAJECTORY_FORMAT_VERSION:
        raise ValueError(
            f"unsupported trajectory format_version "
            f"{header.get('format_version')!r}")
    steps = []
    prev_t = -1
    for o in step_objs:
        if o.get("kind") != "step":
            raise ValueError("unexpected record kind inside trajectory")
        if o["t"] <= prev_t:
            raise ValueError("step records must be strictly increasing in t")
        prev_t = o["t"]
        steps.append(TrajectoryStep(
            t=int(o["t"]),
            action_torques=np.asarray(o["action"]["torques"], dtype=np.float64),
            action_gripper=bool(o["action"]["gripper"]),
            observation=o["observation"],
            reward=float(o["reward"]),
            d=float(o["d"]),
            gripper_open=bool(o["gripper_open"]),
            phase=o["phase"],
        ))
    if footer["total_steps"] != len(steps):
        raise ValueError("footer step count disagrees with record count")
    return Trajectory(
        scene=obj_to_scene(header["scene"]),
        configs=header["configs"],
        seed=int(header["seed"]),
        created_utc=header["created_utc"],
        steps=steps,
        success=bool(footer["success"]),
        done_reason=footer.get("done_reason", ""),
        total_reward=float(footer["total_reward"]),
        failure_reason=footer.get("failure_reason", ""),
    )
