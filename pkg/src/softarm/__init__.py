"""Torque-actuated soft continuum arm: simulation, metrics, planning, control."""

__version__ = "0.1.0"

from .errors import (EpisodeFinished, NumericBlowup, PlacementFailed,
                     SceneInvalid, SoftArmError, Unreachable)
from .se3 import (Pose, PoseDiff, RdParams, RsParams, pose_exp, pose_log,
                  reward_d, reward_s, stability_variance, success)
from .rod import (MaterialMatrices, RodConfig, RodState, StrainState,
                  compute_strains, derive_material, internal_loads,
                  straight_state)

__all__ = [
    "EpisodeFinished", "NumericBlowup", "PlacementFailed", "SceneInvalid",
    "SoftArmError", "Unreachable",
    "Pose", "PoseDiff", "RdParams", "RsParams", "pose_exp", "pose_log",
    "reward_d", "reward_s", "stability_variance", "success",
    "MaterialMatrices", "RodConfig", "RodState", "StrainState",
    "compute_strains", "derive_material", "internal_loads", "straight_state",
    "__version__",
]
