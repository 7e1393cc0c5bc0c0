"""Learning-based link scheduling for low-band assisted mm-wave multi-connectivity."""

__version__ = "0.1.0"

from .channel import MeasurementVector, ChannelRealization, RadioParams, align_and_measure, realize_channel
from .forest import Forest, ForestParams, decide, predict_proba, train_forest
from .scene import Scene, SceneConfig, advance, build_scene
from .scheduling import (
    CostVector,
    LinkCombination,
    QosRequirement,
    ScheduleResult,
    enumerate_combinations,
    genie_solve,
    greedy_multi_x,
    label_sample,
    min_multi_x,
)

__all__ = [
    "ChannelRealization",
    "CostVector",
    "Forest",
    "ForestParams",
    "LinkCombination",
    "MeasurementVector",
    "QosRequirement",
    "RadioParams",
    "Scene",
    "SceneConfig",
    "ScheduleResult",
    "advance",
    "align_and_measure",
    "build_scene",
    "decide",
    "enumerate_combinations",
    "genie_solve",
    "greedy_multi_x",
    "label_sample",
    "min_multi_x",
    "predict_proba",
    "realize_channel",
    "train_forest",
]
