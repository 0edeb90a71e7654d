"""Sequential matched filters for pattern localisation in low-SNR 1-D signals.

A policy network emits one short filter template per step; correlating each
template with the current signal and thresholding the final output localises
target peaks. Policies are trained with PPO or SAC against detection rewards.
"""

__version__ = "0.1.0"

from .dataset import LabeledSegment, SynthConfig, load_dataset, save_dataset, split, synth_generate
from .env import EnvConfig, SmfEnv, rollout
from .signal_ops import (
    DetectionOutcome,
    correlate,
    find_peaks,
    match_peaks,
    metrics,
    normalize_maxabs,
    reward_f1,
    reward_linear,
)

__all__ = [
    "DetectionOutcome",
    "EnvConfig",
    "LabeledSegment",
    "SmfEnv",
    "SynthConfig",
    "correlate",
    "find_peaks",
    "load_dataset",
    "match_peaks",
    "metrics",
    "normalize_maxabs",
    "reward_f1",
    "reward_linear",
    "rollout",
    "save_dataset",
    "split",
    "synth_generate",
]
