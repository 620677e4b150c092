"""Scenario configs, the scripted runner and task metrics."""

from .config import ConfigError, ScenarioConfig, load_packaged, packaged_names, read_config, write_config
from .metrics import Hole, Outcome, PegStatus, RunMetrics, detect_grasp_response, detect_slip_onset, peg_status
from .runner import RunAborted, RunResult, build_scene, run

__all__ = [
    "ConfigError",
    "Hole",
    "Outcome",
    "PegStatus",
    "RunAborted",
    "RunMetrics",
    "RunResult",
    "ScenarioConfig",
    "build_scene",
    "detect_grasp_response",
    "detect_slip_onset",
    "load_packaged",
    "packaged_names",
    "peg_status",
    "read_config",
    "run",
    "write_config",
]
