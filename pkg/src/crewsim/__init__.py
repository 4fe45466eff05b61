"""Multi-crew construction simulator with hierarchical target selection and MAPPO training."""

__version__ = "0.1.0"

from .scenario import Scenario, build_case_study, build_toy_scenario, build_two_task_scenario, load_scenario, \
    resolve_scenario, validate_scenario
from .environment import ConstructionEnv, EnvConfig, apply_stage1, apply_stage2, reset, run_episode

__all__ = [
    "Scenario",
    "build_case_study",
    "build_toy_scenario",
    "build_two_task_scenario",
    "load_scenario",
    "resolve_scenario",
    "validate_scenario",
    "ConstructionEnv",
    "EnvConfig",
    "apply_stage1",
    "apply_stage2",
    "reset",
    "run_episode",
]
