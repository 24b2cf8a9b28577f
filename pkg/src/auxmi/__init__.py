"""Multiple imputation with data-driven auxiliary-variable selection."""

from .datagen import ScenarioConfig, StudyData, basic_scenario, extreme_scenario, realistic_shaped_scenario
from .impute import Estimand, ImputationModelSpec, PooledEstimate, pool_rubin, run_strategy
from .metrics import PerformanceSummary, RepResult, summarize
from .numstat import RngStream
from .selection import SelectionResult, StrategyKind, StrategySpec

__version__ = "0.1.0"

__all__ = [
    "Estimand",
    "ImputationModelSpec",
    "PerformanceSummary",
    "PooledEstimate",
    "RepResult",
    "RngStream",
    "ScenarioConfig",
    "SelectionResult",
    "StrategyKind",
    "StrategySpec",
    "StudyData",
    "basic_scenario",
    "extreme_scenario",
    "pool_rubin",
    "realistic_shaped_scenario",
    "run_strategy",
    "summarize",
]
