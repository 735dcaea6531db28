"""Trial-offer markets with position bias and social influence."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    MarketError,
    NoPurchasePossibleError,
    SizeError,
    UsageError,
)
from .market import (
    Condition,
    MarketState,
    ProductCatalog,
    Ranking,
    VisibilityProfile,
    effective_appeals,
    expected_purchases,
    next_purchase_distribution,
    purchase_probabilities,
    trial_probabilities,
)
from .policies import (
    PolicyKind,
    PolicySchedule,
    compute_ranking,
    next_ranking,
    performance_ranking,
    popularity_ranking,
    quality_ranking,
    random_ranking,
)
from .dp import HorizonSpec, ValueReport, optimal_value, policy_value
from .simulator import (
    ExperimentResult,
    SimulationConfig,
    TraceGranularity,
    TrialEvent,
    WorldTrace,
    run_experiment,
    run_world,
)
from .scenario import (
    ExperimentConfig,
    SettingKind,
    VisibilitySpec,
    default_config,
    load_config,
    musiclab_visibility,
    setting_catalog,
)
from .analysis import (
    beta_limit_test,
    efficiency_table,
    monopoly_stats,
    predictability_report,
    urn_view,
)
