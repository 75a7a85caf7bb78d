from .ensembles import (
    ColumnMatrix,
    DistributionSpec,
    Family,
    fourth_moment,
    sample_column,
    sample_matrix,
    substream,
)
from .kr_operator import KrOperator, Mode, Representation, build, kappa
from .exceptions import (
    BudgetExceededError,
    ConfigError,
    DimensionError,
    DistributionError,
    InfeasibleError,
    KrRipError,
)

__version__ = "0.3.0"

__all__ = [
    "ColumnMatrix",
    "DistributionSpec",
    "Family",
    "KrOperator",
    "Mode",
    "Representation",
    "build",
    "kappa",
    "fourth_moment",
    "sample_column",
    "sample_matrix",
    "substream",
    "BudgetExceededError",
    "ConfigError",
    "DimensionError",
    "DistributionError",
    "InfeasibleError",
    "KrRipError",
]
