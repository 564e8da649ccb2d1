"""Birth-and-death continuous-time random walks: regularity analysis toolkit.

Classifies walks as explosive/non-explosive and imploding/non-imploding via
scale and speed-measure series criteria, solves the finite hitting-time
Laplace-transform systems exactly, and verifies both against parallel Monte
Carlo simulation.
"""

__version__ = "0.1.0"

from .chain import (  # noqa: F401
    ChainClass,
    ChainSpec,
    ScaleTable,
    TailInfo,
    canonical_scale,
    exit_probabilities,
    log_scale_product,
    recurrence_class,
)
from .errors import (  # noqa: F401
    BdwalkError,
    InvariantViolation,
    NotApplicableError,
    NumericError,
    SamplingError,
    ScenarioError,
    ValidationError,
)
from .series import Method, SeriesPolicy, SeriesVerdict, Verdict  # noqa: F401
