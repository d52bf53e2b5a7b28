"""brwkit: minima of branching random walks.

Computes the large-deviations constants that govern the generation-n minimum
(tilt t*, linear speed gamma = Lambda'(t*), logarithmic corrections), simulates
branching random walks efficiently (exact enumeration, branch and bound, beam
pruning), and ships a reproducible experiment harness plus exact path-shape
combinatorics (rotation censuses, stays-above events).
"""

__version__ = "0.1.0"

from .stepdist import (  # noqa: E402,F401
    CenteredStep,
    DistInfo,
    DomainError,
    Empirical,
    Exponential,
    Gaussian,
    MomentProfile,
    NegLogBeta,
    SpecError,
    StepSpec,
    TwoPoint,
    Uniform,
    centered,
    lmgf_eval,
    sample,
    validate_spec,
)
from .ldnum import (  # noqa: F401
    NonSupercriticalError,
    PredictionSet,
    Regime,
    RegimeKind,
    TiltSolution,
    UnsolvableError,
    bahadur_rao_tail,
    chernoff_bound,
    classify_regime,
    predict,
    rate_function,
    rate_limit_at_minus_infinity,
    solve_tilt,
)
from .brwsim import (  # noqa: F401
    Beam,
    Bounded,
    BrwConfig,
    ConditionOnSurvival,
    ConfigError,
    Deterministic,
    ExactDFS,
    FullEnumeration,
    MinRecord,
    Unconditional,
    batch_min,
    simulate_min,
    thinned_survival,
)
from .pathlab import (  # noqa: F401
    RotationReport,
    ShapeReport,
    WalkPath,
    conditional_shape_estimate,
    leading_status,
    rotate,
    rotation_census,
    shape_report,
)
from .errors import GuardError  # noqa: F401
