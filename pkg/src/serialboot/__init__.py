"""Tail probabilities of the AR(1) serial correlation coefficient by
saddlepoint approximation and bootstrap resampling."""

__version__ = "0.1.0"

from .ar1 import (  # noqa: E402
    Ar1Series,
    ErrorDistribution,
    OddConditioning,
    TailEstimate,
    compute_residuals,
    condition_decompose,
    serial_correlation,
    simulate_ar1,
)
from .bootstrap import (  # noqa: E402
    BootstrapConfig,
    conditional_bootstrap_tail,
    smoothed_bootstrap_tail,
    unconditional_bootstrap_tail,
)
from .cgf import (  # noqa: E402
    GaussianConditionalCgf,
    GaussianUnconditionalCgf,
    GeneralConditionalCgf,
    MixtureConditionalCgf,
    compute_u0,
)
from .saddlepoint import (  # noqa: E402
    Ar1Model,
    SaddleResult,
    conditional_tail,
    critical_value,
    expected_conditional_tail,
    gaussian_unconditional_tail,
)
