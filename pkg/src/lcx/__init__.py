"""Abstract convexity with respect to Lipschitz concave functions, on grids.

Envelope operators, subdifferentiability oracles, maximal-minorant LPs,
Ekeland support-point search and global-extremum certificates for
extended-real functions sampled on boxes in R and R^2.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError, ExtendedArithmeticError, LcxError, PreconditionError, UsageError,
)
from .function_model import (  # noqa: E402
    GALLERY_IDS, GalleryFunction, Grid, SampledFunction, affine, gallery, piecewise_linear,
    random_piecewise_linear, sample,
)
from .envelopes import (  # noqa: E402
    ConeFunction, GridMinorant, MaximalityCertificate, certify_maximality, lc_convexity_test,
    legendre_fenchel, lipschitz_lower_envelope, lipschitz_modulus, lipschitz_upper_envelope,
    maximal_minorant,
)
from .subdiff import (  # noqa: E402
    SubgradientCandidate, calmness_modulus, check_maximality, check_subgradient,
    subdifferentiability_oracle, superdifferential_dual,
)
from .ekeland import density_scan, ekeland_refine  # noqa: E402
from .extremum import (  # noqa: E402
    calculus_domination_check, calculus_scaling_check, calculus_sum_check,
    global_max_certificate, global_min_certificate, max_necessary_condition,
)

__all__ = [
    "__version__",
    "LcxError", "PreconditionError", "DomainError", "UsageError", "ExtendedArithmeticError",
    "Grid", "SampledFunction", "GalleryFunction", "GALLERY_IDS", "gallery", "affine",
    "piecewise_linear", "random_piecewise_linear", "sample",
    "ConeFunction", "GridMinorant", "MaximalityCertificate", "certify_maximality",
    "lc_convexity_test", "legendre_fenchel", "lipschitz_lower_envelope", "lipschitz_modulus",
    "lipschitz_upper_envelope", "maximal_minorant",
    "SubgradientCandidate", "calmness_modulus", "check_maximality", "check_subgradient",
    "subdifferentiability_oracle", "superdifferential_dual",
    "density_scan", "ekeland_refine",
    "calculus_domination_check", "calculus_scaling_check", "calculus_sum_check",
    "global_max_certificate", "global_min_certificate", "max_necessary_condition",
]
