"""Hybrid-scan Gibbs samplers with sandwich steps for latent-variable models.

Scan kinds: data augmentation (DA), systematic scan (SS), random scan (RS),
hybrid scan (HS), and hybrid scan with sandwich steps (HSS), run against a
heavy-tailed location-scale model, a shrinkage-prior linear mixed model, a
scale-mixture regression model, and a toy Laplace target, together with
geometric-ergodicity condition checkers and desk-scale quadrature oracles.
"""

from .distributions import GigParams, RngStream, bessel_k, sample_f, sample_gamma, sample_gig, sample_mvn
from .errors import (
    ChainAbortedError,
    ConfigurationError,
    GridError,
    HybridScanError,
    NumericalDegeneracyError,
    ParameterDomainError,
    RejectionCapError,
    UnsupportedOperationError,
)
from .models import GlmmModel, MixingDensity, SmnModel, StudentTModel, ToyLaplaceModel
from .scans import Chain, ScanSpec, lag_normalize, run_chain, step

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ChainAbortedError",
    "ConfigurationError",
    "GigParams",
    "GlmmModel",
    "GridError",
    "HybridScanError",
    "MixingDensity",
    "NumericalDegeneracyError",
    "ParameterDomainError",
    "RejectionCapError",
    "RngStream",
    "ScanSpec",
    "SmnModel",
    "StudentTModel",
    "ToyLaplaceModel",
    "UnsupportedOperationError",
    "bessel_k",
    "lag_normalize",
    "run_chain",
    "sample_f",
    "sample_gamma",
    "sample_gig",
    "sample_mvn",
    "step",
]
