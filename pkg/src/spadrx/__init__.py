"""Modeling and simulation toolkit for SPAD-array photon-counting receivers
in PAM optical wireless links.

Subpackages by concern:

* :mod:`spadrx.core` - shared types, rate composition, Poisson baseline.
* :mod:`spadrx.renewal` - low/medium-speed (dead-time ratio < 1) count PMFs.
* :mod:`spadrx.markov` - high-speed (integer ratio >= 1) count PMFs.
* :mod:`spadrx.detection` - ML and threshold detection, symbol error rates.
* :mod:`spadrx.montecarlo` - event-level simulation oracle.
* :mod:`spadrx.cli` - experiment configs, sweeps, and file outputs.
"""

from .core import (
    CountPmf,
    ModelDomainError,
    ModelTag,
    PamConstellation,
    ReceiverConfig,
    Regime,
    classify_regime,
    dead_time_ratio,
    max_counts,
    poisson_pmf,
    total_rate,
    total_variation_distance,
)

__version__ = "0.1.0"

__all__ = [
    "CountPmf",
    "ModelDomainError",
    "ModelTag",
    "PamConstellation",
    "ReceiverConfig",
    "Regime",
    "classify_regime",
    "dead_time_ratio",
    "max_counts",
    "poisson_pmf",
    "total_rate",
    "total_variation_distance",
    "__version__",
]
