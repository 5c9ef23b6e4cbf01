"""Shared receiver types, rate composition, and dead-time-free counting statistics.

Units are fixed package-wide: time in nanoseconds (ns), photon/carrier rates
in counts per nanosecond (c/ns).  Public field names carry the unit suffix.

A non-paralyzable detector with dead time ``tau_d`` observing a Poisson
carrier stream of rate ``lam`` splits into two speed regimes governed by the
dead-time ratio ``xi = tau_d / T_s``:

* ``xi < 1`` (low/medium speed): several counts per pixel per symbol are
  possible and renewal statistics apply (module :mod:`spadrx.renewal`).
* integer ``xi >= 1`` (high speed): at most one count per pixel per symbol
  and the pixel availability follows a finite Markov chain
  (module :mod:`spadrx.markov`).

Non-integer ratios above 1 are outside the modeled domain and are reported
as such rather than silently approximated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ModelDomainError",
    "Regime",
    "ModelTag",
    "ReceiverConfig",
    "PamConstellation",
    "CountPmf",
    "total_rate",
    "poisson_pmf",
    "first_arrival_pdf",
    "max_counts",
    "dead_time_ratio",
    "classify_regime",
    "total_variation_distance",
    "DEFAULT_PAM4_FRACTIONS",
]

# Slack for deciding whether a float quotient (T_s/tau_d or its inverse) is an
# integer; quotients of user-supplied ns values rarely come out exact.
INTEGER_RTOL = 1e-9

# Default 4-PAM level profile (square-root-spaced, zero-anchored), as
# fractions of the peak signal rate.
DEFAULT_PAM4_FRACTIONS = (0.0, 0.1, 0.4, 1.0)


class ModelDomainError(ValueError):
    """Inputs are valid numbers but outside the modeled regime.

    Examples: non-integer dead-time ratio above 1, a zero-rate constellation
    point where a positive rate is required, degenerate trigger probabilities.
    """


class Regime(enum.Enum):
    """Speed regime implied by the dead-time ratio."""

    LOW_MEDIUM = "low_medium"  # xi < 1, renewal model
    HIGH = "high"              # integer xi >= 1, Markov model
    UNSUPPORTED = "unsupported"  # non-integer xi >= 1


class ModelTag(enum.Enum):
    """Provenance of a :class:`CountPmf`."""

    RENEWAL_NO_ISI = "renewal_no_isi"
    RENEWAL_ISI = "renewal_isi"
    RENEWAL_BLEND = "renewal_blend"
    RENEWAL_ARRAY = "renewal_array"
    MARKOV_ARRAY = "markov_array"
    EMPIRICAL = "empirical"


# Normalization tolerance by provenance: exact constructions must sum to 1
# tightly; single-pixel ISI forms carry a documented approximation deficit.
_SUM_TOL = {
    ModelTag.RENEWAL_NO_ISI: 1e-6,
    ModelTag.RENEWAL_ISI: 1e-3,
    ModelTag.RENEWAL_BLEND: 1e-3,
    ModelTag.RENEWAL_ARRAY: 1e-6,
    ModelTag.MARKOV_ARRAY: 1e-6,
    ModelTag.EMPIRICAL: 1e-6,
}


# =============================================================================
# Domain types
# =============================================================================


@dataclass(frozen=True)
class ReceiverConfig:
    """Physical parameters of one SPAD-array receiver.

    pde:
        Photon detection efficiency, in (0, 1].
    array_scale:
        Number of SPAD pixels in the array (>= 1).
    dead_time_ns:
        Non-paralyzable recovery time after each registered count.
    symbol_ns:
        Symbol duration.
    background_rate_cns:
        Background photon rate at the array aperture (before PDE).
    dark_rate_cns:
        Dark carrier rate, intrinsically per pixel (after PDE).
    """

    pde: float
    array_scale: int
    dead_time_ns: float
    symbol_ns: float
    background_rate_cns: float = 0.0
    dark_rate_cns: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.pde <= 1.0):
            raise ValueError(f"pde must be in (0, 1], got {self.pde}")
        if self.array_scale < 1 or self.array_scale != int(self.array_scale):
            raise ValueError(f"array_scale must be a positive integer, got {self.array_scale}")
        if not (self.dead_time_ns > 0.0 and math.isfinite(self.dead_time_ns)):
            raise ValueError(f"dead_time_ns must be positive, got {self.dead_time_ns}")
        if not (self.symbol_ns > 0.0 and math.isfinite(self.symbol_ns)):
            raise ValueError(f"symbol_ns must be positive, got {self.symbol_ns}")
        if self.background_rate_cns < 0.0:
            raise ValueError("background_rate_cns must be nonnegative")
        if self.dark_rate_cns < 0.0:
            raise ValueError("dark_rate_cns must be nonnegative")


@dataclass(frozen=True)
class PamConstellation:
    """Ordered PAM signal levels, as signal photon rates in c/ns.

    Levels are strictly increasing and nonnegative; ``levels_cns[0]`` may be
    zero (dark symbol).
    """

    levels_cns: tuple[float, ...]

    def __post_init__(self) -> None:
        levels = tuple(float(x) for x in self.levels_cns)
        object.__setattr__(self, "levels_cns", levels)
        if len(levels) < 2:
            raise ValueError("constellation needs at least two levels")
        if levels[0] < 0.0:
            raise ValueError("signal levels must be nonnegative")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"signal levels must be strictly increasing, got {levels}")

    @property
    def order(self) -> int:
        return len(self.levels_cns)

    @classmethod
    def from_fractions(cls, peak_rate_cns: float, fractions=DEFAULT_PAM4_FRACTIONS) -> "PamConstellation":
        """Scale a fractional level profile by the peak signal rate."""
        if peak_rate_cns <= 0.0:
            raise ValueError("peak_rate_cns must be positive")
        return cls(tuple(peak_rate_cns * f for f in fractions))


@dataclass(frozen=True)
class CountPmf:
    """Probability mass function over photon counts 0..k_max.

    norm_deficit records how much probability the generating model lost
    before renormalization (an approximation diagnostic, 0 for exact models).
    """

    probs: np.ndarray
    k_max: int
    model_tag: ModelTag
    norm_deficit: float = 0.0

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64).copy()
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or len(probs) != self.k_max + 1:
            raise ValueError(f"probs must have length k_max+1 = {self.k_max + 1}, got {len(probs)}")
        if np.any(probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        tol = _SUM_TOL[self.model_tag]
        total = float(probs.sum())
        if abs(total - 1.0) > tol:
            raise ValueError(
                f"PMF tagged {self.model_tag.value} sums to {total!r}, outside 1 +/- {tol}"
            )

    def mean(self) -> float:
        return float(np.arange(self.k_max + 1) @ self.probs)

    def variance(self) -> float:
        k = np.arange(self.k_max + 1)
        m = self.mean()
        return float((k - m) ** 2 @ self.probs)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


# =============================================================================
# Rate composition and Poisson baseline
# =============================================================================


def total_rate(config: ReceiverConfig, signal_rate_cns: float, per_pixel: bool) -> float:
    """Total detected carrier rate for a given signal photon rate.

    With ``per_pixel=False`` this is the whole-aperture composition
    ``pde*(lam_s + lam_b) + lam_d``.  With ``per_pixel=True`` the optical
    flux divides evenly across the array while the dark rate stays per pixel:
    ``pde*(lam_s + lam_b)/N_A + lam_d``.
    """
    if signal_rate_cns < 0.0:
        raise ValueError("signal_rate_cns must be nonnegative")
    optical = config.pde * (signal_rate_cns + config.background_rate_cns)
    if per_pixel:
        optical /= config.array_scale
    return optical + config.dark_rate_cns


def poisson_pmf(k: int, rate_cns: float, duration_ns: float) -> float:
    """P{k counts in (0, t)} for an ideal (dead-time-free) detector.

    Evaluated in log space once ``rate*duration`` exceeds 30, where the
    direct ``(lam t)^k / k!`` quotient starts risking overflow.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if rate_cns < 0.0 or duration_ns < 0.0:
        raise ValueError("rate and duration must be nonnegative")
    lt = rate_cns * duration_ns
    if lt == 0.0:
        return 1.0 if k == 0 else 0.0
    if lt <= 30.0 and k <= 30:
        return lt**k * math.exp(-lt) / math.factorial(k)
    return float(math.exp(k * math.log(lt) - lt - gammaln(k + 1)))


def first_arrival_pdf(t_ns: float, rate_cns: float) -> float:
    """Density of the first detected count time, ``lam * exp(-lam t)``."""
    if rate_cns <= 0.0:
        raise ValueError("rate_cns must be positive (density undefined at 0)")
    if t_ns < 0.0:
        raise ValueError("t_ns must be nonnegative")
    return rate_cns * math.exp(-rate_cns * t_ns)


# =============================================================================
# Timing quantities
# =============================================================================


def _integral_quotient(num: float, den: float) -> int | None:
    """Round num/den to an integer if it is one up to INTEGER_RTOL, else None."""
    q = num / den
    r = round(q)
    if r >= 1 and abs(q - r) <= INTEGER_RTOL * max(1.0, q):
        return int(r)
    return None


def pixel_count_ceiling(symbol_ns: float, dead_time_ns: float) -> int:
    """Maximum counts one pixel can register in a symbol: ceil(T_s/tau_d).

    Float-robust: quotients within INTEGER_RTOL of an integer are treated as
    exactly integral so that e.g. 0.4/0.1 does not ceil to 5.
    """
    exact = _integral_quotient(symbol_ns, dead_time_ns)
    if exact is not None:
        return exact
    return max(1, math.ceil(symbol_ns / dead_time_ns))


def max_counts(config: ReceiverConfig) -> int:
    """Maximum array-level counts per symbol, ``N_A * ceil(T_s/tau_d)``."""
    return config.array_scale * pixel_count_ceiling(config.symbol_ns, config.dead_time_ns)


def dead_time_ratio(config: ReceiverConfig) -> float:
    """Dead-time ratio ``xi = tau_d / T_s``."""
    return config.dead_time_ns / config.symbol_ns


def classify_regime(config: ReceiverConfig) -> Regime:
    """Map the dead-time ratio to the analytic model that covers it.

    The two models are disjoint and must never be cross-applied, so the
    classification is explicit: xi < 1 is low/medium speed, integer xi >= 1
    is high speed, and any other ratio is unsupported.
    """
    xi = dead_time_ratio(config)
    if _integral_quotient(config.dead_time_ns, config.symbol_ns) is not None:
        return Regime.HIGH
    if xi < 1.0:
        return Regime.LOW_MEDIUM
    return Regime.UNSUPPORTED


# =============================================================================
# Metrics
# =============================================================================


def total_variation_distance(p, q) -> float:
    """TVD between two count PMFs, ``0.5 * sum |p_k - q_k|``.

    Accepts arrays or CountPmf; shorter support is zero-padded.
    """
    pa = p.probs if isinstance(p, CountPmf) else np.asarray(p, dtype=np.float64)
    qa = q.probs if isinstance(q, CountPmf) else np.asarray(q, dtype=np.float64)
    n = max(len(pa), len(qa))
    pa = np.pad(pa, (0, n - len(pa)))
    qa = np.pad(qa, (0, n - len(qa)))
    return 0.5 * float(np.abs(pa - qa).sum())
