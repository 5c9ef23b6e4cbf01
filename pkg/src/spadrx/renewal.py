"""Single-pixel renewal count statistics for symbol durations longer than the
dead time (ratio < 1), and the array-level count distribution built from them.

Within one symbol a fresh pixel registers its k-th count at time
``Erlang(k, lam) + (k-1)*tau_d``, which gives the classic dead-time-modified
count PMF (``pmf_no_isi_single``).  Dead time spilling over from the previous
symbol shortens the integration window; marginalizing the fresh-pixel PMF over
the residual-dead-time density yields a closed form (``pmf_isi_single``) under
the approximation that the previous symbol carried the same power.  The model
PMF used downstream is the even blend of the two (``pmf_blend_single``); the
half/half weighting is adopted as-is, a symbol-prior-dependent weighting is an
open modeling question.  Array counts are sums of independent per-pixel counts
(``pmf_array_low``), computed by iterated convolution, which is mathematically
identical to the multinomial composition over pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .core import CountPmf, ModelTag, pixel_count_ceiling

__all__ = [
    "RenewalParams",
    "last_arrival_pdf",
    "isi_residual_pdf",
    "pmf_no_isi_single",
    "pmf_isi_single",
    "pmf_blend_single",
    "single_pixel_pmf",
    "pmf_array_low",
]

# Cancellation among the signed closed-form brackets can leave probabilities a
# few ulps below zero; anything more negative than this is a genuine bug.
NEGATIVE_CLAMP = -1e-9


@dataclass(frozen=True)
class RenewalParams:
    """Per-pixel rate and timing for the low/medium-speed model.

    pixel_max is derived: the per-pixel count ceiling ceil(T_s/tau_d).
    """

    rate_cns: float
    symbol_ns: float
    dead_time_ns: float
    pixel_max: int = 0  # derived in __post_init__

    def __post_init__(self) -> None:
        if self.rate_cns < 0.0:
            raise ValueError("rate_cns must be nonnegative")
        if self.symbol_ns <= 0.0 or self.dead_time_ns <= 0.0:
            raise ValueError("symbol_ns and dead_time_ns must be positive")
        if self.dead_time_ns >= self.symbol_ns:
            raise ValueError(
                "renewal model requires dead_time_ns < symbol_ns "
                f"(got ratio {self.dead_time_ns / self.symbol_ns})"
            )
        object.__setattr__(
            self, "pixel_max", pixel_count_ceiling(self.symbol_ns, self.dead_time_ns)
        )


# =============================================================================
# Densities
# =============================================================================


def last_arrival_pdf(t_ns: float, params: RenewalParams) -> float:
    """Density of the last count time in a symbol, ``lam*exp(-lam(T_s - t))``.

    Continuous part only; the remaining mass exp(-lam*T_s) is the no-count
    atom at t = 0.
    """
    if params.rate_cns <= 0.0:
        raise ValueError("last_arrival_pdf requires a positive rate")
    if not (0.0 <= t_ns <= params.symbol_ns):
        raise ValueError(f"t_ns must lie in [0, {params.symbol_ns}], got {t_ns}")
    return params.rate_cns * math.exp(-params.rate_cns * (params.symbol_ns - t_ns))


def isi_residual_pdf(t_ns: float, params: RenewalParams) -> tuple[float, float]:
    """Residual dead time carried into a symbol: (density at t, atom at 0).

    The continuous part ``lam*exp(-lam(tau_d - t))`` lives on (0, tau_d]; the
    atom ``exp(-lam*tau_d)`` is the probability of no carry-over at all.
    """
    if not (0.0 <= t_ns <= params.dead_time_ns):
        raise ValueError(f"t_ns must lie in [0, {params.dead_time_ns}], got {t_ns}")
    lam = params.rate_cns
    atom = math.exp(-lam * params.dead_time_ns)
    density = lam * math.exp(-lam * (params.dead_time_ns - t_ns))
    return density, atom


# =============================================================================
# Polynomial-exponential terms (stable evaluation)
# =============================================================================


def _pe_term(lam: float, i: int, x: float, y: float) -> float:
    """(lam^i / i!) * x^i * exp(-lam*y), assuming x >= 0."""
    lx = lam * x
    if lx == 0.0:
        return math.exp(-lam * y) if i == 0 else 0.0
    if i <= 20 and lx <= 30.0:
        return lx**i / math.factorial(i) * math.exp(-lam * y)
    return float(math.exp(i * math.log(lx) - lam * y - gammaln(i + 1)))


def _survival(k: int, t: float, params: RenewalParams) -> float:
    """P{at least k counts by time t} for a fresh pixel.

    The k-th registration happens at Erlang(k, lam) + (k-1)*tau_d, so the
    survival is an Erlang CDF in the shifted time.
    """
    if k == 0:
        return 1.0
    lam = params.rate_cns
    u = t - (k - 1) * params.dead_time_ns
    if u <= 0.0 or lam == 0.0:
        return 0.0
    return 1.0 - math.fsum(_pe_term(lam, i, u, u) for i in range(k))


def _pmf_no_isi_at(k: int, t: float, params: RenewalParams) -> float:
    """Fresh-pixel count PMF at horizon t, valid for any t in [0, T_s]."""
    lam, tau = params.rate_cns, params.dead_time_ns
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    if k >= params.pixel_max or t <= k * tau:
        # Complementary form: the (k+1)-th registration cannot fit by t.
        return _survival(k, t, params)
    # Both survival brackets active; their constant 1s cancel analytically.
    terms = [_pe_term(lam, i, t - k * tau, t - k * tau) for i in range(k + 1)]
    terms += [-_pe_term(lam, i, t - (k - 1) * tau, t - (k - 1) * tau) for i in range(k)]
    return math.fsum(terms)


def pmf_no_isi_single(k: int, params: RenewalParams) -> float:
    """P{k counts in one symbol} for a pixel starting the symbol recovered."""
    if not (0 <= k <= params.pixel_max):
        raise ValueError(f"k must lie in [0, {params.pixel_max}], got {k}")
    return _pmf_no_isi_at(k, params.symbol_ns, params)


# =============================================================================
# ISI closed form
# =============================================================================
#
# Marginalizing the fresh-pixel PMF over the residual-dead-time density is a
# convolution whose transform factors into four rational blocks plus the
# fresh-pixel term.  Each block is causal: it switches on at a multiple of
# tau_d.  The familiar three-bracket display of the result is the special
# case in which all four blocks are active (t >= (k+1)*tau_d); evaluating it
# verbatim below that point produces large spurious negatives, so the
# constant and growing parts that stop cancelling are reinstated explicitly
# per block.  Where both members of a pair are active their growing parts
# cancel exactly and are skipped rather than subtracted.


def _decaying_sum(lam: float, order: int, u: float, extra_exp: float) -> list[float]:
    """Decaying part of one causal block: sum_i (1 - 2^{i-order}) pe(i, u, u+extra)."""
    return [
        (1.0 - 2.0 ** (i - order)) * _pe_term(lam, i, u, u + extra_exp)
        for i in range(order)
    ]


def _pmf_isi_at(k: int, t: float, params: RenewalParams) -> float:
    lam, tau = params.rate_cns, params.dead_time_ns
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    if k >= params.pixel_max:
        # Saturated count: lower-bound form exp(-lam*tau)*P_fresh{k_max};
        # exact when T_s/tau_d is an integer, deficit reported by callers.
        return math.exp(-lam * tau) * _pmf_no_isi_at(k, t, params)

    u1 = t - (k - 1) * tau  # order k,   scaled by exp(-lam*tau)
    u2 = t - k * tau        # order k+1, scaled by exp(-lam*tau)
    u3 = t - k * tau        # order k
    u4 = t - (k + 1) * tau  # order k+1
    a1, a2, a3, a4 = (u1 >= 0.0), (u2 >= 0.0), (u3 >= 0.0), (u4 >= 0.0)

    terms = [math.exp(-lam * tau) * _pmf_no_isi_at(k, t, params)]
    if a1:
        terms += _decaying_sum(lam, k, u1, tau)
    if a2:
        terms += [-v for v in _decaying_sum(lam, k + 1, u2, tau)]
    if a3:
        terms += [-v for v in _decaying_sum(lam, k, u3, 0.0)]
    if a4:
        terms += _decaying_sum(lam, k + 1, u4, 0.0)

    # Constant parts: -1 per block, signed (+, -, -, +) with the first pair
    # carrying exp(-lam*tau).
    if a1 != a2:
        terms.append(math.exp(-lam * tau) * (-1.0 if a1 else 1.0))
    if a3 != a4:
        terms.append(1.0 if a3 else -1.0)
    # Growing parts 2^{-order} exp(lam*u): the (1,3) pair shares exponent
    # lam*(t - k*tau) after scaling, the (2,4) pair shares lam*(t-(k+1)*tau).
    if a1 != a3:
        terms.append((1.0 if a1 else -1.0) * 2.0**-k * math.exp(lam * u3))
    if a2 != a4:
        terms.append((-1.0 if a2 else 1.0) * 2.0 ** -(k + 1) * math.exp(lam * u4))
    return math.fsum(terms)


def _clamp_probability(value: float, context: str) -> float:
    if value < NEGATIVE_CLAMP:
        raise FloatingPointError(
            f"{context} produced {value}, far below zero; this indicates a bug, "
            "not rounding"
        )
    return max(0.0, value)


def pmf_isi_single(k: int, params: RenewalParams) -> float:
    """P{k counts in one symbol} with same-power dead-time carry-over.

    Assumes the preceding symbol carried the same optical power, which
    overestimates the interference for high-power symbols and underestimates
    it for low-power ones; ``pmf_blend_single`` is the standard correction.
    The saturated count k = pixel_max uses a lower-bound form that is exact
    only for integer T_s/tau_d; the lost mass is surfaced by pmf_array_low.
    """
    if not (0 <= k <= params.pixel_max):
        raise ValueError(f"k must lie in [0, {params.pixel_max}], got {k}")
    return _clamp_probability(_pmf_isi_at(k, params.symbol_ns, params), "pmf_isi_single")


def pmf_blend_single(k: int, params: RenewalParams) -> float:
    """Even blend of the carry-over and fresh-pixel PMFs."""
    return 0.5 * (pmf_isi_single(k, params) + pmf_no_isi_single(k, params))


# =============================================================================
# Array-level PMF
# =============================================================================


@lru_cache(maxsize=256)
def single_pixel_pmf(params: RenewalParams, tag: ModelTag = ModelTag.RENEWAL_BLEND) -> np.ndarray:
    """Single-pixel PMF over 0..pixel_max as a read-only vector (cached)."""
    fn = {
        ModelTag.RENEWAL_NO_ISI: pmf_no_isi_single,
        ModelTag.RENEWAL_ISI: pmf_isi_single,
        ModelTag.RENEWAL_BLEND: pmf_blend_single,
    }[tag]
    vec = np.array([fn(k, params) for k in range(params.pixel_max + 1)])
    vec.flags.writeable = False
    return vec


def _convolve_power(pmf: np.ndarray, n: int) -> np.ndarray:
    """n-fold self-convolution by binary exponentiation."""
    result = None
    base = pmf
    while n > 0:
        if n & 1:
            result = base if result is None else np.convolve(result, base)
        n >>= 1
        if n > 0:
            base = np.convolve(base, base)
    return result


def pmf_array_low(params: RenewalParams, array_scale: int) -> CountPmf:
    """Count PMF of an array of independent pixels in the renewal regime.

    Iterated discrete convolution of the blended single-pixel PMF; for
    i.i.d. pixels this equals the multinomial composition term for term.
    The result is renormalized to a proper distribution and the
    pre-normalization deficit (from the saturated-count lower bound) is
    recorded in the metadata.
    """
    if array_scale < 1:
        raise ValueError("array_scale must be >= 1")
    single = single_pixel_pmf(params)
    total = _convolve_power(single, array_scale)
    total = np.array([_clamp_probability(v, "pmf_array_low") for v in total])
    mass = float(total.sum())
    if mass <= 0.0:
        raise FloatingPointError("array PMF lost all probability mass")
    deficit = 1.0 - mass
    return CountPmf(
        probs=total / mass,
        k_max=array_scale * params.pixel_max,
        model_tag=ModelTag.RENEWAL_ARRAY,
        norm_deficit=deficit,
    )
