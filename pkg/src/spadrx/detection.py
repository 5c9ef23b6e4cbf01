"""Per-symbol count models for an M-PAM constellation, likelihood-ratio (ML)
and threshold detection, and the corresponding symbol error rates.

The SER functionals aggregate errors over adjacent level pairs with a 1/M
prefactor.  This adjacent-pair form is not the standard M-ary union error
probability; Monte-Carlo code reports the true M-ary empirical SER separately
so the two can be compared without conflating them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    CountPmf,
    ModelDomainError,
    PamConstellation,
    ReceiverConfig,
    Regime,
    classify_regime,
    dead_time_ratio,
    total_rate,
)
from .markov import MarkovParams, active_prob, markov_params_for, pmf_array_high, trigger_prob_blended
from .renewal import RenewalParams, pmf_array_low

__all__ = [
    "SymbolModel",
    "ThresholdSet",
    "build_symbol_model",
    "likelihood_ratio",
    "ser_ml",
    "binomial_crossing",
    "threshold_low",
    "threshold_high",
    "thresholds_for",
    "ser_threshold",
    "MLDetector",
    "ThresholdDetector",
]


@dataclass(frozen=True)
class SymbolModel:
    """Count PMFs for each constellation level on a shared support."""

    constellation: PamConstellation
    pmfs: tuple[CountPmf, ...]
    regime: Regime

    def __post_init__(self) -> None:
        if len(self.pmfs) != self.constellation.order:
            raise ValueError("one PMF per constellation level required")
        k_max = self.pmfs[0].k_max
        if any(p.k_max != k_max for p in self.pmfs):
            raise ValueError("all PMFs must share the same support")

    @property
    def k_max(self) -> int:
        return self.pmfs[0].k_max

    @property
    def order(self) -> int:
        return self.constellation.order

    def prob_matrix(self) -> np.ndarray:
        """(M, k_max+1) matrix of level-conditional count probabilities."""
        return np.stack([p.probs for p in self.pmfs])


@dataclass(frozen=True)
class ThresholdSet:
    """M-1 nondecreasing count thresholds separating adjacent levels."""

    thresholds: tuple[float, ...]

    def __post_init__(self) -> None:
        th = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", th)
        if not th:
            raise ValueError("at least one threshold required")
        if any(t < 0.0 for t in th):
            raise ValueError("thresholds must be nonnegative")
        if any(b < a for a, b in zip(th, th[1:])):
            raise ValueError(f"thresholds must be nondecreasing, got {th}")


# =============================================================================
# Model construction
# =============================================================================


def build_symbol_model(config: ReceiverConfig, constellation: PamConstellation,
                       regime: Regime) -> SymbolModel:
    """Build the level-conditional count PMFs for the requested regime.

    The requested regime must match the receiver's dead-time-ratio
    classification; mismatches raise instead of silently switching models.
    """
    actual = classify_regime(config)
    if actual is Regime.UNSUPPORTED:
        raise ModelDomainError(
            f"dead-time ratio {dead_time_ratio(config)!r} is non-integer and >= 1; "
            "no analytic model covers it"
        )
    if regime is not actual:
        raise ModelDomainError(
            f"requested regime {regime.value} but the configuration is {actual.value} "
            f"(dead-time ratio {dead_time_ratio(config)!r})"
        )
    rates = [total_rate(config, level, per_pixel=True) for level in constellation.levels_cns]
    if regime is Regime.LOW_MEDIUM:
        pmfs = [
            pmf_array_low(
                RenewalParams(rate_cns=r, symbol_ns=config.symbol_ns,
                              dead_time_ns=config.dead_time_ns),
                config.array_scale,
            )
            for r in rates
        ]
    else:
        params = markov_params_for(config, constellation)
        pmfs = [pmf_array_high(config, r, params) for r in rates]
    k_max = max(p.k_max for p in pmfs)
    pmfs = [_pad_to(p, k_max) for p in pmfs]
    return SymbolModel(constellation=constellation, pmfs=tuple(pmfs), regime=regime)


def _pad_to(pmf: CountPmf, k_max: int) -> CountPmf:
    if pmf.k_max == k_max:
        return pmf
    padded = np.pad(pmf.probs, (0, k_max - pmf.k_max))
    return CountPmf(probs=padded, k_max=k_max, model_tag=pmf.model_tag,
                    norm_deficit=pmf.norm_deficit)


# =============================================================================
# ML detection
# =============================================================================


def likelihood_ratio(model: SymbolModel, m: int, k: int) -> float:
    """Likelihood ratio of level m+1 against level m (1-based m) at count k.

    0/0 resolves to 1 (a tie, assigned to the lower level); x/0 with x > 0
    is +inf.
    """
    if not (1 <= m <= model.order - 1):
        raise ValueError(f"pair index m must lie in [1, {model.order - 1}], got {m}")
    if not (0 <= k <= model.k_max):
        raise ValueError(f"count k must lie in [0, {model.k_max}], got {k}")
    num = float(model.pmfs[m].probs[k])
    den = float(model.pmfs[m - 1].probs[k])
    if den == 0.0:
        return 1.0 if num == 0.0 else math.inf
    return num / den


def ser_ml(model: SymbolModel) -> float:
    """Adjacent-pair SER under ML detection.

    For each adjacent pair, counts with likelihood ratio <= 1 score the upper
    level's probability and the rest score the lower level's; the branch rule
    makes each pair contribute sum_k min(p_m(k), p_{m+1}(k)).
    """
    probs = model.prob_matrix()
    m_count = model.order
    total = 0.0
    for m in range(m_count - 1):
        lower, upper = probs[m], probs[m + 1]
        le_mask = upper <= lower  # ratio <= 1, including the 0/0 tie
        total += float(upper[le_mask].sum() + lower[~le_mask].sum())
    return total / m_count


# =============================================================================
# Threshold detection
# =============================================================================


def threshold_low(config: ReceiverConfig, constellation: PamConstellation) -> ThresholdSet:
    """Closed-form thresholds for the low/medium-speed regime.

    Treats the array as one equivalent pixel integrating for T_s * N_A at the
    per-pixel rates; adjacent rates must be strictly ordered and positive (a
    zero-level symbol needs a nonzero background or dark rate).
    """
    if classify_regime(config) is not Regime.LOW_MEDIUM:
        raise ModelDomainError(
            f"low-speed thresholds require dead-time ratio < 1, got {dead_time_ratio(config)!r}"
        )
    rates = [total_rate(config, level, per_pixel=True) for level in constellation.levels_cns]
    duration = config.symbol_ns * config.array_scale
    tau = config.dead_time_ns
    out = []
    for lo, hi in zip(rates, rates[1:]):
        if lo <= 0.0:
            raise ModelDomainError(
                "zero-rate symbol needs nonzero background/dark rate for threshold detection"
            )
        if hi <= lo:
            raise ModelDomainError(f"adjacent rates must be strictly ordered, got {lo}, {hi}")
        out.append((hi - lo) * (duration - tau) / ((hi - lo) * tau + math.log(hi / lo)))
    return ThresholdSet(thresholds=tuple(out))


def binomial_crossing(lo: float, hi: float, k_max: int) -> float:
    """Count at which Binomial(k_max, hi) overtakes Binomial(k_max, lo)."""
    if not (0.0 < lo < 1.0) or not (0.0 < hi < 1.0):
        raise ModelDomainError(
            f"per-level success probabilities must lie strictly in (0, 1), got {lo}, {hi}"
        )
    if hi <= lo:
        raise ModelDomainError(
            f"adjacent success probabilities must be strictly ordered, got {lo}, {hi}"
        )
    num = math.log((1.0 - lo) / (1.0 - hi))
    den = math.log(hi * (1.0 - lo) / (lo * (1.0 - hi)))
    return k_max * num / den


def threshold_high(config: ReceiverConfig, constellation: PamConstellation,
                   markov_params: MarkovParams) -> ThresholdSet:
    """Closed-form thresholds for the high-speed regime.

    Based on the binomial approximation with per-level success probability
    p_apr = (blended trigger at the level rate) * (active probability);
    k_max here is the array scale (one count per pixel).
    """
    if classify_regime(config) is not Regime.HIGH:
        raise ModelDomainError(
            f"high-speed thresholds require an integer dead-time ratio >= 1, got "
            f"{dead_time_ratio(config)!r}"
        )
    p_s = active_prob(markov_params)
    rates = [total_rate(config, level, per_pixel=True) for level in constellation.levels_cns]
    p_apr = [trigger_prob_blended(r, config.symbol_ns) * p_s for r in rates]
    return ThresholdSet(
        thresholds=tuple(
            binomial_crossing(lo, hi, config.array_scale)
            for lo, hi in zip(p_apr, p_apr[1:])
        )
    )


def thresholds_for(config: ReceiverConfig, constellation: PamConstellation) -> ThresholdSet:
    """Regime-dispatching threshold computation."""
    regime = classify_regime(config)
    if regime is Regime.LOW_MEDIUM:
        return threshold_low(config, constellation)
    if regime is Regime.HIGH:
        return threshold_high(config, constellation, markov_params_for(config, constellation))
    raise ModelDomainError(
        f"dead-time ratio {dead_time_ratio(config)!r} is non-integer and >= 1; "
        "no threshold model covers it"
    )


def ser_threshold(model: SymbolModel, thresholds: ThresholdSet) -> float:
    """Adjacent-pair SER under threshold detection.

    Counts k <= floor(threshold) decide the lower level.  An exactly integer
    threshold keeps k = threshold in the lower region, so the upper sum
    always starts at floor(threshold) + 1.
    """
    if len(thresholds.thresholds) != model.order - 1:
        raise ValueError("need exactly M-1 thresholds")
    if any(t > model.k_max for t in thresholds.thresholds):
        raise ValueError("thresholds must lie within the count support")
    probs = model.prob_matrix()
    cdfs = np.cumsum(probs, axis=1)
    total = 0.0
    for m, th in enumerate(thresholds.thresholds):
        split = math.floor(th)
        total += float(cdfs[m + 1, split])          # upper level decided low
        total += float(1.0 - cdfs[m, split])        # lower level decided high
    return total / model.order


# =============================================================================
# Decision rules for empirical (Monte-Carlo) counts
# =============================================================================


class MLDetector:
    """Maximum-likelihood decision over the model's M levels.

    Precomputes argmax_m p(k, x_m) per count; ties go to the lowest level.
    """

    def __init__(self, model: SymbolModel):
        self._decisions = np.argmax(model.prob_matrix(), axis=0)

    def decide(self, counts: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts)
        clipped = np.minimum(counts, len(self._decisions) - 1)
        return self._decisions[clipped]


class ThresholdDetector:
    """Threshold comparison: decide the number of thresholds strictly below
    the count (a count equal to a threshold decides the lower level)."""

    def __init__(self, thresholds: ThresholdSet):
        self._th = np.asarray(thresholds.thresholds)

    def decide(self, counts: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._th, np.asarray(counts), side="left")
