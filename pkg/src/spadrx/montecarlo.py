"""Event-level Monte-Carlo oracle: per-pixel Poisson arrivals filtered by a
non-paralyzable dead time that persists across symbol boundaries.

Exactness and reproducibility are the whole point here:

* Arrival generation is exact.  Within a symbol the next candidate arrival is
  the current position plus an exponential gap at that symbol's rate; a
  candidate falling beyond the symbol boundary is discarded and generation
  restarts at the boundary under the next symbol's rate, which is exact by
  memorylessness of the exponential.
* Time is tracked as absolute integer femtosecond ticks (10^-6 ns), so
  dead-time geometry never accumulates floating-point error over long runs
  and inter-registration gaps are >= the dead time exactly, in tick units.
* Randomness comes from counter-based Philox streams.  Stream derivation is
  fixed: the symbol sequence uses spawn key (0,) of the run seed and pixel
  ``p`` uses spawn key (1, p).  Any partition of pixels across workers
  therefore reproduces the serial result bit for bit, and array totals are
  order-independent integer sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import CountPmf, ModelTag, PamConstellation, ReceiverConfig, max_counts, total_rate

__all__ = [
    "TICKS_PER_NS",
    "SimSpec",
    "SerEstimate",
    "simulate_pixel_symbols",
    "simulate_array_symbols",
    "empirical_pmf",
    "empirical_ser",
    "wilson_interval",
]

TICKS_PER_NS = 10**6  # femtosecond resolution

_SYMBOL_STREAM = 0
_PIXEL_STREAM = 1
_UNIFORM_BUFFER = 1 << 16

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimSpec:
    """One reproducible simulation run.

    symbol_source: "random" for uniform i.i.d. levels, an integer for a fixed
    level index, or an explicit tuple of level indices.
    """

    config: ReceiverConfig
    constellation: PamConstellation
    n_symbols: int
    seed: int
    warmup_symbols: int = 16
    symbol_source: str | int | tuple[int, ...] = "random"

    def __post_init__(self) -> None:
        if self.n_symbols < 1:
            raise ValueError("n_symbols must be >= 1")
        if not (0 <= self.warmup_symbols < self.n_symbols):
            raise ValueError("warmup_symbols must lie in [0, n_symbols)")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")
        src = self.symbol_source
        if isinstance(src, str):
            if src != "random":
                raise ValueError(f"unknown symbol source {src!r}")
        elif isinstance(src, int):
            if not (0 <= src < self.constellation.order):
                raise ValueError(f"fixed symbol index {src} out of range")
        else:
            seq = tuple(int(s) for s in src)
            if len(seq) != self.n_symbols:
                raise ValueError("explicit symbol sequence must have n_symbols entries")
            if any(not (0 <= s < self.constellation.order) for s in seq):
                raise ValueError("symbol sequence entries out of range")
            object.__setattr__(self, "symbol_source", seq)


@dataclass(frozen=True)
class SerEstimate:
    """Empirical symbol error rate with a Wilson 95% confidence interval."""

    point: float
    ci_lo: float
    ci_hi: float
    n_symbols: int
    n_errors: int


def wilson_interval(errors: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = errors / n
    denom = 1.0 + z**2 / n
    center = (phat + z**2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z**2 / (4 * n**2)) / denom
    lo = 0.0 if errors == 0 else max(0.0, center - half)
    hi = 1.0 if errors == n else min(1.0, center + half)
    return lo, hi


# =============================================================================
# Event kernel
# =============================================================================


@njit(cache=True, nogil=True)
def _pixel_kernel(rates_per_tick, ts_ticks, tau_ticks, reset_each, buf, state,
                  counts, times, record_times):  # pragma: no cover - jitted
    """Advance one pixel through symbols, consuming uniform draws from buf.

    state = [symbol index, position ticks, free-at ticks, recorded times].
    Returns 1 when the buffer is exhausted (caller refills), 0 when done.
    """
    sym = state[0]
    pos = state[1]
    free = state[2]
    n_times = state[3]
    i = 0
    n = rates_per_tick.shape[0]
    nbuf = buf.shape[0]
    while sym < n:
        start = sym * ts_ticks
        end = start + ts_ticks
        if reset_each:
            pos = start
            free = start
        else:
            if pos < start:
                pos = start
            if free > pos:
                pos = free
        rate = rates_per_tick[sym]
        if rate <= 0.0:
            if pos < end:
                pos = end
            sym += 1
            continue
        while pos < end:
            if i >= nbuf:
                state[0] = sym
                state[1] = pos
                state[2] = free
                state[3] = n_times
                return 1
            u = buf[i]
            i += 1
            gap = np.int64(-np.log1p(-u) / rate) + 1
            arrival = pos + gap
            if arrival < end:
                counts[sym] += 1
                if record_times and n_times < times.shape[0]:
                    times[n_times] = arrival
                    n_times += 1
                free = arrival + tau_ticks
                pos = free
            else:
                # Candidate beyond the boundary: discard and restart there
                # under the next symbol's rate (exact by memorylessness).
                pos = end
        sym += 1
    state[0] = sym
    state[1] = pos
    state[2] = free
    state[3] = n_times
    return 0


def _run_pixel(rates_cns: np.ndarray, config: ReceiverConfig, rng: np.random.Generator,
               reset_each_symbol: bool = False,
               record_times: bool = False) -> tuple[np.ndarray, np.ndarray]:
    n = len(rates_cns)
    ts_ticks = round(config.symbol_ns * TICKS_PER_NS)
    tau_ticks = round(config.dead_time_ns * TICKS_PER_NS)
    rates_per_tick = np.asarray(rates_cns, dtype=np.float64) / TICKS_PER_NS
    counts = np.zeros(n, dtype=np.int64)
    if record_times:
        cap = n * max(1, math.ceil(ts_ticks / max(tau_ticks, 1))) + 8
    else:
        cap = 1
    times = np.empty(cap, dtype=np.int64)
    state = np.zeros(4, dtype=np.int64)
    while True:
        buf = rng.random(_UNIFORM_BUFFER)
        rc = _pixel_kernel(rates_per_tick, ts_ticks, tau_ticks, reset_each_symbol,
                           buf, state, counts, times, record_times)
        if rc == 0:
            if record_times and state[3] >= cap:
                raise RuntimeError("registration-time buffer overflowed")
            return counts, times[: state[3]]


def _pixel_rng(seed: int, pixel_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_PIXEL_STREAM, pixel_index))
    return np.random.Generator(np.random.Philox(ss))


def simulate_pixel_symbols(rates_cns, config: ReceiverConfig, seed: int,
                           pixel_index: int = 0, reset_each_symbol: bool = False,
                           record_times: bool = False):
    """Per-symbol counts of one pixel driven by per-symbol rates (c/ns).

    Dead time carries across symbol windows unless ``reset_each_symbol`` is
    set (which models a pixel re-armed at every boundary, the
    interference-free reference case).  With ``record_times`` the absolute
    registration times in ticks are returned as well for replay validation.
    """
    rates = np.asarray(rates_cns, dtype=np.float64)
    if np.any(rates < 0.0):
        raise ValueError("rates must be nonnegative")
    counts, times = _run_pixel(rates, config, _pixel_rng(seed, pixel_index),
                               reset_each_symbol, record_times)
    if record_times:
        return counts, times
    return counts


def _draw_symbols(spec: SimSpec) -> np.ndarray:
    src = spec.symbol_source
    if isinstance(src, str):
        ss = np.random.SeedSequence(entropy=spec.seed, spawn_key=(_SYMBOL_STREAM,))
        gen = np.random.Generator(np.random.Philox(ss))
        return gen.integers(0, spec.constellation.order, spec.n_symbols, dtype=np.int64)
    if isinstance(src, int):
        return np.full(spec.n_symbols, src, dtype=np.int64)
    return np.asarray(src, dtype=np.int64)


def simulate_array_symbols(spec: SimSpec) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the full array: (transmitted level indices, array counts).

    Pixels are independent simulations on substreams derived from the run
    seed and the pixel index; totals are their per-symbol integer sums.
    """
    symbols = _draw_symbols(spec)
    level_rates = np.array(
        [total_rate(spec.config, lv, per_pixel=True) for lv in spec.constellation.levels_cns]
    )
    rates = level_rates[symbols]
    totals = np.zeros(spec.n_symbols, dtype=np.int64)
    for pixel in range(spec.config.array_scale):
        counts, _ = _run_pixel(rates, spec.config, _pixel_rng(spec.seed, pixel))
        totals += counts
    return symbols, totals


# =============================================================================
# Empirical statistics
# =============================================================================


def empirical_pmf(spec: SimSpec, target_symbol: int, k_max: int | None = None) -> CountPmf:
    """Histogram PMF of array counts over post-warmup occurrences of one
    transmitted level."""
    if not (0 <= target_symbol < spec.constellation.order):
        raise ValueError(f"target_symbol {target_symbol} out of range")
    symbols, totals = simulate_array_symbols(spec)
    mask = symbols[spec.warmup_symbols:] == target_symbol
    selected = totals[spec.warmup_symbols:][mask]
    if len(selected) == 0:
        raise ValueError(f"no post-warmup occurrences of symbol {target_symbol}")
    support = max_counts(spec.config) if k_max is None else k_max
    hist = np.bincount(selected, minlength=support + 1)
    return CountPmf(probs=hist / hist.sum(), k_max=support, model_tag=ModelTag.EMPIRICAL)


def empirical_ser(spec: SimSpec, detector) -> SerEstimate:
    """Fraction of post-warmup symbols misdecided by a detector.

    Requires the uniform random symbol source (equally likely levels); the
    detector is any object with decide(counts) -> level indices.
    """
    if spec.symbol_source != "random":
        raise ValueError("empirical SER requires the uniform random symbol source")
    symbols, totals = simulate_array_symbols(spec)
    sent = symbols[spec.warmup_symbols:]
    decided = detector.decide(totals[spec.warmup_symbols:])
    n = len(sent)
    errors = int(np.count_nonzero(decided != sent))
    lo, hi = wilson_interval(errors, n)
    return SerEstimate(point=errors / n, ci_lo=lo, ci_hi=hi, n_symbols=n, n_errors=errors)
