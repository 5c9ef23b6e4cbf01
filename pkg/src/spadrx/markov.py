"""High-speed model (integer dead-time ratio >= 1): residual-dead-time
densities, trigger probabilities, the pixel-state Markov chain, and the
array-level binomial count PMF.

When the dead time spans ``xi`` whole symbols a pixel registers at most one
count per symbol, and the residual dead time carried into a symbol evolves by
an integral transition kernel.  The kernel is mass-preserving and its iterates
converge numerically by the fifth step; the sixth iterate in closed form is
used as the steady-state density, and its zero-residual atom gives the
steady-state trigger probability of a busy pixel.  Grouping symbols in blocks
of ``xi`` turns pixel availability into a ``(xi+1)``-state Markov chain with a
closed-form stationary vector, from which the probability that a pixel is
available for an arbitrary symbol follows.  Array counts are then binomial:
pixels are available independently and each available pixel triggers
independently.

The closed-form sixth iterate and its atom were re-derived from the
transition kernel (the kernel preserves total mass, which pins every
coefficient); see the package tests for the symbolic and numerical
cross-checks against direct iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import binom

from .core import (
    CountPmf,
    ModelDomainError,
    ModelTag,
    PamConstellation,
    ReceiverConfig,
    Regime,
    classify_regime,
    dead_time_ratio,
    total_rate,
)

__all__ = [
    "DensityWithAtom",
    "MarkovParams",
    "SteadyState",
    "DEFAULT_GRID_POINTS",
    "isi_pdf_first",
    "isi_pdf_iterate",
    "isi_pdf_steady_closed",
    "trigger_prob_no_isi",
    "trigger_prob_isi",
    "trigger_prob_blended",
    "constellation_trigger_averages",
    "markov_params_for",
    "transition_matrix",
    "steady_state_closed",
    "active_prob",
    "pmf_array_high",
]

# 4096 uniform points keep the trapezoidal error of the smooth transition
# kernel below ~1e-4 in L1 for rate*T_s up to 5; the atom is tracked exactly
# and never smeared onto the grid.
DEFAULT_GRID_POINTS = 4096

_COMPLEMENT_TOL = 1e-12
_MASS_TOL = 1e-6


@dataclass(frozen=True)
class DensityWithAtom:
    """Residual-dead-time law: density on a uniform grid over [0, T_s] plus a
    discrete atom at zero (no carry-over)."""

    grid: np.ndarray
    density: np.ndarray
    atom: float

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float64).copy()
        density = np.asarray(self.density, dtype=np.float64).copy()
        grid.flags.writeable = False
        density.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)
        if grid.ndim != 1 or grid.shape != density.shape or len(grid) < 2:
            raise ValueError("grid and density must be matching 1-D arrays")
        steps = np.diff(grid)
        if grid[0] != 0.0 or np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("grid must be uniform and start at 0")
        if np.any(density < 0.0) or not (0.0 <= self.atom <= 1.0):
            raise ValueError("density must be nonnegative and atom a probability")
        mass = self.total_mass()
        if abs(mass - 1.0) > _MASS_TOL:
            raise ValueError(f"density+atom mass is {mass!r}, outside 1 +/- {_MASS_TOL}")

    @property
    def symbol_ns(self) -> float:
        return float(self.grid[-1])

    def total_mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid)) + self.atom


@dataclass(frozen=True)
class MarkovParams:
    """Chain parameters: integer dead-time ratio and the two trigger
    probability pairs (with residual interference: p1_tilde/p0_tilde;
    interference-free: p1/p0), constellation-averaged for PAM."""

    rate_cns: float
    symbol_ns: float
    xi: int
    p1_tilde: float
    p0_tilde: float
    p1: float
    p0: float

    def __post_init__(self) -> None:
        if self.xi < 1 or self.xi != int(self.xi):
            raise ValueError(f"xi must be a positive integer, got {self.xi}")
        for name, v in (("p1_tilde", self.p1_tilde), ("p0_tilde", self.p0_tilde),
                        ("p1", self.p1), ("p0", self.p0)):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be a probability, got {v}")
        if abs(self.p1_tilde + self.p0_tilde - 1.0) > _COMPLEMENT_TOL:
            raise ValueError("p1_tilde and p0_tilde must be complementary")
        if abs(self.p1 + self.p0 - 1.0) > _COMPLEMENT_TOL:
            raise ValueError("p1 and p0 must be complementary")
        if self.rate_cns < 0.0 or self.symbol_ns <= 0.0:
            raise ValueError("rate_cns must be nonnegative and symbol_ns positive")


@dataclass(frozen=True)
class SteadyState:
    """Stationary group-state probabilities and the derived probability that
    a pixel is available for an arbitrary symbol."""

    gamma: tuple[float, ...]
    active_prob: float

    def __post_init__(self) -> None:
        if abs(math.fsum(self.gamma) - 1.0) > _COMPLEMENT_TOL:
            raise ValueError("gamma must sum to 1")
        if not all(0.0 <= g <= 1.0 for g in self.gamma):
            raise ValueError("gamma entries must be probabilities")
        if not (0.0 <= self.active_prob <= 1.0):
            raise ValueError("active_prob must be a probability")


# =============================================================================
# Residual-dead-time densities
# =============================================================================


def isi_pdf_first(rate_cns: float, symbol_ns: float,
                  n_points: int = DEFAULT_GRID_POINTS) -> DensityWithAtom:
    """Residual law after the first symbol: exponential density plus the
    no-detection atom ``exp(-lam*T_s)``."""
    if rate_cns <= 0.0:
        raise ValueError("rate_cns must be positive")
    grid = np.linspace(0.0, symbol_ns, n_points)
    density = rate_cns * np.exp(-rate_cns * grid)
    return DensityWithAtom(grid=grid, density=density, atom=math.exp(-rate_cns * symbol_ns))


def isi_pdf_iterate(prev: DensityWithAtom, rate_cns: float) -> DensityWithAtom:
    """One application of the symbol-to-symbol residual transition.

    Given residual t' the next residual has density ``lam*exp(-lam(t-t'))``
    on [t', T_s] and an atom ``exp(-lam(T_s-t'))``; the previous atom couples
    into both parts.  Discretized with trapezoidal quadrature on the shared
    grid, which preserves total mass up to quadrature error.
    """
    lam = rate_cns
    if lam <= 0.0:
        raise ValueError("rate_cns must be positive")
    grid = prev.grid
    ts = prev.symbol_ns
    weighted = np.exp(lam * grid) * prev.density
    cum = cumulative_trapezoid(weighted, grid, initial=0.0)
    density = lam * np.exp(-lam * grid) * (cum + prev.atom)
    atom = float(np.trapezoid(np.exp(-lam * (ts - grid)) * prev.density, grid))
    atom += prev.atom * math.exp(-lam * ts)
    return DensityWithAtom(grid=grid, density=density, atom=atom)


def _steady_atom(x: float) -> float:
    """Zero-residual probability of the sixth iterate, as a function of
    x = lam*T_s."""
    if x == 0.0:
        return 1.0
    e = math.exp(-x)
    brace = (
        x**5 / 120.0
        + (2.0 / 3.0) * x**4 * e
        + 4.5 * x**3 * e**2
        + 8.0 * x**2 * e**3
        + 5.0 * x * e**4
        + e**5
    )
    return e * brace


def isi_pdf_steady_closed(rate_cns: float, symbol_ns: float,
                          n_points: int = DEFAULT_GRID_POINTS) -> DensityWithAtom:
    """Sixth iterate of the residual transition in closed form, used as the
    steady-state residual law (iteration has numerically converged by then).
    """
    lam = rate_cns
    if lam <= 0.0:
        raise ValueError("rate_cns must be positive")
    grid = np.linspace(0.0, symbol_ns, n_points)
    x = lam * grid
    bigx = lam * symbol_ns
    e = math.exp(-bigx)
    poly = (
        x**5 / 120.0
        + e * (x + bigx) ** 4 / 24.0
        + e**2 * (x**3 / 6.0 + x**2 * bigx + 2.0 * x * bigx**2 + (4.0 / 3.0) * bigx**3)
        + e**3 * (x**2 / 2.0 + 3.0 * x * bigx + 4.5 * bigx**2)
        + e**4 * (x + 4.0 * bigx)
        + e**5
    )
    density = lam * np.exp(-x) * poly
    return DensityWithAtom(grid=grid, density=density, atom=_steady_atom(bigx))


# =============================================================================
# Trigger probabilities
# =============================================================================


def trigger_prob_no_isi(rate_cns: float, symbol_ns: float) -> float:
    """P{at least one count in a symbol} for a fully recovered pixel."""
    if rate_cns < 0.0:
        raise ValueError("rate_cns must be nonnegative")
    return -math.expm1(-rate_cns * symbol_ns)


def trigger_prob_isi(rate_cns: float, symbol_ns: float) -> float:
    """Steady-state trigger probability of a pixel subject to residual dead
    time: one minus the zero-residual atom of the steady-state law."""
    if rate_cns < 0.0:
        raise ValueError("rate_cns must be nonnegative")
    return 1.0 - _steady_atom(rate_cns * symbol_ns)


def trigger_prob_blended(rate_cns: float, symbol_ns: float) -> float:
    """Even blend of the residual-affected and fresh trigger probabilities."""
    return 0.5 * (trigger_prob_isi(rate_cns, symbol_ns) + trigger_prob_no_isi(rate_cns, symbol_ns))


def constellation_trigger_averages(constellation: PamConstellation,
                                   config: ReceiverConfig) -> tuple[float, float]:
    """Constellation-averaged trigger probabilities (blended, fresh).

    Per-pixel rates: the optical flux divides across pixels, dark counts are
    per pixel.  Averaging across the M equally likely levels gives the pair
    (p1_tilde, p1) driving the availability chain.
    """
    rates = [total_rate(config, level, per_pixel=True) for level in constellation.levels_cns]
    ts = config.symbol_ns
    p1_tilde = math.fsum(trigger_prob_blended(r, ts) for r in rates) / len(rates)
    p1 = math.fsum(trigger_prob_no_isi(r, ts) for r in rates) / len(rates)
    return p1_tilde, p1


def markov_params_for(config: ReceiverConfig, constellation: PamConstellation) -> MarkovParams:
    """Bundle the chain parameters for a high-speed receiver/constellation."""
    if classify_regime(config) is not Regime.HIGH:
        raise ModelDomainError(
            f"Markov model requires an integer dead-time ratio >= 1, got "
            f"{dead_time_ratio(config)!r}"
        )
    xi = round(dead_time_ratio(config))
    p1_tilde, p1 = constellation_trigger_averages(constellation, config)
    rates = [total_rate(config, level, per_pixel=True) for level in constellation.levels_cns]
    return MarkovParams(
        rate_cns=math.fsum(rates) / len(rates),
        symbol_ns=config.symbol_ns,
        xi=xi,
        p1_tilde=p1_tilde,
        p0_tilde=1.0 - p1_tilde,
        p1=p1,
        p0=1.0 - p1,
    )


# =============================================================================
# Availability chain
# =============================================================================


def transition_matrix(params: MarkovParams) -> np.ndarray:
    """Row-stochastic transition matrix of the (xi+1)-state group chain.

    State n <= xi: the group's detection fell on its n-th symbol (the pixel
    is blocked through symbol n-1 of the next group, partially available at
    symbol n, fully available after).  State xi+1: no detection in the group.
    """
    xi = params.xi
    pt1, pt0, p1, p0 = params.p1_tilde, params.p0_tilde, params.p1, params.p0
    pmat = np.zeros((xi + 1, xi + 1))
    for n in range(1, xi + 1):
        pmat[n - 1, n - 1] = pt1
        for m in range(n + 1, xi + 1):
            pmat[n - 1, m - 1] = pt0 * p1 * p0 ** (m - n - 1)
        pmat[n - 1, xi] = pt0 * p0 ** (xi - n)
    for m in range(1, xi + 1):
        pmat[xi, m - 1] = p1 * p0 ** (m - 1)
    pmat[xi, xi] = p0**xi
    return pmat


def steady_state_closed(params: MarkovParams) -> SteadyState:
    """Closed-form stationary distribution of the group chain.

    gamma(1) = ... = gamma(xi) = p1/(xi*p1 + p0_tilde) and
    gamma(xi+1) = p0_tilde/(xi*p1 + p0_tilde).
    """
    denom = params.xi * params.p1 + params.p0_tilde
    if denom == 0.0:
        raise ModelDomainError(
            "degenerate chain: p1 and p0_tilde both zero (no events and no idle)"
        )
    g = params.p1 / denom
    gamma = (g,) * params.xi + (params.p0_tilde / denom,)
    return SteadyState(gamma=gamma, active_prob=active_prob(params))


def active_prob(params: MarkovParams) -> float:
    """Steady-state probability that a pixel is available for an arbitrary
    symbol."""
    xi, p1, pt0 = params.xi, params.p1, params.p0_tilde
    denom = xi * p1 + pt0
    if denom == 0.0:
        raise ModelDomainError(
            "degenerate chain: p1 and p0_tilde both zero (no events and no idle)"
        )
    num = xi * (xi + 3) * p1**2 + (3 * xi + 5) * p1 * pt0 + 4 * pt0**2
    value = num / (4.0 * denom**2)
    # Algebraically <= 1 (equality throughout at xi = 1); tolerate rounding.
    if value > 1.0 + 1e-9:
        raise FloatingPointError(f"active probability {value} exceeds 1 beyond rounding")
    return min(1.0, value)


# =============================================================================
# Array-level PMF
# =============================================================================


def pmf_array_high(config: ReceiverConfig, symbol_rate_cns: float,
                   params: MarkovParams) -> CountPmf:
    """Array count PMF for one symbol in the high-speed regime.

    Pixels are available independently with the constellation-averaged
    active probability, and an available pixel triggers with the
    symbol-specific blended probability; the resulting mixture collapses to
    a single binomial with success probability equal to their product.
    """
    if classify_regime(config) is not Regime.HIGH:
        raise ModelDomainError(
            f"high-speed PMF requires an integer dead-time ratio >= 1, got "
            f"{dead_time_ratio(config)!r}"
        )
    if symbol_rate_cns < 0.0:
        raise ValueError("symbol_rate_cns must be nonnegative")
    n_a = config.array_scale
    p_hit = trigger_prob_blended(symbol_rate_cns, config.symbol_ns) * active_prob(params)
    probs = binom.pmf(np.arange(n_a + 1), n_a, p_hit)
    return CountPmf(probs=probs, k_max=n_a, model_tag=ModelTag.MARKOV_ARRAY)
