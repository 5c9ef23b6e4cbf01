"""Command-line front end: experiment configs, analytic/Monte-Carlo dispatch,
parameter sweeps, and machine-readable outputs.

Configs are single self-describing JSON documents with units embedded in the
field names (see ``configs/`` for the checked-in presets).  Curve outputs are
CSV with ``#``-prefixed metadata trailer lines; single-shot outputs are JSON
carrying a ``schema_version`` field.  Floating-point values are serialized
with round-trip-exact formatting, and sweep outputs are byte-identical for a
fixed seed regardless of the worker count.

Exit codes: 0 success, 2 configuration/file errors, 3 model-domain errors
(unsupported dead-time ratio, degenerate constellations).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DEFAULT_PAM4_FRACTIONS,
    ModelDomainError,
    PamConstellation,
    ReceiverConfig,
    Regime,
    classify_regime,
    dead_time_ratio,
    total_rate,
    total_variation_distance,
)
from .detection import (
    MLDetector,
    ThresholdDetector,
    build_symbol_model,
    ser_ml,
    ser_threshold,
    threshold_high,
    threshold_low,
    thresholds_for,
)
from .markov import markov_params_for, active_prob, trigger_prob_blended
from .montecarlo import SerEstimate, SimSpec, empirical_pmf, simulate_array_symbols, wilson_interval

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "load_experiment",
    "run_ser_sweep",
    "read_sweep_csv",
    "main",
]

SCHEMA_VERSION = 1

SWEEP_AXES = (
    "signal_rate",
    "background_rate",
    "array_scale",
    "dead_time_ratio_fixed_Ts",
    "dead_time_ratio_fixed_tau",
)

_POINT_STREAM = 2  # spawn-key namespace for per-sweep-point seeds


class ConfigError(ValueError):
    """Configuration file missing, unparsable, or schema-invalid."""


# =============================================================================
# Experiment configuration
# =============================================================================


@dataclass(frozen=True)
class McSettings:
    n_symbols: int = 100_000
    warmup_symbols: int = 16
    seed: int = 1
    symbol_source: str | int | tuple[int, ...] = "random"


@dataclass(frozen=True)
class SweepSettings:
    axis: str
    grid: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {SWEEP_AXES}")
        grid = tuple(float(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        if len(grid) < 1:
            raise ConfigError("sweep grid must be nonempty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("sweep grid must be strictly increasing")


@dataclass(frozen=True)
class ExperimentConfig:
    receiver: ReceiverConfig
    levels_cns: tuple[float, ...] | None = None
    peak_rate_cns: float | None = None
    level_fractions: tuple[float, ...] | None = None
    sweep: SweepSettings | None = None
    mc: McSettings = McSettings()
    notes: str = ""

    def constellation(self, peak_rate_cns: float | None = None) -> PamConstellation:
        """Constellation at a given peak signal rate (sweep point) or as
        configured."""
        if peak_rate_cns is not None:
            if self.level_fractions is None:
                raise ConfigError(
                    "signal-rate sweeps need a fractional level profile "
                    "(constellation.level_fractions)"
                )
            return PamConstellation.from_fractions(peak_rate_cns, self.level_fractions)
        if self.levels_cns is not None:
            return PamConstellation(self.levels_cns)
        if self.peak_rate_cns is None:
            raise ConfigError("constellation needs levels_cns or peak_rate_cns")
        fractions = self.level_fractions or DEFAULT_PAM4_FRACTIONS
        return PamConstellation.from_fractions(self.peak_rate_cns, fractions)


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"missing {context} field {key!r}")
    return mapping[key]


def parse_experiment(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    rx = _require(doc, "receiver", "top-level")
    if not isinstance(rx, dict):
        raise ConfigError("receiver section must be a JSON object")
    try:
        receiver = ReceiverConfig(
            pde=float(_require(rx, "pde", "receiver")),
            array_scale=int(_require(rx, "array_scale", "receiver")),
            dead_time_ns=float(_require(rx, "dead_time_ns", "receiver")),
            symbol_ns=float(_require(rx, "symbol_ns", "receiver")),
            background_rate_cns=float(rx.get("background_rate_cns", 0.0)),
            dark_rate_cns=float(rx.get("dark_rate_cns", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid receiver parameters: {exc}") from exc

    con = _require(doc, "constellation", "top-level")
    if not isinstance(con, dict):
        raise ConfigError("constellation section must be a JSON object")
    levels = con.get("levels_cns")
    fractions = con.get("level_fractions")
    peak = con.get("peak_rate_cns")
    if levels is None and peak is None:
        raise ConfigError("constellation needs levels_cns or peak_rate_cns")
    if levels is not None and (peak is not None or fractions is not None):
        raise ConfigError("give either explicit levels_cns or a peak/fractions profile")
    order = con.get("order")
    if order is not None:
        n = len(levels) if levels is not None else len(fractions or DEFAULT_PAM4_FRACTIONS)
        if int(order) != n:
            raise ConfigError(f"constellation order {order} does not match {n} levels")

    sweep = None
    if "sweep" in doc and doc["sweep"] is not None:
        sw = doc["sweep"]
        if not isinstance(sw, dict):
            raise ConfigError("sweep section must be a JSON object")
        sweep = SweepSettings(axis=_require(sw, "axis", "sweep"), grid=_require(sw, "grid", "sweep"))

    mc_doc = doc.get("mc", {})
    if not isinstance(mc_doc, dict):
        raise ConfigError("mc section must be a JSON object")
    source = mc_doc.get("symbol_source", "random")
    if isinstance(source, list):
        source = tuple(int(s) for s in source)
    mc = McSettings(
        n_symbols=int(mc_doc.get("n_symbols", McSettings.n_symbols)),
        warmup_symbols=int(mc_doc.get("warmup_symbols", McSettings.warmup_symbols)),
        seed=int(mc_doc.get("seed", McSettings.seed)),
        symbol_source=source,
    )

    cfg = ExperimentConfig(
        receiver=receiver,
        levels_cns=tuple(float(x) for x in levels) if levels is not None else None,
        peak_rate_cns=float(peak) if peak is not None else None,
        level_fractions=tuple(float(x) for x in fractions) if fractions is not None else None,
        sweep=sweep,
        mc=mc,
        notes=str(doc.get("notes", "")),
    )
    try:
        cfg.constellation()  # validate the non-sweep constellation eagerly
    except ConfigError:
        if sweep is None or sweep.axis != "signal_rate":
            raise
    except ValueError as exc:
        raise ConfigError(f"invalid constellation: {exc}") from exc
    return cfg


def load_experiment(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    return parse_experiment(doc)


# =============================================================================
# Sweep evaluation
# =============================================================================


@dataclass(frozen=True)
class ResultRow:
    sweep_value: float
    regime: str
    ser_ml_analytic: float
    ser_threshold_analytic: float
    thresholds: tuple[float, ...]
    pmf_means: tuple[float, ...]
    pmf_variances: tuple[float, ...]
    pmf_norm_deficits: tuple[float, ...]
    ser_ml_empirical: SerEstimate | None
    ser_threshold_empirical: SerEstimate | None
    wall_time_s: float

    def __post_init__(self) -> None:
        for est in (self.ser_ml_empirical, self.ser_threshold_empirical):
            if est is not None and not (est.ci_lo <= est.point <= est.ci_hi):
                raise ValueError("confidence interval must bracket the point estimate")


def _point_receiver(exp: ExperimentConfig, value: float) -> ReceiverConfig:
    axis = exp.sweep.axis
    rx = exp.receiver
    if axis == "signal_rate":
        return rx
    if axis == "background_rate":
        return dataclasses.replace(rx, background_rate_cns=value)
    if axis == "array_scale":
        if value != int(value):
            raise ConfigError(f"array_scale grid values must be integers, got {value}")
        return dataclasses.replace(rx, array_scale=int(value))
    if axis == "dead_time_ratio_fixed_Ts":
        return dataclasses.replace(rx, dead_time_ns=value * rx.symbol_ns)
    if axis == "dead_time_ratio_fixed_tau":
        return dataclasses.replace(rx, symbol_ns=rx.dead_time_ns / value)
    raise ConfigError(f"unknown sweep axis {axis!r}")


def _point_constellation(exp: ExperimentConfig, value: float) -> PamConstellation:
    if exp.sweep.axis == "signal_rate":
        return exp.constellation(peak_rate_cns=value)
    return exp.constellation()


def _point_seed(base_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(_POINT_STREAM, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def validate_sweep_regimes(exp: ExperimentConfig) -> None:
    """Reject sweeps whose grid contains an unmodeled dead-time ratio."""
    for value in exp.sweep.grid:
        rx = _point_receiver(exp, value)
        if classify_regime(rx) is Regime.UNSUPPORTED:
            raise ModelDomainError(
                f"sweep value {value!r} gives unsupported dead-time ratio "
                f"{dead_time_ratio(rx)!r} (non-integer >= 1)"
            )


def evaluate_point(exp: ExperimentConfig, index: int, value: float,
                   skip_mc: bool, n_symbols: int | None = None,
                   base_seed: int | None = None) -> ResultRow:
    """Analytic model, thresholds, and (optionally) empirical SER at one
    sweep point."""
    started = time.perf_counter()
    rx = _point_receiver(exp, value)
    constellation = _point_constellation(exp, value)
    regime = classify_regime(rx)
    if regime is Regime.UNSUPPORTED:
        raise ModelDomainError(
            f"sweep value {value!r} gives unsupported dead-time ratio "
            f"{dead_time_ratio(rx)!r}"
        )
    model = build_symbol_model(rx, constellation, regime)
    thresholds = thresholds_for(rx, constellation)
    ml_analytic = ser_ml(model)
    th_analytic = ser_threshold(model, thresholds)

    ml_emp = th_emp = None
    if not skip_mc:
        spec = SimSpec(
            config=rx,
            constellation=constellation,
            n_symbols=n_symbols or exp.mc.n_symbols,
            seed=_point_seed(base_seed if base_seed is not None else exp.mc.seed, index),
            warmup_symbols=exp.mc.warmup_symbols,
            symbol_source="random",
        )
        symbols, totals = simulate_array_symbols(spec)
        sent = symbols[spec.warmup_symbols:]
        counts = totals[spec.warmup_symbols:]
        ml_emp = _score(sent, MLDetector(model).decide(counts))
        th_emp = _score(sent, ThresholdDetector(thresholds).decide(counts))

    return ResultRow(
        sweep_value=value,
        regime=regime.value,
        ser_ml_analytic=ml_analytic,
        ser_threshold_analytic=th_analytic,
        thresholds=thresholds.thresholds,
        pmf_means=tuple(p.mean() for p in model.pmfs),
        pmf_variances=tuple(p.variance() for p in model.pmfs),
        pmf_norm_deficits=tuple(p.norm_deficit for p in model.pmfs),
        ser_ml_empirical=ml_emp,
        ser_threshold_empirical=th_emp,
        wall_time_s=time.perf_counter() - started,
    )


def _score(sent: np.ndarray, decided: np.ndarray) -> SerEstimate:
    n = len(sent)
    errors = int(np.count_nonzero(decided != sent))
    lo, hi = wilson_interval(errors, n)
    return SerEstimate(point=errors / n, ci_lo=lo, ci_hi=hi, n_symbols=n, n_errors=errors)


def run_ser_sweep(exp: ExperimentConfig, skip_mc: bool = False, workers: int = 1,
                  n_symbols: int | None = None, base_seed: int | None = None) -> list[ResultRow]:
    """Evaluate every sweep point, in grid order, optionally in parallel."""
    if exp.sweep is None:
        raise ConfigError("this config has no sweep section")
    validate_sweep_regimes(exp)
    points = list(enumerate(exp.sweep.grid))
    if workers <= 1:
        return [evaluate_point(exp, i, v, skip_mc, n_symbols, base_seed) for i, v in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(evaluate_point, exp, i, v, skip_mc, n_symbols, base_seed)
            for i, v in points
        ]
        return [f.result() for f in futures]  # grid order regardless of completion


# =============================================================================
# Serialization
# =============================================================================


def _fmt(x: float) -> str:
    """Round-trip-exact float formatting."""
    return repr(float(x))


def _join(values) -> str:
    return ";".join(_fmt(v) for v in values)


_SWEEP_COLUMNS = (
    "sweep_value,regime,ser_ml_analytic,ser_threshold_analytic,"
    "ser_ml_empirical,ser_ml_ci_lo,ser_ml_ci_hi,"
    "ser_threshold_empirical,ser_threshold_ci_lo,ser_threshold_ci_hi,"
    "thresholds,pmf_means,pmf_variances,pmf_norm_deficits"
)


def write_sweep_csv(rows: list[ResultRow], exp: ExperimentConfig, stream,
                    skip_mc: bool, seed: int) -> None:
    # Wall times deliberately stay out of the file so identical seeds give
    # byte-identical output.
    print(_SWEEP_COLUMNS, file=stream)
    for row in rows:
        emp = []
        for est in (row.ser_ml_empirical, row.ser_threshold_empirical):
            if est is None:
                emp += ["", "", ""]
            else:
                emp += [_fmt(est.point), _fmt(est.ci_lo), _fmt(est.ci_hi)]
        cells = [
            _fmt(row.sweep_value),
            row.regime,
            _fmt(row.ser_ml_analytic),
            _fmt(row.ser_threshold_analytic),
            *emp,
            _join(row.thresholds),
            _join(row.pmf_means),
            _join(row.pmf_variances),
            _join(row.pmf_norm_deficits),
        ]
        print(",".join(cells), file=stream)
    print(f"# schema_version={SCHEMA_VERSION}", file=stream)
    print(f"# axis={exp.sweep.axis}", file=stream)
    print(f"# seed={seed}", file=stream)
    print(f"# skip_mc={str(skip_mc).lower()}", file=stream)


def read_sweep_csv(path: str | Path) -> list[dict]:
    """Parse a sweep CSV back into dicts (floats and float lists)."""
    rows = []
    header = None
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            continue
        cells = line.split(",")
        row = {}
        for name, cell in zip(header, cells):
            if name == "regime":
                row[name] = cell
            elif cell == "":
                row[name] = None
            elif ";" in cell or name in ("thresholds", "pmf_means", "pmf_variances",
                                         "pmf_norm_deficits"):
                row[name] = [float(v) for v in cell.split(";")] if cell else []
            else:
                row[name] = float(cell)
        rows.append(row)
    return rows


# =============================================================================
# Subcommands
# =============================================================================


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline="\n"), True


def cmd_pmf(args) -> int:
    exp = load_experiment(args.config)
    rx = exp.receiver
    constellation = exp.constellation()
    if not (0 <= args.symbol < constellation.order):
        raise ConfigError(
            f"--symbol {args.symbol} out of range for order {constellation.order}"
        )
    regime = classify_regime(rx)
    if regime is Regime.UNSUPPORTED:
        raise ModelDomainError(
            f"dead-time ratio {dead_time_ratio(rx)!r} is non-integer and >= 1"
        )
    model = build_symbol_model(rx, constellation, regime)
    analytic = model.pmfs[args.symbol]

    source: str | int = args.symbol if args.fixed_source else "random"
    spec = SimSpec(
        config=rx,
        constellation=constellation,
        n_symbols=args.trials or exp.mc.n_symbols,
        seed=args.seed if args.seed is not None else exp.mc.seed,
        warmup_symbols=exp.mc.warmup_symbols,
        symbol_source=source,
    )
    empirical = empirical_pmf(spec, args.symbol, k_max=analytic.k_max)
    tvd = total_variation_distance(analytic, empirical)

    stream, close = _open_out(args.out)
    try:
        print("k,analytic,empirical", file=stream)
        for k in range(analytic.k_max + 1):
            print(f"{k},{_fmt(analytic.probs[k])},{_fmt(empirical.probs[k])}", file=stream)
        print(f"# tvd={_fmt(tvd)}", file=stream)
    finally:
        if close:
            stream.close()
    return 0


def cmd_ser_sweep(args) -> int:
    exp = load_experiment(args.config)
    seed = args.seed if args.seed is not None else exp.mc.seed
    rows = run_ser_sweep(exp, skip_mc=args.skip_mc, workers=args.workers,
                         n_symbols=args.trials, base_seed=seed)
    stream, close = _open_out(args.out)
    try:
        write_sweep_csv(rows, exp, stream, skip_mc=args.skip_mc, seed=seed)
    finally:
        if close:
            stream.close()
    for row in rows:
        print(f"point {row.sweep_value}: {row.wall_time_s:.2f} s", file=sys.stderr)
    return 0


def cmd_thresholds(args) -> int:
    exp = load_experiment(args.config)
    rx = exp.receiver
    constellation = exp.constellation()
    regime = classify_regime(rx)
    doc: dict = {"schema_version": SCHEMA_VERSION, "regime": regime.value}
    rates = [total_rate(rx, lv, per_pixel=True) for lv in constellation.levels_cns]
    if regime is Regime.LOW_MEDIUM:
        ths = threshold_low(rx, constellation)
        doc["per_pixel_rates_cns"] = rates
        print(f"regime: {regime.value}")
        for i, t in enumerate(ths.thresholds):
            print(
                f"pair {i + 1}: rate_lo={rates[i]:.6g} rate_hi={rates[i + 1]:.6g} "
                f"threshold={t:.4f}"
            )
    elif regime is Regime.HIGH:
        params = markov_params_for(rx, constellation)
        p_s = active_prob(params)
        p_apr = [trigger_prob_blended(r, rx.symbol_ns) * p_s for r in rates]
        ths = threshold_high(rx, constellation, params)
        doc["active_prob"] = p_s
        doc["p_apr"] = p_apr
        print(f"regime: {regime.value}")
        print(f"active_prob: {p_s:.6g}")
        for i, t in enumerate(ths.thresholds):
            print(
                f"pair {i + 1}: p_apr_lo={p_apr[i]:.6g} p_apr_hi={p_apr[i + 1]:.6g} "
                f"threshold={t:.4f}"
            )
    else:
        raise ModelDomainError(
            f"dead-time ratio {dead_time_ratio(rx)!r} is non-integer and >= 1"
        )
    doc["thresholds"] = list(ths.thresholds)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_simulate(args) -> int:
    exp = load_experiment(args.config)
    spec = SimSpec(
        config=exp.receiver,
        constellation=exp.constellation(),
        n_symbols=args.trials or exp.mc.n_symbols,
        seed=args.seed if args.seed is not None else exp.mc.seed,
        warmup_symbols=exp.mc.warmup_symbols,
        symbol_source=exp.mc.symbol_source,
    )
    symbols, counts = simulate_array_symbols(spec)
    stream, close = _open_out(args.out)
    try:
        print("symbol,count", file=stream)
        for s, c in zip(symbols, counts):
            print(f"{s},{c}", file=stream)
        print(f"# schema_version={SCHEMA_VERSION}", file=stream)
        print(f"# seed={spec.seed}", file=stream)
    finally:
        if close:
            stream.close()
    return 0


# =============================================================================
# Entry point
# =============================================================================


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config JSON path")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--trials", type=int, default=None,
                        help="override the Monte-Carlo symbol count")
    parser.add_argument("--out", default=None, help="output path (default stdout)")
    parser.add_argument("--workers", type=int, default=1, help="worker pool size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spadrx",
        description="SPAD-array PAM receiver modeling and simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_pmf = sub.add_parser("pmf", help="analytic vs empirical count PMF for one level")
    _add_common(p_pmf)
    p_pmf.add_argument("--symbol", type=int, required=True, help="level index (0-based)")
    p_pmf.add_argument("--fixed-source", action="store_true",
                       help="transmit only the target level instead of random levels")
    p_pmf.set_defaults(func=cmd_pmf)

    p_sweep = sub.add_parser("ser-sweep", help="SER across a parameter sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--skip-mc", action="store_true",
                         help="analytic columns only, no Monte-Carlo")
    p_sweep.set_defaults(func=cmd_ser_sweep)

    p_th = sub.add_parser("thresholds", help="closed-form detection thresholds")
    _add_common(p_th)
    p_th.set_defaults(func=cmd_thresholds)

    p_sim = sub.add_parser("simulate", help="raw (symbol, count) trace")
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, OSError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
