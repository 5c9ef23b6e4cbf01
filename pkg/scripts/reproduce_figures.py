#!/usr/bin/env python3
"""Drive the CLI across the checked-in presets and collect plot-ready data.

Writes one CSV per experiment into the output directory:

* count-PMF panels (fig5a-fig5d), one file per constellation level;
* SER sweeps (fig6a-fig9b).

Pass --quick to cut the Monte-Carlo symbol count 100x for a fast smoke run.
"""

import argparse
import sys
from pathlib import Path

from spadrx.cli import load_experiment, main as cli_main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

PMF_PRESETS = ["fig5a", "fig5b", "fig5c", "fig5d"]
SWEEP_PRESETS = ["fig6a", "fig6b", "fig7a", "fig7b", "fig8a", "fig8b", "fig9a", "fig9b"]


def run(argv: list[str]) -> None:
    print("spadrx " + " ".join(argv), flush=True)
    rc = cli_main(argv)
    if rc != 0:
        sys.exit(rc)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=str(ROOT / "results"))
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--quick", action="store_true",
                        help="100x fewer Monte-Carlo symbols")
    parser.add_argument("--skip-mc", action="store_true",
                        help="analytic sweep columns only")
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for name in PMF_PRESETS:
        config = CONFIGS / f"{name}.json"
        order = load_experiment(config).constellation().order
        for symbol in range(order):
            argv = ["pmf", "--config", str(config), "--symbol", str(symbol),
                    "--out", str(out_dir / f"{name}_symbol{symbol}.csv")]
            if args.quick:
                argv += ["--trials", "10000"]
            run(argv)

    for name in SWEEP_PRESETS:
        argv = ["ser-sweep", "--config", str(CONFIGS / f"{name}.json"),
                "--workers", str(args.workers),
                "--out", str(out_dir / f"{name}_ser.csv")]
        if args.quick:
            argv += ["--trials", "10000"]
        if args.skip_mc:
            argv += ["--skip-mc"]
        run(argv)

    print(f"wrote results to {out_dir}")


if __name__ == "__main__":
    main()
