"""The ``lab`` command line: run named experiments and convergence sweeps.

Usage:  lab <experiment> [--config file.json] [--set key=value]...
            [--out dir] [--seed n] [--sweep-levels k] [shortcut flags]

Parameter precedence: experiment defaults, then values from --config, then
--set pairs in order, then the explicit shortcut flags (--paths, --dt,
--delta, ...).  The default output directory comes from $LAB_OUT_DIR.
Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import NumericalError, ValidationError
from .experiments import (ENV_OUT_DIR, DEFAULT_SEED, ExperimentConfig,
                          convergence_sweep, registry, run_experiment)

# shortcut flag -> parameter key
_SHORTCUTS = {
    "paths": "paths",
    "dt": "dt",
    "example": "example",
    "delta": "delta",
    "cap_K": "K",
    "grid": "n",
    "mu_grid": "mu_list",
    "M": "M",
    "p": "p",
    "branch": "branch",
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if "," in text:
            return [_parse_value(t) for t in text.split(",") if t != ""]
        return text


def build_parser() -> argparse.ArgumentParser:
    names = ", ".join(sorted(registry()))
    ap = argparse.ArgumentParser(
        prog="lab",
        description="Run a registered experiment. Available: " + names,
        epilog=f"Default output directory: $${ENV_OUT_DIR} or ./lab_out.")
    ap.add_argument("experiment", help="registered experiment name")
    ap.add_argument("--config", help="JSON file with a parameter map")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="override one parameter")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--sweep-levels", type=int, default=0,
                    help="run a convergence sweep with this many levels")
    ap.add_argument("--paths", type=int, help="Monte Carlo path count")
    ap.add_argument("--dt", type=float, help="Monte Carlo time step")
    ap.add_argument("--example", help="occupation example name")
    ap.add_argument("--delta", type=float, help="ellipticity constant")
    ap.add_argument("--cap-K", dest="cap_K", type=float,
                    help="lower-order bound K")
    ap.add_argument("--grid", type=int, help="cells across the diameter")
    ap.add_argument("--mu-grid", dest="mu_grid",
                    help="comma-separated spectral parameters")
    ap.add_argument("--M", type=float, help="drift magnitude")
    ap.add_argument("--p", type=float, help="integrability exponent")
    ap.add_argument("--branch", choices=["elliptic", "parabolic"],
                    help="resolvent branch")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    params = {}
    try:
        if args.config:
            with open(args.config) as fh:
                loaded = json.load(fh)
            if not isinstance(loaded, dict):
                raise ValidationError("config file must hold a JSON object")
            params.update(loaded)
        for pair in args.overrides:
            if "=" not in pair:
                raise ValidationError(f"--set needs KEY=VALUE, got {pair!r}")
            key, _, val = pair.partition("=")
            params[key.strip()] = _parse_value(val.strip())
        for flag, key in _SHORTCUTS.items():
            val = getattr(args, flag, None)
            if val is not None:
                params[key] = _parse_value(val) if isinstance(val, str) else val
        seed = args.seed if args.seed is not None else \
            params.pop("seed", DEFAULT_SEED)
        config = ExperimentConfig(experiment=args.experiment, params=params,
                                  seed=seed, out_dir=args.out)
        if args.sweep_levels:
            summary = convergence_sweep(config, args.sweep_levels)
        else:
            summary = run_experiment(config)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(summary.get("summary", summary), indent=2,
                     sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
