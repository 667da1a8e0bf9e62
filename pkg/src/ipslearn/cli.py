"""Command-line surface.

Subcommands: simulate, estimate, sweep, surface, diagnose, validate.
Exit codes: 0 success, 1 runtime failure, 2 validation failure.  Errors are
emitted as one JSON object on stderr so callers can parse them.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .batch import batch_seeds, draw_initial_thetas
from .config import ConfigError, load_config
from .diagnostics import clt_rescaled_moments, coupling_distance
from .models import MODEL_ZOO, make_model
from .rng import InvalidConfiguration
from .runner import (
    base_metadata,
    build_setups,
    run_experiment,
    run_surface,
    run_sweep,
    write_csv,
    write_sidecar,
)
from .sde import MomentTracker, run_trajectory
from .estimators import validate_schedule


def _error(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _add_common(p):
    p.add_argument("--config", required=True, help="config path or bundled name")
    p.add_argument("--seed", type=int, default=None, help="override base_seed")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--replicates", type=int, default=None, help="override replicate count")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="ipslearn",
        description="Simulate interacting particle systems and run online "
        "parameter estimators against the observation stream.",
    )
    ap.add_argument("--list-models", action="store_true", help="print the model zoo and exit")
    sub = ap.add_subparsers(dest="command")
    for name, doc in [
        ("simulate", "integrate trajectories and dump the state stream"),
        ("estimate", "run the configured online estimators"),
        ("sweep", "error sweep over the particle counts in config.sweep"),
        ("surface", "time-averaged contrast over the config's parameter grid"),
        ("diagnose", "moment tracking / coupling distance / rescaled-error moments"),
        ("validate", "check a config and its learning-rate schedules"),
    ]:
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name == "diagnose":
            p.add_argument("--mode", choices=["moments", "coupling", "clt"], default="moments")
            p.add_argument("--n-small", type=int, nargs="*", default=[5, 10, 20])
            p.add_argument("--n-big", type=int, default=500)
    return ap


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config.raw["base_seed"] = args.seed
        config.base_seed = args.seed
    if args.replicates is not None:
        config.raw["replicates"] = args.replicates
        config.replicates = args.replicates
    return config


def _cmd_validate(args):
    config = _load(args)
    report = {"config": "ok", "name": config.name, "schedules": {}}
    for ec in config.estimators:
        sched = validate_schedule(ec.schedule())
        report["schedules"][ec.label] = {
            "mode": sched.mode,
            "convergence_conditions": sched.robbins_monro_ok,
            "rate_conditions": sched.rate_conditions_ok,
            "notes": list(sched.notes),
        }
    print(json.dumps(report, indent=1, sort_keys=True))
    return 0


def _cmd_diagnose(args):
    config = _load(args)
    model = config.make_model()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = base_metadata(config)
    if args.mode == "moments":
        tracker = MomentTracker(config.n_steps)
        run_trajectory(
            model, config.truth, config.n_particles, config.dt, config.n_steps,
            config.base_seed, observers=[tracker], eta_true=config.eta_true,
        )
        rows = []
        for order in tracker.orders:
            series = tracker.series[order][: tracker.n_filled]
            for step, v in enumerate(series):
                rows.append((step, step * config.dt, order, v))
        path = out / "moments.csv"
        write_csv(path, ["step", "time", "order", "value"], rows)
        write_sidecar(path, {**meta, "growth_detected": tracker.growth_detected()})
    elif args.mode == "coupling":
        rows = []
        for n_small in args.n_small:
            series = coupling_distance(
                model, config.truth, n_small, args.n_big, config.dt,
                config.n_steps, config.base_seed, eta_true=config.eta_true,
            )
            for step, v in enumerate(series):
                rows.append((step, step * config.dt, n_small, args.n_big, v))
        path = out / "coupling.csv"
        write_csv(path, ["step", "time", "n_small", "n_big", "mean_sq_distance"], rows)
        write_sidecar(path, meta)
    else:  # clt
        seeds = batch_seeds(config.base_seed, config.replicates)
        theta_inits, eta_uniforms = draw_initial_thetas(
            seeds, config.theta_init_low, config.theta_init_high
        )
        setups = build_setups(config, model, theta_inits, eta_uniforms)
        summary = clt_rescaled_moments(
            model, config.truth, config.n_particles, config.dt, config.n_steps,
            config.replicates, setups[0], config.base_seed, eta_true=config.eta_true,
        )
        free = setups[0].free_mask
        names = [n for k, n in enumerate(model.param_names) if free is None or free[k]]
        rows = [
            (names[k], summary.variance[k], summary.skewness[k],
             summary.excess_kurtosis[k], summary.replicates)
            for k in range(len(names))
        ]
        path = out / "clt.csv"
        write_csv(path, ["param", "variance", "skewness", "excess_kurtosis", "replicates"], rows)
        write_sidecar(path, meta)
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list_models:
        for mid in sorted(MODEL_ZOO):
            m = make_model(mid)
            print(f"{mid}: p={m.p} d={m.d} weighting={m.weighting} "
                  f"params={','.join(m.param_names)}")
        return 0
    if args.command is None:
        ap.print_help()
        return 2
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "diagnose":
            return _cmd_diagnose(args)
        config = _load(args)
        if args.command == "simulate":
            manifest = run_experiment(config, args.out, trajectory_only=True)
        elif args.command == "estimate":
            manifest = run_experiment(config, args.out)
        elif args.command == "sweep":
            manifest = run_sweep(config, args.out)
        elif args.command == "surface":
            manifest = run_surface(config, args.out)
        else:  # pragma: no cover
            return _error("usage", f"unknown command {args.command}", 2)
        print(json.dumps({"manifest": str(Path(args.out) / 'manifest.json'),
                          "artifacts": len(manifest["artifacts"])}))
        return 0
    except (ConfigError, InvalidConfiguration) as e:
        return _error("validation", str(e), 2)
    except Exception as e:  # runtime failures (blowups, IO)
        return _error("runtime", str(e), 1)


if __name__ == "__main__":
    sys.exit(main())
