"""Experiment execution and artifact writing.

Every CSV gets a JSON metadata sidecar sufficient to re-run it exactly
(config hash, seed ladder, generator name, code version); a manifest lists
each artifact with its content hash.  Outputs contain no timestamps or
absolute paths, so rerunning a config reproduces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .batch import EstimatorSetup, batch_seeds, draw_initial_thetas, run_batch
from .config import ExperimentConfig
from .diagnostics import l2_error_sweep, summarize_replicates
from .estimators import RmsPropConfig
from .models import Box, weight_matrix
from .objective import surface_scan
from .rng import GENERATOR_NAME, replicate_seed
from .sde import TrajectoryRecorder, run_trajectory


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_sidecar(csv_path: Path, meta: dict):
    side = csv_path.with_name(csv_path.name + ".meta.json")
    with open(side, "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return side


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def base_metadata(config: ExperimentConfig) -> dict:
    return {
        "config_name": config.name,
        "config_hash": config.content_hash(),
        "model_id": config.model_id,
        "dt": config.dt,
        "generator": GENERATOR_NAME,
        "base_seed": config.base_seed,
        "seed_ladder": "replicate r uses base_seed + r; particle i uses stream_id i",
        "truth": config.raw.get("truth"),
        "code_version": __version__,
    }


def build_setups(config: ExperimentConfig, model, theta_inits, eta_uniforms):
    """Materialise estimator setups from the config and shared init draws.

    All drift estimators of a replicate start from the same uniform-box
    sample; coordinates outside an estimator's free set start at (and stay
    at) the truth value at time zero.
    """
    theta_start = config.truth.at(0.0)
    setups = []
    for ec in config.estimators:
        if ec.kind == "diffusion":
            lo, hi = config.eta_init_low, config.eta_init_high
            init = lo + eta_uniforms * (hi - lo)
            bounds = Box(np.asarray(ec.bounds_lower), np.asarray(ec.bounds_upper)) \
                if ec.bounds_lower is not None else model.eta_bounds
            free_mask = None
        else:
            init = theta_inits.copy()
            if ec.free_params is not None:
                fixed = [i for i in range(model.p) if i not in ec.free_params]
                init[:, fixed] = theta_start[fixed]
            bounds = Box(np.asarray(ec.bounds_lower), np.asarray(ec.bounds_upper)) \
                if ec.bounds_lower is not None else model.theta_bounds
            free_mask = None
            if ec.free_params is not None:
                free_mask = np.zeros(model.p, dtype=bool)
                free_mask[list(ec.free_params)] = True
        weight = None
        if ec.weighting is not None and ec.weighting != model.weighting:
            weight = weight_matrix(model, mode=ec.weighting)
        setups.append(
            EstimatorSetup(
                kind=ec.kind,
                label=ec.label,
                particle=ec.particle,
                triplet=ec.triplet,
                pi=ec.pi,
                schedule=ec.schedule(),
                free_mask=free_mask,
                bounds=bounds,
                rmsprop=RmsPropConfig(ec.rms_rho, ec.rms_eps) if ec.rmsprop else None,
                weight=weight,
                theta_init=init,
            )
        )
    return setups


def _param_names(model, kind):
    return model.eta_names if kind == "diffusion" else model.param_names


def run_experiment(config: ExperimentConfig, out_dir, trajectory_only: bool = False) -> dict:
    """Execute a config end to end and return the output manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.make_model()
    seeds = batch_seeds(config.base_seed, config.replicates)
    meta = base_metadata(config)
    artifacts = []

    if not trajectory_only:
        theta_inits, eta_uniforms = draw_initial_thetas(
            seeds, config.theta_init_low, config.theta_init_high
        )
        setups = build_setups(config, model, theta_inits, eta_uniforms)
        result = run_batch(
            model,
            config.truth,
            config.n_particles,
            config.dt,
            config.n_steps,
            seeds,
            setups,
            eta_true=config.eta_true,
            record_every=config.record_every,
            tail_fraction=config.tail_fraction,
        )
        if np.all(result.excluded):
            raise RuntimeError("every replicate blew up; nothing to report")
        artifacts += _write_estimates(config, model, result, out, meta)
        artifacts += _write_summary(config, model, result, out, meta)

    if trajectory_only or config.dump_trajectory:
        artifacts += _write_trajectories(config, model, seeds, out, meta)

    manifest = {
        "config_name": config.name,
        "config_hash": config.content_hash(),
        "code_version": __version__,
        "artifacts": [
            {"name": p.name, "sha256": _sha256(p)} for p in sorted(artifacts)
        ],
    }
    man_path = out / "manifest.json"
    with open(man_path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest


def _write_estimates(config, model, result, out, meta):
    paths = []
    for r in range(config.replicates):
        rows = []
        for track in result.tracks:
            names = _param_names(model, track.kind)
            for si, step in enumerate(track.record_steps):
                for pi_, pname in enumerate(names):
                    rows.append(
                        (
                            int(step),
                            track.record_times[si],
                            track.label,
                            pname,
                            track.theta_path[si, r, pi_],
                            bool(track.frozen_path[si, r]),
                        )
                    )
        path = out / f"estimates_r{r:03d}.csv"
        write_csv(path, ["step", "time", "estimator_id", "param", "value", "frozen"], rows)
        side = write_sidecar(path, {**meta, "replicate": r,
                                    "seed": replicate_seed(config.base_seed, r),
                                    "record_every": config.record_every})
        paths += [path, side]
    return paths


def _write_summary(config, model, result, out, meta):
    theta0 = config.truth.at((config.n_steps - 1) * config.dt)
    rows = []
    for track in result.tracks:
        names = _param_names(model, track.kind)
        true_vals = np.array([config.eta_true]) if track.kind == "diffusion" else theta0
        summaries = summarize_replicates(track, true_vals, result.excluded, result.blowup_step)
        for s in summaries:
            for pi_, pname in enumerate(names):
                rows.append(
                    (
                        s.replicate_id,
                        s.estimator,
                        pname,
                        s.final_theta[pi_],
                        s.tail_mean[pi_],
                        s.sq_error_truth[pi_],
                        s.sq_error_pooled[pi_],
                        s.excluded,
                        s.blowup_step,
                    )
                )
    path = out / "summary.csv"
    write_csv(
        path,
        ["replicate", "estimator_id", "param", "final", "tail_mean",
         "sq_error_truth", "sq_error_pooled", "excluded", "blowup_step"],
        rows,
    )
    side = write_sidecar(path, {**meta, "tail_fraction": config.tail_fraction,
                                "replicates": config.replicates})
    return [path, side]


def _write_trajectories(config, model, seeds, out, meta):
    paths = []
    for r, seed in enumerate(seeds):
        rec = TrajectoryRecorder(record_every=config.record_every)
        run_trajectory(
            model, config.truth, config.n_particles, config.dt, config.n_steps,
            seed, observers=[rec], eta_true=config.eta_true,
        )
        path = out / f"trajectory_r{r:03d}.csv"
        write_csv(path, ["step", "time", "particle", "coord", "value"], rec.rows)
        side = write_sidecar(path, {**meta, "replicate": r, "seed": seed,
                                    "record_every": config.record_every})
        paths += [path, side]
    return paths


def run_sweep(config: ExperimentConfig, out_dir) -> dict:
    """Fig-2-style error sweep over the particle counts in config.sweep."""
    if not config.sweep_n_particles:
        raise RuntimeError("config has no sweep.n_particles section")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.make_model()
    seeds = batch_seeds(config.base_seed, config.replicates)
    theta_inits, eta_uniforms = draw_initial_thetas(
        seeds, config.theta_init_low, config.theta_init_high
    )

    def setups_for(n):
        return build_setups(config, model, theta_inits, eta_uniforms)

    table = l2_error_sweep(
        model,
        config.truth,
        config.sweep_n_particles,
        config.dt,
        config.n_steps,
        config.replicates,
        setups_for,
        config.base_seed,
        eta_true=config.eta_true,
        tail_fraction=config.tail_fraction,
    )
    rows = [
        (c.n_particles, c.estimator, c.param, c.mse, c.stderr, c.excluded_count)
        for c in table.cells
    ]
    path = out / "sweep.csv"
    write_csv(path, ["N", "estimator", "param", "mse", "stderr", "excluded_count"], rows)
    meta = base_metadata(config)
    side = write_sidecar(path, {**meta, "n_steps": config.n_steps,
                                "replicates": config.replicates,
                                "sweep_n_particles": config.sweep_n_particles})
    return _finish_manifest(config, out, [path, side])


def run_surface(config: ExperimentConfig, out_dir) -> dict:
    if not config.surface:
        raise RuntimeError("config has no surface section")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.make_model()
    if config.truth.kind != "constant":
        raise RuntimeError("surface scans need a constant truth schedule")
    scan = surface_scan(
        model,
        config.surface["axes"],
        config.n_particles,
        config.dt,
        config.surface["horizon_steps"],
        config.surface["burn_in_steps"],
        config.surface["scan_kind"],
        config.base_seed,
        config.truth.at(0.0),
        eta_true=config.eta_true,
    )
    import itertools

    rows = []
    for idx in itertools.product(*(range(len(a)) for a in scan.axes)):
        point = [scan.axes[k][i] for k, i in enumerate(idx)]
        rows.append((*point, scan.values[idx]))
    header = [f"theta_{k+1}" for k in range(len(scan.axes))] + ["value"]
    path = out / "surface.csv"
    write_csv(path, header, rows)
    meta = base_metadata(config)
    side = write_sidecar(path, {**meta, "scan_kind": scan.scan_kind,
                                "horizon_steps": scan.horizon,
                                "burn_in_steps": scan.burn_in,
                                "n_particles": config.n_particles})
    return _finish_manifest(config, out, [path, side])


def _finish_manifest(config, out, artifacts):
    manifest = {
        "config_name": config.name,
        "config_hash": config.content_hash(),
        "code_version": __version__,
        "artifacts": [{"name": p.name, "sha256": _sha256(p)} for p in sorted(artifacts)],
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest
