"""Experiment configuration: a strict JSON schema and its loader.

Unknown keys are rejected everywhere so a typo cannot silently fall back to
a default.  A config captures one fully reproducible run: model, truth
schedule, discretisation, initial laws, estimators, replicate count, and
the base seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .batch import ESTIMATOR_KINDS
from .estimators import LearningRateSchedule
from .models import MODEL_ZOO, TruthSchedule, make_model


class ConfigError(ValueError):
    """Validation failure; `field` names the offending entry."""

    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _require(d, key, ctx, types=None):
    if key not in d:
        raise ConfigError(f"{ctx}.{key}", "missing required field")
    v = d[key]
    if types is not None and not isinstance(v, types):
        raise ConfigError(f"{ctx}.{key}", f"expected {types}, got {type(v).__name__}")
    return v


def _check_keys(d, allowed, ctx):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{ctx}.{sorted(unknown)[0]}", "unknown field")


def _floats(v, ctx):
    try:
        return [float(x) for x in v]
    except (TypeError, ValueError):
        raise ConfigError(ctx, "expected a list of numbers")


@dataclass
class EstimatorConfig:
    kind: str
    label: str
    particle: int
    triplet: tuple
    pi: tuple | None
    lr_kind: str
    gamma0: float
    beta: float | None
    scale: list | None
    free_params: tuple | None
    rmsprop: bool
    rms_rho: float
    rms_eps: float
    bounds_lower: list | None
    bounds_upper: list | None
    weighting: str | None = None  # override of the model's residual weighting

    def schedule(self):
        return LearningRateSchedule(
            kind=self.lr_kind,
            gamma0=self.gamma0,
            beta=self.beta,
            scale=np.asarray(self.scale, dtype=float) if self.scale is not None else None,
        )


@dataclass
class ExperimentConfig:
    name: str
    model_id: str
    model_params: dict
    truth: TruthSchedule
    eta_true: float | None
    n_particles: int
    dt: float
    n_steps: int
    theta_init_low: list
    theta_init_high: list
    eta_init_low: float | None
    eta_init_high: float | None
    particle_init: str
    estimators: list
    replicates: int
    base_seed: int
    record_every: int
    tail_fraction: float
    dump_trajectory: bool
    sweep_n_particles: list | None
    surface: dict | None
    raw: dict = field(repr=False, default_factory=dict)

    def make_model(self):
        return make_model(self.model_id, **self.model_params)

    def content_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


_TOP_KEYS = {
    "name", "model", "truth", "eta_true", "n_particles", "dt", "n_steps",
    "init", "estimators", "replicates", "base_seed", "record_every",
    "tail_fraction", "dump_trajectory", "sweep", "surface",
}

_EST_KEYS = {
    "kind", "label", "particle", "triplet", "pi", "learning_rate",
    "free_params", "rmsprop", "rms_rho", "rms_eps", "bounds_lower", "bounds_upper",
    "weighting",
}


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _check_keys(data, _TOP_KEYS, "<root>")

    name = _require(data, "name", "<root>", str)

    mdl = _require(data, "model", "<root>", dict)
    _check_keys(mdl, {"id", "sigma"}, "model")
    model_id = _require(mdl, "id", "model", str)
    if model_id not in MODEL_ZOO:
        raise ConfigError("model.id", f"unknown model {model_id!r}")
    model_params = {}
    if "sigma" in mdl:
        if model_id == "vol32":
            raise ConfigError("model.sigma", "vol32 takes eta_true, not a constant sigma")
        model_params["sigma"] = float(mdl["sigma"])

    truth = _parse_truth(_require(data, "truth", "<root>", dict))
    model_probe = make_model(model_id, **model_params)
    if truth.start.size != model_probe.p:
        raise ConfigError("truth", f"expected {model_probe.p} parameters for {model_id}")

    eta_true = data.get("eta_true")
    if model_probe.diffusion.parametric and eta_true is None:
        raise ConfigError("eta_true", f"{model_id} requires eta_true")
    if eta_true is not None:
        eta_true = float(eta_true)
        if not model_probe.diffusion.parametric:
            raise ConfigError("eta_true", f"{model_id} has a constant diffusion")

    n_particles = _require(data, "n_particles", "<root>", int)
    if n_particles < 1:
        raise ConfigError("n_particles", "must be >= 1")
    dt = float(_require(data, "dt", "<root>", (int, float)))
    if dt <= 0:
        raise ConfigError("dt", "must be positive")
    n_steps = _require(data, "n_steps", "<root>", int)
    if n_steps < 1:
        raise ConfigError("n_steps", "must be >= 1")

    init = _require(data, "init", "<root>", dict)
    _check_keys(init, {"particles", "theta_low", "theta_high", "eta_low", "eta_high"}, "init")
    particle_init = init.get("particles", "standard-normal")
    if particle_init != "standard-normal":
        raise ConfigError("init.particles", f"unknown law {particle_init!r}")
    theta_low = _floats(_require(init, "theta_low", "init"), "init.theta_low")
    theta_high = _floats(_require(init, "theta_high", "init"), "init.theta_high")
    if len(theta_low) != model_probe.p or len(theta_high) != model_probe.p:
        raise ConfigError("init.theta_low", f"expected length {model_probe.p}")
    if any(lo > hi for lo, hi in zip(theta_low, theta_high)):
        raise ConfigError("init.theta_low", "lower bound exceeds upper bound")
    eta_low = init.get("eta_low")
    eta_high = init.get("eta_high")

    est_list = _require(data, "estimators", "<root>", list)
    if not est_list:
        raise ConfigError("estimators", "need at least one estimator")
    estimators = [
        _parse_estimator(e, i, model_probe, n_particles) for i, e in enumerate(est_list)
    ]
    labels = [e.label for e in estimators]
    if len(set(labels)) != len(labels):
        raise ConfigError("estimators", f"duplicate estimator labels: {labels}")
    if any(e.kind == "diffusion" for e in estimators):
        if not model_probe.diffusion.parametric:
            raise ConfigError("estimators", f"{model_id} has no diffusion parameters")
        if eta_low is None or eta_high is None:
            raise ConfigError("init.eta_low", "diffusion estimator needs an eta init box")

    replicates = _require(data, "replicates", "<root>", int)
    if replicates < 1:
        raise ConfigError("replicates", "must be >= 1")
    base_seed = _require(data, "base_seed", "<root>", int)
    if base_seed < 0:
        raise ConfigError("base_seed", "must be non-negative")
    record_every = data.get("record_every", 1)
    if not isinstance(record_every, int) or record_every < 1:
        raise ConfigError("record_every", "must be a positive integer")
    tail_fraction = float(data.get("tail_fraction", 0.1))
    if not 0 < tail_fraction <= 1:
        raise ConfigError("tail_fraction", "must lie in (0, 1]")

    sweep = data.get("sweep")
    sweep_list = None
    if sweep is not None:
        _check_keys(sweep, {"n_particles"}, "sweep")
        sweep_list = [int(n) for n in _require(sweep, "n_particles", "sweep", list)]
        if any(n < 1 for n in sweep_list):
            raise ConfigError("sweep.n_particles", "entries must be >= 1")

    surface = data.get("surface")
    if surface is not None:
        _check_keys(surface, {"axes", "scan_kind", "horizon_steps", "burn_in_steps"}, "surface")
        axes = _require(surface, "axes", "surface", list)
        if len(axes) != model_probe.p:
            raise ConfigError("surface.axes", f"expected {model_probe.p} axes")
        kind = surface.get("scan_kind", "L_iN")
        if kind not in ("L_iN", "L_ijkN"):
            raise ConfigError("surface.scan_kind", f"unknown kind {kind!r}")
        hz = _require(surface, "horizon_steps", "surface", int)
        bi = surface.get("burn_in_steps", hz // 10)
        if not 0 <= bi < hz:
            raise ConfigError("surface.burn_in_steps", "need 0 <= burn_in < horizon")
        surface = {
            "axes": [_floats(a, "surface.axes") for a in axes],
            "scan_kind": kind, "horizon_steps": hz, "burn_in_steps": bi,
        }

    return ExperimentConfig(
        name=name,
        model_id=model_id,
        model_params=model_params,
        truth=truth,
        eta_true=eta_true,
        n_particles=n_particles,
        dt=dt,
        n_steps=n_steps,
        theta_init_low=theta_low,
        theta_init_high=theta_high,
        eta_init_low=None if eta_low is None else float(eta_low),
        eta_init_high=None if eta_high is None else float(eta_high),
        particle_init=particle_init,
        estimators=estimators,
        replicates=replicates,
        base_seed=base_seed,
        record_every=record_every,
        tail_fraction=tail_fraction,
        dump_trajectory=bool(data.get("dump_trajectory", False)),
        sweep_n_particles=sweep_list,
        surface=surface,
        raw=data,
    )


def _parse_truth(d) -> TruthSchedule:
    _check_keys(d, {"kind", "values", "start", "end", "switch_time", "horizon"}, "truth")
    kind = _require(d, "kind", "truth", str)
    try:
        if kind == "constant":
            return TruthSchedule.constant(_floats(_require(d, "values", "truth"), "truth.values"))
        if kind == "changepoint":
            return TruthSchedule(
                "changepoint",
                _floats(_require(d, "start", "truth"), "truth.start"),
                _floats(_require(d, "end", "truth"), "truth.end"),
                switch_time=float(_require(d, "switch_time", "truth", (int, float))),
            )
        if kind == "ramp":
            return TruthSchedule(
                "ramp",
                _floats(_require(d, "start", "truth"), "truth.start"),
                _floats(_require(d, "end", "truth"), "truth.end"),
                horizon=float(_require(d, "horizon", "truth", (int, float))),
            )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError("truth", str(e))
    raise ConfigError("truth.kind", f"unknown kind {kind!r}")


def _parse_estimator(d, index, model, n_particles) -> EstimatorConfig:
    ctx = f"estimators[{index}]"
    if not isinstance(d, dict):
        raise ConfigError(ctx, "must be an object")
    _check_keys(d, _EST_KEYS, ctx)
    kind = _require(d, "kind", ctx, str)
    if kind not in ESTIMATOR_KINDS:
        raise ConfigError(f"{ctx}.kind", f"unknown kind {kind!r}")
    label = d.get("label", kind)

    particle = d.get("particle", 0)
    if not 0 <= particle < n_particles:
        raise ConfigError(f"{ctx}.particle", f"index {particle} out of range for N={n_particles}")

    triplet = tuple(d.get("triplet", (0, 1, 2)))
    if kind == "triplet":
        if len(triplet) != 3 or len(set(triplet)) != 3:
            raise ConfigError(f"{ctx}.triplet", "need three distinct indices")
        if any(not 0 <= i < n_particles for i in triplet):
            raise ConfigError(f"{ctx}.triplet", f"indices out of range for N={n_particles}")

    pi = d.get("pi")
    if kind in ("averaged_m", "triplet_m"):
        if pi is None:
            raise ConfigError(f"{ctx}.pi", f"{kind} requires the index set pi")
        pi = tuple(int(i) for i in pi)
        if len(set(pi)) != len(pi):
            raise ConfigError(f"{ctx}.pi", "indices must be distinct")
        if any(not 0 <= i < n_particles for i in pi):
            raise ConfigError(f"{ctx}.pi", f"indices out of range for N={n_particles}")
    elif pi is not None:
        raise ConfigError(f"{ctx}.pi", f"pi is only valid for the M-averaged kinds")

    lr = _require(d, "learning_rate", ctx, dict)
    _check_keys(lr, {"kind", "gamma0", "beta", "scale"}, f"{ctx}.learning_rate")
    lr_kind = _require(lr, "kind", f"{ctx}.learning_rate", str)
    if lr_kind not in ("constant", "power-law"):
        raise ConfigError(f"{ctx}.learning_rate.kind", f"unknown kind {lr_kind!r}")
    gamma0 = float(_require(lr, "gamma0", f"{ctx}.learning_rate", (int, float)))
    if gamma0 <= 0:
        raise ConfigError(f"{ctx}.learning_rate.gamma0", "must be positive")
    beta = lr.get("beta")
    if lr_kind == "power-law":
        if beta is None or not 0 < float(beta) <= 1:
            raise ConfigError(f"{ctx}.learning_rate.beta", "power-law needs beta in (0, 1]")
        beta = float(beta)
    scale = lr.get("scale")
    n_par = 1 if kind == "diffusion" else model.p
    if scale is not None:
        scale = _floats(scale, f"{ctx}.learning_rate.scale")
        if len(scale) != n_par:
            raise ConfigError(f"{ctx}.learning_rate.scale", f"expected length {n_par}")
        if any(s <= 0 for s in scale):
            raise ConfigError(f"{ctx}.learning_rate.scale", "entries must be positive")

    free = d.get("free_params")
    if free is not None:
        if kind == "diffusion":
            raise ConfigError(f"{ctx}.free_params", "not applicable to the diffusion update")
        free = tuple(int(i) for i in free)
        if not free or any(not 0 <= i < model.p for i in free) or len(set(free)) != len(free):
            raise ConfigError(f"{ctx}.free_params", f"need distinct indices in [0, {model.p})")

    lower = d.get("bounds_lower")
    upper = d.get("bounds_upper")
    if (lower is None) != (upper is None):
        raise ConfigError(f"{ctx}.bounds_lower", "bounds must be given as a pair")
    if lower is not None:
        lower = _floats(lower, f"{ctx}.bounds_lower")
        upper = _floats(upper, f"{ctx}.bounds_upper")
        if len(lower) != n_par or len(upper) != n_par:
            raise ConfigError(f"{ctx}.bounds_lower", f"expected length {n_par}")

    weighting = d.get("weighting")
    if weighting is not None:
        if weighting not in ("identity", "inverse-diffusion"):
            raise ConfigError(f"{ctx}.weighting", f"unknown mode {weighting!r}")
        if kind == "diffusion":
            raise ConfigError(f"{ctx}.weighting", "not applicable to the diffusion update")
        if weighting == "inverse-diffusion" and model.weighting == "identity":
            raise ConfigError(
                f"{ctx}.weighting",
                f"{model.model_id} has a degenerate noise block; its residuals "
                "cannot be inverse-diffusion weighted",
            )

    return EstimatorConfig(
        kind=kind,
        label=label,
        particle=particle,
        triplet=triplet,
        pi=pi,
        lr_kind=lr_kind,
        gamma0=gamma0,
        beta=beta,
        scale=scale,
        free_params=free,
        rmsprop=bool(d.get("rmsprop", False)),
        rms_rho=float(d.get("rms_rho", 0.99)),
        rms_eps=float(d.get("rms_eps", 1e-8)),
        bounds_lower=lower,
        bounds_upper=upper,
        weighting=weighting,
    )


def load_config(path) -> ExperimentConfig:
    """Load and validate a config from a filesystem path or a bundled name."""
    text = None
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        text = _bundled_text(str(path))
        if text is None:
            raise ConfigError("<file>", f"no such config file or bundled name: {path}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON at line {e.lineno}: {e.msg}")
    return parse_config(data)


def _bundled_text(name: str) -> str | None:
    if not name.endswith(".json"):
        name = name + ".json"
    ref = resources.files("ipslearn").joinpath("configs", name)
    if ref.is_file():
        return ref.read_text()
    return None


def bundled_config_names() -> list:
    out = []
    for entry in resources.files("ipslearn").joinpath("configs").iterdir():
        if entry.name.endswith(".json"):
            out.append(entry.name[: -len(".json")])
    return sorted(out)
