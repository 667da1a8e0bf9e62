"""Online parameter-update rules driven by the observation increment stream.

All updates discretise the continuous-time gradient flow with explicit Euler
on the same step grid as the state SDE, the parameter being evaluated at the
step start.  The core residual is B(theta)*dt - dx (or its pairwise
counterpart), weighted by (sigma sigma^T)^-1 or the identity depending on
the model's weighting mode.

Update kernels broadcast over leading batch axes, so the same code serves a
single trajectory and a stacked array of replicates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .models import Box, weight_matrix
from .rng import InvalidConfiguration


class EstimatorDivergence(RuntimeError):
    def __init__(self, step, message=""):
        self.step = step
        super().__init__(message or f"estimator diverged at step {step}")


# ---------------------------------------------------------------------------
# Learning-rate schedules


@dataclass(frozen=True)
class LearningRateSchedule:
    """gamma(t) = scale * gamma0           (constant)
               = scale * gamma0 * (1+t)^-beta   (power-law)

    `scale` is a fixed positive per-parameter vector; the time dependence is
    a shared scalar.
    """

    kind: str
    gamma0: float
    beta: float | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "power-law"):
            raise InvalidConfiguration(f"unknown schedule kind {self.kind!r}")
        if self.gamma0 <= 0:
            raise InvalidConfiguration("gamma0 must be positive")
        if self.kind == "power-law":
            if self.beta is None or not 0 < self.beta <= 1:
                raise InvalidConfiguration("power-law beta must lie in (0, 1]")
        if self.scale is not None:
            s = np.asarray(self.scale, dtype=float)
            if np.any(s <= 0):
                raise InvalidConfiguration("per-parameter scale must be positive")
            object.__setattr__(self, "scale", s)

    def scalar(self, t) -> float:
        if self.kind == "constant":
            return self.gamma0
        return self.gamma0 * (1.0 + t) ** (-self.beta)

    def value(self, t) -> np.ndarray:
        g = self.scalar(t)
        return g * self.scale if self.scale is not None else np.asarray(g)


def lr_value(schedule: LearningRateSchedule, t: float) -> np.ndarray:
    if t < 0:
        raise InvalidConfiguration("t must be non-negative")
    return np.atleast_1d(schedule.value(t))


@dataclass(frozen=True)
class ScheduleReport:
    robbins_monro_ok: bool  # integral conditions for a.s. convergence
    rate_conditions_ok: bool  # stronger conditions for L2 rate / CLT regime
    mode: str  # "consistent" or "tracking"
    notes: tuple


def validate_schedule(schedule: LearningRateSchedule) -> ScheduleReport:
    """Check the step-size integral conditions for the schedule family.

    Constant schedules have a divergent squared integral: they track
    time-varying truths but carry no consistency guarantee.  Power laws
    gamma0*(1+t)^-beta satisfy the convergence conditions iff beta in
    (1/2, 1], and the stronger rate/CLT conditions iff beta in (1/2, 1).
    """
    notes = []
    if schedule.kind == "constant":
        notes.append(
            "constant learning rate: integral of gamma^2 diverges; "
            "tracking mode, no consistency guarantee"
        )
        return ScheduleReport(False, False, "tracking", tuple(notes))
    beta = schedule.beta
    rm_ok = 0.5 < beta <= 1.0
    rate_ok = 0.5 < beta < 1.0
    if not rm_ok:
        notes.append(
            f"beta={beta} violates the convergence conditions "
            "(integral of gamma^2 diverges for beta <= 1/2)"
        )
    elif not rate_ok:
        notes.append("beta=1 meets the convergence conditions but not the rate conditions")
    return ScheduleReport(rm_ok, rate_ok, "consistent" if rm_ok else "tracking", tuple(notes))


# ---------------------------------------------------------------------------
# Cyclic triplets


@dataclass(frozen=True)
class TripletSet:
    """Ordered (i, j, k) index triples with three distinct members each."""

    triplets: tuple

    def __post_init__(self):
        for t in self.triplets:
            if len(t) != 3 or len(set(t)) != 3:
                raise InvalidConfiguration(f"triplet {t} must have three distinct indices")

    def __len__(self):
        return len(self.triplets)


def build_cyclic_triplets(pi, n: int) -> TripletSet:
    """Cyclic triplets C(Pi) of an ordered index subset Pi of [0, n).

    For |Pi| >= 3 the triples are (i_l, i_{l+1}, i_{l+2}) with indices taken
    cyclically.  For |Pi| in {1, 2}, Pi is first extended to size 3 with the
    smallest indices not already in Pi, the cyclic triples of the extension
    are formed, and only those whose first index lies in the original Pi are
    kept, so the result size is always |Pi|.
    """
    pi = list(pi)
    if not pi:
        raise InvalidConfiguration("Pi must be non-empty")
    if len(set(pi)) != len(pi):
        raise InvalidConfiguration("Pi must contain distinct indices")
    if any(not 0 <= i < n for i in pi):
        raise InvalidConfiguration(f"Pi indices must lie in [0, {n})")
    if len(pi) < 3:
        if n < 3:
            raise InvalidConfiguration("need at least 3 particles to form triplets")
        aux = [i for i in range(n) if i not in pi]
        extended = pi + aux[: 3 - len(pi)]
        cyc = _cyclic(extended)
        keep = tuple(t for t in cyc if t[0] in pi)
        return TripletSet(keep)
    return TripletSet(_cyclic(pi))


def _cyclic(idx):
    m = len(idx)
    return tuple((idx[l], idx[(l + 1) % m], idx[(l + 2) % m]) for l in range(m))


# ---------------------------------------------------------------------------
# Estimator state and update options


@dataclass(frozen=True)
class EstimatorState:
    """Current estimate plus preconditioner accumulator and freeze flag.

    Fields carry arbitrary leading batch axes; `frozen` is boolean with the
    batch shape (a 0-d array for a single trajectory).  Once frozen flips to
    True it never reverts and all later updates pass through unchanged.
    """

    theta: np.ndarray
    step_index: int = 0
    precond_acc: np.ndarray | None = None
    frozen: np.ndarray | None = None

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if self.precond_acc is None:
            object.__setattr__(self, "precond_acc", np.zeros_like(theta))
        if self.frozen is None:
            object.__setattr__(self, "frozen", np.zeros(theta.shape[:-1], dtype=bool))


@dataclass(frozen=True)
class RmsPropConfig:
    rho: float = 0.99
    eps: float = 1e-8


@dataclass(frozen=True)
class UpdateOptions:
    """Per-estimator behaviour shared by all update rules."""

    bounds: Box | None = None
    free_mask: np.ndarray | None = None  # False entries are known, never updated
    rmsprop: RmsPropConfig | None = None
    weight: np.ndarray | None = None  # override of the model weighting matrix

    def weight_for(self, model) -> np.ndarray:
        return self.weight if self.weight is not None else weight_matrix(model)


def rmsprop_precondition(raw_update, state: EstimatorState, lr_vec, cfg: RmsPropConfig):
    """Scale the raw step by the root of an EMA of squared gradients.

    The accumulator sees the learning-rate-normalised gradient
    grad = raw_update / gamma, so the preconditioner is invariant to the
    schedule level.  Returns (preconditioned step, new accumulator).
    """
    grad = raw_update / lr_vec
    acc = cfg.rho * state.precond_acc + (1.0 - cfg.rho) * grad * grad
    return raw_update / (np.sqrt(acc) + cfg.eps), acc


def project_constraint(state: EstimatorState, bounds: Box | None) -> EstimatorState:
    """Freeze-at-boundary rule: estimates leaving the box stop for good."""
    if bounds is None:
        return state
    outside = ~bounds.contains(state.theta)
    if not np.any(outside):
        return state
    frozen = state.frozen | outside
    return replace(state, frozen=frozen)


def _apply_raw_update(state, model, raw, lr_vec, options, step_hint=None):
    """Common tail of every update rule: mask, precondition, freeze, clamp."""
    if options.free_mask is not None:
        raw = raw * options.free_mask
    if not np.all(np.isfinite(raw)):
        bad = ~np.all(np.isfinite(raw), axis=-1)
        if bad.ndim == 0:
            raise EstimatorDivergence(step_hint if step_hint is not None else state.step_index)
        # batched runs freeze the diverged replicate and keep going
        raw = np.where(bad[..., None], 0.0, raw)
        state = replace(state, frozen=state.frozen | bad)
    acc = state.precond_acc
    step = raw
    if options.rmsprop is not None:
        step, acc = rmsprop_precondition(raw, state, lr_vec, options.rmsprop)
    proposal = state.theta + step
    if options.bounds is not None:
        outside = ~options.bounds.contains(proposal)
    else:
        outside = np.zeros(state.frozen.shape, dtype=bool)
    keep_old = state.frozen | outside
    theta = np.where(keep_old[..., None], state.theta, proposal)
    acc = np.where(keep_old[..., None], state.precond_acc, acc)
    return EstimatorState(
        theta=theta,
        step_index=state.step_index + 1,
        precond_acc=acc,
        frozen=state.frozen | outside,
    )


def _weighted(G, W, resid):
    """G W r with G (..., p, d), W (d, d), r (..., d) -> (..., p)."""
    return np.einsum("...pd,de,...e->...p", G, W, resid)


# ---------------------------------------------------------------------------
# Gradient estimates (drift of the parameter update, before -gamma scaling)


def averaged_gradient(model, theta, x_i, positions, dx_i, dt, W):
    """G(theta, x_i, mu_N) W [B(theta, x_i, mu_N) dt - dx_i]."""
    B = model.drift_mean(theta, x_i, positions)
    G = model.grad_mean(theta, x_i, positions)
    return _weighted(G, W, B * dt - dx_i)


def triplet_gradient(model, theta, x_i, x_j, x_k, dx_i, dt, W):
    """g(theta, x_i, x_j) W [b(theta, x_i, x_k) dt - dx_i]."""
    b = model.drift_pair(theta, x_i, x_k)
    g = model.grad_pair(theta, x_i, x_j)
    return _weighted(g, W, b * dt - dx_i)


def m_full_gradient(model, theta, pi, positions, dX, dt, W):
    """Mean of the averaged gradient over the primary indices Pi.

    Pi is sorted internally so the accumulation order (hence the float
    result) is independent of the order Pi was supplied in.
    """
    total = None
    for i in sorted(pi):
        g = averaged_gradient(model, theta, positions[..., i, :], positions, dX[..., i, :], dt, W)
        total = g if total is None else total + g
    return total / len(pi)


def m_triplet_gradient(model, theta, triplets: TripletSet, positions, dX, dt, W):
    """Mean of the three-particle gradient over the cyclic triplets C(Pi)."""
    total = None
    for (i, j, k) in triplets.triplets:
        g = triplet_gradient(
            model,
            theta,
            positions[..., i, :],
            positions[..., j, :],
            positions[..., k, :],
            dX[..., i, :],
            dt,
            W,
        )
        total = g if total is None else total + g
    return total / len(triplets)


def diffusion_gradient(model, eta, x_i, dqv_i, dt):
    """d_eta(sigma sigma^T) [sigma sigma^T(eta, x) dt - dQV_i], scalar noise.

    The fixed point is the realized quadratic variation matching the model's
    instantaneous variance.
    """
    sig_sq = model.diffusion.sigma_sq(eta, x_i)
    d_eta = model.diffusion.d_eta_sigma_sq(eta, x_i)
    return d_eta * (sig_sq * dt - dqv_i)


# ---------------------------------------------------------------------------
# Single-step update operations
#
# Each takes the ensemble state at the step start, the increments realised
# over the step of length dt, and the step-start time t (where the schedule
# is evaluated), and returns the new estimator state.


def update_averaged(
    state, model, particle, positions, dx, dt, schedule, t, options=UpdateOptions()
):
    """Full-observation update from one particle's residual against the
    empirical-measure drift."""
    lr = np.atleast_1d(schedule.value(t))
    D = averaged_gradient(
        model,
        state.theta,
        positions[..., particle, :],
        positions,
        dx[..., particle, :],
        dt,
        options.weight_for(model),
    )
    return _apply_raw_update(state, model, -lr * D, lr, options)


def update_three_particle(
    state, model, x_i, x_j, x_k, dx_i, dt, schedule, t, options=UpdateOptions()
):
    """Three-particle update; deliberately takes the three observed states
    and the increment of the first, never the full ensemble."""
    lr = np.atleast_1d(schedule.value(t))
    D = triplet_gradient(
        model, state.theta, x_i, x_j, x_k, dx_i, dt, options.weight_for(model)
    )
    return _apply_raw_update(state, model, -lr * D, lr, options)


def update_m_averaged_full(
    state, model, pi, positions, dX, dt, schedule, t, options=UpdateOptions()
):
    """Single update from the averaged drift over the primary indices Pi."""
    lr = np.atleast_1d(schedule.value(t))
    D = m_full_gradient(model, state.theta, pi, positions, dX, dt, options.weight_for(model))
    return _apply_raw_update(state, model, -lr * D, lr, options)


def update_m_averaged_triplets(
    state, model, triplets, positions, dX, dt, schedule, t, options=UpdateOptions()
):
    """Single update from the mean three-particle drift over C(Pi)."""
    lr = np.atleast_1d(schedule.value(t))
    D = m_triplet_gradient(
        model, state.theta, triplets, positions, dX, dt, options.weight_for(model)
    )
    return _apply_raw_update(state, model, -lr * D, lr, options)


def update_diffusion(
    state, model, particle, positions, dqv, dt, schedule, t, options=UpdateOptions()
):
    """Diffusion-parameter update matching realized quadratic variation.

    For scalar noise: eta <- eta - delta * d_eta(sigma^2) * (sigma^2 dt - dQV).
    Requires a parametric diffusion and the dQV stream.
    """
    if not model.diffusion.parametric:
        raise InvalidConfiguration(f"{model.model_id} has no diffusion parameters")
    lr = np.atleast_1d(schedule.value(t))
    x_i = positions[..., particle, :]
    dqv_i = dqv[..., particle, :, 0]  # scalar-noise models: dQV is (..., N, 1, 1)
    D = diffusion_gradient(model, state.theta, x_i, dqv_i, dt)
    return _apply_raw_update(state, model, -lr * D, lr, options)
