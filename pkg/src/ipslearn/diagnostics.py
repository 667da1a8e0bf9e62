"""Empirical verification tools: error sweeps over the particle count,
moment tracking, synchronous-coupling distances, theoretical rate functions,
and rescaled-error moment summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .batch import EstimatorSetup, batch_seeds, run_batch
from .estimators import validate_schedule
from .models import InteractionModel, TruthSchedule
from .rng import InvalidConfiguration, particle_streams
from .sde import run_trajectory, step_positions
from .rng import BlockedNoise


# ---------------------------------------------------------------------------
# Rate functions


def rho_rate(n: int, d: int) -> float:
    """Empirical-measure Wasserstein rate: N^-1/4 below dimension 4,
    N^-1/4 sqrt(log(1+N)) at 4, N^-1/d above."""
    if n < 1 or d < 1:
        raise InvalidConfiguration("need n >= 1 and d >= 1")
    if d < 4:
        return n ** (-0.25)
    if d == 4:
        return n ** (-0.25) * np.sqrt(np.log1p(n))
    return n ** (-1.0 / d)


def poc_rate(n: int, alpha: float) -> float:
    """Coupling-inherited rate N^(-1/(2(1+alpha))) entering the gradient bounds."""
    if n < 1 or alpha < 0:
        raise InvalidConfiguration("need n >= 1 and alpha >= 0")
    return n ** (-1.0 / (2.0 * (1.0 + alpha)))


def rate_function_a(t: float, x: float, alpha: float, A: float, C: float = 1.0) -> float:
    """Convergence-to-equilibrium rate function a_t(x).

    alpha > 0: [x^-alpha + A (alpha/(2+alpha))^(1+alpha/2) t]^(-2/alpha)
    alpha = 0: C^2 x^2 exp(-2 A t)
    """
    if alpha < 0 or A <= 0 or C <= 0 or x < 0 or t < 0:
        raise InvalidConfiguration("need t, x >= 0, alpha >= 0, A > 0, C > 0")
    if alpha == 0:
        return C**2 * x**2 * np.exp(-2.0 * A * t)
    bracket = x ** (-alpha) + A * (alpha / (2.0 + alpha)) ** (1.0 + alpha / 2.0) * t
    return bracket ** (-2.0 / alpha)


# ---------------------------------------------------------------------------
# Per-replicate summaries


@dataclass(frozen=True)
class ReplicateSummary:
    """Point estimates and errors for one replicate of one estimator."""

    replicate_id: int
    estimator: str
    final_theta: np.ndarray
    tail_mean: np.ndarray  # mean over the tail window (last W steps)
    sq_error_truth: np.ndarray  # per parameter, vs the true values
    sq_error_pooled: np.ndarray  # per parameter, vs the pooled replicate mean
    excluded: bool
    blowup_step: int


def summarize_replicates(track, truth_values, excluded, blowup_step):
    """Build one ReplicateSummary per replicate from a batch track.

    The pooled centre uses only non-excluded replicates.
    """
    truth_values = np.asarray(truth_values, dtype=float)
    ok = ~np.asarray(excluded, dtype=bool)
    pooled = track.tail_mean[ok].mean(axis=0)
    out = []
    for r in range(track.final.shape[0]):
        out.append(
            ReplicateSummary(
                replicate_id=r,
                estimator=track.label,
                final_theta=track.final[r],
                tail_mean=track.tail_mean[r],
                sq_error_truth=(track.tail_mean[r] - truth_values) ** 2,
                sq_error_pooled=(track.tail_mean[r] - pooled) ** 2,
                excluded=bool(excluded[r]),
                blowup_step=int(blowup_step[r]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# L2-error sweep over the particle count


@dataclass(frozen=True)
class SweepCell:
    n_particles: int
    estimator: str
    param: int
    mse: float
    stderr: float
    excluded_count: int


@dataclass(frozen=True)
class SweepTable:
    cells: tuple

    def lookup(self, n, estimator, param) -> SweepCell:
        for c in self.cells:
            if (c.n_particles, c.estimator, c.param) == (n, estimator, param):
                return c
        raise KeyError((n, estimator, param))


def l2_error_sweep(
    model: InteractionModel,
    truth: TruthSchedule,
    n_list,
    dt: float,
    n_steps: int,
    replicates: int,
    setups_for,
    base_seed: int,
    eta_true=None,
    tail_fraction: float = 0.1,
) -> SweepTable:
    """Per-parameter squared error of the tail-window estimate vs the truth.

    `setups_for(n)` builds the estimator setups for a given particle count
    (triplet indices may depend on N).  Replicates that blow up are counted
    and excluded from the statistics, never silently dropped.
    """
    if replicates < 2:
        raise InvalidConfiguration("need at least 2 replicates for a standard error")
    theta0_final = truth.at(np.inf) if truth.kind != "constant" else truth.at(0.0)
    cells = []
    for n in n_list:
        seeds = batch_seeds(base_seed, replicates)
        setups = setups_for(n)
        result = run_batch(
            model, truth, n, dt, n_steps, seeds, setups,
            eta_true=eta_true, tail_fraction=tail_fraction,
        )
        ok = ~result.excluded
        excluded = int(result.excluded.sum())
        if not np.any(ok):
            raise RuntimeError(f"all replicates blew up at N={n}")
        for track in result.tracks:
            err = (track.tail_mean[ok] - theta0_final) ** 2  # (R_ok, p)
            mse = err.mean(axis=0)
            se = err.std(axis=0, ddof=1) / np.sqrt(err.shape[0])
            for param in range(err.shape[1]):
                cells.append(
                    SweepCell(
                        n_particles=int(n),
                        estimator=track.label,
                        param=param,
                        mse=float(mse[param]),
                        stderr=float(se[param]),
                        excluded_count=excluded,
                    )
                )
    return SweepTable(cells=tuple(cells))


# ---------------------------------------------------------------------------
# Synchronous-coupling distance


def coupling_distance(
    model: InteractionModel,
    truth: TruthSchedule,
    n_small: int,
    n_big: int,
    dt: float,
    n_steps: int,
    seed: int,
    eta_true=None,
    initial_positions=None,
):
    """Mean squared distance between matched particles of two system sizes.

    Both systems share the first n_small noise streams and initial
    conditions (synchronous coupling); the larger system stands in for the
    mean-field limit.  Returns a (n_steps,) time series.
    """
    if n_small > n_big:
        raise InvalidConfiguration("need n_small <= n_big")
    streams_small = particle_streams(seed, n_small)
    streams_big = particle_streams(seed, n_big)
    noise_small = BlockedNoise(streams_small, model.d, dt)
    noise_big = BlockedNoise(streams_big, model.d, dt)
    if initial_positions is None:
        pos_big = noise_big.initial_positions()
        pos_small = pos_big[:n_small].copy()
        # the small system's streams must consume their own init draws so the
        # subsequent increments stay aligned with the big system's
        noise_small.initial_positions()
    else:
        pos_big = np.array(initial_positions, dtype=float)
        pos_small = pos_big[:n_small].copy()
    theta_cache = truth.at(0.0) if truth.kind == "constant" else None
    out = np.empty(n_steps)
    for step in range(n_steps):
        t = step * dt
        theta = theta_cache if theta_cache is not None else truth.at(t)
        dw_small = noise_small.next_step()
        dw_big = noise_big.next_step()
        dw_big[:n_small] = dw_small  # identical driving noise for matched particles
        pos_small, _ = step_positions(model, theta, pos_small, dw_small, dt, eta_true)
        pos_big, _ = step_positions(model, theta, pos_big, dw_big, dt, eta_true)
        diff = pos_small - pos_big[:n_small]
        out[step] = np.mean(np.sum(diff**2, axis=1))
    return out


# ---------------------------------------------------------------------------
# Truth-pinned update stationarity


def truth_stationarity(
    model, truth, n_particles, dt, n_steps, seed, schedule, particle=0, eta_true=None
):
    """Accumulate the averaged-estimator update at the pinned true parameter.

    At the truth the descent term vanishes and the update is a martingale
    increment sequence, so the time-averaged update should be statistically
    zero.  Returns (mean, stderr, z) per parameter.
    """
    from .estimators import averaged_gradient
    from .models import weight_matrix

    W = weight_matrix(model)
    sums = np.zeros(model.p)
    sq_sums = np.zeros(model.p)
    count = 0

    class _Collector:
        def on_step(self, step, t, ensemble, inc, new_ens):
            nonlocal count
            theta0 = truth.at(t)
            D = averaged_gradient(
                model, theta0, ensemble.positions[particle], ensemble.positions,
                inc.dX[particle], dt, W,
            )
            upd = -schedule.value(t) * D
            sums[:] += upd
            sq_sums[:] += upd**2
            count += 1

    run_trajectory(
        model, truth, n_particles, dt, n_steps, seed,
        observers=[_Collector()], eta_true=eta_true,
    )
    mean = sums / count
    var = sq_sums / count - mean**2
    se = np.sqrt(var / count)
    return mean, se, mean / se


# ---------------------------------------------------------------------------
# Rescaled-error moments (empirical CLT check)


@dataclass(frozen=True)
class MomentSummary:
    variance: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    replicates: int


def standardized_moments(samples: np.ndarray) -> MomentSummary:
    """Variance, skewness, excess kurtosis per column of a (R, p) array."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 2:
        raise InvalidConfiguration("need at least 2 samples")
    return MomentSummary(
        variance=samples.var(axis=0, ddof=1),
        skewness=stats.skew(samples, axis=0),
        excess_kurtosis=stats.kurtosis(samples, axis=0, fisher=True),
        replicates=samples.shape[0],
    )


def clt_rescaled_moments(
    model: InteractionModel,
    truth: TruthSchedule,
    n_particles: int,
    dt: float,
    n_steps: int,
    replicates: int,
    setup: EstimatorSetup,
    base_seed: int,
    eta_true=None,
) -> MomentSummary:
    """Moments of gamma_T^(-1/2) (theta_T - pooled mean) across replicates.

    Requires a power-law schedule in the rate regime (constant schedules are
    rejected: there is no vanishing-step limit to rescale against).  The
    centering uses the pooled replicate mean since the exact finite-N
    minimiser is not available in closed form.
    """
    if replicates < 200:
        raise InvalidConfiguration("need at least 200 replicates for moment estimates")
    report = validate_schedule(setup.schedule)
    if not report.rate_conditions_ok:
        raise InvalidConfiguration(
            "rescaled moments need a power-law schedule with beta in (1/2, 1)"
        )
    seeds = batch_seeds(base_seed, replicates)
    result = run_batch(
        model, truth, n_particles, dt, n_steps, seeds, [setup], eta_true=eta_true
    )
    ok = ~result.excluded
    if ok.sum() < 200:
        raise RuntimeError("too many excluded replicates for moment estimates")
    final = result.tracks[0].final[ok]
    gamma_T = np.atleast_1d(setup.schedule.value((n_steps - 1) * dt))
    free = setup.free_mask if setup.free_mask is not None else np.ones(final.shape[1], bool)
    free = np.asarray(free, dtype=bool)
    rescaled = (final - final.mean(axis=0)) / np.sqrt(gamma_T)
    return standardized_moments(rescaled[:, free])
