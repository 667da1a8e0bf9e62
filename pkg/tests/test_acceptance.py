"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Statistical criteria run at fixed seeds, so outcomes are reproducible.
Two criteria (3 and 9) encode targets that their pinned constants cannot
meet statistically; the assertions are kept unweakened and fail with an
explanatory message -- see those docstrings for the mechanism.
Run with `pytest tests/test_acceptance.py -v -s`.
"""

import csv
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

from conftest import fd_grad_contrast, fd_grad_pair, random_probe
from ipslearn.batch import EstimatorSetup, batch_seeds, draw_initial_thetas
from ipslearn.config import load_config
from ipslearn.diagnostics import (
    clt_rescaled_moments,
    coupling_distance,
    truth_stationarity,
)
from ipslearn.estimators import LearningRateSchedule
from ipslearn.models import MODEL_ZOO, TruthSchedule, make_model
from ipslearn.objective import (
    contrast_L,
    contrast_ell,
    grad_H,
    grad_h_sym,
    linear_model_analytic_objective,
    surface_scan,
)
from ipslearn.runner import build_setups, run_experiment, run_sweep
from ipslearn.sde import PositionHistory, run_trajectory


def report(num, name, ok, started, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {num:>2} ({name}): {status} "
          f"[{time.time() - started:.1f}s] {detail}")
    return ok


def read_summary(out_dir):
    """summary.csv rows keyed by (estimator_id, param) -> list over replicates."""
    rows = defaultdict(list)
    with open(Path(out_dir) / "summary.csv") as fh:
        for r in csv.DictReader(fh):
            rows[(r["estimator_id"], r["param"])].append(r)
    return rows


def tail_means(rows):
    return np.array([float(r["tail_mean"]) for r in rows])


def test_c01_gradient_oracle():
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst_g, worst_h = 0.0, 0.0
    for mid in sorted(MODEL_ZOO):
        m = make_model(mid)
        for _ in range(100):
            theta, x, y = random_probe(m, rng)
            g = m.grad_pair(theta, x, y)
            fd = fd_grad_pair(m, theta, x, y)
            worst_g = max(worst_g, np.linalg.norm(g - fd) / (1 + np.linalg.norm(g)))
        for _ in range(100):
            theta = rng.standard_normal(m.p)
            theta0 = rng.standard_normal(m.p)
            pos = rng.standard_normal((5, m.d))
            H = grad_H(m, theta, pos[0], pos, theta0)
            fd = fd_grad_contrast(m, theta, pos[0], pos, theta0, contrast_L)
            worst_h = max(worst_h, np.linalg.norm(H - fd) / (1 + np.linalg.norm(H)))
    ok = worst_g <= 1e-6 and worst_h <= 1e-6
    assert report(1, "gradient oracle", ok, t0,
                  f"worst rel err: pair {worst_g:.2e}, contrast {worst_h:.2e}")


def test_c02_algebraic_identities():
    t0 = time.time()
    rng = np.random.default_rng(202)
    N = 7
    worst = 0.0
    for mid in sorted(MODEL_ZOO):
        m = make_model(mid)
        for _ in range(20):
            pos = rng.standard_normal((N, m.d))
            theta = rng.standard_normal(m.p)
            theta0 = rng.standard_normal(m.p)
            x = pos[0]
            sum_l, sum_h = 0.0, np.zeros(m.p)
            for j in range(N):
                for k in range(N):
                    sum_l += contrast_ell(m, theta, x, pos[j], pos[k], pos, theta0)
                    sum_h += grad_h_sym(m, theta, x, pos[j], pos[k], pos, theta0)
            L = contrast_L(m, theta, x, pos, theta0)
            H = grad_H(m, theta, x, pos, theta0)
            worst = max(worst, abs(sum_l / N**2 - L) / (1 + abs(L)))
            worst = max(worst, np.abs(sum_h / N**2 - H).max() / (1 + np.abs(H).max()))
    ok = worst <= 1e-12
    assert report(2, "algebraic identities", ok, t0, f"worst deviation {worst:.2e}")


def test_c03_linear_convergence_fig1(tmp_path):
    """Joint estimation with the published constants.

    The parameter sum converges quickly, but the orthogonal combination
    relaxes at rate gamma*var(mean) ~ 3e-5 per time unit at N=50, i.e. over
    ~3e4 time units against a 1000-unit horizon, so the estimates land on
    the flat ridge at a point set by the initial draw.  Typical per-
    replicate hit rates are ~50-60% and the 8/10 bar is effectively out of
    reach; the assertion is kept unweakened.
    """
    t0 = time.time()
    config = load_config("linear_fig1")
    run_experiment(config, tmp_path)
    rows = read_summary(tmp_path)
    counts = {}
    for est in ("averaged", "triplet"):
        t1 = tail_means(rows[(est, "theta1")])
        t2 = tail_means(rows[(est, "theta2")])
        counts[est] = int(np.sum((np.abs(t1 - 1.0) <= 0.15) & (np.abs(t2 - 0.2) <= 0.15)))
    ok = counts["averaged"] >= 8 and counts["triplet"] >= 8
    assert report(3, "linear convergence (Fig 1)", ok, t0,
                  f"within 0.15: averaged {counts['averaged']}/10, "
                  f"triplet {counts['triplet']}/10")


def test_c04_error_sweep_trend(tmp_path):
    t0 = time.time()
    config = load_config("linear_fig2_sweep")
    run_sweep(config, tmp_path)
    table = defaultdict(dict)
    with open(tmp_path / "sweep.csv") as fh:
        for r in csv.DictReader(fh):
            table[(r["estimator"], int(r["param"]))][int(r["N"])] = (
                float(r["mse"]), float(r["stderr"]))
    ok = True
    details = []
    for p in (0, 1):
        m3, s3 = table[("triplet", p)][3]
        m50, s50 = table[("triplet", p)][50]
        sep = (m50 + 2 * s50) < (m3 - 2 * s3)
        ok &= sep
        details.append(f"triplet p{p}: {m3:.3f}+-{2*s3:.3f} vs {m50:.3f}+-{2*s50:.3f}")
        mses = [table[("averaged", p)][n][0] for n in (3, 5, 10, 25, 50)]
        ratio = max(mses) / min(mses)
        ok &= ratio <= 2.0
        details.append(f"averaged p{p} ratio {ratio:.2f}")
    assert report(4, "error sweep trend (Fig 2)", ok, t0, "; ".join(details))


def test_c05_ridge_and_analytic_oracle():
    t0 = time.time()
    m = make_model("linear", sigma=1.0)
    theta0 = [1.0, 0.2]
    ax1 = np.array([0.5, 0.75, 1.0, 1.25, 1.5])
    ax2 = np.array([-0.3, -0.05, 0.2, 0.45, 0.7])
    scan = surface_scan(m, (ax1, ax2), 50, 0.1, 100000, 10000, "L_iN",
                        seed=9, theta_true=theta0)
    worst_off = 0.0
    off_max = 0.0
    on_ridge = []
    for i, t1 in enumerate(ax1):
        for j, t2 in enumerate(ax2):
            ds = (t1 + t2) - 1.2
            if abs(ds) >= 0.5:
                ana = linear_model_analytic_objective([t1, t2], theta0, 1.0)
                worst_off = max(worst_off, abs(scan.values[i, j] - ana) / ana)
                off_max = max(off_max, scan.values[i, j])
            elif abs(ds) < 1e-9:
                on_ridge.append(scan.values[i, j])
    ok = worst_off <= 0.10 and max(on_ridge) <= 0.05 * off_max
    assert report(5, "ridge vs analytic oracle", ok, t0,
                  f"off-ridge err {worst_off:.3f}, on-ridge max "
                  f"{max(on_ridge):.2e} vs bound {0.05 * off_max:.2e}")


def test_c06_stationary_moments():
    t0 = time.time()
    m = make_model("linear", sigma=1.0)
    truth = TruthSchedule.constant([1.0, 0.2])
    steps = 100000
    hist = PositionHistory(steps, 50, 1)
    run_trajectory(m, truth, 50, 0.1, steps, seed=11, observers=[hist])
    P = hist.positions[steps // 10:]
    xbar = P.mean(axis=1)
    v_mean = xbar.var()
    v_dev = (P - P.mean(axis=1, keepdims=True)).var()
    want_mean = 1.0 / (2 * 1.0 * 50)
    want_dev = 1.0 * (1 - 1 / 50) / (2 * 1.2)
    e1 = abs(v_mean - want_mean) / want_mean
    e2 = abs(v_dev - want_dev) / want_dev
    ok = e1 <= 0.10 and e2 <= 0.10
    assert report(6, "stationary moments", ok, t0,
                  f"var(mean) err {e1:.3f}, var(dev) err {e2:.3f}")


def test_c07_truth_stationarity():
    t0 = time.time()
    m = make_model("linear", sigma=1.0)
    truth = TruthSchedule.constant([1.0, 0.2])
    sched = LearningRateSchedule("constant", 1.0, scale=np.array([8e-3, 5e-3]))
    mean, se, z = truth_stationarity(m, truth, 50, 0.1, 100000, 7, sched)
    ok = bool(np.all(np.abs(z) <= 3.0))
    assert report(7, "truth-pinned stationarity", ok, t0,
                  f"z = ({z[0]:+.2f}, {z[1]:+.2f})")


def test_c08_double_well_bias(tmp_path):
    t0 = time.time()
    ok = True
    details = []
    truth_vals = np.array([1.0, 2.0, 2.0])
    for sigma, cfg_name in ((1.0, "doublewell_fig5"), (2.0, "doublewell_fig6")):
        config = load_config(cfg_name)
        biases = {}
        for n in (3, 10, 50):
            config.n_particles = n
            out = tmp_path / f"s{sigma}_n{n}"
            run_experiment(config, out)
            rows = read_summary(out)
            for est in ("averaged", "triplet"):
                for p, name in ((0, "theta1"), (1, "theta2")):
                    pooled = tail_means(rows[(est, name)]).mean()
                    biases[(est, p, n)] = abs(pooled - truth_vals[p])
        tri_shrinks = any(
            biases[("triplet", p, 3)] > biases[("triplet", p, 50)] for p in (0, 1)
        )
        avg_small = all(
            biases[("averaged", p, n)] <= 0.2 for p in (0, 1) for n in (3, 10, 50)
        )
        ok &= tri_shrinks and avg_small
        details.append(
            f"sigma={sigma}: triplet N3>{'>' if tri_shrinks else '!>'}N50, "
            f"max avg bias {max(biases[('averaged', p, n)] for p in (0, 1) for n in (3, 10, 50)):.3f}"
        )
    assert report(8, "double-well finite-N bias", ok, t0, "; ".join(details))


def test_c09_kuramoto_tracking(tmp_path):
    """Changepoint tracking at the pinned constants.

    Post-switch the oscillators decouple and the mean interaction signal
    drops to E[m^2] ~ 0.014, capping the information available to any
    single-residual update at a standard deviation of ~0.4 over the
    450-unit post-switch window; the 0.15 tolerance cannot be met by either
    estimator for any constant learning rate.  The assertion is kept
    unweakened.
    """
    t0 = time.time()
    config = load_config("kuramoto_changepoint")
    run_experiment(config, tmp_path)
    rows = read_summary(tmp_path)
    counts = {
        est: int(np.sum(np.abs(tail_means(rows[(est, "theta1")]) - 0.2) <= 0.15))
        for est in ("averaged", "triplet")
    }
    ok = counts["averaged"] >= 8 and counts["triplet"] >= 8
    assert report(9, "kuramoto changepoint tracking", ok, t0,
                  f"post-switch within 0.15: averaged {counts['averaged']}/10, "
                  f"triplet {counts['triplet']}/10")


def test_c10_diffusion_estimator(tmp_path):
    t0 = time.time()
    config = load_config("vol32")
    run_experiment(config, tmp_path)
    rows = read_summary(tmp_path)
    excluded = np.array([r["excluded"] == "1" for r in rows[("diffusion", "eta1")]])
    tails = tail_means(rows[("diffusion", "eta1")])
    hits = int(np.sum((np.abs(tails - 0.7) <= 0.1) & ~excluded))
    ok = hits >= 8
    assert report(10, "diffusion-parameter estimation", ok, t0,
                  f"eta within 0.1 in {hits}/10 (mean {tails[~excluded].mean():.3f})")


def test_c11_propagation_of_chaos_trend():
    t0 = time.time()
    m = make_model("linear", sigma=1.0)
    truth = TruthSchedule.constant([1.0, 0.2])
    means = []
    for n_small in (5, 10, 20):
        vals = [
            coupling_distance(m, truth, n_small, 500, 0.1, 2000, seed).mean()
            for seed in (1, 2, 3)
        ]
        means.append(float(np.mean(vals)))
    ok = means[0] > means[1] > means[2]
    assert report(11, "propagation-of-chaos trend", ok, t0,
                  "distances " + " > ".join(f"{v:.2e}" for v in means))


def test_c12_empirical_clt():
    t0 = time.time()
    config = load_config("linear_clt")
    model = config.make_model()
    seeds = batch_seeds(config.base_seed, config.replicates)
    thetas, etas = draw_initial_thetas(seeds, config.theta_init_low, config.theta_init_high)
    setup = build_setups(config, model, thetas, etas)[0]
    summary = clt_rescaled_moments(
        model, config.truth, config.n_particles, config.dt, config.n_steps,
        config.replicates, setup, config.base_seed,
    )
    skew = float(summary.skewness[0])
    kurt = float(summary.excess_kurtosis[0])
    ok = abs(skew) <= 0.3 and -0.5 <= kurt <= 0.5
    assert report(12, "empirical CLT moments", ok, t0,
                  f"skew {skew:+.3f}, excess kurtosis {kurt:+.3f} "
                  f"({summary.replicates} replicates)")


def test_c13_byte_identical_reruns(tmp_path):
    t0 = time.time()
    config = load_config("doublewell_fig7_rmsprop")
    m1 = run_experiment(config, tmp_path / "a")
    m2 = run_experiment(config, tmp_path / "b")
    same_manifest = m1 == m2
    same_bytes = all(
        (tmp_path / "a" / f.name).read_bytes() == (tmp_path / "b" / f.name).read_bytes()
        for f in sorted((tmp_path / "a").iterdir())
    )
    ok = same_manifest and same_bytes
    assert report(13, "byte-identical reruns", ok, t0,
                  f"{len(m1['artifacts'])} artifacts compared")
