"""Model zoo for weakly interacting particle systems.

Each model supplies the pairwise drift b(theta, x, y), its parameter
gradient g = d_theta b, the diffusion specification, a noise mask, the
residual weighting mode, and the admissible parameter set.  The drift of
particle i in an N-particle system is the empirical-measure average

    B_i(theta, x) = (1/N) sum_j b(theta, x_i, x_j),

with the self term j = i included.

All evaluators broadcast over leading batch axes: theta has shape (..., p),
states have shape (..., d), and ensembles have shape (..., N, d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import InvalidConfiguration


class DimensionMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# Parameter vectors and admissible sets


@dataclass(frozen=True)
class Box:
    """Per-coordinate closed interval bounds, possibly infinite."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise DimensionMismatch("bound shapes differ")
        if np.any(lo > hi):
            raise InvalidConfiguration("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls, p: int) -> "Box":
        return cls(np.full(p, -np.inf), np.full(p, np.inf))

    def contains(self, values: np.ndarray) -> np.ndarray:
        """Elementwise-all membership over the last axis."""
        v = np.asarray(values)
        return np.all((v >= self.lower) & (v <= self.upper), axis=-1)


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    admissible: Box

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise DimensionMismatch("parameter vector must be 1-D and non-empty")
        if v.size != self.admissible.lower.size:
            raise DimensionMismatch("bounds do not match parameter dimension")
        object.__setattr__(self, "values", v)


# ---------------------------------------------------------------------------
# Truth schedules


@dataclass(frozen=True)
class TruthSchedule:
    """Time-varying true parameter: constant, changepoint, or linear ramp.

    The changepoint is right-continuous (theta_end applies from switch_time
    on); the ramp interpolates affinely and clamps at the horizon.
    """

    kind: str
    start: np.ndarray
    end: np.ndarray | None = None
    switch_time: float | None = None
    horizon: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "changepoint", "ramp"):
            raise InvalidConfiguration(f"unknown truth schedule kind {self.kind!r}")
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        if self.end is not None:
            object.__setattr__(self, "end", np.asarray(self.end, dtype=float))
        if self.kind == "changepoint":
            if self.end is None or self.switch_time is None:
                raise InvalidConfiguration("changepoint needs end values and switch_time")
        if self.kind == "ramp":
            if self.end is None or self.horizon is None or self.horizon <= 0:
                raise InvalidConfiguration("ramp needs end values and a positive horizon")

    def at(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return self.start
        if self.kind == "changepoint":
            return self.end if t >= self.switch_time else self.start
        frac = min(max(t / self.horizon, 0.0), 1.0)
        return self.start + (self.end - self.start) * frac

    @classmethod
    def constant(cls, values) -> "TruthSchedule":
        return cls("constant", np.asarray(values, dtype=float))


def truth_at(schedule: TruthSchedule, t: float) -> np.ndarray:
    if t < 0:
        raise InvalidConfiguration("t must be non-negative")
    return schedule.at(t)


# ---------------------------------------------------------------------------
# Diffusion specifications


@dataclass(frozen=True)
class ConstantDiffusion:
    """Constant matrix diffusion; rows outside the noise mask are zero."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "sigma", s)

    @property
    def parametric(self) -> bool:
        return False

    def apply(self, eta, positions, dw):
        return dw @ self.sigma.T


@dataclass(frozen=True)
class PowerStateDiffusion:
    """Scalar state-dependent diffusion sigma(eta, x) = eta * |x|**exponent.

    Only defined for d = 1.  sigma_sq and its eta-derivative feed the
    quadratic-variation matching update for the diffusion parameter.
    """

    exponent: float = 1.5

    @property
    def parametric(self) -> bool:
        return True

    def apply(self, eta, positions, dw):
        return eta * np.abs(positions) ** self.exponent * dw

    def matrix(self, eta, x):
        """Diffusion coefficient at a single state, as a (d, d) matrix."""
        return np.atleast_2d(eta * np.abs(x) ** self.exponent)

    def sigma_sq(self, eta, x):
        return eta**2 * np.abs(x) ** (2 * self.exponent)

    def d_eta_sigma_sq(self, eta, x):
        return 2.0 * eta * np.abs(x) ** (2 * self.exponent)


# ---------------------------------------------------------------------------
# Model base


def _col(theta, k):
    """Coefficient k of theta, keeping a trailing axis for state broadcast."""
    return np.asarray(theta)[..., k, None]


class InteractionModel:
    """Base class: generic mean-field evaluators built from the pair drift.

    Subclasses define drift_pair / grad_pair and may override the mean-field
    evaluators with closed forms (the generic ones are O(N) per point and
    serve as brute-force oracles in tests).
    """

    model_id: str = ""
    p: int = 0
    d: int = 0
    param_names: tuple = ()
    weighting: str = "inverse-diffusion"  # or "identity"
    noise_mask: np.ndarray = None
    diffusion = None
    theta_bounds: Box = None
    eta_bounds: Box | None = None
    eta_names: tuple = ()

    # -- pairwise ----------------------------------------------------------

    def drift_pair(self, theta, x, y):
        raise NotImplementedError

    def grad_pair(self, theta, x, y):
        raise NotImplementedError

    # -- empirical-measure forms -------------------------------------------

    def drift_mean(self, theta, x, positions):
        """B(theta, x, mu_N): pair drift averaged over the ensemble."""
        t = np.asarray(theta)[..., None, :]
        xe = np.asarray(x)[..., None, :]
        return self.drift_pair(t, xe, positions).mean(axis=-2)

    def grad_mean(self, theta, x, positions):
        """G(theta, x, mu_N) = d_theta B, shape (..., p, d)."""
        t = np.asarray(theta)[..., None, :]
        xe = np.asarray(x)[..., None, :]
        return self.grad_pair(t, xe, positions).mean(axis=-3)

    def drift_ensemble(self, theta, positions):
        """Mean-field drift of every particle, shape (..., N, d).

        theta is a plain (p,) vector here: the simulator always advances the
        whole ensemble under one parameter value.
        """
        xi = positions[..., :, None, :]
        xj = positions[..., None, :, :]
        return self.drift_pair(np.asarray(theta), xi, xj).mean(axis=-2)

    # -- validation ----------------------------------------------------------

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DimensionMismatch(
                f"{self.model_id}: state dimension {x.shape[-1]} != {self.d}"
            )
        return x

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.p:
            raise DimensionMismatch(
                f"{self.model_id}: parameter dimension {theta.shape[-1]} != {self.p}"
            )
        return theta


def weight_matrix(model: InteractionModel, mode: str | None = None) -> np.ndarray:
    """Residual weighting: (sigma sigma^T)^-1 on the masked block, or identity.

    `mode` overrides the model's default weighting.  Identity-weighting
    models never touch the inverse, so a singular sigma block (degenerate
    noise) is fine there.
    """
    if (mode or model.weighting) == "identity":
        return np.eye(model.d)
    sigma = model.diffusion.sigma
    mask = np.asarray(model.noise_mask, dtype=bool)
    sub = sigma[np.ix_(mask, mask)]
    inv = np.linalg.inv(sub @ sub.T)
    out = np.zeros((model.d, model.d))
    out[np.ix_(mask, mask)] = inv
    return out


# ---------------------------------------------------------------------------
# The zoo


class LinearModel(InteractionModel):
    """b(theta, x, y) = -theta1*x - theta2*(x - y), d = 1."""

    model_id = "linear"
    p, d = 2, 1
    param_names = ("theta1", "theta2")

    def __init__(self, sigma=1.0):
        self.sigma_value = float(sigma)
        self.diffusion = ConstantDiffusion(np.array([[self.sigma_value]]))
        self.noise_mask = np.array([True])
        self.theta_bounds = Box.unbounded(self.p)

    def drift_pair(self, theta, x, y):
        return -_col(theta, 0) * x - _col(theta, 1) * (x - y)

    def grad_pair(self, theta, x, y):
        x, y = np.broadcast_arrays(x, y)
        return np.stack([-x, -(x - y)], axis=-2)

    def drift_mean(self, theta, x, positions):
        xbar = positions.mean(axis=-2)
        return -_col(theta, 0) * x - _col(theta, 1) * (x - xbar)

    def grad_mean(self, theta, x, positions):
        xbar = positions.mean(axis=-2)
        x, xbar = np.broadcast_arrays(x, xbar)
        return np.stack([-x, -(x - xbar)], axis=-2)

    def drift_ensemble(self, theta, positions):
        xbar = positions.mean(axis=-2, keepdims=True)
        return -theta[0] * positions - theta[1] * (positions - xbar)


class DoubleWellModel(InteractionModel):
    """b = -(theta1*x^3 - theta2*x) - theta3*(x - y), d = 1.

    Bistable confinement with quadratic interaction; the mean-field limit
    has a phase transition near sigma ~ 1.9 for the default truth.
    """

    model_id = "double-well"
    p, d = 3, 1
    param_names = ("theta1", "theta2", "theta3")

    def __init__(self, sigma=1.0):
        self.sigma_value = float(sigma)
        self.diffusion = ConstantDiffusion(np.array([[self.sigma_value]]))
        self.noise_mask = np.array([True])
        self.theta_bounds = Box.unbounded(self.p)

    def drift_pair(self, theta, x, y):
        return -(_col(theta, 0) * x**3 - _col(theta, 1) * x) - _col(theta, 2) * (x - y)

    def grad_pair(self, theta, x, y):
        x, y = np.broadcast_arrays(x, y)
        return np.stack([-(x**3), x, -(x - y)], axis=-2)

    def drift_mean(self, theta, x, positions):
        xbar = positions.mean(axis=-2)
        return -(_col(theta, 0) * x**3 - _col(theta, 1) * x) - _col(theta, 2) * (x - xbar)

    def grad_mean(self, theta, x, positions):
        xbar = positions.mean(axis=-2)
        x, xbar = np.broadcast_arrays(x, xbar)
        return np.stack([-(x**3), x, -(x - xbar)], axis=-2)

    def drift_ensemble(self, theta, positions):
        xbar = positions.mean(axis=-2, keepdims=True)
        return -(theta[0] * positions**3 - theta[1] * positions) - theta[2] * (
            positions - xbar
        )


class FitzHughNagumoModel(InteractionModel):
    """Coupled neurons: state (v, w) = (voltage, recovery), noise on v only.

        dv = [theta1*(v - v^3/3 - w) - theta2*(v - v_j)] dt + sigma dW
        dw = [v + theta3 - theta4*w] dt

    Degenerate noise, so residuals are identity-weighted.
    """

    model_id = "fitzhugh-nagumo"
    p, d = 4, 2
    param_names = ("theta1", "theta2", "theta3", "theta4")
    weighting = "identity"

    def __init__(self, sigma=1.0):
        self.sigma_value = float(sigma)
        self.diffusion = ConstantDiffusion(np.array([[self.sigma_value, 0.0], [0.0, 0.0]]))
        self.noise_mask = np.array([True, False])
        self.theta_bounds = Box.unbounded(self.p)

    def drift_pair(self, theta, x, y):
        v, w = x[..., 0], x[..., 1]
        vj = y[..., 0]
        b1 = (
            np.asarray(theta)[..., 0] * (v - v**3 / 3.0 - w)
            - np.asarray(theta)[..., 1] * (v - vj)
        )
        b2 = v + np.asarray(theta)[..., 2] - np.asarray(theta)[..., 3] * w
        return np.stack([b1, b2], axis=-1)

    def grad_pair(self, theta, x, y):
        v, w = x[..., 0], x[..., 1]
        vj = np.broadcast_to(y[..., 0], v.shape) if y[..., 0].shape != v.shape else y[..., 0]
        v, w, vj = np.broadcast_arrays(v, w, vj)
        zero = np.zeros_like(v)
        one = np.ones_like(v)
        rows = [
            np.stack([v - v**3 / 3.0 - w, zero], axis=-1),
            np.stack([-(v - vj), zero], axis=-1),
            np.stack([zero, one], axis=-1),
            np.stack([zero, -w], axis=-1),
        ]
        return np.stack(rows, axis=-2)

    def drift_mean(self, theta, x, positions):
        vbar = positions[..., 0].mean(axis=-1)
        v, w = x[..., 0], x[..., 1]
        b1 = (
            np.asarray(theta)[..., 0] * (v - v**3 / 3.0 - w)
            - np.asarray(theta)[..., 1] * (v - vbar)
        )
        b2 = v + np.asarray(theta)[..., 2] - np.asarray(theta)[..., 3] * w
        return np.stack([b1, b2], axis=-1)

    def grad_mean(self, theta, x, positions):
        vbar = positions[..., 0].mean(axis=-1, keepdims=True)
        ybar = np.concatenate([vbar, vbar], axis=-1)  # only component 0 is read
        return self.grad_pair(theta, x, ybar)

    def drift_ensemble(self, theta, positions):
        v, w = positions[..., 0], positions[..., 1]
        vbar = v.mean(axis=-1, keepdims=True)
        b1 = theta[0] * (v - v**3 / 3.0 - w) - theta[1] * (v - vbar)
        b2 = v + theta[2] - theta[3] * w
        return np.stack([b1, b2], axis=-1)


class KuramotoModel(InteractionModel):
    """Coupled phase oscillators: b = -theta * sin(x - y), d = 1.

    Phases evolve unwrapped on the real line; sin handles the periodicity.
    Critical coupling is sigma^2 for the mean-field limit.
    """

    model_id = "kuramoto"
    p, d = 1, 1
    param_names = ("theta1",)

    def __init__(self, sigma=1.0):
        self.sigma_value = float(sigma)
        self.diffusion = ConstantDiffusion(np.array([[self.sigma_value]]))
        self.noise_mask = np.array([True])
        self.theta_bounds = Box.unbounded(self.p)

    @property
    def critical_coupling(self):
        return self.sigma_value**2

    def drift_pair(self, theta, x, y):
        return -_col(theta, 0) * np.sin(x - y)

    def grad_pair(self, theta, x, y):
        s = np.sin(x - y)
        return -s[..., None, :]

    # mean_j sin(x - x_j) = sin(x) mean(cos x_j) - cos(x) mean(sin x_j)
    def _mean_sin(self, x, positions):
        cbar = np.cos(positions).mean(axis=-2)
        sbar = np.sin(positions).mean(axis=-2)
        return np.sin(x) * cbar - np.cos(x) * sbar

    def drift_mean(self, theta, x, positions):
        return -_col(theta, 0) * self._mean_sin(x, positions)

    def grad_mean(self, theta, x, positions):
        return -self._mean_sin(x, positions)[..., None, :]

    def drift_ensemble(self, theta, positions):
        cbar = np.cos(positions).mean(axis=-2, keepdims=True)
        sbar = np.sin(positions).mean(axis=-2, keepdims=True)
        return -theta[0] * (np.sin(positions) * cbar - np.cos(positions) * sbar)


class CuckerSmaleModel(InteractionModel):
    """Flocking: state (q, v) = (position, velocity), noise on v only.

        dq = v dt
        dv = -[theta1*q + theta2 * mean_j psi(theta3, (q-q_j)^2) (v - v_j)] dt
             + sigma dW

    with communication rate psi(theta3, u) = (1 + u)^(-theta3).
    """

    model_id = "cucker-smale"
    p, d = 3, 2
    param_names = ("theta1", "theta2", "theta3")
    weighting = "identity"

    def __init__(self, sigma=1.0):
        self.sigma_value = float(sigma)
        self.diffusion = ConstantDiffusion(np.array([[0.0, 0.0], [0.0, self.sigma_value]]))
        self.noise_mask = np.array([False, True])
        self.theta_bounds = Box.unbounded(self.p)

    @staticmethod
    def _psi(theta3, u):
        return (1.0 + u) ** (-theta3)

    def drift_pair(self, theta, x, y):
        q, v = x[..., 0], x[..., 1]
        qj, vj = y[..., 0], y[..., 1]
        t1 = np.asarray(theta)[..., 0]
        t2 = np.asarray(theta)[..., 1]
        t3 = np.asarray(theta)[..., 2]
        u = (q - qj) ** 2
        b2 = -t1 * q - t2 * self._psi(t3, u) * (v - vj)
        b1 = np.broadcast_to(v, b2.shape)
        return np.stack([b1, b2], axis=-1)

    def grad_pair(self, theta, x, y):
        q, v = x[..., 0], x[..., 1]
        qj, vj = y[..., 0], y[..., 1]
        t2 = np.asarray(theta)[..., 1]
        t3 = np.asarray(theta)[..., 2]
        u = (q - qj) ** 2
        psi = self._psi(t3, u)
        dv = v - vj
        zero = np.zeros(np.broadcast_shapes(q.shape, dv.shape, t2.shape))
        rows = [
            np.stack([zero, np.broadcast_to(-q, zero.shape)], axis=-1),
            np.stack([zero, -psi * dv + zero], axis=-1),
            np.stack([zero, t2 * np.log1p(u) * psi * dv + zero], axis=-1),
        ]
        return np.stack(rows, axis=-2)

    def drift_ensemble(self, theta, positions):
        q, v = positions[..., 0], positions[..., 1]
        u = (q[..., :, None] - q[..., None, :]) ** 2
        psi = self._psi(theta[2], u)
        inter = (psi * (v[..., :, None] - v[..., None, :])).mean(axis=-1)
        b2 = -theta[0] * q - theta[1] * inter
        return np.stack([v, b2], axis=-1)


class Vol32Model(InteractionModel):
    """Mean-field 3/2 volatility: b = -x*(theta1*|x| - theta2) - theta3*(x - y),
    diffusion sigma(eta, x) = eta * |x|^(3/2), d = 1.

    The diffusion parameter eta is estimated separately from realized
    quadratic variation; drift residuals are identity-weighted.
    """

    model_id = "vol32"
    p, d = 3, 1
    param_names = ("theta1", "theta2", "theta3")
    eta_names = ("eta1",)
    weighting = "identity"

    def __init__(self):
        self.diffusion = PowerStateDiffusion(exponent=1.5)
        self.noise_mask = np.array([True])
        self.theta_bounds = Box.unbounded(self.p)
        self.eta_bounds = Box(np.array([0.0]), np.array([np.inf]))

    def drift_pair(self, theta, x, y):
        return -x * (_col(theta, 0) * np.abs(x) - _col(theta, 1)) - _col(theta, 2) * (x - y)

    def grad_pair(self, theta, x, y):
        x, y = np.broadcast_arrays(x, y)
        return np.stack([-x * np.abs(x), x, -(x - y)], axis=-2)

    def drift_mean(self, theta, x, positions):
        xbar = positions.mean(axis=-2)
        return -x * (_col(theta, 0) * np.abs(x) - _col(theta, 1)) - _col(theta, 2) * (
            x - xbar
        )

    def grad_mean(self, theta, x, positions):
        xbar = positions.mean(axis=-2)
        x, xbar = np.broadcast_arrays(x, xbar)
        return np.stack([-x * np.abs(x), x, -(x - xbar)], axis=-2)

    def drift_ensemble(self, theta, positions):
        xbar = positions.mean(axis=-2, keepdims=True)
        return -positions * (theta[0] * np.abs(positions) - theta[1]) - theta[2] * (
            positions - xbar
        )


MODEL_ZOO = {
    "linear": LinearModel,
    "double-well": DoubleWellModel,
    "fitzhugh-nagumo": FitzHughNagumoModel,
    "kuramoto": KuramotoModel,
    "cucker-smale": CuckerSmaleModel,
    "vol32": Vol32Model,
}


def make_model(model_id: str, **kwargs) -> InteractionModel:
    if model_id not in MODEL_ZOO:
        raise InvalidConfiguration(
            f"unknown model {model_id!r}; available: {sorted(MODEL_ZOO)}"
        )
    return MODEL_ZOO[model_id](**kwargs)


# ---------------------------------------------------------------------------
# Checked evaluation helpers


def eval_drift_pair(model, theta, x, y):
    theta = model.check_theta(theta)
    x = model.check_point(x)
    y = model.check_point(y)
    return model.drift_pair(theta, x, y)


def eval_grad_pair(model, theta, x, y):
    theta = model.check_theta(theta)
    x = model.check_point(x)
    y = model.check_point(y)
    return model.grad_pair(theta, x, y)


def eval_drift_mean(model, theta, i, positions):
    theta = model.check_theta(theta)
    positions = np.asarray(positions, dtype=float)
    if not 0 <= i < positions.shape[-2]:
        raise DimensionMismatch(f"particle index {i} out of range")
    return model.drift_mean(theta, positions[..., i, :], positions)


def eval_grad_mean(model, theta, i, positions):
    theta = model.check_theta(theta)
    positions = np.asarray(positions, dtype=float)
    if not 0 <= i < positions.shape[-2]:
        raise DimensionMismatch(f"particle index {i} out of range")
    return model.grad_mean(theta, positions[..., i, :], positions)


def eval_diffusion(model, eta, i, positions):
    """Diffusion matrix at particle i; adds d_eta(sigma sigma^T) if parametric."""
    positions = np.asarray(positions, dtype=float)
    x = positions[..., i, :]
    if not model.diffusion.parametric:
        return model.diffusion.sigma
    eta = np.asarray(eta, dtype=float)
    return model.diffusion.matrix(eta, x), model.diffusion.d_eta_sigma_sq(eta, x)
