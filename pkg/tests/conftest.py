"""Shared helpers: finite-difference oracles and random probe generators."""

import numpy as np
import pytest

from ipslearn.models import MODEL_ZOO, make_model


def fd_grad_pair(model, theta, x, y, h=1e-6):
    """Central finite difference of the pair drift in theta, shape (p, d)."""
    out = np.empty((model.p, model.d))
    for k in range(model.p):
        e = np.zeros(model.p)
        e[k] = h
        out[k] = (model.drift_pair(theta + e, x, y) - model.drift_pair(theta - e, x, y)) / (2 * h)
    return out


def fd_grad_contrast(model, theta, x, positions, theta_true, contrast, h=1e-5):
    """Central finite difference of a scalar contrast in theta, shape (p,)."""
    out = np.empty(model.p)
    for k in range(model.p):
        e = np.zeros(model.p)
        e[k] = h
        out[k] = (
            contrast(model, theta + e, x, positions, theta_true)
            - contrast(model, theta - e, x, positions, theta_true)
        ) / (2 * h)
    return out


def random_probe(model, rng):
    """One (theta, x, y) probe with O(1) magnitudes."""
    theta = rng.standard_normal(model.p)
    x = rng.standard_normal(model.d)
    y = rng.standard_normal(model.d)
    return theta, x, y


@pytest.fixture(params=sorted(MODEL_ZOO))
def zoo_model(request):
    return make_model(request.param)
