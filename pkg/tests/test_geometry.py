import numpy as np
import pytest

from nullcauchy.geometry import GeometryError, MetricField, algebraic_projection, christoffel, \
    covariant_derivative, curvature, divergence, rm_form
from nullcauchy.grid import Field

from conftest import torus


def conformal_metric(N, amp=0.2):
    g = torus(2, N)
    x, y = g.coords()
    f = amp * (np.sin(x) + 0.5 * np.cos(y))
    h = np.exp(2 * f)[..., None, None] * np.eye(2)
    lap = -amp * (np.sin(x) + 0.5 * np.cos(y))
    return MetricField(Field(g, h, (2, 0), symmetric=True)), f, lap


def test_flat_metric_has_no_curvature():
    g = torus(3, 8)
    m = MetricField(Field(g, np.broadcast_to(np.diag([1.0, 2.0, 3.0]), g.shape + (3, 3)), (2, 0)))
    assert np.max(np.abs(christoffel(m).data)) < 1e-14
    assert np.max(np.abs(curvature(m).riemann.data)) < 1e-14


def test_conformal_scalar_curvature_oracle():
    # e^{2f} delta in 2d: scal = -2 e^{-2f} Laplace(f)
    errs = []
    for N in (16, 32):
        m, f, lap = conformal_metric(N)
        errs.append(np.max(np.abs(curvature(m).scal.data + 2 * np.exp(-2 * f) * lap)))
    assert errs[1] < errs[0] / 12


def test_riemann_symmetries_and_bianchi():
    m, _, _ = conformal_metric(16)
    R = rm_form(curvature(m))
    assert np.max(np.abs(R + np.swapaxes(R, -4, -3))) < 1e-12
    assert np.max(np.abs(R + np.swapaxes(R, -2, -1))) < 1e-12
    pair = np.moveaxis(R, (-4, -3), (-2, -1))
    assert np.max(np.abs(R - pair)) < 1e-12
    cyc = R + np.einsum("...abcd->...acdb", R) + np.einsum("...abcd->...adbc", R)
    assert np.max(np.abs(cyc)) < 1e-12


def test_algebraic_projection_is_idempotent(rng):
    r = rng.standard_normal((4, 4, 4, 4))
    p = algebraic_projection(r)
    assert np.max(np.abs(algebraic_projection(p) - p)) < 1e-13


def test_metric_is_parallel():
    m, _, _ = conformal_metric(32)
    nab = covariant_derivative(m.field, m).data
    assert np.max(np.abs(nab)) < 1e-5


def test_divergence_sign_on_gradient():
    # for a vector the divergence is nabla_a V^a, no sign
    g = torus(2, 32)
    x, y = g.coords()
    m = MetricField(Field(g, np.broadcast_to(np.eye(2), g.shape + (2, 2)), (2, 0)))
    V = np.stack([np.cos(x), -np.sin(y)], -1)
    div = divergence(Field(g, V, (0, 1)), m).data
    assert np.max(np.abs(div + np.sin(x) + np.cos(y))) < 2e-4


def test_bad_metrics_rejected():
    g = torus(2, 8)
    a = np.broadcast_to(np.diag([1.0, -1.0]), g.shape + (2, 2))
    with pytest.raises(GeometryError):
        MetricField(Field(g, a, (2, 0)))
    with pytest.raises(GeometryError):
        MetricField(Field(g, np.zeros(g.shape + (3, 2)), (2, 0)))
