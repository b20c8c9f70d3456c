"""Geometry kernel: metrics, projections, curvature, frames, Laplacian."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphflow import geometry as geo
from graphflow import initdata
from graphflow.errors import SingularMetric
from graphflow.forms import base_volume_form


def unit_circle(N=128, R=1.0):
    return initdata.circle(R, N)


# ---------------------------------------------------------------------------
# metric and projection


def test_metric_of_scaled_axis():
    # dF = (1, 2) along one direction: g = 5, sqrt(det g) = sqrt(5)
    first = np.array([[[1.0, 2.0]]])
    g, g_inv, sdet = geo.metric_fields(first)
    assert g[0, 0, 0] == pytest.approx(5.0)
    assert g_inv[0, 0, 0] == pytest.approx(0.2)
    assert sdet[0] == pytest.approx(math.sqrt(5.0))


def test_projection_of_diagonal_line():
    # tangent (1,1)/sqrt(2) in R^2: normal projector [[.5,-.5],[-.5,.5]]
    first = np.array([[[1.0, 1.0]]])
    _, g_inv, _ = geo.metric_fields(first)
    P = geo.normal_projection_fields(first, g_inv)
    expected = np.array([[0.5, -0.5], [-0.5, 0.5]])
    np.testing.assert_allclose(P[0], expected, atol=1e-15)


def test_projection_is_idempotent_and_kills_tangents(rng):
    first = rng.normal(size=(5, 2, 4))
    _, g_inv, _ = geo.metric_fields(first)
    P = geo.normal_projection_fields(first, g_inv)
    np.testing.assert_allclose(np.einsum("...ab,...bc->...ac", P, P), P, atol=1e-12)
    np.testing.assert_allclose(np.einsum("...ab,...ib->...ia", P, first), 0.0,
                               atol=1e-12)


def test_singular_metric_raises():
    first = np.zeros((1, 1, 2))
    with pytest.raises(SingularMetric):
        geo.metric_fields(first)


# ---------------------------------------------------------------------------
# curvature on exact fixtures


def test_circle_curvature():
    g = unit_circle(256, R=2.0)
    gf = geo.geometry_fields(g)
    # |A|^2 = 1/R^2 = 0.25, |H| = 1/R = 0.5
    np.testing.assert_allclose(gf.A_norm2, 0.25, rtol=2e-3)
    np.testing.assert_allclose(np.linalg.norm(gf.H, axis=-1), 0.5, rtol=2e-3)
    # H points inward: H = -position / R^2
    np.testing.assert_allclose(gf.H, -g.positions / 4.0, atol=2e-3)


def test_sphere_curvature_masked():
    g = initdata.sphere(2.0, 32)
    gf = geo.geometry_fields(g)
    Hn = np.linalg.norm(gf.H, axis=-1)[g.diag_mask]
    A2 = gf.A_norm2[g.diag_mask]
    # |H| = n/R = 1, |A|^2 = n/R^2 = 0.5
    np.testing.assert_allclose(Hn, 1.0, rtol=2e-2)
    np.testing.assert_allclose(A2, 0.5, rtol=2e-2)


def test_flat_graph_everything_vanishes():
    vals = np.zeros((16, 16, 2))
    g = geo.GraphGrid(n=2, m=2, shape=(16, 16), spacing=(0.1, 0.1), values=vals)
    gf = geo.geometry_fields(g)
    np.testing.assert_allclose(gf.A_norm2, 0.0, atol=1e-14)
    np.testing.assert_allclose(gf.sqrt_det_g, 1.0, atol=1e-14)


def test_linear_graph_has_zero_second_jet():
    x = np.arange(16) * 0.125
    vals = (0.3 * x)[:, None]
    g = geo.GraphGrid(n=1, m=1, shape=(16,), spacing=(0.125,), values=vals)
    # a linear periodic graph has a wrap discontinuity; build from a constant
    g = geo.GraphGrid(n=1, m=1, shape=(16,), spacing=(0.125,),
                      values=np.full((16, 1), 0.7))
    first, second = geo.jet_fields(g)
    np.testing.assert_allclose(second, 0.0, atol=1e-14)
    np.testing.assert_allclose(first[..., 0, 0], 1.0)   # base part exact
    np.testing.assert_allclose(first[..., 0, 1], 0.0, atol=1e-14)


# ---------------------------------------------------------------------------
# frames


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_frames_orthonormal_and_split(seed):
    rng = np.random.default_rng(seed)
    first = rng.normal(size=(3, 2, 5))
    _, g_inv, _ = geo.metric_fields(first)
    P = geo.normal_projection_fields(first, g_inv)
    tangent, normal = geo.frames_fields(first, P)
    full = np.concatenate([tangent, normal], axis=-2)
    gram = np.einsum("...ia,...ja->...ij", full, full)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(5), gram.shape),
                               atol=1e-10)
    # tangent vectors live in the coordinate tangent span
    proj_t = np.einsum("...ab,...ib->...ia", P, tangent)
    np.testing.assert_allclose(proj_t, 0.0, atol=1e-10)


def test_h_components_reproduce_A_norm(rng):
    g = initdata.random_fourier(2, 2, modes=2, amplitude=0.15, N=24, seed=5)
    gf = geo.geometry_fields(g)
    tangent, normal = geo.frames_fields(gf.first, gf.P)
    h = geo.h_components_field(gf.A_tensor, gf.first, gf.g_inv, tangent, normal)
    np.testing.assert_allclose(np.einsum("...aij,...aij->...", h, h),
                               gf.A_norm2, atol=1e-12)
    # symmetry in the two tangent slots
    np.testing.assert_allclose(h, np.swapaxes(h, -1, -2), atol=1e-12)


def test_circle_h_oracle():
    # radius-2 circle: single normal (inward), h = <A(e,e), n> = +-1/2
    g = unit_circle(256, R=2.0)
    gf = geo.geometry_fields(g)
    tangent, normal = geo.frames_fields(gf.first, gf.P)
    h = geo.h_components_field(gf.A_tensor, gf.first, gf.g_inv, tangent, normal)
    np.testing.assert_allclose(np.abs(h[..., 0, 0, 0]), 0.5, rtol=2e-3)


# ---------------------------------------------------------------------------
# projection Jacobian and singular values


def test_star_omega_of_graph_matches_singular_value_formula():
    g = initdata.random_fourier(2, 2, modes=2, amplitude=0.3, N=24, seed=11)
    first, _ = geo.jet_fields(g)
    _, _, sdet = geo.metric_fields(first)
    form = base_volume_form(2, 4)
    so = geo.star_omega_field(first, sdet, form)
    lam = geo.singular_values(geo.graph_df_field(g))
    np.testing.assert_allclose(so, 1.0 / np.sqrt(np.prod(1.0 + lam**2, axis=-1)),
                               atol=1e-12)


def test_singular_values_descending(rng):
    df = rng.normal(size=(7, 3, 2))
    lam = geo.singular_values(df)
    assert np.all(np.diff(lam, axis=-1) <= 0.0)


def test_delta_31_oracle():
    assert geo.delta_31(np.array([0.5, 0.5])) == pytest.approx(0.4375)
    assert geo.delta_31(np.array([0.0])) == pytest.approx(1.0)
    # threshold: lambda = 1 in one factor gives delta = 0
    assert geo.delta_31(np.array([1.0])) == pytest.approx(0.0)


def test_star_omega_one_for_base_plane():
    vals = np.zeros((16, 1))
    g = geo.GraphGrid(n=1, m=1, shape=(16,), spacing=(0.1,), values=vals)
    first, _ = geo.jet_fields(g)
    _, _, sdet = geo.metric_fields(first)
    so = geo.star_omega_field(first, sdet, base_volume_form(1, 2))
    np.testing.assert_allclose(so, 1.0, atol=1e-14)


# ---------------------------------------------------------------------------
# induced Laplacian


def test_laplacian_of_constant_and_coordinate():
    g = unit_circle(128)
    one = np.ones(g.shape)
    np.testing.assert_allclose(geo.induced_laplacian(one, g), 0.0, atol=1e-12)
    # Lap of ambient coordinate x on the unit circle = -x (H component)
    x = g.positions[..., 0]
    lap = geo.induced_laplacian(x, g)
    np.testing.assert_allclose(lap, -x, atol=1e-3)


def test_laplacian_flat_graph_is_euclidean():
    N, h = 32, 0.2
    xs = np.arange(N) * h
    g = geo.GraphGrid(n=1, m=1, shape=(N,), spacing=(h,),
                      values=np.zeros((N, 1)))
    period = N * h
    f = np.sin(2.0 * math.pi * xs / period)
    lap = geo.induced_laplacian(f, g)
    expected = -(2.0 * math.pi / period) ** 2 * f
    np.testing.assert_allclose(lap, expected, atol=5e-3)
