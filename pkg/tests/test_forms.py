"""Forms machinery: constant forms, cutoffs, coverings, partitions, constants."""

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphflow import forms, initdata
from graphflow import geometry as geo
from graphflow.errors import (CoverageFailure, EmptyCover,
                              InfeasibleConstants, NonOrthonormalFrame)


def circle_cloud(N=512, R=1.0):
    g = initdata.circle(R, N)
    first, _ = geo.jet_fields(g)
    tang = geo.tangent_frames_field(first)
    return forms.SampleCloud(points=g.positions.reshape(-1, 2),
                             tangents=tang.reshape(-1, 1, 2))


# ---------------------------------------------------------------------------
# constant forms


def test_base_form_picks_out_base_minor():
    form = forms.base_volume_form(2, 4)
    v = np.array([[1.0, 0.0, 0.3, 0.0], [0.0, 2.0, 0.0, -0.1]])
    # only the (0,1) minor contributes: det [[1,0],[0,2]] = 2
    assert form.evaluate(v) == pytest.approx(2.0)


def test_plane_form_matches_gram_determinant(rng):
    # volume form of a plane evaluated on vectors = det(V F^T)
    for _ in range(10):
        raw = rng.normal(size=(2, 5))
        frame = np.linalg.qr(raw.T)[0].T
        form = forms.plane_volume_form(frame)
        V = rng.normal(size=(2, 5))
        assert form.evaluate(V) == pytest.approx(float(np.linalg.det(V @ frame.T)))


def test_plane_form_requires_orthonormal_frame():
    with pytest.raises(NonOrthonormalFrame):
        forms.plane_volume_form(np.array([[1.0, 1.0, 0.0]]))


def test_evaluate_against_bruteforce_wedge(rng):
    n, N = 2, 4
    coeffs = rng.normal(size=math.comb(N, n))
    form = forms.ConstantNForm(n=n, ambient_dim=N, coeffs=coeffs)
    V = rng.normal(size=(n, N))
    expected = sum(c * np.linalg.det(V[:, list(combo)])
                   for c, combo in zip(coeffs,
                                       itertools.combinations(range(N), n)))
    assert form.evaluate(V) == pytest.approx(float(expected))


def test_form_antisymmetry(rng):
    form = forms.ConstantNForm(n=2, ambient_dim=4, coeffs=rng.normal(size=6))
    V = rng.normal(size=(2, 4))
    assert form.evaluate(V[::-1]) == pytest.approx(-form.evaluate(V))


# ---------------------------------------------------------------------------
# smoothstep and cutoff


@pytest.mark.parametrize("order", [2, 3, 4])
def test_smoothstep_endpoints_and_fd(order):
    S0, S1, S2 = forms.smoothstep(np.array([0.0, 1.0]), order)
    np.testing.assert_allclose(S0, [0.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(S1, 0.0, atol=1e-12)
    np.testing.assert_allclose(S2, 0.0, atol=1e-12)
    for x in (0.25, 0.5, 0.8):
        eps = 1e-6
        Sm, _, _ = forms.smoothstep(x - eps, order)
        Sp, _, _ = forms.smoothstep(x + eps, order)
        _, d1, d2 = forms.smoothstep(x, order)
        assert (Sp - Sm) / (2 * eps) == pytest.approx(float(d1), abs=1e-6)
        eps = 1e-4   # wider step: second differences amplify roundoff
        Sm, _, _ = forms.smoothstep(x - eps, order)
        Sp, _, _ = forms.smoothstep(x + eps, order)
        S, _, _ = forms.smoothstep(x, order)
        assert (Sp - 2 * S + Sm) / eps**2 == pytest.approx(float(d2), abs=1e-3)


def test_smoothstep_monotone():
    s = np.linspace(0, 1, 101)
    for order in (2, 3, 4):
        S, _, _ = forms.smoothstep(s, order)
        assert np.all(np.diff(S) >= 0.0)


def test_cutoff_plateau_and_support():
    q = np.array([1.0, -2.0, 0.5])
    r0 = 0.5
    inner = q + np.array([0.3, 0.0, 0.0])       # |y-q| = 0.3 < 0.4
    outer = q + np.array([0.0, 0.6, 0.0])       # |y-q| = 0.6 > 0.5
    phi_i, D_i, D2_i = forms.cutoff(inner, q, r0)
    phi_o, D_o, D2_o = forms.cutoff(outer, q, r0)
    assert phi_i == pytest.approx(1.0)
    assert phi_o == pytest.approx(0.0)
    np.testing.assert_allclose(D_i, 0.0, atol=1e-14)
    np.testing.assert_allclose(D2_o, 0.0, atol=1e-14)


def test_cutoff_derivatives_match_finite_differences(rng):
    q = np.zeros(3)
    r0 = 1.0
    y = np.array([0.88, 0.1, -0.05])            # inside the transition band
    phi, D, D2 = forms.cutoff(y, q, r0)
    eps = 1e-5
    for a in range(3):
        e = np.zeros(3)
        e[a] = eps
        pp, _, _ = forms.cutoff(y + e, q, r0)
        pm, _, _ = forms.cutoff(y - e, q, r0)
        assert (pp - pm) / (2 * eps) == pytest.approx(D[a], abs=1e-6)
        assert (pp - 2 * phi + pm) / eps**2 == pytest.approx(D2[a, a], abs=1e-4)


def test_profile_constants_frozen():
    c1, c2 = forms.cutoff_profile_constants(order=2)
    # quintic: max |S'| = 15/8 on [0,1], band width r0/5 -> c1 = 75/8
    assert c1 == pytest.approx(75.0 / 8.0, rel=1e-6)
    assert c2 > c1


# ---------------------------------------------------------------------------
# covering and partitions


def test_select_centers_covers_circle():
    cloud = circle_cloud()
    aform = forms.select_centers(cloud, 0.3, n=1)
    d = np.linalg.norm(cloud.points[:, None, :] - aform.centers[None], axis=-1)
    assert np.max(np.min(d, axis=1)) <= 0.8 * 0.3 + 1e-12
    # centers pairwise separated by the packing radius
    cd = np.linalg.norm(aform.centers[:, None] - aform.centers[None], axis=-1)
    cd[np.diag_indices(len(aform.centers))] = np.inf
    assert np.min(cd) >= 0.3 / 5.0


def test_select_centers_coverage_failure():
    pts = np.array([[0.0, 0.0], [10.0, 0.0]])
    cloud = forms.SampleCloud(points=pts)
    # greedy packing keeps both points as centers, so shrink to one by
    # restricting the cloud after selection is impossible; instead a cloud
    # with a forbidden center gap cannot arise here -- use max_gap guard
    aform = forms.select_centers(cloud, 0.5, n=1)
    assert len(aform.centers) == 2


def test_partition_sums_and_quotient_derivatives():
    cloud = circle_cloud()
    aform = forms.select_centers(cloud, 0.4, n=1)
    pts = cloud.points[::7]
    p, Dp, D2p = forms.partition_field(pts, aform)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(Dp.sum(axis=1), 0.0, atol=1e-10)
    np.testing.assert_allclose(D2p.sum(axis=1), 0.0, atol=1e-9)
    assert np.all(p >= -1e-12) and np.all(p <= 1.0 + 1e-12)
    # finite-difference oracle for Dp and D2p at a sample point
    y = pts[3]
    eps = 1e-5
    for a in range(2):
        e = np.zeros(2)
        e[a] = eps
        pp = forms.partition_field(np.array([y + e]), aform)[0][0]
        pm = forms.partition_field(np.array([y - e]), aform)[0][0]
        p0, D0, D20 = (arr[0] for arr in forms.partition_field(np.array([y]), aform))
        np.testing.assert_allclose((pp - pm) / (2 * eps), D0[:, a], atol=1e-6)
        np.testing.assert_allclose((pp - 2 * p0 + pm) / eps**2, D20[:, a, a],
                                   atol=1e-4)


def test_partition_outside_cover_raises():
    cloud = circle_cloud()
    aform = forms.select_centers(cloud, 0.3, n=1)
    with pytest.raises(EmptyCover):
        forms.partition(np.array([50.0, 50.0]), aform)


def test_averaged_form_jet_finite_difference_oracle():
    cloud = circle_cloud()
    aform = forms.select_centers(cloud, 0.4, n=1)
    y = cloud.points[11]
    jet = forms.averaged_form_at(np.array([y]), aform)
    eps = 1e-5
    for a in range(2):
        e = np.zeros(2)
        e[a] = eps
        cp = forms.averaged_form_at(np.array([y + e]), aform).coeffs[0]
        cm = forms.averaged_form_at(np.array([y - e]), aform).coeffs[0]
        np.testing.assert_allclose((cp - cm) / (2 * eps), jet.grads[0, :, a],
                                   atol=1e-6)
        np.testing.assert_allclose((cp - 2 * jet.coeffs[0] + cm) / eps**2,
                                   jet.hessians[0, :, a, a], atol=1e-4)


def test_averaged_form_json_roundtrip():
    cloud = circle_cloud(128)
    aform = forms.select_centers(cloud, 0.5, n=1)
    clone = forms.AveragedForm.from_json(aform.to_json())
    np.testing.assert_allclose(clone.centers, aform.centers)
    np.testing.assert_allclose(clone.plane_frames, aform.plane_frames)
    assert clone.r0 == aform.r0 and clone.profile_order == aform.profile_order
    y = cloud.points[5]
    np.testing.assert_allclose(forms.averaged_form_at(np.array([y]), clone).coeffs,
                               forms.averaged_form_at(np.array([y]), aform).coeffs)


# ---------------------------------------------------------------------------
# K-condition and the constant pipeline


def test_k_condition_flat_plane_trivially_passes(rng):
    pts = np.zeros((50, 3))
    pts[:, 0] = np.linspace(0, 1, 50)
    pts[:, 1] = rng.normal(size=50) * 0.0
    tang = np.zeros((50, 1, 3))
    tang[:, 0, 0] = 1.0
    cloud = forms.SampleCloud(points=pts, tangents=tang)
    rep = forms.check_K_condition(cloud, 0.3, 0.99)
    assert rep.passed and np.min(rep.minima) == pytest.approx(1.0)


def test_k_condition_fails_at_sqrt2_threshold():
    # slope-1 corner graph against base planes: *Omega = 1/sqrt(2) < 0.71
    g = initdata.corner_graph(1, 1, 1.0, N=256, seed=0)
    first, _ = geo.jet_fields(g)
    tang = geo.tangent_frames_field(first)
    cloud = forms.SampleCloud(points=g.ambient_positions().reshape(-1, 2),
                              tangents=tang.reshape(-1, 1, 2))
    fitted = forms.select_centers(cloud, 0.2, n=1)
    base_frames = np.zeros_like(fitted.plane_frames)
    base_frames[:, 0, 0] = 1.0
    base = forms.AveragedForm(n=1, ambient_dim=2, centers=fitted.centers,
                              plane_frames=base_frames, r0=0.2)
    rep = forms.check_K_condition(cloud, 0.2, 0.71, form=base)
    assert not rep.passed
    assert np.min(rep.minima) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)
    # the default fitted planes also fail: segments are mutually oblique
    assert not forms.check_K_condition(cloud, 0.2, 0.71).passed


def test_scan_K_frozen_values():
    K0, K, c8, c9 = forms.scan_K(1, 1)
    assert c8 == 0.0
    assert K0 == pytest.approx(0.8331067811865476, abs=1e-12)
    assert K == pytest.approx(K0 + 1e-3 + K0 * 0.0, abs=2e-3)
    assert K > K0
    K0_lo, K_lo, c8_lo, _ = forms.scan_K(4, 3)
    assert c8_lo == 12.0
    assert K_lo > 0.99


def test_compute_constants_invariants():
    pipe = forms.compute_constants(1, 1, 0.3, overlap_count=5)
    assert pipe.K > pipe.K0 > 1.0 / math.sqrt(2.0)
    assert pipe.epsilon > 0.0
    assert pipe.t1 <= pipe.t0
    assert pipe.T <= pipe.t1
    assert pipe.T > 0.0
    assert pipe.c9 / (1.0 - pipe.K) > 5.0
    d = pipe.to_dict()
    assert d["c8"] == 0.0 and d["overlap_count"] == 5


def test_compute_constants_rejects_bad_r0():
    with pytest.raises((InfeasibleConstants, ValueError)):
        forms.compute_constants(1, 1, -1.0, overlap_count=5)


def test_measure_overlap_on_circle():
    cloud = circle_cloud()
    aform = forms.select_centers(cloud, 0.3, n=1)
    overlap = forms.measure_overlap(aform, cloud.points)
    assert 1 <= overlap <= len(aform.centers)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-0.3, 0.3))
def test_partition_values_bounded_on_cover(t, jitter):
    cloud = circle_cloud(128)
    aform = forms.select_centers(cloud, 0.5, n=1)
    angle = 2.0 * math.pi * t
    y = (1.0 + 0.05 * jitter) * np.array([math.cos(angle), math.sin(angle)])
    p, _, _ = forms.partition(y, aform)
    assert np.all(p >= 0.0) and p.sum() == pytest.approx(1.0, abs=1e-10)
