"""Flow integrator: exact solutions, stability, determinism, halts."""

import math

import numpy as np
import pytest

from graphflow import flow, initdata
from graphflow import geometry as geo
from graphflow.errors import NumericalHalt


def test_stable_dt_flat_graph_oracle():
    # flat graph, h = 0.1, n = 1, g_inv = 1: dt = 0.5 * 0.01 / 2 = 0.0025
    g = geo.GraphGrid(n=1, m=1, shape=(32,), spacing=(0.1,),
                      values=np.zeros((32, 1)))
    assert flow.stable_dt(g, 0.5) == pytest.approx(0.0025)


def test_circle_tracks_exact_radius():
    g = initdata.circle(1.0, 128)
    traj = flow.run(g, flow.FlowConfig(scheme="rk4", cfl_safety=0.5,
                                       t_end=0.3, record_every=10))
    for t, snap in zip(traj.times, traj.snapshots):
        R = np.linalg.norm(snap.positions, axis=-1)
        np.testing.assert_allclose(R, math.sqrt(1.0 - 2.0 * t), rtol=2e-3)


def test_sphere_tracks_exact_radius():
    g = initdata.sphere(1.0, 24)
    traj = flow.run(g, flow.FlowConfig(scheme="rk4", cfl_safety=0.5,
                                       t_end=0.05, record_every=50))
    t, snap = traj.times[-1], traj.snapshots[-1]
    R = np.linalg.norm(snap.positions, axis=-1)[snap.diag_mask]
    np.testing.assert_allclose(R, math.sqrt(1.0 - 4.0 * t), rtol=5e-3)


def test_flat_graph_is_stationary():
    g = geo.GraphGrid(n=2, m=2, shape=(16, 16), spacing=(0.2, 0.2),
                      values=np.zeros((16, 16, 2)))
    traj = flow.run(g, flow.FlowConfig(scheme="explicit-euler", t_end=0.01))
    np.testing.assert_allclose(traj.snapshots[-1].values, 0.0, atol=1e-14)


def test_graph_flow_is_heat_like_for_small_slopes():
    # tiny amplitude: the flow is the heat equation to leading order
    g = initdata.random_fourier(1, 1, modes=1, amplitude=1e-4, N=64, seed=1)
    traj = flow.run(g, flow.FlowConfig(scheme="rk4", t_end=0.05, record_every=100))
    v0 = g.values[..., 0]
    vt = traj.snapshots[-1].values[..., 0]
    # single mode k=1 on length 2*pi decays like exp(-t)
    t = traj.times[-1]
    mean = np.mean(v0)
    np.testing.assert_allclose(vt - mean, (v0 - mean) * math.exp(-t), atol=2e-8)


def test_parametric_and_graph_flows_agree():
    g = initdata.random_fourier(1, 1, modes=2, amplitude=0.05, N=128, seed=2)
    xs = g.base_coordinates()[..., 0]
    para = geo.ImmersionGrid(n=1, m=1, shape=g.shape, spacing=g.spacing,
                             positions=g.ambient_positions())
    cfg = flow.FlowConfig(scheme="rk4", cfl_safety=0.3, t_end=0.02,
                          record_every=1000)
    tg = flow.run(g, cfg)
    tp = flow.run(para, cfg)
    pts = tp.snapshots[-1].positions
    order = np.argsort(pts[:, 0])
    resampled = np.interp(xs, pts[order, 0], pts[order, 1], period=2 * math.pi)
    h = g.spacing[0]
    np.testing.assert_allclose(resampled, tg.snapshots[-1].values[..., 0],
                               atol=h**2)


def test_determinism_bitwise():
    g = initdata.corner_graph(1, 1, 0.75, N=64, seed=3)
    cfg = flow.FlowConfig(scheme="rk4", t_end=0.01, record_every=5)
    a = flow.run(g, cfg)
    b = flow.run(g, cfg)
    for sa, sb in zip(a.snapshots, b.snapshots):
        np.testing.assert_array_equal(sa.values, sb.values)


def test_euler_and_rk4_converge_together():
    g = initdata.circle(1.0, 64)
    te = flow.run(g, flow.FlowConfig(scheme="explicit-euler", t_end=0.05,
                                     record_every=1000))
    tr = flow.run(g, flow.FlowConfig(scheme="rk4", t_end=0.05, record_every=1000))
    diff = np.max(np.abs(te.snapshots[-1].positions - tr.snapshots[-1].positions))
    assert diff < 1e-4


def test_collapse_raises_numerical_halt_with_trajectory():
    g = initdata.circle(0.3, 64)       # vanishes at t = 0.045
    with pytest.raises(NumericalHalt) as err:
        flow.run(g, flow.FlowConfig(scheme="rk4", t_end=0.2, record_every=5))
    halt = err.value
    assert halt.trajectory is not None and len(halt.trajectory) >= 1
    assert halt.trajectory.halt is not None
    assert halt.time <= 0.2


def test_series_diagnostics_present_and_sane():
    g = initdata.circle(1.0, 64)
    traj = flow.run(g, flow.FlowConfig(scheme="rk4", t_end=0.1, record_every=10))
    for key in ("min_star_omega", "max_A2", "max_H", "hausdorff_to_init",
                "min_delta"):
        assert len(traj.series[key]) == len(traj)
    # |A|^2 = 1/R^2 grows as the circle shrinks
    assert traj.series["max_A2"][-1] > traj.series["max_A2"][0]
    np.testing.assert_allclose(traj.series["hausdorff_to_init"],
                               [1.0 - math.sqrt(1.0 - 2.0 * t) for t in traj.times],
                               atol=5e-3)


def test_flow_config_validation():
    with pytest.raises(ValueError):
        flow.FlowConfig(scheme="implicit")
    with pytest.raises(ValueError):
        flow.FlowConfig(cfl_safety=0.0)
    with pytest.raises(ValueError):
        flow.FlowConfig(t_end=-1.0)
    with pytest.raises(ValueError):
        flow.FlowConfig(record_every=0)
