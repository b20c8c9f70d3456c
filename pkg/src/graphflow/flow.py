"""Explicit time integration of the mean curvature flow on periodic grids.

Parametric form: dF/dt = g^ij P (d2_ij F), i.e. the flow velocity is the
normal part of the coordinate trace of the Hessian, exactly as in the
quasilinear system; no separate tangential correction is applied.

Nonparametric form: df/dt = g^ij d2_ij f with g_ij = delta_ij + <d_i f, d_j f>
(the graphical reduction of the same system modulo tangential motion).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .errors import NonFinite, NumericalHalt, SingularMetric
from .forms import base_volume_form

SCHEMES = ("explicit-euler", "rk4")


@dataclass
class FlowConfig:
    scheme: str = "rk4"
    cfl_safety: float = 0.5
    t_end: float = 0.1
    record_every: int = 1
    diagnostics: tuple[str, ...] = ("min_star_omega", "max_A2", "max_H",
                                    "hausdorff_to_init", "min_delta")

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    """Recorded snapshots plus per-time diagnostic scalars."""

    kind: str                      # "parametric" | "graph"
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    steps_between: list = field(default_factory=list)  # integrator steps since previous record
    halt: dict | None = None

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def n(self) -> int:
        return self.snapshots[0].n

    @property
    def m(self) -> int:
        return self.snapshots[0].m


# ---------------------------------------------------------------------------
# velocities


def parametric_velocity(grid: geo.ImmersionGrid) -> np.ndarray:
    first, second = geo.jet_fields(grid)
    _, g_inv, _ = geo.metric_fields(first)
    P = geo.normal_projection_fields(first, g_inv)
    trace = np.einsum("...ij,...ijA->...A", g_inv, second)
    return np.einsum("...AB,...B->...A", P, trace)


def graph_velocity(grid: geo.GraphGrid) -> np.ndarray:
    first, second = geo.jet_fields(grid)
    _, g_inv, _ = geo.metric_fields(first)
    return np.einsum("...ij,...ijb->...b", g_inv, second[..., grid.n:])


def velocity(grid) -> np.ndarray:
    if isinstance(grid, geo.GraphGrid):
        return graph_velocity(grid)
    return parametric_velocity(grid)


def _state(grid) -> np.ndarray:
    return grid.values if isinstance(grid, geo.GraphGrid) else grid.positions


def _with_state(grid, state: np.ndarray, time: float):
    if isinstance(grid, geo.GraphGrid):
        return grid.with_values(state, time)
    return grid.with_positions(state, time)


# ---------------------------------------------------------------------------
# stepping


def stable_dt(grid, cfl_safety: float = 1.0) -> float:
    """cfl * h^2 / (2 n max lambda(g^-1)): empirical explicit-scheme bound."""
    first, _ = geo.jet_fields(grid)
    _, g_inv, _ = geo.metric_fields(first)
    lam_max = float(np.max(np.linalg.eigvalsh(g_inv)))
    h = min(grid.spacing)
    return cfl_safety * h * h / (2.0 * grid.n * lam_max)


def step(grid, dt: float, scheme: str = "rk4"):
    """One explicit step; raises SingularMetric / NonFinite on breakdown."""
    x0 = _state(grid)
    t0 = grid.time
    if scheme == "explicit-euler":
        x1 = x0 + dt * velocity(grid)
    elif scheme == "rk4":
        k1 = velocity(grid)
        k2 = velocity(_with_state(grid, x0 + 0.5 * dt * k1, t0 + 0.5 * dt))
        k3 = velocity(_with_state(grid, x0 + 0.5 * dt * k2, t0 + 0.5 * dt))
        k4 = velocity(_with_state(grid, x0 + dt * k3, t0 + dt))
        x1 = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not np.all(np.isfinite(x1)):
        raise NonFinite(f"non-finite state after step at t={t0:.6g}")
    return _with_state(grid, x1, t0 + dt)


# ---------------------------------------------------------------------------
# diagnostics


def ambient_points(grid) -> np.ndarray:
    if isinstance(grid, geo.GraphGrid):
        return grid.ambient_positions().reshape(-1, grid.ambient_dim)
    return grid.positions.reshape(-1, grid.ambient_dim)


def _diag_mask_flat(grid) -> np.ndarray | None:
    mask = getattr(grid, "diag_mask", None)
    return None if mask is None else mask.reshape(-1)


def diagnostics(grid, init_tree: cKDTree | None, names) -> dict:
    """Standard per-snapshot scalars; sphere-style grids exclude the pole band."""
    gf = geo.geometry_fields(grid)
    form = base_volume_form(grid.n, grid.ambient_dim)
    so = geo.star_omega_field(gf.first, gf.sqrt_det_g, form).reshape(-1)
    A2 = gf.A_norm2.reshape(-1)
    Hn = np.linalg.norm(gf.H, axis=-1).reshape(-1)
    mask = _diag_mask_flat(grid)
    if mask is not None:
        so, A2, Hn = so[mask], A2[mask], Hn[mask]
    with np.errstate(divide="ignore"):
        so2 = np.maximum(so * so, 1e-300)
        delta = 2.0 - 1.0 / so2
    out = {}
    for name in names:
        if name == "min_star_omega":
            out[name] = float(np.min(so))
        elif name == "max_A2":
            out[name] = float(np.max(A2))
        elif name == "max_H":
            out[name] = float(np.max(Hn))
        elif name == "min_delta":
            out[name] = float(np.min(delta))
        elif name == "hausdorff_to_init":
            pts = ambient_points(grid)
            if mask is not None:
                pts = pts[mask]
            d, _ = init_tree.query(pts)
            out[name] = float(np.max(d))
        else:
            raise ValueError(f"unknown diagnostic {name!r}")
    return out


# ---------------------------------------------------------------------------
# driver


def run(init, config: FlowConfig) -> Trajectory:
    """Integrate to t_end, recording snapshots and diagnostics on schedule.

    Deterministic for identical inputs.  On SingularMetric / NonFinite the
    partial trajectory is attached to the NumericalHalt that is raised.
    """
    kind = "graph" if isinstance(init, geo.GraphGrid) else "parametric"
    traj = Trajectory(kind=kind, series={name: [] for name in config.diagnostics})
    init_pts = ambient_points(init)
    mask = _diag_mask_flat(init)
    init_tree = cKDTree(init_pts if mask is None else init_pts[mask])

    def record(grid, steps):
        traj.times.append(grid.time)
        traj.snapshots.append(grid)
        traj.steps_between.append(steps)
        for name, val in diagnostics(grid, init_tree, config.diagnostics).items():
            traj.series[name].append(val)

    grid = init
    record(grid, 0)
    steps_since = 0
    try:
        while grid.time < config.t_end - 1e-14:
            dt = min(stable_dt(grid, config.cfl_safety), config.t_end - grid.time)
            grid = step(grid, dt, config.scheme)
            steps_since += 1
            at_end = grid.time >= config.t_end - 1e-14
            if steps_since >= config.record_every or at_end:
                record(grid, steps_since)
                steps_since = 0
    except (SingularMetric, NonFinite) as exc:
        traj.halt = {"reason": type(exc).__name__, "message": str(exc),
                     "time": grid.time}
        raise NumericalHalt(str(exc), grid.time, trajectory=traj) from exc
    return traj
