"""Verification monitors for flow trajectories.

Residual monitors check the evolution identities of the projection Jacobian,
|F|^2 and the plane-distance function against finite-difference left-hand
sides; inequality monitors check the maximum-principle consequences.  Time
derivatives use a 3-point nonuniform centered stencil over adjacent recorded
snapshots (endpoints excluded), spatial operators the induced Laplacian of
the snapshot's own metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .errors import (EmptyCloud, InsufficientSnapshots, PreconditionLost,
                     WindowClosed)
from .flow import Trajectory, ambient_points
from .forms import (AveragedForm, ConstantNForm, ConstantPipeline,
                    averaged_form_at, averaged_star_omega_field,
                    base_volume_form, evaluate_coeffs_field, minors_field)

SQRT2_INV = 1.0 / math.sqrt(2.0)
MONOTONE_SLACK_PER_STEP = 1e-8


# ---------------------------------------------------------------------------
# report container


@dataclass
class EstimateReport:
    monitor_name: str
    max_abs_residual: float
    violation_count: int
    tolerance_used: float
    convergence_order: float | None = None
    fitted_constant: float | None = None
    series: dict = field(default_factory=dict)   # "t", "value", "bound", "margin"
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violation_count == 0

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            return x
        return clean({
            "monitor_name": self.monitor_name,
            "max_abs_residual": self.max_abs_residual,
            "violation_count": self.violation_count,
            "tolerance_used": self.tolerance_used,
            "convergence_order": self.convergence_order,
            "fitted_constant": self.fitted_constant,
            "passed": self.passed,
            "series": self.series,
            "details": self.details,
        })

    def series_rows(self):
        t = self.series.get("t", [])
        v = self.series.get("value", [float("nan")] * len(t))
        b = self.series.get("bound", [float("nan")] * len(t))
        m = self.series.get("margin", [float("nan")] * len(t))
        return list(zip(t, v, b, m))


@dataclass
class LocalizationBall:
    y0: np.ndarray
    R: float
    theta: float
    r_choice: str = "F_minus_y0"   # or "F2_minus_u2"

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)
        if not (0.0 < self.theta < 1.0 and self.R > 0.0):
            raise ValueError("need 0 < theta < 1 and R > 0")
        if self.r_choice not in ("F_minus_y0", "F2_minus_u2"):
            raise ValueError(f"unknown r_choice {self.r_choice!r}")

    def r_field(self, points: np.ndarray, n: int, t: float) -> np.ndarray:
        if self.r_choice == "F_minus_y0":
            return np.sum((points - self.y0) ** 2, axis=-1) + 2.0 * n * t
        # |F|^2 - u^2 with the first-n-axes reference plane: squared length
        # of the projection onto the plane.
        return np.sum(points[..., :n] ** 2, axis=-1)


# ---------------------------------------------------------------------------
# small utilities


def hausdorff(cloud_a: np.ndarray, cloud_b: np.ndarray, symmetric: bool = False) -> float:
    """Directed (or symmetric) Hausdorff distance between point clouds."""
    a = np.atleast_2d(np.asarray(cloud_a, dtype=float))
    b = np.atleast_2d(np.asarray(cloud_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptyCloud("hausdorff of empty cloud")
    d_ab = float(np.max(cKDTree(b).query(a)[0]))
    if not symmetric:
        return d_ab
    d_ba = float(np.max(cKDTree(a).query(b)[0]))
    return max(d_ab, d_ba)


def loglog_slope(times, values, window=None) -> float:
    """Least-squares slope of log10(values) against log10(times)."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (t > 0.0) & (v > 0.0)
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    t, v = t[keep], v[keep]
    if t.size < 3:
        raise ValueError("need >= 3 points to fit a slope")
    return float(np.polyfit(np.log10(t), np.log10(v), 1)[0])


def convergence_orders(hs, residuals) -> list[float]:
    """Observed orders between successive grid levels."""
    out = []
    for (h1, r1), (h2, r2) in zip(zip(hs, residuals), zip(hs[1:], residuals[1:])):
        out.append(math.log(r1 / r2) / math.log(h1 / h2))
    return out


def _require_snapshots(traj: Trajectory, k: int = 3) -> None:
    if len(traj) < k:
        raise InsufficientSnapshots(f"need >= {k} snapshots, have {len(traj)}")


def _interior_ddt(times, fields):
    """Yields (k, d/dt field at snapshot k) for interior k, nonuniform 3-point."""
    for k in range(1, len(times) - 1):
        dm = times[k] - times[k - 1]
        dp = times[k + 1] - times[k]
        num = (dm**2 * fields[k + 1] - dp**2 * fields[k - 1]
               + (dp**2 - dm**2) * fields[k])
        yield k, num / (dm * dp * (dm + dp))


def _mask_of(grid):
    mask = getattr(grid, "diag_mask", None)
    return mask


def _masked_max(arr, mask) -> float:
    return float(np.max(np.abs(arr if mask is None else arr[mask])))


def _residual_report(name, traj, field_fn, rhs_fn, tolerance=0.0) -> EstimateReport:
    """Shared driver: residual of (d/dt - Lap)(field) - rhs over interior snapshots."""
    _require_snapshots(traj)
    fields = [field_fn(s) for s in traj.snapshots]
    series = {"t": [], "value": [], "bound": [], "margin": []}
    worst = 0.0
    for k, ddt in _interior_ddt(traj.times, fields):
        snap = traj.snapshots[k]
        lhs = ddt - geo.induced_laplacian(fields[k], snap)
        res = lhs - rhs_fn(k, snap)
        r = _masked_max(res, _mask_of(snap))
        worst = max(worst, r)
        series["t"].append(traj.times[k])
        series["value"].append(r)
        series["bound"].append(tolerance if tolerance > 0 else float("nan"))
        series["margin"].append((tolerance - r) if tolerance > 0 else float("nan"))
    violations = 0
    if tolerance > 0.0:
        violations = sum(1 for v in series["value"] if v > tolerance)
    return EstimateReport(monitor_name=name, max_abs_residual=worst,
                          violation_count=violations, tolerance_used=tolerance,
                          series=series)


# ---------------------------------------------------------------------------
# identity residuals


def residual_F2(traj: Trajectory) -> EstimateReport:
    """(d/dt - Lap)|F|^2 + 2n on parametric trajectories."""
    if traj.kind != "parametric":
        return EstimateReport(
            monitor_name="residual_F2", max_abs_residual=float("nan"),
            violation_count=0, tolerance_used=0.0,
            details={"not_applicable": "graph trajectory has no global position vector"})
    n = traj.n
    return _residual_report(
        "residual_F2", traj,
        field_fn=lambda s: np.sum(s.positions**2, axis=-1),
        rhs_fn=lambda k, s: -2.0 * n)


def residual_u2(traj: Trajectory, plane_frame: np.ndarray) -> EstimateReport:
    """(d/dt - Lap)u^2 + 2 sum_(i,a) <e_i, a_alpha>^2; u = distance to the plane."""
    if traj.kind != "parametric":
        raise ValueError("residual_u2 needs a parametric trajectory")
    plane = np.atleast_2d(np.asarray(plane_frame, dtype=float))
    N = traj.snapshots[0].ambient_dim
    # orthonormal complement of the reference plane
    q, _ = np.linalg.qr(np.hstack([plane.T, np.eye(N)]))
    normals = q[:, plane.shape[0]:N].T

    def u2(s):
        return np.sum((s.positions @ normals.T) ** 2, axis=-1)

    def rhs(k, s):
        first, _ = geo.jet_fields(s)
        tangent = geo.tangent_frames_field(first)
        ov = np.einsum("...iA,aA->...ia", tangent, normals)
        return -2.0 * np.sum(ov**2, axis=(-1, -2))

    return _residual_report("residual_u2", traj, u2, rhs)


def _pair_bracket(form_coeffs_eval, tangent, normal, h):
    """sum over i<j, alpha, beta, k of Omega(..alpha@i..beta@j..) h_aik h_bjk.

    form_coeffs_eval(vectors) evaluates the form on an (..., n, N) stack;
    tangent (..., n, N), normal (..., m, N), h (..., m, n, n).
    """
    n = tangent.shape[-2]
    m = normal.shape[-2]
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            for a in range(m):
                for b in range(m):
                    vecs = tangent.copy()
                    vecs[..., i, :] = normal[..., a, :]
                    vecs[..., j, :] = normal[..., b, :]
                    w = form_coeffs_eval(vecs)
                    total = total + w * np.einsum("...k,...k->...",
                                                  h[..., a, i, :], h[..., b, j, :])
    return total


def _snapshot_frames(snap):
    gf = geo.geometry_fields(snap)
    tangent, normal = geo.frames_fields(gf.first, gf.P)
    h = geo.h_components_field(gf.A_tensor, gf.first, gf.g_inv, tangent, normal)
    return gf, tangent, normal, h


def residual_star_omega(traj: Trajectory, form: ConstantNForm) -> EstimateReport:
    """Residual of the parallel-form evolution identity (n <= 2).

    (d/dt - Lap) *Omega = *Omega |A|^2 - 2 [pairwise curvature bracket].
    """
    n = traj.n
    if n > 2:
        raise ValueError("frame-explicit bracket implemented for n <= 2 only")

    def so_field(s):
        first, _ = geo.jet_fields(s)
        _, _, sdet = geo.metric_fields(first)
        return geo.star_omega_field(first, sdet, form)

    def rhs(k, s):
        gf, tangent, normal, h = _snapshot_frames(s)
        so = geo.star_omega_field(gf.first, gf.sqrt_det_g, form)
        out = so * gf.A_norm2
        if n == 2:
            out = out - 2.0 * _pair_bracket(form.evaluate_field, tangent, normal, h)
        return out

    return _residual_report("residual_star_omega", traj, so_field, rhs)


def adapted_graph_frames(df: np.ndarray):
    """Singular-value-adapted orthonormal frames of a graph, vectorized.

    df: (..., m, n).  Returns (tangent (..., n, N), normal (..., m, N),
    lam (..., min(n, m))) with the tangent frame oriented like the base
    plane (det V = +1) and normal n_a paired with tangent t_a through the
    shared singular vectors.
    """
    df = np.asarray(df, dtype=float)
    m, n = df.shape[-2], df.shape[-1]
    N = n + m
    p = min(n, m)
    U, lam, Vt = np.linalg.svd(df)
    V = np.swapaxes(Vt, -1, -2)
    flip = np.linalg.det(V) < 0.0
    sign = np.where(flip, -1.0, 1.0)
    V = V.copy()
    V[..., :, -1] *= sign[..., None]
    if n - 1 < p:
        U = U.copy()
        U[..., :, n - 1] *= sign[..., None]
    lead = df.shape[:-2]
    tangent = np.zeros(lead + (n, N))
    normal = np.zeros(lead + (m, N))
    for i in range(n):
        li = lam[..., i] if i < p else np.zeros(lead)
        denom = np.sqrt(1.0 + li**2)
        tangent[..., i, :n] = V[..., :, i] / denom[..., None]
        if i < p:
            tangent[..., i, n:] = li[..., None] * U[..., :, i] / denom[..., None]
    for a in range(m):
        if a < p:
            la = lam[..., a]
            denom = np.sqrt(1.0 + la**2)
            normal[..., a, :n] = -la[..., None] * V[..., :, a] / denom[..., None]
            normal[..., a, n:] = U[..., :, a] / denom[..., None]
        else:
            normal[..., a, n:] = U[..., :, a]
    return tangent, normal, lam


def rhs_31(snap: geo.GraphGrid):
    """Singular-value form of the evolution identity's right-hand side.

    Returns (rhs, lam, star_omega, h_adapted).
    """
    gf = geo.geometry_fields(snap)
    df = geo.graph_df_field(snap)
    tangent, normal, lam = adapted_graph_frames(df)
    h = geo.h_components_field(gf.A_tensor, gf.first, gf.g_inv, tangent, normal)
    so = 1.0 / np.sqrt(np.prod(1.0 + lam**2, axis=-1))
    p = lam.shape[-1]
    brace = np.einsum("...aij,...aij->...", h, h)
    for i in range(p):
        for j in range(i + 1, p):
            ll = lam[..., i] * lam[..., j]
            brace = brace - 2.0 * ll * np.einsum("...k,...k->...",
                                                 h[..., i, i, :], h[..., j, j, :])
            brace = brace + 2.0 * ll * np.einsum("...k,...k->...",
                                                 h[..., j, i, :], h[..., i, j, :])
    return so * brace, lam, so, h


def residual_star_omega_sv(traj: Trajectory, tie_tol: float = 1e-8,
                           algebraic_tol: float = 1e-8) -> EstimateReport:
    """Singular-value form of the identity on graph trajectories.

    (a) algebraic: the singular-value right-hand side equals the
    frame-bracket right-hand side in the same adapted frames, away from
    singular-value ties; (b) residual against the finite-difference
    left-hand side.
    """
    if traj.kind != "graph":
        raise ValueError("singular-value form needs a graph trajectory")
    _require_snapshots(traj)
    n = traj.n
    base = base_volume_form(n, traj.snapshots[0].ambient_dim)
    so_fields = []
    rhs_fields = []
    alg_worst = 0.0
    ties_total = 0
    points_total = 0
    for snap in traj.snapshots:
        rhs, lam, so, h = rhs_31(snap)
        so_fields.append(so)
        rhs_fields.append(rhs)
        # (a) dual evaluation through the generic pairwise bracket
        df = geo.graph_df_field(snap)
        tangent, normal, _ = adapted_graph_frames(df)
        rhs_21 = so * np.einsum("...aij,...aij->...", h, h)
        if n >= 2:
            rhs_21 = rhs_21 - 2.0 * _pair_bracket(base.evaluate_field, tangent, normal, h)
        p = lam.shape[-1]
        tie = np.zeros(lam.shape[:-1], dtype=bool)
        for i in range(p):
            for j in range(i + 1, p):
                tie |= np.abs(lam[..., i] - lam[..., j]) < tie_tol
        ties_total += int(np.sum(tie))
        points_total += tie.size
        diff = np.abs(rhs - rhs_21)
        if np.any(~tie):
            alg_worst = max(alg_worst, float(np.max(diff[~tie])))
    series = {"t": [], "value": [], "bound": [], "margin": []}
    worst = 0.0
    for k, ddt in _interior_ddt(traj.times, so_fields):
        lhs = ddt - geo.induced_laplacian(so_fields[k], traj.snapshots[k])
        r = float(np.max(np.abs(lhs - rhs_fields[k])))
        worst = max(worst, r)
        series["t"].append(traj.times[k])
        series["value"].append(r)
        series["bound"].append(float("nan"))
        series["margin"].append(float("nan"))
    violations = 1 if alg_worst > algebraic_tol else 0
    return EstimateReport(
        monitor_name="residual_star_omega_sv", max_abs_residual=worst,
        violation_count=violations, tolerance_used=algebraic_tol, series=series,
        details={"algebraic_max_diff": alg_worst,
                 "tie_points_skipped": ties_total,
                 "tie_fraction": ties_total / max(points_total, 1)})


def residual_star_omega_general(traj: Trajectory, form: AveragedForm) -> EstimateReport:
    """Residual of the non-parallel-form identity with an averaged form (n <= 2).

    Extra terms relative to the parallel case: -*(tr D^2 Omega) and the
    first-derivative bracket -2 sum (D_ek Omega)(..alpha@i..) h_aik.
    """
    n = traj.n
    if n > 2:
        raise ValueError("implemented for n <= 2")
    _require_snapshots(traj)

    def positions_of(s):
        return s.positions if traj.kind == "parametric" else s.ambient_positions()

    def so_field(s):
        first, _ = geo.jet_fields(s)
        _, _, sdet = geo.metric_fields(first)
        return averaged_star_omega_field(positions_of(s), first, sdet, form)

    def rhs(k, s):
        gf, tangent, normal, h = _snapshot_frames(s)
        pts = positions_of(s)
        lead = pts.shape[:-1]
        flat_pts = pts.reshape(-1, pts.shape[-1])
        jet = averaged_form_at(flat_pts, form)
        so = averaged_star_omega_field(pts, gf.first, gf.sqrt_det_g, form)
        tan_flat = tangent.reshape((-1,) + tangent.shape[-2:])
        nor_flat = normal.reshape((-1,) + normal.shape[-2:])
        h_flat = h.reshape((-1,) + h.shape[-3:])

        out = (so * gf.A_norm2).reshape(-1)
        if n == 2:

            def eval_coeffs(vectors):
                return evaluate_coeffs_field(form.n, form.ambient_dim,
                                             jet.coeffs, vectors)

            out = out - 2.0 * _pair_bracket(eval_coeffs, tan_flat, nor_flat, h_flat)
        # -*(tr_Sigma D^2 Omega)
        tr_coeffs = np.einsum("mkAB,miA,miB->mk", jet.hessians, tan_flat, tan_flat)
        minors_t = minors_field(form.n, form.ambient_dim, tan_flat)
        out = out - np.einsum("mk,mk->m", tr_coeffs, minors_t)
        # -2 sum_{a,k,slot i} (D_{e_k} Omega)(..alpha@i..) h_{a i k}
        m = nor_flat.shape[-2]
        for kk in range(n):
            dk_coeffs = np.einsum("mkA,mA->mk", jet.grads, tan_flat[:, kk, :])
            for i in range(n):
                for a in range(m):
                    vecs = tan_flat.copy()
                    vecs[:, i, :] = nor_flat[:, a, :]
                    w = evaluate_coeffs_field(form.n, form.ambient_dim, dk_coeffs, vecs)
                    out = out - 2.0 * w * h_flat[:, a, i, kk]
        return out.reshape(lead)

    return _residual_report("residual_star_omega_general", traj, so_field, rhs)


# ---------------------------------------------------------------------------
# maximum-principle monitors


def monitor_lemma31(traj: Trajectory, identity_subsample: int = 1) -> EstimateReport:
    """Gradient-estimate monitor on graph trajectories.

    (a) pointwise (d/dt - Lap) *Omega >= delta |A|^2 - tol_h with tol_h
    three times the measured identity residual on the same run; (b) the grid
    minimum of *Omega is nondecreasing with 1e-8 slack per integrator step.
    """
    if traj.kind != "graph":
        raise ValueError("monitor_lemma31 needs a graph trajectory")
    _require_snapshots(traj)
    so_fields = []
    delta_fields = []
    a2_fields = []
    rhs_fields = []
    for snap in traj.snapshots:
        rhs, lam, so, _ = rhs_31(snap)
        so_fields.append(so)
        delta_fields.append(2.0 - np.prod(1.0 + lam**2, axis=-1))
        a2_fields.append(geo.geometry_fields(snap).A_norm2)
        rhs_fields.append(rhs)
    mins = [float(np.min(f)) for f in so_fields]
    if mins[0] <= SQRT2_INV:
        raise PreconditionLost(f"min *Omega(0) = {mins[0]:.4f} <= 1/sqrt(2)")
    if min(mins) <= SQRT2_INV:
        k_bad = int(np.argmax(np.array(mins) <= SQRT2_INV))
        raise PreconditionLost(
            f"min *Omega dropped to {mins[k_bad]:.4f} at t={traj.times[k_bad]:.4g}")

    lhs_fields = {}
    r_id = 0.0
    for k, ddt in _interior_ddt(traj.times, so_fields):
        lhs = ddt - geo.induced_laplacian(so_fields[k], traj.snapshots[k])
        lhs_fields[k] = lhs
        if (k - 1) % identity_subsample == 0:
            r_id = max(r_id, float(np.max(np.abs(lhs - rhs_fields[k]))))
    tol_h = 3.0 * r_id

    violations = 0
    worst = 0.0
    series = {"t": [], "value": [], "bound": [], "margin": []}
    for k, lhs in lhs_fields.items():
        gap = lhs - delta_fields[k] * a2_fields[k]
        worst_gap = float(np.min(gap))
        violations += int(np.sum(gap < -tol_h))
        worst = max(worst, max(0.0, -worst_gap))
        series["t"].append(traj.times[k])
        series["value"].append(worst_gap)
        series["bound"].append(-tol_h)
        series["margin"].append(worst_gap + tol_h)
    mono_violations = 0
    for k in range(1, len(mins)):
        slack = MONOTONE_SLACK_PER_STEP * max(traj.steps_between[k], 1)
        if mins[k] < mins[k - 1] - slack:
            mono_violations += 1
    return EstimateReport(
        monitor_name="monitor_lemma31", max_abs_residual=worst,
        violation_count=violations + mono_violations, tolerance_used=tol_h,
        series=series,
        details={"min_star_omega_series": mins,
                 "monotonicity_violations": mono_violations,
                 "pointwise_violations": violations,
                 "identity_residual": r_id})


def monitor_lemma32(traj: Trajectory, ball: LocalizationBall,
                    rel_tol: float = 1e-6) -> EstimateReport:
    """Localized sup bound: v phi_+ <= sup over the initial slice of v phi_+.

    v = 1/(*Omega) against the base-plane form; requires min *Omega > 1/sqrt2
    throughout so that v phi_+ is a valid maximum-principle quantity.
    """
    _require_snapshots(traj, 2)
    n = traj.n
    base = base_volume_form(n, traj.snapshots[0].ambient_dim)
    vphi = []
    window_open = []
    for t, snap in zip(traj.times, traj.snapshots):
        first, _ = geo.jet_fields(snap)
        _, _, sdet = geo.metric_fields(first)
        so = geo.star_omega_field(first, sdet, base)
        mask = _mask_of(snap)
        so_flat = so.reshape(-1) if mask is None else so.reshape(-1)[mask.reshape(-1)]
        if np.min(so_flat) <= SQRT2_INV:
            raise PreconditionLost(
                f"min *Omega = {np.min(so_flat):.4f} <= 1/sqrt(2) at t={t:.4g}")
        pts = ambient_points(snap)
        if mask is not None:
            pts = pts[mask.reshape(-1)]
        phi_plus = np.maximum(ball.R**2 - np.sum((pts - ball.y0) ** 2, axis=-1)
                              - 2.0 * n * t, 0.0)
        window_open.append(bool(np.any(phi_plus > 0.0)))
        vphi.append(float(np.max(phi_plus / so_flat)))
    sup0 = vphi[0]
    tol = rel_tol * max(sup0, 1.0)
    violations = sum(1 for v in vphi[1:] if v > sup0 + tol)
    series = {"t": list(traj.times), "value": vphi,
              "bound": [sup0 + tol] * len(vphi),
              "margin": [sup0 + tol - v for v in vphi]}
    return EstimateReport(
        monitor_name="monitor_lemma32",
        max_abs_residual=max(0.0, max(vphi[1:], default=0.0) - sup0),
        violation_count=violations, tolerance_used=tol, series=series,
        details={"initial_sup": sup0,
                 "window_closed_at": next(
                     (traj.times[i] for i, w in enumerate(window_open) if not w), None)})


def tubular_check(traj: Trajectory) -> EstimateReport:
    """Directed Hausdorff containment in the sqrt(2nt) tube around Sigma_0."""
    _require_snapshots(traj, 2)
    n = traj.n
    init = traj.snapshots[0]
    mask0 = _mask_of(init)
    pts0 = ambient_points(init)
    if mask0 is not None:
        pts0 = pts0[mask0.reshape(-1)]
    tree0 = cKDTree(pts0)
    nn = tree0.query(pts0, k=2)[0][:, 1]
    slack = float(np.max(nn))
    series = {"t": [], "value": [], "bound": [], "margin": []}
    violations = 0
    worst = 0.0
    for t, snap in zip(traj.times, traj.snapshots):
        pts = ambient_points(snap)
        mask = _mask_of(snap)
        if mask is not None:
            pts = pts[mask.reshape(-1)]
        d = float(np.max(tree0.query(pts)[0]))
        bound = math.sqrt(2.0 * n * t) + slack
        series["t"].append(t)
        series["value"].append(d)
        series["bound"].append(bound)
        series["margin"].append(bound - d)
        if d > bound:
            violations += 1
            worst = max(worst, d - bound)
    return EstimateReport(monitor_name="tubular_check", max_abs_residual=worst,
                          violation_count=violations, tolerance_used=slack,
                          series=series, details={"sample_gap": slack})


def inequality_A(traj: Trajectory) -> EstimateReport:
    """(d/dt - Lap)|A|^2 <= 10 |A|^4 + tol_h (the gradient term is dropped).

    tol_h is calibrated from the measured identity residual of the projection
    Jacobian equation on the same run, rescaled by the |A|^2 magnitude so the
    inequality is never asserted tighter than the identities resolve.
    """
    _require_snapshots(traj)
    a2_fields = [geo.geometry_fields(s).A_norm2 for s in traj.snapshots]
    # identity residual on the same run for calibration
    if traj.kind == "graph":
        r_id = 0.0
        so_fields = []
        rhs_fields = []
        for snap in traj.snapshots:
            rhs, _, so, _ = rhs_31(snap)
            so_fields.append(so)
            rhs_fields.append(rhs)
        for k, ddt in _interior_ddt(traj.times, so_fields):
            lhs = ddt - geo.induced_laplacian(so_fields[k], traj.snapshots[k])
            r_id = max(r_id, float(np.max(np.abs(lhs - rhs_fields[k]))))
    else:
        base = base_volume_form(traj.n, traj.snapshots[0].ambient_dim)
        rep = residual_star_omega(traj, base)
        r_id = rep.max_abs_residual
    scale = max(1.0, max(float(np.max(np.abs(f))) for f in a2_fields))
    tol_h = 3.0 * r_id * scale
    series = {"t": [], "value": [], "bound": [], "margin": []}
    violations = 0
    worst = 0.0
    for k, ddt in _interior_ddt(traj.times, a2_fields):
        lhs = ddt - geo.induced_laplacian(a2_fields[k], traj.snapshots[k])
        excess = lhs - 10.0 * a2_fields[k] ** 2
        mx = _masked_max(np.maximum(excess, 0.0), _mask_of(traj.snapshots[k]))
        violations += int(np.sum(excess > tol_h))
        worst = max(worst, mx)
        series["t"].append(traj.times[k])
        series["value"].append(float(np.max(excess)))
        series["bound"].append(tol_h)
        series["margin"].append(tol_h - float(np.max(excess)))
    return EstimateReport(monitor_name="inequality_A", max_abs_residual=worst,
                          violation_count=violations, tolerance_used=tol_h,
                          series=series, details={"identity_residual": r_id,
                                                  "a2_scale": scale})


# ---------------------------------------------------------------------------
# localized curvature scaling and the averaged-form monitor


def curvature_scaling(traj: Trajectory, ball: LocalizationBall, K: float,
                      c7: float = 0.0, form=None,
                      slope_bound: float = 0.1) -> EstimateReport:
    """Localized curvature-estimate shape check with P = *Omega + c7 t - K.

    s(t) = sup_(inner ball) |A|^2 (1-theta)^2 / ((1/R^2 + 1/t) sup 1/P^4);
    c0_fit = max_t s(t) is reported, and s(t) must show no upward trend over
    the final decade of monitored time (log-log slope <= slope_bound).
    """
    _require_snapshots(traj, 3)
    n = traj.n
    if form is None:
        form = base_volume_form(n, traj.snapshots[0].ambient_dim)
    sup_p4inv = 0.0
    series = {"t": [], "value": [], "bound": [], "margin": []}
    s_vals = []
    s_times = []
    p_nonpositive = 0
    for t, snap in zip(traj.times, traj.snapshots):
        first, _ = geo.jet_fields(snap)
        _, _, sdet = geo.metric_fields(first)
        if isinstance(form, AveragedForm):
            pts_grid = (snap.positions if traj.kind == "parametric"
                        else snap.ambient_positions())
            so = averaged_star_omega_field(pts_grid, first, sdet, form)
        else:
            so = geo.star_omega_field(first, sdet, form)
        a2 = geo.geometry_fields(snap).A_norm2.reshape(-1)
        pts = ambient_points(snap)
        so = so.reshape(-1)
        r = ball.r_field(pts, n, t)
        outer = r <= ball.R**2
        inner = r <= ball.theta * ball.R**2
        if np.any(outer):
            P = so[outer] + c7 * t - K
            if np.min(P) <= 0.0:
                p_nonpositive += 1
                continue
            sup_p4inv = max(sup_p4inv, float(np.max(1.0 / P**4)))
        if t <= 0.0 or not np.any(inner) or sup_p4inv == 0.0:
            continue
        s = (float(np.max(a2[inner])) * (1.0 - ball.theta) ** 2
             / ((1.0 / ball.R**2 + 1.0 / t) * sup_p4inv))
        s_vals.append(s)
        s_times.append(t)
        series["t"].append(t)
        series["value"].append(s)
        series["bound"].append(float("nan"))
        series["margin"].append(float("nan"))
    if not s_vals:
        raise WindowClosed("no monitored time had a nonempty localization ball")
    c0_fit = max(s_vals)
    t_hi = s_times[-1]
    window = (t_hi / 10.0, t_hi)
    in_window = sum(1 for t in s_times if window[0] <= t <= window[1])
    slope = loglog_slope(s_times, s_vals, window) if in_window >= 3 else 0.0
    violations = 1 if slope > slope_bound else 0
    return EstimateReport(
        monitor_name="curvature_scaling", max_abs_residual=0.0,
        violation_count=violations, tolerance_used=slope_bound,
        fitted_constant=c0_fit, series=series,
        details={"final_decade_slope": slope, "r_choice": ball.r_choice,
                 "p_nonpositive_times": p_nonpositive, "K": K, "c7": c7})


def monitor_54(traj: Trajectory, form: AveragedForm,
               pipeline: ConstantPipeline, slack: float = 1e-8) -> EstimateReport:
    """Averaged-form lower barrier: min(*Omega + c7 t) > K through t1.

    Also checks, for recorded t <= T, the pointwise ratio
    (*Omega - c8 sqrt(1-K0^2) - eps)/(*Omega + c7 t - K) > 5 wherever the
    denominator is positive.
    """
    _require_snapshots(traj, 1)
    shift = pipeline.c8 * math.sqrt(1.0 - pipeline.K0**2) + pipeline.epsilon
    series = {"t": [], "value": [], "bound": [], "margin": []}
    violations = 0
    ratio_min = float("inf")
    first_violation = None
    for t, snap in zip(traj.times, traj.snapshots):
        if t > pipeline.t1 + 1e-15:
            break
        first, _ = geo.jet_fields(snap)
        _, _, sdet = geo.metric_fields(first)
        pts_grid = (snap.positions if traj.kind == "parametric"
                    else snap.ambient_positions())
        so = averaged_star_omega_field(pts_grid, first, sdet, form)
        if t == traj.times[0] and float(np.min(so)) <= pipeline.K:
            raise PreconditionLost(
                f"min averaged *Omega(0) = {np.min(so):.4f} <= K = {pipeline.K:.4f}")
        val = float(np.min(so)) + pipeline.c7 * t
        series["t"].append(t)
        series["value"].append(val)
        series["bound"].append(pipeline.K)
        series["margin"].append(val - pipeline.K)
        if val <= pipeline.K - slack:
            violations += 1
            if first_violation is None:
                flat = (so + pipeline.c7 * t).reshape(-1)
                first_violation = {"t": t, "point": int(np.argmin(flat))}
        if t <= pipeline.T + 1e-15:
            denom = so + pipeline.c7 * t - pipeline.K
            pos = denom > 0.0
            if np.any(pos):
                ratio = (so[pos] - shift) / denom[pos]
                ratio_min = min(ratio_min, float(np.min(ratio)))
                if np.min(ratio) <= 5.0:
                    violations += 1
                    if first_violation is None:
                        first_violation = {"t": t, "point": "ratio"}
    return EstimateReport(
        monitor_name="monitor_54", max_abs_residual=0.0,
        violation_count=violations, tolerance_used=slack, series=series,
        details={"ratio_min": None if math.isinf(ratio_min) else ratio_min,
                 "first_violation": first_violation,
                 "t1": pipeline.t1, "T": pipeline.T, "K": pipeline.K})
