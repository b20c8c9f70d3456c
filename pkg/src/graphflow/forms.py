"""Constant and averaged n-forms on the ambient space.

Covers Grassmann evaluation of the projection Jacobian for arbitrary
constant forms, the covering/cutoff/partition-of-unity construction of a
locally averaged plane volume form, and the derived constant pipeline
(K0, K, epsilon, c5..c9, t0, t1, T).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (CoverageFailure, EmptyCover, InfeasibleConstants,
                     NonOrthonormalFrame)

K_SCAN_STEP = 1e-3           # resolution of the K0 scan
SQRT2_INV = 1.0 / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# constant n-forms


def _combos(n: int, ambient_dim: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.combinations(range(ambient_dim), n))


@dataclass(frozen=True)
class ConstantNForm:
    """n-form with constant coefficients on strictly increasing multi-indices."""

    n: int
    ambient_dim: int
    coeffs: np.ndarray   # (C(ambient_dim, n),), ordered like _combos

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if self.coeffs.shape != (math.comb(self.ambient_dim, self.n),):
            raise ValueError("coefficient count mismatch")

    @property
    def indices(self) -> tuple[tuple[int, ...], ...]:
        return _combos(self.n, self.ambient_dim)

    @property
    def norm2(self) -> float:
        return float(np.dot(self.coeffs, self.coeffs))

    def evaluate_field(self, vectors: np.ndarray) -> np.ndarray:
        """Omega(v_1, ..., v_n) for vectors shaped (..., n, ambient_dim)."""
        return evaluate_coeffs_field(self.n, self.ambient_dim, self.coeffs, vectors)

    def evaluate(self, vectors: np.ndarray) -> float:
        return float(self.evaluate_field(np.asarray(vectors, dtype=float)[None])[0])


def minors_field(n: int, ambient_dim: int, vectors: np.ndarray) -> np.ndarray:
    """All n x n minors det(v_i^{A_j}) over increasing multi-indices, (..., K)."""
    combos = _combos(n, ambient_dim)
    if n == 1:
        return np.moveaxis(vectors[..., 0, :], -1, -1)
    mats = np.stack([vectors[..., list(c)] for c in combos], axis=-3)
    return np.linalg.det(mats)


def evaluate_coeffs_field(n, ambient_dim, coeffs, vectors) -> np.ndarray:
    """Evaluate a coefficient vector (..., K) or (K,) on vectors (..., n, N)."""
    minors = minors_field(n, ambient_dim, vectors)
    return np.einsum("...k,...k->...", np.broadcast_to(coeffs, minors.shape), minors)


def evaluate(form: ConstantNForm, vectors: np.ndarray) -> float:
    return form.evaluate(vectors)


def plane_volume_form(frame: np.ndarray) -> ConstantNForm:
    """Volume form of the oriented plane spanned by n orthonormal ambient vectors."""
    frame = np.asarray(frame, dtype=float)
    n, N = frame.shape
    gram = frame @ frame.T
    if np.max(np.abs(gram - np.eye(n))) > 1e-8:
        raise NonOrthonormalFrame("plane frame is not orthonormal")
    coeffs = minors_field(n, N, frame[None])[0]
    return ConstantNForm(n=n, ambient_dim=N, coeffs=coeffs)


def base_volume_form(n: int, ambient_dim: int) -> ConstantNForm:
    """Volume form of the first-n-axes coordinate plane."""
    frame = np.zeros((n, ambient_dim))
    for i in range(n):
        frame[i, i] = 1.0
    return plane_volume_form(frame)


# ---------------------------------------------------------------------------
# cutoff profile


def smoothstep(s: np.ndarray, order: int = 3):
    """(S, S', S'') of the polynomial smoothstep on [0, 1].

    order 2: quintic (C^2 at both edges); order 3: degree 7 (C^3); order 4:
    degree 9 (C^4).  Degree 7 is the default: two continuous derivatives
    satisfy the partition bounds, and the extra edge regularity keeps
    second-difference residuals of averaged-form fields at full second
    order.  Order 4 shrinks the constant in those residuals further and is
    used for refinement studies.
    """
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    if order == 2:
        S = s**3 * (10.0 + s * (-15.0 + 6.0 * s))
        S1 = 30.0 * s**2 * (s - 1.0) ** 2
        S2 = s * (60.0 + s * (-180.0 + 120.0 * s))
    elif order == 3:
        S = s**4 * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)))
        S1 = s**3 * (140.0 + s * (-420.0 + s * (420.0 - 140.0 * s)))
        S2 = s**2 * (420.0 + s * (-1680.0 + s * (2100.0 - 840.0 * s)))
    elif order == 4:
        S = s**5 * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + 70.0 * s))))
        S1 = s**4 * (630.0 + s * (-2520.0 + s * (3780.0 + s * (-2520.0 + 630.0 * s))))
        S2 = s**3 * (2520.0 + s * (-12600.0 + s * (22680.0
                     + s * (-17640.0 + 5040.0 * s))))
    else:
        raise ValueError("profile order must be 2, 3, or 4")
    return S, S1, S2


def cutoff_field(points: np.ndarray, center: np.ndarray, r0: float, order: int = 3):
    """(phi, Dphi, D2phi) of the radial cutoff at many ambient points.

    phi = 1 on |y - q| <= 4 r0/5, phi = 0 outside |y - q| >= r0, radial
    smoothstep in between.  points: (..., N).
    """
    diff = points - center
    r = np.linalg.norm(diff, axis=-1)
    w = r0 / 5.0
    s = (r - 0.8 * r0) / w
    S, S1, S2 = smoothstep(s, order)
    phi = 1.0 - S
    dphi_dr = np.where((s > 0.0) & (s < 1.0), -S1 / w, 0.0)
    d2phi_dr2 = np.where((s > 0.0) & (s < 1.0), -S2 / (w * w), 0.0)
    safe_r = np.where(r > 1e-300, r, 1.0)
    rhat = diff / safe_r[..., None]
    N = points.shape[-1]
    outer = rhat[..., :, None] * rhat[..., None, :]
    eye = np.eye(N)
    Dphi = dphi_dr[..., None] * rhat
    D2phi = (d2phi_dr2[..., None, None] * outer
             + (dphi_dr / safe_r)[..., None, None] * (eye - outer))
    return phi, Dphi, D2phi


def cutoff(y: np.ndarray, center: np.ndarray, r0: float, order: int = 3):
    phi, D, D2 = cutoff_field(np.asarray(y, dtype=float)[None], np.asarray(center, float), r0, order)
    return float(phi[0]), D[0], D2[0]


def cutoff_profile_constants(order: int = 3, samples: int = 20001):
    """(c1, c2) with |Dphi| <= c1/r0 and |D2phi| <= c2/r0^2, from the profile.

    Measured on a fine radial grid at r0 = 1; the D2 bound uses the exact
    eigenvalues of the radial Hessian (phi'' radially, phi'/r tangentially).
    """
    r = np.linspace(1e-6, 1.0, samples)
    s = (r - 0.8) / 0.2
    _, S1, S2 = smoothstep(s, order)
    band = (s > 0.0) & (s < 1.0)
    dphi = np.where(band, -S1 / 0.2, 0.0)
    d2phi = np.where(band, -S2 / 0.04, 0.0)
    c1 = float(np.max(np.abs(dphi)))
    c2 = float(np.max(np.maximum(np.abs(d2phi), np.abs(dphi) / r)))
    return c1, c2


# ---------------------------------------------------------------------------
# sample clouds, covering selection


@dataclass
class SampleCloud:
    """Ambient samples of a submanifold, optionally with tangent frames."""

    points: np.ndarray                 # (M, N)
    tangents: np.ndarray | None = None  # (M, n, N) orthonormal rows

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.tangents is not None:
            self.tangents = np.asarray(self.tangents, dtype=float)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def max_gap(self) -> float:
        """Largest nearest-neighbor distance (sampling density proxy)."""
        if self.size < 2:
            return 0.0
        tree = cKDTree(self.points)
        d, _ = tree.query(self.points, k=2)
        return float(np.max(d[:, 1]))


@dataclass
class AveragedForm:
    """Locally averaged plane volume form: centers, plane frames, cutoff data."""

    n: int
    ambient_dim: int
    centers: np.ndarray        # (C, N)
    plane_frames: np.ndarray   # (C, n, N)
    r0: float
    profile_order: int = 3
    plane_forms: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.plane_frames = np.asarray(self.plane_frames, dtype=float)
        if not self.plane_forms:
            self.plane_forms = [plane_volume_form(f) for f in self.plane_frames]
        # (C, K) coefficient matrix of the per-center plane volume forms
        self.coeff_matrix = np.stack([f.coeffs for f in self.plane_forms])

    @property
    def num_centers(self) -> int:
        return self.centers.shape[0]

    def validate(self, atol: float = 1e-10) -> None:
        c = self.centers
        if self.num_centers > 1:
            d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            if d.min() < 2.0 * self.r0 / 5.0 - atol:
                raise CoverageFailure("center r0/5 balls overlap")
        for f in self.plane_frames:
            gram = f @ f.T
            if np.max(np.abs(gram - np.eye(self.n))) > atol:
                raise NonOrthonormalFrame("plane frame drifted from orthonormal")

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "ambient_dim": self.ambient_dim,
            "r0": self.r0,
            "profile_order": self.profile_order,
            "centers": self.centers.tolist(),
            "plane_frames": self.plane_frames.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "AveragedForm":
        d = json.loads(text)
        return cls(n=d["n"], ambient_dim=d["ambient_dim"],
                   centers=np.array(d["centers"]),
                   plane_frames=np.array(d["plane_frames"]),
                   r0=d["r0"], profile_order=d["profile_order"])


def _fit_plane_frame(points: np.ndarray, n: int, fallback: np.ndarray | None) -> np.ndarray:
    """Total-least-squares n-plane directions from a local point cluster."""
    N = points.shape[-1]
    if points.shape[0] >= n + 1:
        centered = points - points.mean(axis=0)
        _, sv, vt = np.linalg.svd(centered, full_matrices=False)
        if len(sv) >= n and sv[n - 1] > 1e-12:
            return vt[:n]
    if fallback is not None:
        q, _ = np.linalg.qr(fallback.T)
        return q.T[:n]
    frame = np.zeros((n, N))
    for i in range(n):
        frame[i, i] = 1.0
    return frame


def _orient_frame(frame: np.ndarray, reference: np.ndarray | None) -> np.ndarray:
    """Flip the first frame vector so the plane form is positive on the reference."""
    if reference is None:
        return frame
    val = plane_volume_form(frame).evaluate(reference)
    if val < 0.0:
        frame = frame.copy()
        frame[0] = -frame[0]
    return frame


def select_centers(cloud: SampleCloud, r0: float, n: int | None = None,
                   profile_order: int = 3) -> AveragedForm:
    """Greedy maximal packing of r0/5 balls plus fitted tangent planes.

    Samples are visited in order; a sample becomes a center when it is at
    least 2r0/5 from every existing center.  Maximality guarantees every
    sample lies within 2r0/5 < 4r0/5 of some center; the coverage invariant
    is still checked explicitly.
    """
    pts = cloud.points
    if n is None:
        if cloud.tangents is None:
            raise ValueError("need explicit n when the cloud has no tangents")
        n = cloud.tangents.shape[1]
    chosen: list[int] = []
    centers: list[np.ndarray] = []
    min_sep = 2.0 * r0 / 5.0
    for i in range(pts.shape[0]):
        p = pts[i]
        if centers:
            d2 = np.min(np.sum((np.array(centers) - p) ** 2, axis=1))
            if d2 < min_sep * min_sep:
                continue
        centers.append(p)
        chosen.append(i)
    centers_arr = np.array(centers)
    tree = cKDTree(centers_arr)
    dist, _ = tree.query(pts)
    if np.max(dist) > 0.8 * r0:
        raise CoverageFailure(
            f"sample at distance {np.max(dist):.3g} > 4 r0/5 = {0.8 * r0:.3g} from all centers")
    pts_tree = cKDTree(pts)
    frames = []
    for idx, q in zip(chosen, centers_arr):
        near = pts_tree.query_ball_point(q, r0 / 5.0)
        fallback = cloud.tangents[idx] if cloud.tangents is not None else None
        frame = _fit_plane_frame(pts[near], n, fallback)
        frame = _orient_frame(frame, fallback)
        frames.append(frame)
    return AveragedForm(n=n, ambient_dim=pts.shape[-1], centers=centers_arr,
                        plane_frames=np.array(frames), r0=r0,
                        profile_order=profile_order)


# ---------------------------------------------------------------------------
# partition of unity and averaged-form evaluation


def partition_field(points: np.ndarray, form: AveragedForm):
    """(p, Dp, D2p) per center at many points; raises EmptyCover where sum phi = 0.

    points: (M, N) -> p: (M, C), Dp: (M, C, N), D2p: (M, C, N, N).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    M, N = pts.shape
    C = form.num_centers
    phi = np.empty((M, C))
    Dphi = np.empty((M, C, N))
    D2phi = np.empty((M, C, N, N))
    for nu in range(C):
        phi[:, nu], Dphi[:, nu], D2phi[:, nu] = cutoff_field(
            pts, form.centers[nu], form.r0, form.profile_order)
    S = phi.sum(axis=1)
    if np.any(S <= 0.0):
        raise EmptyCover(f"{int(np.sum(S <= 0.0))} points outside the covered region")
    DS = Dphi.sum(axis=1)
    D2S = D2phi.sum(axis=1)
    p = phi / S[:, None]
    Dp = (Dphi / S[:, None, None]
          - phi[:, :, None] * DS[:, None, :] / (S**2)[:, None, None])
    cross = (Dphi[:, :, :, None] * DS[:, None, None, :]
             + DS[:, None, :, None] * Dphi[:, :, None, :])
    D2p = (D2phi / S[:, None, None, None]
           - cross / (S**2)[:, None, None, None]
           - phi[:, :, None, None] * D2S[:, None, :, :] / (S**2)[:, None, None, None]
           + 2.0 * phi[:, :, None, None]
           * (DS[:, :, None] * DS[:, None, :])[:, None, :, :]
           / (S**3)[:, None, None, None])
    return p, Dp, D2p


def partition(y: np.ndarray, form: AveragedForm):
    p, Dp, D2p = partition_field(np.asarray(y, dtype=float)[None], form)
    return p[0], Dp[0], D2p[0]


@dataclass
class AveragedFormJet:
    """Coefficients, gradients and Hessians of the averaged form at points."""

    n: int
    ambient_dim: int
    coeffs: np.ndarray     # (M, K)
    grads: np.ndarray      # (M, K, N)
    hessians: np.ndarray   # (M, K, N, N)

    def norm2(self) -> np.ndarray:
        return np.sum(self.coeffs**2, axis=-1)


def averaged_form_at(points: np.ndarray, form: AveragedForm) -> AveragedFormJet:
    """(Omega, D Omega, D^2 Omega) coefficient data at ambient points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p, Dp, D2p = partition_field(pts, form)
    Phi = form.coeff_matrix                      # (C, K)
    coeffs = p @ Phi                             # (M, K)
    grads = np.einsum("mcA,ck->mkA", Dp, Phi)
    hessians = np.einsum("mcAB,ck->mkAB", D2p, Phi)
    return AveragedFormJet(n=form.n, ambient_dim=form.ambient_dim,
                           coeffs=coeffs, grads=grads, hessians=hessians)


def averaged_star_omega_field(points, first, sqrt_det_g, form: AveragedForm):
    """*Omega of the averaged form along a sampled immersion.

    points, first, sqrt_det_g are grid fields ((*shape, N), (*shape, n, N),
    (*shape,)); coefficients are evaluated at each ambient point.
    """
    lead = points.shape[:-1]
    jet = averaged_form_at(points.reshape(-1, points.shape[-1]), form)
    minors = minors_field(form.n, form.ambient_dim,
                          first.reshape((-1,) + first.shape[-2:]))
    num = np.einsum("mk,mk->m", jet.coeffs, minors)
    return (num / sqrt_det_g.reshape(-1)).reshape(lead)


# ---------------------------------------------------------------------------
# K local Lipschitz condition


@dataclass
class KConditionReport:
    r0: float
    K: float
    minima: np.ndarray      # per-center min of *Omega_{L_q} over Sigma cap B(q, r0)
    passed: bool
    form: AveragedForm

    def to_dict(self) -> dict:
        return {"r0": self.r0, "K": self.K, "passed": bool(self.passed),
                "num_centers": int(self.minima.shape[0]),
                "min_star_omega": float(np.min(self.minima)),
                "minima": [float(v) for v in self.minima]}


def check_K_condition(cloud: SampleCloud, r0: float, K: float,
                      form: AveragedForm | None = None) -> KConditionReport:
    """Per-center minima of the plane-projection Jacobian over r0 balls."""
    if cloud.tangents is None:
        raise ValueError("K condition needs per-sample tangent frames")
    if form is None:
        form = select_centers(cloud, r0)
    tree = cKDTree(cloud.points)
    minima = np.empty(form.num_centers)
    for nu in range(form.num_centers):
        near = tree.query_ball_point(form.centers[nu], r0)
        vals = form.plane_forms[nu].evaluate_field(cloud.tangents[near])
        minima[nu] = float(np.min(vals))
    return KConditionReport(r0=r0, K=K, minima=minima,
                            passed=bool(np.all(minima > K)), form=form)


def measure_overlap(form: AveragedForm, points: np.ndarray) -> int:
    """Max number of cutoff supports containing any probe point or center."""
    probes = np.vstack([np.atleast_2d(points), form.centers])
    d = np.linalg.norm(probes[:, None, :] - form.centers[None, :, :], axis=-1)
    return int(np.max(np.sum(d < form.r0, axis=1)))


# ---------------------------------------------------------------------------
# constant pipeline


@dataclass
class ConstantPipeline:
    """All constants of the averaged-form maximum-principle argument."""

    n: int
    m: int
    r0: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float
    c9: float
    K0: float
    K: float
    epsilon: float
    t0: float
    t1: float
    T: float
    overlap_count: int
    profile_order: int

    def __post_init__(self):
        s = math.sqrt(max(0.0, 1.0 - self.K0**2))
        checks = [
            (0.0 < self.K0 < self.K < 1.0, "need K0 < K < 1"),
            (self.epsilon < self.K - self.K0, "need epsilon < K - K0"),
            (abs(self.c7 - (self.c5 + self.c6**2 / (4.0 * self.epsilon))) <= 1e-9 * max(1.0, self.c7),
             "c7 = c5 + c6^2/(4 eps)"),
            (abs(self.t0 - self.r0**2 / (50.0 * self.n)) <= 1e-12 * max(1.0, self.t0),
             "t0 = r0^2/(50 n)"),
            (self.t1 <= min((self.K - self.K0 - self.epsilon) / self.c7, self.t0) + 1e-15,
             "t1 = min((K - K0 - eps)/c7, t0)"),
            (self.T <= self.t1 + 1e-15, "T <= t1"),
            (self.c9 > 0.0 and abs(self.K0 - self.c8 * s - self.c9) <= 1e-9,
             "K0 - c8 sqrt(1 - K0^2) = c9 > 0"),
            (self.c9 / (1.0 - self.K) > 5.0, "c9/(1 - K) > 5"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InfeasibleConstants(msg)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "n", "m", "r0", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8",
            "c9", "K0", "K", "epsilon", "t0", "t1", "T", "overlap_count",
            "profile_order")}


def scan_K(n: int, m: int) -> tuple[float, float, float, float]:
    """Minimal admissible (K0, K, c8, c9) on a 1e-3 grid over (1/sqrt2, 1)."""
    c8 = float(n * (n - 1))
    best = None
    K0 = SQRT2_INV + K_SCAN_STEP
    while K0 < 1.0:
        c9 = K0 - c8 * math.sqrt(1.0 - K0**2)
        if c9 > 0.0:
            K = max(K0, 1.0 - c9 / 5.0) + K_SCAN_STEP
            if K < 1.0 and (best is None or K < best[1]):
                best = (K0, K, c8, c9)
        K0 += K_SCAN_STEP
    if best is None:
        raise InfeasibleConstants(f"no admissible K < 1 for n={n}, m={m}")
    return best


def compute_constants(n: int, m: int, r0: float, epsilon_rule: str = "half",
                      overlap_count: int | None = None,
                      profile_order: int = 3) -> ConstantPipeline:
    """Builds the full constant pipeline for the averaged-form argument.

    c8 = n(n-1): one Cauchy-Schwarz unit per ordered bracket slot of the
    quadratic curvature correction; recorded in every report since the
    source only pins it combinatorially.  Overlap count defaults to the
    6^(n+m) packing bound when no measured value is supplied.
    """
    if n < 1 or m < 1 or r0 <= 0.0:
        raise ValueError("need n, m >= 1 and r0 > 0")
    if epsilon_rule != "half":
        raise ValueError("only the 'half' epsilon rule is implemented")
    c1, c2 = cutoff_profile_constants(profile_order)
    M = int(overlap_count) if overlap_count is not None else 6 ** (n + m)
    c3 = (1.0 + M) * c1
    c4 = (1.0 + M) * c2 + 2.0 * M * c1**2 + 2.0 * M**2 * c1**2
    K0, K, c8, c9 = scan_K(n, m)
    eps = 0.5 * (K - K0)
    dim_count = math.sqrt(math.comb(n + m, n))
    c5 = dim_count * n * M * c4 / r0**2
    c6 = 2.0 * n * math.sqrt(M) * c3 / r0
    c7 = c5 + c6**2 / (4.0 * eps)
    t0 = r0**2 / (50.0 * n)
    t1 = min((K - K0 - eps) / c7, t0)
    s = math.sqrt(1.0 - K0**2)
    T = min(t1, (6.0 * K - c8 * s - eps - 5.0) / (6.0 * c7))
    return ConstantPipeline(n=n, m=m, r0=r0, c1=c1, c2=c2, c3=c3, c4=c4,
                            c5=c5, c6=c6, c7=c7, c8=c8, c9=c9, K0=K0, K=K,
                            epsilon=eps, t0=t0, t1=t1, T=T, overlap_count=M,
                            profile_order=profile_order)
