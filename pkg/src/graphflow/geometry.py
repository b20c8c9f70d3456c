"""Pointwise differential geometry of sampled immersions on periodic grids.

Everything is second-order central finite differences with periodic wrap.
Grid-wide functions operate on arrays shaped (*grid_shape, ...); the
per-point operations are thin wrappers used by tests and callers that only
need one sample.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import FrameDegeneracy, SingularMetric

DET_EPS = 1e-12       # det(g) below this raises SingularMetric
FRAME_EPS = 1e-8      # Gram-Schmidt candidate rejection threshold
MIN_POINTS_PER_AXIS = 8


# ---------------------------------------------------------------------------
# grid containers


@dataclass
class ImmersionGrid:
    """Sampled parametric immersion of the n-torus into R^(n+m)."""

    n: int
    m: int
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    positions: np.ndarray      # (*shape, n+m)
    time: float = 0.0
    diag_mask: np.ndarray | None = None   # True where diagnostics are trusted

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.spacing = tuple(float(h) for h in self.spacing)
        if len(self.shape) != self.n or len(self.spacing) != self.n:
            raise ValueError("shape/spacing must have one entry per intrinsic axis")
        if any(s < MIN_POINTS_PER_AXIS for s in self.shape):
            raise ValueError(f"need >= {MIN_POINTS_PER_AXIS} points per axis")
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.shape != self.shape + (self.n + self.m,):
            raise ValueError("positions shape mismatch")

    @property
    def ambient_dim(self) -> int:
        return self.n + self.m

    def with_positions(self, positions: np.ndarray, time: float) -> "ImmersionGrid":
        return replace(self, positions=positions, time=time)


@dataclass
class GraphGrid:
    """Sampled vector-valued graph f: T^n -> R^m (nonparametric representation)."""

    n: int
    m: int
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    values: np.ndarray         # (*shape, m)
    time: float = 0.0

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.spacing = tuple(float(h) for h in self.spacing)
        if len(self.shape) != self.n or len(self.spacing) != self.n:
            raise ValueError("shape/spacing must have one entry per intrinsic axis")
        if any(s < MIN_POINTS_PER_AXIS for s in self.shape):
            raise ValueError(f"need >= {MIN_POINTS_PER_AXIS} points per axis")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.shape + (self.m,):
            raise ValueError("values shape mismatch")

    @property
    def ambient_dim(self) -> int:
        return self.n + self.m

    def with_values(self, values: np.ndarray, time: float) -> "GraphGrid":
        return replace(self, values=values, time=time)

    def base_coordinates(self) -> np.ndarray:
        """Parameter coordinates of every grid point, shaped (*shape, n)."""
        axes = [np.arange(s) * h for s, h in zip(self.shape, self.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def ambient_positions(self) -> np.ndarray:
        """(x, f(x)) over one fundamental domain, shaped (*shape, n+m)."""
        return np.concatenate([self.base_coordinates(), self.values], axis=-1)


@dataclass
class Jet2:
    """First and second coordinate partials of F at one grid point."""

    first: np.ndarray    # (n, n+m)
    second: np.ndarray   # (n, n, n+m), symmetric in the first two slots


@dataclass
class Frames:
    tangent: np.ndarray   # (n, n+m) orthonormal
    normal: np.ndarray    # (m, n+m) orthonormal


@dataclass
class GeometrySample:
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det_g: float
    P: np.ndarray
    A_tensor: np.ndarray    # (n, n, n+m)
    A_norm2: float
    H: np.ndarray
    christoffel: np.ndarray  # [i, j, k] = Gamma^k_ij


# ---------------------------------------------------------------------------
# periodic stencils


def _d1(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) / (2.0 * h)


def _d2(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(arr, -1, axis=axis) - 2.0 * arr + np.roll(arr, 1, axis=axis)) / (h * h)


def _d_cross(arr: np.ndarray, ax1: int, ax2: int, h1: float, h2: float) -> np.ndarray:
    pp = np.roll(np.roll(arr, -1, axis=ax1), -1, axis=ax2)
    mm = np.roll(np.roll(arr, 1, axis=ax1), 1, axis=ax2)
    pm = np.roll(np.roll(arr, -1, axis=ax1), 1, axis=ax2)
    mp = np.roll(np.roll(arr, 1, axis=ax1), -1, axis=ax2)
    return (pp + mm - pm - mp) / (4.0 * h1 * h2)


def jet_fields(grid) -> tuple[np.ndarray, np.ndarray]:
    """Grid-wide 2-jet: (first, second) with shapes (*shape, n, N), (*shape, n, n, N).

    For GraphGrid the base-coordinate part of the jet is exact (identity /
    zero), so the periodic wrap never touches the non-periodic base
    coordinates.
    """
    n = grid.n
    if isinstance(grid, GraphGrid):
        vals = grid.values
        df = np.stack([_d1(vals, i, grid.spacing[i]) for i in range(n)], axis=-2)
        first = np.zeros(grid.shape + (n, grid.ambient_dim))
        for i in range(n):
            first[..., i, i] = 1.0
        first[..., :, n:] = df
        second = np.zeros(grid.shape + (n, n, grid.ambient_dim))
        for i in range(n):
            second[..., i, i, n:] = _d2(vals, i, grid.spacing[i])
            for j in range(i + 1, n):
                mixed = _d_cross(vals, i, j, grid.spacing[i], grid.spacing[j])
                second[..., i, j, n:] = mixed
                second[..., j, i, n:] = mixed
        return first, second
    F = grid.positions
    first = np.stack([_d1(F, i, grid.spacing[i]) for i in range(n)], axis=-2)
    second = np.empty(grid.shape + (n, n, grid.ambient_dim))
    for i in range(n):
        second[..., i, i, :] = _d2(F, i, grid.spacing[i])
        for j in range(i + 1, n):
            mixed = _d_cross(F, i, j, grid.spacing[i], grid.spacing[j])
            second[..., i, j, :] = mixed
            second[..., j, i, :] = mixed
    return first, second


def jet(grid, index) -> Jet2:
    """2-jet at a single grid point (periodic central stencils)."""
    first, second = jet_fields(grid)
    idx = tuple(index) if np.ndim(index) else (index,)
    return Jet2(first=first[idx], second=second[idx])


# ---------------------------------------------------------------------------
# metric, projection, curvature


def metric_fields(first: np.ndarray):
    """(g, g_inv, sqrt_det_g) from first derivatives; raises SingularMetric."""
    g = np.einsum("...iA,...jA->...ij", first, first)
    det = np.linalg.det(g)
    if np.any(det <= DET_EPS) or not np.all(np.isfinite(det)):
        raise SingularMetric(f"min det(g) = {np.nanmin(det):.3e}")
    return g, np.linalg.inv(g), np.sqrt(det)


def metric(j: Jet2):
    g, g_inv, s = metric_fields(j.first[None])
    return g[0], g_inv[0], float(s[0])


def normal_projection_fields(first: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """P^A_B = delta^A_B - g^kl d_k F^A d_l F^B (symmetric projector)."""
    N = first.shape[-1]
    tangential = np.einsum("...kl,...kA,...lB->...AB", g_inv, first, first)
    return np.eye(N) - tangential


def normal_projection(j: Jet2, g_inv: np.ndarray) -> np.ndarray:
    return normal_projection_fields(j.first[None], g_inv[None])[0]


def second_fundamental_form_fields(second, P, g_inv):
    """(A_tensor, A_norm2, H): A_ij = P(d2_ij F), H = g^ij A_ij."""
    A = np.einsum("...AB,...ijB->...ijA", P, second)
    A_norm2 = np.einsum("...ik,...jl,...ijA,...klA->...", g_inv, g_inv, A, A)
    H = np.einsum("...ij,...ijA->...A", g_inv, A)
    return A, A_norm2, H


def second_fundamental_form(j: Jet2, P, g_inv):
    A, A2, H = second_fundamental_form_fields(j.second[None], P[None], g_inv[None])
    return A[0], float(A2[0]), H[0]


def christoffel_fields(first, second, g_inv):
    """Gamma[..., i, j, k] = Gamma^k_ij = g^kl <d2_ij F, d_l F> (flat ambient)."""
    lower = np.einsum("...ijA,...lA->...ijl", second, first)
    return np.einsum("...kl,...ijl->...ijk", g_inv, lower)


# ---------------------------------------------------------------------------
# frames


def tangent_frames_field(first: np.ndarray) -> np.ndarray:
    """Vectorized Gram-Schmidt on first-derivative vectors in axis order.

    Deterministic: each e_i is a positive multiple of d_i F minus earlier
    projections, so the frame orientation matches the coordinate orientation.
    """
    n = first.shape[-2]
    out = np.empty_like(first)
    for i in range(n):
        v = first[..., i, :].copy()
        for j in range(i):
            v -= np.einsum("...A,...A->...", v, out[..., j, :])[..., None] * out[..., j, :]
        norm = np.linalg.norm(v, axis=-1)
        if np.any(norm < FRAME_EPS):
            raise FrameDegeneracy("tangent vectors not linearly independent")
        out[..., i, :] = v / norm[..., None]
    return out


def _sign_fix(v: np.ndarray) -> np.ndarray:
    """Flip so the first component with |.| > FRAME_EPS is positive."""
    mask = np.abs(v) > FRAME_EPS
    idx = np.argmax(mask, axis=-1)
    lead = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    sign = np.where(lead < 0.0, -1.0, 1.0)
    return v * sign[..., None]


def frames_fields(first: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(tangent, normal) orthonormal frame fields.

    Normal frames: Gram-Schmidt on the P-projected ambient basis vectors in
    axis order, skipping near-zero projections, leading-component sign made
    positive.  The skip pattern can differ per point, so this part loops.
    """
    tangent = tangent_frames_field(first)
    lead_shape = first.shape[:-2]
    n, N = first.shape[-2], first.shape[-1]
    m = N - n
    normal = np.empty(lead_shape + (m, N))
    P_flat = P.reshape(-1, N, N)
    nrm_flat = normal.reshape(-1, m, N)
    tan_flat = tangent.reshape(-1, n, N)
    for p in range(P_flat.shape[0]):
        accepted = []
        basis = list(tan_flat[p])
        for a in range(N):
            v = P_flat[p, :, a].copy()
            for b in basis:
                v -= np.dot(v, b) * b
            nv = np.linalg.norm(v)
            if nv < FRAME_EPS:
                continue
            v /= nv
            basis.append(v)
            accepted.append(v)
            if len(accepted) == m:
                break
        if len(accepted) < m:
            raise FrameDegeneracy(f"only {len(accepted)} of {m} normal directions found")
        nrm_flat[p] = _sign_fix(np.array(accepted))
    return tangent, normal


def frames(j: Jet2, P: np.ndarray) -> Frames:
    t, nn = frames_fields(j.first[None], P[None])
    return Frames(tangent=t[0], normal=nn[0])


def h_components_field(A_tensor, first, g_inv, tangent, normal):
    """h[..., a, i, j] = <A(e_i, e_j), e_a> with e_i expanded in coordinates."""
    # coefficients c with e_i = c_ik d_k F:  c = <e_i, d_j F> g^jk
    overlaps = np.einsum("...iA,...jA->...ij", tangent, first)
    c = np.einsum("...ij,...jk->...ik", overlaps, g_inv)
    A_frame = np.einsum("...ik,...jl,...klA->...ijA", c, c, A_tensor)
    return np.einsum("...ijA,...aA->...aij", A_frame, normal)


def h_components(A_tensor, f: Frames, first, g_inv):
    return h_components_field(A_tensor[None], first[None], g_inv[None],
                              f.tangent[None], f.normal[None])[0]


# ---------------------------------------------------------------------------
# star Omega, singular values


def star_omega_field(first, sqrt_det_g, form) -> np.ndarray:
    """*Omega = Omega(d_1 F, ..., d_n F) / sqrt(det g)."""
    return form.evaluate_field(first) / sqrt_det_g


def star_omega(j: Jet2, sqrt_det_g: float, form) -> float:
    return float(form.evaluate(j.first) / sqrt_det_g)


def singular_values(df: np.ndarray) -> np.ndarray:
    """Singular values of the graph differential, sorted descending.

    df has shape (..., m, n); returns (..., min(n, m)).
    """
    return np.linalg.svd(np.asarray(df, dtype=float), compute_uv=False)


def delta_31(lam: np.ndarray) -> np.ndarray:
    """delta = 2 - prod(1 + lambda_i^2); positive iff *Omega > 1/sqrt(2)."""
    lam = np.asarray(lam, dtype=float)
    return 2.0 - np.prod(1.0 + lam**2, axis=-1)


def graph_df_field(grid: GraphGrid) -> np.ndarray:
    """df[..., b, i] = d f^b / d x^i by periodic central differences."""
    cols = [_d1(grid.values, i, grid.spacing[i]) for i in range(grid.n)]
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# induced Laplacian and a bundled geometry pass


def induced_laplacian(field_values: np.ndarray, grid) -> np.ndarray:
    """Laplace-Beltrami of a scalar grid field: g^ij (d2_ij phi - Gamma^k_ij d_k phi)."""
    first, second = jet_fields(grid)
    g, g_inv, _ = metric_fields(first)
    gamma = christoffel_fields(first, second, g_inv)
    n = grid.n
    dphi = np.stack([_d1(field_values, i, grid.spacing[i]) for i in range(n)], axis=-1)
    d2phi = np.empty(grid.shape + (n, n))
    for i in range(n):
        d2phi[..., i, i] = _d2(field_values, i, grid.spacing[i])
        for j in range(i + 1, n):
            mixed = _d_cross(field_values, i, j, grid.spacing[i], grid.spacing[j])
            d2phi[..., i, j] = mixed
            d2phi[..., j, i] = mixed
    hess = d2phi - np.einsum("...ijk,...k->...ij", gamma, dphi)
    return np.einsum("...ij,...ij->...", g_inv, hess)


@dataclass
class GeometryFields:
    """One full geometry pass over a grid; all arrays lead with the grid shape."""

    first: np.ndarray
    second: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det_g: np.ndarray
    P: np.ndarray
    A_tensor: np.ndarray
    A_norm2: np.ndarray
    H: np.ndarray
    christoffel: np.ndarray


def geometry_fields(grid) -> GeometryFields:
    first, second = jet_fields(grid)
    g, g_inv, sdet = metric_fields(first)
    P = normal_projection_fields(first, g_inv)
    A, A2, H = second_fundamental_form_fields(second, P, g_inv)
    gamma = christoffel_fields(first, second, g_inv)
    return GeometryFields(first, second, g, g_inv, sdet, P, A, A2, H, gamma)


def geometry_sample(grid, index) -> GeometrySample:
    gf = geometry_fields(grid)
    idx = tuple(index) if np.ndim(index) else (index,)
    return GeometrySample(
        g=gf.g[idx], g_inv=gf.g_inv[idx], sqrt_det_g=float(gf.sqrt_det_g[idx]),
        P=gf.P[idx], A_tensor=gf.A_tensor[idx], A_norm2=float(gf.A_norm2[idx]),
        H=gf.H[idx], christoffel=gf.christoffel[idx])
