"""Deterministic initial-data generators.

Exact shrinking solutions (circle, sphere, torus product), Lipschitz corner
graphs from triangle waves, periodic Gaussian mollification, band-limited
random Fourier graphs, and the degree-one Lipschitz cone graph over R^4
popularized by Lawson and Osserman (map from their minimal-surface-system
paper; provenance recorded in run artifacts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .forms import smoothstep
from .geometry import GraphGrid, ImmersionGrid

LO_SCALE = math.sqrt(5.0) / 2.0
LO_PROVENANCE = ("degree-one Lipschitz cone graph R^4 -> R^3 via the Hopf map, "
                 "f(x) = (sqrt(5)/2) |x| eta(x/|x|); map taken from Lawson & "
                 "Osserman, Acta Math. 139 (1977)")


@dataclass
class GeneratorSpec:
    """Config-file description of an initial datum; seed determines output."""

    kind: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0

    KINDS = ("circle", "sphere", "clifford_torus", "corner_graph",
             "random_fourier", "lawson_osserman")

    def build(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        fn = globals()[self.kind]
        if self.kind in ("corner_graph", "random_fourier"):
            return fn(seed=self.seed, **self.parameters)
        return fn(**self.parameters)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameters": dict(self.parameters), "seed": self.seed}


# ---------------------------------------------------------------------------
# exact-solution fixtures


def circle(R0: float = 1.0, N: int = 256) -> ImmersionGrid:
    """Round circle of radius R0 in R^2; R(t) = sqrt(R0^2 - 2t) under the flow."""
    theta = np.arange(N) * (2.0 * math.pi / N)
    pos = R0 * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return ImmersionGrid(n=1, m=1, shape=(N,), spacing=(2.0 * math.pi / N,), positions=pos)


def sphere(R0: float = 1.0, N: int = 32, band_exclusion: int = 3) -> ImmersionGrid:
    """Round 2-sphere of radius R0 in R^3 on a doubly periodic double cover.

    The polar angle runs over the full circle with a half-cell offset, so the
    parametrization is genuinely periodic in both axes and never hits the
    poles exactly; the metric still degenerates near them.  diag_mask marks
    the latitude band (band_exclusion cells around each pole) that
    diagnostics must exclude; runs report this exclusion.
    """
    h = 2.0 * math.pi / N
    theta = (np.arange(N) + 0.5) * h
    phi = np.arange(N) * h
    T, PH = np.meshgrid(theta, phi, indexing="ij")
    pos = R0 * np.stack([np.sin(T) * np.cos(PH), np.sin(T) * np.sin(PH), np.cos(T)], axis=-1)
    pole_dist = np.minimum(np.abs(np.sin(T)), 1.0)
    mask = pole_dist > math.sin(min(band_exclusion * h, math.pi / 2 - 1e-9))
    return ImmersionGrid(n=2, m=1, shape=(N, N), spacing=(h, h), positions=pos,
                         diag_mask=mask)


def clifford_torus(R1: float = 1.0, R2: float = 1.0, N: int = 64) -> ImmersionGrid:
    """Product torus S^1(R1) x S^1(R2) in R^4."""
    h = 2.0 * math.pi / N
    a = np.arange(N) * h
    T1, T2 = np.meshgrid(a, a, indexing="ij")
    pos = np.stack([R1 * np.cos(T1), R1 * np.sin(T1),
                    R2 * np.cos(T2), R2 * np.sin(T2)], axis=-1)
    return ImmersionGrid(n=2, m=2, shape=(N, N), spacing=(h, h), positions=pos)


# ---------------------------------------------------------------------------
# Lipschitz corner graphs


def _triangle_wave(x: np.ndarray, period: float, phase: float) -> np.ndarray:
    """Periodic triangle wave with slope exactly +-1 and zero mean."""
    w = np.mod(x / period + phase, 1.0)
    return period * (np.abs(w - 0.5) - 0.25)


def corner_graph(n: int, m: int, slope: float, N: int = 128, seed: int = 0,
                 length: float = 2.0) -> GraphGrid:
    """Piecewise-linear periodic graph with Lipschitz constant exactly `slope`.

    Component b < min(n, m) is a triangle wave of the single coordinate
    x^(b) with a seeded random phase; the remaining components vanish.  The
    differential then has min(n, m) singular values equal to `slope` at
    every non-corner point, so the worst-case projection Jacobian is
    (1 + slope^2)^(-min(n, m)/2).
    """
    if slope < 0.0:
        raise ValueError("slope must be >= 0")
    rng = np.random.default_rng(seed)
    h = length / N
    axes = [np.arange(N) * h for _ in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    values = np.zeros(tuple([N] * n) + (m,))
    for b in range(min(n, m)):
        phase = rng.random()
        values[..., b] = slope * _triangle_wave(mesh[b], length, phase)
    return GraphGrid(n=n, m=m, shape=tuple([N] * n), spacing=tuple([h] * n),
                     values=values)


def corner_min_star_omega(slope: float, n: int, m: int) -> float:
    """Exact worst-case projection Jacobian of corner_graph data."""
    return (1.0 + slope**2) ** (-min(n, m) / 2.0)


def slope_for_min_star_omega(target: float, n: int, m: int) -> float:
    """Slope that makes corner_min_star_omega hit `target` exactly."""
    return math.sqrt(target ** (-2.0 / min(n, m)) - 1.0)


def mollify(g: GraphGrid, sigma: float) -> GraphGrid:
    """Periodic Gaussian smoothing (truncated at 4 sigma) of a graph.

    Convolution with a probability kernel never increases max |df|, so the
    Lipschitz bound and the worst-case projection Jacobian are preserved.
    """
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return g
    sig_cells = [sigma / h for h in g.spacing] + [0.0]
    smoothed = gaussian_filter(g.values, sigma=sig_cells, mode="wrap", truncate=4.0)
    return g.with_values(smoothed, g.time)


# ---------------------------------------------------------------------------
# random Fourier data


def random_fourier(n: int, m: int, modes: int = 3, amplitude: float = 0.1,
                   N: int = 64, seed: int = 0, length: float = 2.0 * math.pi) -> GraphGrid:
    """Band-limited analytic periodic graph; amplitude 0 gives the flat graph."""
    if amplitude < 0.0:
        raise ValueError("amplitude must be >= 0")
    rng = np.random.default_rng(seed)
    h = length / N
    axes = [np.arange(N) * h for _ in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    values = np.zeros(tuple([N] * n) + (m,))
    kvals = range(-modes, modes + 1)
    for b in range(m):
        acc = np.zeros(tuple([N] * n))
        for k in np.ndindex(*([2 * modes + 1] * n)):
            kv = np.array([list(kvals)[ki] for ki in k])
            if not np.any(kv):
                continue
            coeff = rng.normal() / (1.0 + np.sum(kv**2))
            phase = rng.random() * 2.0 * math.pi
            arg = sum(2.0 * math.pi * kv[i] * mesh[i] / length for i in range(n))
            acc += coeff * np.cos(arg + phase)
        values[..., b] = amplitude * acc
    return GraphGrid(n=n, m=m, shape=tuple([N] * n), spacing=tuple([h] * n),
                     values=values)


def perturbed_circle(R0: float = 1.0, N: int = 256, amplitude: float = 0.05,
                     modes: int = 3, seed: int = 0) -> ImmersionGrid:
    """Circle with a seeded band-limited radial perturbation."""
    rng = np.random.default_rng(seed)
    theta = np.arange(N) * (2.0 * math.pi / N)
    r = np.full(N, R0)
    for k in range(1, modes + 1):
        r += amplitude * rng.normal() / k * np.cos(k * theta + rng.random() * 2 * math.pi)
    pos = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    return ImmersionGrid(n=1, m=1, shape=(N,), spacing=(2.0 * math.pi / N,), positions=pos)


# ---------------------------------------------------------------------------
# Lawson-Osserman cone graph


def _hopf_quadratic(x: np.ndarray) -> np.ndarray:
    """Q: R^4 -> R^3 with |Q(x)| = |x|^2 (the Hopf map, unnormalized)."""
    x1, x2, x3, x4 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return np.stack([x1**2 + x2**2 - x3**2 - x4**2,
                     2.0 * (x1 * x3 + x2 * x4),
                     2.0 * (x2 * x3 - x1 * x4)], axis=-1)


def lawson_osserman_values(points: np.ndarray) -> np.ndarray:
    """f(x) = (sqrt(5)/2) Q(x)/|x| on R^4 \\ {0}, f(0) = 0; degree-1 homogeneous."""
    pts = np.asarray(points, dtype=float)
    r = np.linalg.norm(pts, axis=-1)
    safe = np.where(r > 0.0, r, 1.0)
    out = LO_SCALE * _hopf_quadratic(pts) / safe[..., None]
    return np.where(r[..., None] > 0.0, out, 0.0)


def lawson_osserman_df(points: np.ndarray) -> np.ndarray:
    """Closed-form differential of the unwindowed cone map, shaped (..., 3, 4)."""
    pts = np.asarray(points, dtype=float)
    r = np.linalg.norm(pts, axis=-1)
    if np.any(r == 0.0):
        raise ValueError("df undefined at the cone vertex")
    x1, x2, x3, x4 = pts[..., 0], pts[..., 1], pts[..., 2], pts[..., 3]
    DQ = np.stack([
        np.stack([2 * x1, 2 * x2, -2 * x3, -2 * x4], axis=-1),
        np.stack([2 * x3, 2 * x4, 2 * x1, 2 * x2], axis=-1),
        np.stack([-2 * x4, 2 * x3, 2 * x2, -2 * x1], axis=-1),
    ], axis=-2)
    Q = _hopf_quadratic(pts)
    return LO_SCALE * (DQ / r[..., None, None]
                       - Q[..., :, None] * pts[..., None, :] / (r**3)[..., None, None])


def lawson_osserman(N: int = 16, box_scale: float = 1.0,
                    profile_order: int = 3) -> GraphGrid:
    """Lawson-Osserman cone graph over a periodized box in R^4 (n=4, m=3).

    The cone is truncated and smoothly windowed to zero between radius
    0.4 * box and 0.45 * box (box = full domain width), which keeps the
    homogeneous cone region pristine while meeting the periodic boundary
    requirement.
    """
    if N < 8:
        raise ValueError("need N >= 8 per axis")
    L = 2.0 * box_scale
    h = L / N
    axes = [(-box_scale + np.arange(N) * h) for _ in range(4)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    vals = lawson_osserman_values(pts)
    r = np.linalg.norm(pts, axis=-1)
    s = (r - 0.4 * L) / (0.05 * L)
    S, _, _ = smoothstep(s, profile_order)
    vals = vals * (1.0 - S)[..., None]
    return GraphGrid(n=4, m=3, shape=(N,) * 4, spacing=(h,) * 4, values=vals)


def lo_window_radius(box_scale: float = 1.0) -> float:
    """Radius below which lawson_osserman values are the pristine cone."""
    return 0.4 * 2.0 * box_scale
