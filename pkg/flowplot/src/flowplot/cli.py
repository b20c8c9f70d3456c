"""Render figures from graphflow run artifacts.

Reads only the documented artifact schemas: ``series.csv`` (column "t"
plus named diagnostics) and ``report.json`` (schema_version 1).  Inputs
are never modified; the output image is written only after the inputs
validate, so a failed invocation leaves no file behind.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

KINDS = ("star_omega_vs_t", "A2_times_t", "hausdorff_envelope",
         "residual_convergence")

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 64

# generator kinds with a fixed intrinsic dimension
_KIND_DIMENSION = {"circle": 1, "perturbed_circle": 1, "sphere": 2,
                   "clifford_torus": 2, "lawson_osserman": 4}


class ArtifactError(Exception):
    """Input artifact is missing, empty, or does not match its schema."""


@dataclass
class PlotSpec:
    kind: str
    out: Path
    series: Path | None = None
    report: Path | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")
        self.out = Path(self.out)
        self.series = Path(self.series) if self.series is not None else None
        self.report = Path(self.report) if self.report is not None else None


def read_series(path: Path) -> dict[str, np.ndarray]:
    """Parse series.csv into named float columns; validates the layout."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ArtifactError(f"cannot read series file: {exc}") from exc
    if not rows or rows[0][:1] != ["t"]:
        raise ArtifactError(f"{path}: not a series.csv (header must start "
                            "with 't')")
    header, data = rows[0], rows[1:]
    if not data:
        raise ArtifactError(f"{path}: series is empty")
    try:
        values = np.array([[float(cell) for cell in row] for row in data])
    except ValueError as exc:
        raise ArtifactError(f"{path}: non-numeric series cell: {exc}") from exc
    if values.shape[1] != len(header):
        raise ArtifactError(f"{path}: ragged rows")
    return {name: values[:, j] for j, name in enumerate(header)}


def read_report(path: Path) -> dict:
    try:
        with open(path) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read report file: {exc}") from exc
    if not isinstance(report, dict) or report.get("schema_version") != 1:
        raise ArtifactError(f"{path}: not a schema_version-1 report")
    return report


def _column(series: dict, name: str) -> np.ndarray:
    if name not in series:
        raise ArtifactError(f"series has no column {name!r} "
                            f"(columns: {', '.join(series)})")
    return series[name]


def _resolve_K_c7(report: dict) -> tuple[float, float]:
    for block in (report, report.get("pipeline") or {}):
        if "K" in block:
            return float(block["K"]), float(block.get("c7", 0.0))
    for mon in (report.get("config") or {}).get("monitors", []):
        if "K" in mon:
            return float(mon["K"]), float(mon.get("c7", 0.0))
    raise ArtifactError("report carries no K threshold (looked in top level, "
                        "pipeline, and monitor configs)")


def _resolve_dimension(report: dict) -> int:
    if "n" in report:
        return int(report["n"])
    config = report.get("config") or {}
    gen = config.get("generator")
    if gen is not None:
        kind = gen.get("kind")
        if kind in _KIND_DIMENSION:
            return _KIND_DIMENSION[kind]
        params = gen.get("parameters") or {}
        if "n" in params:
            return int(params["n"])
    if "n" in config:
        return int(config["n"])
    raise ArtifactError("cannot resolve the intrinsic dimension n from the "
                        "report config")


def _positive(t: np.ndarray, v: np.ndarray):
    keep = (t > 0.0) & (v > 0.0)
    if np.count_nonzero(keep) < 2:
        raise ArtifactError("need >= 2 positive (t, value) points for a "
                            "log-log plot")
    return t[keep], v[keep]


def _plot_star_omega(ax, series: dict, report: dict) -> None:
    K, c7 = _resolve_K_c7(report)
    t = _column(series, "t")
    so = _column(series, "min_star_omega")
    ax.plot(t, so, marker=".", label=r"min $*\Omega$")
    if c7 != 0.0:
        ax.plot(t, so + c7 * t, marker=".", linestyle="--",
                label=rf"min $*\Omega + c_7 t$ ($c_7$={c7:.3g})")
    ax.axhline(K, color="crimson", linestyle=":", label=f"K = {K:.4g}")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$*\Omega$")
    ax.set_title("Projection Jacobian lower barrier")


def _plot_a2(ax, series: dict, report: dict) -> None:
    t, a2 = _positive(_column(series, "t"), _column(series, "max_A2"))
    ax.loglog(t, a2, marker=".", label=r"sup $|A|^2$")
    guide = a2[0] * t[0] / t
    ax.loglog(t, guide, linestyle="--", color="gray", label="slope $-1$ guide")
    ax.set_xlabel("t")
    ax.set_ylabel(r"sup $|A|^2$")
    ax.set_title("Curvature decay")


def _plot_hausdorff(ax, series: dict, report: dict) -> None:
    n = _resolve_dimension(report)
    t = _column(series, "t")
    d = _column(series, "hausdorff_to_init")
    ax.plot(t, d, marker=".", label="Hausdorff distance to initial data")
    ax.plot(t, np.sqrt(2.0 * n * np.maximum(t, 0.0)), linestyle="--",
            color="gray", label=rf"$\sqrt{{2nt}}$ (n={n})")
    ax.set_xlabel("t")
    ax.set_ylabel("distance")
    ax.set_title("Tubular containment envelope")


def _plot_residuals(ax, series: dict, report: dict) -> None:
    table = report.get("table")
    if not isinstance(table, dict) or not table:
        raise ArtifactError("report carries no refinement table")
    guide_anchor = None
    for name, block in table.items():
        try:
            hs = np.asarray(block["h"], dtype=float)
            res = np.asarray(block["residual"], dtype=float)
        except (TypeError, KeyError) as exc:
            raise ArtifactError(f"malformed refinement entry {name!r}") from exc
        if hs.size < 2 or hs.size != res.size:
            raise ArtifactError(f"refinement entry {name!r} needs >= 2 levels")
        ax.loglog(hs, res, marker="o", label=name)
        if guide_anchor is None:
            guide_anchor = (hs, res[0] * (hs / hs[0]) ** 2)
    ax.loglog(*guide_anchor, linestyle="--", color="gray",
              label="order-2 guide")
    ax.set_xlabel("h")
    ax.set_ylabel("max residual")
    ax.set_title("Identity residual convergence")


_RENDERERS = {
    "star_omega_vs_t": (_plot_star_omega, True, True),
    "A2_times_t": (_plot_a2, True, False),
    "hausdorff_envelope": (_plot_hausdorff, True, True),
    "residual_convergence": (_plot_residuals, False, True),
}


def plot(spec: PlotSpec) -> Path:
    """Render one figure; returns the written path.

    Raises ArtifactError (no output file written) when an input is
    missing, empty, or off-schema.
    """
    renderer, needs_series, needs_report = _RENDERERS[spec.kind]
    series = report = None
    if needs_series:
        if spec.series is None:
            raise ArtifactError(f"{spec.kind} needs --series")
        series = read_series(spec.series)
    if needs_report:
        if spec.report is None:
            raise ArtifactError(f"{spec.kind} needs --report")
        report = read_report(spec.report)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        renderer(ax, series, report)
        ax.legend(fontsize="small")
        fig.tight_layout()
        spec.out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out)
    finally:
        plt.close(fig)
    return spec.out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowplot",
        description="Render figures from graphflow series.csv / report.json "
                    "artifacts")
    parser.add_argument("--series", type=Path, help="path to series.csv")
    parser.add_argument("--report", type=Path, help="path to report.json")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", type=Path, required=True,
                        help="output image path (.png or .svg)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.out.suffix.lower() not in (".png", ".svg"):
        print(f"flowplot: unsupported image format {args.out.suffix!r} "
              "(use .png or .svg)", file=sys.stderr)
        return EXIT_USAGE
    spec = PlotSpec(kind=args.kind, out=args.out, series=args.series,
                    report=args.report)
    try:
        written = plot(spec)
    except ArtifactError as exc:
        print(f"flowplot: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(written)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
