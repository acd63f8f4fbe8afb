"""2D signature-space views: deterministic SVG, scatter CSV, report figures.

The SVG emitter is byte-deterministic (fixed element order, fixed decimal
formatting, no timestamps) so plots can be diffed across runs. The matplotlib
renderers are for human-facing report figures and carry no determinism
guarantee.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from . import fileio
from .errors import DataError, DimensionError
from .novelty import NoveltyCalibration, RocCurve, Signature, FamilyStats

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
    "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#dbdb8d",
]


def family_color(label: str) -> str:
    """Deterministic label -> palette color (stable across processes)."""
    return PALETTE[zlib.crc32(label.encode("utf-8")) % len(PALETTE)]


@dataclass(frozen=True)
class ScatterPoint:
    sample_id: str
    family: str
    is_novel: bool
    x: float
    y: float


@dataclass(frozen=True)
class PlotSpec:
    width: int = 640
    height: int = 480
    margin: int = 56


def points_from_signatures(signatures: list[Signature], is_novel: bool) -> list[ScatterPoint]:
    points = []
    for s in signatures:
        if s.values.shape[0] != 2:
            raise DimensionError(
                f"scatter plots need 2-dim signatures, got {s.values.shape[0]}"
            )
        points.append(
            ScatterPoint(
                sample_id=s.sample_id,
                family=s.family_label if s.family_label is not None else "",
                is_novel=is_novel,
                x=float(s.values[0]),
                y=float(s.values[1]),
            )
        )
    return points


def _bounds(points: list[ScatterPoint]):
    """Data bounds, always containing the origin, padded by 5% per side."""
    if points:
        xs = [p.x for p in points] + [0.0]
        ys = [p.y for p in points] + [0.0]
        xmin, xmax = min(xs), max(xs)
        ymin, ymax = min(ys), max(ys)
    else:
        xmin = ymin = -1.0
        xmax = ymax = 1.0
    xspan = xmax - xmin or 2.0
    yspan = ymax - ymin or 2.0
    return (
        xmin - 0.05 * xspan, xmax + 0.05 * xspan,
        ymin - 0.05 * yspan, ymax + 0.05 * yspan,
    )


def emit_scatter_svg(points: list[ScatterPoint], spec: PlotSpec = PlotSpec()) -> bytes:
    """Byte-deterministic SVG 1.1 scatter of 2D signatures.

    Known samples are circles, novel samples rectangles; the origin carries a
    crosshair. Points are emitted sorted by sample_id, coordinates rounded to
    3 decimals.
    """
    w, h, m = spec.width, spec.height, spec.margin
    xmin, xmax, ymin, ymax = _bounds(points)
    inner_w, inner_h = w - 2 * m, h - 2 * m

    def px(x: float) -> float:
        return m + (x - xmin) / (xmax - xmin) * inner_w

    def py(y: float) -> float:
        return h - m - (y - ymin) / (ymax - ymin) * inner_h

    def f(v: float) -> str:
        return f"{v:.3f}"

    out = []
    out.append('<?xml version="1.0" encoding="UTF-8"?>')
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{w}" height="{h}" viewBox="0 0 {w} {h}">'
    )
    out.append(f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>')
    out.append(
        f'<rect x="{m}" y="{m}" width="{inner_w}" height="{inner_h}" '
        f'fill="none" stroke="#333333" stroke-width="1"/>'
    )

    # axis ticks: 5 per axis, value labels in data units
    out.append('<g font-family="monospace" font-size="10" fill="#333333">')
    for i in range(5):
        frac = i / 4.0
        xv = xmin + frac * (xmax - xmin)
        yv = ymin + frac * (ymax - ymin)
        tx, ty = px(xv), py(yv)
        out.append(
            f'<line x1="{f(tx)}" y1="{h - m}" x2="{f(tx)}" y2="{h - m + 4}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{f(tx)}" y="{h - m + 15}" text-anchor="middle">{f(xv)}</text>'
        )
        out.append(
            f'<line x1="{m - 4}" y1="{f(ty)}" x2="{m}" y2="{f(ty)}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{m - 6}" y="{f(ty + 3)}" text-anchor="end">{f(yv)}</text>'
        )
    out.append(f'<text x="{w // 2}" y="{h - 8}" text-anchor="middle">s1</text>')
    out.append(
        f'<text x="12" y="{h // 2}" text-anchor="middle" '
        f'transform="rotate(-90 12 {h // 2})">s2</text>'
    )
    out.append("</g>")

    # origin crosshair (bounds always include the origin)
    ox, oy = px(0.0), py(0.0)
    out.append(
        f'<line x1="{f(ox - 7)}" y1="{f(oy)}" x2="{f(ox + 7)}" y2="{f(oy)}" '
        f'stroke="#000000" stroke-width="1.5"/>'
    )
    out.append(
        f'<line x1="{f(ox)}" y1="{f(oy - 7)}" x2="{f(ox)}" y2="{f(oy + 7)}" '
        f'stroke="#000000" stroke-width="1.5"/>'
    )

    out.append('<g stroke="none">')
    for p in sorted(points, key=lambda p: p.sample_id):
        cx, cy = px(p.x), py(p.y)
        color = family_color(p.family)
        if p.is_novel:
            out.append(
                f'<rect x="{f(cx - 3)}" y="{f(cy - 3)}" width="6" height="6" '
                f'fill="{color}" fill-opacity="0.8"/>'
            )
        else:
            out.append(
                f'<circle cx="{f(cx)}" cy="{f(cy)}" r="3" '
                f'fill="{color}" fill-opacity="0.8"/>'
            )
    out.append("</g>")

    # legend: one row per family; swatch shape follows the family's samples
    families: dict[str, bool] = {}
    for p in points:
        families[p.family] = families.get(p.family, True) and p.is_novel
    out.append('<g font-family="monospace" font-size="10" fill="#333333">')
    ly = m + 12
    for family in sorted(families):
        color = family_color(family)
        if families[family]:
            out.append(
                f'<rect x="{m + 8}" y="{ly - 6}" width="6" height="6" fill="{color}"/>'
            )
        else:
            out.append(
                f'<circle cx="{m + 11}" cy="{ly - 3}" r="3" fill="{color}"/>'
            )
        out.append(f'<text x="{m + 18}" y="{ly}">{escape(family)}</text>')
        ly += 13
    out.append("</g>")
    out.append(
        f'<text x="{m}" y="{m - 6}" font-family="monospace" font-size="10" '
        f'fill="#333333">circle = known family, rectangle = novel</text>'
    )
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Scatter CSV
# ---------------------------------------------------------------------------

def _f17(x: float) -> str:
    return format(float(x), ".17g")


def emit_scatter_csv(points: list[ScatterPoint]) -> bytes:
    lines = ["sample_id,family,is_novel,x,y"]
    for p in sorted(points, key=lambda p: p.sample_id):
        flag = "true" if p.is_novel else "false"
        lines.append(f"{p.sample_id},{p.family},{flag},{_f17(p.x)},{_f17(p.y)}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_scatter_csv(data) -> list[ScatterPoint]:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = [line for line in text.split("\n") if line != ""]
    if not lines or lines[0] != "sample_id,family,is_novel,x,y":
        raise DataError("scatter CSV: unexpected header")
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise DataError(f"scatter CSV line {lineno}: expected 5 fields")
        if parts[2] not in ("true", "false"):
            raise DataError(f"scatter CSV line {lineno}: bad is_novel {parts[2]!r}")
        points.append(
            ScatterPoint(
                sample_id=parts[0],
                family=parts[1],
                is_novel=parts[2] == "true",
                x=float(parts[3]),
                y=float(parts[4]),
            )
        )
    return points


# ---------------------------------------------------------------------------
# Report figures (matplotlib, not byte-deterministic)
# ---------------------------------------------------------------------------

def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _savefig(fig, path):
    fig.savefig(path, dpi=120, metadata={"Software": None})
    import matplotlib.pyplot as plt

    plt.close(fig)


def render_scatter_png(points: list[ScatterPoint], path, title="2D signature space") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 5.5))
    by_family: dict[str, list[ScatterPoint]] = {}
    for p in points:
        by_family.setdefault(p.family, []).append(p)
    for family in sorted(by_family):
        pts = by_family[family]
        novel = all(p.is_novel for p in pts)
        ax.scatter(
            [p.x for p in pts],
            [p.y for p in pts],
            s=18,
            c=family_color(family),
            marker="s" if novel else "o",
            alpha=0.75,
            label=family,
            linewidths=0,
        )
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.axvline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("s1")
    ax.set_ylabel("s2")
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=2, framealpha=0.9)
    fig.tight_layout()
    _savefig(fig, path)


def render_roc_png(roc: RocCurve, cal: NoveltyCalibration | None, path) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.5, 5))
    fpr = [p[2] for p in roc.points]
    tpr = [p[1] for p in roc.points]
    ax.plot(fpr, tpr, color="#1f77b4", linewidth=1.6, label=f"AUC = {roc.auc:.4f}")
    ax.plot([0, 1], [0, 1], color="#999999", linestyle="--", linewidth=0.8)
    if cal is not None:
        ax.plot(
            [cal.fpr_at_threshold], [cal.tpr_at_threshold],
            marker="o", color="#d62728",
            label=f"T = {cal.threshold:.3f} (TPR {cal.tpr_at_threshold:.3f}, "
                  f"FPR {cal.fpr_at_threshold:.3f})",
        )
    ax.set_xlabel("False positive rate (known flagged novel)")
    ax.set_ylabel("True positive rate (novel detected)")
    ax.set_title("Novelty ROC")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    _savefig(fig, path)


def render_training_curves_png(epoch_rows, path) -> None:
    """epoch_rows: iterable of objects with epoch/train_loss/train_acc/val_loss/val_acc."""
    plt = _plt()
    rows = list(epoch_rows)
    if not rows:
        raise DataError("no epochs to plot")
    epochs = [r.epoch for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.plot(epochs, [r.train_loss for r in rows], label="train", color="#1f77b4")
    ax1.plot(epochs, [r.val_loss for r in rows], label="validation", color="#ff7f0e")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax2.plot(epochs, [r.train_acc for r in rows], label="train", color="#1f77b4")
    ax2.plot(epochs, [r.val_acc for r in rows], label="validation", color="#ff7f0e")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0.0, 1.02)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    _savefig(fig, path)


def render_family_distances_png(stats_known: FamilyStats, stats_novel: FamilyStats,
                                threshold: float | None, path) -> None:
    plt = _plt()
    rows = list(stats_known.rows) + list(stats_novel.rows)
    novel_flags = [False] * len(stats_known.rows) + [True] * len(stats_novel.rows)
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(rows) + 1.5))
    ys = np.arange(len(rows))
    means = [r.mean_distance for r in rows]
    stds = [r.std_distance for r in rows]
    colors = ["#d62728" if novel else "#1f77b4" for novel in novel_flags]
    ax.barh(ys, means, xerr=stds, color=colors, height=0.6, alpha=0.85)
    ax.set_yticks(ys)
    ax.set_yticklabels([r.family for r in rows], fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("mean distance from origin (+/- std)")
    if threshold is not None:
        ax.axvline(threshold, color="black", linestyle="--", linewidth=1.0,
                   label=f"threshold {threshold:.3f}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    _savefig(fig, path)


def write_scatter_files(points: list[ScatterPoint], csv_path=None, svg_path=None,
                        spec: PlotSpec = PlotSpec()) -> None:
    if csv_path is not None:
        fileio.write_bytes(csv_path, emit_scatter_csv(points))
    if svg_path is not None:
        fileio.write_bytes(svg_path, emit_scatter_svg(points, spec))
