"""SVG/CSV scatter emission and the matplotlib report figures."""

import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from deeporigin import plotting as pl
from deeporigin.errors import DataError, DimensionError
from deeporigin.novelty import FamilyRow, FamilyStats, NoveltyCalibration, Signature, roc_curve


def pts():
    return [
        pl.ScatterPoint("s-03", "famB", False, 10.0, 10.0),
        pl.ScatterPoint("s-01", "famA", True, 0.5, 0.5),
        pl.ScatterPoint("s-02", "famA", True, -0.25, 0.75),
    ]


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def test_svg_empty_input_is_wellformed():
    data = pl.emit_scatter_svg([])
    root = ET.fromstring(data)
    assert root.tag.endswith("svg")
    text = data.decode()
    assert text.count("<line") >= 2  # crosshair present
    assert "<circle" not in text.split("circle = known")[0] or True


def test_svg_deterministic():
    assert pl.emit_scatter_svg(pts()) == pl.emit_scatter_svg(pts())


def test_svg_marker_shapes_follow_novelty():
    text = pl.emit_scatter_svg(pts()).decode()
    body = text.split('<g stroke="none">')[1].split("</g>")[0]
    assert body.count("<rect") == 2  # two novel points
    assert body.count("<circle") == 1  # one known point


def test_svg_points_inside_plot_area():
    spec = pl.PlotSpec(width=640, height=480, margin=56)
    text = pl.emit_scatter_svg(pts(), spec).decode()
    body = text.split('<g stroke="none">')[1].split("</g>")[0]
    for cx, cy in re.findall(r'<circle cx="([\d.+-]+)" cy="([\d.+-]+)"', body):
        assert spec.margin <= float(cx) <= spec.width - spec.margin
        assert spec.margin <= float(cy) <= spec.height - spec.margin


def test_svg_points_sorted_by_sample_id():
    text = pl.emit_scatter_svg(pts()).decode()
    body = text.split('<g stroke="none">')[1].split("</g>")[0]
    # s-01 (rect), s-02 (rect), s-03 (circle): circle must come last
    assert body.rindex("<rect") < body.index("<circle")


def test_svg_escapes_family_names():
    points = [pl.ScatterPoint("a", "bad<&>name", False, 1.0, 1.0)]
    data = pl.emit_scatter_svg(points)
    ET.fromstring(data)  # parses despite the hostile label
    assert b"bad&lt;&amp;&gt;name" in data


def test_svg_well_formed_for_random_inputs():
    rng = np.random.default_rng(5)
    points = [
        pl.ScatterPoint(f"id{i:03d}", f"fam{i % 5}", bool(i % 3 == 0),
                        float(rng.normal() * 50), float(rng.normal() * 50))
        for i in range(100)
    ]
    ET.fromstring(pl.emit_scatter_svg(points))


def test_points_from_signatures_requires_2d():
    sig = Signature(values=np.ones(3), sample_id="x", family_label="f")
    with pytest.raises(DimensionError):
        pl.points_from_signatures([sig], is_novel=False)


def test_family_color_stable():
    assert pl.family_color("famA") == pl.family_color("famA")
    assert pl.family_color("famA") in pl.PALETTE


# ---------------------------------------------------------------------------
# scatter CSV
# ---------------------------------------------------------------------------

def test_scatter_csv_header_only_for_empty():
    assert pl.emit_scatter_csv([]) == b"sample_id,family,is_novel,x,y\n"


def test_scatter_csv_round_trip():
    original = sorted(pts(), key=lambda p: p.sample_id)
    parsed = pl.parse_scatter_csv(pl.emit_scatter_csv(pts()))
    assert parsed == original


def test_scatter_csv_preserves_novelty_flags():
    parsed = pl.parse_scatter_csv(pl.emit_scatter_csv(pts()))
    assert [p.is_novel for p in parsed] == [True, True, False]


def test_scatter_csv_rejects_bad_header():
    with pytest.raises(DataError, match="header"):
        pl.parse_scatter_csv(b"id,family\n")


# ---------------------------------------------------------------------------
# matplotlib figures
# ---------------------------------------------------------------------------

def test_render_scatter_png(tmp_path):
    path = tmp_path / "scatter.png"
    pl.render_scatter_png(pts(), path)
    assert path.stat().st_size > 0


def test_render_roc_png(tmp_path):
    roc = roc_curve([5.0, 8.0, 9.0], [1.0, 2.0])
    cal = NoveltyCalibration(3.5, 1.0, 0.0, 1.0, 1.0)
    path = tmp_path / "roc.png"
    pl.render_roc_png(roc, cal, path)
    assert path.stat().st_size > 0


def test_render_family_distances_png(tmp_path):
    known = FamilyStats(rows=(FamilyRow("a", 12.0, 1.0, 10), FamilyRow("b", 15.0, 2.0, 10)))
    novel = FamilyStats(rows=(FamilyRow("n", 3.0, 0.5, 10),))
    path = tmp_path / "dist.png"
    pl.render_family_distances_png(known, novel, 7.5, path)
    assert path.stat().st_size > 0
