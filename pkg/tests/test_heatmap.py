"""SVG heatmap tests: ramp endpoints, well-formed markup, determinism,
and label escaping."""

from xml.dom import minidom

import numpy as np
import pytest

from stationcast.heatmap import RAMP, ramp_color, svg_heatmap


def test_ramp_endpoints_and_clipping():
    assert ramp_color(0.0) == "#440154"
    assert ramp_color(1.0) == "#fde725"
    assert ramp_color(-3.0) == "#440154"
    assert ramp_color(7.0) == "#fde725"


def test_ramp_hits_every_anchor():
    n = len(RAMP) - 1
    for k, anchor in enumerate(RAMP):
        assert ramp_color(k / n) == anchor


def test_ramp_interior_is_between_anchors():
    mid = ramp_color(0.5 / (len(RAMP) - 1))  # halfway to the second anchor
    assert mid not in RAMP
    assert len(mid) == 7 and mid.startswith("#")
    int(mid[1:], 16)  # parses as hex


def example_svg(**kwargs):
    values = np.array([[0.0, 1.5], [-2.0, 4.0], [0.25, 0.5]])
    return svg_heatmap(
        values, ("row_a", "row_b", "row_c"), ("col_x", "col_y"),
        "example grid", **kwargs
    )


def test_svg_is_well_formed_xml():
    doc = minidom.parseString(example_svg(subtitle="a sub & title"))
    assert doc.documentElement.tagName == "svg"
    rects = doc.getElementsByTagName("rect")
    # background + 6 cells + 32 color-bar steps
    assert len(rects) == 1 + 6 + 32


def test_svg_is_deterministic():
    assert example_svg() == example_svg()


def test_extremes_get_the_ramp_endpoints():
    svg = example_svg()
    assert 'fill="#fde725"' in svg  # the 4.0 cell
    assert 'fill="#440154"' in svg  # the -2.0 cell
    assert "4</text>" in svg and "-2</text>" in svg  # color-bar ticks


def test_labels_and_title_are_escaped():
    svg = svg_heatmap(
        np.array([[1.0]]), ("a<b&c",), ("d>e",), 'wind "gust" <max>'
    )
    minidom.parseString(svg)
    assert "a&lt;b&amp;c" in svg
    assert "<max>" not in svg


def test_constant_grid_renders_mid_ramp():
    svg = svg_heatmap(np.full((2, 2), 3.0), ("r1", "r2"), ("c1", "c2"), "flat")
    minidom.parseString(svg)
    assert svg.count(f'fill="{ramp_color(0.5)}"') >= 4


def test_non_finite_cells_render_as_missing():
    values = np.array([[np.nan, 1.0]])
    svg = svg_heatmap(values, ("r",), ("c1", "c2"), "holes")
    minidom.parseString(svg)
    assert 'fill="#cccccc"' in svg
