import xml.etree.ElementTree as ET

import numpy as np
import pytest

from compsnn.density import DensityGrid
from compsnn.errors import ChannelOutOfRange, EmptyMap, UnknownKind
from compsnn.explain import (
    ActivationMap,
    SvgStyle,
    cnn_activations,
    export_activation_map,
    render_svg,
    write_activation_csv,
)
from compsnn.features import RawTrajectory
from compsnn.model import CompSnnConfig, init_params
from compsnn.nn import sigmoid, conv1d_forward


def cnn_params(seed=0, kernel=3):
    cfg = CompSnnConfig(node_count=3, cnn_kernel=kernel, epsilon=(0.25,) * 8)
    return init_params("single_cnn", cfg, seed)


def toy_grid(size=10, cell=1.0):
    return DensityGrid(0.0, 0.0, cell, np.ones((size, size), dtype=np.int64))


class TestExport:
    def test_single_step_trajectory(self):
        params = cnn_params()
        raw = RawTrajectory("p", np.zeros(1), np.array([2.0]), np.array([3.0]))
        amap = export_activation_map(params, np.zeros((10, 1)), raw, "attention")
        assert amap.n == 1
        assert amap.channel == "attention"
        assert 0.0 <= amap.values[0] <= 1.0

    def test_values_match_instrumented_forward(self):
        rng = np.random.default_rng(4)
        params = cnn_params(seed=2)
        feats = rng.normal(size=(10, 7))
        raw = RawTrajectory("p", np.arange(7.0), rng.normal(size=7), rng.normal(size=7))
        expected_f = sigmoid(conv1d_forward(feats, params["cnn.feat.k"].value,
                                            params["cnn.feat.b"].value))
        expected_a = sigmoid(conv1d_forward(feats, params["cnn.att.k"].value,
                                            params["cnn.att.b"].value))[0]
        a, f = cnn_activations(params, feats)
        assert np.array_equal(a, expected_a)
        assert np.array_equal(f, expected_f)
        amap = export_activation_map(params, feats, raw, "feature", 5)
        assert np.array_equal(amap.values, expected_f[5])
        amap = export_activation_map(params, feats, raw, "a_x_f", 5)
        assert np.array_equal(amap.values, expected_a * expected_f[5])
        assert np.array_equal(amap.xs, raw.x)
        assert np.array_equal(amap.ys, raw.y)

    def test_closed_gate_zeroes_products(self):
        params = cnn_params(seed=3)
        params["cnn.att.k"].value[...] = 0.0
        params["cnn.att.b"].value[:] = -40.0
        raw = RawTrajectory("p", np.arange(5.0), np.zeros(5), np.zeros(5))
        amap = export_activation_map(params, np.zeros((10, 5)), raw, "a_x_f", 0)
        assert np.all(amap.values < 1e-10)

    def test_channel_out_of_range(self):
        params = cnn_params()
        raw = RawTrajectory("p", np.arange(3.0), np.zeros(3), np.zeros(3))
        with pytest.raises(ChannelOutOfRange):
            export_activation_map(params, np.zeros((10, 3)), raw, "feature", 16)
        with pytest.raises(ChannelOutOfRange):
            export_activation_map(params, np.zeros((10, 3)), raw, "a_x_f", None)

    def test_unknown_kind(self):
        params = cnn_params()
        raw = RawTrajectory("p", np.arange(3.0), np.zeros(3), np.zeros(3))
        with pytest.raises(UnknownKind):
            export_activation_map(params, np.zeros((10, 3)), raw, "gradients")


class TestRender:
    def test_single_point_full_radius(self):
        amap = ActivationMap(np.array([5.0]), np.array([5.0]), np.array([1.0]), "attention")
        style = SvgStyle(r_min=1.5, r_max=9.0)
        svg = render_svg(amap, toy_grid(), style)
        root = ET.fromstring(svg)
        circles = root.findall("{http://www.w3.org/2000/svg}circle")
        assert len(circles) == 1
        assert circles[0].get("r") == "9"
        assert circles[0].get("fill-opacity") == "1"

    def test_radius_encodes_value(self):
        amap = ActivationMap(np.array([2.0, 7.0]), np.array([2.0, 7.0]),
                             np.array([0.0, 0.5]), "attention")
        svg = render_svg(amap, toy_grid())
        root = ET.fromstring(svg)
        radii = [float(c.get("r")) for c in root.iter("{http://www.w3.org/2000/svg}circle")]
        assert radii[0] == pytest.approx(1.5)
        assert radii[1] == pytest.approx(1.5 + 0.5 * 7.5)

    def test_byte_identical_rendering(self):
        rng = np.random.default_rng(9)
        amap = ActivationMap(rng.uniform(0, 10, 40), rng.uniform(0, 10, 40),
                             rng.uniform(0, 1, 40), "feature03")
        grid = toy_grid()
        assert render_svg(amap, grid) == render_svg(amap, grid)

    def test_hundred_points_parse(self):
        rng = np.random.default_rng(10)
        amap = ActivationMap(rng.uniform(0, 10, 100), rng.uniform(0, 10, 100),
                             rng.uniform(0, 1, 100), "a_x_f00")
        svg = render_svg(amap, toy_grid())
        root = ET.fromstring(svg)  # well-formed XML
        circles = root.findall("{http://www.w3.org/2000/svg}circle")
        assert len(circles) == 100

    def test_opacity_falls_with_crowding(self):
        xs = np.concatenate([np.full(20, 2.2), [8.5]])
        ys = np.concatenate([np.full(20, 2.2), [8.5]])
        amap = ActivationMap(xs, ys, np.full(21, 0.5), "attention")
        svg = render_svg(amap, toy_grid(), SvgStyle(opacity_min=0.15))
        root = ET.fromstring(svg)
        opacities = [float(c.get("fill-opacity"))
                     for c in root.iter("{http://www.w3.org/2000/svg}circle")]
        assert opacities[0] == pytest.approx(0.15)  # crowded cell
        assert opacities[-1] == pytest.approx(1.0)  # lone point

    def test_empty_map_rejected(self):
        amap = ActivationMap(np.zeros(0), np.zeros(0), np.zeros(0), "attention")
        with pytest.raises(EmptyMap):
            render_svg(amap, toy_grid())


def test_csv_twin_round_trips(tmp_path):
    rng = np.random.default_rng(11)
    amap = ActivationMap(rng.uniform(0, 10, 9), rng.uniform(0, 10, 9),
                         rng.uniform(0, 1, 9), "attention")
    path = tmp_path / "map.csv"
    write_activation_csv(path, amap)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,y,value"
    parsed = np.array([[float(v) for v in row.split(",")] for row in rows[1:]])
    assert np.array_equal(parsed[:, 0], amap.xs)
    assert np.array_equal(parsed[:, 1], amap.ys)
    assert np.array_equal(parsed[:, 2], amap.values)
