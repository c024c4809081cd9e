import numpy as np
import pytest

from compsnn.density import UNASSIGNED, DensityGrid, SegmentLabels
from compsnn.errors import (
    DimensionMismatch,
    IdOutOfRange,
    LengthMismatch,
    NotSymmetric,
    OutOfBounds,
)
from compsnn.features import FeatureSeries, RawTrajectory
from compsnn.graph import (
    aggregate_node_signal,
    build_graph,
    eigendecompose,
    gft,
    graph_from_json,
    graph_to_json,
    igft,
    laplacian,
    load_spectrum,
    map_trajectory_to_nodes,
    save_spectrum,
    visit_signal,
)
from conftest import random_connected_graph


def toy_labels():
    grid = DensityGrid(0.0, 0.0, 1.0, np.ones((2, 2), dtype=np.int64))
    labels = SegmentLabels(np.array([[0, 1], [UNASSIGNED, 1]]), ((0, 0), (0, 1)))
    return grid, labels


class TestMapToNodes:
    def test_single_region(self):
        grid = DensityGrid(0.0, 0.0, 1.0, np.ones((3, 3), dtype=np.int64))
        labels = SegmentLabels(np.zeros((3, 3), dtype=np.int64), ((1, 1),))
        raw = RawTrajectory("a", np.arange(4.0), np.full(4, 1.5), np.full(4, 1.5))
        assert np.array_equal(map_trajectory_to_nodes(raw, labels, grid), [0, 0, 0, 0])

    def test_single_crossing(self):
        grid, labels = toy_labels()
        raw = RawTrajectory("a", np.arange(4.0), np.array([0.3, 0.4, 1.2, 1.4]), np.full(4, 0.5))
        seq = map_trajectory_to_nodes(raw, labels, grid)
        assert np.array_equal(seq, [0, 0, 1, 1])

    def test_unassigned_snaps_to_nearest_label(self):
        grid, labels = toy_labels()
        # cell (1, 0) is unassigned; (0, 0) and (1, 1) are equidistant and the
        # lexicographically smaller cell wins, giving node 0
        raw = RawTrajectory("a", np.arange(3.0), np.full(3, 0.5), np.full(3, 1.5))
        assert np.array_equal(map_trajectory_to_nodes(raw, labels, grid), [0, 0, 0])

    def test_out_of_bounds(self):
        grid, labels = toy_labels()
        raw = RawTrajectory("a", np.arange(3.0), np.array([0.5, 9.0, 0.5]), np.full(3, 0.5))
        with pytest.raises(OutOfBounds):
            map_trajectory_to_nodes(raw, labels, grid)


class TestBuildGraph:
    def test_consecutive_transitions(self):
        g = build_graph([[0, 0, 1, 2]], 3, np.zeros((3, 2)))
        assert g.edges == ((0, 1), (1, 2))

    def test_undirected_dedup(self):
        g = build_graph([[0, 1], [1, 0]], 2, np.zeros((2, 2)))
        assert g.edges == ((0, 1),)
        assert np.array_equal(g.adjacency, [[0, 1], [1, 0]])

    def test_no_transitions(self):
        g = build_graph([[0, 0, 0], [2, 2]], 3, np.zeros((3, 2)))
        assert g.edges == ()

    def test_id_out_of_range(self):
        with pytest.raises(IdOutOfRange):
            build_graph([[0, 5]], 3, np.zeros((3, 2)))

    def test_order_independence(self):
        rng = np.random.default_rng(4)
        seqs = [rng.integers(0, 6, size=rng.integers(2, 12)).tolist() for _ in range(8)]
        a = build_graph(seqs, 6, np.zeros((6, 2)))
        b = build_graph(seqs[::-1], 6, np.zeros((6, 2)))
        assert a.edges == b.edges


def features_from_channels(**channels):
    n = len(next(iter(channels.values())))
    mat = np.zeros((10, n))
    order = {"x": 0, "y": 1, "speed": 2, "accel": 3, "dx": 4, "dy": 5,
             "theta": 6, "dtheta": 7, "entropy": 8, "variance": 9}
    for name, values in channels.items():
        mat[order[name]] = values
    return FeatureSeries(mat)


class TestAggregate:
    def test_single_run_not_returned(self):
        fs = features_from_channels(speed=[1.0, 1.0, 1.0])
        sig = aggregate_node_signal(fs, [0, 0, 1], 2)
        assert sig[0, 6] == 0.0 and sig[1, 6] == 0.0

    def test_exit_and_return(self):
        fs = features_from_channels(speed=[1.0, 1.0, 1.0])
        sig = aggregate_node_signal(fs, [0, 1, 0], 2)
        assert sig[0, 6] == 1.0
        assert sig[0, 7] == 2.0
        assert sig[1, 6] == 0.0

    def test_constant_speed_mean(self):
        fs = features_from_channels(speed=np.full(5, 2.5))
        sig = aggregate_node_signal(fs, [0, 0, 1, 1, 1], 3)
        assert sig[0, 0] == 2.5 and sig[1, 0] == 2.5
        assert np.array_equal(sig[2], np.zeros(8))  # unvisited row

    def test_circular_heading_mean(self):
        theta = [np.pi - 0.1, -(np.pi - 0.1)]
        fs = features_from_channels(theta=theta)
        sig = aggregate_node_signal(fs, [0, 0], 1)
        assert sig[0, 2] == pytest.approx(np.pi)

    def test_visit_counts_sum_to_length(self):
        rng = np.random.default_rng(9)
        seq = rng.integers(0, 4, size=23)
        fs = features_from_channels(speed=rng.normal(size=23))
        sig = aggregate_node_signal(fs, seq, 4)
        assert sig[:, 7].sum() == 23
        assert np.array_equal(visit_signal(seq, 4), sig[:, 7])

    def test_length_mismatch(self):
        fs = features_from_channels(speed=[1.0, 2.0])
        with pytest.raises(LengthMismatch):
            aggregate_node_signal(fs, [0, 0, 0], 1)


class TestLaplacian:
    def test_k2(self):
        g = build_graph([[0, 1]], 2, np.zeros((2, 2)))
        assert np.allclose(laplacian(g), [[1, -1], [-1, 1]])

    def test_edgeless(self):
        g = build_graph([], 3, np.zeros((3, 2)))
        assert np.array_equal(laplacian(g), np.zeros((3, 3)))

    def test_k3(self):
        g = build_graph([[0, 1, 2, 0]], 3, np.zeros((3, 2)))
        expected = np.full((3, 3), -0.5)
        np.fill_diagonal(expected, 1.0)
        assert np.allclose(laplacian(g), expected)

    def test_combinatorial_variant(self):
        g = build_graph([[0, 1, 2]], 3, np.zeros((3, 2)))
        expected = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
        assert np.allclose(laplacian(g, variant="combinatorial"), expected)


class TestEigendecompose:
    def test_identity_matrix(self):
        spec = eigendecompose(np.eye(4))
        assert np.allclose(spec.eigenvalues, 1.0)
        assert np.array_equal(spec.eigenvectors, np.eye(4))

    def test_k2_spectrum(self):
        g = build_graph([[0, 1]], 2, np.zeros((2, 2)))
        spec = eigendecompose(laplacian(g))
        assert np.allclose(spec.eigenvalues, [0.0, 2.0], atol=1e-12)

    def test_reconstruction_and_oracle(self):
        rng = np.random.default_rng(8)
        m = rng.normal(size=(8, 8))
        sym = 0.5 * (m + m.T)
        spec = eigendecompose(sym)
        recon = spec.eigenvectors @ np.diag(spec.eigenvalues) @ spec.eigenvectors.T
        assert np.linalg.norm(recon - sym) / np.linalg.norm(sym) < 1e-9
        assert np.allclose(spec.eigenvalues, np.linalg.eigh(sym)[0], atol=1e-9)
        assert np.allclose(spec.eigenvectors.T @ spec.eigenvectors, np.eye(8), atol=1e-8)
        assert np.all(np.diff(spec.eigenvalues) >= -1e-12)
        for k in range(8):
            col = spec.eigenvectors[:, k]
            assert col[np.argmax(np.abs(col))] > 0

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetric):
            eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_connected_graph_null_vector(self):
        rng = np.random.default_rng(17)
        g = random_connected_graph(rng, 9)
        lap = laplacian(g)
        spec = eigendecompose(lap)
        assert abs(spec.eigenvalues[0]) < 1e-10
        expected = np.sqrt(g.adjacency.sum(axis=1))
        expected /= np.linalg.norm(expected)
        overlap = abs(expected @ spec.eigenvectors[:, 0])
        assert overlap == pytest.approx(1.0, abs=1e-9)


class TestGft:
    def test_eigenvector_maps_to_basis(self, k3_spectrum):
        for k in range(3):
            shat = gft(k3_spectrum, k3_spectrum.eigenvectors[:, k])
            expected = np.zeros(3)
            expected[k] = 1.0
            assert np.allclose(shat, expected, atol=1e-12)

    def test_zero_signal(self, k3_spectrum):
        assert np.array_equal(gft(k3_spectrum, np.zeros(3)), np.zeros(3))
        assert np.array_equal(igft(k3_spectrum, np.zeros(3)), np.zeros(3))

    def test_parseval(self, k3_spectrum):
        rng = np.random.default_rng(1)
        s = rng.normal(size=3)
        assert np.linalg.norm(gft(k3_spectrum, s)) == pytest.approx(np.linalg.norm(s), abs=1e-10)

    def test_round_trips(self, k3_spectrum):
        rng = np.random.default_rng(2)
        s = rng.normal(size=3)
        assert np.allclose(igft(k3_spectrum, gft(k3_spectrum, s)), s, atol=1e-10)
        assert np.allclose(gft(k3_spectrum, igft(k3_spectrum, s)), s, atol=1e-10)

    def test_basis_image(self, k3_spectrum):
        e1 = np.array([0.0, 1.0, 0.0])
        assert np.allclose(igft(k3_spectrum, e1), k3_spectrum.eigenvectors[:, 1])

    def test_dimension_mismatch(self, k3_spectrum):
        with pytest.raises(DimensionMismatch):
            gft(k3_spectrum, np.zeros(4))
        with pytest.raises(DimensionMismatch):
            igft(k3_spectrum, np.zeros(2))


class TestSerialization:
    def test_graph_json_round_trip(self):
        g = random_connected_graph(np.random.default_rng(3), 7)
        back = graph_from_json(graph_to_json(g))
        assert back.node_count == g.node_count
        assert back.edges == g.edges
        assert np.allclose(back.centroids, g.centroids)

    def test_spectrum_sidecar_round_trip(self, tmp_path, k3_spectrum):
        path = tmp_path / "s.bin"
        save_spectrum(path, k3_spectrum)
        back = load_spectrum(path)
        assert np.array_equal(back.eigenvalues, k3_spectrum.eigenvalues)
        assert np.array_equal(back.eigenvectors, k3_spectrum.eigenvectors)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTSPECX" + b"\x00" * 16)
        with pytest.raises(ValueError):
            load_spectrum(path)
