import numpy as np
import pytest

from compsnn.features import RawTrajectory
from compsnn.graph import Spectrum, build_graph, eigendecompose, laplacian


def straight_trajectory(n=9, vx=1.0, vy=0.0, dt=0.5, traj_id="line"):
    t = dt * np.arange(n)
    return RawTrajectory(traj_id, t, vx * t, vy * t)


def random_connected_graph(rng, n):
    """Spanning tree plus a few random extra edges, as node sequences."""
    seqs = []
    order = rng.permutation(n)
    for i in range(1, n):
        seqs.append([int(order[rng.integers(i)]), int(order[i])])
    for _ in range(int(rng.integers(0, n + 1))):
        a, b = rng.integers(n), rng.integers(n)
        if a != b:
            seqs.append([int(a), int(b)])
    centroids = rng.uniform(0, 10, size=(n, 2))
    return build_graph(seqs, n, centroids)


@pytest.fixture
def k3_spectrum() -> Spectrum:
    graph = build_graph([[0, 1, 2, 0]], 3, np.zeros((3, 2)))
    return eigendecompose(laplacian(graph))
