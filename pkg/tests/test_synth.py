import numpy as np
import pytest

from compsnn.errors import UnreachableCheckpoint
from compsnn.synth import (
    DEFAULT_WORLD,
    DT,
    Rect,
    SyntheticWorld,
    demographic_schema,
    generate_synthetic_dataset,
    simulate_navigator,
    u_to_records,
)
from compsnn.features import encode_demographics


def rank_correlation(a, b):
    ra = np.argsort(np.argsort(a)).astype(float)
    rb = np.argsort(np.argsort(b)).astype(float)
    ra -= ra.mean()
    rb -= rb.mean()
    return float(ra @ rb) / np.sqrt(float(ra @ ra) * float(rb @ rb))


def mean_speed(traj):
    d = np.hypot(np.diff(traj.x), np.diff(traj.y))
    return d.sum() / (traj.t[-1] - traj.t[0])


class TestGenerator:
    def test_same_seed_is_bit_identical(self):
        a_trajs, a_us = generate_synthetic_dataset(3, 12)
        b_trajs, b_us = generate_synthetic_dataset(3, 12)
        assert np.array_equal(a_us, b_us)
        for a, b in zip(a_trajs, b_trajs):
            assert a.id == b.id
            assert np.array_equal(a.t, b.t)
            assert np.array_equal(a.x, b.x)
            assert np.array_equal(a.y, b.y)

    def test_samples_respect_world(self):
        trajs, us = generate_synthetic_dataset(5, 8)
        x0, y0, x1, y1 = DEFAULT_WORLD.bounds
        for traj in trajs:
            assert np.all((traj.x >= x0) & (traj.x <= x1))
            assert np.all((traj.y >= y0) & (traj.y <= y1))
            assert np.allclose(np.diff(traj.t), DT)
            for rect in DEFAULT_WORLD.obstacles:
                inside = ((traj.x > rect.x0) & (traj.x < rect.x1)
                          & (traj.y > rect.y0) & (traj.y < rect.y1))
                assert not inside.any()
        assert np.all((us >= 0) & (us <= 1))
        assert np.allclose(us * 100, np.round(us * 100))  # 0.01 grid

    def test_speed_tracks_first_component(self):
        trajs, us = generate_synthetic_dataset(0, 100)
        speeds = np.array([mean_speed(t) for t in trajs])
        assert rank_correlation(speeds, us[:, 0]) > 0.9

    def test_noise_component_bends_the_path(self):
        base = np.array([0.5, 0.0, 0.3, 0.0, 0.5, 0.5, 0.5, 0.5])
        calm = simulate_navigator(base, seed=10)
        noisy_u = base.copy()
        noisy_u[1] = 1.0
        noisy = simulate_navigator(noisy_u, seed=10)

        def mean_abs_turn(traj):
            heading = np.arctan2(np.diff(traj.y), np.diff(traj.x))
            d = np.diff(heading)
            d = (d + np.pi) % (2 * np.pi) - np.pi
            return np.abs(d).mean()

        assert mean_abs_turn(calm) < 0.1  # near-straight legs
        assert mean_abs_turn(noisy) > 3 * mean_abs_turn(calm)

    def test_revisit_component_lengthens_paths(self):
        lens_low, lens_high = [], []
        for seed in range(15):
            u = np.full(8, 0.5)
            u[3] = 0.0
            lens_low.append(simulate_navigator(u, seed=seed).n)
            u[3] = 1.0
            lens_high.append(simulate_navigator(u, seed=seed).n)
        assert np.mean(lens_high) > np.mean(lens_low)

    def test_unreachable_checkpoint(self):
        ring = (
            Rect(40.0, 40.0, 60.0, 44.0),
            Rect(40.0, 56.0, 60.0, 60.0),
            Rect(40.0, 44.0, 44.0, 56.0),
            Rect(56.0, 44.0, 60.0, 56.0),
        )
        world = SyntheticWorld(
            bounds=(0.0, 0.0, 100.0, 100.0),
            obstacles=ring,
            checkpoints=((50.0, 50.0),),  # walled in
            start=(5.0, 5.0),
        )
        with pytest.raises(UnreachableCheckpoint):
            simulate_navigator(np.full(8, 0.5), seed=0, world=world)

    def test_needs_two_trajectories(self):
        with pytest.raises(ValueError):
            generate_synthetic_dataset(0, 1)


class TestSchema:
    def test_records_round_trip_exactly(self):
        trajs, us = generate_synthetic_dataset(8, 6)
        schema = demographic_schema()
        records = u_to_records(us, [t.id for t in trajs])
        for i, traj in enumerate(trajs):
            back = encode_demographics(records[traj.id], schema)
            assert np.array_equal(back, us[i])

    def test_world_validation(self):
        with pytest.raises(ValueError):
            SyntheticWorld((0, 0, 10, 10), (), ((20.0, 5.0),), (1.0, 1.0))
        with pytest.raises(ValueError):
            SyntheticWorld((0, 0, 10, 10), (Rect(2, 2, 8, 8),), ((5.0, 5.0),), (1.0, 1.0))
