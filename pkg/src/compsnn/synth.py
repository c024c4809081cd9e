"""Synthetic navigators on a checkpoint course.

Stands in for real gameplay traces: each simulated navigator seeks an
ordered list of checkpoints inside a rectangular arena with rectangular
obstacles, sampled at 2 Hz. Behaviour derives deterministically from a
demographic vector u in [0,1]^8:

    u[0]  base movement speed
    u[1]  heading noise (wobbliness)
    u[2]  obstacle clearance margin (how wide they steer around walls)
    u[3]  probability of revisiting an already-found checkpoint
    u[4:] distractors with no behavioural effect

All randomness comes from one seeded generator, so a (seed, n, world)
triple always produces the same dataset. Demographics are drawn on a
101-level grid (0.00, 0.01, ..., 1.00) so they round-trip exactly through
the ordinal CSV schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnreachableCheckpoint
from .features import DemographicSchema, FieldSpec, RawTrajectory

SAMPLE_RATE_HZ = 2.0
DT = 1.0 / SAMPLE_RATE_HZ
CAPTURE_RADIUS = 2.0
MAX_STEPS = 4000

SPEED_MIN, SPEED_MAX = 1.5, 4.5          # map units / s
NOISE_STD_MAX = 0.6                      # rad
CLEARANCE_MIN, CLEARANCE_MAX = 0.3, 7.0  # map units
REVISIT_PROB_MAX = 0.95
MAX_REVISITS = 8


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (self.x0 - margin <= x <= self.x1 + margin
                and self.y0 - margin <= y <= self.y1 + margin)


@dataclass(frozen=True)
class SyntheticWorld:
    bounds: tuple  # (x0, y0, x1, y1)
    obstacles: tuple  # (Rect, ...)
    checkpoints: tuple  # ((x, y), ...) in visit order
    start: tuple  # (x, y)

    def __post_init__(self):
        x0, y0, x1, y1 = self.bounds
        for cx, cy in self.checkpoints + (self.start,):
            if not (x0 < cx < x1 and y0 < cy < y1):
                raise ValueError(f"point ({cx}, {cy}) outside arena")
            for rect in self.obstacles:
                if rect.contains(cx, cy):
                    raise ValueError(f"point ({cx}, {cy}) inside an obstacle")


DEFAULT_WORLD = SyntheticWorld(
    bounds=(0.0, 0.0, 100.0, 100.0),
    obstacles=(
        # all rectangles stay well off the arena edges so every detour is
        # local; the gaps between them form pinch points of graded width, so
        # navigators sort into distinct route topologies by their clearance
        # preference
        Rect(18.0, 22.0, 28.0, 72.0),   # tall wall on the left
        Rect(45.0, 10.0, 55.0, 45.0),   # mid-map spur
        Rect(58.0, 55.0, 90.0, 64.0),   # long wall on the right
        Rect(38.0, 78.0, 62.0, 86.0),   # lintel near the top
        Rect(64.0, 14.0, 70.0, 34.0),   # block forming a pinch with the spur
    ),
    checkpoints=((42.0, 55.0), (88.0, 12.0), (80.0, 90.0), (10.0, 88.0)),
    start=(6.0, 6.0),
)


def _segment_hits_rect(px, py, qx, qy, rect: Rect, margin: float) -> bool:
    """Liang-Barsky clipping of segment p->q against the inflated rectangle."""
    x0, y0 = rect.x0 - margin, rect.y0 - margin
    x1, y1 = rect.x1 + margin, rect.y1 + margin
    dx, dy = qx - px, qy - py
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, px - x0), (dx, x1 - px), (-dy, py - y0), (dy, y1 - py)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        r = q / p
        if p < 0.0:
            if r > t1:
                return False
            t0 = max(t0, r)
        else:
            if r < t0:
                return False
            t1 = min(t1, r)
    return t0 <= t1


def _segment_clear(world, px, py, qx, qy, margin) -> bool:
    return not any(_segment_hits_rect(px, py, qx, qy, rect, margin) for rect in world.obstacles)


def _inside_any(world, x, y, margin=0.0) -> bool:
    return any(rect.contains(x, y, margin) for rect in world.obstacles)


class _Router:
    """Visibility-graph route planner at one navigator's clearance margin.

    Waypoint candidates are the obstacle corners pushed diagonally outward
    by margin + 0.5; two points see each other when the straight segment
    between them clears every obstacle inflated by the margin. Routes are
    shortest paths over that graph, so navigators with a wide clearance
    preference take visibly wider detours than wall-hugging ones. If the
    margin closes every route (an over-inflated map), planning retries with
    half and then a minimal margin.
    """

    def __init__(self, world: SyntheticWorld, margin: float):
        self.world = world
        self.margins = (margin, 0.5 * margin, 0.2)
        self._nodes = {}
        self._vis = {}
        x0, y0, x1, y1 = world.bounds
        for m in self.margins:
            nodes = []
            for rect in world.obstacles:
                for cx, sx in ((rect.x0, -1.0), (rect.x1, 1.0)):
                    for cy, sy in ((rect.y0, -1.0), (rect.y1, 1.0)):
                        x = cx + sx * (m + 0.5)
                        y = cy + sy * (m + 0.5)
                        if not (x0 + 0.5 < x < x1 - 0.5 and y0 + 0.5 < y < y1 - 0.5):
                            continue
                        if _inside_any(world, x, y, m * 0.999):
                            continue
                        nodes.append((x, y))
            vis = [
                [
                    a != b and _segment_clear(world, a[0], a[1], b[0], b[1], m)
                    for b in nodes
                ]
                for a in nodes
            ]
            self._nodes[m] = nodes
            self._vis[m] = vis

    def route(self, start, goal):
        """Waypoints from start to goal (goal included, start excluded)."""
        for m in self.margins:
            if _segment_clear(self.world, start[0], start[1], goal[0], goal[1], m):
                return [goal]
            path = self._dijkstra(start, goal, m)
            if path is not None:
                return path
        return None

    def _dijkstra(self, start, goal, m):
        nodes = [start, goal] + self._nodes[m]
        n = len(nodes)
        see = [[False] * n for _ in range(n)]
        # the start may sit closer to a wall than the preferred margin (noise
        # drift); its outgoing edges to waypoints only need to miss the raw
        # obstacles, so an escape move always exists
        for j in range(2, n):
            see[0][j] = see[j][0] = _segment_clear(
                self.world, start[0], start[1], nodes[j][0], nodes[j][1], 0.0
            )
            see[1][j] = see[j][1] = _segment_clear(
                self.world, goal[0], goal[1], nodes[j][0], nodes[j][1], m
            )
        see[0][1] = see[1][0] = _segment_clear(self.world, start[0], start[1], goal[0], goal[1], m)
        base = self._vis[m]
        for i in range(2, n):
            for j in range(2, n):
                see[i][j] = base[i - 2][j - 2]
        dist = [math.inf] * n
        prev = [-1] * n
        dist[0] = 0.0
        done = [False] * n
        for _ in range(n):
            u_i = min((d, i) for i, d in enumerate(dist) if not done[i])[1]
            if math.isinf(dist[u_i]) or u_i == 1:
                break
            done[u_i] = True
            ux, uy = nodes[u_i]
            for v in range(n):
                if done[v] or not see[u_i][v]:
                    continue
                alt = dist[u_i] + math.hypot(nodes[v][0] - ux, nodes[v][1] - uy)
                if alt < dist[v]:
                    dist[v] = alt
                    prev[v] = u_i
        if math.isinf(dist[1]):
            return None
        path = []
        i = 1
        while i != 0:
            path.append(nodes[i])
            i = prev[i]
        path.reverse()
        return path


WAYPOINT_RADIUS = 1.5


def _simulate(rng, u, world: SyntheticWorld, traj_id: str) -> RawTrajectory:
    speed = SPEED_MIN + (SPEED_MAX - SPEED_MIN) * u[0]
    noise_std = NOISE_STD_MAX * u[1]
    margin = CLEARANCE_MIN + (CLEARANCE_MAX - CLEARANCE_MIN) * u[2]
    p_revisit = REVISIT_PROB_MAX * u[3]
    router = _Router(world, margin)

    x0, y0, x1, y1 = world.bounds
    px, py = world.start
    ts, xs, ys = [0.0], [px], [py]
    plan = [(cp, True) for cp in world.checkpoints]  # (target, counts_as_new)
    visited: list[tuple] = []
    revisits_left = MAX_REVISITS
    route: list | None = None
    step = 0
    while plan:
        step += 1
        if step > MAX_STEPS:
            raise UnreachableCheckpoint(
                f"trajectory {traj_id}: checkpoint {plan[0][0]} unreachable after {MAX_STEPS} steps"
            )
        (tx, ty), is_new = plan[0]
        # replan when the leg starts or noise pushed us out of sight of the
        # next waypoint (tested at a slacker margin to avoid thrashing)
        if not route or not _segment_clear(
            world, px, py, route[0][0], route[0][1], min(0.6 * margin, 1.0)
        ):
            route = router.route((px, py), (tx, ty))
            if route is None:
                raise UnreachableCheckpoint(
                    f"trajectory {traj_id}: no route to checkpoint ({tx}, {ty})"
                )
        wx, wy = route[0]
        heading = math.atan2(wy - py, wx - px) + rng.normal(0.0, noise_std)
        nx = px + speed * DT * math.cos(heading)
        ny = py + speed * DT * math.sin(heading)
        nx = min(max(nx, x0 + 0.25), x1 - 0.25)
        ny = min(max(ny, y0 + 0.25), y1 - 0.25)
        if not _inside_any(world, nx, ny):
            px, py = nx, ny
        elif not _inside_any(world, px, ny):  # slide along the wall
            py = ny
        elif not _inside_any(world, nx, py):
            px = nx
        ts.append(step * DT)
        xs.append(px)
        ys.append(py)
        if len(route) > 1 and math.hypot(wx - px, wy - py) < WAYPOINT_RADIUS:
            route.pop(0)
        if math.hypot(tx - px, ty - py) < CAPTURE_RADIUS:
            plan.pop(0)
            route = None
            if is_new:
                visited.append((tx, ty))
            candidates = [cp for cp in visited if cp != (tx, ty)]
            if plan and candidates and revisits_left > 0 and rng.random() < p_revisit:
                back = candidates[int(rng.integers(len(candidates)))]
                plan.insert(0, (back, False))
                revisits_left -= 1
    return RawTrajectory(traj_id, np.array(ts), np.array(xs), np.array(ys))


def generate_synthetic_dataset(seed: int, n_traj: int, world: SyntheticWorld = DEFAULT_WORLD):
    """Simulate `n_traj` navigators; returns (trajectories, u matrix (n, 8))."""
    if n_traj < 2:
        raise ValueError("need at least 2 trajectories")
    rng = np.random.default_rng(seed)
    trajs, us = [], []
    for i in range(n_traj):
        levels = rng.integers(0, 101, size=8)
        u = levels / 100.0
        trajs.append(_simulate(rng, u, world, f"t{i:04d}"))
        us.append(u)
    return trajs, np.array(us)


def simulate_navigator(u, seed: int, world: SyntheticWorld = DEFAULT_WORLD,
                       traj_id: str = "nav") -> RawTrajectory:
    """One navigator with an explicit demographic vector (for probing how
    single components shape the trajectory)."""
    return _simulate(np.random.default_rng(seed), np.asarray(u, dtype=np.float64), world, traj_id)


def demographic_schema() -> DemographicSchema:
    """Schema matching the synthetic demographics: seven 101-level ordinal
    fields plus one 101-category categorical field (same spacing either way)."""
    levels = tuple(str(i) for i in range(101))
    fields = tuple(
        FieldSpec(f"f{i + 1}", "categorical" if i == 7 else "ordinal", levels)
        for i in range(8)
    )
    return DemographicSchema(fields)


def u_to_records(us: np.ndarray, traj_ids) -> dict[str, dict]:
    """Raw CSV records (level strings) for encoded vectors on the 0.01 grid."""
    out = {}
    for tid, u in zip(traj_ids, us):
        out[tid] = {f"f{i + 1}": str(int(round(v * 100))) for i, v in enumerate(u)}
    return out
