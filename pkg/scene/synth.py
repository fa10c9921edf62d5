"""Parametric synthetic driving scenes.

All geometry is metric, in the ego frame at the current time step: the ego
stands at the origin heading +y. Each scene kind is a set of corridors
(lane centerlines the ego may follow) plus the road surface around them.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from scene.grid import FULL_GRID, GridConfig

logger = logging.getLogger(__name__)

SCENE_KINDS = ("straight", "curve", "t_junction", "fork")

DT = 0.5
HISTORY_STEPS = 3
FUTURE_STEPS = 12
LANE_WIDTH = 3.5
ROAD_HALF_WIDTH = 5.0
EGO_LENGTH = 4.5
EGO_WIDTH = 1.8
MIN_SPEED = 3.0
MAX_SPEED = 15.0
APPROACH = 80.0
RUN_OUT = 200.0
STEP = 0.5


@dataclass
class AgentTrack:
    """Past motion of one agent, oldest pose first.

    Attributes:
        poses: [T_i, 3] (x, y, heading) in meters / radians.
        velocity: [T_i, 2] m/s.
        acceleration: [T_i, 2] m/s^2.
        length: Footprint extent along the heading.
        width: Footprint extent across the heading.
    """

    poses: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    length: float
    width: float

    def translated(self, dx: float, dy: float) -> "AgentTrack":
        poses = self.poses.copy()
        poses[:, 0] += dx
        poses[:, 1] += dy
        return replace(self, poses=poses)


@dataclass
class SceneSpec:
    kind: str
    seed: int
    lanes: List[np.ndarray]
    lane_edges: List[np.ndarray]
    drivable: List[np.ndarray]
    crossings: List[np.ndarray]
    agents: List[AgentTrack]
    ego_index: int
    gt_future: np.ndarray
    corridors: List[np.ndarray] = field(default_factory=list)
    speed: float = 0.0
    start_s: float = APPROACH
    history_steps: int = HISTORY_STEPS
    future_steps: int = FUTURE_STEPS

    def __post_init__(self):
        if self.gt_future.shape != (self.future_steps, 2):
            raise ValueError(f"ground truth must be {self.future_steps}x2, got {self.gt_future.shape}")
        for i, agent in enumerate(self.agents):
            if agent.poses.shape != (self.history_steps, 3):
                raise ValueError(f"agent {i} track must have {self.history_steps} poses")

    @property
    def ego(self) -> AgentTrack:
        return self.agents[self.ego_index]

    def corridor_point(self, index: int, t: float) -> np.ndarray:
        """Where the ego would be after ``t`` seconds on corridor ``index``."""
        return point_at(self.corridors[index], self.start_s + self.speed * t)

    def translated(self, dx: float, dy: float) -> "SceneSpec":
        """The same scene with every element moved by (dx, dy) meters."""
        shift = np.array([dx, dy])
        return replace(
            self,
            lanes=[p + shift for p in self.lanes],
            lane_edges=[p + shift for p in self.lane_edges],
            drivable=[p + shift for p in self.drivable],
            crossings=[p + shift for p in self.crossings],
            agents=[a.translated(dx, dy) for a in self.agents],
            gt_future=self.gt_future + shift,
            corridors=[p + shift for p in self.corridors],
        )


def _unit(heading: float) -> np.ndarray:
    d = np.array([math.cos(heading), math.sin(heading)])
    d[np.abs(d) < 1e-12] = 0.0
    return d


def trace(segments: Sequence[Tuple], start=(0.0, -APPROACH), heading: float = math.pi / 2) -> np.ndarray:
    """Polyline from ("line", length) and ("arc", radius, signed_angle) pieces.

    Positive arc angles turn left. Points are spaced ``STEP`` meters apart.
    """
    points = [np.asarray(start, dtype=np.float64)]
    pos, h = points[0].copy(), heading
    for seg in segments:
        if seg[0] == "line":
            n = int(round(seg[1] / STEP))
            d = _unit(h)
            origin = pos.copy()
            for k in range(1, n + 1):
                points.append(origin + d * (k * STEP))
            pos = points[-1].copy()
        elif seg[0] == "arc":
            radius, angle = seg[1], seg[2]
            side = 1.0 if angle > 0 else -1.0
            center = pos + _unit(h + side * math.pi / 2) * radius
            n = max(1, int(round(abs(angle) * radius / STEP)))
            start_angle = h - side * math.pi / 2
            for k in range(1, n + 1):
                phi = start_angle + angle * k / n
                points.append(center + radius * np.array([math.cos(phi), math.sin(phi)]))
            pos, h = points[-1].copy(), h + angle
        else:
            raise ValueError(f"unknown segment {seg[0]}")
    return np.asarray(points)


def arc_lengths(poly: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(poly, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_at(poly: np.ndarray, s: float) -> np.ndarray:
    cum = arc_lengths(poly)
    return np.array([np.interp(s, cum, poly[:, 0]), np.interp(s, cum, poly[:, 1])])


def heading_at(poly: np.ndarray, s: float) -> float:
    cum = arc_lengths(poly)
    i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(poly) - 2))
    d = poly[i + 1] - poly[i]
    return math.atan2(d[1], d[0])


def left_normals(poly: np.ndarray) -> np.ndarray:
    tangent = np.gradient(poly, axis=0)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    return np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)


def offset_polyline(poly: np.ndarray, distance: float) -> np.ndarray:
    return poly + left_normals(poly) * distance


def buffer_polyline(poly: np.ndarray, half_width: float) -> np.ndarray:
    """Polygon covering ``half_width`` on each side of ``poly``."""
    return np.concatenate([offset_polyline(poly, half_width), offset_polyline(poly, -half_width)[::-1]])


def rectangle(x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)


def _layout(kind: str, rng: np.random.Generator):
    """Corridors, extra road polygons and crossings for one scene kind."""
    roads, crossings = [], []
    if kind == "straight":
        corridors = [trace([("line", APPROACH + RUN_OUT)])]
        if rng.random() < 0.5:
            y = rng.uniform(10.0, 30.0)
            crossings.append(rectangle(-ROAD_HALF_WIDTH, ROAD_HALF_WIDTH, y, y + 3.0))
    elif kind == "curve":
        d = rng.uniform(0.0, 10.0)
        radius = rng.uniform(30.0, 80.0)
        angle = math.radians(rng.uniform(30.0, 90.0)) * rng.choice([-1.0, 1.0])
        corridors = [trace([("line", APPROACH + d), ("arc", radius, angle), ("line", RUN_OUT)])]
    elif kind == "t_junction":
        d = rng.uniform(2.0, 8.0)
        radius = rng.uniform(8.0, 12.0)
        corridors = [
            trace([("line", APPROACH + d), ("arc", radius, math.pi / 2), ("line", RUN_OUT)]),
            trace([("line", APPROACH + d), ("arc", radius, -math.pi / 2), ("line", RUN_OUT)]),
        ]
        cross_y = d + radius
        roads.append(rectangle(-RUN_OUT, RUN_OUT, cross_y - ROAD_HALF_WIDTH, cross_y + ROAD_HALF_WIDTH))
        roads.append(rectangle(-ROAD_HALF_WIDTH, ROAD_HALF_WIDTH, -APPROACH, cross_y))
        crossings.append(rectangle(-ROAD_HALF_WIDTH, ROAD_HALF_WIDTH, d - 4.0, d - 1.0))
    elif kind == "fork":
        d = rng.uniform(0.0, 4.0)
        radius = rng.uniform(12.0, 15.0)
        angle = math.radians(rng.uniform(40.0, 50.0))
        corridors = [
            trace([("line", APPROACH + d), ("arc", radius, angle), ("line", RUN_OUT)]),
            trace([("line", APPROACH + d), ("arc", radius, -angle), ("line", RUN_OUT)]),
        ]
    else:
        raise ValueError(f"unknown scene kind {kind!r}, expected one of {SCENE_KINDS}")
    return corridors, roads, crossings


def _reach(corridor: np.ndarray, start_s: float, grid: GridConfig, margin: float = 2.0) -> float:
    """Arc length the ego can travel before leaving the grid."""
    x_min, x_max, y_min, y_max = grid.metric_extent(margin)
    cum = arc_lengths(corridor)
    ahead = cum >= start_s
    inside = (
        (corridor[:, 0] >= x_min) & (corridor[:, 0] <= x_max) & (corridor[:, 1] >= y_min) & (corridor[:, 1] <= y_max)
    )
    outside = np.nonzero(ahead & ~inside)[0]
    end = cum[outside[0]] if len(outside) else cum[-1]
    return end - start_s


def _agent_on(corridor: np.ndarray, s: float, lateral: float, reverse: bool, speed: float, accel: float,
              length: float, width: float, history_steps: int) -> AgentTrack:
    poses, vel, acc = [], [], []
    direction = -1.0 if reverse else 1.0
    for k in range(history_steps):
        t = -(history_steps - 1 - k) * DT
        s_t = s + direction * (speed * t + 0.5 * accel * t * t)
        base = point_at(corridor, s_t)
        h = heading_at(corridor, s_t)
        normal = _unit(h + math.pi / 2)
        pos = base + normal * lateral
        heading = h + (math.pi if reverse else 0.0)
        v_t = max(0.0, speed + accel * t)
        poses.append([pos[0], pos[1], heading])
        vel.append(_unit(heading) * v_t)
        acc.append(_unit(heading) * accel)
    return AgentTrack(np.asarray(poses), np.asarray(vel), np.asarray(acc), length, width)


def generate_scene(
    seed: int,
    kind: str,
    grid: Optional[GridConfig] = None,
    speed: Optional[float] = None,
    history_steps: int = HISTORY_STEPS,
    future_steps: int = FUTURE_STEPS,
) -> SceneSpec:
    """Build a deterministic scene from ``(seed, kind)``.

    The ego follows one corridor at a constant speed drawn from [3, 15] m/s,
    capped so the future stays inside ``grid`` (default: FULL_GRID).

    Args:
        seed: Any 64-bit value.
        kind: One of straight, curve, t_junction, fork.
        grid: Grid the scene is meant for.
        speed: Override the sampled ego speed (m/s).

    Returns:
        SceneSpec: The scene in the ego frame.
    """
    grid = grid or FULL_GRID
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    corridors, roads, crossings = _layout(kind, rng)

    choice = int(rng.integers(len(corridors)))
    chosen = corridors[choice]
    horizon = future_steps * DT
    if speed is None:
        v_max = min(MAX_SPEED, _reach(chosen, APPROACH, grid) / horizon)
        speed = rng.uniform(MIN_SPEED, max(MIN_SPEED, v_max))
    speed = float(speed)

    gt = np.array([point_at(chosen, APPROACH + speed * DT * (t + 1)) for t in range(future_steps)])
    ego = _agent_on(chosen, APPROACH, 0.0, False, speed, 0.0, EGO_LENGTH, EGO_WIDTH, history_steps)

    agents = []
    for _ in range(int(rng.integers(0, 4))):
        corridor = corridors[int(rng.integers(len(corridors)))]
        reverse = bool(rng.random() < 0.5)
        lateral = LANE_WIDTH if reverse else 0.0
        s = APPROACH + rng.choice([-1.0, 1.0]) * rng.uniform(10.0, 40.0)
        agents.append(
            _agent_on(
                corridor,
                s,
                lateral,
                reverse,
                speed=rng.uniform(0.0, 12.0),
                accel=rng.uniform(-1.0, 1.0),
                length=rng.uniform(4.0, 5.0),
                width=rng.uniform(1.7, 2.0),
                history_steps=history_steps,
            )
        )
    agents.append(ego)

    drivable = roads + [buffer_polyline(c, ROAD_HALF_WIDTH) for c in corridors]
    lane_edges = [offset_polyline(c, side * LANE_WIDTH / 2) for c in corridors for side in (-1.0, 1.0)]
    logger.debug(f"scene seed={seed} kind={kind} corridor={choice} speed={speed:.2f} agents={len(agents)}")
    return SceneSpec(
        kind=kind,
        seed=seed,
        lanes=list(corridors),
        lane_edges=lane_edges,
        drivable=drivable,
        crossings=crossings,
        agents=agents,
        ego_index=len(agents) - 1,
        gt_future=gt,
        corridors=list(corridors),
        speed=speed,
        start_s=APPROACH,
        history_steps=history_steps,
        future_steps=future_steps,
    )


def empty_scene(history_steps: int = HISTORY_STEPS, future_steps: int = FUTURE_STEPS) -> SceneSpec:
    """A scene with no map elements and no agents."""
    return SceneSpec(
        kind="empty",
        seed=0,
        lanes=[],
        lane_edges=[],
        drivable=[],
        crossings=[],
        agents=[],
        ego_index=-1,
        gt_future=np.zeros((future_steps, 2)),
        history_steps=history_steps,
        future_steps=future_steps,
    )
