"""Physical state and the two transition kernels.

Movement speeds are throttled by congestion (``max_velocity``) and work rates
by intruding crews (``effective_efficiency``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import AgentSpec, Rect

FORWARD_LEVELS = (0.0, 0.3, 0.8, 1.0)
SIDE_LEVELS = (-1.0, 0.0, 1.0)
_EPS = 1e-9


@dataclass
class AgentPose:
    x: float
    y: float
    heading: float  # degrees in [0, 360)
    vx: float = 0.0
    vy: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class CongestionArea:
    center: tuple[float, float]
    radius: float
    index: float
    source: str  # "task" | "storage"
    owner: str

    def contains(self, p: tuple[float, float]) -> bool:
        return math.dist(self.center, p) < self.radius


@dataclass
class PhysicalState:
    poses: dict[str, AgentPose]
    radii: dict[str, float]
    walls: Rect
    congestion_areas: list[CongestionArea] = field(default_factory=list)
    # agents no longer on the plane (deregistered) are not obstacles
    inactive: set[str] = field(default_factory=set)

    def task_areas(self) -> list[CongestionArea]:
        return [a for a in self.congestion_areas if a.source == "task"]

    def area_of(self, owner: str) -> CongestionArea | None:
        for a in self.congestion_areas:
            if a.owner == owner:
                return a
        return None


@dataclass(frozen=True)
class MotionCommand:
    forward_rate: float
    lateral_rate: float
    turn_rate: float


@dataclass
class MovementEvents:
    wall: bool = False
    agents: list[str] = field(default_factory=list)
    displacement: float = 0.0


def max_velocity(v_nominal: float, carrying: bool, area_index: float, spec: AgentSpec) -> float:
    c = spec.carry_deceleration if carrying else 1.0
    return max(c * area_index * v_nominal, spec.v_min)


def effective_efficiency(e_nominal: float, invaders: int, inefficiency_index: float) -> float:
    return max(0.0, e_nominal * (1.0 - invaders * inefficiency_index))


def storage_area_index(stock: float, capacity: float) -> float:
    if capacity <= 0 or math.isinf(stock):
        return 1.0
    return 0.5 + 0.5 * min(max(stock / capacity, 0.0), 1.0)


def congestion_index_at(state: PhysicalState, position: tuple[float, float]) -> float:
    idx = 1.0
    for a in state.congestion_areas:
        if a.contains(position) and a.index < idx:
            idx = a.index
    return idx


def sample_task_efficiency(spec: AgentSpec, rng: np.random.Generator, size: int | None = None):
    """Normal around the nominal rate, truncated to [0.1, 2] times the mean by rejection."""
    mu, sd = spec.efficiency_mean, spec.efficiency_variance
    lo, hi = 0.1 * mu, 2.0 * mu
    if sd <= 0:
        return mu if size is None else np.full(size, mu)
    n = 1 if size is None else size
    out = rng.normal(mu, sd, n)
    bad = (out < lo) | (out > hi)
    while bad.any():
        out[bad] = rng.normal(mu, sd, int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return float(out[0]) if size is None else out


def heading_vector(heading_deg: float) -> tuple[float, float]:
    r = math.radians(heading_deg)
    return math.cos(r), math.sin(r)


def _clamp_to_walls(x: float, y: float, r: float, walls: Rect) -> tuple[float, float, bool]:
    cx = min(max(x, walls.xmin + r), walls.xmax - r)
    cy = min(max(y, walls.ymin + r), walls.ymax - r)
    return cx, cy, (abs(cx - x) > _EPS or abs(cy - y) > _EPS)


def step_movement(state: PhysicalState, agent_id: str, cmd: MotionCommand, dt: float, spec: AgentSpec,
                  carrying: bool = False) -> MovementEvents:
    """Turn, then translate with congestion-limited speeds; resolve walls and other bodies.

    Overlaps with other agents are removed by pushing the mover out along the
    contact normal. If that cannot be done without touching a wall or another
    body the move is cancelled, so bodies never interpenetrate.
    """
    pose = state.poses[agent_id]
    r = state.radii[agent_id]
    events = MovementEvents()
    x0, y0 = pose.x, pose.y

    pose.heading = (pose.heading + cmd.turn_rate * dt) % 360.0
    idx = congestion_index_at(state, (x0, y0))
    fwd = min(max(cmd.forward_rate, 0.0), max_velocity(spec.v_f, carrying, idx, spec))
    lat_cap = max_velocity(spec.v_l, carrying, idx, spec)
    lat = math.copysign(min(abs(cmd.lateral_rate), lat_cap), cmd.lateral_rate) if cmd.lateral_rate else 0.0
    hx, hy = heading_vector(pose.heading)
    # lateral axis points to the agent's left
    x = x0 + (fwd * hx - lat * hy) * dt
    y = y0 + (fwd * hy + lat * hx) * dt

    x, y, hit_wall = _clamp_to_walls(x, y, r, state.walls)
    events.wall = hit_wall

    others = [
        (oid, p, state.radii[oid])
        for oid, p in state.poses.items()
        if oid != agent_id and oid not in state.inactive
    ]
    contacts: set[str] = set()
    for _ in range(4):
        moved = False
        for oid, p, ro in others:
            dx, dy = x - p.x, y - p.y
            d = math.hypot(dx, dy)
            need = r + ro
            if d < need - 1e-12:
                contacts.add(oid)
                if d < _EPS:
                    dx, dy, d = x0 - p.x, y0 - p.y, math.hypot(x0 - p.x, y0 - p.y)
                    if d < _EPS:
                        dx, dy, d = 1.0, 0.0, 1.0
                push = need - d + 1e-9
                x += dx / d * push
                y += dy / d * push
                moved = True
            elif d < need + 1e-6:
                contacts.add(oid)
        if moved:
            x, y, w = _clamp_to_walls(x, y, r, state.walls)
            events.wall = events.wall or w
        else:
            break
    if any(math.hypot(x - p.x, y - p.y) < r + ro - 1e-9 for _, p, ro in others):
        x, y = x0, y0
    events.agents = sorted(contacts)
    pose.vx = (x - x0) / dt
    pose.vy = (y - y0) / dt
    pose.x, pose.y = x, y
    events.displacement = math.hypot(x - x0, y - y0)
    return events


def invaders_in_area(state: PhysicalState, area: CongestionArea, exclude: str) -> int:
    """Other active bodies whose disks intersect the area."""
    n = 0
    for oid, p in state.poses.items():
        if oid == exclude or oid in state.inactive:
            continue
        if math.dist((p.x, p.y), area.center) < area.radius + state.radii[oid]:
            n += 1
    return n
