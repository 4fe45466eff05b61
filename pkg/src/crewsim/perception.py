"""Ray sensing on the work plane and observation vectors for both policy levels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .physics import PhysicalState
from .scenario import OUTLET_ID, TASK_FOR_CREW, TASK_TYPES, Scenario
from .taskflow import ConstructionState, Mode, Pool

TYPE_NONE, TYPE_WALL, TYPE_AGENT, TYPE_COMPONENT, TYPE_TASK_AREA, TYPE_STORAGE, TYPE_OUTLET = range(7)
N_TYPES = 7
RAY_FEATURES = 4
EVAL_ROW_FEATURES = 10
EVAL_POSE_FEATURES = 4
POOL_CODE = {Pool.WAIT: 0.0, Pool.QUEUE: 1.0 / 3, Pool.ON: 2.0 / 3, Pool.END: 1.0}
MODES = (Mode.REACHING, Mode.TASKING, Mode.FETCHING, Mode.WAITING, Mode.DEREGISTERED)


@dataclass(frozen=True)
class PerceptionConfig:
    n_frontal: int = 12
    m_surround: int = 16
    sight_distance: float = 20.0
    field_of_view: float = 120.0
    surround_distance: float = 4.0

    def __post_init__(self):
        if self.n_frontal <= 0 or self.m_surround <= 0:
            raise ValueError("ray counts must be positive")

    @property
    def n_rays(self) -> int:
        return self.n_frontal + self.m_surround

    @property
    def obs_size(self) -> int:
        return self.n_rays * RAY_FEATURES + 3

    def ray_offsets(self) -> np.ndarray:
        """Emit angles relative to the heading (deg): frontal fan then surround ring."""
        if self.n_frontal == 1:
            front = np.zeros(1)
        else:
            half = self.field_of_view / 2.0
            front = np.linspace(-half, half, self.n_frontal)
        ring = 360.0 * np.arange(self.m_surround) / self.m_surround
        ring = (ring + 180.0) % 360.0 - 180.0
        return np.concatenate([front, ring])

    def ray_ranges(self) -> np.ndarray:
        return np.concatenate([np.full(self.n_frontal, self.sight_distance),
                               np.full(self.m_surround, self.surround_distance)])


@dataclass(frozen=True)
class RayHit:
    relative_length: float
    emit_angle: float
    object_type_id: int
    priority_value: float
    object_id: str | None = None


class StaticScene:
    """Precomputed boxes and circles of the objects that never move."""

    def __init__(self, scenario: Scenario):
        boxes, ids, types = [], [], []
        for c in scenario.components:
            f = c.footprint
            boxes.append((f.xmin, f.ymin, f.xmax, f.ymax))
            ids.append(c.id)
            types.append(TYPE_COMPONENT)
        for s in scenario.storages:
            f = s.footprint
            boxes.append((f.xmin, f.ymin, f.xmax, f.ymax))
            ids.append(s.id)
            types.append(TYPE_STORAGE)
        self.boxes = np.array(boxes, dtype=float).reshape(-1, 4)
        self.box_ids = ids
        self.box_types = np.array(types, dtype=int)
        self.outlet = (scenario.outlet_position[0], scenario.outlet_position[1], scenario.outlet_radius)
        self.width = scenario.plane_width
        self.height = scenario.plane_height


_SCENES: dict[int, tuple[Scenario, StaticScene]] = {}


def static_scene(scenario: Scenario) -> StaticScene:
    key = id(scenario)
    hit = _SCENES.get(key)
    if hit is None or hit[0] is not scenario:
        hit = (scenario, StaticScene(scenario))
        if len(_SCENES) > 64:
            _SCENES.clear()
        _SCENES[key] = hit
    return hit[1]


def _ray_box(ox, oy, dx, dy, boxes):
    """Entry distance of each ray into each box; inf if missed or origin inside."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_x = 1.0 / dx[:, None]
        inv_y = 1.0 / dy[:, None]
        t1 = (boxes[None, :, 0] - ox) * inv_x
        t2 = (boxes[None, :, 2] - ox) * inv_x
        t3 = (boxes[None, :, 1] - oy) * inv_y
        t4 = (boxes[None, :, 3] - oy) * inv_y
    # rays parallel to an axis: slab test by position
    par_x = dx[:, None] == 0
    par_y = dy[:, None] == 0
    in_x = (ox >= boxes[None, :, 0]) & (ox <= boxes[None, :, 2])
    in_y = (oy >= boxes[None, :, 1]) & (oy <= boxes[None, :, 3])
    txmin = np.where(par_x, np.where(in_x, -np.inf, np.inf), np.minimum(t1, t2))
    txmax = np.where(par_x, np.where(in_x, np.inf, -np.inf), np.maximum(t1, t2))
    tymin = np.where(par_y, np.where(in_y, -np.inf, np.inf), np.minimum(t3, t4))
    tymax = np.where(par_y, np.where(in_y, np.inf, -np.inf), np.maximum(t3, t4))
    tmin = np.maximum(txmin, tymin)
    tmax = np.minimum(txmax, tymax)
    hit = (tmax >= tmin) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def _ray_circle(ox, oy, dx, dy, circles):
    """Entry distance into each circle (cx, cy, r); inf if missed or origin inside."""
    if len(circles) == 0:
        return np.full((len(dx), 0), np.inf)
    c = np.asarray(circles, dtype=float)
    fx = ox - c[:, 0]
    fy = oy - c[:, 1]
    b = dx[:, None] * fx[None, :] + dy[:, None] * fy[None, :]
    cc = fx * fx + fy * fy - c[:, 2] ** 2
    disc = b * b - cc[None, :]
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    ok = (disc >= 0) & (cc[None, :] > 0) & (t > 0)
    return np.where(ok, t, np.inf)


def ray_arrays(pstate: PhysicalState, scenario: Scenario, agent_id: str, cfg: PerceptionConfig,
               scene: StaticScene | None = None):
    """Vectorized ray cast. Returns (relative_lengths, offsets, type codes, object ids)."""
    scene = scene or static_scene(scenario)
    pose = pstate.poses[agent_id]
    ox, oy = pose.x, pose.y
    offsets = cfg.ray_offsets()
    ranges = cfg.ray_ranges()
    ang = np.radians(pose.heading + offsets)
    dx, dy = np.cos(ang), np.sin(ang)
    dx = np.where(np.abs(dx) < 1e-15, 0.0, dx)
    dy = np.where(np.abs(dy) < 1e-15, 0.0, dy)
    k = len(offsets)

    cands_t = []
    cands_type = []
    cands_id: list[list[str | None]] = []

    # walls
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dx > 0, (scene.width - ox) / dx, np.where(dx < 0, (0.0 - ox) / dx, np.inf))
        ty = np.where(dy > 0, (scene.height - oy) / dy, np.where(dy < 0, (0.0 - oy) / dy, np.inf))
    cands_t.append(np.maximum(np.minimum(tx, ty), 0.0)[:, None])
    cands_type.append(np.array([TYPE_WALL]))
    cands_id.append([None])

    if len(scene.boxes):
        cands_t.append(_ray_box(ox, oy, dx, dy, scene.boxes))
        cands_type.append(scene.box_types)
        cands_id.append(list(scene.box_ids))

    others = [(oid, p) for oid, p in pstate.poses.items() if oid != agent_id and oid not in pstate.inactive]
    circles = [(p.x, p.y, pstate.radii[oid]) for oid, p in others]
    circle_types = [TYPE_AGENT] * len(others)
    circle_ids: list[str | None] = [oid for oid, _ in others]
    circles.append(scene.outlet)
    circle_types.append(TYPE_OUTLET)
    circle_ids.append(OUTLET_ID)
    for a in pstate.task_areas():
        circles.append((a.center[0], a.center[1], a.radius))
        circle_types.append(TYPE_TASK_AREA)
        circle_ids.append(a.owner)
    cands_t.append(_ray_circle(ox, oy, dx, dy, circles))
    cands_type.append(np.array(circle_types, dtype=int))
    cands_id.append(circle_ids)

    t_all = np.concatenate(cands_t, axis=1)
    types_all = np.concatenate(cands_type)
    ids_all = [i for group in cands_id for i in group]
    j = np.argmin(t_all, axis=1)
    t = t_all[np.arange(k), j]
    hit = t < ranges
    rel = np.where(hit, t / ranges, 1.0)
    types = np.where(hit, types_all[j], TYPE_NONE)
    ids = [ids_all[jj] if h else None for jj, h in zip(j, hit)]
    return rel, offsets, types, ids


def cast_rays(pstate: PhysicalState, scenario: Scenario, agent_id: str, cfg: PerceptionConfig = PerceptionConfig(),
              values: dict[str, float] | None = None) -> list[RayHit]:
    """Nearest object along each frontal and surround ray.

    ``values`` holds raw priority values keyed by object id (for example the
    most recent evaluation of any agent); unmatched objects report 0.
    """
    values = values or {}
    rel, offsets, types, ids = ray_arrays(pstate, scenario, agent_id, cfg)
    return [
        RayHit(float(r), float(a), int(ty), float(values.get(oid, 0.0)) if oid is not None else 0.0, oid)
        for r, a, ty, oid in zip(rel, offsets, types, ids)
    ]


def modify_observation(hits: list[RayHit], target_scope, target_values: dict[str, float]) -> list[RayHit]:
    """Keep a ray's priority only if it sees a member of the agent's own target scope."""
    scope = set(target_scope)
    out = []
    for h in hits:
        v = float(target_values.get(h.object_id, 0.0)) if h.object_id in scope else 0.0
        out.append(RayHit(h.relative_length, h.emit_angle, h.object_type_id, v, h.object_id))
    return out


def assemble_reaching_obs(hits: list[RayHit], vx: float, vy: float, v_ref: float) -> np.ndarray:
    obs = np.empty(len(hits) * RAY_FEATURES + 3)
    for i, h in enumerate(hits):
        obs[i * 4:(i + 1) * 4] = (h.relative_length, h.emit_angle / 180.0, h.object_type_id / (N_TYPES - 1),
                                  h.priority_value)
    sp = math.hypot(vx, vy)
    obs[-3:] = np.clip((vx / v_ref, vy / v_ref, sp / v_ref), -1.0, 1.0)
    return obs


def reaching_obs(pstate: PhysicalState, scenario: Scenario, agent_id: str, scope, values: dict[str, float],
                 v_ref: float, cfg: PerceptionConfig = PerceptionConfig(), scene: StaticScene | None = None) -> np.ndarray:
    """Fast path equivalent to cast_rays -> modify_observation -> assemble_reaching_obs."""
    rel, offsets, types, ids = ray_arrays(pstate, scenario, agent_id, cfg, scene)
    scope = set(scope)
    v = np.array([float(values.get(i, 0.0)) if i in scope else 0.0 for i in ids])
    k = len(rel)
    obs = np.empty(k * RAY_FEATURES + 3)
    block = obs[:-3].reshape(k, RAY_FEATURES)
    block[:, 0] = rel
    block[:, 1] = offsets / 180.0
    block[:, 2] = types / (N_TYPES - 1)
    block[:, 3] = v
    pose = pstate.poses[agent_id]
    obs[-3:] = np.clip((pose.vx / v_ref, pose.vy / v_ref, pose.speed / v_ref), -1.0, 1.0)
    return obs


# ---------------------------------------------------------------- evaluation observation

def space_conflict_count(cstate: ConstructionState, scenario: Scenario, task_id: str) -> int:
    return sum(1 for o in scenario.space_conflicts[task_id] if cstate.pools[o] in (Pool.QUEUE, Pool.WAIT))


def eval_obs_size(scenario: Scenario) -> int:
    return len(scenario.components) * EVAL_ROW_FEATURES + EVAL_POSE_FEATURES


def _row_task(cstate: ConstructionState, scenario: Scenario, component_id: str, task_type: str):
    """The crew type's earliest unfinished task on the component, if any."""
    for t in scenario.tasks_by_component.get(component_id, ()):
        if t.task_type == task_type and cstate.pools[t.id] is not Pool.END:
            return t
    return None


def assemble_evaluation_obs(cstate: ConstructionState, pstate: PhysicalState, scenario: Scenario,
                            agent_id: str) -> np.ndarray:
    """One fixed row per component (zeros when nothing is left there for this crew) plus own pose."""
    spec = scenario.crew_by_id[agent_id]
    ttype = TASK_FOR_CREW[spec.crew_type]
    status = cstate.agent_statuses[agent_id]
    scope = set(status.target_scope)
    pose = pstate.poses[agent_id]
    w, h, diag = scenario.plane_width, scenario.plane_height, scenario.diagonal
    n_tasks = max(1, len(scenario.tasks))
    succ = scenario.transitive_successor_count
    rows = np.zeros((len(scenario.components), EVAL_ROW_FEATURES))
    for i, comp in enumerate(scenario.components):
        t = _row_task(cstate, scenario, comp.id, ttype)
        if t is None:
            continue
        remaining = t.work_quantity - cstate.progress[t.id]
        expected = remaining / spec.efficiency_mean if spec.efficiency_mean > 0 else 0.0
        rows[i] = (
            (TASK_TYPES.index(t.task_type) + 1) / len(TASK_TYPES),
            POOL_CODE[cstate.pools[t.id]],
            comp.position[0] / w,
            comp.position[1] / h,
            t.area_distance / 5.0,
            min(expected / 3600.0, 1.0),
            1.0 if comp.id in scope else 0.0,
            math.dist((pose.x, pose.y), comp.position) / diag,
            succ[t.id] / n_tasks,
            space_conflict_count(cstate, scenario, t.id) / n_tasks,
        )
    r = math.radians(pose.heading)
    tail = np.array([pose.x / w, pose.y / h, math.cos(r), math.sin(r)])
    return np.concatenate([rows.ravel(), tail])


def global_summary_size(scenario: Scenario) -> int:
    return len(scenario.crews) * (4 + len(MODES) + 1) + 4 + len(scenario.storages) + 1


def global_summary(cstate: ConstructionState, pstate: PhysicalState, scenario: Scenario, tick: int,
                   max_ticks: int) -> np.ndarray:
    """Fixed-size centralized state: per-agent pose, mode and load; pool, stock and time fractions."""
    w, h = scenario.plane_width, scenario.plane_height
    parts = []
    for a in scenario.crews:
        p = pstate.poses[a.id]
        st = cstate.agent_statuses[a.id]
        r = math.radians(p.heading)
        mode = [1.0 if st.mode is m else 0.0 for m in MODES]
        load = st.load / a.max_load if a.max_load > 0 else 0.0
        parts.extend([p.x / w, p.y / h, math.cos(r), math.sin(r), *mode, load])
    n = max(1, len(scenario.tasks))
    parts.extend(cstate.count(pl) / n for pl in (Pool.WAIT, Pool.QUEUE, Pool.ON, Pool.END))
    for s in scenario.storages:
        stock = cstate.stocks[s.id]
        parts.append(1.0 if math.isinf(stock) else stock / s.capacity)
    parts.append(min(tick / max(1, max_ticks), 1.0))
    return np.asarray(parts, dtype=float)
