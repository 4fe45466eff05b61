"""Static problem instances: work plane, components, task network, crews.

Everything here is immutable after construction so one ``Scenario`` can be
shared by many environment instances. All quantities are SI with seconds as
the time unit; the case-study builder converts per-minute table values.
"""

from __future__ import annotations

import graphlib
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

TASK_TYPES = ("JC", "HI", "G", "R", "F")
CREW_TYPES = ("JCC", "HIC", "GC", "RC", "FC")
CREW_FOR_TASK = dict(zip(TASK_TYPES, CREW_TYPES))
TASK_FOR_CREW = dict(zip(CREW_TYPES, TASK_TYPES))
COMPONENT_KINDS = ("precast", "cast-in-place")
MATERIAL_KINDS = ("struts", "rebars", "templates")
OUTLET_ID = "outlet"

Point = tuple[float, float]


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario documents."""


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def overlaps(self, other: Rect) -> bool:
        return (
            self.xmin < other.xmax
            and other.xmin < self.xmax
            and self.ymin < other.ymax
            and other.ymin < self.ymax
        )

    @classmethod
    def centered(cls, center: Point, width: float, height: float) -> Rect:
        x, y = center
        return cls(x - width / 2, y - height / 2, x + width / 2, y + height / 2)


@dataclass(frozen=True)
class ComponentSpec:
    id: str
    position: Point
    footprint: Rect
    kind: str = "precast"


@dataclass(frozen=True)
class TaskSpec:
    id: str
    task_type: str
    component_id: str
    predecessors: tuple[str, ...]
    work_quantity: float
    area_distance: float
    congestion_index: float
    requires_crane: bool = False
    material_kind: str | None = None
    # material units consumed per unit of work
    material_per_unit: float = 1.0


@dataclass(frozen=True)
class AgentSpec:
    id: str
    crew_type: str
    efficiency_mean: float  # work units per second
    # named variance, used as a standard deviation
    efficiency_variance: float
    occupation_area: float
    v_f: float
    v_l: float = 0.1
    v_tu: float = 30.0
    v_min: float = 0.1
    carry_deceleration: float = 1.0
    inefficiency_index: float = 0.3
    max_load: float = 0.0
    equipped: bool = False
    spawn: Point | None = None
    spawn_heading: float = 90.0

    @property
    def radius(self) -> float:
        return math.sqrt(self.occupation_area / math.pi)


@dataclass(frozen=True)
class StorageSpec:
    id: str
    material_kind: str
    position: Point
    footprint: Rect
    acquire_rate: float  # material units per second
    initial_stock: float
    capacity: float
    area_radius: float = 2.0


@dataclass(frozen=True)
class CraneSpec:
    id: str = "TC"
    lift_duration: float = 120.0
    position: Point = (0.0, 0.0)


@dataclass(frozen=True)
class Scenario:
    plane_width: float
    plane_height: float
    components: tuple[ComponentSpec, ...]
    tasks: tuple[TaskSpec, ...]
    storages: tuple[StorageSpec, ...]
    crews: tuple[AgentSpec, ...]
    crane: CraneSpec
    outlet_position: Point
    outlet_radius: float = 1.0
    name: str = "scenario"

    # lookups are cached per instance; they never feed into equality
    @cached_property
    def component_by_id(self) -> dict[str, ComponentSpec]:
        return {c.id: c for c in self.components}

    @cached_property
    def task_by_id(self) -> dict[str, TaskSpec]:
        return {t.id: t for t in self.tasks}

    @cached_property
    def storage_by_id(self) -> dict[str, StorageSpec]:
        return {s.id: s for s in self.storages}

    @cached_property
    def crew_by_id(self) -> dict[str, AgentSpec]:
        return {a.id: a for a in self.crews}

    @cached_property
    def storage_for_material(self) -> dict[str, StorageSpec]:
        out: dict[str, StorageSpec] = {}
        for s in self.storages:
            out.setdefault(s.material_kind, s)
        return out

    @cached_property
    def tasks_by_component(self) -> dict[str, list[TaskSpec]]:
        out: dict[str, list[TaskSpec]] = {c.id: [] for c in self.components}
        for t in self.tasks:
            out.setdefault(t.component_id, []).append(t)
        return out

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        succ: dict[str, list[str]] = {t.id: [] for t in self.tasks}
        for t in self.tasks:
            for p in t.predecessors:
                succ.setdefault(p, []).append(t.id)
        return {k: tuple(v) for k, v in succ.items()}

    @cached_property
    def transitive_successor_count(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for tid in self.task_by_id:
            seen: set[str] = set()
            stack = list(self.successors.get(tid, ()))
            while stack:
                s = stack.pop()
                if s not in seen:
                    seen.add(s)
                    stack.extend(self.successors.get(s, ()))
            counts[tid] = len(seen)
        return counts

    @cached_property
    def space_conflicts(self) -> dict[str, frozenset[str]]:
        """Tasks on other components whose circular task areas overlap this one's."""
        out: dict[str, set[str]] = {t.id: set() for t in self.tasks}
        pos = {c.id: c.position for c in self.components}
        ts = self.tasks
        for i, a in enumerate(ts):
            pa = pos[a.component_id]
            for b in ts[i + 1:]:
                if b.component_id == a.component_id:
                    continue
                pb = pos[b.component_id]
                if math.dist(pa, pb) < a.area_distance + b.area_distance:
                    out[a.id].add(b.id)
                    out[b.id].add(a.id)
        return {k: frozenset(v) for k, v in out.items()}

    @property
    def diagonal(self) -> float:
        return math.hypot(self.plane_width, self.plane_height)

    def position_of(self, object_id: str) -> Point:
        if object_id == OUTLET_ID:
            return self.outlet_position
        if object_id in self.component_by_id:
            return self.component_by_id[object_id].position
        if object_id in self.storage_by_id:
            return self.storage_by_id[object_id].position
        raise KeyError(object_id)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


def _inside(p: Point, w: float, h: float) -> bool:
    return 0.0 <= p[0] <= w and 0.0 <= p[1] <= h


def validate_scenario(s: Scenario) -> ValidationReport:
    """Collect every violated invariant; an empty report means the scenario is usable."""
    errs: list[str] = []
    if not (s.plane_width > 0 and s.plane_height > 0):
        errs.append("plane dimensions must be positive")
    w, h = s.plane_width, s.plane_height
    if not s.components:
        errs.append("no components")

    seen_ids: set[str] = set()
    for kind, ids in (
        ("component", [c.id for c in s.components]),
        ("task", [t.id for t in s.tasks]),
        ("storage", [st.id for st in s.storages]),
        ("crew", [a.id for a in s.crews]),
    ):
        local: set[str] = set()
        for i in ids:
            if i in local:
                errs.append(f"duplicate {kind} id {i}")
            local.add(i)
            if kind != "task" and i in seen_ids:
                errs.append(f"object id {i} is not unique across components/storages/crews")
            if kind != "task":
                seen_ids.add(i)
    if OUTLET_ID in seen_ids:
        errs.append(f"object id {OUTLET_ID!r} is reserved")

    for c in s.components:
        if c.footprint.area <= 0:
            errs.append(f"component {c.id} footprint area must be positive")
        if not _inside(c.position, w, h):
            errs.append(f"component {c.id} position outside plane")
        if c.kind not in COMPONENT_KINDS:
            errs.append(f"component {c.id} has unknown kind {c.kind!r}")
    comps = list(s.components)
    for i, a in enumerate(comps):
        for b in comps[i + 1:]:
            if a.footprint.overlaps(b.footprint):
                errs.append(f"overlapping footprints: {a.id} and {b.id}")

    comp_ids = {c.id for c in s.components}
    crew_types = {a.crew_type for a in s.crews}
    task_ids = {t.id for t in s.tasks}
    for t in s.tasks:
        if t.task_type not in TASK_TYPES:
            errs.append(f"task {t.id} has unknown type {t.task_type!r}")
        if t.component_id not in comp_ids:
            errs.append(f"task {t.id} references missing component {t.component_id}")
        if t.task_type in CREW_FOR_TASK and CREW_FOR_TASK[t.task_type] not in crew_types:
            errs.append(f"task {t.id} requires crew type {CREW_FOR_TASK[t.task_type]} which is absent")
        for p in t.predecessors:
            if p not in task_ids:
                errs.append(f"task {t.id} references missing predecessor {p}")
        if not t.work_quantity > 0:
            errs.append(f"task {t.id} work_quantity must be positive")
        if not 0 < t.congestion_index <= 1:
            errs.append(f"task {t.id} congestion_index must lie in (0,1]")
        if not t.area_distance > 0:
            errs.append(f"task {t.id} area_distance must be positive")
        if t.material_kind is not None:
            if t.material_kind not in MATERIAL_KINDS:
                errs.append(f"task {t.id} has unknown material {t.material_kind!r}")
            elif t.material_kind not in {st.material_kind for st in s.storages}:
                errs.append(f"task {t.id} needs {t.material_kind} but no storage holds it")

    ts = graphlib.TopologicalSorter({t.id: [p for p in t.predecessors if p in task_ids] for t in s.tasks})
    try:
        ts.prepare()
    except graphlib.CycleError as exc:
        cycle = sorted(set(exc.args[1]))
        errs.append("precedence cycle {" + ",".join(cycle) + "}")

    for a in s.crews:
        if a.crew_type not in CREW_TYPES:
            errs.append(f"crew {a.id} has unknown type {a.crew_type!r}")
        if not (a.v_f > 0 and a.v_l > 0 and a.v_tu > 0 and a.v_min > 0):
            errs.append(f"crew {a.id} velocities must be positive")
        elif a.v_min > min(a.v_f, a.v_l):
            errs.append(f"crew {a.id} v_min exceeds nominal velocities")
        if not 0 < a.carry_deceleration <= 1:
            errs.append(f"crew {a.id} carry_deceleration must lie in (0,1]")
        if not 0 < a.inefficiency_index < 1:
            errs.append(f"crew {a.id} inefficiency_index must lie in (0,1)")
        if a.efficiency_mean <= 0 or a.efficiency_variance < 0:
            errs.append(f"crew {a.id} efficiency parameters invalid")
        if a.occupation_area <= 0:
            errs.append(f"crew {a.id} occupation_area must be positive")
        if a.max_load < 0:
            errs.append(f"crew {a.id} max_load must be non-negative")
        if a.spawn is not None and not _inside(a.spawn, w, h):
            errs.append(f"crew {a.id} spawn outside plane")
        needs = {t.material_kind for t in s.tasks if t.material_kind and CREW_FOR_TASK.get(t.task_type) == a.crew_type}
        if needs and a.max_load <= 0:
            errs.append(f"crew {a.id} handles materials but has max_load 0")

    for st in s.storages:
        if st.acquire_rate <= 0:
            errs.append(f"storage {st.id} acquire_rate must be positive")
        if not 0 <= st.initial_stock <= st.capacity:
            errs.append(f"storage {st.id} requires 0 <= initial_stock <= capacity")
        if not _inside(st.position, w, h):
            errs.append(f"storage {st.id} position outside plane")
        if st.material_kind not in MATERIAL_KINDS:
            errs.append(f"storage {st.id} has unknown material {st.material_kind!r}")
        for a in s.crews:
            uses = any(
                t.material_kind == st.material_kind and CREW_FOR_TASK.get(t.task_type) == a.crew_type
                for t in s.tasks
            )
            if uses and st.capacity < a.max_load:
                errs.append(f"storage {st.id} capacity below max_load of crew {a.id}")
    if s.crane.lift_duration <= 0:
        errs.append("crane lift_duration must be positive")
    if not _inside(s.outlet_position, w, h):
        errs.append("outlet position outside plane")
    return ValidationReport(errs)


# ---------------------------------------------------------------- serialization

def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    return {
        "name": s.name,
        "plane": {"width": s.plane_width, "height": s.plane_height},
        "components": [asdict(c) for c in s.components],
        "tasks": [asdict(t) for t in s.tasks],
        "storages": [asdict(st) for st in s.storages],
        "crews": [asdict(a) for a in s.crews],
        "crane": asdict(s.crane),
        "outlet": {"position": list(s.outlet_position), "radius": s.outlet_radius},
    }


def _point(v: Any) -> Point:
    x, y = v
    return (float(x), float(y))


def _rect(v: Any) -> Rect:
    if isinstance(v, dict):
        return Rect(float(v["xmin"]), float(v["ymin"]), float(v["xmax"]), float(v["ymax"]))
    return Rect(*map(float, v))


def scenario_from_dict(d: dict[str, Any]) -> Scenario:
    try:
        comps = tuple(
            ComponentSpec(id=str(c["id"]), position=_point(c["position"]), footprint=_rect(c["footprint"]),
                          kind=c.get("kind", "precast"))
            for c in d["components"]
        )
        tasks = []
        for t in d["tasks"]:
            t = dict(t)
            t["predecessors"] = tuple(t.get("predecessors", ()))
            tasks.append(TaskSpec(**t))
        storages = []
        for st in d.get("storages", []):
            st = dict(st)
            st["position"] = _point(st["position"])
            st["footprint"] = _rect(st["footprint"])
            storages.append(StorageSpec(**st))
        crews = []
        for a in d["crews"]:
            a = dict(a)
            if a.get("spawn") is not None:
                a["spawn"] = _point(a["spawn"])
            crews.append(AgentSpec(**a))
        crane_d = dict(d.get("crane", {}))
        if "position" in crane_d:
            crane_d["position"] = _point(crane_d["position"])
        outlet = d["outlet"]
        return Scenario(
            plane_width=float(d["plane"]["width"]),
            plane_height=float(d["plane"]["height"]),
            components=comps,
            tasks=tuple(tasks),
            storages=tuple(storages),
            crews=tuple(crews),
            crane=CraneSpec(**crane_d),
            outlet_position=_point(outlet["position"]),
            outlet_radius=float(outlet.get("radius", 1.0)),
            name=d.get("name", "scenario"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario document: {exc!r}") from exc


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2))


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"parse error in {path}: top level must be an object")
    s = scenario_from_dict(doc)
    report = validate_scenario(s)
    if not report.ok:
        raise ScenarioError(report.errors[0])
    return s


def resolve_scenario(name_or_path: str) -> Scenario:
    """Built-in names ``case-study``, ``toy`` and ``two-task``, otherwise a JSON path."""
    builtin = {"case-study": build_case_study, "toy": build_toy_scenario, "two-task": build_two_task_scenario}
    if name_or_path in builtin:
        return builtin[name_or_path]()
    return load_scenario(name_or_path)


# ---------------------------------------------------------------- built-in scenarios

# Per task type: area distance (m), congestion index, material, material acquire rate per minute
TASK_TABLE = {
    "JC": dict(area_distance=1.2, congestion_index=0.9, material=None, acquire_per_min=None),
    "HI": dict(area_distance=2.5, congestion_index=0.4, material="struts", acquire_per_min=1.0),
    "G": dict(area_distance=1.1, congestion_index=0.7, material=None, acquire_per_min=None),
    "R": dict(area_distance=1.5, congestion_index=0.7, material="rebars", acquire_per_min=0.1),
    "F": dict(area_distance=2.0, congestion_index=0.5, material="templates", acquire_per_min=5.0),
}

# Per crew type: durations or rates, plus carrying deceleration and inefficiency index.
# duration crews: (expected minutes, spread minutes); rate crews: (units/min, spread units/min)
CREW_TABLE = {
    "JCC": dict(duration=(11.8, 1.2), occupation=4.0, v_f=0.4, equipped=True, c=1.0, i_agent=0.4),
    "HIC": dict(duration=(11.5, 0.6), occupation=5.0, v_f=0.3, equipped=False, c=0.8, i_agent=0.5),
    "GC": dict(duration=(5.0, 0.2), occupation=1.5, v_f=0.6, equipped=True, c=1.0, i_agent=0.15),
    "RC": dict(rate=(0.021, 0.007), occupation=2.4, v_f=0.7, equipped=False, c=0.9, i_agent=0.24),
    "FC": dict(rate=(0.495, 0.134), occupation=3.2, v_f=0.5, equipped=False, c=0.7, i_agent=0.32),
}

LATERAL_SPEED = 0.1  # m/s
TURN_RATE = 30.0  # deg/s
MIN_SPEED = 0.1  # m/s


def crew_efficiency(crew_type: str, scale_duration: float = 1.0) -> tuple[float, float]:
    """Per-second work rate and its spread for a crew type.

    Duration-type crews complete one task unit per expected duration; the
    duration spread is mapped to a rate spread with the delta method.
    """
    row = CREW_TABLE[crew_type]
    if "duration" in row:
        d_min, sd_min = row["duration"]
        d = d_min * 60.0 * scale_duration
        sd = sd_min * 60.0 * scale_duration
        return 1.0 / d, sd / (d * d)
    rate, sd = row["rate"]
    return rate / 60.0 / scale_duration, sd / 60.0 / scale_duration


def make_crew(agent_id: str, crew_type: str, *, max_load: float = 0.0, spawn: Point | None = None,
              duration_scale: float = 1.0) -> AgentSpec:
    row = CREW_TABLE[crew_type]
    mean, sd = crew_efficiency(crew_type, duration_scale)
    return AgentSpec(
        id=agent_id,
        crew_type=crew_type,
        efficiency_mean=mean,
        efficiency_variance=sd,
        occupation_area=row["occupation"],
        v_f=row["v_f"],
        v_l=LATERAL_SPEED,
        v_tu=TURN_RATE,
        v_min=MIN_SPEED,
        carry_deceleration=row["c"],
        inefficiency_index=row["i_agent"],
        max_load=max_load,
        equipped=row["equipped"],
        spawn=spawn,
    )


def make_task(task_id: str, task_type: str, component_id: str, predecessors=(), quantity: float = 1.0,
              material_per_unit: float = 1.0) -> TaskSpec:
    row = TASK_TABLE[task_type]
    return TaskSpec(
        id=task_id,
        task_type=task_type,
        component_id=component_id,
        predecessors=tuple(predecessors),
        work_quantity=quantity,
        area_distance=row["area_distance"],
        congestion_index=row["congestion_index"],
        requires_crane=task_type == "HI",
        material_kind=row["material"],
        material_per_unit=material_per_unit if row["material"] else 0.0,
    )


def make_storage(storage_id: str, material: str, position: Point, capacity: float,
                 initial_stock: float = 0.0, size: float = 2.0) -> StorageSpec:
    per_min = {row["material"]: row["acquire_per_min"] for row in TASK_TABLE.values() if row["material"]}
    return StorageSpec(
        id=storage_id,
        material_kind=material,
        position=position,
        footprint=Rect.centered(position, size, size),
        acquire_rate=per_min[material] / 60.0,
        initial_stock=initial_stock,
        capacity=capacity,
        area_radius=size,
    )


# case-study layout: 6x6 grid, 2.5 m components, 1.5 m aisles
GRID = 6
COMPONENT_SIZE = 2.5
AISLE = 1.5
PITCH = COMPONENT_SIZE + AISLE
GRID_ORIGIN = (4.0, 5.0)
R_QUANTITY = 0.5  # m3 of reinforcement per cast-in-place component
F_QUANTITY = 12.0  # m2 of formwork per cast-in-place component
STRUTS_PER_HI = 4.0


def _case_study_precast(r: int, c: int) -> bool:
    # checkerboard, with three south-row cells turned into cast-in-place bays
    return (r + c) % 2 == 0 and not (r == 0 and c in (0, 2, 4))


def build_case_study() -> Scenario:
    """Reconstructed floor-construction case: 36 components, 87 tasks, 7 crews.

    15 precast components carry JC -> HI -> G; 21 cast-in-place components carry
    R -> F, with R released by the HI task of the nearest precast component.
    """
    comps: list[ComponentSpec] = []
    cells: dict[str, tuple[int, int]] = {}
    for r in range(GRID):
        for c in range(GRID):
            cid = f"C{r * GRID + c:02d}"
            pos = (GRID_ORIGIN[0] + PITCH * c, GRID_ORIGIN[1] + PITCH * r)
            kind = "precast" if _case_study_precast(r, c) else "cast-in-place"
            comps.append(ComponentSpec(cid, pos, Rect.centered(pos, COMPONENT_SIZE, COMPONENT_SIZE), kind))
            cells[cid] = (r, c)

    precast = [c for c in comps if c.kind == "precast"]
    tasks: list[TaskSpec] = []
    hi_of: dict[str, str] = {}
    n = 0

    def tid() -> str:
        nonlocal n
        n += 1
        return f"T{n:02d}"

    for comp in precast:
        jc = make_task(tid(), "JC", comp.id)
        hi = make_task(tid(), "HI", comp.id, [jc.id], quantity=1.0, material_per_unit=STRUTS_PER_HI)
        g = make_task(tid(), "G", comp.id, [hi.id])
        hi_of[comp.id] = hi.id
        tasks += [jc, hi, g]
    for comp in comps:
        if comp.kind != "cast-in-place":
            continue
        host = min(precast, key=lambda p: (math.dist(p.position, comp.position), p.id))
        r_task = make_task(tid(), "R", comp.id, [hi_of[host.id]], quantity=R_QUANTITY)
        f_task = make_task(tid(), "F", comp.id, [r_task.id], quantity=F_QUANTITY)
        tasks += [r_task, f_task]

    storages = (
        make_storage("S_struts", "struts", (28.0, 8.0), capacity=16.0),
        make_storage("S_rebars", "rebars", (28.0, 15.0), capacity=2.0),
        make_storage("S_templates", "templates", (28.0, 22.0), capacity=48.0),
    )
    spawn_y = 1.6
    crews = (
        make_crew("JCC1", "JCC", spawn=(3.0, spawn_y)),
        make_crew("HIC1", "HIC", max_load=2 * STRUTS_PER_HI, spawn=(6.5, spawn_y)),
        make_crew("GC1", "GC", spawn=(9.5, spawn_y)),
        make_crew("RC1", "RC", max_load=2 * R_QUANTITY, spawn=(19.0, spawn_y)),
        make_crew("RC2", "RC", max_load=2 * R_QUANTITY, spawn=(21.5, spawn_y)),
        make_crew("FC1", "FC", max_load=2 * F_QUANTITY, spawn=(24.0, spawn_y)),
        make_crew("FC2", "FC", max_load=2 * F_QUANTITY, spawn=(27.0, spawn_y)),
    )
    return Scenario(
        plane_width=30.0,
        plane_height=30.0,
        components=tuple(comps),
        tasks=tuple(tasks),
        storages=storages,
        crews=crews,
        crane=CraneSpec("TC", 120.0, (15.0, 29.0)),
        outlet_position=(15.0, 1.0),
        outlet_radius=1.0,
        name="case-study",
    )


def build_toy_scenario(duration_scale: float = 0.15) -> Scenario:
    """20 m x 20 m plane, one hoisting and one reinforcing crew, six tasks.

    Three precast components need HI; each HI releases an R task on a
    neighbouring cast-in-place bay. Durations are scaled down for fast episodes.
    """
    size = 2.5
    layout = {
        "P1": ((5.0, 14.0), "precast"),
        "P2": ((14.0, 14.0), "precast"),
        "P3": ((10.0, 7.0), "precast"),
        "Q1": ((5.0, 8.5), "cast-in-place"),
        "Q2": ((15.0, 8.5), "cast-in-place"),
        "Q3": ((10.0, 17.5), "cast-in-place"),
    }
    comps = tuple(ComponentSpec(k, p, Rect.centered(p, size, size), kind) for k, (p, kind) in layout.items())
    r_qty = 0.05
    tasks = (
        make_task("HI1", "HI", "P1", material_per_unit=1.0),
        make_task("HI2", "HI", "P2", material_per_unit=1.0),
        make_task("HI3", "HI", "P3", material_per_unit=1.0),
        make_task("R1", "R", "Q1", ["HI1"], quantity=r_qty),
        make_task("R2", "R", "Q2", ["HI2"], quantity=r_qty),
        make_task("R3", "R", "Q3", ["HI3"], quantity=r_qty),
    )
    storages = (
        make_storage("S_struts", "struts", (18.0, 3.0), capacity=4.0),
        make_storage("S_rebars", "rebars", (2.0, 3.0), capacity=0.2),
    )
    crews = (
        make_crew("HIC1", "HIC", max_load=2.0, spawn=(8.0, 1.6), duration_scale=duration_scale),
        make_crew("RC1", "RC", max_load=0.1, spawn=(12.0, 1.6), duration_scale=duration_scale),
    )
    return Scenario(
        plane_width=20.0,
        plane_height=20.0,
        components=comps,
        tasks=tasks,
        storages=storages,
        crews=crews,
        crane=CraneSpec("TC", 30.0, (10.0, 19.0)),
        outlet_position=(10.0, 1.0),
        name="toy",
    )


def build_two_task_scenario() -> Scenario:
    """One grouting crew, two independent tasks; doing the near one first is strictly better."""
    size = 2.0
    a_pos, b_pos = (4.0, 4.0), (16.0, 16.0)
    comps = (
        ComponentSpec("A", a_pos, Rect.centered(a_pos, size, size)),
        ComponentSpec("B", b_pos, Rect.centered(b_pos, size, size)),
    )
    tasks = (make_task("TA", "G", "A"), make_task("TB", "G", "B"))
    crews = (make_crew("GC1", "GC", spawn=(12.0, 2.0), duration_scale=0.2),)
    return Scenario(
        plane_width=20.0,
        plane_height=20.0,
        components=comps,
        tasks=tasks,
        storages=(),
        crews=crews,
        crane=CraneSpec("TC", 30.0, (10.0, 19.0)),
        outlet_position=(10.0, 1.0),
        name="two-task",
    )
