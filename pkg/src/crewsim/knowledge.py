"""Rule-based construction decisions: a fixed ten-row decision table.

``decide`` is a pure function of the current states; ``apply_transition``
performs the state change belonging to the fired rule. Rules are checked in a
fixed order (completion, pause and fetch bookkeeping before initiation) and
their triggers are written to be mutually exclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .physics import (
    CongestionArea,
    PhysicalState,
    effective_efficiency,
    invaders_in_area,
    sample_task_efficiency,
    storage_area_index,
)
from .scenario import CREW_FOR_TASK, OUTLET_ID, TASK_FOR_CREW, Scenario
from .taskflow import (
    ConstructionState,
    ContractViolation,
    CraneRequest,
    Mode,
    Pool,
    advance_task,
    executable_targets,
)

RULE_ORDER = ("a_c9", "a_c3", "a_c6", "a_c7", "a_c2", "a_c5", "a_c1", "a_c4", "a_c8", "a_c10")
RULE_NAMES = {
    "a_c1": "Initiate task",
    "a_c2": "Execute task",
    "a_c3": "Pause task",
    "a_c4": "Resume task",
    "a_c5": "Fetch materials",
    "a_c6": "Fetching completed",
    "a_c7": "Request crane for material",
    "a_c8": "Request crane for task",
    "a_c9": "Complete task",
    "a_c10": "Acquire target",
}
_TOL = 1e-9


@dataclass(frozen=True)
class Dynamics:
    """Switches for the simplified first training stage."""

    instant_tasks: bool = False
    consume_materials: bool = True
    instant_crane: bool = False
    infinite_stock: bool = False
    dt: float = 1.0


@dataclass(frozen=True)
class ConstructionAction:
    code: str
    payload: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.code not in RULE_NAMES and self.code != "noop":
            raise ValueError(f"unknown construction action {self.code}")


@dataclass(frozen=True)
class DecisionOutcome:
    action: ConstructionAction
    new_target_scope: tuple[str, ...] | None = None
    status_transition: Mode | None = None
    # scope member whose arrival this rule consumed (earns the reach reward)
    arrived: str | None = None

    @property
    def code(self) -> str:
        return self.action.code


NOOP = DecisionOutcome(ConstructionAction("noop"))


# ---------------------------------------------------------------- predicates

def reach_distance(scenario: Scenario, target: str, crew_type: str, agent_radius: float,
                   task_id: str | None = None) -> float:
    """Arrival radius: the target's working distance plus the agent's body radius."""
    if target == OUTLET_ID:
        return scenario.outlet_radius + agent_radius
    if target in scenario.storage_by_id:
        return scenario.storage_by_id[target].area_radius + agent_radius
    if task_id is not None:
        return scenario.task_by_id[task_id].area_distance + agent_radius
    ttype = TASK_FOR_CREW[crew_type]
    dists = [t.area_distance for t in scenario.tasks_by_component.get(target, ()) if t.task_type == ttype]
    return (max(dists) if dists else 1.0) + agent_radius


def has_reached(pstate: PhysicalState, agent_id: str, scenario: Scenario, target: str, crew_type: str,
                task_id: str | None = None) -> bool:
    pose = pstate.poses[agent_id]
    d = math.dist((pose.x, pose.y), scenario.position_of(target))
    return d <= reach_distance(scenario, target, crew_type, pstate.radii[agent_id], task_id)


def space_feasible(cstate: ConstructionState, scenario: Scenario, task_id: str) -> bool:
    """False when an active task on another component has an overlapping area."""
    pools = cstate.pools
    return not any(pools[o] is Pool.ON for o in scenario.space_conflicts[task_id])


def feasible_task_on(cstate: ConstructionState, scenario: Scenario, component_id: str, crew_type: str) -> str | None:
    ttype = TASK_FOR_CREW[crew_type]
    for t in scenario.tasks_by_component.get(component_id, ()):
        if t.task_type == ttype and cstate.pools[t.id] is Pool.QUEUE and space_feasible(cstate, scenario, t.id):
            return t.id
    return None


def feasible_targets(cstate: ConstructionState, scenario: Scenario, crew_type: str) -> list[str]:
    """Executable targets with spatially blocked components removed (outlet kept)."""
    targets = executable_targets(cstate, scenario, crew_type)
    if targets == [OUTLET_ID]:
        return targets
    return [c for c in targets if feasible_task_on(cstate, scenario, c, crew_type) is not None]


def idle_cause(cstate: ConstructionState, scenario: Scenario, crew_type: str) -> str:
    """Why a scopeless agent has nothing to do: 'space', 'predecessor' or 'none'."""
    targets = executable_targets(cstate, scenario, crew_type)
    if targets == [OUTLET_ID]:
        return "none"
    if targets:
        if any(feasible_task_on(cstate, scenario, c, crew_type) for c in targets):
            return "none"
        return "space"
    return "predecessor"


def _has_pending_request(cstate: ConstructionState, agent_id: str) -> bool:
    return any(r.agent_id == agent_id for r in cstate.crane_queue)


def _storage_for(scenario: Scenario, task_id: str) -> str | None:
    t = scenario.task_by_id[task_id]
    if t.material_kind is None:
        return None
    st = scenario.storage_for_material.get(t.material_kind)
    return st.id if st else None


# ---------------------------------------------------------------- decide

def decide(agent_id: str, cstate: ConstructionState, pstate: PhysicalState, scenario: Scenario,
           dyn: Dynamics = Dynamics()) -> DecisionOutcome:
    status = cstate.agent_statuses[agent_id]
    if status.mode is Mode.DEREGISTERED:
        raise ContractViolation(f"agent {agent_id} is deregistered")
    spec = scenario.crew_by_id[agent_id]
    dt = dyn.dt
    mode = status.mode

    if mode is Mode.WAITING:
        return NOOP

    if mode is Mode.TASKING:
        tid = status.current_task
        if tid is None or cstate.pools[tid] is not Pool.ON:
            raise ContractViolation(f"agent {agent_id} tasking without an active task")
        task = scenario.task_by_id[tid]
        remaining = task.work_quantity - cstate.progress[tid]
        # instant tasks finish whatever remains in one tick
        max_inc = math.inf if dyn.instant_tasks else 2.0 * spec.efficiency_mean * dt
        about_done = remaining <= max_inc + _TOL
        uses_mat = task.material_kind is not None and dyn.consume_materials
        need_next = min(remaining, max_inc) * task.material_per_unit if uses_mat else 0.0
        mat_ok = status.load >= need_next - _TOL
        crane_ok = (not task.requires_crane) or dyn.instant_crane or tid in cstate.crane_assisted
        if about_done and mat_ok and crane_ok:
            return DecisionOutcome(ConstructionAction("a_c9", {"task": tid}), (), Mode.REACHING)
        if not mat_ok:
            st = _storage_for(scenario, tid)
            return DecisionOutcome(ConstructionAction("a_c3", {"task": tid, "storage": st}), (st,), Mode.REACHING)
        if crane_ok:
            return DecisionOutcome(ConstructionAction("a_c2", {"task": tid}))
        if not _has_pending_request(cstate, agent_id):
            return DecisionOutcome(ConstructionAction("a_c8", {"task": tid}), None, Mode.WAITING)
        return NOOP

    if mode is Mode.FETCHING:
        sid = status.storage
        stock = cstate.stocks[sid]
        fill = spec.max_load - status.load
        rate = scenario.storage_by_id[sid].acquire_rate
        if stock >= fill - _TOL and fill <= rate * dt + _TOL:
            scope = ()
            if status.paused_task:
                scope = (scenario.task_by_id[status.paused_task].component_id,)
            return DecisionOutcome(ConstructionAction("a_c6", {"storage": sid}), scope, Mode.REACHING)
        if stock < fill - _TOL:
            if _has_pending_request(cstate, agent_id):
                return NOOP
            return DecisionOutcome(ConstructionAction("a_c7", {"storage": sid}), None, Mode.WAITING)
        return DecisionOutcome(ConstructionAction("a_c5", {"storage": sid}))

    # target reaching
    scope = status.target_scope
    if status.paused_task is not None:
        ptask = status.paused_task
        pcomp = scenario.task_by_id[ptask].component_id
        if scope and scope[0] in scenario.storage_by_id:
            sid = scope[0]
            if has_reached(pstate, agent_id, scenario, sid, spec.crew_type):
                fill = spec.max_load - status.load
                if cstate.stocks[sid] < fill - _TOL:
                    if not _has_pending_request(cstate, agent_id):
                        return DecisionOutcome(ConstructionAction("a_c7", {"storage": sid}), (), Mode.WAITING, arrived=sid)
                    return NOOP
                return DecisionOutcome(ConstructionAction("a_c5", {"storage": sid}), (), Mode.FETCHING, arrived=sid)
            return NOOP
        if has_reached(pstate, agent_id, scenario, pcomp, spec.crew_type, ptask):
            return DecisionOutcome(ConstructionAction("a_c4", {"task": ptask}), (), Mode.TASKING, arrived=pcomp)
        return NOOP

    if scope == [OUTLET_ID]:
        if has_reached(pstate, agent_id, scenario, OUTLET_ID, spec.crew_type):
            return DecisionOutcome(ConstructionAction("a_c10", {"deregister": True}), (), Mode.DEREGISTERED,
                                   arrived=OUTLET_ID)
        return NOOP

    if scope:
        best: tuple[float, int, str, str] | None = None
        for i, comp in enumerate(scope):
            tid = feasible_task_on(cstate, scenario, comp, spec.crew_type)
            if tid is None or not has_reached(pstate, agent_id, scenario, comp, spec.crew_type, tid):
                continue
            key = (-status.target_values.get(comp, 0.0), i, comp, tid)
            if best is None or key < best:
                best = key
        if best is not None:
            return DecisionOutcome(ConstructionAction("a_c1", {"task": best[3], "component": best[2]}), (),
                                   Mode.TASKING, arrived=best[2])
        return NOOP

    new_scope = tuple(feasible_targets(cstate, scenario, spec.crew_type))
    return DecisionOutcome(ConstructionAction("a_c10", {"deregister": False}), new_scope)


# ---------------------------------------------------------------- transitions

def register_task_area(pstate: PhysicalState, scenario: Scenario, task_id: str) -> CongestionArea:
    t = scenario.task_by_id[task_id]
    area = CongestionArea(scenario.component_by_id[t.component_id].position, t.area_distance,
                          t.congestion_index, "task", task_id)
    pstate.congestion_areas.append(area)
    return area


def deregister_area(pstate: PhysicalState, owner: str) -> None:
    pstate.congestion_areas = [a for a in pstate.congestion_areas if a.owner != owner]


def update_storage_area(pstate: PhysicalState, cstate: ConstructionState, scenario: Scenario, sid: str) -> None:
    st = scenario.storage_by_id[sid]
    idx = storage_area_index(cstate.stocks[sid], st.capacity)
    for a in pstate.congestion_areas:
        if a.owner == sid:
            a.index = idx
            return


def _complete(cstate, pstate, scenario, agent_id, tid, tick, consume: bool = True) -> None:
    status = cstate.agent_statuses[agent_id]
    task = scenario.task_by_id[tid]
    remaining = task.work_quantity - cstate.progress[tid]
    if consume and task.material_kind is not None:
        status.load = max(0.0, status.load - remaining * task.material_per_unit)
    advance_task(cstate, scenario, tid, remaining, tick)
    deregister_area(pstate, tid)
    status.current_task = None
    status.mode = Mode.REACHING
    status.target_scope = []
    status.target_values = {}


def apply_transition(outcome: DecisionOutcome, agent_id: str, cstate: ConstructionState, pstate: PhysicalState,
                     scenario: Scenario, dyn: Dynamics = Dynamics(), tick: int = 0,
                     rng: np.random.Generator | None = None) -> tuple[ConstructionState, PhysicalState]:
    code = outcome.code
    if code == "noop":
        return cstate, pstate
    status = cstate.agent_statuses[agent_id]
    spec = scenario.crew_by_id[agent_id]
    p = outcome.action.payload
    dt = dyn.dt

    if code == "a_c1":
        tid = p["task"]
        if cstate.pools[tid] is not Pool.QUEUE:
            raise ContractViolation(f"a_c1 on task {tid} which is not queued")
        cstate.pools[tid] = Pool.ON
        cstate.start_tick[tid] = tick
        register_task_area(pstate, scenario, tid)
        status.mode = Mode.TASKING
        status.current_task = tid
        status.target_scope = []
        status.target_values = {}
        if dyn.instant_tasks:
            task = scenario.task_by_id[tid]
            need = task.work_quantity * task.material_per_unit if task.material_kind and dyn.consume_materials else 0.0
            if status.load >= need - _TOL:
                _complete(cstate, pstate, scenario, agent_id, tid, tick, dyn.consume_materials)

    elif code == "a_c2":
        tid = p["task"]
        task = scenario.task_by_id[tid]
        area = pstate.area_of(tid)
        n = invaders_in_area(pstate, area, agent_id) if area is not None else 0
        if rng is None:
            rate = spec.efficiency_mean
        else:
            rate = sample_task_efficiency(spec, rng)
        delta = effective_efficiency(rate, n, spec.inefficiency_index) * dt
        delta = min(delta, task.work_quantity - cstate.progress[tid])
        if task.material_kind is not None and dyn.consume_materials:
            status.load = max(0.0, status.load - delta * task.material_per_unit)
        advance_task(cstate, scenario, tid, delta, tick)

    elif code == "a_c3":
        if status.current_task is None:
            raise ContractViolation("a_c3 without a current task")
        status.paused_task = status.current_task
        status.current_task = None
        status.mode = Mode.REACHING
        status.storage = p["storage"]
        status.target_scope = [p["storage"]]
        status.target_values = {p["storage"]: 1.0}

    elif code == "a_c4":
        if status.paused_task is None:
            raise ContractViolation("a_c4 with no paused task")
        status.current_task = status.paused_task
        status.paused_task = None
        status.mode = Mode.TASKING
        status.target_scope = []
        status.target_values = {}

    elif code == "a_c5":
        sid = p["storage"]
        status.mode = Mode.FETCHING
        status.storage = sid
        status.target_scope = []
        status.target_values = {}
        fill = spec.max_load - status.load
        if dyn.infinite_stock:
            amount = fill
        else:
            st = scenario.storage_by_id[sid]
            area = pstate.area_of(sid)
            n = invaders_in_area(pstate, area, agent_id) if area is not None else 0
            amount = min(effective_efficiency(st.acquire_rate, n, spec.inefficiency_index) * dt,
                         cstate.stocks[sid], fill)
        amount = max(0.0, amount)
        cstate.stocks[sid] -= amount
        status.load = min(spec.max_load, status.load + amount)
        update_storage_area(pstate, cstate, scenario, sid)

    elif code == "a_c6":
        sid = p["storage"]
        fill = max(0.0, spec.max_load - status.load)
        amount = min(fill, cstate.stocks[sid])
        cstate.stocks[sid] -= amount
        status.load = min(spec.max_load, status.load + amount)
        update_storage_area(pstate, cstate, scenario, sid)
        status.mode = Mode.REACHING
        status.storage = None
        scope = list(outcome.new_target_scope or ())
        status.target_scope = scope
        status.target_values = {c: 1.0 for c in scope}

    elif code == "a_c7":
        sid = p["storage"]
        status.mode = Mode.WAITING
        status.storage = sid
        status.target_scope = []
        status.target_values = {}
        cstate.crane_queue.append(CraneRequest(agent_id, "material", tick, storage_id=sid))

    elif code == "a_c8":
        tid = p["task"]
        if not scenario.task_by_id[tid].requires_crane:
            raise ContractViolation(f"a_c8 for task {tid} that needs no crane")
        status.mode = Mode.WAITING
        cstate.crane_queue.append(CraneRequest(agent_id, "task_assist", tick, task_id=tid))

    elif code == "a_c9":
        tid = p["task"]
        if status.current_task != tid:
            raise ContractViolation("a_c9 for a task the agent is not performing")
        _complete(cstate, pstate, scenario, agent_id, tid, tick, dyn.consume_materials)

    elif code == "a_c10":
        if p.get("deregister"):
            status.mode = Mode.DEREGISTERED
            status.target_scope = []
            status.target_values = {}
            pstate.inactive.add(agent_id)
        else:
            scope = list(outcome.new_target_scope or ())
            status.target_scope = scope
            status.target_values = {OUTLET_ID: 1.0} if scope == [OUTLET_ID] else {}

    return cstate, pstate


def crew_of_task(scenario: Scenario, task_id: str) -> str:
    return CREW_FOR_TASK[scenario.task_by_id[task_id].task_type]
