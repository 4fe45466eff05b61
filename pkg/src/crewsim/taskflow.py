"""Construction state: task pools driven by precedence, stocks and the crane queue."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .scenario import CREW_FOR_TASK, OUTLET_ID, TASK_FOR_CREW, Scenario


class Pool(str, Enum):
    WAIT = "wait"
    QUEUE = "queue"
    ON = "on"
    END = "end"


POOL_ORDER = {Pool.WAIT: 0, Pool.QUEUE: 1, Pool.ON: 2, Pool.END: 3}


class Mode(str, Enum):
    REACHING = "target_reaching"
    TASKING = "tasking"
    FETCHING = "fetching"
    WAITING = "waiting"
    DEREGISTERED = "deregistered"


class ContractViolation(RuntimeError):
    """An operation was invoked on a state that violates its precondition."""


@dataclass
class AgentStatus:
    mode: Mode = Mode.REACHING
    current_task: str | None = None
    paused_task: str | None = None
    load: float = 0.0
    target_scope: list[str] = field(default_factory=list)
    target_values: dict[str, float] = field(default_factory=dict)
    # storage being drawn from while fetching or waiting on a material lift
    storage: str | None = None


@dataclass
class CraneRequest:
    agent_id: str
    kind: str  # "material" | "task_assist"
    issued_at: int
    storage_id: str | None = None
    task_id: str | None = None
    served_at: int | None = None


@dataclass
class ConstructionState:
    pools: dict[str, Pool]
    progress: dict[str, float]
    stocks: dict[str, float]
    crane_queue: list[CraneRequest]
    agent_statuses: dict[str, AgentStatus]
    crane_log: list[CraneRequest] = field(default_factory=list)
    crane_assisted: set[str] = field(default_factory=set)
    start_tick: dict[str, int] = field(default_factory=dict)
    end_tick: dict[str, int] = field(default_factory=dict)

    def count(self, pool: Pool) -> int:
        return sum(1 for p in self.pools.values() if p is pool)

    @property
    def all_done(self) -> bool:
        return all(p is Pool.END for p in self.pools.values())


def initial_construction_state(scenario: Scenario, infinite_stock: bool = False) -> ConstructionState:
    stocks = {
        s.id: (float("inf") if infinite_stock else float(s.initial_stock)) for s in scenario.storages
    }
    return ConstructionState(
        pools={t.id: Pool.WAIT for t in scenario.tasks},
        progress={t.id: 0.0 for t in scenario.tasks},
        stocks=stocks,
        crane_queue=[],
        agent_statuses={a.id: AgentStatus() for a in scenario.crews},
    )


def promote_tasks(state: ConstructionState, scenario: Scenario) -> ConstructionState:
    """Move every wait task whose predecessors have all ended into the queue."""
    pools = state.pools
    promoted = [
        t.id
        for t in scenario.tasks
        if pools[t.id] is Pool.WAIT and all(pools[p] is Pool.END for p in t.predecessors)
    ]
    for tid in promoted:
        pools[tid] = Pool.QUEUE
    return state


def project_to_components(state: ConstructionState, scenario: Scenario) -> dict[str, dict[str, list[str]]]:
    out = {c.id: {"executable": [], "performing": []} for c in scenario.components}
    for t in scenario.tasks:
        p = state.pools[t.id]
        if p is Pool.QUEUE:
            out[t.component_id]["executable"].append(t.id)
        elif p is Pool.ON:
            out[t.component_id]["performing"].append(t.id)
    return out


def executable_targets(state: ConstructionState, scenario: Scenario, crew_type: str) -> list[str]:
    """Components with a queued task for this crew type, or ``[outlet]`` if none remain at all.

    Tasks that exist only in the wait pool yield an empty list: work is
    pending but nothing can start yet.
    """
    task_type = TASK_FOR_CREW[crew_type]
    comps: list[str] = []
    pending = False
    for t in scenario.tasks:
        if t.task_type != task_type:
            continue
        p = state.pools[t.id]
        if p is Pool.QUEUE:
            if t.component_id not in comps:
                comps.append(t.component_id)
        elif p is Pool.WAIT:
            pending = True
    if comps:
        return comps
    return [] if pending else [OUTLET_ID]


def queued_task_on(state: ConstructionState, scenario: Scenario, component_id: str, crew_type: str) -> str | None:
    task_type = TASK_FOR_CREW[crew_type]
    for t in scenario.tasks_by_component.get(component_id, ()):
        if t.task_type == task_type and state.pools[t.id] is Pool.QUEUE:
            return t.id
    return None


def advance_task(state: ConstructionState, scenario: Scenario, task_id: str, delta_quantity: float,
                 tick: int | None = None) -> ConstructionState:
    if state.pools[task_id] is not Pool.ON:
        raise ContractViolation(f"task {task_id} is not in the on pool")
    if delta_quantity < 0:
        raise ContractViolation("delta_quantity must be non-negative")
    q = scenario.task_by_id[task_id].work_quantity
    state.progress[task_id] = min(q, state.progress[task_id] + delta_quantity)
    if state.progress[task_id] >= q:
        state.pools[task_id] = Pool.END
        if tick is not None:
            state.end_tick[task_id] = tick
    return state


def crew_type_of_task(scenario: Scenario, task_id: str) -> str:
    return CREW_FOR_TASK[scenario.task_by_id[task_id].task_type]


def serve_crane(state: ConstructionState, scenario: Scenario, tick: int, instant: bool = False) -> list[CraneRequest]:
    """Serve the head request once its lift has finished; single crane, FIFO.

    A lift starts when the request is issued or when the previous lift ends,
    whichever is later. Served material requests refill the storage to
    capacity; task assists mark the task as assisted. Returns served requests
    so the caller can release the waiting agents.
    """
    served: list[CraneRequest] = []
    lift = scenario.crane.lift_duration
    while state.crane_queue:
        head = state.crane_queue[0]
        last_end = state.crane_log[-1].served_at if state.crane_log else None
        start = head.issued_at if last_end is None else max(head.issued_at, last_end)
        done_at = start if instant else start + lift
        if tick < done_at:
            break
        head.served_at = int(tick if instant else done_at)
        state.crane_queue.pop(0)
        state.crane_log.append(head)
        served.append(head)
        if head.kind == "material" and head.storage_id is not None:
            state.stocks[head.storage_id] = max(
                state.stocks[head.storage_id], scenario.storage_by_id[head.storage_id].capacity
            )
        elif head.kind == "task_assist" and head.task_id is not None:
            state.crane_assisted.add(head.task_id)
        status = state.agent_statuses.get(head.agent_id)
        if status is not None and status.mode is Mode.WAITING:
            status.mode = Mode.FETCHING if head.kind == "material" else Mode.TASKING
        if not instant:
            # one lift per tick at most
            break
    return served
