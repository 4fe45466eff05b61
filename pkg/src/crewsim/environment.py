"""Episode orchestration: one tick moves agents, applies the decision table, serves the crane."""

from __future__ import annotations

import json
import pickle
from dataclasses import dataclass, field, replace

import numpy as np

from .knowledge import (
    Dynamics,
    apply_transition,
    decide,
    feasible_targets,
    feasible_task_on,
    idle_cause,
)
from .perception import (
    PerceptionConfig,
    StaticScene,
    assemble_evaluation_obs,
    eval_obs_size,
    global_summary,
    global_summary_size,
    reaching_obs,
)
from .physics import AgentPose, CongestionArea, MotionCommand, PhysicalState, invaders_in_area, step_movement, \
    storage_area_index
from .policy import ReachAction, action_to_command, target_values
from .rewards import EvalRewardTerms, ReachEvents, RewardConfig, RewardSample, evaluation_reward, reaching_reward
from .scenario import OUTLET_ID, Rect, Scenario
from .taskflow import ConstructionState, ContractViolation, Mode, Pool, initial_construction_state, promote_tasks, \
    serve_crane

STAGE1 = Dynamics(instant_tasks=True, consume_materials=True, instant_crane=True, infinite_stock=True)
SEGMENT_KINDS = ("idle", "navigating", "tasking", "fetching_or_waiting")


@dataclass(frozen=True)
class EnvConfig:
    max_ticks: int = 60000
    k_reeval: int = 300
    dynamics: Dynamics = Dynamics()
    perception: PerceptionConfig = PerceptionConfig()
    rewards: RewardConfig = RewardConfig()
    record_trace: bool = False

    @property
    def stage(self) -> int:
        return 1 if self.dynamics.instant_tasks else 2


def apply_stage1(cfg: EnvConfig) -> EnvConfig:
    """Instant tasks, bottomless storages, instant crane; crews still carry and use materials."""
    return replace(cfg, dynamics=replace(STAGE1, dt=cfg.dynamics.dt))


def apply_stage2(cfg: EnvConfig) -> EnvConfig:
    return replace(cfg, dynamics=Dynamics(dt=cfg.dynamics.dt))


@dataclass
class AgentStats:
    navigating: int = 0
    tasking: int = 0
    fetching: int = 0
    waiting: int = 0
    idle_pre: int = 0
    idle_area: int = 0
    idle_other: int = 0
    deregistered: int = 0
    reach_decisions: int = 0
    eval_decisions: int = 0
    collisions: int = 0
    path_length: float = 0.0
    arrivals: int = 0

    @property
    def idle(self) -> int:
        return self.idle_pre + self.idle_area + self.idle_other

    @property
    def live_ticks(self) -> int:
        return self.navigating + self.tasking + self.fetching + self.waiting + self.idle


@dataclass
class StepResult:
    rewards: dict[str, RewardSample]
    team_reward: EvalRewardTerms
    terminated: bool
    actions: dict[str, str] = field(default_factory=dict)


class ConstructionEnv:
    """A single mutable episode. Create with :func:`reset`."""

    def __init__(self, scenario: Scenario, cfg: EnvConfig, seed: int):
        self.scenario = scenario
        self.cfg = cfg
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.scene = StaticScene(scenario)
        self.agent_ids = [a.id for a in scenario.crews]
        self.tick = 0
        dyn = cfg.dynamics
        self.cstate: ConstructionState = initial_construction_state(scenario, infinite_stock=dyn.infinite_stock)
        poses = {a.id: AgentPose(a.spawn[0], a.spawn[1], a.spawn_heading % 360.0) for a in scenario.crews}
        radii = {a.id: a.radius for a in scenario.crews}
        walls = Rect(0.0, 0.0, scenario.plane_width, scenario.plane_height)
        areas = [
            CongestionArea(s.position, s.area_radius, storage_area_index(self.cstate.stocks[s.id], s.capacity),
                           "storage", s.id)
            for s in scenario.storages
        ]
        self.pstate = PhysicalState(poses, radii, walls, areas)
        self.stats = {a: AgentStats() for a in self.agent_ids}
        self.segments: dict[str, list[list]] = {a: [] for a in self.agent_ids}
        self.evaluable: dict[str, bool] = {a: False for a in self.agent_ids}
        self.fresh_scope: dict[str, bool] = {a: False for a in self.agent_ids}
        self.ticks_since_eval: dict[str, int] = {a: 0 for a in self.agent_ids}
        self.eval_credit: dict[str, float] = {a: 0.0 for a in self.agent_ids}
        self.inside: dict[str, set[str]] = {a: set() for a in self.agent_ids}
        self.last_invaders: dict[str, int] = {a: 0 for a in self.agent_ids}
        self.last_contacts: dict[str, list[str]] = {a: [] for a in self.agent_ids}
        self.arrivals: list[tuple[int, str, str]] = []
        self.trace: list[str] = []
        self.movement_steps = 0
        self.terminated = False

    # ------------------------------------------------------------ queries

    @property
    def n_live(self) -> int:
        return sum(1 for a in self.agent_ids if self.cstate.agent_statuses[a].mode is not Mode.DEREGISTERED)

    def status(self, agent_id: str):
        return self.cstate.agent_statuses[agent_id]

    def acting_agents(self) -> list[str]:
        """Agents that move this tick: reaching with a non-empty target scope."""
        out = []
        for a in self.agent_ids:
            st = self.cstate.agent_statuses[a]
            if st.mode is Mode.REACHING and st.target_scope:
                out.append(a)
        return out

    def due_evaluations(self) -> list[str]:
        return [a for a in self.agent_ids if self._gate(a)]

    def _gate(self, a: str) -> bool:
        st = self.cstate.agent_statuses[a]
        if not self.evaluable[a] or st.mode is not Mode.REACHING or not st.target_scope:
            return False
        return self.fresh_scope[a] or self.ticks_since_eval[a] >= self.cfg.k_reeval

    def normalized_targets(self, agent_id: str) -> dict[str, tuple[float, float]]:
        w, h = self.scenario.plane_width, self.scenario.plane_height
        st = self.cstate.agent_statuses[agent_id]
        return {c: (self.scenario.position_of(c)[0] / w, self.scenario.position_of(c)[1] / h) for c in st.target_scope}

    def reach_obs(self, agent_id: str) -> np.ndarray:
        st = self.cstate.agent_statuses[agent_id]
        spec = self.scenario.crew_by_id[agent_id]
        return reaching_obs(self.pstate, self.scenario, agent_id, st.target_scope, st.target_values, spec.v_f,
                            self.cfg.perception, self.scene)

    def eval_obs(self, agent_id: str) -> np.ndarray:
        return assemble_evaluation_obs(self.cstate, self.pstate, self.scenario, agent_id)

    def summary(self) -> np.ndarray:
        return global_summary(self.cstate, self.pstate, self.scenario, self.tick, self.cfg.max_ticks)

    @property
    def reach_obs_size(self) -> int:
        return self.cfg.perception.obs_size

    @property
    def eval_obs_size(self) -> int:
        return eval_obs_size(self.scenario)

    @property
    def summary_size(self) -> int:
        return global_summary_size(self.scenario)

    # ------------------------------------------------------------ evaluation

    def set_target_values(self, agent_id: str, values: dict[str, float]) -> None:
        """Install priorities for the agent's current scope and restart its re-evaluation counter."""
        st = self.cstate.agent_statuses[agent_id]
        if st.mode is not Mode.REACHING or not st.target_scope:
            raise ContractViolation(f"agent {agent_id} has no target scope to value")
        st.target_values = {c: float(values.get(c, 0.0)) for c in st.target_scope}
        self.fresh_scope[agent_id] = False
        self.ticks_since_eval[agent_id] = 0
        self.eval_credit[agent_id] = 0.0
        self.stats[agent_id].eval_decisions += 1

    def apply_eval_action(self, agent_id: str, action) -> dict[str, float]:
        vals = target_values(action, self.normalized_targets(agent_id))
        self.set_target_values(agent_id, vals)
        return vals

    def _refresh_scope(self, a: str) -> None:
        st = self.cstate.agent_statuses[a]
        spec = self.scenario.crew_by_id[a]
        scope = feasible_targets(self.cstate, self.scenario, spec.crew_type)
        st.target_scope = list(scope)
        if scope == [OUTLET_ID]:
            st.target_values = {OUTLET_ID: 1.0}
            self.evaluable[a] = False
        else:
            st.target_values = {}
            self.evaluable[a] = bool(scope)

    def settle_uniform(self) -> None:
        """Agents whose gate fired without a valuation get uniform priorities."""
        for a in self.agent_ids:
            if self._gate(a):
                if not self.fresh_scope[a]:
                    self._refresh_scope(a)
                    if not self.cstate.agent_statuses[a].target_scope or not self.evaluable[a]:
                        continue
                self.set_target_values(a, {c: 1.0 for c in self.cstate.agent_statuses[a].target_scope})

    def prepare_evaluations(self) -> list[str]:
        """Refresh stale scopes of agents due for re-evaluation and return who is due."""
        due = []
        for a in self.agent_ids:
            if self._gate(a):
                if not self.fresh_scope[a]:
                    self._refresh_scope(a)
                    self.fresh_scope[a] = True
                if self._gate(a):
                    due.append(a)
        return due

    # ------------------------------------------------------------ reset / step

    def _initial_pass(self) -> None:
        promote_tasks(self.cstate, self.scenario)
        for a in self.agent_ids:
            self._construction_for(a, {})
        promote_tasks(self.cstate, self.scenario)
        self.terminated = self.cstate.all_done or self.tick >= self.cfg.max_ticks

    def _classify(self, a: str) -> str:
        st = self.cstate.agent_statuses[a]
        s = self.stats[a]
        if st.mode is Mode.DEREGISTERED:
            s.deregistered += 1
            return "idle"
        if st.mode is Mode.TASKING:
            s.tasking += 1
            return "tasking"
        if st.mode is Mode.FETCHING:
            s.fetching += 1
            return "fetching_or_waiting"
        if st.mode is Mode.WAITING:
            s.waiting += 1
            return "fetching_or_waiting"
        if st.target_scope:
            s.navigating += 1
            return "navigating"
        cause = idle_cause(self.cstate, self.scenario, self.scenario.crew_by_id[a].crew_type)
        if cause == "predecessor":
            s.idle_pre += 1
            return "idle_pre"
        if cause == "space":
            s.idle_area += 1
            return "idle_area"
        s.idle_other += 1
        return "idle_other"

    def _segment(self, a: str, kind: str) -> None:
        seg = self.segments[a]
        if seg and seg[-1][0] == kind and seg[-1][2] == self.tick:
            seg[-1][2] = self.tick + 1
        else:
            seg.append([kind, self.tick, self.tick + 1])

    def _prune_scope(self, a: str) -> None:
        st = self.cstate.agent_statuses[a]
        if st.mode is not Mode.REACHING or st.paused_task is not None or not self.evaluable[a]:
            return
        crew = self.scenario.crew_by_id[a].crew_type
        kept = [c for c in st.target_scope if feasible_task_on(self.cstate, self.scenario, c, crew) is not None]
        if len(kept) != len(st.target_scope):
            st.target_scope = kept
            st.target_values = {c: v for c, v in st.target_values.items() if c in kept}
            if not kept:
                self.evaluable[a] = False

    def _construction_for(self, a: str, arrivals: dict[str, tuple[str, float]]) -> str:
        st = self.cstate.agent_statuses[a]
        if st.mode is Mode.DEREGISTERED:
            return "none"
        dyn = self.cfg.dynamics
        out = decide(a, self.cstate, self.pstate, self.scenario, dyn)
        if out.code == "noop":
            return "noop"
        if out.arrived is not None:
            arrivals[a] = (out.arrived, float(st.target_values.get(out.arrived, 0.0)))
            self.arrivals.append((self.tick, a, out.arrived))
            self.stats[a].arrivals += 1
        if out.code == "a_c2":
            area = self.pstate.area_of(out.action.payload["task"])
            self.last_invaders[a] = invaders_in_area(self.pstate, area, a) if area is not None else 0
        apply_transition(out, a, self.cstate, self.pstate, self.scenario, dyn, self.tick, self.rng)
        if out.code == "a_c10" and not out.action.payload.get("deregister"):
            scope = list(out.new_target_scope or ())
            self.evaluable[a] = bool(scope) and scope != [OUTLET_ID]
            self.fresh_scope[a] = self.evaluable[a]
            self.ticks_since_eval[a] = 0
        else:
            self.evaluable[a] = False
            self.fresh_scope[a] = False
        if dyn.instant_crane and out.code in ("a_c7", "a_c8"):
            serve_crane(self.cstate, self.scenario, self.tick, instant=True)
        return out.code

    def step(self, reach_actions: dict | None = None, eval_actions: dict | None = None) -> StepResult:
        if self.terminated:
            raise ContractViolation("episode already terminated")
        reach_actions = reach_actions or {}
        sc = self.scenario
        dyn = self.cfg.dynamics
        dt = dyn.dt

        for a, act in (eval_actions or {}).items():
            self.apply_eval_action(a, act)
        self.settle_uniform()

        acting = self.acting_agents()
        acting_set = set(acting)
        for a in reach_actions:
            if a not in acting_set:
                raise ContractViolation(f"agent {a} is not due to act (mode {self.status(a).mode.value})")

        categories = {}
        for a in self.agent_ids:
            cat = self._classify(a)
            categories[a] = cat
            self._segment(a, "idle" if cat.startswith("idle") else cat)

        # movement
        events = {a: ReachEvents(holding_target=True) for a in acting}
        for a in acting:
            self.stats[a].reach_decisions += 1
            act = reach_actions.get(a)
            spec = sc.crew_by_id[a]
            if act is None:
                cmd = MotionCommand(0.0, 0.0, 0.0)
            elif isinstance(act, MotionCommand):
                cmd = act
            else:
                if not isinstance(act, ReachAction):
                    act = ReachAction(*act)
                cmd = action_to_command(act, spec)
            st = self.cstate.agent_statuses[a]
            mv = step_movement(self.pstate, a, cmd, dt, spec, carrying=st.load > 0)
            ev = events[a]
            ev.wall = mv.wall
            ev.agents = mv.agents
            self.last_contacts[a] = mv.agents
            self.movement_steps += 1
            self.stats[a].path_length += mv.displacement
            if mv.wall or mv.agents:
                self.stats[a].collisions += 1
            if self.evaluable[a]:
                self.ticks_since_eval[a] += 1
        for a in self.agent_ids:
            if a in self.pstate.inactive:
                self.inside[a] = set()
                continue
            pos = self.pstate.poses[a].position
            now = {ar.owner for ar in self.pstate.congestion_areas if ar.contains(pos)}
            if a in events:
                st = self.cstate.agent_statuses[a]
                own = set(st.target_scope)
                if st.paused_task:
                    own.add(st.paused_task)
                for owner in sorted(now - self.inside[a]):
                    if owner in own:
                        continue
                    if owner in sc.storage_by_id:
                        events[a].storage_areas_entered.append(owner)
                    else:
                        # an active task area on one of the agent's own target components is not a collision
                        if sc.task_by_id[owner].component_id in own:
                            continue
                        events[a].task_areas_entered.append(owner)
            self.inside[a] = now

        # construction decisions
        for a in self.agent_ids:
            self._prune_scope(a)
        arrivals: dict[str, tuple[str, float]] = {}
        codes = {}
        for a in self.agent_ids:
            codes[a] = self._construction_for(a, arrivals)
        serve_crane(self.cstate, sc, self.tick, instant=dyn.instant_crane)
        promote_tasks(self.cstate, sc)

        self.tick += 1
        self.terminated = self.cstate.all_done or self.tick >= self.cfg.max_ticks

        n_pre = sum(1 for c in categories.values() if c == "idle_pre")
        n_area = sum(1 for c in categories.values() if c == "idle_area")
        n_idle = sum(1 for c in categories.values() if c.startswith("idle"))
        n_live = sum(1 for c in categories.values() if c != "idle")
        team = evaluation_reward(n_pre, n_area, n_idle, n_live, self.cfg.rewards, self.terminated,
                                 self.tick, self.movement_steps)
        for a in self.agent_ids:
            self.eval_credit[a] += team.total

        rewards = {}
        for a in self.agent_ids:
            ev = events.get(a, ReachEvents())
            val = None
            if a in arrivals:
                ev.arrived, val = arrivals[a]
            rewards[a] = RewardSample(team, reaching_reward(ev, val, self.cfg.rewards))

        if self.cfg.record_trace:
            self._record(categories, codes, reach_actions, rewards)
        return StepResult(rewards, team, self.terminated, codes)

    def _record(self, categories, codes, reach_actions, rewards) -> None:
        arrived = {}
        for t, a, target in reversed(self.arrivals):
            if t != self.tick - 1:
                break
            arrived[a] = target
        for a in self.agent_ids:
            p = self.pstate.poses[a]
            st = self.cstate.agent_statuses[a]
            act = reach_actions.get(a)
            if isinstance(act, ReachAction):
                act = list(act.indices)
            elif isinstance(act, MotionCommand):
                act = [round(act.forward_rate, 6), round(act.lateral_rate, 6), round(act.turn_rate, 6)]
            rec = {
                "tick": self.tick - 1,
                "agent": a,
                "mode": st.mode.value,
                "category": categories[a],
                "x": round(p.x, 6),
                "y": round(p.y, 6),
                "heading": round(p.heading, 6),
                "construction": codes[a],
                "arrived": arrived.get(a),
                "reach": act,
                "r_r": round(rewards[a].r_r.total, 9),
                "r_e": round(rewards[a].r_e.total, 9),
            }
            self.trace.append(json.dumps(rec, sort_keys=True))

    # ------------------------------------------------------------ persistence

    def snapshot(self) -> bytes:
        return pickle.dumps(self)

    @staticmethod
    def restore(blob: bytes) -> ConstructionEnv:
        return pickle.loads(blob)

    def metrics(self) -> dict:
        per_agent = {}
        for a in self.agent_ids:
            s = self.stats[a]
            per_agent[a] = {
                "reaching_steps": s.navigating,
                "idle_steps": s.idle,
                "idle_pre": s.idle_pre,
                "idle_area": s.idle_area,
                "idle_other": s.idle_other,
                "tasking": s.tasking,
                "fetching": s.fetching,
                "waiting": s.waiting,
                "path_length": round(s.path_length, 6),
            }
        return {
            "episode_ticks": self.tick,
            "completed": bool(self.cstate.all_done),
            "completed_tasks": self.cstate.count(Pool.END),
            "total_tasks": len(self.scenario.tasks),
            "movement_steps": self.movement_steps,
            "reaching_steps": sum(s.navigating for s in self.stats.values()),
            "idle_steps": sum(s.idle for s in self.stats.values()),
            "idle_area_steps": sum(s.idle_area for s in self.stats.values()),
            "idle_pre_steps": sum(s.idle_pre for s in self.stats.values()),
            "agents": per_agent,
        }


Episode = ConstructionEnv


def reset(scenario: Scenario, cfg: EnvConfig | None = None, seed: int = 0) -> ConstructionEnv:
    env = ConstructionEnv(scenario, cfg or EnvConfig(), seed)
    env._initial_pass()
    return env


def run_episode(env: ConstructionEnv, controller, valuer=None, max_steps: int | None = None) -> ConstructionEnv:
    """Drive an episode to termination.

    ``controller(env, agent_ids) -> {agent: ReachAction | MotionCommand}`` and
    optional ``valuer(env, agent_id) -> {target: value}``; without a valuer
    every target gets the same priority.
    """
    n = 0
    while not env.terminated and (max_steps is None or n < max_steps):
        if valuer is not None:
            for a in env.prepare_evaluations():
                env.set_target_values(a, valuer(env, a))
        else:
            env.settle_uniform()
        acting = env.acting_agents()
        env.step(controller(env, acting) if acting else {})
        n += 1
    return env
