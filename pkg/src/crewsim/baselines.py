"""Comparison methods: closed-form target priority, a genetic algorithm over task priorities,
and a scripted steering controller used when no trained reaching policy is supplied."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import ConstructionEnv, EnvConfig, reset, run_episode
from .physics import MotionCommand
from .policy import PolicyParams, ReachAction, eval_policy_act, reach_policy_act, target_values
from .scenario import OUTLET_ID, TASK_FOR_CREW, Scenario
from .taskflow import Pool


# ---------------------------------------------------------------- steering

def _angle_diff(a: float, b: float) -> float:
    return (a - b + 180.0) % 360.0 - 180.0


@dataclass
class GreedyController:
    """Turn toward the best-valued target and drive; sidestep after bumping into a body."""

    align_deg: float = 10.0
    sidestep_ticks: int = 4
    seed: int = 0
    _escape: dict[str, tuple[int, float]] = field(default_factory=dict)
    _rng: np.random.Generator | None = None

    def target_of(self, env: ConstructionEnv, a: str) -> str:
        st = env.status(a)
        pose = env.pstate.poses[a]

        def key(c):
            p = env.scenario.position_of(c)
            return (-st.target_values.get(c, 0.0), math.dist(p, (pose.x, pose.y)), c)

        return min(st.target_scope, key=key)

    def command(self, env: ConstructionEnv, a: str) -> MotionCommand:
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        spec = env.scenario.crew_by_id[a]
        pose = env.pstate.poses[a]
        tx, ty = env.scenario.position_of(self.target_of(env, a))
        want = math.degrees(math.atan2(ty - pose.y, tx - pose.x)) % 360.0
        err = _angle_diff(want, pose.heading)
        step = spec.v_tu * env.cfg.dynamics.dt
        turn = math.copysign(min(abs(err), step), err) / env.cfg.dynamics.dt if abs(err) > 1e-9 else 0.0
        if abs(err) < self.align_deg:
            fwd = spec.v_f
        elif abs(err) < 45.0:
            fwd = 0.3 * spec.v_f
        else:
            fwd = 0.0
        lat = 0.0
        left, side = self._escape.get(a, (0, 0.0))
        if left > 0:
            lat = side * spec.v_l
            self._escape[a] = (left - 1, side)
        return MotionCommand(fwd, lat, turn)

    def notice_contact(self, a: str) -> None:
        if self._escape.get(a, (0, 0.0))[0] <= 0:
            side = 1.0 if self._rng is None or self._rng.random() < 0.5 else -1.0
            self._escape[a] = (self.sidestep_ticks, side)

    def __call__(self, env: ConstructionEnv, agents) -> dict:
        out = {}
        for a in agents:
            if env.last_contacts.get(a):
                self.notice_contact(a)
            out[a] = self.command(env, a)
        return out


def policy_controller(params: PolicyParams, seed: int = 0, deterministic: bool = False):
    rng = np.random.default_rng(seed)

    def control(env: ConstructionEnv, agents) -> dict:
        return {a: reach_policy_act(params.reach_actor, env.reach_obs(a), rng, deterministic) for a in agents}

    return control


def random_controller(seed: int = 0):
    """Uniform over the joint discrete action set; the reference point for trained steering."""
    rng = np.random.default_rng(seed)

    def control(env: ConstructionEnv, agents) -> dict:
        return {a: ReachAction(int(rng.integers(4)), int(rng.integers(3)), int(rng.integers(3))) for a in agents}

    return control


def steps_to_target(env: ConstructionEnv) -> list[int]:
    """Length of every navigating stretch; one still open when the episode ended counts as censored."""
    return [end - start for segs in env.segments.values() for kind, start, end in segs if kind == "navigating"]


def policy_valuer(params: PolicyParams, seed: int = 0, deterministic: bool = True):
    """Target priorities from the trained valuation level."""
    rng = np.random.default_rng(seed)

    def valuer(env: ConstructionEnv, agent_id: str) -> dict[str, float]:
        act = eval_policy_act(params.eval_actor, params.eval_log_std, env.eval_obs(agent_id), rng, deterministic)
        return target_values(act, env.normalized_targets(agent_id))

    return valuer


# ---------------------------------------------------------------- closed-form priority

@dataclass(frozen=True)
class PriorityWeights:
    beta1: float = 1.0
    beta2: float = 0.5
    beta3: float = -1.0


@dataclass(frozen=True)
class PriorityFeatures:
    suc: float
    dis: float
    spa: float


def priority_value(f: PriorityFeatures, maxima: PriorityFeatures, w: PriorityWeights = PriorityWeights()) -> float:
    """Weighted successor, proximity and space-conflict terms, each normalized by the scope maximum.

    A term whose scope maximum is zero contributes nothing.
    """
    suc = f.suc / maxima.suc if maxima.suc > 0 else 0.0
    dis = (1.0 - f.dis / maxima.dis) if maxima.dis > 0 else 0.0
    spa = f.spa / maxima.spa if maxima.spa > 0 else 0.0
    return w.beta1 * suc + w.beta2 * dis + w.beta3 * spa


def scope_maxima(features: dict[str, PriorityFeatures]) -> PriorityFeatures:
    return PriorityFeatures(max(f.suc for f in features.values()), max(f.dis for f in features.values()),
                            max(f.spa for f in features.values()))


def target_features(env: ConstructionEnv, agent_id: str) -> dict[str, PriorityFeatures]:
    sc = env.scenario
    ttype = TASK_FOR_CREW[sc.crew_by_id[agent_id].crew_type]
    pose = env.pstate.poses[agent_id]
    succ = sc.transitive_successor_count
    out = {}
    for c in env.status(agent_id).target_scope:
        if c == OUTLET_ID:
            continue
        task = next((t for t in sc.tasks_by_component.get(c, ()) if t.task_type == ttype
                     and env.cstate.pools[t.id] is Pool.QUEUE), None)
        if task is None:
            continue
        spa = sum(1 for o in sc.space_conflicts[task.id] if env.cstate.pools[o] is Pool.QUEUE)
        out[c] = PriorityFeatures(float(succ[task.id]), math.dist(sc.position_of(c), (pose.x, pose.y)), float(spa))
    return out


def priority_valuer(weights: PriorityWeights = PriorityWeights()):
    def valuer(env: ConstructionEnv, agent_id: str) -> dict[str, float]:
        feats = target_features(env, agent_id)
        if not feats:
            return {}
        m = scope_maxima(feats)
        return {c: priority_value(f, m, weights) for c, f in feats.items()}

    return valuer


def gene_valuer(genes: dict[str, float]):
    """Value each target by the gene of the crew's queued task there."""

    def valuer(env: ConstructionEnv, agent_id: str) -> dict[str, float]:
        sc = env.scenario
        ttype = TASK_FOR_CREW[sc.crew_by_id[agent_id].crew_type]
        out = {}
        for c in env.status(agent_id).target_scope:
            for t in sc.tasks_by_component.get(c, ()):
                if t.task_type == ttype and env.cstate.pools[t.id] is Pool.QUEUE:
                    out[c] = genes[t.id]
                    break
        return out

    return valuer


def make_controller(reach_params: PolicyParams | None, seed: int):
    if reach_params is None:
        return GreedyController(seed=seed), "scripted"
    return policy_controller(reach_params, seed), "trained"


def run_priority_baseline(scenario: Scenario, cfg: EnvConfig | None = None, seed: int = 0,
                          reach_params: PolicyParams | None = None,
                          weights: PriorityWeights = PriorityWeights()) -> ConstructionEnv:
    env = reset(scenario, cfg or EnvConfig(), seed)
    controller, _ = make_controller(reach_params, seed)
    return run_episode(env, controller, priority_valuer(weights))


# ---------------------------------------------------------------- genetic algorithm

@dataclass(frozen=True)
class GAConfig:
    population: int = 40
    generations: int = 100
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.1
    elitism: int = 2
    tournament: int = 3
    w_idle: float = 0.1
    seed: int = 0
    env_seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.elitism < 1:
            raise ValueError("elitism must be at least 1")
        if self.elitism > self.population:
            raise ValueError("elitism cannot exceed the population")


@dataclass
class Chromosome:
    genes: np.ndarray
    fitness: float = math.inf
    ticks: int = 0
    idle: int = 0


@dataclass
class GAResult:
    best: Chromosome
    task_ids: list[str]
    best_history: list[float]
    mean_history: list[float]

    def genes_by_task(self) -> dict[str, float]:
        return dict(zip(self.task_ids, self.best.genes.tolist()))


def evaluate_genes(scenario: Scenario, genes: dict[str, float], cfg: EnvConfig | None = None, env_seed: int = 0,
                   reach_params: PolicyParams | None = None) -> ConstructionEnv:
    env = reset(scenario, cfg or EnvConfig(), env_seed)
    controller, _ = make_controller(reach_params, env_seed)
    return run_episode(env, controller, gene_valuer(genes))


def ga_optimize(scenario: Scenario, ga: GAConfig = GAConfig(), cfg: EnvConfig | None = None,
                reach_params: PolicyParams | None = None, callback=None) -> GAResult:
    """Minimize episode ticks + w_idle * idle steps over per-task priority genes."""
    rng = np.random.default_rng(ga.seed)
    ids = [t.id for t in scenario.tasks]
    n = len(ids)
    cache: dict[bytes, tuple[float, int, int]] = {}

    def fitness(ch: Chromosome) -> None:
        key = ch.genes.tobytes()
        if key not in cache:
            env = evaluate_genes(scenario, dict(zip(ids, ch.genes.tolist())), cfg, ga.env_seed, reach_params)
            m = env.metrics()
            cache[key] = (m["episode_ticks"] + ga.w_idle * m["idle_steps"], m["episode_ticks"], m["idle_steps"])
        ch.fitness, ch.ticks, ch.idle = cache[key]

    pop = [Chromosome(rng.random(n)) for _ in range(ga.population)]
    for ch in pop:
        fitness(ch)
    best_hist: list[float] = []
    mean_hist: list[float] = []
    best = min(pop, key=lambda c: c.fitness)

    def tournament() -> Chromosome:
        idx = rng.integers(0, len(pop), ga.tournament)
        return min((pop[i] for i in idx), key=lambda c: c.fitness)

    for gen in range(ga.generations):
        ranked = sorted(pop, key=lambda c: c.fitness)
        nxt = [Chromosome(c.genes.copy(), c.fitness, c.ticks, c.idle) for c in ranked[:ga.elitism]]
        while len(nxt) < ga.population:
            p1, p2 = tournament(), tournament()
            g1, g2 = p1.genes.copy(), p2.genes.copy()
            if rng.random() < ga.crossover_rate:
                mask = rng.random(n) < 0.5
                g1[mask], g2[mask] = p2.genes[mask], p1.genes[mask]
            for g in (g1, g2):
                mut = rng.random(n) < ga.mutation_rate
                g[mut] = np.clip(g[mut] + rng.normal(0.0, ga.mutation_sigma, int(mut.sum())), 0.0, 1.0)
                if len(nxt) < ga.population:
                    ch = Chromosome(g)
                    fitness(ch)
                    nxt.append(ch)
        pop = nxt
        gen_best = min(pop, key=lambda c: c.fitness)
        if gen_best.fitness < best.fitness:
            best = gen_best
        best_hist.append(best.fitness)
        mean_hist.append(float(np.mean([c.fitness for c in pop])))
        if callback is not None:
            callback(gen, best, mean_hist[-1])
    return GAResult(best, ids, best_hist, mean_hist)
