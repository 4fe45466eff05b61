"""Reward signals for the valuation level (team efficiency) and the reaching level (per agent)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class RewardConfig:
    w_idle_pre: float = 0.01
    w_idle_area: float = 0.01
    w_efficiency: float = 0.002
    w_episode: float = 1.0
    w_path: float = 1.0
    # normalizers for the terminal terms; episode length and movement steps of a typical run
    t_ref: float = 30000.0
    m_ref: float = 100000.0
    r_collision: float = 1.0
    eta_a: float = 0.5
    eta_b: float = 0.05
    k: float = 2.0
    r_time: float = 0.005
    gamma: float = 0.99

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.eta_a > self.eta_b > 0:
            raise ValueError("need eta_a > eta_b > 0")
        if self.k <= 0:
            raise ValueError("k must be positive")


@dataclass(frozen=True)
class EvalRewardTerms:
    idle_pre: float = 0.0
    idle_area: float = 0.0
    efficiency: float = 0.0
    episode: float = 0.0
    path: float = 0.0

    @property
    def total(self) -> float:
        return self.idle_pre + self.idle_area + self.efficiency + self.episode + self.path

    def as_dict(self) -> dict[str, float]:
        return {**asdict(self), "total": self.total}


@dataclass(frozen=True)
class ReachRewardTerms:
    collision: float = 0.0
    reach: float = 0.0
    time: float = 0.0

    @property
    def total(self) -> float:
        return self.collision + self.reach + self.time

    def as_dict(self) -> dict[str, float]:
        return {**asdict(self), "total": self.total}


@dataclass
class ReachEvents:
    """What happened to one agent during one tick."""

    wall: bool = False
    agents: list[str] = field(default_factory=list)
    task_areas_entered: list[str] = field(default_factory=list)
    storage_areas_entered: list[str] = field(default_factory=list)
    arrived: str | None = None
    holding_target: bool = False


@dataclass(frozen=True)
class RewardSample:
    r_e: EvalRewardTerms
    r_r: ReachRewardTerms


def evaluation_reward(n_idle_pre: int, n_idle_area: int, n_idle: int, n_live: int, cfg: RewardConfig,
                      terminal: bool = False, episode_ticks: int = 0, movement_steps: int = 0) -> EvalRewardTerms:
    """Team reward for one tick.

    Idle counts are agents that hold no target because predecessors are
    unfinished (``n_idle_pre``) or because active task areas block every
    candidate (``n_idle_area``); ``n_idle`` counts all idle agents.
    Terminal terms charge the normalized episode length and movement volume.
    """
    frac = n_idle / n_live if n_live > 0 else 0.0
    eff = cfg.w_efficiency * (1.0 - frac) if n_live > 0 else 0.0
    ep = path = 0.0
    if terminal:
        ep = -cfg.w_episode * episode_ticks / cfg.t_ref
        path = -cfg.w_path * movement_steps / cfg.m_ref
    return EvalRewardTerms(-cfg.w_idle_pre * n_idle_pre, -cfg.w_idle_area * n_idle_area, eff, ep, path)


def reaching_reward(events: ReachEvents, target_value: float | None, cfg: RewardConfig) -> ReachRewardTerms:
    """Collision penalties, arrival reward ``k * V`` and a per-tick time cost while a target is held.

    Walls and storage areas use the mild index; bodies and active task areas the strong one.
    """
    n_soft = int(events.wall) + len(events.storage_areas_entered)
    n_hard = len(events.agents) + len(events.task_areas_entered)
    coll = -cfg.r_collision * (cfg.eta_b * n_soft + cfg.eta_a * n_hard)
    reach = cfg.k * target_value if (events.arrived is not None and target_value is not None) else 0.0
    time = -cfg.r_time if events.holding_target else 0.0
    return ReachRewardTerms(coll, reach, time)
