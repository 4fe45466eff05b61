"""Two-level policy: target valuation (continuous desired point) and reaching (discrete motion)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import NetParams, init_mlp, net_forward
from .physics import FORWARD_LEVELS, SIDE_LEVELS, MotionCommand
from .scenario import AgentSpec

BRANCH_SIZES = (len(FORWARD_LEVELS), len(SIDE_LEVELS), len(SIDE_LEVELS))
N_LOGITS = sum(BRANCH_SIZES)
CHECKPOINT_VERSION = 1
HIDDEN = (128, 128)
V_LOWER = 1.0 - 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class EvalAction:
    a_e1: float
    a_e2: float
    log_prob: float
    raw: tuple[float, float] = (0.0, 0.0)  # pre-clamp sample, the quantity the log-prob refers to

    @property
    def point(self) -> tuple[float, float]:
        return (self.a_e1, self.a_e2)


@dataclass(frozen=True)
class ReachAction:
    forward_idx: int
    lateral_idx: int
    turn_idx: int
    log_prob: float = 0.0

    def __post_init__(self):
        for v, n in zip((self.forward_idx, self.lateral_idx, self.turn_idx), BRANCH_SIZES):
            if not 0 <= v < n:
                raise ValueError(f"action index {v} outside [0, {n})")

    @property
    def indices(self) -> tuple[int, int, int]:
        return (self.forward_idx, self.lateral_idx, self.turn_idx)


@dataclass
class PolicyParams:
    reach_actor: NetParams
    reach_critic: NetParams
    eval_actor: NetParams
    eval_critic: NetParams
    eval_log_std: np.ndarray
    step: int = 0
    stage: int = 1
    meta: dict = field(default_factory=dict)

    def copy(self) -> PolicyParams:
        return PolicyParams(self.reach_actor.copy(), self.reach_critic.copy(), self.eval_actor.copy(),
                            self.eval_critic.copy(), self.eval_log_std.copy(), self.step, self.stage, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "step": int(self.step),
            "stage": int(self.stage),
            "meta": self.meta,
            "networks": {
                "reach_actor": self.reach_actor.to_dict(),
                "reach_critic": self.reach_critic.to_dict(),
                "eval_actor": self.eval_actor.to_dict(),
                "eval_critic": self.eval_critic.to_dict(),
            },
            "eval_log_std": self.eval_log_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PolicyParams:
        if d.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint format {d.get('format_version')}")
        n = d["networks"]
        return cls(NetParams.from_dict(n["reach_actor"]), NetParams.from_dict(n["reach_critic"]),
                   NetParams.from_dict(n["eval_actor"]), NetParams.from_dict(n["eval_critic"]),
                   np.asarray(d["eval_log_std"], dtype=float), int(d.get("step", 0)), int(d.get("stage", 1)),
                   dict(d.get("meta", {})))


def init_policy(reach_obs: int, eval_obs: int, summary: int, rng: np.random.Generator,
                hidden=HIDDEN, init_log_std: float = -1.5) -> PolicyParams:
    """Fresh parameters; the desired point starts at the plane centre so initial priorities are positive."""
    h = list(hidden)
    eval_actor = init_mlp([eval_obs, *h, 2], rng)
    eval_actor.biases[-1][:] = 0.5
    return PolicyParams(
        reach_actor=init_mlp([reach_obs, *h, N_LOGITS], rng),
        reach_critic=init_mlp([reach_obs + summary, *h, 1], rng, output_scale=1.0),
        eval_actor=eval_actor,
        eval_critic=init_mlp([eval_obs + summary, *h, 1], rng, output_scale=1.0),
        eval_log_std=np.full(2, init_log_std),
    )


def save_checkpoint(params: PolicyParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict()))


def load_checkpoint(path: str | Path) -> PolicyParams:
    return PolicyParams.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- evaluation level

def gaussian_log_prob(x: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (x - mean) / np.exp(log_std)
    return (-0.5 * z * z - log_std - 0.5 * math.log(2 * math.pi)).sum(axis=-1)


def eval_policy_act(net: NetParams, log_std: np.ndarray, obs: np.ndarray, rng: np.random.Generator,
                    deterministic: bool = False) -> EvalAction:
    mean = net_forward(net, obs)
    std = np.exp(log_std)
    raw = mean.copy() if deterministic else mean + std * rng.standard_normal(2)
    lp = float(gaussian_log_prob(raw, mean, log_std))
    a = np.clip(raw, -1.0, 1.0)
    return EvalAction(float(a[0]), float(a[1]), lp, (float(raw[0]), float(raw[1])))


def target_values(action, targets: dict[str, tuple[float, float]]) -> dict[str, float]:
    """Priority of each target from its distance to the desired point; coords already in [0,1]."""
    a1, a2 = action.point if isinstance(action, EvalAction) else action
    return {k: 1.0 - math.sqrt((a1 - x) ** 2 + (a2 - y) ** 2) for k, (x, y) in targets.items()}


# ---------------------------------------------------------------- reaching level

def split_logits(logits: np.ndarray) -> list[np.ndarray]:
    i, j = BRANCH_SIZES[0], BRANCH_SIZES[0] + BRANCH_SIZES[1]
    return [logits[..., :i], logits[..., i:j], logits[..., j:]]


def log_softmax(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def joint_log_prob(logits: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Sum of branch log-probabilities; ``idx`` is (..., 3)."""
    idx = np.asarray(idx)
    total = 0.0
    for b, lg in enumerate(split_logits(logits)):
        lp = log_softmax(lg)
        total = total + np.take_along_axis(lp, idx[..., b:b + 1], axis=-1)[..., 0]
    return total


def sample_branches(logits: np.ndarray, rng: np.random.Generator, deterministic: bool = False):
    """Sample (B, 3) indices and joint log-probs from (B, 10) logits."""
    logits = np.atleast_2d(logits)
    idx = np.empty((logits.shape[0], 3), dtype=int)
    for b, lg in enumerate(split_logits(logits)):
        if deterministic:
            idx[:, b] = lg.argmax(axis=-1)
            continue
        p = np.exp(log_softmax(lg))
        c = p.cumsum(axis=-1)
        u = rng.random(logits.shape[0])[:, None]
        idx[:, b] = np.minimum((u > c).sum(axis=-1), lg.shape[-1] - 1)
    return idx, joint_log_prob(logits, idx)


def reach_policy_act(net: NetParams, obs: np.ndarray, rng: np.random.Generator,
                     deterministic: bool = False) -> ReachAction:
    logits = net_forward(net, obs)
    idx, lp = sample_branches(logits[None, :], rng, deterministic)
    return ReachAction(int(idx[0, 0]), int(idx[0, 1]), int(idx[0, 2]), float(lp[0]))


def action_to_command(action: ReachAction, spec: AgentSpec) -> MotionCommand:
    return MotionCommand(
        FORWARD_LEVELS[action.forward_idx] * spec.v_f,
        SIDE_LEVELS[action.lateral_idx] * spec.v_l,
        SIDE_LEVELS[action.turn_idx] * spec.v_tu,
    )


def reevaluate_gate(fresh_scope: bool, ticks_since_eval: int, k_reeval: int = 300) -> bool:
    return fresh_scope or ticks_since_eval >= k_reeval


def value_estimate(critic: NetParams, x: np.ndarray) -> float:
    return float(np.asarray(net_forward(critic, x)).ravel()[0])
