"""Multi-agent PPO with per-level centralized critics and a two-stage curriculum."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .environment import ConstructionEnv, EnvConfig, apply_stage1, apply_stage2, reset
from .nn import Adam, NetParams, net_backward, net_forward
from .policy import (
    PolicyParams,
    eval_policy_act,
    gaussian_log_prob,
    init_policy,
    log_softmax,
    sample_branches,
    save_checkpoint,
    split_logits,
)
from .scenario import Scenario


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    # valuation entries are sparse and noisy; a smaller step keeps the desired point from wandering
    eval_lr: float = 3e-5
    minibatch: int = 256
    epochs: int = 4
    rollout: int = 2048
    n_envs: int = 8
    stage: int = 2  # 1: stage one only; 2: stage one then stage two
    stage1_steps: int = 200_000
    total_steps: int = 400_000
    ent_coef: float = 0.01
    # a Gaussian's entropy grows without bound in log-std, so the valuation level gets its own coefficient
    eval_ent_coef: float = 0.0
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: tuple[int, ...] = (128, 128)
    train_max_ticks: int = 3000
    train_eval: bool = True  # stage two also trains the valuation level
    checkpoint_every: int = 0  # updates between checkpoints; 0 writes only the final one
    seed: int = 0

    def __post_init__(self):
        if self.clip <= 0:
            raise ValueError("clip must be positive")
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")


# ---------------------------------------------------------------- estimators

def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """Generalized advantage estimates and returns for one trajectory.

    ``dones[t]`` marks that the episode ended after step ``t``; ``last_value``
    bootstraps the step after the final one when it did not end.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=float)
    n = len(r)
    adv = np.zeros(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        nxt = last_value if t == n - 1 else v[t + 1]
        nonterm = 1.0 - d[t]
        delta = r[t] + gamma * nxt * nonterm - v[t]
        gae = delta + gamma * lam * nonterm * gae
        adv[t] = gae
    return adv, adv + v


def clipped_surrogate(ratio, adv, eps: float):
    """Per-sample min(r A, clip(r) A) and the fraction of samples whose ratio left the clip range."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    terms = np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > eps)) if ratio.size else 0.0
    return terms, clip_frac


def _surrogate_grad(ratio, adv, eps):
    """d term / d log-prob: ratio * A where the unclipped branch is active, else 0."""
    unclipped = ratio * adv <= np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    return np.where(unclipped, ratio * adv, 0.0)


# ---------------------------------------------------------------- buffer

@dataclass
class PolicyBatch:
    obs: list = field(default_factory=list)
    critic_in: list = field(default_factory=list)
    act: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    val: list = field(default_factory=list)
    rew: list = field(default_factory=list)
    done: list = field(default_factory=list)
    key: list = field(default_factory=list)
    adv: np.ndarray | None = None
    ret: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.obs)

    def add(self, obs, critic_in, act, logp, val, key) -> int:
        self.obs.append(obs)
        self.critic_in.append(critic_in)
        self.act.append(act)
        self.logp.append(float(logp))
        self.val.append(float(val))
        self.rew.append(0.0)
        self.done.append(False)
        self.key.append(key)
        return len(self.obs) - 1

    def finish(self, gamma: float, lam: float, bootstrap: dict | None = None) -> None:
        bootstrap = bootstrap or {}
        n = len(self)
        self.adv = np.zeros(n)
        self.ret = np.zeros(n)
        groups: dict = {}
        for i, k in enumerate(self.key):
            groups.setdefault(k, []).append(i)
        for k, idx in groups.items():
            last = idx[-1]
            lv = 0.0 if self.done[last] else bootstrap.get(k, self.val[last])
            a, r = compute_gae([self.rew[i] for i in idx], [self.val[i] for i in idx],
                               [self.done[i] for i in idx], gamma, lam, lv)
            self.adv[idx] = a
            self.ret[idx] = r


@dataclass
class RolloutBuffer:
    reach: PolicyBatch = field(default_factory=PolicyBatch)
    evaluation: PolicyBatch = field(default_factory=PolicyBatch)
    episode_lengths: list[int] = field(default_factory=list)


# ---------------------------------------------------------------- rollout collection

@dataclass
class EnvPool:
    scenario: Scenario
    env_cfg: EnvConfig
    seed: int
    envs: list[ConstructionEnv] = field(default_factory=list)
    episodes: list[int] = field(default_factory=list)

    @classmethod
    def create(cls, scenario: Scenario, env_cfg: EnvConfig, n: int, seed: int) -> EnvPool:
        pool = cls(scenario, env_cfg, seed)
        for i in range(n):
            pool.envs.append(reset(scenario, env_cfg, pool._seed(i, 0)))
            pool.episodes.append(0)
        return pool

    def _seed(self, i: int, ep: int) -> int:
        return int(np.random.SeedSequence([self.seed, i, ep]).generate_state(1)[0])

    def restart(self, i: int) -> None:
        self.episodes[i] += 1
        self.envs[i] = reset(self.scenario, self.env_cfg, self._seed(i, self.episodes[i]))

    def set_config(self, env_cfg: EnvConfig) -> None:
        self.env_cfg = env_cfg
        for i in range(len(self.envs)):
            self.restart(i)


def _critic_values(critic: NetParams, x: list[np.ndarray]) -> np.ndarray:
    if not x:
        return np.zeros(0)
    return net_forward(critic, np.stack(x))[:, 0]


def collect_rollouts(pool: EnvPool, params: PolicyParams, T: int, rng: np.random.Generator,
                     train_eval: bool = False, gamma: float = 0.99, lam: float = 0.95) -> RolloutBuffer:
    """Step every env ``T`` ticks with the current parameters, pooling all agents' experience.

    With ``train_eval`` the valuation policy picks target priorities at gate
    ticks (sparse entries); otherwise targets get uniform priorities.
    """
    buf = RolloutBuffer()
    open_eval: dict[tuple[int, str], int] = {}
    for _ in range(T):
        per_env = []
        obs_all, crit_all = [], []
        for ei, env in enumerate(pool.envs):
            if train_eval:
                due = env.prepare_evaluations()
                if due:
                    summ = env.summary()
                    eobs = [env.eval_obs(a) for a in due]
                    vals = _critic_values(params.eval_critic, [np.concatenate([o, summ]) for o in eobs])
                    for a, o, v in zip(due, eobs, vals):
                        act = eval_policy_act(params.eval_actor, params.eval_log_std, o, rng)
                        env.apply_eval_action(a, act)
                        idx = buf.evaluation.add(o, np.concatenate([o, summ]), np.array(act.raw), act.log_prob,
                                                 v, (ei, pool.episodes[ei], a))
                        open_eval[(ei, a)] = idx
            else:
                env.settle_uniform()
            acting = env.acting_agents()
            summ = env.summary() if acting else None
            for a in acting:
                o = env.reach_obs(a)
                obs_all.append(o)
                crit_all.append(np.concatenate([o, summ]))
            per_env.append(acting)
        if obs_all:
            logits = net_forward(params.reach_actor, np.stack(obs_all))
            idx_all, logp_all = sample_branches(logits, rng)
            vals_all = _critic_values(params.reach_critic, crit_all)
        j = 0
        for ei, env in enumerate(pool.envs):
            acting = per_env[ei]
            actions, entries = {}, {}
            for a in acting:
                actions[a] = tuple(int(x) for x in idx_all[j])
                entries[a] = buf.reach.add(obs_all[j], crit_all[j], idx_all[j].copy(), logp_all[j], vals_all[j],
                                           (ei, pool.episodes[ei], a))
                j += 1
            res = env.step(actions)
            for a, k in entries.items():
                buf.reach.rew[k] = res.rewards[a].r_r.total
                buf.reach.done[k] = res.terminated
            team = res.team_reward.total
            for a in env.agent_ids:
                k = open_eval.get((ei, a))
                if k is not None:
                    buf.evaluation.rew[k] += team
                    if res.terminated:
                        buf.evaluation.done[k] = True
            if res.terminated:
                buf.episode_lengths.append(env.tick)
                for a in env.agent_ids:
                    open_eval.pop((ei, a), None)
                pool.restart(ei)

    # bootstrap unfinished trajectories from the critic at the current state
    boot_r = {}
    for ei, env in enumerate(pool.envs):
        acting = env.acting_agents()
        if acting:
            summ = env.summary()
            x = [np.concatenate([env.reach_obs(a), summ]) for a in acting]
            for a, v in zip(acting, _critic_values(params.reach_critic, x)):
                boot_r[(ei, pool.episodes[ei], a)] = float(v)
    buf.reach.finish(gamma, lam, boot_r)
    buf.evaluation.finish(gamma, lam)
    return buf


# ---------------------------------------------------------------- updates

def _categorical_grads(logits: np.ndarray, idx: np.ndarray, dlogp: np.ndarray, ent_coef: float):
    """Gradient of sum_i dlogp_i * logp_i + ent_coef * entropy_i w.r.t. the logits; returns (grad, entropy)."""
    grads = []
    ent_total = np.zeros(len(logits))
    for b, lg in enumerate(split_logits(logits)):
        lp = log_softmax(lg)
        p = np.exp(lp)
        onehot = np.zeros_like(p)
        onehot[np.arange(len(p)), idx[:, b]] = 1.0
        g = dlogp[:, None] * (onehot - p)
        ent = -(p * lp).sum(axis=1)
        ent_total += ent
        g += ent_coef * (-p * (lp + ent[:, None]))
        grads.append(g)
    return np.concatenate(grads, axis=1), ent_total


def reach_policy_loss_grad(net: NetParams, obs, idx, logp_old, adv, clip: float, ent_coef: float):
    """Loss = -mean(surrogate) - ent_coef * mean(entropy) and its parameter gradient."""
    logits, cache = net_forward(net, obs, return_cache=True)
    lps = [log_softmax(lg) for lg in split_logits(logits)]
    logp = sum(np.take_along_axis(lp, idx[:, b:b + 1], axis=1)[:, 0] for b, lp in enumerate(lps))
    ratio = np.exp(logp - logp_old)
    terms, clip_frac = clipped_surrogate(ratio, adv, clip)
    n = len(obs)
    dsur = _surrogate_grad(ratio, adv, clip)
    g_logits, ent = _categorical_grads(logits, idx, dsur, ent_coef)
    loss = -terms.mean() - ent_coef * ent.mean()
    grads = net_backward(net, obs, -g_logits / n, cache)
    diag = {"policy_loss": float(-terms.mean()), "entropy": float(ent.mean()), "clip_frac": clip_frac,
            "ratio": float(ratio.mean()), "approx_kl": float(np.mean(logp_old - logp))}
    return loss, grads, diag


def eval_policy_loss_grad(net: NetParams, log_std: np.ndarray, obs, raw, logp_old, adv, clip: float,
                          ent_coef: float):
    mean, cache = net_forward(net, obs, return_cache=True)
    logp = gaussian_log_prob(raw, mean, log_std)
    ratio = np.exp(logp - logp_old)
    terms, clip_frac = clipped_surrogate(ratio, adv, clip)
    n = len(obs)
    dsur = _surrogate_grad(ratio, adv, clip)
    var = np.exp(2 * log_std)
    dmean = dsur[:, None] * (raw - mean) / var
    dlogstd = (dsur[:, None] * ((raw - mean) ** 2 / var - 1.0)).sum(axis=0)
    ent = float((log_std + 0.5 * math.log(2 * math.pi * math.e)).sum())
    loss = -terms.mean() - ent_coef * ent
    grads = net_backward(net, obs, -dmean / n, cache)
    g_logstd = -dlogstd / n - ent_coef * np.ones_like(log_std)
    diag = {"policy_loss": float(-terms.mean()), "entropy": ent, "clip_frac": clip_frac,
            "ratio": float(ratio.mean()), "approx_kl": float(np.mean(logp_old - logp))}
    return loss, grads, g_logstd, diag


def value_loss_grad(critic: NetParams, x, returns, coef: float = 0.5):
    v, cache = net_forward(critic, x, return_cache=True)
    err = v[:, 0] - returns
    loss = coef * float(np.mean(err ** 2))
    grads = net_backward(critic, x, (2 * coef * err / len(x))[:, None], cache)
    return loss, grads


@dataclass
class Optimizers:
    reach_actor: Adam
    reach_critic: Adam
    eval_actor: Adam
    eval_critic: Adam

    @classmethod
    def create(cls, cfg: TrainConfig) -> Optimizers:
        return cls(Adam(lr=cfg.lr, max_grad_norm=cfg.max_grad_norm), Adam(lr=cfg.lr, max_grad_norm=cfg.max_grad_norm),
                   Adam(lr=cfg.eval_lr, max_grad_norm=cfg.max_grad_norm),
                   Adam(lr=cfg.lr, max_grad_norm=cfg.max_grad_norm))


def _check(loss: float, what: str, diag: dict) -> None:
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite {what} loss; diagnostics {diag}")


def ppo_update(params: PolicyParams, buf: RolloutBuffer, cfg: TrainConfig, opt: Optimizers,
               rng: np.random.Generator, train_eval: bool = False) -> dict:
    """Clipped-surrogate updates of the reaching (and optionally valuation) level; params change in place."""
    out: dict = {}
    b = buf.reach
    if len(b):
        obs = np.stack(b.obs)
        cin = np.stack(b.critic_in)
        idx = np.stack(b.act).astype(int)
        logp_old = np.asarray(b.logp)
        adv_all, ret_all = b.adv, b.ret
        diags = []
        for _ in range(cfg.epochs):
            perm = rng.permutation(len(b))
            for s in range(0, len(b), cfg.minibatch):
                mb = perm[s:s + cfg.minibatch]
                adv = adv_all[mb]
                if len(mb) > 1:
                    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                loss, g, d = reach_policy_loss_grad(params.reach_actor, obs[mb], idx[mb], logp_old[mb], adv,
                                                    cfg.clip, cfg.ent_coef)
                vloss, gv = value_loss_grad(params.reach_critic, cin[mb], ret_all[mb], cfg.vf_coef)
                d["value_loss"] = vloss
                _check(loss + vloss, "reaching", d)
                opt.reach_actor.step(params.reach_actor.arrays(), g.arrays())
                opt.reach_critic.step(params.reach_critic.arrays(), gv.arrays())
                diags.append(d)
        out["reach"] = {k: float(np.mean([d[k] for d in diags])) for k in diags[0]}
    e = buf.evaluation
    if train_eval and len(e) > 1:
        obs = np.stack(e.obs)
        cin = np.stack(e.critic_in)
        raw = np.stack(e.act)
        logp_old = np.asarray(e.logp)
        diags = []
        mbs = max(16, min(cfg.minibatch, len(e)))
        for _ in range(cfg.epochs):
            perm = rng.permutation(len(e))
            for s in range(0, len(e), mbs):
                mb = perm[s:s + mbs]
                adv = e.adv[mb]
                if len(mb) > 1:
                    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                loss, g, g_ls, d = eval_policy_loss_grad(params.eval_actor, params.eval_log_std, obs[mb], raw[mb],
                                                         logp_old[mb], adv, cfg.clip, cfg.eval_ent_coef)
                vloss, gv = value_loss_grad(params.eval_critic, cin[mb], e.ret[mb], cfg.vf_coef)
                d["value_loss"] = vloss
                _check(loss + vloss, "valuation", d)
                opt.eval_actor.step(params.eval_actor.arrays() + [params.eval_log_std],
                                    g.arrays() + [g_ls])
                opt.eval_critic.step(params.eval_critic.arrays(), gv.arrays())
                np.clip(params.eval_log_std, -3.0, 1.0, out=params.eval_log_std)
                diags.append(d)
        out["eval"] = {k: float(np.mean([d[k] for d in diags])) for k in diags[0]}
    if not params.reach_actor.all_finite() or not params.eval_actor.all_finite():
        raise TrainingDiverged(f"non-finite parameters after update; diagnostics {out}")
    return out


# ---------------------------------------------------------------- two-stage driver

@dataclass
class CurveRow:
    step: int
    stage: int
    update: int
    mean_reward: float
    entries: int
    episode_length: float


@dataclass
class TrainResult:
    params: PolicyParams
    reach_curve: list[CurveRow]
    eval_curve: list[CurveRow]
    checkpoints: list[str]
    diagnostics: list[dict]
    # parameters at the end of stage one when the run crossed into stage two
    stage1_params: PolicyParams | None = None


def write_curve(rows: list[CurveRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "stage", "update", "mean_reward", "entries", "episode_length"])
        for r in rows:
            w.writerow([r.step, r.stage, r.update, f"{r.mean_reward:.9g}", r.entries,
                        "" if math.isnan(r.episode_length) else f"{r.episode_length:.6g}"])


def new_params(scenario: Scenario, env_cfg: EnvConfig, cfg: TrainConfig) -> PolicyParams:
    probe = reset(scenario, env_cfg, 0)
    rng = np.random.default_rng(cfg.seed)
    return init_policy(probe.reach_obs_size, probe.eval_obs_size, probe.summary_size, rng, cfg.hidden)


def train_two_stage(scenario: Scenario, cfg: TrainConfig = TrainConfig(), env_cfg: EnvConfig | None = None,
                    params: PolicyParams | None = None, out_dir: str | Path | None = None,
                    log=None) -> TrainResult:
    """Stage one trains reaching under simplified dynamics; stage two restores them and adds valuation."""
    env_cfg = replace(env_cfg or EnvConfig(), max_ticks=(env_cfg.max_ticks if env_cfg else cfg.train_max_ticks))
    params = params.copy() if params is not None else new_params(scenario, env_cfg, cfg)
    params.meta.setdefault("scenario", scenario.name)
    rng = np.random.default_rng(cfg.seed)
    opt = Optimizers.create(cfg)
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    reach_curve: list[CurveRow] = []
    eval_curve: list[CurveRow] = []
    ckpts: list[str] = []
    diags: list[dict] = []
    total = cfg.stage1_steps if cfg.stage == 1 else cfg.total_steps
    stage = 1 if params.step < cfg.stage1_steps else 2
    if cfg.stage == 1:
        stage = 1
    pool = EnvPool.create(scenario, apply_stage1(env_cfg) if stage == 1 else apply_stage2(env_cfg), cfg.n_envs,
                          cfg.seed + params.step)
    update = 0
    stage1_params = None
    t0 = time.time()
    while params.step < total:
        if stage == 1 and params.step >= cfg.stage1_steps and cfg.stage == 2:
            stage = 2
            pool.set_config(apply_stage2(env_cfg))
            stage1_params = params.copy()
            if out:
                p = out / "stage1_final.json"
                save_checkpoint(params, p)
                ckpts.append(str(p))
        train_eval = stage == 2 and cfg.train_eval
        buf = collect_rollouts(pool, params, cfg.rollout, rng, train_eval, cfg.gamma, cfg.gae_lambda)
        if len(buf.reach) == 0 and len(buf.evaluation) == 0:
            raise TrainingDiverged("rollout produced no decisions; every agent is idle")
        d = ppo_update(params, buf, cfg, opt, rng, train_eval)
        params.step += len(buf.reach)
        params.stage = stage
        update += 1
        ep_len = float(np.mean(buf.episode_lengths)) if buf.episode_lengths else float("nan")
        reach_curve.append(CurveRow(params.step, stage, update, float(np.mean(buf.reach.rew)) if len(buf.reach) else 0.0,
                                    len(buf.reach), ep_len))
        if stage == 2 and cfg.train_eval:
            eval_curve.append(CurveRow(params.step, stage, update,
                                       float(np.mean(buf.evaluation.rew)) if len(buf.evaluation) else 0.0,
                                       len(buf.evaluation), ep_len))
        d.update(step=params.step, stage=stage, update=update, seconds=round(time.time() - t0, 2))
        diags.append(d)
        if log is not None:
            log(d, reach_curve[-1])
        if out and cfg.checkpoint_every and update % cfg.checkpoint_every == 0:
            p = out / f"checkpoint_{params.step:09d}.json"
            save_checkpoint(params, p)
            ckpts.append(str(p))
    if out:
        p = out / "final.json"
        save_checkpoint(params, p)
        ckpts.append(str(p))
        write_curve(reach_curve, out / "reach_curve.csv")
        if eval_curve:
            write_curve(eval_curve, out / "eval_curve.csv")
    return TrainResult(params, reach_curve, eval_curve, ckpts, diags, stage1_params)


def config_to_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d


def config_from_dict(d: dict) -> TrainConfig:
    unknown = sorted(set(d) - set(TrainConfig.__dataclass_fields__))
    if unknown:
        raise ValueError(f"unknown training config keys {unknown}")
    known = dict(d)
    if "hidden" in known:
        known["hidden"] = tuple(known["hidden"])
    return TrainConfig(**known)
