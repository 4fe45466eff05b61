"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Tolerances are pinned at module level. The two training criteria share one
seeded two-stage run on the toy scenario (about 2.5 minutes on a desktop CPU).
"""

import json
import itertools
import math
import time

import numpy as np
import pytest

from crewsim.baselines import (GAConfig, ga_optimize, policy_controller, random_controller, run_priority_baseline,
                               steps_to_target)
from crewsim.cli import EXIT_OK, main
from crewsim.environment import EnvConfig, apply_stage1, reset, run_episode
from crewsim.exports import agent_gantt_rows, read_gantt_csv, task_gantt_rows
from crewsim.knowledge import decide, apply_transition
from crewsim.nn import init_mlp, net_forward
from crewsim.perception import PerceptionConfig, TYPE_COMPONENT, TYPE_OUTLET, TYPE_STORAGE, cast_rays, \
    modify_observation
from crewsim.physics import effective_efficiency, max_velocity
from crewsim.policy import N_LOGITS, V_LOWER, gaussian_log_prob, joint_log_prob, target_values
from crewsim.scenario import OUTLET_ID, build_case_study, build_toy_scenario, build_two_task_scenario, make_crew, \
    make_storage, make_task
from crewsim.taskflow import Mode, Pool, promote_tasks
from crewsim.training import (TrainConfig, clipped_surrogate, compute_gae, eval_policy_loss_grad,
                              reach_policy_loss_grad, train_two_stage, value_loss_grad)

from conftest import make_scenario, physical_state
from rule_fixtures import RULES, fixture, triggers

FORMULA_TOL = 1e-12
V_TOL = 1e-12
FD_STEP = 1e-5
FD_REL_TOL = 1e-4
GAE_TOL = 1e-10
TRAINED_RATIO = 0.5
CASE_STUDY_TICKS = (20_000, 50_000)
GA_DOMINANCE = 0.95

TRAIN_CFG = TrainConfig(stage=2, stage1_steps=250_000, total_steps=500_000, rollout=512, n_envs=4,
                        train_max_ticks=3000, seed=0)


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def trained():
    return train_two_stage(build_toy_scenario(), TRAIN_CFG)


def test_01_transition_formulas(capsys):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        spec = make_crew("FC1", "FC", max_load=5.0)
        v, idx = rng.uniform(0.05, 1.5), rng.uniform(0.0, 1.0)
        carrying = bool(rng.integers(2))
        c = spec.carry_deceleration if carrying else 1.0
        worst = max(worst, abs(max_velocity(v, carrying, idx, spec) - max(c * idx * v, spec.v_min)))
        e, n, ineff = rng.uniform(0.0, 0.05), int(rng.integers(0, 6)), rng.uniform(0.0, 0.6)
        worst = max(worst, abs(effective_efficiency(e, n, ineff) - max(0.0, e * (1 - n * ineff))))
    dt = time.perf_counter() - t0
    report(capsys, 1, worst <= FORMULA_TOL and dt < 1.0, f"max error {worst:.1e} over 1000 inputs in {dt:.3f} s")


def _effects_hold(rule, fx, before_stocks, before_loads):
    sc, cs, ps, a = fx.scenario, fx.cstate, fx.pstate, fx.agent
    st = cs.agent_statuses[a]
    if rule == "a_c1":
        return cs.pools["H1"] is Pool.ON and ps.area_of("H1") is not None and st.mode is Mode.TASKING
    if rule == "a_c2":
        return cs.pools["G1"] is Pool.ON and cs.progress["G1"] > 0 and st.mode is Mode.TASKING
    if rule == "a_c3":
        return st.paused_task == "R1" and st.mode is Mode.REACHING and st.target_scope == ["S_reb"]
    if rule == "a_c4":
        return st.current_task == "R1" and st.mode is Mode.TASKING
    if rule in ("a_c5", "a_c6"):
        moved = before_stocks["S_reb"] - cs.stocks["S_reb"]
        return moved > 0 and math.isclose(st.load - before_loads, moved, abs_tol=1e-12)
    if rule in ("a_c7", "a_c8"):
        return st.mode is Mode.WAITING and len(cs.crane_queue) == 1
    if rule == "a_c9":
        # successors are promoted once every agent has decided, not inside the transition
        waiting = cs.pools["G2"] is Pool.WAIT
        promote_tasks(cs, sc)
        return cs.pools["G1"] is Pool.END and ps.area_of("G1") is None and waiting and cs.pools["G2"] is Pool.QUEUE
    if rule == "a_c10":
        return st.target_scope == ["g1"]
    return False


def test_02_decision_table(capsys):
    t0 = time.perf_counter()
    bad = []
    for rule in RULES:
        fx = fixture(rule)
        if triggers(fx) != {rule}:
            bad.append(f"{rule}:triggers")
            continue
        out = decide(fx.agent, fx.cstate, fx.pstate, fx.scenario, fx.dyn)
        if out.code != rule:
            bad.append(f"{rule}:decided {out.code}")
            continue
        stocks, load = dict(fx.cstate.stocks), fx.cstate.agent_statuses[fx.agent].load
        apply_transition(out, fx.agent, fx.cstate, fx.pstate, fx.scenario, fx.dyn, 5)
        if not _effects_hold(rule, fx, stocks, load):
            bad.append(f"{rule}:effects")
    dt = time.perf_counter() - t0
    report(capsys, 2, not bad and dt < 1.0, f"{len(RULES) - len(bad)}/10 rules exclusive with effects in {dt:.3f} s"
           + (f" failures {bad}" if bad else ""))


def test_03_scope_dichotomy(capsys):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    checked = violations = 0
    for _ in range(40):
        comps = [(f"c{i}", tuple(rng.uniform(3, 17, 2))) for i in range(4)]
        tasks = [make_task(f"T{i}", "G", cid) for i, (cid, _) in enumerate(comps)]
        crews = [make_crew(f"GC{i}", "GC") for i in range(3)]
        stores = [make_storage("S1", "struts", tuple(rng.uniform(2, 18, 2)), capacity=4.0)]
        sc = make_scenario(comps, tasks, crews, stores)
        ps = physical_state(sc, {c.id: (*rng.uniform(1, 19, 2), rng.uniform(0, 360)) for c in crews})
        ids = [cid for cid, _ in comps] + ["S1", OUTLET_ID]
        scope = list(rng.choice(ids, size=int(rng.integers(0, 4)), replace=False))
        values = {k: float(rng.uniform(V_LOWER, 1.0)) for k in ids}
        hits = cast_rays(ps, sc, "GC0", PerceptionConfig())
        for h, m in zip(hits, modify_observation(hits, scope, values)):
            checked += 1
            in_scope = h.object_type_id in (TYPE_COMPONENT, TYPE_STORAGE, TYPE_OUTLET) and h.object_id in scope
            if m.priority_value != 0.0 and not in_scope:
                violations += 1
            if in_scope and m.priority_value != values[h.object_id]:
                violations += 1
    dt = time.perf_counter() - t0
    report(capsys, 3, violations == 0 and dt < 1.0, f"{violations} violations over {checked} rays in {dt:.3f} s")


def test_04_priority_geometry(capsys):
    rng = np.random.default_rng(4)
    acts = rng.uniform(-1, 1, (10_000, 2))
    tars = rng.uniform(0, 1, (10_000, 2))
    vals = np.array([target_values(tuple(a), {"t": tuple(t)})["t"] for a, t in zip(acts, tars)])
    d = np.hypot(*(acts - tars).T)
    formula = np.abs(vals - (1 - d)).max()
    bounded = bool(((vals >= V_LOWER - V_TOL) & (vals <= 1 + V_TOL)).all())
    order = np.argsort(d)
    monotone = bool(np.all(np.diff(vals[order])[np.diff(d[order]) > V_TOL] < 0))
    ones = all(target_values(tuple(t), {"t": tuple(t)})["t"] == 1.0 for t in tars[:1000])
    not_one = bool((vals[d > V_TOL] < 1.0).all())
    extreme = target_values((-1.0, -1.0), {"t": (1.0, 1.0)})["t"]
    ok = formula <= V_TOL and bounded and monotone and ones and not_one and abs(extreme - V_LOWER) <= V_TOL
    report(capsys, 4, ok, f"10^4 pairs: formula error {formula:.1e}, bounded {bounded}, monotone {monotone}, "
           f"V=1 iff coincident {ones and not_one}")


def _rel_err(a, n):
    return abs(a - n) / max(abs(a) + abs(n), 1e-8)


def _fd_worst(loss, arrays, grads, rng, n=6):
    worst = 0.0
    for arr, g in zip(arrays, grads):
        for k in rng.choice(arr.size, size=min(n, arr.size), replace=False):
            i = np.unravel_index(k, arr.shape)
            old = arr[i]
            arr[i] = old + FD_STEP
            up = loss()
            arr[i] = old - FD_STEP
            down = loss()
            arr[i] = old
            worst = max(worst, _rel_err(g[i], (up - down) / (2 * FD_STEP)))
    return worst


def test_05_gradient_oracle(capsys):
    rng = np.random.default_rng(5)
    worst = {"reach": 0.0, "eval": 0.0, "critic": 0.0}
    for k in range(20):
        kind = ("reach", "eval", "critic")[k % 3]
        n_in, h = int(rng.integers(3, 9)), int(rng.integers(3, 9))
        b = 8
        obs = rng.normal(size=(b, n_in))
        adv = rng.normal(size=b)
        if kind == "reach":
            net = init_mlp([n_in, h, h, N_LOGITS], rng, output_scale=1.0)
            idx = np.stack([rng.integers(0, 4, b), rng.integers(0, 3, b), rng.integers(0, 3, b)], axis=1)
            old = joint_log_prob(net_forward(net, obs), idx) + rng.normal(0, 0.02, b)

            def loss():
                return reach_policy_loss_grad(net, obs, idx, old, adv, 0.2, 0.01)[0]
            arrays, grads = net.arrays(), reach_policy_loss_grad(net, obs, idx, old, adv, 0.2, 0.01)[1].arrays()
        elif kind == "eval":
            net = init_mlp([n_in, h, h, 2], rng, output_scale=1.0)
            log_std = rng.uniform(-1.5, -0.5, 2)
            raw = net_forward(net, obs) + 0.3 * rng.normal(size=(b, 2))
            old = gaussian_log_prob(raw, net_forward(net, obs), log_std) + rng.normal(0, 0.02, b)

            def loss():
                return eval_policy_loss_grad(net, log_std, obs, raw, old, adv, 0.2, 0.0)[0]
            _, g, g_ls, _ = eval_policy_loss_grad(net, log_std, obs, raw, old, adv, 0.2, 0.0)
            arrays, grads = net.arrays() + [log_std], g.arrays() + [g_ls]
        else:
            net = init_mlp([n_in, h, h, 1], rng, output_scale=1.0)
            ret = rng.normal(size=b)

            def loss():
                return value_loss_grad(net, obs, ret)[0]
            arrays, grads = net.arrays(), value_loss_grad(net, obs, ret)[1].arrays()
        worst[kind] = max(worst[kind], _fd_worst(loss, arrays, grads, rng))
    ok = max(worst.values()) < FD_REL_TOL
    report(capsys, 5, ok, "max relative error over 20 nets " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_06_gae_oracle(capsys):
    rng = np.random.default_rng(6)
    gamma = 0.97
    err1 = err0 = 0.0
    for _ in range(100):
        r, v = rng.normal(size=10), rng.normal(size=10)
        done = [False] * 10
        last = float(rng.normal())
        if rng.random() < 0.5:
            done[-1], last = True, 0.0
        adv1, _ = compute_gae(r.tolist(), v.tolist(), done, gamma, 1.0, last_value=last)
        adv0, _ = compute_gae(r.tolist(), v.tolist(), done, gamma, 0.0, last_value=last)
        nxt = np.append(v[1:], last)
        for t in range(10):
            ret = sum(gamma ** (k - t) * r[k] for k in range(t, 10)) + gamma ** (10 - t) * last
            err1 = max(err1, abs(adv1[t] - (ret - v[t])))
            err0 = max(err0, abs(adv0[t] - (r[t] + gamma * nxt[t] - v[t])))
    report(capsys, 6, max(err1, err0) <= GAE_TOL, f"100 trajectories: lambda=1 error {err1:.1e}, lambda=0 error {err0:.1e}")


def test_07_clip_bound(capsys):
    rng = np.random.default_rng(7)
    eps = 0.2
    above = frac_err = 0
    for _ in range(200):
        n = int(rng.integers(1, 64))
        ratio = np.exp(rng.normal(0, 0.3, n))
        adv = rng.normal(size=n)
        terms, frac = clipped_surrogate(ratio, adv, eps)
        bound = np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)
        above += int((np.asarray(terms) > bound).sum())
        brute = sum(1 for x in ratio if abs(x - 1.0) > eps) / n
        frac_err += int(frac != brute)
    report(capsys, 7, above == 0 and frac_err == 0,
           f"200 batches: {above} samples above bound, {frac_err} clip-fraction mismatches")


def test_08_toy_training_beats_random(capsys, trained):
    sc = build_toy_scenario()
    cfg = apply_stage1(EnvConfig(max_ticks=TRAIN_CFG.train_max_ticks))
    steps = {"random": [], "trained": []}
    for ep in range(50):
        for name, ctl in (("random", random_controller(ep)), ("trained", policy_controller(trained.stage1_params, ep))):
            env = run_episode(reset(sc, cfg, 1000 + ep), ctl)
            steps[name] += steps_to_target(env)
    rnd, trn = np.mean(steps["random"]), np.mean(steps["trained"])
    ok = trn <= TRAINED_RATIO * rnd and trained.stage1_params.step <= 500_000
    report(capsys, 8, ok, f"mean steps-to-target trained {trn:.1f} vs random {rnd:.1f} "
           f"(ratio {trn / rnd:.3f}) after {trained.stage1_params.step} env steps")


def test_09_stage_transition_dip(capsys, trained):
    r1 = [r.mean_reward for r in trained.reach_curve if r.stage == 1]
    r2 = [r.mean_reward for r in trained.reach_curve if r.stage == 2]
    n1, n2 = max(1, len(r1) // 10), max(1, len(r2) // 10)
    s1_end, s2_start, s2_end = np.mean(r1[-n1:]), np.mean(r2[:n2]), np.mean(r2[-n2:])
    ok = bool(r2) and s2_start < s1_end and s2_end > s2_start
    report(capsys, 9, ok, f"reach reward stage-1 end {s1_end:.5f}, stage-2 start {s2_start:.5f}, "
           f"stage-2 end {s2_end:.5f}")


def test_10_case_study_priority(capsys):
    t0 = time.perf_counter()
    env = run_priority_baseline(build_case_study(), EnvConfig(), 0)
    m = env.metrics()
    dt = time.perf_counter() - t0
    lo, hi = CASE_STUDY_TICKS
    ok = m["completed"] and m["total_tasks"] == 87 and lo <= m["episode_ticks"] <= hi and dt < 300
    report(capsys, 10, ok, f"{m['completed_tasks']}/{m['total_tasks']} tasks in {m['episode_ticks']} ticks "
           f"({dt:.1f} s)")


def test_11_genetic_algorithm(capsys):
    res = ga_optimize(build_toy_scenario(), GAConfig(population=6, generations=50, elitism=1, seed=0))
    monotone = len(res.best_history) == 50 and all(b <= a for a, b in zip(res.best_history, res.best_history[1:]))
    sc = build_two_task_scenario()
    wins = 0
    for seed in range(20):
        g = ga_optimize(sc, GAConfig(population=8, generations=10, seed=seed)).genes_by_task()
        wins += g["TA"] > g["TB"]
    ok = monotone and wins / 20 >= GA_DOMINANCE
    report(capsys, 11, ok, f"best-so-far monotone over 50 generations {monotone}, dominant order in {wins}/20 runs")


def test_12_exports(capsys, tmp_path):
    for d in ("a", "b"):
        code = main(["simulate", "--scenario", "toy", "--baseline", "priority", "--seed", "3",
                     "--out", str(tmp_path / d)])
        assert code == EXIT_OK
    capsys.readouterr()
    a, b = tmp_path / "a", tmp_path / "b"
    identical = all(p.read_bytes() == (b / p.name).read_bytes() for p in a.iterdir())
    rows = read_gantt_csv(a / "agents.gantt.csv")
    end = json.loads((a / "metrics.json").read_text())["episode_ticks"]
    gap_free = True
    for agent, group in itertools.groupby(rows, key=lambda r: r.subject):
        g = list(group)
        gap_free &= g[0].start == 0 and g[-1].end == end and all(x.end == y.start for x, y in zip(g, g[1:]))
    tasks = read_gantt_csv(a / "tasks.gantt.csv")
    env = run_priority_baseline(build_toy_scenario(), EnvConfig(), 3)
    n_done = env.metrics()["completed_tasks"]
    sorted_ok = [r.start for r in tasks] == sorted(r.start for r in tasks) and len(tasks) == n_done
    same = agent_gantt_rows(env) == rows and task_gantt_rows(env) == tasks
    ok = identical and gap_free and sorted_ok and same
    report(capsys, 12, ok, f"byte-identical {identical}, agents gap-free over [0, {end}] {gap_free}, "
           f"{len(tasks)} task rows sorted {sorted_ok}")
