import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crewsim.nn import Adam, NetParams, init_mlp, net_backward, net_forward
from crewsim.policy import (BRANCH_SIZES, N_LOGITS, V_LOWER, EvalAction, ReachAction, action_to_command,
                            eval_policy_act, gaussian_log_prob, init_policy, joint_log_prob, load_checkpoint,
                            reach_policy_act, reevaluate_gate, sample_branches, save_checkpoint, target_values)
from crewsim.scenario import make_crew


@pytest.mark.parametrize("out_act", ["identity", "tanh"])
def test_backward_matches_finite_differences(out_act):
    rng = np.random.default_rng(3)
    net = init_mlp([5, 7, 4, 3], rng, output_activation=out_act, output_scale=1.0)
    x = rng.normal(size=(6, 5))
    g = rng.normal(size=(6, 3))
    grads = net_backward(net, x, g)
    eps = 1e-6
    for arr, garr in zip(net.arrays(), grads.arrays()):
        for k in rng.choice(arr.size, size=min(5, arr.size), replace=False):
            i = np.unravel_index(k, arr.shape)
            old = arr[i]
            arr[i] = old + eps
            up = float((net_forward(net, x) * g).sum())
            arr[i] = old - eps
            down = float((net_forward(net, x) * g).sum())
            arr[i] = old
            assert garr[i] == pytest.approx((up - down) / (2 * eps), rel=1e-5, abs=1e-8)


def test_forward_rejects_wrong_width():
    net = init_mlp([4, 3, 2], np.random.default_rng(0))
    with pytest.raises(ValueError, match="features"):
        net_forward(net, np.zeros(5))


def test_inconsistent_layers_rejected():
    with pytest.raises(ValueError):
        NetParams([np.zeros((3, 2)), np.zeros((4, 1))], [np.zeros(2), np.zeros(1)])


def test_adam_reduces_quadratic():
    p = [np.array([3.0, -2.0])]
    opt = Adam(lr=0.1, max_grad_norm=0)
    for _ in range(200):
        opt.step(p, [2 * p[0]])
    assert np.abs(p[0]).max() < 0.05


def test_adam_clips_global_norm():
    p = [np.zeros(2)]
    opt = Adam(lr=1.0, max_grad_norm=0.5)
    opt.step(p, [np.array([300.0, 400.0])])
    # first Adam step has magnitude lr per coordinate regardless of scale
    assert np.allclose(np.abs(p[0]), 1.0, atol=1e-6)


def test_value_at_desired_point_is_one():
    assert target_values((0.5, 0.5), {"c": (0.5, 0.5)}) == {"c": 1.0}


def test_value_corner_to_centre():
    v = target_values((0.5, 0.5), {"c": (0.0, 0.0)})["c"]
    assert v == pytest.approx(1 - math.sqrt(0.5))


def test_value_lower_bound():
    v = target_values((-1.0, -1.0), {"c": (1.0, 1.0)})["c"]
    assert v == pytest.approx(V_LOWER) == pytest.approx(1 - 2 * math.sqrt(2))


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1))
def test_value_in_range(a1, a2, x, y):
    v = target_values((a1, a2), {"c": (x, y)})["c"]
    assert V_LOWER - 1e-12 <= v <= 1.0


def test_eval_action_accepted_by_target_values():
    act = EvalAction(0.5, 0.5, 0.0)
    assert target_values(act, {"c": (0.5, 0.5)})["c"] == 1.0


def test_gaussian_log_prob_standard_normal():
    assert float(gaussian_log_prob(np.zeros(2), np.zeros(2), np.zeros(2))) == pytest.approx(-math.log(2 * math.pi))


def test_eval_action_clamped_with_raw_kept():
    net = init_mlp([3, 4, 2], np.random.default_rng(0))
    net.biases[-1][:] = 5.0
    a = eval_policy_act(net, np.full(2, -3.0), np.zeros(3), np.random.default_rng(0))
    assert a.point == (1.0, 1.0)
    assert a.raw[0] > 1.0
    assert a.log_prob == pytest.approx(float(gaussian_log_prob(np.array(a.raw), net_forward(net, np.zeros(3)),
                                                               np.full(2, -3.0))))


def test_branch_layout():
    assert BRANCH_SIZES == (4, 3, 3) and N_LOGITS == 10


def test_joint_distribution_sums_to_one():
    logits = np.random.default_rng(1).normal(size=N_LOGITS)
    combos = np.array([(f, l, t) for f in range(4) for l in range(3) for t in range(3)])
    assert len(combos) == 36
    lp = joint_log_prob(np.broadcast_to(logits, (36, N_LOGITS)), combos)
    assert np.exp(lp).sum() == pytest.approx(1.0)


def test_uniform_logits_log_prob():
    lp = joint_log_prob(np.zeros(N_LOGITS), np.array([1, 2, 0]))
    assert float(lp) == pytest.approx(-math.log(36))


def test_sampling_frequencies_follow_probabilities():
    logits = np.array([[2.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 3.0]])
    rng = np.random.default_rng(0)
    idx, _ = sample_branches(np.repeat(logits, 20000, axis=0), rng)
    p = np.exp(logits[0, :4]) / np.exp(logits[0, :4]).sum()
    freq = np.bincount(idx[:, 0], minlength=4) / len(idx)
    assert np.abs(freq - p).max() < 0.015


def test_deterministic_picks_argmax():
    net = init_mlp([3, 4, N_LOGITS], np.random.default_rng(0))
    net.biases[-1][:] = [0, 0, 5, 0, 0, 0, 5, 5, 0, 0]
    a = reach_policy_act(net, np.zeros(3), np.random.default_rng(0), deterministic=True)
    assert a.indices == (2, 2, 0)


def test_action_to_command_levels():
    spec = make_crew("GC1", "GC")
    cmd = action_to_command(ReachAction(2, 0, 2), spec)
    assert cmd.forward_rate == pytest.approx(0.8 * 0.6)
    assert cmd.lateral_rate == pytest.approx(-0.1)
    assert cmd.turn_rate == pytest.approx(30.0)
    assert action_to_command(ReachAction(0, 1, 1), spec).forward_rate == 0.0


def test_action_index_validated():
    with pytest.raises(ValueError):
        ReachAction(4, 0, 0)


@pytest.mark.parametrize("fresh,ticks,expected", [(True, 0, True), (False, 299, False), (False, 300, True)])
def test_reevaluation_gate(fresh, ticks, expected):
    assert reevaluate_gate(fresh, ticks) is expected


def test_initial_desired_point_at_centre():
    p = init_policy(115, 34, 20, np.random.default_rng(0))
    a = eval_policy_act(p.eval_actor, p.eval_log_std, np.zeros(34), np.random.default_rng(0), deterministic=True)
    assert a.point == pytest.approx((0.5, 0.5), abs=1e-9)
    assert p.eval_log_std.tolist() == [-1.5, -1.5]


def test_checkpoint_round_trip(tmp_path):
    p = init_policy(115, 34, 20, np.random.default_rng(0), hidden=(8, 8))
    p.step, p.stage, p.meta = 1234, 2, {"note": "x"}
    path = tmp_path / "ck.json"
    save_checkpoint(p, path)
    q = load_checkpoint(path)
    assert (q.step, q.stage, q.meta) == (1234, 2, {"note": "x"})
    x = np.random.default_rng(1).normal(size=115)
    np.testing.assert_array_equal(net_forward(q.reach_actor, x), net_forward(p.reach_actor, x))
    np.testing.assert_array_equal(q.eval_log_std, p.eval_log_std)


def test_checkpoint_version_checked(tmp_path):
    p = init_policy(4, 4, 2, np.random.default_rng(0), hidden=(3,))
    d = p.to_dict()
    d["format_version"] = 99
    from crewsim.policy import PolicyParams

    with pytest.raises(ValueError, match="format"):
        PolicyParams.from_dict(d)
