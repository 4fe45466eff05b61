import copy

import pytest

from crewsim.knowledge import (RULE_ORDER, ConstructionAction, DecisionOutcome, Dynamics, apply_transition, decide,
                               feasible_targets, idle_cause, reach_distance)
from crewsim.scenario import OUTLET_ID, make_crew, make_task
from crewsim.taskflow import ContractViolation, Mode, Pool, promote_tasks

from conftest import make_scenario, promoted_state
from rule_fixtures import RULES, fixture, triggers


def _decide(fx):
    return decide(fx.agent, fx.cstate, fx.pstate, fx.scenario, fx.dyn)


def _apply(fx, out, tick=7):
    return apply_transition(out, fx.agent, fx.cstate, fx.pstate, fx.scenario, fx.dyn, tick)


def test_rule_order_is_fixed():
    assert RULE_ORDER == ("a_c9", "a_c3", "a_c6", "a_c7", "a_c2", "a_c5", "a_c1", "a_c4", "a_c8", "a_c10")


@pytest.mark.parametrize("rule", RULES)
def test_each_fixture_fires_its_rule_only(rule):
    fx = fixture(rule)
    assert triggers(fx) == {rule}
    assert _decide(fx).code == rule


@pytest.mark.parametrize("rule", RULES)
def test_decide_is_pure(rule):
    fx = fixture(rule)
    before = (copy.deepcopy(fx.cstate), copy.deepcopy(fx.pstate))
    a, b = _decide(fx), _decide(fx)
    assert a == b
    assert fx.cstate == before[0] and fx.pstate == before[1]


def test_execute_task_advances_progress():
    fx = fixture("a_c2")
    _apply(fx, _decide(fx))
    e = fx.scenario.crew_by_id["GC1"].efficiency_mean
    assert fx.cstate.progress["G1"] == pytest.approx(e)
    assert fx.cstate.pools["G1"] is Pool.ON


def test_initiate_registers_hi_area():
    fx = fixture("a_c1")
    out = _decide(fx)
    assert out.arrived == "p1"
    _apply(fx, out)
    assert fx.cstate.pools["H1"] is Pool.ON
    area = fx.pstate.area_of("H1")
    assert area.radius == 2.5 and area.index == 0.4 and area.center == (5.0, 10.0)
    assert fx.cstate.agent_statuses["HIC1"].mode is Mode.TASKING
    assert fx.cstate.start_tick["H1"] == 7


def test_pause_targets_storage():
    fx = fixture("a_c3")
    _apply(fx, _decide(fx))
    st = fx.cstate.agent_statuses["RC1"]
    assert st.mode is Mode.REACHING and st.paused_task == "R1" and st.current_task is None
    assert st.target_scope == ["S_reb"]
    assert fx.cstate.pools["R1"] is Pool.ON


def test_resume_returns_to_task():
    fx = fixture("a_c4")
    _apply(fx, _decide(fx))
    st = fx.cstate.agent_statuses["RC1"]
    assert st.mode is Mode.TASKING and st.current_task == "R1" and st.paused_task is None


def test_fetch_moves_stock_to_load():
    fx = fixture("a_c5")
    rate = fx.scenario.storage_by_id["S_reb"].acquire_rate
    _apply(fx, _decide(fx))
    st = fx.cstate.agent_statuses["RC1"]
    assert st.mode is Mode.FETCHING
    assert st.load == pytest.approx(rate)
    assert fx.cstate.stocks["S_reb"] == pytest.approx(0.2 - rate)


def test_fetch_complete_scopes_paused_task():
    fx = fixture("a_c6")
    out = _decide(fx)
    assert out.new_target_scope == ("q1",)
    _apply(fx, out)
    st = fx.cstate.agent_statuses["RC1"]
    assert st.mode is Mode.REACHING and st.load == pytest.approx(0.1)
    assert st.target_scope == ["q1"]


def test_out_of_stock_requests_crane():
    fx = fixture("a_c7")
    _apply(fx, _decide(fx))
    st = fx.cstate.agent_statuses["RC1"]
    assert st.mode is Mode.WAITING
    (req,) = fx.cstate.crane_queue
    assert (req.kind, req.storage_id, req.issued_at) == ("material", "S_reb", 7)


def test_task_needing_crane_waits():
    fx = fixture("a_c8")
    _apply(fx, _decide(fx))
    assert fx.cstate.agent_statuses["HIC1"].mode is Mode.WAITING
    (req,) = fx.cstate.crane_queue
    assert (req.kind, req.task_id) == ("task_assist", "H1")
    # a second decision does not duplicate the request
    fx.cstate.agent_statuses["HIC1"].mode = Mode.TASKING
    assert _decide(fx).code == "noop"


def test_complete_deregisters_area_and_promotes_successor():
    fx = fixture("a_c9")
    assert fx.pstate.area_of("G1") is not None
    _apply(fx, _decide(fx))
    assert fx.cstate.pools["G1"] is Pool.END
    assert fx.pstate.area_of("G1") is None
    assert fx.cstate.pools["G2"] is Pool.WAIT
    promote_tasks(fx.cstate, fx.scenario)
    assert fx.cstate.pools["G2"] is Pool.QUEUE
    st = fx.cstate.agent_statuses["GC1"]
    assert st.mode is Mode.REACHING and st.target_scope == []


def test_acquire_installs_scope():
    fx = fixture("a_c10")
    out = _decide(fx)
    assert out.new_target_scope == ("g1",)
    _apply(fx, out)
    assert fx.cstate.agent_statuses["GC1"].target_scope == ["g1"]


def test_outlet_arrival_deregisters():
    fx = fixture("a_c10")
    fx.cstate.pools["G1"] = Pool.END
    fx.cstate.pools["G2"] = Pool.END
    out = _decide(fx)
    assert out.new_target_scope == (OUTLET_ID,)
    _apply(fx, out)
    pose = fx.pstate.poses["GC1"]
    pose.x, pose.y = fx.scenario.outlet_position
    out = _decide(fx)
    assert out.code == "a_c10" and out.status_transition is Mode.DEREGISTERED
    _apply(fx, out)
    assert fx.cstate.agent_statuses["GC1"].mode is Mode.DEREGISTERED
    assert "GC1" in fx.pstate.inactive


def test_resume_without_paused_task_is_violation():
    fx = fixture("a_c10")
    out = DecisionOutcome(ConstructionAction("a_c4", {"task": "G1"}))
    with pytest.raises(ContractViolation):
        _apply(fx, out)


def test_decide_rejects_deregistered():
    fx = fixture("a_c10")
    fx.cstate.agent_statuses["GC1"].mode = Mode.DEREGISTERED
    with pytest.raises(ContractViolation):
        _decide(fx)


def test_unknown_action_code():
    with pytest.raises(ValueError):
        ConstructionAction("a_c11")


def test_reach_distance_adds_body_radius():
    fx = fixture("a_c1")
    r = fx.pstate.radii["HIC1"]
    assert reach_distance(fx.scenario, "p1", "HIC", r, "H1") == pytest.approx(2.5 + r)


def test_space_blocked_target_is_not_feasible():
    # G areas are 1.1 m, so components 2.1 m apart conflict
    tasks = [make_task("G1", "G", "c1"), make_task("G2", "G", "c2")]
    sc = make_scenario([("c1", (5.0, 10.0)), ("c2", (7.1, 10.0))], tasks,
                       [make_crew("GC1", "GC"), make_crew("GC2", "GC")])
    assert sc.space_conflicts["G1"] == frozenset({"G2"})
    cs = promoted_state(sc)
    assert feasible_targets(cs, sc, "GC") == ["c1", "c2"]
    cs.pools["G1"] = Pool.ON
    assert feasible_targets(cs, sc, "GC") == []
    assert idle_cause(cs, sc, "GC") == "space"


def test_idle_cause_predecessor(chain_scenario):
    cs = promoted_state(chain_scenario)
    cs.pools["A"] = Pool.ON
    assert idle_cause(cs, chain_scenario, "GC") == "predecessor"


def test_instant_stage_completes_on_initiation():
    fx = fixture("a_c1")
    fx.dyn = Dynamics(instant_tasks=True, instant_crane=True, infinite_stock=True)
    _apply(fx, _decide(fx))
    assert fx.cstate.pools["H1"] is Pool.END
    assert fx.pstate.area_of("H1") is None
    assert fx.cstate.start_tick["H1"] == fx.cstate.end_tick["H1"]
