import math

import pytest
from hypothesis import HealthCheck, settings

from crewsim.physics import AgentPose, PhysicalState
from crewsim.scenario import (ComponentSpec, CraneSpec, Rect, Scenario, build_case_study, build_toy_scenario,
                              make_crew, make_storage, make_task)
from crewsim.taskflow import initial_construction_state, promote_tasks

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def make_scenario(components, tasks, crews, storages=(), size=(20.0, 20.0), lift=120.0, name="fixture"):
    """Small hand-built scenario; components are (id, (x, y)) with 2 m square footprints."""
    comps = tuple(ComponentSpec(cid, pos, Rect.centered(pos, 2.0, 2.0)) for cid, pos in components)
    return Scenario(
        plane_width=size[0],
        plane_height=size[1],
        components=comps,
        tasks=tuple(tasks),
        storages=tuple(storages),
        crews=tuple(crews),
        crane=CraneSpec("TC", lift, (size[0] / 2, size[1] - 1.0)),
        outlet_position=(size[0] / 2, 1.0),
        name=name,
    )


def physical_state(scenario, poses=None):
    """Agents at their spawn points (or the given (x, y, heading)), no congestion areas."""
    poses = poses or {}
    out = {}
    for a in scenario.crews:
        x, y, h = poses.get(a.id, (*(a.spawn or (1.0 + len(out) * 2.0, 1.0)), 90.0))
        out[a.id] = AgentPose(x, y, h % 360.0)
    return PhysicalState(out, {a.id: a.radius for a in scenario.crews},
                         Rect(0.0, 0.0, scenario.plane_width, scenario.plane_height))


def promoted_state(scenario, infinite_stock=False):
    return promote_tasks(initial_construction_state(scenario, infinite_stock), scenario)


@pytest.fixture(scope="session")
def toy():
    return build_toy_scenario()


@pytest.fixture(scope="session")
def case_study():
    return build_case_study()


@pytest.fixture
def chain_scenario():
    """A -> B -> C grouting chain on three components."""
    tasks = [make_task("A", "G", "c1"), make_task("B", "G", "c2", ["A"]), make_task("C", "G", "c3", ["B"])]
    return make_scenario([("c1", (4.0, 10.0)), ("c2", (10.0, 10.0)), ("c3", (16.0, 10.0))], tasks,
                         [make_crew("GC1", "GC", spawn=(2.0, 2.0))])


@pytest.fixture
def rebar_scenario():
    """One reinforcing crew, one R task next to a rebar storage."""
    tasks = [make_task("R1", "R", "q1", quantity=0.05)]
    storages = [make_storage("S_reb", "rebars", (14.0, 4.0), capacity=0.2, initial_stock=0.2)]
    return make_scenario([("q1", (6.0, 10.0))], tasks, [make_crew("RC1", "RC", max_load=0.1, spawn=(2.0, 2.0))],
                         storages)


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
