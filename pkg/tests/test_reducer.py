"""Subsystem merging: discovery, isolation, replacement, refinement."""

import pytest

from sliced import composer, reducer
from sliced.exprs import Always, PCmp, Var
from sliced.ir import (
    Archetype,
    AssertionFlavor,
    AssertionKind,
    Instance,
    ModelError,
    Trace,
    TraceKind,
)
from sliced.reducer import (
    BoundaryValueAbsent,
    NotMergeable,
    auto_merge,
    find_merge_candidates,
    isolate_subsystem,
    merge,
    refine,
    report_for,
)


def test_bank6_candidate_numbers(bank6):
    _, machine, _ = bank6
    (cand,) = find_merge_candidates(machine)
    assert cand.group == "BankOne"
    assert cand.members == tuple(f"Actuator{i}" for i in range(1, 7))
    assert cand.boundary.name == "BankFeed"
    assert cand.naive_count == 3**6 == 729
    assert cand.domain == tuple(range(13))
    assert cand.effective_count == 13
    assert cand.initial_domain == (0, 6)
    assert cand.exact
    assert cand.reduction == pytest.approx(729 / 13)


def test_report_mirrors_candidate(bank6):
    _, machine, _ = bank6
    (cand,) = find_merge_candidates(machine)
    rep = report_for(cand)
    assert rep.boundary_label == "BankFeed.count"
    assert (rep.naive_count, rep.effective_count) == (729, 13)
    assert rep.exact


def test_whole_machine_group_is_not_a_candidate(trip):
    # every corpus model has a root group covering everything; that group
    # never qualifies
    _, machine, _ = trip
    assert find_merge_candidates(machine) == ()


def test_timing_duty_blocks_merging(bank6):
    _, machine, _ = bank6
    from dataclasses import replace

    timed = composer.compose(
        machine.name,
        [
            replace(i, period=100) if i.name == "Actuator3" else i
            for i in machine.instances
        ],
        machine.connections,
        groups=machine.groups,
    )
    with pytest.raises(NotMergeable, match="timing"):
        reducer._analyze(timed, "BankOne", timed.groups["BankOne"], 10**6)


def test_outward_feed_blocks_merging(bank6):
    _, machine, _ = bank6
    # pretend one bank member also powers the sensor-free breaker side:
    # an inside->outside net disqualifies the group
    from sliced.ir import Connection

    extra = Connection(
        source="Actuator1", source_port=1, sink="Battery1", sink_port=2, line_name="BackFeed"
    )
    looped = composer.compose(
        machine.name,
        machine.instances,
        tuple(machine.connections) + (extra,),
        groups=machine.groups,
    )
    with pytest.raises(NotMergeable, match="feeds BackFeed out"):
        reducer._analyze(looped, "BankOne", looped.groups["BankOne"], 10**6)


def test_partial_fanout_blocks_merging(bank6):
    _, machine, _ = bank6
    # widen the boundary so it also feeds a non-member
    groups = dict(machine.groups)
    groups["BankOne"] = groups["BankOne"][:-1]
    smaller = composer.compose(
        machine.name, machine.instances, machine.connections, groups=groups
    )
    with pytest.raises(NotMergeable, match="fans out past"):
        reducer._analyze(smaller, "BankOne", groups["BankOne"], 10**6)


def test_environment_powered_member_blocks_merging():
    from sliced import archetypes
    from sliced.ir import Connection

    fan = Instance(name="Fan1", spec=archetypes.instantiate(Archetype.ACTUATOR, {"drawlimit": 1}))
    lamp = Instance(name="Lamp1", spec=archetypes.instantiate(Archetype.ACTUATOR, {"drawlimit": 1}))
    batt = Instance(name="Battery1", spec=archetypes.instantiate(Archetype.BATTERY, {"capacity": 4}))
    m = composer.compose(
        "m",
        [batt, fan, lamp],
        [Connection(source="Battery1", source_port=1, sink="Fan1", sink_port=1, line_name="Feed")],
        groups={"Bank": ("Fan1", "Lamp1")},
    )
    assert "Env_Lamp1" in m.free_inputs
    with pytest.raises(NotMergeable, match="environment"):
        reducer._analyze(m, "Bank", m.groups["Bank"], 10**6)


def test_isolate_keeps_boundary_net_name(bank6):
    _, machine, _ = bank6
    iso = isolate_subsystem(machine, "BankOne")
    assert iso.name == "BankOne"
    assert {i.name for i in iso.instances} == set(machine.groups["BankOne"])
    assert [n.name for n in iso.nets] == ["BankFeed"]
    assert iso.nets[0].source is None
    assert iso.free_inputs == ("Env_BankFeed",)
    assert iso.clock is None


def test_isolate_unknown_group(bank6):
    _, machine, _ = bank6
    with pytest.raises(ModelError, match="no group"):
        isolate_subsystem(machine, "BankNine")


def test_merge_swaps_subsystem_for_bank(bank6):
    _, machine, _ = bank6
    (cand,) = find_merge_candidates(machine)
    merged = merge(machine, cand)
    names = [i.name for i in merged.instances]
    assert "BankOne" in names
    assert not any(n.startswith("Actuator") for n in names)
    bank = merged.instance("BankOne")
    assert bank.spec.tag is Archetype.MERGED_LOAD_BANK
    assert bank.spec.values == tuple(range(13))
    assert bank.spec.initial == (0, 6)
    # boundary net survives under its own name
    assert any(n.name == "BankFeed" and n.sinks == ("BankOne",) for n in merged.nets)
    # the containing group now lists the bank instead of the members
    assert "BankOne" in merged.groups["ADAPTBank6"]
    assert len(merged.groups["ADAPTBank6"]) == 3


def test_merge_reduces_reachable_states(bank6):
    from tests.oracle import reachable_count

    _, machine, _ = bank6
    merged, reports = auto_merge(machine)
    assert len(reports) == 1
    assert reachable_count(machine) == 1458
    assert reachable_count(merged) == 26


def test_auto_merge_fixpoint(mini, trip):
    for _, machine, _ in (mini, trip):
        merged, reports = auto_merge(machine)
        assert reports == ()
        assert merged == machine


def test_interval_fallback_when_enumeration_capped(bank6):
    _, machine, _ = bank6
    # cap below the 729-state walk but above the 2 initial states: the
    # domain falls back to an interval while the initial values stay exact
    (cand,) = find_merge_candidates(machine, enumeration_cap=10)
    assert not cand.exact
    assert cand.domain == tuple(range(13))  # 6 fans of 2 each, plus zero
    assert cand.initial_domain == (0, 6)
    # cap below even the initial-state product: everything widens
    (tiny,) = find_merge_candidates(machine, enumeration_cap=1)
    assert tiny.initial_domain == tiny.domain == tuple(range(13))


def test_refine_uses_the_penultimate_boundary_value():
    steps = (
        {"BankFeed.count": 0},
        {"BankFeed.count": 9},
        {"BankFeed.count": 12},
    )
    ref = refine(Trace(kind=TraceKind.COUNTEREXAMPLE, steps=steps), "BankFeed.count")
    assert ref.kind is AssertionKind.PATH_DISCOVERY
    assert ref.flavor is AssertionFlavor.BOUNDARY
    assert ref.formula == Always(PCmp("!=", Var("BankFeed.count"), 9))
    assert ref.provenance == "refinement: can BankFeed.count reach 9"


def test_refine_single_step_trace_uses_its_only_value():
    ref = refine(Trace(kind=TraceKind.COUNTEREXAMPLE, steps=({"BankFeed.count": 4},)), "BankFeed.count")
    assert ref.formula == Always(PCmp("!=", Var("BankFeed.count"), 4))


def test_refine_demands_the_boundary_label():
    with pytest.raises(BoundaryValueAbsent):
        refine(Trace(kind=TraceKind.COUNTEREXAMPLE, steps=({"other": 1},)), "BankFeed.count")
