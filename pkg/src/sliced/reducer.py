"""State-space reduction by merging load subsystems.

A subsystem whose only contact with the rest of the machine is a single
incoming power net can be replaced by one aggregate component: a bank whose
draw variable ranges over exactly the boundary values the subsystem can
produce. The net keeps its name, so every label written against it stays
valid on the merged machine.

Counterexamples found on a merged machine talk about boundary values, not
about the components behind them. ``refine`` turns such a trace back into a
question for the original machine: can the boundary actually reach the value
that drove the failure.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

from . import archetypes, composer
from .exprs import Always, PCmp, Var
from .ir import (
    Assertion,
    AssertionFlavor,
    AssertionKind,
    CompositeMachine,
    Connection,
    Instance,
    ModelError,
    Net,
    Trace,
)

__all__ = [
    "MergeCandidate",
    "MergeReport",
    "NotMergeable",
    "BoundaryValueAbsent",
    "find_merge_candidates",
    "isolate_subsystem",
    "merge",
    "auto_merge",
    "report_for",
    "refine",
]

DEFAULT_ENUMERATION_CAP = 1_000_000


class NotMergeable(ModelError):
    """The named subsystem does not meet the conditions for merging."""


class BoundaryValueAbsent(ModelError):
    """A trace offered for refinement never mentions the boundary net."""


@dataclass(frozen=True)
class MergeCandidate:
    """One mergeable subsystem, with its boundary already analyzed.

    ``domain`` holds every value the boundary net can take over the reachable
    states of the isolated subsystem; ``initial_domain`` the values it can
    take at step zero. ``exact`` is False when enumeration was skipped for
    size and the domain is a 0..max interval instead.
    """

    group: str
    members: Tuple[str, ...]
    boundary: Net
    domain: Tuple[int, ...]
    initial_domain: Tuple[int, ...]
    naive_count: int
    exact: bool = True

    @property
    def effective_count(self) -> int:
        return len(self.domain)

    @property
    def reduction(self) -> float:
        return self.naive_count / len(self.domain)


@dataclass(frozen=True)
class MergeReport:
    group: str
    members: Tuple[str, ...]
    boundary_label: str
    naive_count: int
    effective_count: int
    reduction: float
    exact: bool


def report_for(candidate: MergeCandidate) -> MergeReport:
    return MergeReport(
        group=candidate.group,
        members=candidate.members,
        boundary_label=candidate.boundary.count_label,
        naive_count=candidate.naive_count,
        effective_count=candidate.effective_count,
        reduction=candidate.reduction,
        exact=candidate.exact,
    )


# ---------------------------------------------------------------------------
# candidate discovery


def find_merge_candidates(
    machine: CompositeMachine,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> Tuple[MergeCandidate, ...]:
    """Every group of the machine that can be merged, in name order.

    A group qualifies when it is a strict subset of the machine, exactly one
    net crosses into it, that net fans out only to group members, nothing
    inside feeds anything outside, and no member carries timing duties.
    """
    found = []
    for group in sorted(machine.groups):
        members = machine.groups[group]
        try:
            found.append(_analyze(machine, group, members, enumeration_cap))
        except NotMergeable:
            continue
    return tuple(found)


def _analyze(
    machine: CompositeMachine,
    group: str,
    members: Sequence[str],
    enumeration_cap: int,
) -> MergeCandidate:
    inside = set(members)
    if not inside:
        raise NotMergeable(f"group {group!r} is empty")
    all_names = {i.name for i in machine.instances}
    missing = inside - all_names
    if missing:
        raise NotMergeable(f"group {group!r} names unknown instances: {sorted(missing)}")
    if inside == all_names:
        raise NotMergeable(f"group {group!r} covers the whole machine")

    for name in sorted(inside):
        inst = machine.instance(name)
        if inst.period is not None or inst.deadline is not None or inst.final_state is not None:
            raise NotMergeable(f"{name} carries timing duties and cannot be merged away")

    inbound: List[Net] = []
    for net in machine.nets:
        src_in = net.source is not None and net.source in inside
        sinks_in = [s for s in net.sinks if s in inside]
        if src_in and len(sinks_in) < len(net.sinks):
            raise NotMergeable(f"group {group!r} feeds {net.name} out of the subsystem")
        if not src_in and sinks_in:
            if len(sinks_in) < len(net.sinks):
                raise NotMergeable(f"net {net.name} fans out past the subsystem boundary")
            inbound.append(net)
    if len(inbound) != 1:
        raise NotMergeable(
            f"group {group!r} has {len(inbound)} crossing nets, a merge needs exactly 1"
        )
    boundary = inbound[0]

    # a member powered straight from the environment is a second, invisible
    # boundary, so it disqualifies the group
    for name in sorted(inside):
        if f"Env_{name}" in machine.free_inputs:
            raise NotMergeable(f"{name} takes power directly from the environment")

    isolated = isolate_subsystem(machine, members, name=group)
    naive = 1
    for name in members:
        naive *= len(machine.instance(name).spec.values)

    label = boundary.count_label
    reach_size = naive * (2 ** len(isolated.free_inputs))
    if reach_size <= enumeration_cap:
        domain = _enumerate_boundary(isolated, label)
        exact = True
    else:
        domain = tuple(range(_boundary_interval_max(isolated, label) + 1))
        exact = False

    init_size = 2 ** len(isolated.free_inputs)
    for inst in isolated.instances:
        init_size *= len(inst.spec.initial)
    if init_size <= enumeration_cap:
        initial_domain = tuple(
            sorted(
                {
                    int(composer.labeling(isolated, state)[label])
                    for state in composer.initial_states(isolated)
                }
            )
        )
    else:
        initial_domain = domain

    return MergeCandidate(
        group=group,
        members=tuple(members),
        boundary=boundary,
        domain=domain,
        initial_domain=initial_domain,
        naive_count=naive,
        exact=exact,
    )


def _enumerate_boundary(isolated: CompositeMachine, label: str) -> Tuple[int, ...]:
    """Reachable values of the boundary net, by plain breadth-first search."""
    values: Set[int] = set()
    seen: Set[int] = set()
    frontier: List[int] = []
    for state in composer.initial_states(isolated):
        enc = composer.encode_state(isolated, state)
        if enc not in seen:
            seen.add(enc)
            frontier.append(enc)
    while frontier:
        nxt: List[int] = []
        for enc in frontier:
            state = composer.decode_state(isolated, enc)
            values.add(int(composer.labeling(isolated, state)[label]))
            for succ in composer.successor_encodings(isolated, state):
                if succ not in seen:
                    seen.add(succ)
                    nxt.append(succ)
        frontier = nxt
    return tuple(sorted(values))


def _boundary_interval_max(isolated: CompositeMachine, label: str) -> int:
    """Upper bound on the boundary value, for subsystems too large to walk.

    Per-component draw maxima are folded along the combinational order, so
    pass-through components see the worst case of everything behind them.
    """
    rt = composer._runtime(isolated)
    max_draw: Dict[int, int] = {}
    for inst_idx, out_name, expr in rt.eval_seq:
        if out_name != "draw":
            continue
        inst = rt.insts[inst_idx]
        downstream = sum(max_draw.get(s, 0) for s in rt.draw_sources[inst_idx])
        best = 0
        for state in inst.spec.values:
            for power in (False, True):
                ctx = archetypes.ComponentContext(
                    state=state, power=power, draw=downstream, params=inst.spec.params
                )
                best = max(best, int(expr.eval(ctx)))
        max_draw[inst_idx] = best
    for net_label, sink_idxs in rt.net_info:
        if net_label == label:
            return sum(max_draw.get(s, 0) for s in sink_idxs)
    raise ModelError(f"isolated machine has no net labeled {label!r}")


# ---------------------------------------------------------------------------
# isolation and merging


def isolate_subsystem(
    machine: CompositeMachine,
    subsystem: Union[str, Sequence[str]],
    name: Optional[str] = None,
) -> CompositeMachine:
    """Cut a set of instances out of the machine as a machine of its own.

    Incoming nets become environment feeds that keep their original net
    names, so boundary labels carry over verbatim. Connections leaving the
    subsystem are dropped, and timing is stripped: an isolated subsystem is
    untimed by construction.
    """
    if isinstance(subsystem, str):
        try:
            members: Tuple[str, ...] = machine.groups[subsystem]
        except KeyError:
            raise ModelError(f"machine has no group named {subsystem!r}") from None
        title = name or subsystem
    else:
        members = tuple(subsystem)
        title = name or f"{machine.name}_part"
    inside = set(members)
    if not inside:
        raise ModelError("cannot isolate an empty subsystem")

    insts = [
        replace(machine.instance(n), period=None, deadline=None)
        for n in sorted(inside)
    ]

    net_name = {}
    for net in machine.nets:
        for s in net.sinks:
            net_name[(net.source, net.source_port, s)] = net.name

    conns: List[Connection] = []
    for conn in machine.connections:
        src_in = conn.source is not None and conn.source in inside
        snk_in = conn.sink in inside
        if src_in and snk_in:
            conns.append(conn)
        elif snk_in:
            conns.append(
                Connection(
                    source=None,
                    source_port=conn.source_port,
                    sink=conn.sink,
                    sink_port=conn.sink_port,
                    line_name=net_name[(conn.source, conn.source_port, conn.sink)],
                    capacity=conn.capacity,
                )
            )

    groups = {
        g: ms for g, ms in machine.groups.items() if set(ms) <= inside and set(ms) != inside
    }
    return composer.compose(title, insts, conns, clock=None, groups=groups)


def merge(machine: CompositeMachine, candidate: MergeCandidate) -> CompositeMachine:
    """Replace the candidate subsystem with one merged bank instance.

    The bank is named after the group, sits on the old boundary net under
    the old net name, and its draw variable ranges over the candidate's
    effective domain with the initial values pinned to the subsystem's own
    initial boundary values.
    """
    inside = set(candidate.members)
    merged_name = candidate.group
    outside = {i.name for i in machine.instances} - inside
    if merged_name in outside:
        raise ModelError(f"cannot merge: an instance named {merged_name!r} already exists")

    spec = archetypes.merged_bank_for_domain(candidate.domain, candidate.initial_domain)
    bank = Instance(name=merged_name, spec=spec)
    kept = [i for i in machine.instances if i.name not in inside]

    conns: List[Connection] = []
    boundary_done = False
    for conn in machine.connections:
        src_in = conn.source is not None and conn.source in inside
        snk_in = conn.sink in inside
        if not src_in and not snk_in:
            conns.append(conn)
        elif snk_in and not src_in:
            if boundary_done:
                continue
            conns.append(
                Connection(
                    source=conn.source,
                    source_port=conn.source_port,
                    sink=merged_name,
                    sink_port=1,
                    line_name=candidate.boundary.name,
                    capacity=candidate.boundary.capacity,
                )
            )
            boundary_done = True
        # connections fully inside the subsystem vanish with it

    groups: Dict[str, Tuple[str, ...]] = {}
    for g, ms in machine.groups.items():
        if g == candidate.group:
            continue
        filtered = tuple(m for m in ms if m not in inside)
        if len(filtered) < len(ms):
            filtered = tuple(sorted(filtered + (merged_name,)))
        if filtered:
            groups[g] = filtered

    return composer.compose(
        machine.name, kept + [bank], conns, clock=machine.clock, groups=groups
    )


def auto_merge(
    machine: CompositeMachine,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> Tuple[CompositeMachine, Tuple[MergeReport, ...]]:
    """Merge every candidate, repeatedly, until none remain.

    Merging one group can expose another (a parent group shrinks to a single
    crossing net once its children collapse), so discovery reruns after each
    merge. Terminates because every round removes a group.
    """
    reports: List[MergeReport] = []
    while True:
        candidates = find_merge_candidates(machine, enumeration_cap)
        if not candidates:
            return machine, tuple(reports)
        machine = merge(machine, candidates[0])
        reports.append(report_for(candidates[0]))


# ---------------------------------------------------------------------------
# trace refinement


def refine(trace: Trace, boundary_label: str) -> Assertion:
    """Turn a merged-machine counterexample into a check for the original.

    The value that matters is the one the boundary held just before the
    failing step, so the assertion claims that value is never reached; a
    counterexample to it is a concrete subsystem run realizing the merged
    trace's critical boundary value.
    """
    try:
        values = trace.values_of(boundary_label)
    except KeyError:
        raise BoundaryValueAbsent(
            f"trace has no value for {boundary_label!r} at every step"
        ) from None
    pivot = values[-2] if len(values) >= 2 else values[-1]
    formula = Always(PCmp("!=", Var(boundary_label), int(pivot)))
    return Assertion(
        kind=AssertionKind.PATH_DISCOVERY,
        flavor=AssertionFlavor.BOUNDARY,
        formula=formula,
        provenance=f"refinement: can {boundary_label} reach {int(pivot)}",
    )
