"""Explicit-state checking of composed machines.

Invariants are checked by exhaustive breadth-first reachability, which makes
every counterexample a shortest one. Liveness is checked in bounded-lasso
form: a violation witness is a reachable cycle avoiding the recurrence
predicate, with stem plus cycle no longer than the bound. Plan search is the
same reachability machinery pointed at a goal instead of a violation.

States are explored as packed integers; decoding happens once per expanded
state. A configurable cap bounds the visited set, and blowing through it
raises instead of silently truncating the verdict.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from . import composer
from .archetypes import StepOptions
from .config import DEFAULT_LIVENESS_BOUND, DEFAULT_STATE_CAP, PlanSettings
from .exprs import Always, Eventually, Next, Pred, Temporal, Until
from .ir import (
    Assertion,
    AssertionFlavor,
    AssertionKind,
    CompositeMachine,
    ModelError,
    Trace,
    TraceKind,
    Value,
)

__all__ = [
    "Outcome",
    "Verdict",
    "StateCapExceeded",
    "UnsupportedAssertion",
    "check_invariant",
    "check_liveness_bounded",
    "find_plan",
    "check",
]


class UnsupportedAssertion(ModelError):
    """The formula is not of a shape this checker handles."""


class StateCapExceeded(ModelError):
    """The reachable set outgrew the configured cap; carries partial stats."""

    def __init__(self, cap: int, states_explored: int, frontier_peak: int, elapsed_steps: int):
        super().__init__(
            f"state cap {cap} exceeded after {states_explored} states "
            f"({elapsed_steps} steps deep)"
        )
        self.cap = cap
        self.states_explored = states_explored
        self.frontier_peak = frontier_peak
        self.elapsed_steps = elapsed_steps


class Outcome(enum.Enum):
    VERIFIED = "Verified"
    FALSIFIED = "Falsified"
    BOUND_EXHAUSTED = "BoundExhausted"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    trace: Optional[Trace] = None
    bound: Optional[int] = None
    states_explored: int = 0
    frontier_peak: int = 0
    elapsed_steps: int = 0

    @property
    def verified(self) -> bool:
        return self.outcome is Outcome.VERIFIED

    @property
    def falsified(self) -> bool:
        return self.outcome is Outcome.FALSIFIED


def _formula(a) -> Temporal:
    return a.formula if isinstance(a, Assertion) else a


def _invariant_body(formula: Temporal) -> Pred:
    if not isinstance(formula, Always):
        raise UnsupportedAssertion("invariant checking needs a formula of the form G p")
    body = formula.body
    if isinstance(body, (Always, Eventually, Next, Until)):
        raise UnsupportedAssertion("invariant checking needs a plain predicate under G")
    return body


def _liveness_body(formula: Temporal) -> Pred:
    if not isinstance(formula, Always) or not isinstance(formula.body, Eventually):
        raise UnsupportedAssertion("liveness checking needs a formula of the form G F q")
    body = formula.body.body
    if isinstance(body, (Always, Eventually, Next, Until)):
        raise UnsupportedAssertion("liveness checking needs a plain predicate under G F")
    return body


def _evaluator(m: CompositeMachine, pred: Pred):
    """Per-state truth of ``pred``, skipping the full labeling build when the
    predicate reads state slots only."""
    fast = composer.state_eval(m, pred)
    if fast is not None:
        return fast

    def slow(state: Tuple[Value, ...]) -> bool:
        return bool(pred.eval(composer.labeling(m, state)))

    return slow


# ---------------------------------------------------------------------------
# invariants


def check_invariant(
    m: CompositeMachine,
    assertion,
    state_cap: int = DEFAULT_STATE_CAP,
) -> Verdict:
    """Exhaustive reachability against G p; counterexamples are shortest."""
    pred = _invariant_body(_formula(assertion))
    holds = _evaluator(m, pred)
    parents: Dict[int, Optional[int]] = {}
    frontier: List[int] = []
    for state in composer.initial_states(m):
        enc = composer.encode_state(m, state)
        if enc not in parents:
            parents[enc] = None
            frontier.append(enc)
    peak = len(frontier)
    depth = 0
    while frontier:
        nxt: List[int] = []
        for enc in frontier:
            state = composer.decode_state(m, enc)
            if not holds(state):
                trace = _trace_to(m, enc, parents, TraceKind.COUNTEREXAMPLE)
                return Verdict(
                    Outcome.FALSIFIED,
                    trace=trace,
                    states_explored=len(parents),
                    frontier_peak=peak,
                    elapsed_steps=depth,
                )
            for succ in composer.successor_encodings(m, state):
                if succ not in parents:
                    parents[succ] = enc
                    nxt.append(succ)
                    if len(parents) > state_cap:
                        raise StateCapExceeded(state_cap, len(parents), peak, depth)
        frontier = nxt
        peak = max(peak, len(frontier))
        if frontier:
            depth += 1
    return Verdict(
        Outcome.VERIFIED,
        states_explored=len(parents),
        frontier_peak=peak,
        elapsed_steps=depth,
    )


def _trace_to(
    m: CompositeMachine,
    enc: int,
    parents: Dict[int, Optional[int]],
    kind: TraceKind,
    loop_index: Optional[int] = None,
    tail: Sequence[int] = (),
) -> Trace:
    chain: List[int] = []
    cursor: Optional[int] = enc
    while cursor is not None:
        chain.append(cursor)
        cursor = parents[cursor]
    chain.reverse()
    chain.extend(tail)
    steps = tuple(
        composer.labeling(m, composer.decode_state(m, e)) for e in chain
    )
    return Trace(kind=kind, steps=steps, loop_index=loop_index)


# ---------------------------------------------------------------------------
# bounded liveness


def check_liveness_bounded(
    m: CompositeMachine,
    assertion,
    bound: int = DEFAULT_LIVENESS_BOUND,
    state_cap: int = DEFAULT_STATE_CAP,
) -> Verdict:
    """Lasso search against G F q.

    Falsified when some reachable cycle avoids q with stem plus cycle within
    the bound. Verified when the avoidance subgraph has no cycle at all, a
    fact the exhaustive walk can establish outright; BoundExhausted when
    cycles exist but none fits the bound.
    """
    if bound < 1:
        raise ModelError(f"liveness bound must be at least 1, got {bound}")
    q = _liveness_body(_formula(assertion))

    parents: Dict[int, Optional[int]] = {}
    dist: Dict[int, int] = {}
    notq: Set[int] = set()
    frontier: List[int] = []
    for state in composer.initial_states(m):
        enc = composer.encode_state(m, state)
        if enc not in parents:
            parents[enc] = None
            dist[enc] = 0
            frontier.append(enc)
    peak = len(frontier)
    depth = 0
    while frontier:
        nxt: List[int] = []
        for enc in frontier:
            state = composer.decode_state(m, enc)
            if not bool(q.eval(composer.labeling(m, state))):
                notq.add(enc)
            for succ in composer.successor_encodings(m, state):
                if succ not in parents:
                    parents[succ] = enc
                    dist[succ] = depth + 1
                    nxt.append(succ)
                    if len(parents) > state_cap:
                        raise StateCapExceeded(state_cap, len(parents), peak, depth)
        frontier = nxt
        peak = max(peak, len(frontier))
        if frontier:
            depth += 1

    stats = dict(states_explored=len(parents), frontier_peak=peak, elapsed_steps=depth)

    # adjacency restricted to states where q fails; any cycle in here is a
    # counterexample lasso once a stem is attached
    adj: Dict[int, List[int]] = {}
    for enc in notq:
        state = composer.decode_state(m, enc)
        adj[enc] = [s for s in composer.successor_encodings(m, state) if s in notq]

    if not _has_cycle(adj):
        return Verdict(Outcome.VERIFIED, **stats)

    for entry in sorted(notq, key=lambda e: (dist[e], e)):
        budget = bound - dist[entry]
        if budget < 1:
            continue
        cycle = _shortest_cycle(adj, entry, budget)
        if cycle is None:
            continue
        trace = _trace_to(
            m,
            entry,
            parents,
            TraceKind.COUNTEREXAMPLE,
            loop_index=dist[entry],
            tail=cycle[1:-1],  # entry ... entry, endpoints implicit
        )
        return Verdict(Outcome.FALSIFIED, trace=trace, **stats)
    return Verdict(Outcome.BOUND_EXHAUSTED, bound=bound, **stats)


def _has_cycle(adj: Dict[int, List[int]]) -> bool:
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {v: WHITE for v in adj}
    for root in adj:
        if color[root] != WHITE:
            continue
        stack: List[Tuple[int, int]] = [(root, 0)]
        color[root] = GRAY
        while stack:
            node, i = stack[-1]
            if i < len(adj[node]):
                stack[-1] = (node, i + 1)
                succ = adj[node][i]
                if color[succ] == GRAY:
                    return True
                if color[succ] == WHITE:
                    color[succ] = GRAY
                    stack.append((succ, 0))
            else:
                color[node] = BLACK
                stack.pop()
    return False


def _shortest_cycle(adj: Dict[int, List[int]], entry: int, budget: int) -> Optional[List[int]]:
    """Shortest path entry -> entry inside adj, as a node list, or None if
    longer than budget."""
    back: Dict[int, int] = {}
    frontier = [entry]
    for steps in range(1, budget + 1):
        nxt: List[int] = []
        for node in frontier:
            for succ in adj[node]:
                if succ == entry:
                    path = [entry, node]
                    while path[-1] != entry:
                        path.append(back[path[-1]])
                    if len(path) == 2 and node == entry:
                        return [entry, entry]
                    path.reverse()
                    return path
                if succ not in back:
                    back[succ] = node
                    nxt.append(succ)
        frontier = nxt
        if not frontier:
            break
    return None


# ---------------------------------------------------------------------------
# plan search


def find_plan(
    m: CompositeMachine,
    assertion,
    settings: Optional[PlanSettings] = None,
    keep: Optional[Pred] = None,
    state_cap: int = DEFAULT_STATE_CAP,
) -> Verdict:
    """Search for a shortest run reaching the goal hidden in G(not goal).

    Faults stay out of the search unless the settings enable them: a repair
    plan must not lean on components breaking at the right moment. The
    optional ``keep`` predicate must hold at every step after the first, and
    the toggle guard refuses to flip the same switch twice in a row.
    """
    settings = settings or PlanSettings()
    goal = _invariant_body(_formula(assertion)).negated()
    options = StepOptions(user_actions=True, faults=settings.allow_faults, free=True)
    guard_toggles = settings.no_consecutive_toggle
    n_inst = len(m.instances)
    user_targets: List[FrozenSet[Value]] = [
        frozenset(t for _, t in inst.spec.user_actions) for inst in m.instances
    ]

    Node = Tuple[int, FrozenSet[int]]
    no_toggles: FrozenSet[int] = frozenset()
    parents: Dict[Node, Optional[Node]] = {}
    frontier: List[Node] = []
    for state in composer.initial_states(m):
        node = (composer.encode_state(m, state), no_toggles)
        if node not in parents:
            parents[node] = None
            frontier.append(node)
    peak = len(frontier)
    depth = 0
    while frontier:
        nxt: List[Node] = []
        for node in frontier:
            enc, toggled = node
            state = composer.decode_state(m, enc)
            if bool(goal.eval(composer.labeling(m, state))):
                return Verdict(
                    Outcome.FALSIFIED,
                    trace=_plan_trace(m, node, parents),
                    states_explored=len(parents),
                    frontier_peak=peak,
                    elapsed_steps=depth,
                )
            for succ in composer.successors(m, state, options):
                succ_enc = composer.encode_state(m, succ)
                if guard_toggles:
                    flips = frozenset(
                        i
                        for i in range(n_inst)
                        if state[i] != succ[i] and succ[i] in user_targets[i]
                    )
                    if flips & toggled:
                        continue
                    succ_node: Node = (succ_enc, flips)
                else:
                    succ_node = (succ_enc, no_toggles)
                if succ_node in parents:
                    continue
                if keep is not None and not bool(
                    keep.eval(composer.labeling(m, succ))
                ):
                    continue
                parents[succ_node] = node
                nxt.append(succ_node)
                if len(parents) > state_cap:
                    raise StateCapExceeded(state_cap, len(parents), peak, depth)
        frontier = nxt
        peak = max(peak, len(frontier))
        if frontier:
            depth += 1
    return Verdict(
        Outcome.VERIFIED,
        states_explored=len(parents),
        frontier_peak=peak,
        elapsed_steps=depth,
    )


def _plan_trace(
    m: CompositeMachine,
    node: Tuple[int, FrozenSet[int]],
    parents: Dict,
) -> Trace:
    chain: List[int] = []
    cursor = node
    while cursor is not None:
        chain.append(cursor[0])
        cursor = parents[cursor]
    chain.reverse()
    steps = tuple(composer.labeling(m, composer.decode_state(m, e)) for e in chain)
    return Trace(kind=TraceKind.PLAN, steps=steps)


# ---------------------------------------------------------------------------
# dispatch


def check(
    m: CompositeMachine,
    assertion: Assertion,
    bound: int = DEFAULT_LIVENESS_BOUND,
    state_cap: int = DEFAULT_STATE_CAP,
    settings: Optional[PlanSettings] = None,
    keep: Optional[Pred] = None,
) -> Verdict:
    """Route an assertion to the analysis its shape calls for."""
    if (
        assertion.kind is AssertionKind.PATH_DISCOVERY
        and assertion.flavor is AssertionFlavor.REPAIR_GOAL
    ):
        return find_plan(m, assertion, settings=settings, keep=keep, state_cap=state_cap)
    formula = assertion.formula
    if isinstance(formula, Always) and isinstance(formula.body, Eventually):
        return check_liveness_bounded(m, assertion, bound=bound, state_cap=state_cap)
    return check_invariant(m, assertion, state_cap=state_cap)
