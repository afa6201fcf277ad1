"""Assertion generation.

Error-discovery assertions come straight from archetype metadata: safety
(error states stay unreached), liveness (periodic components keep reaching
their final state), and capacity (annotated nets stay under their bound).
Path-discovery assertions go the other way around: the machine is started
inside a failure and the assertion claims recovery is impossible, so any
counterexample doubles as a repair plan.
"""

from __future__ import annotations

from dataclasses import replace
from typing import FrozenSet, Mapping, Tuple

from . import composer
from .exprs import Always, Eventually, PCmp, POr, Pred, Temporal, Var, temporal_atoms
from .ir import (
    Archetype,
    Assertion,
    AssertionFlavor,
    AssertionKind,
    CompositeMachine,
    ModelError,
    Value,
)

__all__ = [
    "MissingClock",
    "InvalidErrorState",
    "UnknownVariable",
    "machine_labels",
    "validate_vars",
    "gen_safety",
    "gen_liveness",
    "gen_capacity",
    "gen_all",
    "gen_path_discovery",
]


class MissingClock(ModelError):
    """Deadlines were supplied but nothing defines a clock."""


class InvalidErrorState(ModelError):
    """A failure injection names a state the component cannot fail into."""


class UnknownVariable(ModelError):
    """A formula references a label the machine does not produce."""


def machine_labels(m: CompositeMachine) -> FrozenSet[str]:
    """Every label the machine assigns a value to, in any state."""
    state = composer.initial_states(m)[0]
    return frozenset(composer.labeling(m, state))


def validate_vars(m: CompositeMachine, formula: Temporal) -> None:
    labels = machine_labels(m)
    for atom in temporal_atoms(formula):
        if atom.name not in labels:
            raise UnknownVariable(f"variable {atom.name!r} is not part of the machine")


def gen_safety(m: CompositeMachine) -> Tuple[Assertion, ...]:
    """One assertion per instance per error state: the state never occurs.

    Breakers get a second, positive form claiming they stay connected; both
    say the same thing for a two-state breaker, but reports read better when
    the claim names the good state.
    """
    out = []
    for inst in m.instances:
        label = inst.state_label
        for err in inst.spec.error_states:
            out.append(
                Assertion(
                    kind=AssertionKind.ERROR_DISCOVERY,
                    flavor=AssertionFlavor.SAFETY,
                    formula=Always(PCmp("!=", Var(label), err)),
                    provenance=f"safety: {inst.name} never reaches {err}",
                )
            )
        if inst.spec.tag is Archetype.CIRCUIT_BREAKER:
            out.append(
                Assertion(
                    kind=AssertionKind.ERROR_DISCOVERY,
                    flavor=AssertionFlavor.SAFETY,
                    formula=Always(PCmp("=", Var(label), "connected")),
                    provenance=f"safety: {inst.name} stays connected",
                )
            )
    return tuple(out)


def gen_liveness(m: CompositeMachine) -> Tuple[Assertion, ...]:
    """Recurrence assertions for periodic components with a final state.

    A period alone yields G F(state = final). A deadline additionally pins
    the final state to a clock phase: whenever the clock reads the deadline
    phase, the component must have finished.
    """
    if any(i.deadline is not None for i in m.instances) and m.clock is None:
        raise MissingClock("deadline checks need a timing map to define the clock")
    out = []
    for inst in m.instances:
        final = inst.final_state
        if final is None:
            continue
        if final not in inst.spec.values:
            raise ModelError(
                f"final state {final!r} is outside the domain of {inst.name}"
            )
        label = inst.state_label
        if inst.period is not None:
            out.append(
                Assertion(
                    kind=AssertionKind.ERROR_DISCOVERY,
                    flavor=AssertionFlavor.LIVENESS,
                    formula=Always(Eventually(PCmp("=", Var(label), final))),
                    provenance=f"liveness: {inst.name} keeps reaching {final}",
                )
            )
        if inst.deadline is not None:
            phase = inst.deadline % m.clock.cycle
            # clock = phase implies the final state; written as a disjunction
            formula = Always(
                POr((PCmp("!=", Var("clock"), phase), PCmp("=", Var(label), final)))
            )
            out.append(
                Assertion(
                    kind=AssertionKind.ERROR_DISCOVERY,
                    flavor=AssertionFlavor.LIVENESS,
                    formula=formula,
                    provenance=f"liveness: {inst.name} is {final} by clock {phase}",
                )
            )
    return tuple(out)


def gen_capacity(m: CompositeMachine) -> Tuple[Assertion, ...]:
    """The counting-semaphore view of an annotated net: its total draw never
    exceeds the declared bound."""
    out = []
    for net in m.nets:
        if net.capacity is None:
            continue
        out.append(
            Assertion(
                kind=AssertionKind.ERROR_DISCOVERY,
                flavor=AssertionFlavor.CAPACITY,
                formula=Always(PCmp("<=", Var(net.count_label), net.capacity)),
                provenance=f"capacity: {net.name} carries at most {net.capacity}",
            )
        )
    return tuple(out)


def gen_all(m: CompositeMachine) -> Tuple[Assertion, ...]:
    return gen_safety(m) + gen_liveness(m) + gen_capacity(m)


def gen_path_discovery(
    m: CompositeMachine,
    failures: Mapping[str, Value],
    goal: Pred,
) -> Tuple[CompositeMachine, Assertion]:
    """Build the repair-planning problem for a set of injected failures.

    The returned machine starts with each listed instance pinned to its
    error state; user actions stay non-deterministic, so a search over the
    machine plays the role of the operator. The assertion claims the goal
    is never reached, which makes any counterexample a plan.
    """
    validate_vars(m, goal)
    for name in sorted(failures):
        inst = m.instance(name)
        err = failures[name]
        if err not in inst.spec.error_states:
            raise InvalidErrorState(
                f"{err!r} is not a declared error state of {name}"
            )
    pinned = [
        replace(i, spec=i.spec.with_initial((failures[i.name],)))
        if i.name in failures
        else i
        for i in m.instances
    ]
    failed = composer.compose(
        m.name, pinned, m.connections, clock=m.clock, groups=m.groups
    )
    injected = ", ".join(f"{k}={failures[k]}" for k in sorted(failures))
    assertion = Assertion(
        kind=AssertionKind.PATH_DISCOVERY,
        flavor=AssertionFlavor.REPAIR_GOAL,
        formula=Always(goal.negated()),
        provenance=f"repair goal after {injected}",
    )
    return failed, assertion
