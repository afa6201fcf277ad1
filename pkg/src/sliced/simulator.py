"""Discrete-time execution of composed machines.

The simulator runs the same archetype semantics as the checker, one step per
tick, with every non-deterministic choice resolved by a script: a mapping
from step index to variable assignments. Step 0 addresses the initial state.
Anything the script leaves open falls back to "no change" when staying put
is legal, so quiet components do not need to be scripted at all.

Replay closes the loop on counterexamples: the choices embedded in a trace
are extracted into a script, re-run, and compared variable by variable. A
trace that came from a merged machine does not name the hidden components,
so replay searches for a resolution of their states that matches the trace
on every shared label, boundary values included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from . import composer
from .archetypes import ALL_CHOICES
from .ir import CompositeMachine, ModelError, Trace, TraceKind, Value

__all__ = [
    "UnresolvedChoice",
    "IllegalStep",
    "Mismatch",
    "ReplicationReport",
    "parse_script",
    "load_script",
    "simulate",
    "replay",
]

Script = Mapping[int, Mapping[str, Value]]


class UnresolvedChoice(ModelError):
    """The script left a genuinely open choice unresolved."""

    def __init__(self, step: int, variable: str, choices: Sequence[Value]):
        rendered = ", ".join(str(c) for c in choices)
        super().__init__(
            f"step {step}: {variable} may become any of {{{rendered}}} "
            f"and the script does not choose"
        )
        self.step = step
        self.variable = variable


class IllegalStep(ModelError):
    """A scripted or traced value is not reachable at its step."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"step {step}: {detail}")
        self.step = step


def parse_script(text: str, source: str = "<script>") -> Dict[int, Dict[str, Value]]:
    """Read a script document: {"step": {"variable": value}} with 0-based,
    non-negative integer step keys."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{source}: not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ModelError(f"{source}: a script must be a JSON object keyed by step index")
    script: Dict[int, Dict[str, Value]] = {}
    for key, entry in raw.items():
        try:
            step = int(key)
        except ValueError:
            raise ModelError(f"{source}: step key {key!r} is not an integer") from None
        if step < 0:
            raise ModelError(f"{source}: step {step} is negative")
        if not isinstance(entry, dict):
            raise ModelError(f"{source}: step {step} must map variables to values")
        assignments: Dict[str, Value] = {}
        for var, value in entry.items():
            if not isinstance(value, (str, int, bool)):
                raise ModelError(
                    f"{source}: step {step} sets {var} to a {type(value).__name__}; "
                    f"only strings, integers, and booleans are values"
                )
            assignments[str(var)] = value
        script[step] = assignments
    return script


def load_script(path: str) -> Dict[int, Dict[str, Value]]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_script(handle.read(), source=path)


# ---------------------------------------------------------------------------
# simulation


def _check_script_vars(m: CompositeMachine, script: Script) -> None:
    slots = set(m.slots)
    state = composer.initial_states(m)[0]
    derived = set(composer.labeling(m, state)) - slots
    for step in sorted(script):
        for var in script[step]:
            if var in slots:
                continue
            if var in derived:
                raise ModelError(
                    f"step {step}: {var} is computed from other variables "
                    f"and cannot be scripted"
                )
            raise ModelError(f"step {step}: {var} is not a variable of the machine")


def simulate(m: CompositeMachine, script: Script, horizon: int) -> Trace:
    """Run the machine for ``horizon`` steps under the script.

    The result has horizon + 1 steps, the initial state first. Defaults per
    variable and step: the scripted value when present, otherwise the current
    value when staying is legal, otherwise the single forced value; anything
    still open raises UnresolvedChoice. Free environment inputs start False
    unless scripted.
    """
    if horizon < 0:
        raise ModelError(f"horizon must be non-negative, got {horizon}")
    _check_script_vars(m, script)
    slots = m.slots
    n_inst = len(m.instances)
    n_free = len(m.free_inputs)

    initial_axes: List[Tuple[Value, ...]] = [i.spec.initial for i in m.instances]
    initial_axes.extend((False, True) for _ in range(n_free))
    if m.clock is not None:
        initial_axes.append((m.clock.phases[0],))

    first = script.get(0, {})
    state0: List[Value] = []
    for i, label in enumerate(slots):
        choices = initial_axes[i]
        if label in first:
            value = first[label]
            if value not in choices:
                raise IllegalStep(0, f"{label} cannot start as {value!r}")
            state0.append(value)
        elif len(choices) == 1:
            state0.append(choices[0])
        elif n_inst <= i < n_inst + n_free:
            state0.append(False)  # unscripted environment power starts off
        else:
            raise UnresolvedChoice(0, label, choices)

    states: List[Tuple[Value, ...]] = [tuple(state0)]
    for step in range(1, horizon + 1):
        prev = states[-1]
        candidates = composer.candidate_values(m, prev, ALL_CHOICES)
        entry = script.get(step, {})
        nxt: List[Value] = []
        for i, label in enumerate(slots):
            options = candidates[i]
            if label in entry:
                value = entry[label]
                if value not in options:
                    raise IllegalStep(
                        step,
                        f"{label} cannot move from {prev[i]!r} to {value!r}",
                    )
            elif prev[i] in options:
                value = prev[i]
            elif len(options) == 1:
                value = options[0]
            else:
                raise UnresolvedChoice(step, label, options)
            nxt.append(value)
        states.append(tuple(nxt))

    steps = tuple(composer.labeling(m, s) for s in states)
    return Trace(kind=TraceKind.SIMULATION, steps=steps)


# ---------------------------------------------------------------------------
# replay


@dataclass(frozen=True)
class Mismatch:
    step: int
    label: str
    expected: Value
    actual: Value


@dataclass(frozen=True)
class ReplicationReport:
    """Outcome of replaying a trace through the simulator."""

    steps: int
    compared: Tuple[str, ...]
    skipped: Tuple[str, ...]
    reconstructed: Tuple[str, ...]
    mismatches: Tuple[Mismatch, ...]

    @property
    def fully_replicated(self) -> bool:
        return not self.mismatches


def replay(m: CompositeMachine, t: Trace) -> ReplicationReport:
    """Re-run a trace and report per-step agreement.

    When the trace names every state variable of the machine, it is turned
    into a script and simulated directly; scripted transitions that are not
    legal successors raise IllegalStep at the offending index. When it names
    only some (a merged-machine trace replayed on the original), the missing
    variables are solved for: a depth-first search picks component states
    matching the trace on every label both sides share.
    """
    present = set(t.steps[0])
    for step in t.steps[1:]:
        present &= set(step)
    known = frozenset(composer.labeling(m, composer.initial_states(m)[0]))
    compared = tuple(sorted(present & known))
    skipped = tuple(sorted(present - known))
    slots = m.slots
    missing = tuple(l for l in slots if l not in present)

    if not missing:
        script = {k: {l: step[l] for l in slots} for k, step in enumerate(t.steps)}
        sim = simulate(m, script, len(t.steps) - 1)
        mismatches = tuple(
            Mismatch(k, label, t.steps[k][label], sim.steps[k][label])
            for k in range(len(t.steps))
            for label in compared
            if sim.steps[k][label] != t.steps[k][label]
        )
        return ReplicationReport(
            steps=len(t.steps),
            compared=compared,
            skipped=skipped,
            reconstructed=(),
            mismatches=mismatches,
        )

    return _replay_with_search(m, t, compared, skipped, missing)


def _replay_with_search(
    m: CompositeMachine,
    t: Trace,
    compared: Tuple[str, ...],
    skipped: Tuple[str, ...],
    missing: Tuple[str, ...],
) -> ReplicationReport:
    last = len(t.steps) - 1

    def agrees(state: Tuple[Value, ...], index: int) -> bool:
        lab = composer.labeling(m, state)
        return all(lab[l] == t.steps[index][l] for l in compared)

    deepest = -1

    def extend(state: Tuple[Value, ...], index: int) -> bool:
        nonlocal deepest
        deepest = max(deepest, index)
        if index == last:
            return True
        for succ in composer.successors(m, state):
            if agrees(succ, index + 1) and extend(succ, index + 1):
                return True
        return False

    for start in composer.initial_states(m):
        if agrees(start, 0) and extend(start, 0):
            return ReplicationReport(
                steps=len(t.steps),
                compared=compared,
                skipped=skipped,
                reconstructed=missing,
                mismatches=(),
            )
    if deepest < 0:
        raise IllegalStep(0, "no initial state of the machine matches the trace")
    raise IllegalStep(
        deepest + 1,
        "no legal successor matches the trace "
        f"(replayed {deepest + 1} of {len(t.steps)} steps)",
    )
