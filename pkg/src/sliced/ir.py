"""Core data model: component graphs, behavior archetypes, composed machines,
assertions, and traces.

Everything here is immutable after construction. Graphs come out of the
ingest layer, archetype specs out of the catalog, machines out of the
composer; downstream stages only ever read them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Optional, Sequence, Tuple, Union

from . import exprs
from .exprs import ComponentExpr, Temporal, Value


class ModelError(Exception):
    """Base class for errors raised while building or using models."""


# ---------------------------------------------------------------------------
# component graphs


@dataclass(frozen=True)
class Port:
    direction: str  # "in" or "out"
    index: int

    def __post_init__(self) -> None:
        if self.direction not in ("in", "out"):
            raise ModelError(f"port direction must be 'in' or 'out', got {self.direction!r}")
        if self.index < 1:
            raise ModelError(f"port index must be positive, got {self.index}")

    @property
    def key(self) -> str:
        return f"{self.direction}{self.index}"


@dataclass(frozen=True)
class Block:
    """One node of the hierarchical design: a leaf component or a container."""

    name: str
    kind: str = "SubSystem"
    ports: Tuple[Port, ...] = ()
    children: Tuple["Block", ...] = ()
    params: Mapping[str, int] = field(default_factory=dict)
    final: Optional[str] = None

    def walk(self, prefix: str = "") -> Iterator[Tuple[str, "Block"]]:
        """Yield (path, block) pairs in pre-order, children sorted by name."""
        path = f"{prefix}/{self.name}" if prefix else self.name
        yield path, self
        for child in sorted(self.children, key=lambda b: b.name):
            yield from child.walk(path)


@dataclass(frozen=True)
class Endpoint:
    path: str
    port: Port

    def __str__(self) -> str:
        return f"{self.path}:{self.port.key}"


@dataclass(frozen=True)
class Line:
    """A wire from one source port to one or more sink ports."""

    source: Endpoint
    sinks: Tuple[Endpoint, ...]
    name: Optional[str] = None
    capacity: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.sinks:
            raise ModelError(f"line from {self.source} has no sinks")


@dataclass(frozen=True)
class ComponentGraph:
    name: str
    blocks: Tuple[Block, ...]
    lines: Tuple[Line, ...]
    timing: Mapping[str, int] = field(default_factory=dict)
    deadlines: Mapping[str, int] = field(default_factory=dict)

    def walk(self) -> Iterator[Tuple[str, Block]]:
        for block in sorted(self.blocks, key=lambda b: b.name):
            yield from block.walk()

    def find(self, path: str) -> Optional[Block]:
        for p, block in self.walk():
            if p == path:
                return block
        return None


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    detail: str


def validate_graph(graph: ComponentGraph) -> Tuple[Violation, ...]:
    """Check structural invariants; returns violations instead of raising."""
    found = []
    paths = {}
    seen_ids = set()

    def visit(block: Block, prefix: str) -> None:
        if id(block) in seen_ids:
            found.append(Violation("SharedBlock", block.name, "block object appears twice in the tree"))
            return
        seen_ids.add(id(block))
        path = f"{prefix}/{block.name}" if prefix else block.name
        if path in paths:
            found.append(Violation("DuplicateName", path, "block name repeats within its parent"))
        paths[path] = block
        port_keys = set()
        for port in block.ports:
            if port.key in port_keys:
                found.append(Violation("DuplicatePortIndex", path, f"port {port.key} declared twice"))
            port_keys.add(port.key)
        names = set()
        for child in block.children:
            if child.name in names:
                found.append(
                    Violation("DuplicateName", f"{path}/{child.name}", "block name repeats within its parent")
                )
            names.add(child.name)
            visit(child, path)

    top_names = set()
    for block in graph.blocks:
        if block.name in top_names:
            found.append(Violation("DuplicateName", block.name, "top-level block name repeats"))
        top_names.add(block.name)
        visit(block, "")

    def check_endpoint(ep: Endpoint, where: str) -> None:
        block = paths.get(ep.path)
        if block is None:
            found.append(Violation("DanglingEndpoint", where, f"no block at path {ep.path!r}"))
            return
        if not any(p.key == ep.port.key for p in block.ports):
            found.append(Violation("DanglingEndpoint", where, f"{ep.path} has no port {ep.port.key}"))

    for line in graph.lines:
        where = str(line.source)
        check_endpoint(line.source, where)
        for sink in line.sinks:
            check_endpoint(sink, where)

    for path in graph.timing:
        if path not in paths:
            found.append(Violation("DanglingEndpoint", path, "timing entry names a missing block"))
    for path in graph.deadlines:
        if path not in paths:
            found.append(Violation("DanglingEndpoint", path, "deadline entry names a missing block"))

    return tuple(found)


# ---------------------------------------------------------------------------
# archetypes


class Archetype(enum.Enum):
    BATTERY = "Battery"
    RELAY = "Relay"
    CIRCUIT_BREAKER = "CircuitBreaker"
    ACTUATOR = "Actuator"
    INVERTER = "Inverter"
    LOAD = "Load"
    SENSOR = "Sensor"
    MERGED_LOAD_BANK = "MergedLoadBank"


class _Same:
    """Sentinel transition target: keep the current state."""

    def __repr__(self) -> str:
        return "SAME"


SAME = _Same()

Target = Union[Value, _Same]


@dataclass(frozen=True)
class ArchetypeSpec:
    """A fully bound behavior description for one component.

    ``transitions`` is the deterministic core: guards are tried in order and
    the list always ends with an unconditional SAME self-loop, so the next
    state function is total. ``user_actions`` and ``fault_actions`` add the
    declared non-determinism; ``free_evolution`` marks components whose state
    variable has no next-state constraint at all.
    """

    tag: Archetype
    state_var: str
    values: Tuple[Value, ...]
    initial: Tuple[Value, ...]
    error_states: Tuple[Value, ...]
    params: Mapping[str, int]
    outputs: Tuple[Tuple[str, ComponentExpr], ...]
    transitions: Tuple[Tuple[ComponentExpr, Target], ...]
    user_actions: Tuple[Tuple[ComponentExpr, Value], ...] = ()
    fault_actions: Tuple[Tuple[ComponentExpr, Value], ...] = ()
    free_evolution: bool = False

    def __post_init__(self) -> None:
        if not self.values:
            raise EmptyDomain(f"{self.tag.value} has an empty state domain")
        if not self.initial:
            raise EmptyDomain(f"{self.tag.value} has no initial state")
        for v in self.initial:
            if v not in self.values:
                raise ModelError(f"initial state {v!r} outside domain of {self.tag.value}")
        for v in self.error_states:
            if v not in self.values:
                raise ModelError(f"error state {v!r} outside domain of {self.tag.value}")
        if not self.transitions:
            raise ModelError(f"{self.tag.value} has no transitions")
        last_guard, last_target = self.transitions[-1]
        if not isinstance(last_guard, exprs.Const) or last_guard.value is not True:
            raise ModelError(f"{self.tag.value} transition list must end with a TRUE self-loop")
        if not isinstance(last_target, _Same):
            raise ModelError(f"{self.tag.value} fallback transition must keep the current state")
        every_expr = [e for _, e in self.outputs]
        every_expr.extend(g for g, _ in self.transitions)
        every_expr.extend(g for g, _ in self.user_actions)
        every_expr.extend(g for g, _ in self.fault_actions)
        object.__setattr__(self, "uses_power", any(exprs.uses_input_power(e) for e in every_expr))
        object.__setattr__(self, "uses_draw", any(exprs.uses_downstream_draw(e) for e in every_expr))

    @property
    def output_names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.outputs)

    def with_initial(self, initial: Tuple[Value, ...]) -> "ArchetypeSpec":
        return replace(self, initial=initial)


class MissingParameter(ModelError):
    """An archetype parameter was not supplied."""


class EmptyDomain(ModelError):
    """A state or value domain came out empty."""


class UnboundInput(ModelError):
    """A component expression needs an input the caller did not provide."""


# ---------------------------------------------------------------------------
# composed machines


@dataclass(frozen=True)
class Instance:
    """One component of a composed machine."""

    name: str
    spec: ArchetypeSpec
    block_path: Optional[str] = None
    period: Optional[int] = None
    deadline: Optional[int] = None
    final_state: Optional[Value] = None

    @property
    def state_label(self) -> str:
        return f"{self.name}.{self.spec.state_var}"


@dataclass(frozen=True)
class Connection:
    """A resolved wire between two classified instances.

    ``source`` is None for boundary wires created when a subsystem is
    isolated; power on such wires comes from a free environment input.
    """

    source: Optional[str]
    source_port: int
    sink: str
    sink_port: int
    line_name: Optional[str] = None
    capacity: Optional[int] = None


@dataclass(frozen=True)
class Net:
    """All connections fanning out from one source port, as one logical wire."""

    name: str
    source: Optional[str]
    source_port: int
    sinks: Tuple[str, ...]
    capacity: Optional[int] = None

    @property
    def count_label(self) -> str:
        return f"{self.name}.count"


@dataclass(frozen=True)
class CyclicClock:
    tick: int
    cycle: int

    def __post_init__(self) -> None:
        if self.tick <= 0 or self.cycle <= 0:
            raise ModelError("clock tick and cycle must be positive")
        if self.cycle % self.tick != 0:
            raise ModelError(f"cycle {self.cycle} is not a multiple of tick {self.tick}")

    @property
    def phases(self) -> Tuple[int, ...]:
        return tuple(range(0, self.cycle, self.tick))


def clock_config(periods: Sequence[int]) -> CyclicClock:
    """Derive the clock for a set of component periods.

    The tick is the greatest common divisor of the periods and the cycle is
    their least common multiple, so every period is a whole number of ticks
    and the cycle is one full hyperperiod.
    """
    if not periods:
        raise ModelError("clock_config needs at least one period")
    for p in periods:
        if p <= 0:
            raise ModelError(f"periods must be positive, got {p}")
    return CyclicClock(tick=math.gcd(*periods), cycle=math.lcm(*periods))


@dataclass(frozen=True)
class CompositeMachine:
    """A synchronous product of component machines.

    State tuples follow ``slots``: one slot per instance state variable, one
    per free environment input, and a final clock slot when timed. Outputs
    and net values are derived labels, not state.
    """

    name: str
    instances: Tuple[Instance, ...]
    connections: Tuple[Connection, ...]
    nets: Tuple[Net, ...]
    free_inputs: Tuple[str, ...]
    clock: Optional[CyclicClock]
    eval_order: Tuple[Tuple[str, str], ...]
    groups: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def instance(self, name: str) -> Instance:
        for inst in self.instances:
            if inst.name == name:
                return inst
        raise UnknownInstance(f"machine has no instance named {name!r}")

    @property
    def slots(self) -> Tuple[str, ...]:
        names = [inst.state_label for inst in self.instances]
        names.extend(f"{f}.supplyingPower" for f in self.free_inputs)
        if self.clock is not None:
            names.append("clock")
        return tuple(names)

    def slot_domains(self) -> Tuple[Tuple[Value, ...], ...]:
        domains = [inst.spec.values for inst in self.instances]
        domains.extend((False, True) for _ in self.free_inputs)
        if self.clock is not None:
            domains.append(self.clock.phases)
        return tuple(domains)


class UnknownInstance(ModelError):
    """A referenced instance is not part of the machine."""


# ---------------------------------------------------------------------------
# assertions and traces


class AssertionKind(enum.Enum):
    ERROR_DISCOVERY = "ErrorDiscovery"
    PATH_DISCOVERY = "PathDiscovery"


class AssertionFlavor(enum.Enum):
    SAFETY = "Safety"
    LIVENESS = "Liveness"
    CAPACITY = "Capacity"
    REPAIR_GOAL = "RepairGoal"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class Assertion:
    kind: AssertionKind
    flavor: AssertionFlavor
    formula: Temporal
    provenance: str

    def to_smv(self, rename=lambda n: n) -> str:
        return self.formula.to_smv(rename)


class TraceKind(enum.Enum):
    COUNTEREXAMPLE = "Counterexample"
    PLAN = "Plan"
    SIMULATION = "Simulation"


@dataclass(frozen=True)
class Trace:
    kind: TraceKind
    steps: Tuple[Mapping[str, Value], ...]
    loop_index: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.steps:
            raise ModelError("a trace must contain at least one step")

    def __len__(self) -> int:
        return len(self.steps)

    def values_of(self, label: str) -> Tuple[Value, ...]:
        missing = [i for i, step in enumerate(self.steps) if label not in step]
        if missing:
            raise KeyError(label)
        return tuple(step[label] for step in self.steps)
