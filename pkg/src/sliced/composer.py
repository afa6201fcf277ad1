"""Composition of component machines into one synchronous product.

A machine state is a tuple: one slot per instance state variable, one per
free environment input, and a trailing clock phase when the model is timed.
Defined outputs (supplyingPower, draw) are evaluated combinationally from
the current state in a fixed topological order; a dependency loop among
them is rejected at compose time.

All instances step at once. Free environment inputs range over their full
domain every step, and the clock advances by one tick modulo the cycle.
"""

from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from . import archetypes
from .archetypes import ALL_CHOICES, StepOptions
from .ir import (
    Archetype,
    CompositeMachine,
    Connection,
    CyclicClock,
    Instance,
    ModelError,
    Net,
    UnboundInput,
    Value,
    clock_config,
)

__all__ = [
    "CombinationalCycle",
    "compose",
    "clock_config",
    "initial_states",
    "labeling",
    "successors",
    "successor_encodings",
    "encode_state",
    "decode_state",
    "candidate_values",
    "state_eval",
]


class CombinationalCycle(ModelError):
    """Defined outputs depend on each other in a loop."""


def compose(
    name: str,
    instances: Sequence[Instance],
    connections: Sequence[Connection],
    clock: Optional[CyclicClock] = None,
    groups: Optional[Mapping[str, Tuple[str, ...]]] = None,
) -> CompositeMachine:
    """Build the synchronous product of the given instances.

    Instances are canonically sorted by name, so any ordering of the input
    sequence yields the same machine. Unbound power inputs become free
    environment inputs. When ``clock`` is omitted and instances declare
    periods, the clock is derived from them.
    """
    insts = tuple(sorted(instances, key=lambda i: i.name))
    by_name = {i.name: i for i in insts}
    if len(by_name) != len(insts):
        raise ModelError("instance names must be unique")
    for conn in connections:
        if conn.source is not None and conn.source not in by_name:
            raise UnboundInput(f"connection source {conn.source!r} is not an instance")
        if conn.sink not in by_name:
            raise UnboundInput(f"connection sink {conn.sink!r} is not an instance")

    nets = _group_nets(tuple(connections))

    free: List[str] = []
    for net in nets:
        if net.source is None and any(by_name[s].spec.uses_power for s in net.sinks):
            free.append(f"Env_{net.name}")
    has_feed = {i.name: False for i in insts}
    for c in connections:
        has_feed[c.sink] = True
    for inst in insts:
        if inst.spec.uses_power and not has_feed[inst.name]:
            free.append(f"Env_{inst.name}")
    free_inputs = tuple(sorted(set(free)))

    if clock is None:
        periods = [i.period for i in insts if i.period is not None]
        if periods:
            clock = clock_config(periods)

    eval_order = _evaluation_order(insts, nets, by_name)

    machine = CompositeMachine(
        name=name,
        instances=insts,
        connections=tuple(connections),
        nets=nets,
        free_inputs=free_inputs,
        clock=clock,
        eval_order=eval_order,
        groups=dict(groups or {}),
    )
    _runtime(machine)  # fail fast on construction problems
    return machine


def _group_nets(connections: Tuple[Connection, ...]) -> Tuple[Net, ...]:
    grouped: Dict[object, List[Connection]] = {}
    for conn in connections:
        if conn.source is not None:
            key: object = (conn.source, conn.source_port)
        else:
            key = ("", conn.line_name or conn.sink)
        grouped.setdefault(key, []).append(conn)
    nets: List[Net] = []
    used_names: Set[str] = set()
    for key in sorted(grouped, key=str):
        members = grouped[key]
        first = members[0]
        named = [c.line_name for c in members if c.line_name]
        if named:
            base = named[0]
        elif first.source is not None:
            base = f"{first.source}__out{first.source_port}"
        else:
            base = f"env__{first.sink}"
        name = base
        suffix = 2
        while name in used_names:
            name = f"{base}__{suffix}"
            suffix += 1
        used_names.add(name)
        capacities = [c.capacity for c in members if c.capacity is not None]
        nets.append(
            Net(
                name=name,
                source=first.source,
                source_port=first.source_port,
                sinks=tuple(sorted({c.sink for c in members})),
                capacity=min(capacities) if capacities else None,
            )
        )
    return tuple(nets)


def _evaluation_order(
    insts: Tuple[Instance, ...],
    nets: Tuple[Net, ...],
    by_name: Mapping[str, Instance],
) -> Tuple[Tuple[str, str], ...]:
    """Topologically order (instance, output) pairs by data dependency."""
    power_feeds: Dict[str, List[str]] = {i.name: [] for i in insts}
    draw_feeds: Dict[str, List[str]] = {i.name: [] for i in insts}
    for net in nets:
        for sink in net.sinks:
            if net.source is not None and _has_output(by_name[net.source].spec, "supplyingPower"):
                power_feeds[sink].append(net.source)
        if net.source is not None:
            for sink in net.sinks:
                if _has_output(by_name[sink].spec, "draw"):
                    draw_feeds[net.source].append(sink)

    nodes: List[Tuple[str, str]] = []
    deps: Dict[Tuple[str, str], List[Tuple[str, str]]] = {}
    from . import exprs

    for inst in insts:
        for out_name, expr in inst.spec.outputs:
            node = (inst.name, out_name)
            nodes.append(node)
            needed: List[Tuple[str, str]] = []
            if exprs.uses_input_power(expr):
                needed.extend((src, "supplyingPower") for src in power_feeds[inst.name])
            if exprs.uses_downstream_draw(expr):
                needed.extend((snk, "draw") for snk in draw_feeds[inst.name])
            deps[node] = needed

    order: List[Tuple[str, str]] = []
    state = {node: 0 for node in nodes}  # 0 unvisited, 1 active, 2 done

    def visit(node: Tuple[str, str], chain: List[Tuple[str, str]]) -> None:
        if state[node] == 2:
            return
        if state[node] == 1:
            loop = " -> ".join(f"{a}.{b}" for a, b in chain + [node])
            raise CombinationalCycle(f"defined outputs form a loop: {loop}")
        state[node] = 1
        for dep in deps[node]:
            if dep in state:
                visit(dep, chain + [node])
        state[node] = 2
        order.append(node)

    for node in nodes:
        visit(node, [])
    return tuple(order)


def _has_output(spec, name: str) -> bool:
    return any(n == name for n, _ in spec.outputs)


# ---------------------------------------------------------------------------
# runtime tables


class _Runtime:
    """Precomputed lookup tables for stepping one machine quickly."""

    __slots__ = (
        "insts",
        "n_inst",
        "slot_labels",
        "domains",
        "value_index",
        "shifts",
        "power_sources",
        "draw_sources",
        "eval_seq",
        "net_info",
        "clock_slot",
        "clock_next_index",
        "clock_next_bits",
        "free_slots",
        "free_true_bits",
        "total_bits",
        "step_cache",
        "out_cache",
    )

    def __init__(self, m: CompositeMachine) -> None:
        self.insts = m.instances
        self.n_inst = len(m.instances)
        self.slot_labels = m.slots
        self.domains = m.slot_domains()
        self.value_index = [{v: i for i, v in enumerate(dom)} for dom in self.domains]
        self.shifts = []
        shift = 0
        for dom in self.domains:
            self.shifts.append(shift)
            shift += max(1, (len(dom) - 1).bit_length())
        self.total_bits = shift

        name_to_idx = {inst.name: i for i, inst in enumerate(m.instances)}
        free_idx = {fname: self.n_inst + i for i, fname in enumerate(m.free_inputs)}
        self.free_slots = list(free_idx.values())
        self.free_true_bits = [1 << self.shifts[s] for s in self.free_slots]
        self.clock_slot = len(self.domains) - 1 if m.clock is not None else None
        if m.clock is not None:
            phases = m.clock.phases
            cshift = self.shifts[self.clock_slot]
            self.clock_next_index = [(i + 1) % len(phases) for i in range(len(phases))]
            self.clock_next_bits = [i << cshift for i in self.clock_next_index]
        else:
            self.clock_next_index = None
            self.clock_next_bits = None

        # who powers whom / who draws from whom
        self.power_sources: List[List[Tuple[str, int]]] = [[] for _ in m.instances]
        self.draw_sources: List[List[int]] = [[] for _ in m.instances]
        for net in m.nets:
            if net.source is None:
                fname = f"Env_{net.name}"
                if fname in free_idx:
                    for sink in net.sinks:
                        self.power_sources[name_to_idx[sink]].append(("free", free_idx[fname]))
                continue
            src_idx = name_to_idx[net.source]
            if _has_output(m.instances[src_idx].spec, "supplyingPower"):
                for sink in net.sinks:
                    self.power_sources[name_to_idx[sink]].append(("inst", src_idx))
            for sink in net.sinks:
                snk_idx = name_to_idx[sink]
                if _has_output(m.instances[snk_idx].spec, "draw"):
                    self.draw_sources[src_idx].append(snk_idx)
        for inst_idx, inst in enumerate(m.instances):
            if inst.spec.uses_power and not self.power_sources[inst_idx]:
                fname = f"Env_{inst.name}"
                if fname in free_idx:
                    self.power_sources[inst_idx].append(("free", free_idx[fname]))

        self.eval_seq = []
        for inst_name, out_name in m.eval_order:
            idx = name_to_idx[inst_name]
            expr = dict(m.instances[idx].spec.outputs)[out_name]
            self.eval_seq.append((idx, out_name, expr))

        self.net_info = []
        for net in m.nets:
            sink_idxs = tuple(
                name_to_idx[s]
                for s in net.sinks
                if _has_output(m.instances[name_to_idx[s]].spec, "draw")
            )
            self.net_info.append((net.count_label, sink_idxs))

        # memo tables for per-instance stepping and output evaluation; both
        # are pure in (state value, power, draw), so the tables stay small
        self.step_cache: List[Dict[tuple, Tuple[tuple, tuple]]] = [
            {} for _ in m.instances
        ]
        self.out_cache: List[Dict[tuple, Value]] = [{} for _ in self.eval_seq]


def _runtime(m: CompositeMachine) -> _Runtime:
    rt = getattr(m, "_rt", None)
    if rt is None:
        rt = _Runtime(m)
        object.__setattr__(m, "_rt", rt)
    return rt


# ---------------------------------------------------------------------------
# state functions


def encode_state(m: CompositeMachine, state: Tuple[Value, ...]) -> int:
    rt = _runtime(m)
    enc = 0
    for slot, value in enumerate(state):
        enc |= rt.value_index[slot][value] << rt.shifts[slot]
    return enc


def decode_state(m: CompositeMachine, enc: int) -> Tuple[Value, ...]:
    rt = _runtime(m)
    out = []
    for slot, dom in enumerate(rt.domains):
        width = max(1, (len(dom) - 1).bit_length())
        idx = (enc >> rt.shifts[slot]) & ((1 << width) - 1)
        out.append(dom[idx])
    return tuple(out)


def initial_states(m: CompositeMachine) -> List[Tuple[Value, ...]]:
    """Every allowed initial state tuple, in deterministic order."""
    rt = _runtime(m)
    axes: List[Tuple[Value, ...]] = [inst.spec.initial for inst in rt.insts]
    axes.extend((False, True) for _ in rt.free_slots)
    if rt.clock_slot is not None:
        axes.append((m.clock.phases[0],))
    result: List[Tuple[Value, ...]] = [()]
    for axis in axes:
        result = [prev + (v,) for prev in result for v in axis]
    return result


def _outputs(m: CompositeMachine, state: Tuple[Value, ...]) -> Dict[Tuple[int, str], Value]:
    """One combinational pass: every defined output under the given state."""
    rt = _runtime(m)
    values: Dict[Tuple[int, str], Value] = {}
    for pos, (inst_idx, out_name, expr) in enumerate(rt.eval_seq):
        power = _power_of(rt, inst_idx, state, values)
        draw = _draw_of(rt, inst_idx, values)
        cache = rt.out_cache[pos]
        key = (state[inst_idx], power, draw)
        try:
            out = cache[key]
        except KeyError:
            inst = rt.insts[inst_idx]
            ctx = archetypes.ComponentContext(
                state=state[inst_idx], power=power, draw=draw, params=inst.spec.params
            )
            out = cache[key] = expr.eval(ctx)
        values[(inst_idx, out_name)] = out
    return values


def _power_of(rt: _Runtime, inst_idx: int, state: Tuple[Value, ...], values) -> bool:
    for kind, ref in rt.power_sources[inst_idx]:
        if kind == "free":
            if state[ref]:
                return True
        elif values.get((ref, "supplyingPower")):
            return True
    return False


def _draw_of(rt: _Runtime, inst_idx: int, values) -> int:
    total = 0
    for snk in rt.draw_sources[inst_idx]:
        total += int(values.get((snk, "draw"), 0))
    return total


def labeling(m: CompositeMachine, state: Tuple[Value, ...]) -> Dict[str, Value]:
    """Full variable assignment for one state: instance states, defined
    outputs, net values, free inputs, and the clock."""
    rt = _runtime(m)
    values = _outputs(m, state)
    out: Dict[str, Value] = {}
    for idx, inst in enumerate(rt.insts):
        out[inst.state_label] = state[idx]
        for out_name, _ in inst.spec.outputs:
            out[f"{inst.name}.{out_name}"] = values[(idx, out_name)]
    for label, sink_idxs in rt.net_info:
        out[label] = sum(int(values[(s, "draw")]) for s in sink_idxs)
    for free_pos, slot in enumerate(rt.free_slots):
        out[rt.slot_labels[slot]] = state[slot]
    if rt.clock_slot is not None:
        out["clock"] = state[rt.clock_slot]
    return out


def _step_cached(
    rt: _Runtime,
    idx: int,
    state_value: Value,
    power: bool,
    draw: int,
    options: StepOptions,
) -> Tuple[tuple, tuple]:
    """One instance's successor values, sorted in domain order, paired with
    their pre-shifted encodings. Memoized; the result depends only on the
    arguments and the instance's fixed parameters."""
    key = (state_value, power, draw, options.user_actions, options.faults, options.free)
    cache = rt.step_cache[idx]
    hit = cache.get(key)
    if hit is None:
        spec = rt.insts[idx].spec
        nxt = archetypes.step(spec, state_value, {"power": power, "draw": draw}, options)
        dom_index = rt.value_index[idx]
        vals = tuple(sorted(nxt, key=dom_index.__getitem__))
        shift = rt.shifts[idx]
        hit = cache[key] = (vals, tuple(dom_index[v] << shift for v in vals))
    return hit


def candidate_values(
    m: CompositeMachine,
    state: Tuple[Value, ...],
    options: StepOptions = ALL_CHOICES,
) -> List[Tuple[Value, ...]]:
    """Per-slot successor candidates from the given state, each sorted in
    domain order. The product of these lists is the successor set."""
    rt = _runtime(m)
    values = _outputs(m, state)
    per_slot: List[Tuple[Value, ...]] = []
    for idx in range(rt.n_inst):
        power = _power_of(rt, idx, state, values)
        draw = _draw_of(rt, idx, values)
        per_slot.append(_step_cached(rt, idx, state[idx], power, draw, options)[0])
    for slot in rt.free_slots:
        per_slot.append((False, True))
    if rt.clock_slot is not None:
        phases = m.clock.phases
        cur_idx = rt.value_index[rt.clock_slot][state[rt.clock_slot]]
        per_slot.append((phases[rt.clock_next_index[cur_idx]],))
    return per_slot


def successors(
    m: CompositeMachine,
    state: Tuple[Value, ...],
    options: StepOptions = ALL_CHOICES,
) -> List[Tuple[Value, ...]]:
    """All successor states, in deterministic order."""
    per_slot = candidate_values(m, state, options)
    result: List[Tuple[Value, ...]] = [()]
    for axis in per_slot:
        result = [prev + (v,) for prev in result for v in axis]
    return result


def successor_encodings(
    m: CompositeMachine,
    state: Tuple[Value, ...],
    options: StepOptions = ALL_CHOICES,
) -> List[int]:
    """Encoded successors of a decoded state; the checker's inner loop."""
    rt = _runtime(m)
    values = _outputs(m, state)
    encs = [0]
    for idx in range(rt.n_inst):
        power = _power_of(rt, idx, state, values)
        draw = _draw_of(rt, idx, values)
        bits = _step_cached(rt, idx, state[idx], power, draw, options)[1]
        if len(bits) == 1:
            b0 = bits[0]
            if b0:
                encs = [e | b0 for e in encs]
        else:
            encs = [e | b for e in encs for b in bits]
    for tbit in rt.free_true_bits:
        encs = [e | b for e in encs for b in (0, tbit)]
    if rt.clock_slot is not None:
        b0 = rt.clock_next_bits[rt.value_index[rt.clock_slot][state[rt.clock_slot]]]
        if b0:
            encs = [e | b0 for e in encs]
    return encs


def state_eval(
    m: CompositeMachine, pred
) -> Optional[Callable[[Tuple[Value, ...]], bool]]:
    """Compile a predicate into a fast evaluator over raw state tuples.

    Only possible when every variable the predicate reads lives directly in
    a state slot (instance states, free inputs, the clock). Returns None
    when any variable is a derived label, or shadowed by one; callers then
    evaluate against the full labeling instead.
    """
    rt = _runtime(m)
    derived: Set[str] = set()
    for inst in rt.insts:
        for out_name, _ in inst.spec.outputs:
            derived.add(f"{inst.name}.{out_name}")
    for label, _ in rt.net_info:
        derived.add(label)
    slot_of = {label: slot for slot, label in enumerate(rt.slot_labels)}
    needed: Dict[str, int] = {}
    for var in pred.atoms():
        slot = slot_of.get(var.name)
        if slot is None or var.name in derived:
            return None
        needed[var.name] = slot
    items = tuple(needed.items())

    def evaluate(state: Tuple[Value, ...]) -> bool:
        return bool(pred.eval({label: state[slot] for label, slot in items}))

    return evaluate
