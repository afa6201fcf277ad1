"""NuSMV 2.6 text emission, plus reading and writing trace text.

One MODULE is emitted per distinct component shape: archetype, wiring arity,
state domain, and initial set. Instances become VAR lines in ``main`` with
downstream components passed as module arguments, so an upstream module reads
``output1.draw`` exactly as its guards expect. Emission is byte-deterministic
for a given machine: instances are already name-sorted, module definitions
sort by name, and every list is ordered.

The ``faithful`` flag reproduces two quirks of the original module layouts:
a two-output battery sums ``output1.draw`` twice, and a merged bank is named
MergedActuator with no initial constraint on its draw.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from . import composer
from .exprs import RenderNames, StateRef, render_value
from .ir import (
    Archetype,
    ArchetypeSpec,
    Assertion,
    CompositeMachine,
    ModelError,
    Trace,
    TraceKind,
    Value,
)

__all__ = ["UnsupportedConstruct", "emit", "emit_trace", "parse_trace"]


class UnsupportedConstruct(ModelError):
    """The machine contains something with no NuSMV rendering."""


_IDENT_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _ident(name: str) -> str:
    if _IDENT_OK.match(name):
        return name
    cleaned = re.sub(r"[^A-Za-z0-9_]", "_", name)
    if not cleaned or cleaned[0].isdigit():
        cleaned = "_" + cleaned
    return cleaned


def _camel(value: Value) -> str:
    text = str(value)
    return text[:1].upper() + text[1:]


# ---------------------------------------------------------------------------
# module shapes


@dataclass(frozen=True)
class _Shape:
    """Everything that distinguishes one emitted MODULE from another."""

    tag: Archetype
    n_in: int
    n_out: int
    sig_params: Tuple[str, ...]
    values: Tuple[Value, ...]
    initial: Tuple[Value, ...]

    @property
    def key(self) -> Tuple:
        return (
            self.tag.value,
            self.n_in,
            self.n_out,
            self.sig_params,
            tuple(str(v) for v in self.values),
            tuple(str(v) for v in self.initial),
        )


def _shape_of(spec: ArchetypeSpec, n_in: int, n_out: int, faithful: bool) -> _Shape:
    if spec.tag is Archetype.MERGED_LOAD_BANK and faithful:
        sig = ("drawlimit",)
    elif spec.tag is Archetype.MERGED_LOAD_BANK:
        sig = ()  # domain is written out literally, no parameter needed
    else:
        sig = tuple(spec.params)
    return _Shape(spec.tag, n_in, n_out, sig, spec.values, spec.initial)


def _base_name(spec: ArchetypeSpec, faithful: bool) -> str:
    if spec.tag is Archetype.MERGED_LOAD_BANK and faithful:
        return "MergedActuator"
    canonical = _canonical_initial(spec)
    if tuple(spec.initial) != canonical:
        if len(spec.initial) == 1 and spec.initial[0] in spec.error_states:
            return f"{spec.tag.value}Start{_camel(spec.initial[0])}"
    return spec.tag.value


def _canonical_initial(spec: ArchetypeSpec) -> Tuple[Value, ...]:
    from . import archetypes

    if spec.tag is Archetype.MERGED_LOAD_BANK:
        return spec.values  # a free bank starts anywhere in its domain
    return archetypes.instantiate(spec.tag, dict(spec.params)).initial


def _input_names(n_in: int) -> Tuple[str, ...]:
    if n_in == 1:
        return ("input",)
    return tuple(f"input{i}" for i in range(1, n_in + 1))


def _output_names(n_out: int) -> Tuple[str, ...]:
    return tuple(f"output{i}" for i in range(1, n_out + 1))


def _domain_text(values: Tuple[Value, ...], limit_param: Optional[str] = None) -> str:
    if all(isinstance(v, bool) for v in values):
        return "boolean"
    if all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        lo, hi = values[0], values[-1]
        contiguous = list(values) == list(range(lo, hi + 1))
        if contiguous and limit_param is not None and lo == 0:
            return f"0 .. {limit_param}"
        if contiguous:
            return f"{lo} .. {hi}"
    if any(isinstance(v, bool) for v in values):
        raise UnsupportedConstruct("cannot mix booleans with other values in one domain")
    return "{" + ",".join(render_value(v) for v in values) + "}"


def _value_set(values: Sequence[Value]) -> str:
    if len(values) == 1:
        return render_value(values[0])
    return "{" + ",".join(render_value(v) for v in values) + "}"


def _emit_module(name: str, spec: ArchetypeSpec, shape: _Shape, faithful: bool) -> str:
    inputs = _input_names(shape.n_in)
    outputs = _output_names(shape.n_out)
    args = list(inputs) + list(outputs) + list(shape.sig_params)

    if faithful and spec.tag is Archetype.BATTERY:
        draws = tuple("output1.draw" for _ in outputs)
    else:
        draws = tuple(f"{o}.draw" for o in outputs)
    define_names = RenderNames(state=spec.state_var, inputs=inputs, output_draws=draws)
    # guards refer to the module's own draw DEFINE, not the expanded sum
    has_draw_define = any(n == "draw" for n in spec.output_names)
    guard_names = (
        RenderNames(state=spec.state_var, inputs=inputs, output_draws=("draw",))
        if has_draw_define
        else define_names
    )

    header = f"MODULE {name}({', '.join(args)})" if args else f"MODULE {name}"
    lines = [header, "VAR"]
    limit = "drawlimit" if spec.tag is Archetype.MERGED_LOAD_BANK and faithful else None
    lines.append(f"  {spec.state_var} : {_domain_text(spec.values, limit)};")

    # a bare state-valued output is the VAR itself, not a DEFINE of its own
    defines = [
        (out_name, expr)
        for out_name, expr in spec.outputs
        if not (isinstance(expr, StateRef) and out_name == spec.state_var)
    ]
    if defines:
        lines.append("DEFINE")
        for out_name, expr in defines:
            lines.append(f"  {out_name} := {expr.to_smv(define_names)};")

    hide_init = tuple(spec.initial) == tuple(spec.values) or (
        faithful and spec.tag is Archetype.MERGED_LOAD_BANK
    )
    emit_next = not spec.free_evolution
    if not hide_init or emit_next:
        lines.append("ASSIGN")
    if not hide_init:
        lines.append(f"  init({spec.state_var}) := {_value_set(spec.initial)};")
    if emit_next:
        if not hide_init:
            lines.append("")
        lines.append(f"  next({spec.state_var}) := case")
        lines.extend(_next_arms(spec, guard_names))
        lines.append("  esac;")
    return "\n".join(lines) + "\n"


def _next_arms(spec: ArchetypeSpec, names: RenderNames) -> List[str]:
    from . import archetypes, exprs

    if not spec.user_actions and not spec.fault_actions:
        arms = []
        for guard, target in spec.transitions:
            rendered = spec.state_var if target is archetypes.SAME else render_value(target)
            arms.append(f"    {guard.to_smv(names)} : {rendered};")
        return arms

    # non-deterministic components: fold the declared choices into one target
    # set per state, which only works when no guard reads power or draw
    for guard, _ in spec.transitions + spec.user_actions + spec.fault_actions:
        if exprs.uses_input_power(guard) or exprs.uses_downstream_draw(guard):
            raise UnsupportedConstruct(
                f"{spec.tag.value}: choice guards that read inputs have no "
                f"per-state rendering"
            )
    arms = []
    dummy = {"power": False, "draw": 0}
    for state in spec.values:
        targets: List[Value] = [state]
        for nxt in archetypes.step(spec, state, dummy, archetypes.ALL_CHOICES):
            if nxt not in targets:
                targets.append(nxt)
        ordered = [state] + [v for v in spec.values if v in targets and v != state]
        if ordered == [state]:
            continue  # the TRUE arm covers pure self-loops
        guard = exprs.state_is(state).to_smv(names)
        arms.append(f"    {guard} : {_value_set(ordered)};")
    arms.append(f"    TRUE : {spec.state_var};")
    return arms


# ---------------------------------------------------------------------------
# whole-machine emission


def emit(
    m: CompositeMachine,
    assertions: Sequence[Assertion] = (),
    faithful: bool = False,
) -> str:
    """Render the machine and its assertions as one NuSMV document."""
    rt = composer._runtime(m)
    name_of = {inst.name: _ident(inst.name) for inst in m.instances}
    for free in m.free_inputs:
        name_of[free] = _ident(free)

    # group instances into module shapes, then name the modules
    shapes: Dict[Tuple, Tuple[_Shape, ArchetypeSpec]] = {}
    inst_shape: List[Tuple] = []
    for idx, inst in enumerate(m.instances):
        shape = _shape_of(
            inst.spec, len(rt.power_sources[idx]), len(rt.draw_sources[idx]), faithful
        )
        shapes.setdefault(shape.key, (shape, inst.spec))
        inst_shape.append(shape.key)

    module_name: Dict[Tuple, str] = {}
    taken: Set[str] = {"main", "EnvSource"}
    for key in sorted(shapes):
        shape, spec = shapes[key]
        base = _base_name(spec, faithful)
        name = base
        serial = 2
        while name in taken:
            name = f"{base}_{serial}"
            serial += 1
        taken.add(name)
        module_name[key] = name

    chunks: List[str] = []
    title = _ident(m.name) if m.name else "model"
    chunks.append(f"-- {title}: generated module set\n")
    renamed = sorted(
        (orig, new) for orig, new in name_of.items() if orig != new
    )
    if renamed:
        lines = ["-- name map:"]
        lines.extend(f"--   {orig} -> {new}" for orig, new in renamed)
        chunks.append("\n".join(lines) + "\n")

    if m.free_inputs:
        chunks.append("MODULE EnvSource\nVAR\n  supplyingPower : boolean;\n")

    for key in sorted(shapes):
        shape, spec = shapes[key]
        chunks.append(_emit_module(module_name[key], spec, shape, faithful))

    # main: environment sources, instances with wiring, clock, net counts
    main = ["MODULE main"]
    var_lines: List[str] = []
    for free in m.free_inputs:
        var_lines.append(f"  {name_of[free]} : EnvSource;")
    for idx, inst in enumerate(m.instances):
        args: List[str] = []
        for kind, ref in rt.power_sources[idx]:
            if kind == "free":
                label = rt.slot_labels[ref]  # "Env_x.supplyingPower"
                args.append(name_of[label.rsplit(".", 1)[0]])
            else:
                args.append(name_of[m.instances[ref].name])
        for sink_idx in rt.draw_sources[idx]:
            args.append(name_of[m.instances[sink_idx].name])
        shape = shapes[inst_shape[idx]][0]
        args.extend(str(inst.spec.params[p]) for p in shape.sig_params)
        mod = module_name[inst_shape[idx]]
        if args:
            var_lines.append(f"  {name_of[inst.name]} : {mod}({', '.join(args)});")
        else:
            var_lines.append(f"  {name_of[inst.name]} : {mod};")
    if m.clock is not None:
        var_lines.append(f"  clock : 0 .. {m.clock.cycle - m.clock.tick};")
    if var_lines:
        main.append("VAR")
        main.extend(var_lines)

    needed_counts = _count_labels_used(m, assertions)
    count_rename: Dict[str, str] = {}
    define_lines: List[str] = []
    for net, (label, sink_idxs) in zip(m.nets, rt.net_info):
        if label not in needed_counts:
            continue
        count_rename[label] = f"{_ident(net.name)}_count"
        terms = [f"{name_of[m.instances[s].name]}.draw" for s in sink_idxs]
        total = " + ".join(terms) if terms else "0"
        define_lines.append(f"  {count_rename[label]} := {total};")
    if define_lines:
        main.append("DEFINE")
        main.extend(define_lines)

    if m.clock is not None:
        main.append("ASSIGN")
        main.append("  init(clock) := 0;")
        main.append(f"  next(clock) := (clock + {m.clock.tick}) mod {m.clock.cycle};")

    def rename(label: str) -> str:
        if label in count_rename:
            return count_rename[label]
        head, dot, tail = label.partition(".")
        if head in name_of:
            return name_of[head] + dot + tail
        return _ident(label) if dot == "" else label

    for assertion in assertions:
        main.append("")
        main.append(f"-- {assertion.provenance}")
        main.append(f"LTLSPEC {assertion.to_smv(rename)}")
    chunks.append("\n".join(main) + "\n")
    return "\n".join(chunks)


def _count_labels_used(m: CompositeMachine, assertions: Sequence[Assertion]) -> Set[str]:
    from .exprs import temporal_atoms

    count_labels = {net.count_label for net in m.nets}
    used: Set[str] = set()
    for assertion in assertions:
        for atom in temporal_atoms(assertion.formula):
            if atom.name in count_labels:
                used.add(atom.name)
    return used


# ---------------------------------------------------------------------------
# trace text


def emit_trace(trace: Trace, header: Optional[str] = None) -> str:
    """Render a trace in the delta style of model-checker output: the first
    state in full, later states as changed variables only."""
    lines: List[str] = []
    if header is not None:
        lines.append(f"-- specification  {header}  is false")
        lines.append("-- as demonstrated by the following execution sequence")
    if trace.kind is TraceKind.SIMULATION:
        lines.append("Trace Description: Simulation Trace")
        lines.append("Trace Type: Simulation")
    else:
        lines.append("Trace Description: LTL Counterexample")
        lines.append("Trace Type: Counterexample")
    previous: Mapping[str, Value] = {}
    for index, step in enumerate(trace.steps):
        if trace.loop_index is not None and index == trace.loop_index:
            lines.append("-- Loop starts here")
        lines.append(f"-> State: 1.{index + 1} <-")
        for label in sorted(step):
            if index == 0 or previous.get(label) != step[label]:
                lines.append(f"{label} = {render_value(step[label])}")
        previous = step
    return "\n".join(lines) + "\n"


_INT = re.compile(r"^-?\d+$")


def _parse_value(raw: str) -> Value:
    if raw == "TRUE":
        return True
    if raw == "FALSE":
        return False
    if _INT.match(raw):
        return int(raw)
    return raw


def parse_trace(text: str) -> Trace:
    """Read trace text back into a Trace, expanding the delta convention."""
    steps: List[Dict[str, Value]] = []
    carried: Dict[str, Value] = {}
    current: Optional[Dict[str, Value]] = None
    loop_index: Optional[int] = None
    kind = TraceKind.COUNTEREXAMPLE
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("Trace Type:"):
            if "Simulation" in line:
                kind = TraceKind.SIMULATION
        elif line == "-- Loop starts here":
            loop_index = len(steps) + (1 if current is not None else 0)
        elif line.startswith("-> State:"):
            if current is not None:
                steps.append(current)
            current = dict(carried)
        elif current is not None and not line.startswith("--") and " = " in line:
            label, _, raw = line.partition(" = ")
            value = _parse_value(raw.strip())
            current[label.strip()] = value
            carried[label.strip()] = value
    if current is not None:
        steps.append(current)
    if not steps:
        raise ModelError("trace text contains no states")
    return Trace(kind=kind, steps=tuple(steps), loop_index=loop_index)
