"""Behavior archetypes: the catalog of component state machines.

Each builder returns a fully bound ArchetypeSpec. Guard lists are ordered and
end with an unconditional self-loop, which is exactly how the emitted SMV
``case`` blocks behave, so stepping a spec here and stepping the emitted text
agree arm for arm.

Power flows from sources toward loads through ``supplyingPower``; draw is
reported back up through ``draw``. Components with no next-state constraint
in their module text (actuators, loads, merged banks) are marked
``free_evolution`` and may move to any state each step.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Optional, Set, Tuple

from . import exprs
from .exprs import (
    Add,
    And,
    Case,
    ComponentContext,
    Const,
    DownstreamDraw,
    InputPower,
    Mul,
    Not,
    Or,
    Param,
    StateRef,
    state_is,
)
from .ir import (
    SAME,
    Archetype,
    ArchetypeSpec,
    EmptyDomain,
    MissingParameter,
    UnboundInput,
    Value,
)

TRUE = Const(True)


def _require(params: Mapping[str, int], name: str, tag: str) -> int:
    try:
        value = params[name]
    except KeyError:
        raise MissingParameter(f"{tag} requires parameter {name!r}") from None
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise MissingParameter(f"{tag} parameter {name!r} must be a non-negative integer")
    return value


def battery(params: Mapping[str, int]) -> ArchetypeSpec:
    """Power source with a capacity limit and a two-stage repair cycle.

    Overload kills it; it can only move to underRepair, and then back to
    nominal, while nothing is drawing. Both repair stages require draw = 0,
    so recovery always takes at least two steps.
    """
    capacity = _require(params, "capacity", "Battery")
    over = exprs.Cmp(">", DownstreamDraw(), Param("capacity"))
    idle = exprs.Cmp("=", DownstreamDraw(), Const(0))
    return ArchetypeSpec(
        tag=Archetype.BATTERY,
        state_var="state",
        values=("nominal", "dead", "underRepair"),
        initial=("nominal",),
        error_states=("dead",),
        params={"capacity": capacity},
        outputs=(
            ("supplyingPower", state_is("nominal")),
            ("draw", DownstreamDraw()),
        ),
        transitions=(
            (over, "dead"),
            (And((state_is("dead"), idle)), "underRepair"),
            (And((state_is("underRepair"), idle)), "nominal"),
            (TRUE, SAME),
        ),
    )


def circuit_breaker(params: Mapping[str, int]) -> ArchetypeSpec:
    """Pass-through protector that trips open, permanently, above its limit."""
    limit = _require(params, "limit", "CircuitBreaker")
    return ArchetypeSpec(
        tag=Archetype.CIRCUIT_BREAKER,
        state_var="state",
        values=("connected", "broken"),
        initial=("connected",),
        error_states=("broken",),
        params={"limit": limit},
        outputs=(
            ("supplyingPower", And((state_is("connected"), InputPower()))),
            ("draw", Case(((state_is("connected"), DownstreamDraw()), (TRUE, Const(0))))),
        ),
        transitions=(
            (exprs.Cmp(">", DownstreamDraw(), Param("limit")), "broken"),
            (TRUE, SAME),
        ),
    )


def relay(params: Mapping[str, int]) -> ArchetypeSpec:
    """Commanded switch. Opening and closing are user actions; either
    position can spontaneously stick, and stuck states are absorbing."""
    conducting = Or((state_is("closed"), state_is("stuckClosed")))
    return ArchetypeSpec(
        tag=Archetype.RELAY,
        state_var="state",
        values=("open", "closed", "stuckOpen", "stuckClosed"),
        initial=("closed",),
        error_states=("stuckOpen", "stuckClosed"),
        params={},
        outputs=(
            ("supplyingPower", And((conducting, InputPower()))),
            ("draw", Case(((conducting, DownstreamDraw()), (TRUE, Const(0))))),
        ),
        transitions=((TRUE, SAME),),
        user_actions=(
            (state_is("open"), "closed"),
            (state_is("closed"), "open"),
        ),
        fault_actions=(
            (state_is("open"), "stuckOpen"),
            (state_is("closed"), "stuckClosed"),
        ),
    )


def actuator(params: Mapping[str, int]) -> ArchetypeSpec:
    """Leaf device drawing 0, 1, or 2 units depending on its health.

    The module text places no constraint on the next state, so the state
    wanders freely; that free evolution is what error discovery exploits.
    """
    return ArchetypeSpec(
        tag=Archetype.ACTUATOR,
        state_var="state",
        values=("nominal", "nopower", "faultyResistance"),
        initial=("nominal",),
        error_states=("faultyResistance",),
        params={},
        outputs=(
            (
                "draw",
                Case(
                    (
                        (Or((Not(InputPower()), state_is("nopower"))), Const(0)),
                        (state_is("nominal"), Const(1)),
                        (state_is("faultyResistance"), Const(2)),
                    )
                ),
            ),
        ),
        transitions=((TRUE, SAME),),
        free_evolution=True,
    )


def load(params: Mapping[str, int]) -> ArchetypeSpec:
    """Actuator variant with a configurable nominal draw; a faulty load
    draws double."""
    nominal_draw = _require(params, "nominaldraw", "Load")
    return ArchetypeSpec(
        tag=Archetype.LOAD,
        state_var="state",
        values=("nominal", "nopower", "faultyResistance"),
        initial=("nominal",),
        error_states=("faultyResistance",),
        params={"nominaldraw": nominal_draw},
        outputs=(
            (
                "draw",
                Case(
                    (
                        (Or((Not(InputPower()), state_is("nopower"))), Const(0)),
                        (state_is("nominal"), Param("nominaldraw")),
                        (state_is("faultyResistance"), Mul((Const(2), Param("nominaldraw")))),
                    )
                ),
            ),
        ),
        transitions=((TRUE, SAME),),
        free_evolution=True,
    )


def inverter(params: Mapping[str, int]) -> ArchetypeSpec:
    """Power pass-through that can fail permanently."""
    return ArchetypeSpec(
        tag=Archetype.INVERTER,
        state_var="state",
        values=("nominal", "failed"),
        initial=("nominal",),
        error_states=("failed",),
        params={},
        outputs=(
            ("supplyingPower", And((state_is("nominal"), InputPower()))),
            ("draw", Case(((state_is("nominal"), DownstreamDraw()), (TRUE, Const(0))))),
        ),
        transitions=((TRUE, SAME),),
        fault_actions=((state_is("nominal"), "failed"),),
    )


def sensor(params: Mapping[str, int]) -> ArchetypeSpec:
    """Observation-only component: no electrical outputs at all, just a
    health state that can fail and stay failed."""
    return ArchetypeSpec(
        tag=Archetype.SENSOR,
        state_var="state",
        values=("nominal", "faulty"),
        initial=("nominal",),
        error_states=("faulty",),
        params={},
        outputs=(),
        transitions=((TRUE, SAME),),
        fault_actions=((state_is("nominal"), "faulty"),),
    )


def merged_load_bank(params: Mapping[str, int]) -> ArchetypeSpec:
    """Aggregate stand-in for a bank of loads: a single draw variable that
    ranges freely over 0..drawlimit.

    ``initdraw`` (optional) pins the initial value; merge-produced banks use
    it to keep the initial boundary value consistent with the bank they
    replaced.
    """
    drawlimit = _require(params, "drawlimit", "MergedLoadBank")
    domain = tuple(range(drawlimit + 1))
    bound: dict = {"drawlimit": drawlimit}
    if "initdraw" in params:
        init_value = _require(params, "initdraw", "MergedLoadBank")
        if init_value not in domain:
            raise EmptyDomain(f"initdraw {init_value} outside 0..{drawlimit}")
        initial: Tuple[Value, ...] = (init_value,)
        bound["initdraw"] = init_value
    else:
        initial = domain
    return ArchetypeSpec(
        tag=Archetype.MERGED_LOAD_BANK,
        state_var="draw",
        values=domain,
        initial=initial,
        error_states=(),
        params=bound,
        outputs=(("draw", StateRef()),),
        transitions=((TRUE, SAME),),
        free_evolution=True,
    )


_BUILDERS = {
    Archetype.BATTERY: battery,
    Archetype.CIRCUIT_BREAKER: circuit_breaker,
    Archetype.RELAY: relay,
    Archetype.ACTUATOR: actuator,
    Archetype.LOAD: load,
    Archetype.INVERTER: inverter,
    Archetype.SENSOR: sensor,
    Archetype.MERGED_LOAD_BANK: merged_load_bank,
}


def instantiate(tag: Archetype, params: Optional[Mapping[str, int]] = None) -> ArchetypeSpec:
    """Bind an archetype's parameters and return its spec."""
    return _BUILDERS[tag](params or {})


def merged_bank_for_domain(domain: Iterable[int], initial: Iterable[int]) -> ArchetypeSpec:
    """Build a merged-bank spec over an exact effective domain.

    Contiguous domains are plain 0..drawlimit banks; gaps are preserved so
    the merged machine never takes a boundary value the original could not.
    """
    values = tuple(sorted(set(int(v) for v in domain)))
    if not values:
        raise EmptyDomain("merged bank needs a non-empty domain")
    init = tuple(sorted(set(int(v) for v in initial)))
    if not init:
        init = values
    for v in init:
        if v not in values:
            raise EmptyDomain(f"initial boundary value {v} outside the effective domain")
    return ArchetypeSpec(
        tag=Archetype.MERGED_LOAD_BANK,
        state_var="draw",
        values=values,
        initial=init,
        error_states=(),
        params={"drawlimit": values[-1]},
        outputs=(("draw", StateRef()),),
        transitions=((TRUE, SAME),),
        free_evolution=True,
    )


# ---------------------------------------------------------------------------
# stepping


class StepOptions:
    """Which kinds of non-determinism participate in a step."""

    __slots__ = ("user_actions", "faults", "free")

    def __init__(self, user_actions: bool = True, faults: bool = True, free: bool = True) -> None:
        self.user_actions = user_actions
        self.faults = faults
        self.free = free


ALL_CHOICES = StepOptions()
DETERMINISTIC = StepOptions(user_actions=False, faults=False, free=False)
NO_FAULTS = StepOptions(user_actions=True, faults=False, free=False)


def _context(spec: ArchetypeSpec, state: Value, inputs: Mapping[str, Value]) -> ComponentContext:
    if state not in spec.values:
        raise UnboundInput(f"{spec.tag.value} state {state!r} outside its domain")
    power = inputs.get("power")
    draw = inputs.get("draw")
    if power is None and spec.uses_power:
        raise UnboundInput(f"{spec.tag.value} needs a 'power' input")
    if draw is None and spec.uses_draw:
        raise UnboundInput(f"{spec.tag.value} needs a 'draw' input")
    return ComponentContext(
        state=state,
        power=bool(power) if power is not None else False,
        draw=int(draw) if draw is not None else 0,
        params=spec.params,
    )


def output(spec: ArchetypeSpec, state: Value, inputs: Mapping[str, Value]) -> dict:
    """Evaluate every defined output of the component in the given instant."""
    ctx = _context(spec, state, inputs)
    return {name: expr.eval(ctx) for name, expr in spec.outputs}


def step(
    spec: ArchetypeSpec,
    state: Value,
    inputs: Mapping[str, Value],
    options: StepOptions = ALL_CHOICES,
) -> Set[Value]:
    """All states the component may occupy next. Never empty: the guard list
    ends with a self-loop, so the deterministic core always produces one
    successor; options add the declared non-deterministic alternatives."""
    ctx = _context(spec, state, inputs)
    result: Set[Value] = set()
    for guard, target in spec.transitions:
        if guard.eval(ctx):
            result.add(state if target is SAME else target)
            break
    if options.user_actions:
        for guard, target in spec.user_actions:
            if guard.eval(ctx):
                result.add(target)
    if options.faults:
        for guard, target in spec.fault_actions:
            if guard.eval(ctx):
                result.add(target)
    if options.free and spec.free_evolution:
        result.update(spec.values)
    return result
