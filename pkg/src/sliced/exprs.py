"""Expression trees shared by archetype definitions and temporal assertions.

Two families live here. Component expressions describe guards and defined
outputs of a single component; they may reference the component's own state
variable, the power arriving on its inputs, and the draw reported by its
downstream peers. Predicate expressions describe conditions over a composed
machine's labeling (dotted variable names) and carry the temporal wrappers
used by assertions.

Every node renders to NuSMV 2.6 syntax via ``to_smv`` and evaluates with
first-match ``case`` semantics, so the internal checker and the emitted text
agree by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

Value = Union[int, bool, str]


class ExprError(Exception):
    """Raised for malformed expressions or failed evaluation."""


class ParseError(ExprError):
    """Raised when predicate text cannot be parsed."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at offset {position})")
        self.position = position


def render_value(v: Value) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    return str(v)


# ---------------------------------------------------------------------------
# component expressions


@dataclass(frozen=True)
class StateRef:
    """The component's own state variable."""

    def to_smv(self, names: "RenderNames") -> str:
        return names.state

    def eval(self, ctx: "ComponentContext") -> Value:
        return ctx.state


@dataclass(frozen=True)
class InputPower:
    """True when any upstream peer is supplying power."""

    def to_smv(self, names: "RenderNames") -> str:
        if not names.inputs:
            return "FALSE"
        terms = [f"{p}.supplyingPower" for p in names.inputs]
        if len(terms) == 1:
            return terms[0]
        return "(" + " | ".join(terms) + ")"

    def eval(self, ctx: "ComponentContext") -> Value:
        return ctx.power


@dataclass(frozen=True)
class DownstreamDraw:
    """Sum of the draw reported by downstream peers (0 when there are none)."""

    def to_smv(self, names: "RenderNames") -> str:
        terms = list(names.output_draws)
        if not terms:
            return "0"
        if len(terms) == 1:
            return terms[0]
        return "(" + " + ".join(terms) + ")"

    def eval(self, ctx: "ComponentContext") -> Value:
        return ctx.draw


@dataclass(frozen=True)
class Param:
    """A bound archetype parameter, rendered by name."""

    name: str

    def to_smv(self, names: "RenderNames") -> str:
        return self.name

    def eval(self, ctx: "ComponentContext") -> Value:
        try:
            return ctx.params[self.name]
        except KeyError:
            raise ExprError(f"unbound parameter {self.name!r}") from None


@dataclass(frozen=True)
class Const:
    value: Value

    def to_smv(self, names: "RenderNames") -> str:
        return render_value(self.value)

    def eval(self, ctx: "ComponentContext") -> Value:
        return self.value


@dataclass(frozen=True)
class Not:
    operand: "ComponentExpr"

    def to_smv(self, names: "RenderNames") -> str:
        return f"!({self.operand.to_smv(names)})"

    def eval(self, ctx: "ComponentContext") -> Value:
        return not _truth(self.operand.eval(ctx))


@dataclass(frozen=True)
class And:
    items: tuple

    def to_smv(self, names: "RenderNames") -> str:
        return "(" + " & ".join(i.to_smv(names) for i in self.items) + ")"

    def eval(self, ctx: "ComponentContext") -> Value:
        return all(_truth(i.eval(ctx)) for i in self.items)


@dataclass(frozen=True)
class Or:
    items: tuple

    def to_smv(self, names: "RenderNames") -> str:
        return "(" + " | ".join(i.to_smv(names) for i in self.items) + ")"

    def eval(self, ctx: "ComponentContext") -> Value:
        return any(_truth(i.eval(ctx)) for i in self.items)


@dataclass(frozen=True)
class Add:
    items: tuple

    def to_smv(self, names: "RenderNames") -> str:
        return "(" + " + ".join(i.to_smv(names) for i in self.items) + ")"

    def eval(self, ctx: "ComponentContext") -> Value:
        return sum(int(i.eval(ctx)) for i in self.items)


@dataclass(frozen=True)
class Mul:
    items: tuple

    def to_smv(self, names: "RenderNames") -> str:
        return "(" + " * ".join(i.to_smv(names) for i in self.items) + ")"

    def eval(self, ctx: "ComponentContext") -> Value:
        total = 1
        for i in self.items:
            total *= int(i.eval(ctx))
        return total


_CMP: Mapping[str, Callable[[Value, Value], bool]] = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}

_CMP_NEG = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: "ComponentExpr"
    rhs: "ComponentExpr"

    def __post_init__(self) -> None:
        if self.op not in _CMP:
            raise ExprError(f"unknown comparison operator {self.op!r}")

    def to_smv(self, names: "RenderNames") -> str:
        return f"({self.lhs.to_smv(names)} {self.op} {self.rhs.to_smv(names)})"

    def eval(self, ctx: "ComponentContext") -> Value:
        return _CMP[self.op](self.lhs.eval(ctx), self.rhs.eval(ctx))


@dataclass(frozen=True)
class Case:
    """First-match-wins arm list, mirroring an SMV case block."""

    arms: tuple  # of (guard, result) pairs

    def to_smv(self, names: "RenderNames") -> str:
        lines = ["case"]
        for guard, result in self.arms:
            lines.append(f"    {guard.to_smv(names)} : {result.to_smv(names)};")
        lines.append("  esac")
        return "\n".join(lines)

    def eval(self, ctx: "ComponentContext") -> Value:
        for guard, result in self.arms:
            if _truth(guard.eval(ctx)):
                return result.eval(ctx)
        raise ExprError("case expression fell through every arm")


ComponentExpr = Union[
    StateRef, InputPower, DownstreamDraw, Param, Const, Not, And, Or, Add, Mul, Cmp, Case
]


def _truth(v: Value) -> bool:
    if isinstance(v, bool):
        return v
    raise ExprError(f"expected a boolean, got {v!r}")


@dataclass(frozen=True)
class ComponentContext:
    """Inputs available to a component expression at one instant."""

    state: Value
    power: bool
    draw: int
    params: Mapping[str, int]


@dataclass(frozen=True)
class RenderNames:
    """Concrete peer names used when rendering a component expression."""

    state: str
    inputs: tuple  # upstream peer parameter names
    output_draws: tuple  # rendered draw references for downstream peers


def state_is(value: Value) -> Cmp:
    return Cmp("=", StateRef(), Const(value))


def uses_input_power(expr: ComponentExpr) -> bool:
    return _walk_any(expr, InputPower)


def uses_downstream_draw(expr: ComponentExpr) -> bool:
    return _walk_any(expr, DownstreamDraw)


def _walk_any(expr: ComponentExpr, kind: type) -> bool:
    if isinstance(expr, kind):
        return True
    if isinstance(expr, (Not,)):
        return _walk_any(expr.operand, kind)
    if isinstance(expr, (And, Or, Add, Mul)):
        return any(_walk_any(i, kind) for i in expr.items)
    if isinstance(expr, Cmp):
        return _walk_any(expr.lhs, kind) or _walk_any(expr.rhs, kind)
    if isinstance(expr, Case):
        return any(_walk_any(g, kind) or _walk_any(r, kind) for g, r in expr.arms)
    return False


# ---------------------------------------------------------------------------
# predicate expressions over a machine labeling


@dataclass(frozen=True)
class Var:
    """A labeled machine variable, e.g. ``Battery1.state`` or ``clock``."""

    name: str

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return rename(self.name)

    def eval(self, labeling: Mapping[str, Value]) -> Value:
        try:
            return labeling[self.name]
        except KeyError:
            raise ExprError(f"variable {self.name!r} is not part of the machine") from None

    def negated(self) -> "Pred":
        return PNot(self)

    def atoms(self):
        yield self


@dataclass(frozen=True)
class PConst:
    value: Value

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return render_value(self.value)

    def eval(self, labeling: Mapping[str, Value]) -> Value:
        return self.value

    def negated(self) -> "Pred":
        return PConst(not _truth(self.value))

    def atoms(self):
        return iter(())


@dataclass(frozen=True)
class PCmp:
    op: str
    var: Var
    value: Value

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return f"{self.var.to_smv(rename)} {self.op} {render_value(self.value)}"

    def eval(self, labeling: Mapping[str, Value]) -> Value:
        return _CMP[self.op](self.var.eval(labeling), self.value)

    def negated(self) -> "Pred":
        return PCmp(_CMP_NEG[self.op], self.var, self.value)

    def atoms(self):
        yield self.var


@dataclass(frozen=True)
class PNot:
    operand: "Pred"

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return f"!({self.operand.to_smv(rename)})"

    def eval(self, labeling: Mapping[str, Value]) -> Value:
        return not _truth(self.operand.eval(labeling))

    def negated(self) -> "Pred":
        return self.operand

    def atoms(self):
        return self.operand.atoms()


@dataclass(frozen=True)
class PAnd:
    items: tuple

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return "(" + " & ".join(i.to_smv(rename) for i in self.items) + ")"

    def eval(self, labeling: Mapping[str, Value]) -> Value:
        return all(_truth(i.eval(labeling)) for i in self.items)

    def negated(self) -> "Pred":
        # De Morgan: the negation of a conjunction is the disjunction of the
        # negated conjuncts, in the original order.
        return POr(tuple(i.negated() for i in self.items))

    def atoms(self):
        for i in self.items:
            yield from i.atoms()


@dataclass(frozen=True)
class POr:
    items: tuple

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return "(" + " | ".join(i.to_smv(rename) for i in self.items) + ")"

    def eval(self, labeling: Mapping[str, Value]) -> Value:
        return any(_truth(i.eval(labeling)) for i in self.items)

    def negated(self) -> "Pred":
        return PAnd(tuple(i.negated() for i in self.items))

    def atoms(self):
        for i in self.items:
            yield from i.atoms()


Pred = Union[Var, PConst, PCmp, PNot, PAnd, POr]


# temporal wrappers


@dataclass(frozen=True)
class Always:
    body: "Temporal"

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return f"G {_temporal_smv(self.body, rename)}"


@dataclass(frozen=True)
class Eventually:
    body: "Temporal"

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return f"F {_temporal_smv(self.body, rename)}"


@dataclass(frozen=True)
class Next:
    body: "Temporal"

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return f"X {_temporal_smv(self.body, rename)}"


@dataclass(frozen=True)
class Until:
    lhs: "Temporal"
    rhs: "Temporal"

    def to_smv(self, rename: Callable[[str], str] = lambda n: n) -> str:
        return f"({_temporal_smv(self.lhs, rename)} U {_temporal_smv(self.rhs, rename)})"


Temporal = Union[Always, Eventually, Next, Until, Var, PConst, PCmp, PNot, PAnd, POr]


def _temporal_smv(t: Temporal, rename: Callable[[str], str]) -> str:
    text = t.to_smv(rename)
    if isinstance(t, (Always, Eventually, Next, Until)):
        return f"({text})"
    if text.startswith("("):
        return text
    return f"({text})"


def temporal_atoms(t: Temporal):
    """Yield every Var referenced anywhere under a temporal formula.

    Boolean connectives are walked here rather than through their own
    ``atoms`` methods because the parser lets temporal operators appear
    under them ("F a | b").
    """
    if isinstance(t, (Always, Eventually, Next)):
        yield from temporal_atoms(t.body)
    elif isinstance(t, Until):
        yield from temporal_atoms(t.lhs)
        yield from temporal_atoms(t.rhs)
    elif isinstance(t, PNot):
        yield from temporal_atoms(t.operand)
    elif isinstance(t, (PAnd, POr)):
        for item in t.items:
            yield from temporal_atoms(item)
    else:
        yield from t.atoms()


# ---------------------------------------------------------------------------
# predicate and formula parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<lpar>\()|(?P<rpar>\))|(?P<op><=|>=|!=|=|<|>)|(?P<not>!)"
    r"|(?P<and>&)|(?P<or>\|)|(?P<int>-?\d+)|(?P<name>[A-Za-z_][\w.]*))"
)

_TEMPORAL_KEYWORDS = {"G", "F", "X", "U"}


class _Tokens:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0
        self.items = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                raise ParseError(f"unexpected character {stripped[0]!r}", pos)
            kind = m.lastgroup
            self.items.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, None, len(self.text))

    def take(self):
        item = self.peek()
        if item[0] is not None:
            self.pos += 1
        return item

    def expect(self, kind: str):
        item = self.take()
        if item[0] != kind:
            raise ParseError(f"expected {kind}, found {item[1]!r}", item[2])
        return item


def parse_predicate(text: str) -> Pred:
    """Parse a boolean condition over machine variables.

    Grammar (loosest binding first): ``|``, ``&``, ``!``, then atoms of the
    form ``name op literal``, a bare boolean variable, ``TRUE``/``FALSE``, or
    a parenthesized condition.
    """
    toks = _Tokens(text)
    expr = _parse_or(toks, temporal=False)
    kind, val, pos = toks.peek()
    if kind is not None:
        raise ParseError(f"trailing input {val!r}", pos)
    return expr


def parse_temporal(text: str) -> Temporal:
    """Parse a temporal formula: predicates plus G/F/X prefixes and U."""
    toks = _Tokens(text)
    expr = _parse_or(toks, temporal=True)
    kind, val, pos = toks.peek()
    if kind is not None:
        raise ParseError(f"trailing input {val!r}", pos)
    return expr


def _parse_or(toks: _Tokens, temporal: bool):
    items = [_parse_and(toks, temporal)]
    while toks.peek()[0] == "or":
        toks.take()
        items.append(_parse_and(toks, temporal))
    return items[0] if len(items) == 1 else POr(tuple(items))


def _parse_and(toks: _Tokens, temporal: bool):
    items = [_parse_until(toks, temporal)]
    while toks.peek()[0] == "and":
        toks.take()
        items.append(_parse_until(toks, temporal))
    return items[0] if len(items) == 1 else PAnd(tuple(items))


def _parse_until(toks: _Tokens, temporal: bool):
    left = _parse_unary(toks, temporal)
    if temporal and toks.peek()[0] == "name" and toks.peek()[1] == "U":
        toks.take()
        right = _parse_unary(toks, temporal)
        return Until(left, right)
    return left


def _parse_unary(toks: _Tokens, temporal: bool):
    kind, val, pos = toks.peek()
    if kind == "not":
        toks.take()
        inner = _parse_unary(toks, temporal)
        return PNot(inner)
    if temporal and kind == "name" and val in _TEMPORAL_KEYWORDS and val != "U":
        toks.take()
        inner = _parse_unary(toks, temporal)
        if val == "G":
            return Always(inner)
        if val == "F":
            return Eventually(inner)
        return Next(inner)
    return _parse_atom(toks, temporal)


def _parse_atom(toks: _Tokens, temporal: bool):
    kind, val, pos = toks.take()
    if kind == "lpar":
        inner = _parse_or(toks, temporal)
        toks.expect("rpar")
        return inner
    if kind == "name":
        if val == "TRUE":
            return PConst(True)
        if val == "FALSE":
            return PConst(False)
        var = Var(val)
        nkind, nval, npos = toks.peek()
        if nkind == "op":
            toks.take()
            lit = _parse_literal(toks)
            return PCmp(nval, var, lit)
        return var
    raise ParseError(f"expected a condition, found {val!r}", pos)


def _parse_literal(toks: _Tokens) -> Value:
    kind, val, pos = toks.take()
    if kind == "int":
        return int(val)
    if kind == "name":
        if val == "TRUE":
            return True
        if val == "FALSE":
            return False
        return val
    raise ParseError(f"expected a value, found {val!r}", pos)
