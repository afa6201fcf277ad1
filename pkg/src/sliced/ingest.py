"""Reading component-graph documents and turning blocks into components.

The document format is JSON (see docs/format.md): a block tree, a list of
lines between ports, and optional timing annotations. Classification walks
the tree in a fixed pre-order and matches block names against an ordered
rule table, first match wins. Connection resolution follows lines through
unclassified wiring blocks until it lands on classified components.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

from .ir import (
    Archetype,
    Block,
    ComponentGraph,
    Endpoint,
    Line,
    ModelError,
    Port,
    validate_graph,
)


class DocumentError(ModelError):
    """A model document that cannot be read. Carries line/column when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None) -> None:
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class AmbiguousMatch(ModelError):
    """Two equally specific, conflicting rules matched one block name."""


_PORT_REF = re.compile(r"^(?P<path>[^:]+):(?P<dir>in|out)(?P<index>[1-9]\d*)$")


def _parse_port_ref(text: str, what: str) -> Endpoint:
    m = _PORT_REF.match(text)
    if m is None:
        raise DocumentError(f"{what} must look like 'path:in1' or 'path:out2', got {text!r}")
    return Endpoint(path=m.group("path"), port=Port(direction=m.group("dir"), index=int(m.group("index"))))


def _parse_block(obj: object, where: str) -> Block:
    if not isinstance(obj, dict):
        raise DocumentError(f"block at {where} must be an object")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise DocumentError(f"block at {where} needs a non-empty 'name'")
    if "/" in name or ":" in name:
        raise DocumentError(f"block name {name!r} may not contain '/' or ':'")
    kind = obj.get("kind", "SubSystem")
    if not isinstance(kind, str):
        raise DocumentError(f"block {name!r}: 'kind' must be a string")
    ports = []
    for i, p in enumerate(obj.get("ports", [])):
        if not isinstance(p, dict) or "dir" not in p or "index" not in p:
            raise DocumentError(f"block {name!r}: port {i} needs 'dir' and 'index'")
        try:
            ports.append(Port(direction=p["dir"], index=int(p["index"])))
        except (TypeError, ValueError, ModelError) as exc:
            raise DocumentError(f"block {name!r}: bad port {i}: {exc}") from None
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise DocumentError(f"block {name!r}: 'params' must be an object")
    for key, value in params.items():
        if not isinstance(value, int) or isinstance(value, bool):
            raise DocumentError(f"block {name!r}: parameter {key!r} must be an integer")
    final = obj.get("final")
    if final is not None and not isinstance(final, str):
        raise DocumentError(f"block {name!r}: 'final' must be a state name")
    children = tuple(
        _parse_block(c, f"{where}/{name}") for c in obj.get("children", [])
    )
    return Block(name=name, kind=kind, ports=tuple(ports), children=children, params=params, final=final)


def parse_model(text: str, source: str = "<model>") -> ComponentGraph:
    """Parse a model document into a ComponentGraph.

    Raises DocumentError with position information for syntax errors and a
    description of the offending element for schema errors. The returned
    graph has already passed validate_graph.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{source}: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    if not isinstance(doc, dict):
        raise DocumentError(f"{source}: top level must be an object")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise DocumentError(f"{source}: missing model 'name'")
    blocks_obj = doc.get("blocks")
    if not isinstance(blocks_obj, list) or not blocks_obj:
        raise DocumentError(f"{source}: 'blocks' must be a non-empty list")
    blocks = tuple(_parse_block(b, name) for b in blocks_obj)

    lines: List[Line] = []
    for i, entry in enumerate(doc.get("lines", [])):
        if not isinstance(entry, dict) or "src" not in entry or "dst" not in entry:
            raise DocumentError(f"{source}: line {i} needs 'src' and 'dst'")
        src = _parse_port_ref(entry["src"], f"line {i} src")
        dst_list = entry["dst"]
        if isinstance(dst_list, str):
            dst_list = [dst_list]
        if not isinstance(dst_list, list) or not dst_list:
            raise DocumentError(f"{source}: line {i} 'dst' must be a non-empty list")
        sinks = tuple(_parse_port_ref(d, f"line {i} dst") for d in dst_list)
        line_name = entry.get("name")
        if line_name is not None and not isinstance(line_name, str):
            raise DocumentError(f"{source}: line {i} 'name' must be a string")
        capacity = entry.get("capacity")
        if capacity is not None and (not isinstance(capacity, int) or isinstance(capacity, bool) or capacity < 0):
            raise DocumentError(f"{source}: line {i} 'capacity' must be a non-negative integer")
        lines.append(Line(source=src, sinks=sinks, name=line_name, capacity=capacity))

    def _int_map(key: str) -> dict:
        raw = doc.get(key, {})
        if not isinstance(raw, dict):
            raise DocumentError(f"{source}: '{key}' must be an object")
        out = {}
        for path, value in raw.items():
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise DocumentError(f"{source}: '{key}' entry {path!r} must be a positive integer")
            out[path] = value
        return out

    graph = ComponentGraph(
        name=name,
        blocks=blocks,
        lines=tuple(lines),
        timing=_int_map("timing"),
        deadlines=_int_map("deadlines"),
    )
    violations = validate_graph(graph)
    if violations:
        first = violations[0]
        raise DocumentError(f"{source}: {first.code} at {first.subject}: {first.detail}")
    return graph


def serialize_model(graph: ComponentGraph) -> str:
    """Render a graph back to document text; parse_model round-trips it."""

    def block_obj(block: Block) -> dict:
        obj: dict = {"name": block.name, "kind": block.kind}
        if block.ports:
            obj["ports"] = [{"dir": p.direction, "index": p.index} for p in block.ports]
        if block.params:
            obj["params"] = dict(block.params)
        if block.final is not None:
            obj["final"] = block.final
        if block.children:
            obj["children"] = [block_obj(c) for c in block.children]
        return obj

    doc: dict = {
        "name": graph.name,
        "blocks": [block_obj(b) for b in graph.blocks],
        "lines": [],
    }
    for line in graph.lines:
        entry: dict = {"src": str(line.source), "dst": [str(s) for s in line.sinks]}
        if line.name is not None:
            entry["name"] = line.name
        if line.capacity is not None:
            entry["capacity"] = line.capacity
        doc["lines"].append(entry)
    if graph.timing:
        doc["timing"] = dict(graph.timing)
    if graph.deadlines:
        doc["deadlines"] = dict(graph.deadlines)
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class Rule:
    """One row of the classification table.

    ``pattern`` matches case-insensitively; as a substring by default, or
    against the start of the name when ``prefix`` is set. ``kind`` restricts
    the rule to blocks of that kind.
    """

    pattern: str
    archetype: Archetype
    prefix: bool = False
    kind: Optional[str] = None

    def matches(self, block: Block) -> bool:
        if self.kind is not None and block.kind != self.kind:
            return False
        name = block.name.lower()
        needle = self.pattern.lower()
        return name.startswith(needle) if self.prefix else needle in name

    @property
    def specificity(self) -> int:
        return len(self.pattern)


@dataclass(frozen=True)
class ClassificationTable:
    rules: Tuple[Rule, ...]
    strict: bool = False

    def prepend(self, rules: Iterable[Rule]) -> "ClassificationTable":
        return ClassificationTable(rules=tuple(rules) + self.rules, strict=self.strict)

    def match(self, block: Block) -> Optional[Archetype]:
        first: Optional[Rule] = None
        for rule in self.rules:
            if rule.matches(block):
                if first is None:
                    first = rule
                elif (
                    self.strict
                    and rule.specificity == first.specificity
                    and rule.archetype is not first.archetype
                ):
                    raise AmbiguousMatch(
                        f"block {block.name!r} matches {first.pattern!r} ({first.archetype.value}) "
                        f"and {rule.pattern!r} ({rule.archetype.value}) at equal specificity"
                    )
        return first.archetype if first else None


def default_table() -> ClassificationTable:
    """The stock naming-convention table. Sensor-code prefixes are known to
    over-match; override the table when they misfire on a new design."""
    return ClassificationTable(
        rules=(
            Rule("battery", Archetype.BATTERY),
            Rule("circuitbreaker", Archetype.CIRCUIT_BREAKER),
            Rule("breaker", Archetype.CIRCUIT_BREAKER),
            Rule("relay", Archetype.RELAY),
            Rule(" ey", Archetype.RELAY),
            Rule("inverter", Archetype.INVERTER),
            Rule("load bank", Archetype.MERGED_LOAD_BANK),
            Rule("loadbank", Archetype.MERGED_LOAD_BANK),
            Rule("load", Archetype.LOAD),
            Rule("sensor", Archetype.SENSOR),
            Rule("e1", Archetype.SENSOR, prefix=True),
            Rule("it", Archetype.SENSOR, prefix=True),
            Rule("st", Archetype.SENSOR, prefix=True),
            Rule("fan", Archetype.ACTUATOR),
            Rule("pump", Archetype.ACTUATOR),
            Rule("light", Archetype.ACTUATOR),
            Rule("actuator", Archetype.ACTUATOR),
        )
    )


@dataclass(frozen=True)
class Classified:
    path: str
    block: Block
    archetype: Archetype


@dataclass(frozen=True)
class ClassificationReport:
    classified: Tuple[Classified, ...]
    unclassified: Tuple[str, ...]

    def archetype_of(self, path: str) -> Optional[Archetype]:
        for c in self.classified:
            if c.path == path:
                return c.archetype
        return None


def classify(graph: ComponentGraph, table: Optional[ClassificationTable] = None) -> ClassificationReport:
    """Assign an archetype to every block the table recognizes.

    Traversal order is the graph's own deterministic pre-order (children
    sorted by name), so the result never depends on container iteration
    order.
    """
    table = table or default_table()
    classified = []
    unclassified = []
    for path, block in graph.walk():
        archetype = table.match(block)
        if archetype is None:
            unclassified.append(path)
        else:
            classified.append(Classified(path=path, block=block, archetype=archetype))
    return ClassificationReport(classified=tuple(classified), unclassified=tuple(unclassified))


# ---------------------------------------------------------------------------
# connection resolution


@dataclass(frozen=True)
class ResolvedConnection:
    source_path: str
    source_port: int
    sink_path: str
    sink_port: int
    line_name: Optional[str]
    capacity: Optional[int]


@dataclass(frozen=True)
class OpenEndpoint:
    """A line path that never reached a classified block; the affected input
    is treated as a free environment input downstream."""

    origin: str
    dead_end: str


@dataclass(frozen=True)
class ConnectionReport:
    connections: Tuple[ResolvedConnection, ...]
    open_endpoints: Tuple[OpenEndpoint, ...]


def resolve_connections(graph: ComponentGraph, report: ClassificationReport) -> ConnectionReport:
    """Resolve lines into connections between classified blocks.

    From each classified block's out-port, follow lines forward. Unclassified
    leaf blocks pass any in-port to all their out-ports; unclassified
    containers are traversed through the explicit lines attached to their
    ports. Each reachable classified in-port yields one connection. Fan-out
    therefore produces one connection per sink. The line name and capacity
    attached to a connection come from the first line on its path.
    """
    classified_paths = {c.path for c in report.classified}
    blocks = {path: block for path, block in graph.walk()}
    has_children = {path: bool(block.children) for path, block in blocks.items()}

    # edges out of a port: line source -> sinks
    from_port: dict = {}
    for line in graph.lines:
        key = (line.source.path, line.source.port.key)
        from_port.setdefault(key, []).append(line)

    connections: List[ResolvedConnection] = []
    opens: List[OpenEndpoint] = []

    def follow(origin_path: str, origin_port: int, line: Line) -> None:
        # Breadth-first over port hops; visited guards against wiring loops.
        queue: List[Tuple[str, Port]] = [(s.path, s.port) for s in line.sinks]
        visited = set()
        while queue:
            path, port = queue.pop(0)
            if (path, port.key) in visited:
                continue
            visited.add((path, port.key))
            if path not in blocks:
                continue  # validate_graph already reported it
            if path in classified_paths:
                if port.direction == "in":
                    connections.append(
                        ResolvedConnection(
                            source_path=origin_path,
                            source_port=origin_port,
                            sink_path=path,
                            sink_port=port.index,
                            line_name=line.name,
                            capacity=line.capacity,
                        )
                    )
                else:
                    # a line feeding a classified block's out-port is wiring
                    # that cannot carry anything further
                    opens.append(
                        OpenEndpoint(origin=f"{origin_path}:out{origin_port}", dead_end=f"{path}:{port.key}")
                    )
                continue
            hops = []
            if port.direction == "in" and not has_children[path]:
                # leaf wiring block: pass through to every out-port
                for p in blocks[path].ports:
                    if p.direction == "out":
                        hops.append((path, p))
            # continue along explicit lines attached to this port
            for nxt in from_port.get((path, port.key), []):
                hops.extend((s.path, s.port) for s in nxt.sinks)
            if not hops:
                opens.append(OpenEndpoint(origin=f"{origin_path}:out{origin_port}", dead_end=f"{path}:{port.key}"))
            queue.extend(hops)

    for c in report.classified:
        for port in c.block.ports:
            if port.direction != "out":
                continue
            for line in from_port.get((c.path, port.key), []):
                follow(c.path, port.index, line)

    connections.sort(key=lambda r: (r.source_path, r.source_port, r.sink_path, r.sink_port))
    return ConnectionReport(connections=tuple(connections), open_endpoints=tuple(opens))


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class ModelStats:
    total_blocks: int
    max_depth: int
    blocks_per_level: Tuple[int, ...]
    classified: int
    unclassified: int
    lines: int


def model_stats(graph: ComponentGraph, table: Optional[ClassificationTable] = None) -> ModelStats:
    """Count blocks by depth (top-level blocks are depth 1) and classification."""
    per_level: List[int] = []
    total = 0

    def visit(block: Block, depth: int) -> None:
        nonlocal total
        total += 1
        while len(per_level) < depth:
            per_level.append(0)
        per_level[depth - 1] += 1
        for child in block.children:
            visit(child, depth + 1)

    for block in graph.blocks:
        visit(block, 1)
    report = classify(graph, table)
    return ModelStats(
        total_blocks=total,
        max_depth=len(per_level),
        blocks_per_level=tuple(per_level),
        classified=len(report.classified),
        unclassified=len(report.unclassified),
        lines=len(graph.lines),
    )
