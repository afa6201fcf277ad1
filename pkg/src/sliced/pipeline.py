"""End-to-end model building: document text in, composed machine out.

This is the glue the CLI and the test suite share. Instance names are the
leaf block names when those are globally unique, otherwise the full path
with slashes flattened, so small models keep readable variable names.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

from . import archetypes, composer, ingest
from .config import Config
from .ir import (
    Archetype,
    Block,
    ComponentGraph,
    CompositeMachine,
    Connection,
    Instance,
    ModelError,
)


@dataclass(frozen=True)
class BuildReport:
    classification: ingest.ClassificationReport
    connections: ingest.ConnectionReport
    instance_names: Mapping[str, str]  # block path -> instance name


def load_model(path: str) -> ComponentGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return ingest.parse_model(fh.read(), source=path)


def instance_names(report: ingest.ClassificationReport) -> Dict[str, str]:
    """Choose a machine-level name for every classified block."""
    leaf_counts: Dict[str, int] = {}
    for c in report.classified:
        leaf = c.path.rsplit("/", 1)[-1]
        leaf_counts[leaf] = leaf_counts.get(leaf, 0) + 1
    names = {}
    for c in report.classified:
        leaf = c.path.rsplit("/", 1)[-1]
        names[c.path] = leaf if leaf_counts[leaf] == 1 else c.path.replace("/", "_")
    return names


def build_machine(
    graph: ComponentGraph,
    config: Optional[Config] = None,
) -> Tuple[CompositeMachine, BuildReport]:
    """Classify, resolve, instantiate, and compose one model document."""
    config = config or Config()
    report = ingest.classify(graph, config.table)
    if not report.classified:
        raise ModelError(f"model {graph.name!r} contains no recognizable components")
    conn_report = ingest.resolve_connections(graph, report)
    names = instance_names(report)

    instances: List[Instance] = []
    for c in report.classified:
        params = config.params_for(c.archetype, c.block.params)
        spec = archetypes.instantiate(c.archetype, params)
        instances.append(
            Instance(
                name=names[c.path],
                spec=spec,
                block_path=c.path,
                period=graph.timing.get(c.path),
                deadline=graph.deadlines.get(c.path),
                final_state=c.block.final,
            )
        )

    connections = [
        Connection(
            source=names[rc.source_path],
            source_port=rc.source_port,
            sink=names[rc.sink_path],
            sink_port=rc.sink_port,
            line_name=rc.line_name,
            capacity=rc.capacity,
        )
        for rc in conn_report.connections
    ]

    groups = _interior_groups(graph, report, names)
    machine = composer.compose(
        name=graph.name,
        instances=instances,
        connections=connections,
        groups=groups,
    )
    return machine, BuildReport(
        classification=report,
        connections=conn_report,
        instance_names=names,
    )


def _interior_groups(
    graph: ComponentGraph,
    report: ingest.ClassificationReport,
    names: Mapping[str, str],
) -> Dict[str, Tuple[str, ...]]:
    """Map each container block to the classified instances beneath it."""
    classified_paths = [c.path for c in report.classified]
    classified_set = set(classified_paths)
    groups: Dict[str, Tuple[str, ...]] = {}
    claimed: Dict[str, str] = {}
    for path, block in graph.walk():
        if not block.children or path in classified_set:
            continue
        members = tuple(
            sorted(names[p] for p in classified_paths if p.startswith(path + "/"))
        )
        if not members:
            continue
        # container names are usually unique; fall back to the path when not
        key = block.name if block.name not in claimed else path
        claimed[block.name] = path
        groups[key] = members
    return groups
