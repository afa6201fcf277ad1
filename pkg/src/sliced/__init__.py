"""Translator and analyzer for hierarchical component-graph models.

The pipeline: parse a block-diagram document, classify blocks into behavior
archetypes by naming convention, compose the classified components into one
synchronous state machine, then generate assertions, merge subsystems, emit
NuSMV text, model-check, and replay counterexamples in a step simulator.
"""

__version__ = "0.1.0"

from .ir import (
    Archetype,
    ArchetypeSpec,
    Assertion,
    AssertionFlavor,
    AssertionKind,
    Block,
    ComponentGraph,
    CompositeMachine,
    Connection,
    CyclicClock,
    Instance,
    Line,
    ModelError,
    Net,
    Trace,
    TraceKind,
)

__all__ = [
    "Archetype",
    "ArchetypeSpec",
    "Assertion",
    "AssertionFlavor",
    "AssertionKind",
    "Block",
    "ComponentGraph",
    "CompositeMachine",
    "Connection",
    "CyclicClock",
    "Instance",
    "Line",
    "ModelError",
    "Net",
    "Trace",
    "TraceKind",
    "__version__",
]
