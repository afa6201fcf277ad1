"""Model documents: parsing, validation, classification, connection tracing."""

import json

import pytest

from sliced import ingest
from sliced.ingest import (
    AmbiguousMatch,
    ClassificationTable,
    DocumentError,
    Rule,
    classify,
    default_table,
    model_stats,
    parse_model,
    resolve_connections,
    serialize_model,
)
from sliced.ir import Archetype, Block, validate_graph


def doc(**overrides) -> str:
    base = {
        "name": "Demo",
        "blocks": [
            {
                "name": "Root",
                "children": [
                    {"name": "Battery9", "ports": [{"dir": "out", "index": 1}], "params": {"capacity": 5}},
                    {"name": "PumpA", "ports": [{"dir": "in", "index": 1}]},
                ],
            }
        ],
        "lines": [{"src": "Root/Battery9:out1", "dst": ["Root/PumpA:in1"], "name": "Feed", "capacity": 4}],
    }
    base.update(overrides)
    return json.dumps(base)


def test_parse_model_happy_path():
    g = parse_model(doc())
    assert g.name == "Demo"
    assert [b.name for b in g.blocks] == ["Root"]
    assert g.find("Root/Battery9").params == {"capacity": 5}
    (line,) = g.lines
    assert line.name == "Feed"
    assert line.capacity == 4
    assert str(line.source) == "Root/Battery9:out1"


def test_parse_model_reports_json_position():
    with pytest.raises(DocumentError) as exc:
        parse_model("{ broken", source="bad.json")
    assert "bad.json" in str(exc.value)
    assert "line 1" in str(exc.value)


@pytest.mark.parametrize(
    "mutation",
    [
        {"name": ""},
        {"blocks": []},
        {"blocks": [{"name": "a/b"}]},
        {"blocks": [{"name": "x", "ports": [{"dir": "sideways", "index": 1}]}]},
        {"blocks": [{"name": "x", "params": {"p": "five"}}]},
        {"blocks": [{"name": "x", "params": {"p": True}}]},
        {"lines": [{"src": "nowhere", "dst": ["Root/PumpA:in1"]}]},
        {"lines": [{"src": "Root/Battery9:out1", "dst": []}]},
        {"lines": [{"src": "Root/Battery9:out1", "dst": ["Root/PumpA:in1"], "capacity": -1}]},
        {"timing": {"Root/PumpA": 0}},
        {"timing": "fast"},
    ],
)
def test_parse_model_rejects_schema_violations(mutation):
    with pytest.raises(DocumentError):
        parse_model(doc(**mutation))


def test_parse_model_rejects_dangling_endpoints():
    bad = doc(lines=[{"src": "Root/Battery9:out1", "dst": ["Root/Ghost:in1"]}])
    with pytest.raises(DocumentError, match="DanglingEndpoint"):
        parse_model(bad)


def test_parse_model_accepts_single_string_dst():
    g = parse_model(doc(lines=[{"src": "Root/Battery9:out1", "dst": "Root/PumpA:in1"}]))
    assert len(g.lines[0].sinks) == 1


def test_serialize_round_trips():
    g = parse_model(doc(timing={"Root/PumpA": 100}, deadlines={"Root/PumpA": 200}))
    again = parse_model(serialize_model(g))
    assert again == g


def test_validate_graph_flags_duplicate_names_and_ports():
    twins = Block(
        name="Top",
        children=(Block(name="A"), Block(name="A")),
    )
    from sliced.ir import ComponentGraph

    violations = validate_graph(ComponentGraph(name="x", blocks=(twins,), lines=()))
    assert any(v.code == "DuplicateName" for v in violations)


def test_validate_graph_flags_shared_block_objects():
    from sliced.ir import ComponentGraph

    shared = Block(name="Leaf")
    tree = Block(name="Top", children=(Block(name="L", children=(shared,)), Block(name="R", children=(shared,))))
    violations = validate_graph(ComponentGraph(name="x", blocks=(tree,), lines=()))
    assert any(v.code == "SharedBlock" for v in violations)


# -- classification ----------------------------------------------------------


def test_default_table_first_match_wins():
    table = default_table()
    # "loadbank" appears before the bare "load" rule, so the longer match
    # decides even though both patterns occur in the name
    assert table.match(Block(name="MainLoadBank")) is Archetype.MERGED_LOAD_BANK
    assert table.match(Block(name="DCLoadBox")) is Archetype.LOAD
    assert table.match(Block(name="CircuitBreakerEY162")) is Archetype.CIRCUIT_BREAKER
    assert table.match(Block(name="RelayEY244")) is Archetype.RELAY
    assert table.match(Block(name="Battery2")) is Archetype.BATTERY
    assert table.match(Block(name="Junction7")) is None


def test_prefix_rules_only_match_the_start():
    table = default_table()
    assert table.match(Block(name="STFlowMeter")) is Archetype.SENSOR
    assert table.match(Block(name="FastSTUnit")) is None


def test_rule_kind_restricts_block_kind():
    rule = Rule("bank", Archetype.MERGED_LOAD_BANK, kind="SubSystem")
    assert rule.matches(Block(name="BankOne", kind="SubSystem"))
    assert not rule.matches(Block(name="BankOne", kind="Leaf"))


def test_matching_is_case_insensitive():
    table = default_table()
    assert table.match(Block(name="BATTERY_MAIN")) is Archetype.BATTERY
    assert table.match(Block(name="battery_main")) is Archetype.BATTERY


def test_strict_table_raises_on_equal_specificity_conflict():
    table = ClassificationTable(
        rules=(Rule("abc", Archetype.SENSOR), Rule("bcd", Archetype.RELAY)),
        strict=True,
    )
    with pytest.raises(AmbiguousMatch):
        table.match(Block(name="xabcdx"))
    # same archetype twice is not a conflict
    ok = ClassificationTable(
        rules=(Rule("abc", Archetype.SENSOR), Rule("bcd", Archetype.SENSOR)),
        strict=True,
    )
    assert ok.match(Block(name="xabcdx")) is Archetype.SENSOR


def test_prepend_puts_overrides_first():
    table = default_table().prepend([Rule("battery", Archetype.SENSOR)])
    assert table.match(Block(name="Battery1")) is Archetype.SENSOR


def test_classify_reports_unclassified_paths(corpus_dir):
    g = parse_model((corpus_dir / "adapt-mini.json").read_text())
    report = classify(g)
    assert "ADAPTMini/Junction1" in report.unclassified
    assert report.archetype_of("ADAPTMini/Battery1") is Archetype.BATTERY
    assert report.archetype_of("ADAPTMini/Junction1") is None


# -- connection resolution ---------------------------------------------------


def test_resolve_direct_connection():
    g = parse_model(doc())
    report = classify(g)
    conns = resolve_connections(g, report).connections
    assert len(conns) == 1
    c = conns[0]
    assert (c.source_path, c.sink_path) == ("Root/Battery9", "Root/PumpA")
    assert c.line_name == "Feed"
    assert c.capacity == 4


def test_resolve_traces_through_unclassified_wiring():
    text = json.dumps(
        {
            "name": "M",
            "blocks": [
                {
                    "name": "Top",
                    "children": [
                        {"name": "Battery1", "ports": [{"dir": "out", "index": 1}], "params": {"capacity": 3}},
                        {
                            "name": "Junction",
                            "ports": [
                                {"dir": "in", "index": 1},
                                {"dir": "out", "index": 1},
                                {"dir": "out", "index": 2},
                            ],
                        },
                        {"name": "PumpA", "ports": [{"dir": "in", "index": 1}]},
                        {"name": "PumpB", "ports": [{"dir": "in", "index": 1}]},
                    ],
                }
            ],
            "lines": [
                {"src": "Top/Battery1:out1", "dst": ["Top/Junction:in1"], "name": "Main"},
                {"src": "Top/Junction:out1", "dst": ["Top/PumpA:in1"]},
                {"src": "Top/Junction:out2", "dst": ["Top/PumpB:in1"]},
            ],
        }
    )
    g = parse_model(text)
    conns = resolve_connections(g, classify(g)).connections
    sinks = sorted(c.sink_path for c in conns)
    assert sinks == ["Top/PumpA", "Top/PumpB"]
    # the name travels from the first line of the path
    assert all(c.line_name == "Main" for c in conns)
    assert all(c.source_path == "Top/Battery1" for c in conns)


def test_resolve_traces_through_container_ports(corpus_dir):
    g = parse_model((corpus_dir / "adapt-bank6.json").read_text())
    report = classify(g)
    conns = resolve_connections(g, report).connections
    bank_feeds = [c for c in conns if c.sink_path.startswith("ADAPTBank6/BankOne/")]
    assert len(bank_feeds) == 6
    assert {c.source_path for c in bank_feeds} == {"ADAPTBank6/CircuitBreakerEY162"}
    assert {c.line_name for c in bank_feeds} == {"BankFeed"}


def test_resolve_reports_dead_ends():
    text = json.dumps(
        {
            "name": "M",
            "blocks": [
                {
                    "name": "Top",
                    "children": [
                        {"name": "Battery1", "ports": [{"dir": "out", "index": 1}], "params": {"capacity": 3}},
                        {"name": "Wall", "ports": [{"dir": "in", "index": 1}]},
                    ],
                }
            ],
            "lines": [{"src": "Top/Battery1:out1", "dst": ["Top/Wall:in1"]}],
        }
    )
    g = parse_model(text)
    report = resolve_connections(g, classify(g))
    assert report.connections == ()
    assert len(report.open_endpoints) == 1
    assert report.open_endpoints[0].dead_end == "Top/Wall:in1"
    assert report.open_endpoints[0].origin == "Top/Battery1:out1"


def test_fanout_line_yields_one_connection_per_sink(corpus_dir):
    g = parse_model((corpus_dir / "adapt-repair.json").read_text())
    report = classify(g)
    conns = resolve_connections(g, report).connections
    relays = [c for c in conns if c.source_path == "ADAPTRepair/InverterIV1"]
    assert len(relays) == 4


# -- statistics --------------------------------------------------------------


def test_model_stats_counts_blocks_by_level(corpus_dir):
    g = parse_model((corpus_dir / "adapt-mini.json").read_text())
    stats = model_stats(g)
    assert stats.total_blocks == 6
    assert stats.max_depth == 2
    assert stats.blocks_per_level == (1, 5)
    assert stats.classified == 4
    assert stats.unclassified == 2  # the root container and the junction
    assert stats.lines == len(g.lines)
