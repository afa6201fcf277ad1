"""Command line front end.

One executable, eight subcommands: stats, translate, assert, check, merge,
plan, simulate, replay. Diagnostics go to standard error; primary artifacts
(SMV text, traces, reports) go to standard output or the declared output
path, and are byte-identical across runs for the same inputs.

Exit codes: 0 success (check: all verified), 1 check found a violation or a
replay disagreed, 2 a bound or state cap was exhausted during check/plan,
64 usage error, 65 unreadable input, 70 state cap exhausted elsewhere.
"""

from __future__ import annotations

import argparse
import json
import shutil
import subprocess
import sys
import tempfile
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from . import assertgen, checker, ingest, pipeline, reducer, simulator, smv
from .checker import Outcome, StateCapExceeded, Verdict
from .config import Config, load_config, _parse_rules
from .exprs import ExprError, parse_predicate, parse_temporal
from .ir import (
    Assertion,
    AssertionFlavor,
    AssertionKind,
    CompositeMachine,
    ModelError,
    Trace,
)
from .exprs import Always, Eventually

EX_OK = 0
EX_FALSIFIED = 1
EX_EXHAUSTED = 2
EX_USAGE = 64
EX_DATA = 65
EX_CAP = 70


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def _write_output(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)


# ---------------------------------------------------------------------------
# shared loading steps


def _load_graph(args: argparse.Namespace):
    config = load_config(getattr(args, "config", None))
    graph = pipeline.load_model(args.model)
    return graph, config


def _load_machine(args: argparse.Namespace) -> Tuple[CompositeMachine, Config]:
    graph, config = _load_graph(args)
    machine, _report = pipeline.build_machine(graph, config)
    machine = _apply_merges(machine, args, config)
    return machine, config


def _apply_merges(
    machine: CompositeMachine, args: argparse.Namespace, config: Config
) -> CompositeMachine:
    cap = config.merge_enumeration_cap
    reports: List[reducer.MergeReport] = []
    if getattr(args, "auto_merge", False):
        machine, merged = reducer.auto_merge(machine, cap)
        reports.extend(merged)
    for group in getattr(args, "merge", None) or []:
        candidates = {c.group: c for c in reducer.find_merge_candidates(machine, cap)}
        if group not in candidates:
            known = ", ".join(sorted(candidates)) or "none"
            raise ModelError(
                f"subsystem {group!r} is not mergeable here (mergeable: {known})"
            )
        machine = reducer.merge(machine, candidates[group])
        reports.append(reducer.report_for(candidates[group]))
    for report in reports:
        _diag(_describe_merge(report))
    return machine


def _describe_merge(report: reducer.MergeReport) -> str:
    kind = "exact" if report.exact else "interval bound"
    return (
        f"merged {report.group}: {report.naive_count} naive combinations -> "
        f"{report.effective_count} effective boundary values "
        f"(reduction {report.reduction:.1f}x, {kind})"
    )


def _load_assertions(
    machine: CompositeMachine, mode: str
) -> Tuple[Assertion, ...]:
    if mode == "auto":
        return assertgen.gen_all(machine)
    with open(mode, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    out: List[Assertion] = []
    for lineno, raw in enumerate(lines, 1):
        text = raw.strip()
        if not text or text.startswith("--") or text.startswith("#"):
            continue
        if text.startswith("LTLSPEC"):
            text = text[len("LTLSPEC") :].strip()
        formula = parse_temporal(text)
        assertgen.validate_vars(machine, formula)
        flavor = (
            AssertionFlavor.LIVENESS
            if isinstance(formula, Always) and isinstance(formula.body, Eventually)
            else AssertionFlavor.SAFETY
        )
        out.append(
            Assertion(
                kind=AssertionKind.ERROR_DISCOVERY,
                flavor=flavor,
                formula=formula,
                provenance=f"{mode}:{lineno}",
            )
        )
    if not out:
        raise ModelError(f"assertion file {mode!r} contains no formulas")
    return tuple(out)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_stats(args: argparse.Namespace) -> int:
    graph, config = _load_graph(args)
    table = config.table
    if args.table:
        with open(args.table, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
        if isinstance(doc, dict):
            doc = doc.get("classification", [])
        table = ingest.ClassificationTable(rules=_parse_rules(doc, args.table))
    stats = ingest.model_stats(graph, table)
    print(f"model: {graph.name}")
    print(f"blocks: {stats.total_blocks}")
    print(f"depth: {stats.max_depth}")
    print(f"blocks per level: {' '.join(str(n) for n in stats.blocks_per_level)}")
    print(f"classified: {stats.classified}")
    print(f"unclassified: {stats.unclassified}")
    print(f"lines: {stats.lines}")
    return EX_OK


def _cmd_translate(args: argparse.Namespace) -> int:
    machine, _config = _load_machine(args)
    assertions: Tuple[Assertion, ...] = ()
    if args.assertions is not None:
        assertions = _load_assertions(machine, args.assertions)
    text = smv.emit(machine, assertions, faithful=args.faithful_listing)
    _write_output(text, args.output)
    if args.output is not None:
        _diag(f"wrote {args.output}")
    return EX_OK


def _cmd_assert(args: argparse.Namespace) -> int:
    machine, _config = _load_machine(args)
    for assertion in assertgen.gen_all(machine):
        print(f"-- {assertion.provenance}")
        print(f"LTLSPEC {assertion.to_smv()}")
        print()
    return EX_OK


def _cmd_check(args: argparse.Namespace) -> int:
    machine, config = _load_machine(args)
    assertions = _load_assertions(machine, args.assertions)
    if args.backend == "nusmv":
        return _check_with_nusmv(machine, assertions)

    bound = args.bound if args.bound is not None else config.liveness_bound
    cap = args.cap if args.cap is not None else config.state_cap
    any_falsified = False
    any_exhausted = False
    first_trace: Optional[str] = None
    for assertion in assertions:
        try:
            verdict = checker.check(machine, assertion, bound=bound, state_cap=cap)
        except StateCapExceeded as exc:
            print(f"BoundExhausted  {assertion.provenance}")
            _diag(str(exc))
            any_exhausted = True
            continue
        print(f"{verdict.outcome.value}  {assertion.provenance}")
        _diag(
            f"  explored {verdict.states_explored} states, "
            f"frontier peak {verdict.frontier_peak}, {verdict.elapsed_steps} steps"
        )
        if verdict.outcome is Outcome.BOUND_EXHAUSTED:
            any_exhausted = True
        elif verdict.outcome is Outcome.FALSIFIED and verdict.trace is not None:
            any_falsified = True
            text = smv.emit_trace(verdict.trace, header=assertion.to_smv())
            sys.stdout.write(text)
            print()
            if first_trace is None:
                first_trace = text
            replayed = simulator.replay(machine, verdict.trace)
            if not replayed.fully_replicated:
                _diag(
                    f"  warning: counterexample did not replay cleanly "
                    f"({len(replayed.mismatches)} mismatches)"
                )
    if args.trace is not None and first_trace is not None:
        _write_output(first_trace, args.trace)
        _diag(f"wrote {args.trace}")
    if any_falsified:
        return EX_FALSIFIED
    if any_exhausted:
        return EX_EXHAUSTED
    return EX_OK


def _find_nusmv() -> Optional[str]:
    for name in ("NuSMV", "nusmv"):
        path = shutil.which(name)
        if path:
            return path
    return None


def _check_with_nusmv(
    machine: CompositeMachine, assertions: Sequence[Assertion]
) -> int:
    binary = _find_nusmv()
    if binary is None:
        _diag("check --backend nusmv: no NuSMV binary on PATH")
        return EX_USAGE
    text = smv.emit(machine, assertions)
    with tempfile.NamedTemporaryFile("w", suffix=".smv", delete=False) as handle:
        handle.write(text)
        path = handle.name
    proc = subprocess.run(
        [binary, path], capture_output=True, text=True, check=False
    )
    sys.stdout.write(proc.stdout)
    if proc.returncode != 0:
        _diag(proc.stderr.strip())
        return EX_DATA
    verdicts = [
        line for line in proc.stdout.splitlines() if line.startswith("-- specification")
    ]
    if not verdicts:
        _diag("NuSMV produced no verdict lines")
        return EX_DATA
    if any(line.rstrip().endswith("is false") for line in verdicts):
        return EX_FALSIFIED
    return EX_OK


def _cmd_merge(args: argparse.Namespace) -> int:
    # --merge/--auto-merge are translate/check options, not used here
    graph, config = _load_graph(args)
    machine, _report = pipeline.build_machine(graph, config)
    cap = config.merge_enumeration_cap
    reports: List[reducer.MergeReport] = []
    if args.subsystem:
        candidates = {
            c.group: c for c in reducer.find_merge_candidates(machine, cap)
        }
        if args.subsystem not in candidates:
            known = ", ".join(sorted(candidates)) or "none"
            raise ModelError(
                f"subsystem {args.subsystem!r} is not mergeable (mergeable: {known})"
            )
        candidate = candidates[args.subsystem]
        reducer.merge(machine, candidate)  # proves the merge composes
        reports.append(reducer.report_for(candidate))
    else:
        _machine, merged = reducer.auto_merge(machine, cap)
        reports.extend(merged)
    if not reports:
        _diag("no mergeable subsystems found")
        return EX_OK
    for report in reports:
        print(_describe_merge(report))
    if args.report is not None:
        payload = [
            {
                "group": r.group,
                "members": list(r.members),
                "boundary": r.boundary_label,
                "naive": r.naive_count,
                "effective": r.effective_count,
                "reduction": round(r.reduction, 3),
                "exact": r.exact,
            }
            for r in reports
        ]
        _write_output(json.dumps(payload, indent=2) + "\n", args.report)
        _diag(f"wrote {args.report}")
    return EX_OK


def _cmd_plan(args: argparse.Namespace) -> int:
    machine, config = _load_machine(args)
    failures: Dict[str, str] = {}
    for item in args.fail:
        name, sep, state = item.partition("=")
        if not sep or not name or not state:
            raise ModelError(f"--fail wants Instance=state, got {item!r}")
        failures[name] = state
    goal = parse_predicate(args.goal)
    failed_machine, assertion = assertgen.gen_path_discovery(machine, failures, goal)
    keep = parse_predicate(args.keep) if args.keep else None
    if keep is not None:
        assertgen.validate_vars(machine, keep)
    settings = config.plan
    cap = args.cap if args.cap is not None else config.state_cap
    try:
        verdict = checker.find_plan(
            failed_machine, assertion, settings=settings, keep=keep, state_cap=cap
        )
    except StateCapExceeded as exc:
        _diag(str(exc))
        return EX_EXHAUSTED
    _diag(
        f"explored {verdict.states_explored} states, "
        f"frontier peak {verdict.frontier_peak}, {verdict.elapsed_steps} steps"
    )
    if verdict.outcome is Outcome.VERIFIED:
        _diag("no plan: the goal is unreachable under the given failures")
        return EX_FALSIFIED
    assert verdict.trace is not None
    text = smv.emit_trace(verdict.trace, header=assertion.to_smv())
    _write_output(text, args.out)
    if args.out is not None:
        _diag(f"wrote {args.out}")
    return EX_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    machine, _config = _load_machine(args)
    script = simulator.load_script(args.script)
    trace = simulator.simulate(machine, script, args.horizon)
    text = smv.emit_trace(trace)
    _write_output(text, args.out)
    if args.out is not None:
        _diag(f"wrote {args.out}")
    return EX_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    machine, _config = _load_machine(args)
    with open(args.trace, "r", encoding="utf-8") as handle:
        trace = smv.parse_trace(handle.read())
    try:
        report = simulator.replay(machine, trace)
    except simulator.IllegalStep as exc:
        _diag(f"trace does not fit the machine: {exc}")
        return EX_FALSIFIED
    print(f"steps: {report.steps}")
    print(f"compared: {len(report.compared)} variables")
    if report.skipped:
        print(f"skipped: {' '.join(report.skipped)}")
    if report.reconstructed:
        print(f"reconstructed: {' '.join(report.reconstructed)}")
    if report.mismatches:
        for miss in report.mismatches:
            print(
                f"mismatch at step {miss.step}: {miss.label} "
                f"expected {miss.expected!r}, got {miss.actual!r}"
            )
        return EX_FALSIFIED
    print("agreement: full")
    return EX_OK


# ---------------------------------------------------------------------------
# parser assembly


def _build_parser() -> _Parser:
    parser = _Parser(prog="sliced", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version", action="version", version=f"sliced {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: _Parser, merges: bool = False) -> None:
        p.add_argument("model", help="model document (JSON)")
        p.add_argument("--config", help="configuration file (or $SLICED_CONFIG)")
        if merges:
            p.add_argument(
                "--merge",
                action="append",
                metavar="SUBSYSTEM",
                help="merge this subsystem before the command runs (repeatable)",
            )
            p.add_argument(
                "--auto-merge",
                action="store_true",
                help="merge every mergeable subsystem first",
            )

    p = sub.add_parser("stats", help="model size and classification counts")
    common(p)
    p.add_argument("--table", help="JSON rule list overriding the classification table")
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("translate", help="emit the model as NuSMV text")
    common(p, merges=True)
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.add_argument(
        "--faithful-listing",
        action="store_true",
        help="reproduce the historical module layouts byte for byte",
    )
    p.add_argument(
        "--assert",
        dest="assertions",
        metavar="auto|FILE",
        help="embed generated (auto) or file-supplied assertions",
    )
    p.set_defaults(fn=_cmd_translate)

    p = sub.add_parser("assert", help="print the generated assertion suite")
    common(p, merges=True)
    p.add_argument(
        "--auto",
        action="store_true",
        help="generate the full safety/liveness/capacity suite (the default)",
    )
    p.set_defaults(fn=_cmd_assert)

    p = sub.add_parser("check", help="model-check assertions")
    common(p, merges=True)
    p.add_argument(
        "--assert",
        dest="assertions",
        default="auto",
        metavar="auto|FILE",
        help="assertion source: auto-generated suite or a formula file",
    )
    p.add_argument("--bound", type=int, help="liveness lasso bound")
    p.add_argument("--cap", type=int, help="explored-state cap")
    p.add_argument("--trace", help="write the first counterexample here")
    p.add_argument(
        "--backend",
        choices=("internal", "nusmv"),
        default="internal",
        help="nusmv shells out to an installed NuSMV binary",
    )
    p.set_defaults(fn=_cmd_check)

    p = sub.add_parser("merge", help="report mergeable subsystems")
    common(p)
    p.add_argument("--subsystem", help="analyze one named subsystem")
    p.add_argument(
        "--auto-merge",
        action="store_true",
        help="analyze every mergeable subsystem (the default)",
    )
    p.add_argument("--report", help="also write the report as JSON")
    p.set_defaults(fn=_cmd_merge)

    p = sub.add_parser("plan", help="search for a repair plan")
    common(p, merges=True)
    p.add_argument(
        "--fail",
        action="append",
        default=[],
        metavar="INSTANCE=STATE",
        help="start with this instance failed (repeatable)",
    )
    p.add_argument("--goal", required=True, help="goal condition to reach")
    p.add_argument("--keep", help="condition that must hold along the plan")
    p.add_argument("--cap", type=int, help="explored-state cap")
    p.add_argument("-o", "--out", help="write the plan trace here")
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("simulate", help="run a scripted simulation")
    common(p)
    p.add_argument("--script", required=True, help="JSON step script")
    p.add_argument("--horizon", type=int, required=True, help="steps to run")
    p.add_argument("-o", "--out", help="write the trace here (default stdout)")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("replay", help="replay a trace and report agreement")
    common(p)
    p.add_argument("--trace", required=True, help="trace text to replay")
    p.set_defaults(fn=_cmd_replay)

    return parser


def run(argv: Sequence[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EX_USAGE
    try:
        return args.fn(args)
    except StateCapExceeded as exc:
        _diag(str(exc))
        return EX_CAP
    except (ModelError, ExprError) as exc:
        _diag(str(exc))
        return EX_DATA
    except OSError as exc:
        _diag(str(exc))
        return EX_DATA


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
