"""Command-line harness: run scenarios, check traces, run benchmarks.

Exit codes: 0 ok, 1 safety violation, 2 usage or parse error,
3 liveness inconclusive (safety passed but the horizon was too short to
demonstrate progress). A scenario marked expect_violation exits 0 only
if a violation actually occurred.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources
from typing import List, Optional

from . import bench
from .checker import Report, check_all
from .runner import run
from .scenario import Scenario, ScenarioError
from .trace import Trace

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3


def bundled_scenarios() -> dict:
    root = resources.files("poabcast") / "scenarios"
    out = {}
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            out[entry.name[: -len(".yaml")]] = entry
    return out


def load_scenario(ref: str) -> Scenario:
    if os.path.exists(ref):
        return Scenario.load(ref)
    bundled = bundled_scenarios()
    if ref in bundled:
        return Scenario.from_yaml(bundled[ref].read_text())
    raise ScenarioError(f"no such scenario file or bundled scenario: {ref}")


def render_report(report: Report, expect_violation: bool) -> str:
    lines = []
    for prop in sorted(report.verdicts):
        verdict = report.verdicts[prop]
        if verdict is None:
            lines.append(f"PASS {prop}")
        else:
            lines.append(f"FAIL {prop}: {verdict}")
    if report.linearizable is not None:
        lines.append(
            "PASS linearizable" if report.linearizable else "FAIL linearizable"
        )
    lines.append(f"liveness: {report.liveness}")
    if expect_violation:
        lines.append(
            "expected violation: "
            + ("observed" if not report.ok else "NOT OBSERVED")
        )
    return "\n".join(lines) + "\n"


def scenario_metrics_csv(trace: Trace) -> str:
    lines = ["kind,key,value"]
    responses = trace.by_kind("response")
    requests = {}
    for e in trace.by_kind("request"):
        requests.setdefault((e.actor, e.data["reqid"]), e.time)
    lats = [
        e.time - requests[(e.actor, e.data["reqid"])]
        for e in responses
        if (e.actor, e.data["reqid"]) in requests
    ]
    horizon = trace.summary.get("horizon", 0) or 1
    deliveries = trace.by_kind("deliver")
    lines.append(f"count,responses,{len(responses)}")
    lines.append(f"count,deliveries,{len(deliveries)}")
    lines.append(f"rate,deliveries_per_1k,{len(deliveries) / horizon * 1000:.3f}")
    if lats:
        lines.append(f"latency,min,{min(lats)}")
        lines.append(f"latency,mean,{sum(lats) / len(lats):.3f}")
        lines.append(f"latency,max,{max(lats)}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    trace = run(scenario)
    report = check_all(trace)
    out = args.out
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"{scenario.name}.trace.jsonl"), "w") as f:
            f.write(trace.to_jsonl())
        with open(os.path.join(out, f"{scenario.name}.report.txt"), "w") as f:
            f.write(render_report(report, scenario.expect_violation))
        with open(os.path.join(out, f"{scenario.name}.metrics.csv"), "w") as f:
            f.write(scenario_metrics_csv(trace))
    sys.stdout.write(render_report(report, scenario.expect_violation))
    if scenario.expect_violation:
        return EXIT_OK if not report.ok else EXIT_VIOLATION
    if not report.ok:
        return EXIT_VIOLATION
    if report.liveness == "inconclusive":
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_list(args) -> int:
    for name in bundled_scenarios():
        print(name)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        with open(args.trace) as f:
            trace = Trace.from_jsonl(f.read())
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    report = check_all(trace)
    sys.stdout.write(
        render_report(report, bool(trace.summary.get("expect_violation")))
    )
    return EXIT_OK if report.ok else EXIT_VIOLATION


def _emit_rows(rows, out: Optional[str], name: str) -> None:
    csv = bench.rows_to_csv(rows)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, name), "w") as f:
            f.write(csv)
    sys.stdout.write(csv)


def cmd_bench(args) -> int:
    if args.what == "table1":
        rows = bench.bench_table1(delta=args.delta, clients=args.clients)
        _emit_rows(rows, args.out, "table1.csv")
        return EXIT_OK
    if args.what == "throughput":
        sweep = (
            [int(x) for x in args.sweep.split(",")] if args.sweep else None
        )
        rows = bench.bench_throughput(
            request_size=args.size, clients_sweep=sweep, delta=args.delta
        )
        _emit_rows(rows, args.out, f"throughput-{args.size}.csv")
        return EXIT_OK
    print(f"error: unknown benchmark {args.what}", file=sys.stderr)
    return EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poabcast",
        description="primary-order broadcast protocol kit: simulate, check, benchmark",
    )
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run a scenario file (or bundled name)")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", help="directory for trace/report/metrics artifacts")
    p_run.set_defaults(fn=cmd_run)

    p_list = sub.add_parser("list", help="list bundled scenarios")
    p_list.set_defaults(fn=cmd_list)

    p_report = sub.add_parser("report", help="re-check a saved trace")
    p_report.add_argument("trace")
    p_report.set_defaults(fn=cmd_report)

    p_bench = sub.add_parser("bench", help="run a benchmark suite")
    p_bench.add_argument("what", choices=["table1", "throughput"])
    p_bench.add_argument("--delta", type=int, default=10)
    p_bench.add_argument("--clients", type=int, default=5)
    p_bench.add_argument("--size", type=int, default=1024)
    p_bench.add_argument("--sweep", help="comma-separated client counts")
    p_bench.add_argument("--out")
    p_bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "fn", None):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.fn(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
