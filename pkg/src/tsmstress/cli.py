"""tsm-stress command line: synthesize, simulate, compare, export-lp, sweep.

Exit codes: 0 success, 2 infeasible, 3 validation error, 4 non-quiescent simulation.
File formats are described in FORMATS.md.
"""
from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import logging
import os
import sys
from typing import Optional

from .constraints import CONSERVATIVE, OPTIMISTIC, best_overhead_system, worst_overhead_system
from .scenario import Objective, Predicted, Scenario, Task
from .simulator import DEFAULT_MAX_TIME, DrawKind, TimerDraw, run, run_batch
from .solver import LpProblem, Status
from .symbolic import delay, var_name
from .synthesis import (InfeasibleError, SynthesisRequest, configure_timers, default_request_timer,
                        parse_pins, resolve_timers, synthesize_topology)
from .topology import (PRESETS, DomainError, Interval, LossPattern, TimerSpec, distance_timers,
                       random_topology)

log = logging.getLogger("tsm-stress")

EXIT_OK, EXIT_INFEASIBLE, EXIT_VALIDATION, EXIT_NONQUIESCENT = 0, 2, 3, 4

FORMATS_HELP = """\
files:
  scenario JSON   schema "tsm-stress/scenario/1"; matrix inline or {"csv": "<file>"}
  delay CSV       (n+1) x (n+1) one-way delays in ms, row = sender, Q is index 0
  timer JSON      {"strategy": "fixed|distance|deterministic|adaptive", ...} or a preset name
  delay bounds    "lo,hi" for every pair, or JSON {"default": [lo, hi], "d(1,2)": [lo, hi], ...}
  LP text         "# tsm-stress LP v1" with minimize/subject to/bounds/end sections
  results CSV     set,scenario,seed,n,strategy,responses,suppressions,recoveryTime (n counts Q)
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_VALIDATION)


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def load_timers(arg: Optional[str]) -> Optional[TimerSpec]:
    if arg is None:
        return None
    if arg in PRESETS:
        return PRESETS[arg]()
    with open(arg) as fh:
        return TimerSpec.from_dict(json.load(fh))


def load_bounds(arg: str, n: int):
    """A single interval or a per-delay mapping with an optional default."""
    if os.path.exists(arg):
        with open(arg) as fh:
            data = json.load(fh)
        default = Interval.of(data["default"]) if "default" in data else None
        out = {}
        for i in range(n + 1):
            for j in range(n + 1):
                if i == j:
                    continue
                name = var_name(delay(i, j))
                if name in data:
                    out[name] = Interval.of(data[name])
                elif default is not None:
                    out[name] = default
                else:
                    raise DomainError(f"no bounds for {name}")
        return out
    try:
        lo, hi = (float(x) for x in arg.split(","))
    except ValueError:
        raise DomainError(f"bad delay bounds {arg!r}") from None
    return Interval(lo, hi)


def _request(args) -> SynthesisRequest:
    task = Task.TIMERS if args.delay_bounds else Task.TOPOLOGY
    timers = load_timers(args.timers)
    if task == Task.TIMERS and timers is not None:
        raise UsageError("give either --timers or --delay-bounds, not both")
    return SynthesisRequest(
        task=task, objective=Objective(args.objective), n=args.n, timers=timers,
        delays=load_bounds(args.delay_bounds, args.n) if args.delay_bounds else None,
        pinned=parse_pins(args.pin, args.n), epsilon=args.epsilon, policy=args.policy,
        ordered=args.ordered, designated=args.designated, loss_budget=args.loss_budget,
        ceiling=args.ceiling)


def _add_request_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--objective", required=True, choices=[o.value for o in Objective])
    p.add_argument("--n", type=int, required=True, help="number of responders")
    p.add_argument("--timers", help="timer JSON file or preset (wb, deterministic, distance, adaptive)")
    p.add_argument("--delay-bounds", help="configure timers for these delay bounds instead")
    p.add_argument("--pin", action="append", default=[], help="dQ=V, dQout=V, dQin=V or d(i,j)=V")
    p.add_argument("--epsilon", type=float, default=1.0, help="strictness margin in ms")
    p.add_argument("--policy", choices=[CONSERVATIVE, OPTIMISTIC], default=CONSERVATIVE)
    p.add_argument("--ordered", action="store_true", help="assume responders fire in midpoint order")
    p.add_argument("--designated", type=int, help="responder meant to answer (best case, response time)")
    p.add_argument("--loss-budget", type=int, default=1)
    p.add_argument("--ceiling", type=float, default=1000.0, help="largest configured timer")


def cmd_synthesize(args) -> int:
    req = _request(args)
    sc = configure_timers(req) if req.task == Task.TIMERS else synthesize_topology(req)
    sc.save(args.out, csv=not args.inline)
    status = sc.provenance.get("status")
    print(f"status: {status}")
    print(f"predicted responses: {sc.predicted.response_count}")
    if sc.predicted.response_time is not None:
        print(f"predicted response time: {sc.predicted.response_time:g} ms")
    if "rules" in sc.provenance:
        for pair, b in sc.provenance["rules"].items():
            i, j = pair.split(",")
            print(f"rule: Exp({i}) - Exp({j}) < {b:g}")
    if status == Status.MAX_SUBSET.value:
        print(f"max feasible subset: {len(sc.provenance['active_rows'])} of {sc.provenance['rows']} rows; "
              f"dropped {', '.join(sc.provenance['dropped'])}")
        return EXIT_INFEASIBLE
    return EXIT_OK


def _draw(args) -> TimerDraw:
    return TimerDraw(DrawKind(args.draw), args.seed)


def cmd_simulate(args) -> int:
    sc = Scenario.load(args.scenario)
    res = run(sc, _draw(args), args.max_time, args.hold_down)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(res.trace_json() if args.trace.endswith(".json") else res.trace_text())
    rt = "none" if res.recovery_time is None else f"{res.recovery_time:g}"
    print(f"responses: {res.responses_sent}  suppressions: {res.suppressions}  "
          f"recovery: {rt}  rounds: {res.rounds}  predicted: {sc.predicted.response_count}")
    if not res.quiescent:
        print("not quiescent at max time", file=sys.stderr)
        return EXIT_NONQUIESCENT
    return EXIT_OK


def _scenarios(directory: str) -> list[tuple[str, Scenario]]:
    files = sorted(glob.glob(os.path.join(directory, "*.json")))
    return [(os.path.basename(f), Scenario.load(f)) for f in files]


RESULT_HEADER = ["set", "scenario", "seed", "n", "strategy", "responses", "suppressions", "recoveryTime"]


def _batch_rows(label: str, named, strategies, seeds, max_time) -> list[list]:
    rows = []
    for strategy in strategies:
        kind = DrawKind(strategy)
        random_draw = kind not in (DrawKind.SCENARIO, DrawKind.DETERMINISTIC)
        if random_draw and not seeds:
            raise DomainError(f"{strategy} timers need --seeds")
        use = seeds if random_draw else [None]
        batch = run_batch([sc for _, sc in named], kind, use, max_time)
        for idx, seed, r in batch.runs:
            rows.append([label, named[idx][0], "" if seed is None else seed] + r.csv_row())
    return rows


def _write_csv(path: Optional[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    w.writerows(rows)
    if path:
        with open(path, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _summary(rows: list[list]) -> None:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r[0], r[4], r[3]), []).append(r[5])
    for (label, strategy, n), resp in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        print(f"{label:>8} {strategy:>13} n={n:<4} mean responses {sum(resp) / len(resp):.2f} "
              f"(min {min(resp)}, max {max(resp)})", file=sys.stderr)


def cmd_compare(args) -> int:
    stress, rnd = _scenarios(args.stress), _scenarios(args.random)
    if not stress or not rnd:
        raise UsageError("both directories need scenario files")
    strategies = args.strategies.split(",")
    rows = _batch_rows("stress", stress, strategies, args.seeds, args.max_time)
    rows += _batch_rows("random", rnd, strategies, args.seeds, args.max_time)
    _write_csv(args.out, rows)
    _summary(rows)
    return EXIT_OK


def _system(req: SynthesisRequest):
    if req.objective == Objective.WORST_OVERHEAD:
        return worst_overhead_system(req.n, timers=req.timers, policy=req.policy)
    if req.objective == Objective.BEST_OVERHEAD:
        return best_overhead_system(req.n, req.designated or 1, req.timers, req.policy)
    raise UsageError("export-lp covers the overhead objectives")


def cmd_export_lp(args) -> int:
    req = _request(args)
    if req.task != Task.TOPOLOGY:
        raise UsageError("export-lp takes --timers, not --delay-bounds")
    sys_ = _system(req)
    bounds = {name: (v, v) for name, v in req.pinned.items()}
    lp = sys_.to_lp(epsilon=req.epsilon, bounds=bounds)
    text = lp.to_text()
    if LpProblem.from_text(text) != lp:
        raise RuntimeError("LP text does not re-parse to the same system")
    with open(args.out, "w") as fh:
        fh.write(text)
    if args.system_json:
        with open(args.system_json, "w") as fh:
            fh.write(sys_.to_json() + "\n")
    print(f"{len(lp.rows)} rows, {lp.n} variables -> {args.out}")
    return EXIT_OK


def stress_scenario(nodes: int, epsilon: float = 1.0) -> Scenario:
    """Worst-overhead topology for distance timers (C1=C2=1) with requester delays of 100 ms."""
    n = nodes - 1
    req = SynthesisRequest(n=n, timers=distance_timers(), pinned=parse_pins(["dQ=100"], n), epsilon=epsilon)
    return synthesize_topology(req)


def random_scenario(nodes: int, seed: int, delays: Interval = Interval(5.0, 50.0)) -> Scenario:
    d = random_topology(nodes, seed, delays)
    spec = distance_timers()
    return Scenario(d, spec, default_request_timer(spec, d), resolve_timers(spec, d), LossPattern(),
                    Predicted(1), {"task": "random", "seed": seed, "delays": delays.to_list()})


def cmd_sweep(args) -> int:
    if any(nodes < 2 for nodes in args.sizes):
        raise DomainError("sizes count nodes and need at least 2")
    for sub in ("stress", "random"):
        os.makedirs(os.path.join(args.out_dir, sub), exist_ok=True)
    stress, rnd = [], []
    for nodes in args.sizes:
        name = f"stress_n{nodes}.json"
        sc = stress_scenario(nodes, args.epsilon)
        sc.save(os.path.join(args.out_dir, "stress", name))
        stress.append((name, sc))
        for seed in args.seeds:
            name = f"random_n{nodes}_s{seed}.json"
            rs = random_scenario(nodes, seed)
            rs.save(os.path.join(args.out_dir, "random", name))
            rnd.append((name, rs))
    strategies = args.strategies.split(",")
    rows = _batch_rows("stress", stress, strategies, args.seeds, args.max_time)
    if rnd:
        rows += _batch_rows("random", rnd, strategies, args.seeds, args.max_time)
    _write_csv(os.path.join(args.out_dir, "results.csv"), rows)
    _summary(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tsm-stress", description=__doc__, epilog=FORMATS_HELP,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synthesize", help="solve for a stress scenario", epilog=FORMATS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_request_flags(s)
    s.add_argument("--out", required=True, help="scenario JSON path (matrix CSV written next to it)")
    s.add_argument("--inline", action="store_true", help="embed the matrix instead of writing CSV")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("simulate", help="run a scenario", epilog=FORMATS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--scenario", required=True)
    s.add_argument("--draw", choices=[k.value for k in DrawKind], default=DrawKind.SCENARIO.value)
    s.add_argument("--seed", type=int, help="required for random draws")
    s.add_argument("--max-time", type=float, default=DEFAULT_MAX_TIME)
    s.add_argument("--hold-down", type=float, default=0.0)
    s.add_argument("--trace", help="write the trace (.json for JSON, text otherwise)")
    s.set_defaults(func=cmd_simulate)

    for name, fn, hlp in (("compare", cmd_compare, "stress vs random scenario sets"),
                          ("sweep", cmd_sweep, "generate and run the scaling study")):
        s = sub.add_parser(name, help=hlp, epilog=FORMATS_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        s.add_argument("--strategies", default="deterministic",
                       help="comma list of " + ", ".join(k.value for k in DrawKind))
        s.add_argument("--seeds", type=_ints, default=[], help="comma list; required for random strategies")
        s.add_argument("--max-time", type=float, default=DEFAULT_MAX_TIME)
        s.set_defaults(func=fn)
    compare, sweep = sub.choices["compare"], sub.choices["sweep"]
    compare.add_argument("--stress", required=True, help="directory of stress scenario files")
    compare.add_argument("--random", required=True, help="directory of comparison scenario files")
    compare.add_argument("--out", help="CSV path (stdout if omitted)")
    sweep.add_argument("--sizes", type=_ints, default=[6, 20, 50, 100, 200], help="node counts")
    sweep.add_argument("--out-dir", required=True)
    sweep.add_argument("--epsilon", type=float, default=1.0)

    s = sub.add_parser("export-lp", help="write the constraint system as LP text", epilog=FORMATS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_request_flags(s)
    s.add_argument("--out", required=True)
    s.add_argument("--system-json", help="also write the disjunctive system as JSON")
    s.set_defaults(func=cmd_export_lp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.report:
            print(json.dumps(exc.report, indent=2, default=str), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, DomainError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
