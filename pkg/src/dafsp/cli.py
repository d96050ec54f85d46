"""Command line entry point: ``dafsp {generate,solve,verify,gantt,bench,report}``.

Exit status is 0 on success, 1 for domain errors (infeasible instance,
invalid coding) and 2 for usage errors (bad flags, unreadable files).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, petri
from .evaluator import evaluate, export_gantt
from .instance import (
    Coding,
    CodingError,
    InstanceError,
    dump_coding,
    dump_instance,
    load_coding,
    load_instance,
    validate_coding,
)
from .solver import PRESETS, budget_for, preset

log = logging.getLogger("dafsp")


class UsageError(Exception):
    pass


def _read(path: str | None, what: str) -> str:
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    return p.read_text(encoding="utf-8")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def _write(out: str | None, text: str) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_generate(args) -> int:
    cfg = bench.GeneratorConfig(args.jobs, args.factories, args.machines, args.products, seed=args.seed)
    _write(args.out, dump_instance(bench.generate_instance(cfg)))
    return 0


def _scale(args, inst) -> str:
    return args.preset or bench.scale_of(inst)


def cmd_solve(args) -> int:
    inst = load_instance(_read(args.instance, "instance"))
    scale = _scale(args, inst)
    budget = args.budget_ms
    if budget is None and args.max_generations is None:
        budget = budget_for(inst, scale)
    params = preset(
        scale, ps=args.ps, ep=args.ep, alpha=args.alpha, cd=args.cd,
        budget_ms=budget, max_generations=args.max_generations, seed=args.seed,
    )
    from .solver import solve

    coding, result, stats = solve(inst, params)
    print(f"ca_max={result.ca_max} cm_max={result.cm_max}")
    log.info("generations=%d evaluations=%d restarts=%d", stats.generations, stats.evaluations, stats.restarts)
    out = args.out or str(Path(args.instance).with_suffix(".coding.json"))
    _write(out, dump_coding(coding))
    if out != "-":
        print(f"coding written to {out}")
    return 0


def _coding_from(args, inst) -> Coding | None:
    if args.coding:
        return load_coding(_read(args.coding, "coding"))
    if getattr(args, "lam", None):
        lam = _ints(args.lam)
        mu = _ints(args.mu) if args.mu else [1] * len(lam)
        return Coding.of(lam, mu)
    return None


def cmd_verify(args) -> int:
    inst = load_instance(_read(args.instance, "instance"))
    net = petri.build_app(inst)
    coding = _coding_from(args, inst)
    if coding is None:
        raise UsageError("verify needs --lambda or --coding")
    problems = validate_coding(inst, coding)
    if problems:
        raise CodingError("; ".join(problems))
    amended, steps = petri.idam_trace(net, coding.lam)
    deferred = [s.job for s in steps if not s.accepted]
    fmt = ",".join(str(i) for i in amended)
    if tuple(amended) == coding.lam:
        print(f"deadlock-free as given: {fmt}")
    else:
        print(f"amended to {fmt}")
    print(f"deferred jobs: {','.join(map(str, deferred)) or 'none'}")
    final = petri.replay(net, amended)
    print(f"reaches final marking: {final == net.m_end}")
    if args.dump:
        print(petri.dump_net(net))
        print("final:")
        print(petri.dump_marking(net, final))
    return 0


def cmd_gantt(args) -> int:
    inst = load_instance(_read(args.instance, "instance"))
    coding = _coding_from(args, inst)
    if coding is None:
        raise UsageError("gantt needs --coding or --lambda/--mu")
    result = evaluate(inst, coding)
    lines = ["\t".join(str(v) for v in row) for row in export_gantt(result.schedule, inst)]
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_bench(args) -> int:
    suite = args.suite or "small"
    if args.instances:
        instances = [
            (Path(p).stem, load_instance(_read(p, "instance"))) for p in args.instances
        ]
    elif args.count:
        instances = bench.sample_suite(suite, args.count, seed=args.seed)
    else:
        instances = bench.suite_instances(suite, seed=args.seed, cases=args.cases)
    overrides = {k: v for k, v in (("ps", args.ps), ("ep", args.ep), ("alpha", args.alpha), ("cd", args.cd)) if v is not None}
    time_factor = args.time_factor
    if args.max_generations is not None and time_factor is None:
        time_factor = 0
    records = bench.run_suite(
        instances,
        [a.strip() for a in args.algorithms.split(",")],
        runs=args.runs,
        scale=args.suite,
        seed=args.seed,
        time_factor=time_factor,
        max_generations=args.max_generations,
        overrides=overrides,
        workers=args.workers,
    )
    _write(args.out, bench.results_csv(records))
    return 0


def cmd_report(args) -> int:
    records = bench.read_results_csv(_read(args.results, "results"))
    table = bench.aggregate(records)
    prefix = args.out
    agg = bench.aggregate_csv(table)
    ranks, chi2 = bench.friedman(table.arpd_matrix()) if len(table.algorithms) > 1 else ([0.0], 0.0)
    fried = bench.friedman_csv(table.algorithms, ranks, chi2)
    if prefix is None or prefix == "-":
        sys.stdout.write(agg + "\n" + fried)
    else:
        Path(f"{prefix}.aggregate.csv").write_text(agg, encoding="utf-8")
        Path(f"{prefix}.friedman.csv").write_text(fried, encoding="utf-8")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dafsp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def search_flags(sp) -> None:
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--ps", type=int)
        sp.add_argument("--ep", type=float)
        sp.add_argument("--alpha", type=int)
        sp.add_argument("--cd", type=float)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--budget-ms", type=float)
        sp.add_argument("--max-generations", type=int)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--jobs", "-u", type=int, required=True)
    g.add_argument("--factories", "-f", type=int, required=True)
    g.add_argument("--machines", "-m", type=int, required=True)
    g.add_argument("--products", "-l", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run HCCE on an instance")
    s.add_argument("--instance")
    search_flags(s)
    s.add_argument("--out", help="coding output path (default <instance>.coding.json)")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="amend a job order and report safety")
    v.add_argument("--instance")
    v.add_argument("--lambda", dest="lam")
    v.add_argument("--mu")
    v.add_argument("--coding")
    v.add_argument("--dump", action="store_true", help="print the net and final marking")
    v.set_defaults(func=cmd_verify)

    gt = sub.add_parser("gantt", help="tab-separated schedule rows")
    gt.add_argument("--instance")
    gt.add_argument("--coding")
    gt.add_argument("--lambda", dest="lam")
    gt.add_argument("--mu")
    gt.add_argument("--out")
    gt.set_defaults(func=cmd_gantt)

    b = sub.add_parser("bench", help="run algorithms over a generated suite")
    b.add_argument("--suite", choices=sorted(bench.SUITES))
    b.add_argument("--instances", nargs="*", help="instance files instead of a generated suite")
    b.add_argument("--count", type=int, help="sample this many instances from the suite grid")
    b.add_argument("--cases", type=int, default=3)
    b.add_argument("--algorithms", default="hcce")
    b.add_argument("--runs", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--time-factor", type=float, help="ms per unit of u*f*m*l (default by scale)")
    b.add_argument("--max-generations", type=int)
    b.add_argument("--ps", type=int)
    b.add_argument("--ep", type=float)
    b.add_argument("--alpha", type=int)
    b.add_argument("--cd", type=float)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="aggregate RPD tables and Friedman ranks")
    r.add_argument("--results")
    r.add_argument("--out", help="output prefix for <prefix>.aggregate.csv and <prefix>.friedman.csv")
    r.set_defaults(func=cmd_report)
    return p


def dispatch(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"dafsp: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dafsp: {exc}", file=sys.stderr)
        return 2
    except (InstanceError, CodingError, petri.DeadlockInfeasible, ValueError) as exc:
        print(f"dafsp: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
