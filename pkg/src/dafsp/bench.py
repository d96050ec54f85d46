"""Benchmark instances, run records, RPD tables and the Friedman statistic."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import random
import re
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import fmean
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .instance import Instance, make_instance
from .solver import (
    BUDGET_MULTIPLIER,
    PRESETS,
    SolverParams,
    VARIANTS,
    greedy_l1,
    random_search,
    solve,
    variant_params,
)

log = logging.getLogger(__name__)

SUITES: dict[str, dict[str, tuple[int, ...]]] = {
    "small": {"u": (10, 16, 24), "f": (2, 3), "m": (2, 4, 6), "l": (2, 4)},
    "medium": {"u": (30, 40, 50), "f": (4, 6), "m": (8, 10, 12), "l": (6, 8)},
    "large": {"u": (80, 100, 120), "f": (8, 10), "m": (16, 18, 20), "l": (10, 16)},
}


@dataclass(frozen=True)
class GeneratorConfig:
    u: int
    f: int
    m: int
    l: int
    seed: int = 0
    job_time_range: tuple[int, int] = (1, 99)
    asm_time_range: tuple[int, int] = (1, 50)
    cases_per_combo: int = 3

    def __post_init__(self) -> None:
        if min(self.u, self.f, self.m, self.l) < 1:
            raise ValueError("u, f, m, l must be positive")
        if self.u < self.l:
            raise ValueError(f"{self.u} jobs cannot cover {self.l} products")
        for lo, hi in (self.job_time_range, self.asm_time_range):
            if not 1 <= lo <= hi:
                raise ValueError(f"bad time range [{lo}, {hi}]")


def generate_instance(cfg: GeneratorConfig) -> Instance:
    """Uniform random instance; the buffer holds between b and ceil(1.5 b) jobs.

    ``b`` is the size of the largest product.  Jobs go to uniformly random
    products, then every empty product takes the highest-numbered job of the
    currently largest product.
    """
    rng = random.Random(cfg.seed)
    proc = [[rng.randint(*cfg.job_time_range) for _ in range(cfg.m)] for _ in range(cfg.u)]
    asm = [rng.randint(*cfg.asm_time_range) for _ in range(cfg.l)]
    plan: list[list[int]] = [[] for _ in range(cfg.l)]
    for i in range(1, cfg.u + 1):
        plan[rng.randrange(cfg.l)].append(i)
    for q in range(cfg.l):
        if not plan[q]:
            donor = max(range(cfg.l), key=lambda p: (len(plan[p]), -p))
            plan[q].append(plan[donor].pop())
    b = max(len(jobs) for jobs in plan)
    psi = rng.randint(b, math.ceil(1.5 * b))
    return make_instance(proc, asm, plan, psi, cfg.f)


_ID = re.compile(r"^(?P<scale>[a-z]+)-(?P<u>\d+)x(?P<f>\d+)x(?P<m>\d+)x(?P<l>\d+)-(?P<case>\d+)$")


def instance_id(scale: str, u: int, f: int, m: int, l: int, case: int) -> str:
    return f"{scale}-{u}x{f}x{m}x{l}-{case}"


def suite_instances(scale: str, seed: int = 0, cases: int = 3) -> list[tuple[str, Instance]]:
    """All combinations of a scale's grid, ``cases`` random instances each."""
    grid = SUITES[scale]
    out = []
    for n, (u, f, m, l) in enumerate(itertools.product(grid["u"], grid["f"], grid["m"], grid["l"])):
        for case in range(1, cases + 1):
            cfg = GeneratorConfig(u, f, m, l, seed=seed * 1_000_003 + n * 97 + case)
            out.append((instance_id(scale, u, f, m, l, case), generate_instance(cfg)))
    return out


def sample_suite(scale: str, count: int, seed: int = 0) -> list[tuple[str, Instance]]:
    """``count`` instances spread evenly over a scale's grid, one case per combination."""
    grid = SUITES[scale]
    combos = list(itertools.product(grid["u"], grid["f"], grid["m"], grid["l"]))
    rng = random.Random(seed)
    picks = rng.sample(range(len(combos)), count) if count <= len(combos) else [
        n % len(combos) for n in range(count)
    ]
    out = []
    for k, n in enumerate(sorted(picks) if count <= len(combos) else picks):
        u, f, m, l = combos[n]
        cfg = GeneratorConfig(u, f, m, l, seed=seed * 1_000_003 + n * 97 + k + 1)
        out.append((instance_id(scale, u, f, m, l, k + 1), generate_instance(cfg)))
    return out


def rpd(ca: float, ca_best: float) -> float:
    """Relative deviation of a makespan from the best known one."""
    if ca_best <= 0:
        raise ValueError(f"best makespan must be positive, got {ca_best}")
    if ca < ca_best:
        raise ValueError(f"makespan {ca} is below the best {ca_best}")
    return (ca - ca_best) / ca_best


@dataclass(frozen=True)
class RunRecord:
    instance_id: str
    algorithm: str
    run: int
    seed: int
    cm_max: int
    ca_max: int
    elapsed_ms: float

    def __post_init__(self) -> None:
        if not self.ca_max >= self.cm_max > 0:
            raise ValueError(f"inconsistent makespans cm={self.cm_max} ca={self.ca_max}")


@dataclass(frozen=True)
class AggRow:
    group: str
    level: str
    algorithm: str
    brpd: float
    arpd: float


@dataclass(frozen=True)
class RpdTable:
    rows: tuple[AggRow, ...]
    per_instance: dict[tuple[str, str], tuple[float, float]]  # (instance, algorithm) -> (bRPD, aRPD)
    algorithms: tuple[str, ...]
    instances: tuple[str, ...]

    def mean_arpd(self, algorithm: str) -> float:
        return fmean(self.per_instance[(i, algorithm)][1] for i in self.instances)

    def mean_brpd(self, algorithm: str) -> float:
        return fmean(self.per_instance[(i, algorithm)][0] for i in self.instances)

    def arpd_matrix(self) -> np.ndarray:
        return np.array(
            [[self.per_instance[(i, a)][1] for a in self.algorithms] for i in self.instances]
        )

    def brpd_matrix(self) -> np.ndarray:
        return np.array(
            [[self.per_instance[(i, a)][0] for a in self.algorithms] for i in self.instances]
        )


def _levels(iid: str) -> tuple[str, dict[str, str]]:
    hit = _ID.match(iid)
    if hit is None:
        return "all", {}
    return hit["scale"], {k: hit[k] for k in ("u", "f", "m", "l")}


def aggregate(records: Sequence[RunRecord]) -> RpdTable:
    """bRPD/aRPD per instance and algorithm, then group means by scale level."""
    if not records:
        raise ValueError("no run records to aggregate")
    runs: dict[tuple[str, str], list[int]] = defaultdict(list)
    best: dict[str, int] = {}
    for r in records:
        runs[(r.instance_id, r.algorithm)].append(r.ca_max)
        best[r.instance_id] = min(best.get(r.instance_id, r.ca_max), r.ca_max)
    algorithms = tuple(sorted({r.algorithm for r in records}))
    instances = tuple(sorted(best))
    missing = [(i, a) for i in instances for a in algorithms if (i, a) not in runs]
    if missing:
        raise ValueError(f"algorithm/instance pairs without runs: {missing[:5]}")

    per_instance = {}
    for (iid, alg), values in runs.items():
        devs = [rpd(v, best[iid]) for v in values]
        per_instance[(iid, alg)] = (min(devs), fmean(devs))

    groups: dict[tuple[str, str, str], list[str]] = defaultdict(list)
    for iid in instances:
        scale, levels = _levels(iid)
        for factor in ("u", "f", "m", "l"):
            if factor in levels:
                groups[(scale, factor, levels[factor])].append(iid)
        groups[(scale, "Avg", "all")].append(iid)

    def order(key: tuple[str, str, str]):
        scale, factor, level = key
        scale_rank = list(SUITES).index(scale) if scale in SUITES else len(SUITES)
        factor_rank = ("u", "f", "m", "l", "Avg").index(factor)
        return (scale_rank, scale, factor_rank, int(level) if level.isdigit() else 0)

    rows = []
    for key in sorted(groups, key=order):
        scale, factor, level = key
        members = groups[key]
        for alg in algorithms:
            rows.append(
                AggRow(
                    group=f"{scale}:{factor}",
                    level=level,
                    algorithm=alg,
                    brpd=fmean(per_instance[(i, alg)][0] for i in members),
                    arpd=fmean(per_instance[(i, alg)][1] for i in members),
                )
            )
    return RpdTable(tuple(rows), per_instance, algorithms, instances)


def friedman(scores) -> tuple[np.ndarray, float]:
    """Average ranks (1 = lowest score) and the Friedman chi-square statistic.

    ``scores`` is an N x k matrix, one row per instance.  Tied scores share
    their average rank.
    """
    x = np.asarray(scores, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a non-empty N x k score matrix")
    n, k = x.shape
    if k < 2:
        raise ValueError("need at least two algorithms")
    ranks = np.vstack([rankdata(row) for row in x])
    rank_sums = ranks.sum(axis=0)
    chi2 = 12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums**2)) - 3.0 * n * (k + 1)
    return rank_sums / n, chi2


# -- running -------------------------------------------------------------------

Solver = Callable[[Instance, SolverParams], tuple]


def algorithm_registry() -> dict[str, Solver]:
    registry: dict[str, Solver] = {}
    for name in VARIANTS:
        registry[name] = lambda inst, p, _n=name: solve(inst, variant_params(p, _n))
    registry["random"] = random_search
    registry["greedy-l1"] = greedy_l1
    return registry


def scale_of(inst: Instance) -> str:
    for scale, grid in SUITES.items():
        if inst.u <= max(grid["u"]):
            return scale
    return "large"


@dataclass(frozen=True)
class _Job:
    iid: str
    inst: Instance
    algorithm: str
    run: int
    params: SolverParams


def _execute(job: _Job) -> RunRecord:
    solver = algorithm_registry()[job.algorithm]
    started = time.monotonic()
    _, result, _ = solver(job.inst, job.params)
    return RunRecord(
        instance_id=job.iid,
        algorithm=job.algorithm,
        run=job.run,
        seed=job.params.seed,
        cm_max=result.cm_max,
        ca_max=result.ca_max,
        elapsed_ms=(time.monotonic() - started) * 1000.0,
    )


def run_suite(
    instances: Iterable[tuple[str, Instance]],
    algorithms: Sequence[str],
    runs: int = 10,
    *,
    scale: str | None = None,
    seed: int = 0,
    time_factor: float | None = None,
    max_generations: int | None = None,
    overrides: dict | None = None,
    workers: int = 1,
) -> list[RunRecord]:
    """Run every algorithm ``runs`` times per instance with seeds ``seed + run``.

    The wall-clock budget is ``time_factor * u * f * m * l`` milliseconds,
    where ``time_factor`` defaults to the scale's multiplier (120/50/20 for
    small/medium/large).  Pass ``time_factor=0`` together with
    ``max_generations`` for a budget-free, fully reproducible run.
    """
    registry = algorithm_registry()
    unknown = [a for a in algorithms if a not in registry]
    if unknown:
        raise KeyError(f"unknown algorithms {unknown}; choose from {sorted(registry)}")
    jobs = []
    for iid, inst in instances:
        sc = scale or _levels(iid)[0]
        if sc not in SUITES:
            sc = scale_of(inst)
        factor = BUDGET_MULTIPLIER[sc] if time_factor is None else time_factor
        budget = factor * inst.u * inst.f * inst.m * inst.l if factor else None
        base = dict(PRESETS[sc])
        base.update(overrides or {})
        for alg in algorithms:
            for run in range(runs):
                params = SolverParams(
                    ps=int(base["ps"]), ep=base["ep"], alpha=int(base["alpha"]), cd=base["cd"],
                    budget_ms=budget, max_generations=max_generations, seed=seed + run,
                )
                jobs.append(_Job(iid, inst, alg, run, params))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_execute, jobs))
    else:
        records = [_execute(j) for j in jobs]
    return sorted(records, key=_record_key)


# -- CSV -------------------------------------------------------------------------

RESULT_HEADER = ("instance_id", "algorithm", "run", "seed", "cm_max", "ca_max", "elapsed_ms")


def _record_key(r: RunRecord):
    return (r.instance_id, r.algorithm, r.run)


def results_csv(records: Sequence[RunRecord]) -> str:
    if not records:
        log.warning("no run records; writing header only")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for r in sorted(records, key=_record_key):
        w.writerow([r.instance_id, r.algorithm, r.run, r.seed, r.cm_max, r.ca_max, f"{r.elapsed_ms:.1f}"])
    return buf.getvalue()


def read_results_csv(text: str) -> list[RunRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RESULT_HEADER:
        raise ValueError(f"unexpected results header {reader.fieldnames}")
    return [
        RunRecord(
            instance_id=row["instance_id"],
            algorithm=row["algorithm"],
            run=int(row["run"]),
            seed=int(row["seed"]),
            cm_max=int(row["cm_max"]),
            ca_max=int(row["ca_max"]),
            elapsed_ms=float(row["elapsed_ms"]),
        )
        for row in reader
    ]


def aggregate_csv(table: RpdTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("group", "level", "algorithm", "bRPD", "aRPD"))
    for row in table.rows:
        w.writerow((row.group, row.level, row.algorithm, f"{row.brpd:.4f}", f"{row.arpd:.4f}"))
    return buf.getvalue()


def friedman_csv(algorithms: Sequence[str], avg_ranks: Sequence[float], chi2: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("algorithm", "avg_rank"))
    for alg, rank in zip(algorithms, avg_ranks):
        w.writerow((alg, f"{rank:.3f}"))
    w.writerow(("chi_square", f"{chi2:.3f}"))
    return buf.getvalue()
