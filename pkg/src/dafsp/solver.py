"""Hybrid cooperative co-evolution (HCCE) for the deadlock-prone DAFSP.

Two subpopulations co-evolve: ``pop1`` holds job entry orders, ``pop2`` holds
factory assignments, and every entity points at a collaborator in the other
subpopulation.  An elite archive receives information transfer and local
search.  Every job order stored anywhere has already been amended to be
deadlock-free.

Internally jobs, factories and population slots are 0-based; the public
helpers :func:`h1_assign`, :func:`h2_insert` and :func:`solve` speak the
1-based ids of :mod:`dafsp.instance`.
"""

from __future__ import annotations

import logging
import math
import random
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels as K
from .evaluator import EvalResult, evaluate
from .instance import Coding, Instance, totals
from .petri import DeadlockInfeasible

log = logging.getLogger(__name__)

Perm = tuple[int, ...]


@dataclass(frozen=True)
class SolverParams:
    """Search parameters.

    ``ep`` and ``cd`` are fractions: the archive holds ``round(ep * ps)``
    individuals (at least one) and the fourth local search operator removes
    ``ceil(u * cd)`` jobs.
    """

    ps: int = 50
    ep: float = 0.2
    alpha: int = 21
    cd: float = 0.1
    budget_ms: float | None = None
    max_generations: int | None = None
    seed: int = 0
    local_search: bool = True
    itm: bool = True
    heuristic_init: bool = True

    def __post_init__(self) -> None:
        if self.ps < 4:
            raise ValueError(f"population size must be >= 4, got {self.ps}")
        if not 0 < self.ep <= 1:
            raise ValueError(f"elite fraction must be in (0, 1], got {self.ep}")
        if not 0 < self.cd <= 1:
            raise ValueError(f"destruction fraction must be in (0, 1], got {self.cd}")
        if self.alpha < 1:
            raise ValueError(f"restart patience must be >= 1, got {self.alpha}")
        if self.budget_ms is None and self.max_generations is None:
            raise ValueError("set budget_ms, max_generations, or both")
        if self.budget_ms is not None and self.budget_ms < 0:
            raise ValueError("budget_ms must be >= 0")
        if self.max_generations is not None and self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")

    @property
    def archive_size(self) -> int:
        return max(1, math.floor(self.ep * self.ps + 0.5))


PRESETS: dict[str, dict[str, float]] = {
    "small": {"ps": 50, "ep": 0.2, "alpha": 21, "cd": 0.1},
    "medium": {"ps": 35, "ep": 0.5, "alpha": 21, "cd": 0.1},
    "large": {"ps": 25, "ep": 0.2, "alpha": 3, "cd": 0.7},
}

# milliseconds per unit of u*f*m*l
BUDGET_MULTIPLIER = {"small": 120, "medium": 50, "large": 20}

VARIANTS: dict[str, dict[str, bool]] = {
    "hcce": {},
    "hcce-nols": {"local_search": False},
    "hcce-nomccea": {"local_search": False, "itm": False},
    "hcce-basic": {"local_search": False, "itm": False, "heuristic_init": False},
}


def budget_for(inst: Instance, scale: str) -> int:
    return BUDGET_MULTIPLIER[scale] * inst.u * inst.f * inst.m * inst.l


def preset(name: str, **overrides) -> SolverParams:
    values = dict(PRESETS[name])
    values.update({k: v for k, v in overrides.items() if v is not None})
    values["ps"] = int(values["ps"])
    values["alpha"] = int(values["alpha"])
    return SolverParams(**values)


@dataclass(slots=True)
class Entity:
    perm: Perm
    col: int
    dirty: bool = False


@dataclass(frozen=True)
class Elite:
    lam: Perm
    mu: Perm
    ca: int


@dataclass
class SolverState:
    inst: Instance
    params: SolverParams
    pop1: list[Entity]
    pop2: list[Entity]
    archive: list[Elite]
    best: Elite
    rng: random.Random
    stagnation: int = 0
    generation: int = 0
    restarts: int = 0
    eval_count: int = 0
    improved: bool = False
    deadline: float | None = None
    _fit: dict = field(default_factory=dict, repr=False)
    _h1: dict = field(default_factory=dict, repr=False)
    _h2: dict = field(default_factory=dict, repr=False)

    @property
    def ps(self) -> int:
        return self.params.ps

    def out_of_time(self) -> bool:
        return self.deadline is not None and time.monotonic() >= self.deadline

    def fitness(self, lam: Perm, mu: Perm) -> int:
        """System makespan of a full coding whose job order is deadlock-free."""
        key = (lam, mu)
        ca = self._fit.get(key)
        if ca is None:
            arr = self.inst.arrays
            ca = int(K.ca_of(_np(lam), _np(mu), arr.proc, arr.asm, arr.product_of, arr.psi))
            if ca < 0:
                raise DeadlockInfeasible("job order admits no deadlock-free amendment")
            self.eval_count += 1
            if len(self._fit) > 500_000:
                self._fit.clear()
            self._fit[key] = ca
        if ca < self.best.ca:
            self.best = Elite(lam, mu, ca)
            self.improved = True
        return ca

    def amend(self, lam: Sequence[int]) -> Perm:
        arr = self.inst.arrays
        out = np.empty(len(lam), dtype=np.int64)
        if K.amend(_np(lam), arr.product_of, arr.sizes, arr.psi, out) < 0:
            raise DeadlockInfeasible(
                f"buffer capacity {arr.psi} admits no deadlock-free order"
            )
        return tuple(int(x) for x in out)

    def h1(self, lam: Perm) -> Perm:
        mu = self._h1.get(lam)
        if mu is None:
            mu = _tuple(K.h1_assign(_np(lam), self.inst.arrays.proc, self.inst.f))
            self._h1[lam] = mu
        return mu

    def h2(self, mu: Perm) -> Perm:
        """Insertion-built job order for ``mu``, already amended."""
        lam = self._h2.get(mu)
        if lam is None:
            order = _np(_by_total(self.inst))
            lam = self.amend(_tuple(K.h2_insert(order, _np(mu), self.inst.arrays.proc)))
            self._h2[mu] = lam
        return lam

    def coding(self, elite: Elite | None = None) -> Coding:
        e = self.best if elite is None else elite
        return Coding.of([j + 1 for j in e.lam], [c + 1 for c in e.mu])


def _np(seq: Sequence[int]) -> np.ndarray:
    return np.array(seq, dtype=np.int64)


def _tuple(a: np.ndarray) -> Perm:
    return tuple(int(x) for x in a)


def _by_total(inst: Instance) -> list[int]:
    s = totals(inst).s
    return sorted(range(inst.u), key=lambda j: (-s[j], j))


# -- constructive heuristics ---------------------------------------------------


def h1_assign(inst: Instance, lam: Sequence[int]) -> tuple[int, ...]:
    """Greedy factory map for a job order: each job goes where the partial CM_max is least."""
    mu = K.h1_assign(np.array([j - 1 for j in lam], dtype=np.int64), inst.arrays.proc, inst.f)
    return tuple(int(c) + 1 for c in mu)


def h2_insert(inst: Instance, mu: Sequence[int]) -> tuple[int, ...]:
    """Job order built by best insertion of jobs in descending total processing time.

    The result is not amended; callers run it through the deadlock amendment.
    """
    order = np.array(_by_total(inst), dtype=np.int64)
    lam = K.h2_insert(order, np.array([c - 1 for c in mu], dtype=np.int64), inst.arrays.proc)
    return tuple(int(j) + 1 for j in lam)


def _l2_order(inst: Instance) -> list[int]:
    tot = totals(inst)
    products = sorted(range(inst.l), key=lambda q: (-tot.sp[q], q))
    lam: list[int] = []
    for q in products:
        jobs = [i - 1 for i in inst.plan[q]]
        lam.extend(sorted(jobs, key=lambda j: (-tot.s[j], j)))
    return lam


def _random_lam(rng: random.Random, u: int) -> list[int]:
    lam = list(range(u))
    rng.shuffle(lam)
    return lam


def _random_mu(rng: random.Random, u: int, f: int) -> Perm:
    return tuple(rng.randrange(f) for _ in range(u))


# -- initialisation ------------------------------------------------------------


def _individuals(state: SolverState) -> list[tuple[Perm, Perm]]:
    inst, rng, ps = state.inst, state.rng, state.params.ps
    u, f = inst.u, inst.f
    out: list[tuple[Perm, Perm]] = []
    if state.params.heuristic_init:
        for lam in (_by_total(inst), _l2_order(inst), _random_lam(rng, u)):
            lam_a = state.amend(lam)
            out.append((lam_a, state.h1(lam_a)))
        mu = _random_mu(rng, u, f)
        out.append((state.h2(mu), mu))
    while len(out) < ps:
        lam_a = state.amend(_random_lam(rng, u))
        out.append((lam_a, _random_mu(rng, u, f)))
    return out


def _fill_populations(state: SolverState, individuals: list[tuple[Perm, Perm]]) -> None:
    state.pop1 = [Entity(lam, n) for n, (lam, _) in enumerate(individuals)]
    state.pop2 = [Entity(mu, n) for n, (_, mu) in enumerate(individuals)]


def initialize(inst: Instance, params: SolverParams) -> SolverState:
    """Seeded populations (L1-L4 heuristics first, then random) and the elite archive."""
    placeholder = Elite((), (), 2**62)
    state = SolverState(
        inst=inst, params=params, pop1=[], pop2=[], archive=[], best=placeholder,
        rng=random.Random(params.seed),
    )
    individuals = _individuals(state)
    _fill_populations(state, individuals)
    scored = sorted(
        ((state.fitness(lam, mu), n) for n, (lam, mu) in enumerate(individuals))
    )
    state.archive = [Elite(*individuals[n], ca) for ca, n in scored[: params.archive_size]]
    state.improved = False
    return state


def restart(state: SolverState) -> None:
    """Rebuild both subpopulations; the archive and the best-so-far survive."""
    _fill_populations(state, _individuals(state))
    state.restarts += 1
    state.stagnation = 0


# -- global evolution ----------------------------------------------------------


def begin_generation(state: SolverState) -> None:
    for e in state.pop1:
        e.dirty = False
    for e in state.pop2:
        e.dirty = False
    state.improved = False


def evolve_orders(state: SolverState) -> None:
    """One pass over ``pop1``: rebuild each job order from a random factory map."""
    pop1, pop2, ps = state.pop1, state.pop2, state.ps
    for n in range(ps):
        if state.out_of_time():
            return
        r = state.rng.randrange(ps)
        mu_r = pop2[r].perm
        lam_new = state.h2(mu_r)
        new = state.fitness(lam_new, mu_r)
        me = pop1[n]
        inc = state.fitness(me.perm, pop2[me.col].perm)
        rival = state.fitness(pop1[pop2[r].col].perm, mu_r)
        if new < inc or pop2[me.col].dirty:
            me.perm, me.col, me.dirty = lam_new, r, True
        if new < rival:
            pop2[r].col = n


def evolve_factories(state: SolverState) -> None:
    """One pass over ``pop2``: rebuild each factory map from a random job order."""
    pop1, pop2, ps = state.pop1, state.pop2, state.ps
    for n in range(ps):
        if state.out_of_time():
            return
        r = state.rng.randrange(ps)
        lam_r = pop1[r].perm
        mu_new = state.h1(lam_r)
        new = state.fitness(lam_r, mu_new)
        me = pop2[n]
        inc = state.fitness(pop1[me.col].perm, me.perm)
        rival = state.fitness(lam_r, pop2[pop1[r].col].perm)
        if new < inc or pop1[me.col].dirty:
            me.perm, me.col, me.dirty = mu_new, r, True
        if new < rival:
            pop1[r].col = n


def global_evolve(state: SolverState) -> None:
    evolve_orders(state)
    evolve_factories(state)


# -- information transfer ------------------------------------------------------


def _argbest(values: list[int]) -> int:
    return min(range(len(values)), key=lambda n: (values[n], n))


def _argworst(values: list[int]) -> int:
    return min(range(len(values)), key=lambda n: (-values[n], n))


def itm(state: SolverState) -> None:
    """Copy the best material across subpopulations and the archive.

    All sources are read before any slot is written, so a draw that lands on
    a source slot cannot feed a half-updated value into a later write.
    """
    pop1, pop2, archive = state.pop1, state.pop2, state.archive
    fit1 = [state.fitness(e.perm, pop2[e.col].perm) for e in pop1]
    fit2 = [state.fitness(pop1[e.col].perm, e.perm) for e in pop2]
    b1, w1 = _argbest(fit1), _argworst(fit1)
    b2, w2 = _argbest(fit2), _argworst(fit2)
    rng = state.rng
    r1, r2 = rng.randrange(state.ps), rng.randrange(state.ps)
    r3, r4 = rng.randrange(len(archive)), rng.randrange(len(archive))

    lam_partner_of_best_mu = pop1[pop2[b2].col].perm
    mu_partner_of_best_lam = pop2[pop1[b1].col].perm
    lam_best, mu_best = pop1[b1].perm, pop2[b2].perm
    elite3, elite4 = archive[r3], archive[r4]

    pop1[r1].perm, pop1[r1].dirty = lam_partner_of_best_mu, True
    pop2[r2].perm, pop2[r2].dirty = mu_partner_of_best_lam, True
    archive[r3] = Elite(lam_best, mu_partner_of_best_lam, fit1[b1])
    archive[r4] = Elite(lam_partner_of_best_mu, mu_best, fit2[b2])
    pop1[w1].perm, pop1[w1].dirty = elite3.lam, True
    pop2[w2].perm, pop2[w2].dirty = elite4.mu, True


# -- local search --------------------------------------------------------------


@dataclass(frozen=True)
class CriticalInfo:
    critical_product: int
    critical_factory: int
    min_factory: int


def critical_min_factory(inst: Instance, ev: EvalResult) -> CriticalInfo:
    """Critical product/factory and min-factory of an evaluated schedule (1-based).

    The critical product is the one assembled just before the last idle gap of
    the assembly machine (the last product when there is no gap); its
    critical factory processes the product's last-finishing job.  The
    min-factory is the factory whose first job starts latest; a factory with
    no jobs at all counts as starting latest.
    """
    sched = ev.schedule
    sigma = sched.sigma
    crit = sigma[-1]
    for j in range(len(sigma) - 2, -1, -1):
        if sched.SA[sigma[j + 1] - 1] > sched.CA[sigma[j] - 1]:
            crit = sigma[j]
            break
    pos = {i: h for h, i in enumerate(ev.lambda_prime)}
    last_job = max(inst.plan[crit - 1], key=lambda i: (int(sched.C[i - 1, -1]), pos[i]))
    crit_factory = sched.mu[last_job - 1]

    first_start: dict[int, float] = {c: math.inf for c in range(1, inst.f + 1)}
    for i in range(1, inst.u + 1):
        c = sched.mu[i - 1]
        first_start[c] = min(first_start[c], int(sched.S[i - 1, 0]))
    min_factory = min(first_start, key=lambda c: (-first_start[c], c))
    return CriticalInfo(crit, crit_factory, min_factory)


def _reinsert(state: SolverState, lam: list[int], moved: list[int], mu: Perm) -> list[int]:
    arr = state.inst.arrays
    mu_a = _np(mu)
    skip = set(moved)
    base = _np([j for j in lam if j not in skip])
    for j in moved:
        pos, _ = K.best_insert_ca(base, j, mu_a, arr.proc, arr.asm, arr.product_of, arr.psi)
        base = K.insert_at(base, j, pos)
    return [int(x) for x in base]


def ls_products(state: SolverState, e: Elite) -> Elite:
    """Re-insert each product's jobs and move them to the single best factory."""
    inst = state.inst
    owner = inst.arrays.product_of
    lam = list(e.lam)
    mu = list(e.mu)
    for q in range(inst.l):
        jobs = [j for j in lam if owner[j] == q]
        lam = _reinsert(state, lam, jobs, tuple(mu))
        lam_a = state.amend(lam)
        best_c, best_ca = 0, None
        for c in range(inst.f):
            trial = list(mu)
            for j in jobs:
                trial[j] = c
            ca = state.fitness(lam_a, tuple(trial))
            if best_ca is None or ca < best_ca:
                best_c, best_ca = c, ca
        for j in jobs:
            mu[j] = best_c
    return _accept(state, e, state.amend(lam), tuple(mu))


def _accept(state: SolverState, e: Elite, lam: Perm, mu: Perm) -> Elite:
    ca = state.fitness(lam, mu)
    return Elite(lam, mu, ca) if ca < e.ca else e


def _critical(state: SolverState, e: Elite) -> CriticalInfo:
    return critical_min_factory(state.inst, evaluate(state.inst, state.coding(e)))


def ls_critical_orders(state: SolverState, e: Elite) -> Elite:
    """Re-insert the critical factory's jobs at their best positions."""
    crit = _critical(state, e).critical_factory - 1
    gamma = [j for j in e.lam if e.mu[j] == crit]
    lam = _reinsert(state, list(e.lam), gamma, e.mu)
    return _accept(state, e, state.amend(lam), e.mu)


def ls_critical_factory(state: SolverState, e: Elite) -> Elite:
    """Move every job of the critical factory to the min-factory."""
    info = _critical(state, e)
    src, dst = info.critical_factory - 1, info.min_factory - 1
    mu = tuple(dst if c == src else c for c in e.mu)
    return _accept(state, e, e.lam, mu)


def ls_destroy_rebuild(state: SolverState, e: Elite) -> Elite:
    """Re-sequence ``ceil(u * cd)`` random jobs after the archive's best, copying its factories."""
    u = state.inst.u
    guide = min(state.archive, key=lambda a: a.ca)
    d = removal_count(u, state.params.cd)
    gamma = set(state.rng.sample(range(u), d))
    slots = [h for h, j in enumerate(e.lam) if j in gamma]
    reordered = [j for j in guide.lam if j in gamma]
    lam = list(e.lam)
    for h, j in zip(slots, reordered):
        lam[h] = j
    mu = tuple(guide.mu[j] if j in gamma else c for j, c in enumerate(e.mu))
    return _accept(state, e, state.amend(lam), mu)


def removal_count(u: int, cd: float) -> int:
    # round first: 30 * 0.1 is 3.0000000000000004 in binary floating point
    return max(1, min(u, math.ceil(round(u * cd, 9))))


LOCAL_SEARCH = (ls_products, ls_critical_orders, ls_critical_factory, ls_destroy_rebuild)


def local_search(state: SolverState) -> None:
    for n in range(len(state.archive)):
        for op in LOCAL_SEARCH:
            if state.out_of_time():
                return
            state.archive[n] = op(state, state.archive[n])


# -- driver --------------------------------------------------------------------


@dataclass(frozen=True)
class SolveStats:
    generations: int
    evaluations: int
    restarts: int
    elapsed_ms: float
    history: tuple[int, ...]


def _run(state: SolverState, started: float) -> SolveStats:
    params = state.params
    history = [state.best.ca]
    while not state.out_of_time():
        if params.max_generations is not None and state.generation >= params.max_generations:
            break
        begin_generation(state)
        evolve_orders(state)
        evolve_factories(state)
        if params.itm:
            itm(state)
        if params.local_search:
            local_search(state)
        state.generation += 1
        history.append(state.best.ca)
        if state.improved:
            state.stagnation = 0
        else:
            state.stagnation += 1
            if state.stagnation >= params.alpha and not state.out_of_time():
                log.debug("restart at generation %d (best %d)", state.generation, state.best.ca)
                restart(state)
    return SolveStats(
        generations=state.generation,
        evaluations=state.eval_count,
        restarts=state.restarts,
        elapsed_ms=(time.monotonic() - started) * 1000.0,
        history=tuple(history),
    )


def solve(inst: Instance, params: SolverParams) -> tuple[Coding, EvalResult, SolveStats]:
    """Run HCCE until the wall-clock budget or the generation cap is reached."""
    started = time.monotonic()
    state = initialize(inst, params)
    if params.budget_ms is not None:
        state.deadline = started + params.budget_ms / 1000.0
    stats = _run(state, started)
    best = state.coding()
    return best, evaluate(inst, best), stats


def variant_params(params: SolverParams, name: str) -> SolverParams:
    return replace(params, **VARIANTS[name])


# -- simple baselines ----------------------------------------------------------


def random_search(inst: Instance, params: SolverParams) -> tuple[Coding, EvalResult, SolveStats]:
    """Uniform random codings; one generation is ``ps`` samples."""
    started = time.monotonic()
    rng = random.Random(params.seed)
    state = SolverState(
        inst=inst, params=params, pop1=[], pop2=[], archive=[],
        best=Elite((), (), 2**62), rng=rng,
    )
    if params.budget_ms is not None:
        state.deadline = started + params.budget_ms / 1000.0
    gen = 0
    history = []
    while True:
        for _ in range(params.ps):
            state.fitness(state.amend(_random_lam(rng, inst.u)), _random_mu(rng, inst.u, inst.f))
        gen += 1
        history.append(state.best.ca)
        if state.out_of_time() or (
            params.max_generations is not None and gen >= params.max_generations
        ):
            break
    best = state.coding()
    stats = SolveStats(gen, state.eval_count, 0, (time.monotonic() - started) * 1000.0, tuple(history))
    return best, evaluate(inst, best), stats


def greedy_l1(inst: Instance, params: SolverParams) -> tuple[Coding, EvalResult, SolveStats]:
    """The descending-total-time order with greedy factory assignment, no search."""
    started = time.monotonic()
    state = SolverState(
        inst=inst, params=params, pop1=[], pop2=[], archive=[],
        best=Elite((), (), 2**62), rng=random.Random(params.seed),
    )
    lam = state.amend(_by_total(inst))
    state.fitness(lam, state.h1(lam))
    best = state.coding()
    stats = SolveStats(0, state.eval_count, 0, (time.monotonic() - started) * 1000.0, (state.best.ca,))
    return best, evaluate(inst, best), stats
