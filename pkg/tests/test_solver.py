import copy
import itertools
import random

import numpy as np
import pytest

from conftest import example_instance, random_instance
from test_evaluator import reference_backward
from dafsp import solver as H
from dafsp.evaluator import evaluate
from dafsp.instance import Coding, make_instance, totals
from dafsp.petri import build_app, replay


def prefix_cm(inst, lam, mu):
    _, C = reference_backward(inst, lam, mu)
    return max(int(C[i - 1, -1]) for i in lam)


def params(**kw):
    base = dict(ps=4, ep=0.5, alpha=3, cd=0.2, max_generations=3, seed=1)
    base.update(kw)
    return H.SolverParams(**base)


def test_params_validation():
    with pytest.raises(ValueError):
        H.SolverParams(ps=3, max_generations=1)
    with pytest.raises(ValueError):
        H.SolverParams(ep=0, max_generations=1)
    with pytest.raises(ValueError):
        H.SolverParams()
    assert H.SolverParams(ps=50, ep=0.2, max_generations=1).archive_size == 10
    assert H.SolverParams(ps=35, ep=0.5, max_generations=1).archive_size == 18
    p = H.preset("large", max_generations=2, ps=30)
    assert (p.ps, p.ep, p.alpha, p.cd) == (30, 0.2, 3, 0.7)


def test_removal_count():
    assert H.removal_count(30, 0.1) == 3
    assert H.removal_count(10, 0.7) == 7
    assert H.removal_count(5, 0.01) == 1
    assert H.removal_count(5, 1.0) == 5


def test_budget_rule():
    inst = random_instance(random.Random(0), u_max=10, u_min=10)
    assert H.budget_for(inst, "small") == 120 * inst.u * inst.f * inst.m * inst.l


def test_h1_greedy_trace(ex6):
    lam = (1, 4, 3, 2, 5)
    mu = list(H.h1_assign(ex6, lam))
    chosen = [0] * ex6.u
    for h, i in enumerate(lam):
        prefix = lam[: h + 1]
        scores = []
        for c in range(1, ex6.f + 1):
            chosen[i - 1] = c
            scores.append(prefix_cm(ex6, prefix, chosen))
        chosen[i - 1] = 1 + scores.index(min(scores))
    assert mu == chosen


def test_h1_random_trace():
    rng = random.Random(3)
    for _ in range(100):
        inst = random_instance(rng)
        lam = list(range(1, inst.u + 1))
        rng.shuffle(lam)
        mu = H.h1_assign(inst, lam)
        chosen = [0] * inst.u
        for h, i in enumerate(lam):
            scores = []
            for c in range(1, inst.f + 1):
                chosen[i - 1] = c
                scores.append(prefix_cm(inst, lam[: h + 1], chosen))
            chosen[i - 1] = 1 + scores.index(min(scores))
        assert list(mu) == chosen


def test_h1_edge_cases():
    inst = make_instance([[3, 2], [1, 1], [5, 5]], [1], [[1, 2, 3]], psi=3, f=1)
    assert H.h1_assign(inst, (2, 3, 1)) == (1, 1, 1)
    twin = make_instance([[4, 4], [4, 4]], [1], [[1, 2]], psi=2, f=2)
    assert sorted(H.h1_assign(twin, (1, 2))) == [1, 2]


def test_h2_edge_cases():
    one = make_instance([[3]], [1], [[1]], psi=1, f=1)
    assert H.h2_insert(one, (1,)) == (1,)
    # every position ties on one machine, so each job lands in front: the
    # descending-total order (2, 4, 1, 3) comes out reversed
    inst = make_instance([[3], [9], [3], [5]], [1, 1], [[1, 2], [3, 4]], psi=2, f=1)
    assert H.h2_insert(inst, (1, 1, 1, 1)) == (3, 1, 4, 2)


def test_h2_beats_plain_order():
    rng = random.Random(5)
    for _ in range(100):
        inst = random_instance(rng, u_max=6)
        mu = [rng.randint(1, inst.f) for _ in range(inst.u)]
        s = totals(inst).s
        plain = sorted(range(1, inst.u + 1), key=lambda i: (-s[i - 1], i))
        lam = H.h2_insert(inst, mu)
        assert sorted(lam) == list(range(1, inst.u + 1))
        assert prefix_cm(inst, lam, mu) <= prefix_cm(inst, plain, mu)


def _state_snapshot(state):
    return (
        [(e.perm, e.col) for e in state.pop1],
        [(e.perm, e.col) for e in state.pop2],
        list(state.archive),
        state.best,
    )


def test_initialize_heuristics(ex6):
    state = H.initialize(ex6, params())
    assert len(state.pop1) == len(state.pop2) == 4
    l1 = state.amend(H._by_total(ex6))
    assert state.pop1[0].perm == l1
    assert state.pop2[0].perm == state.h1(l1)
    l2 = state.amend(H._l2_order(ex6))
    assert state.pop1[1].perm == l2
    assert state.pop1[3].perm == state.h2(state.pop2[3].perm)
    assert [e.col for e in state.pop1] == [0, 1, 2, 3]
    assert [e.col for e in state.pop2] == [0, 1, 2, 3]
    assert len(state.archive) == 2
    fits = sorted(state.fitness(a.perm, b.perm) for a, b in zip(state.pop1, state.pop2))
    assert [e.ca for e in state.archive] == fits[:2]
    assert state.best.ca == fits[0]
    net = build_app(ex6)
    for e in state.pop1:
        assert replay(net, [j + 1 for j in e.perm]) == net.m_end
    assert _state_snapshot(state) == _state_snapshot(H.initialize(ex6, params()))


def test_l2_order(ex6):
    # product 2 has the larger total, its jobs come first by descending totals
    assert [j + 1 for j in H._l2_order(ex6)] == [4, 5, 2, 1, 3]


def _reference_generation(state):
    """Straight-line global evolution over plain lists, mirroring the update rules."""
    ps = state.ps
    lam = [e.perm for e in state.pop1]
    col1 = [e.col for e in state.pop1]
    mu = [e.perm for e in state.pop2]
    col2 = [e.col for e in state.pop2]
    d1, d2 = [False] * ps, [False] * ps
    fit = state.fitness
    for n in range(ps):
        r = state.rng.randrange(ps)
        cand = state.h2(mu[r])
        new = fit(cand, mu[r])
        inc = fit(lam[n], mu[col1[n]])
        rival = fit(lam[col2[r]], mu[r])
        if new < inc or d2[col1[n]]:
            lam[n], col1[n], d1[n] = cand, r, True
        if new < rival:
            col2[r] = n
    for n in range(ps):
        r = state.rng.randrange(ps)
        cand = state.h1(lam[r])
        new = fit(lam[r], cand)
        inc = fit(lam[col2[n]], mu[n])
        rival = fit(lam[r], mu[col1[r]])
        if new < inc or d1[col2[n]]:
            mu[n], col2[n], d2[n] = cand, r, True
        if new < rival:
            col1[r] = n
    return list(zip(lam, col1)), list(zip(mu, col2))


def test_global_evolve_matches_reference():
    rng = random.Random(8)
    for trial in range(10):
        inst = random_instance(rng, u_max=8, u_min=4)
        state = H.initialize(inst, params(ps=6, seed=trial))
        for _ in range(5):
            ref = copy.deepcopy(state)
            H.begin_generation(state)
            H.global_evolve(state)
            H.begin_generation(ref)
            expect = _reference_generation(ref)
            assert [(e.perm, e.col) for e in state.pop1] == expect[0]
            assert [(e.perm, e.col) for e in state.pop2] == expect[1]
            for e in state.pop1 + state.pop2:
                assert 0 <= e.col < state.ps


def test_itm(ex6):
    state = H.initialize(ex6, params(ps=4, ep=1.0))
    fit1 = [state.fitness(e.perm, state.pop2[e.col].perm) for e in state.pop1]
    b = H._argbest(fit1)
    lam_b = state.pop1[b].perm
    best_before = state.best
    probe = copy.deepcopy(state.rng)
    probe.randrange(4), probe.randrange(4)
    r3 = probe.randrange(len(state.archive))
    H.itm(state)
    assert state.archive[r3].lam == lam_b
    assert state.best.ca <= best_before.ca
    net = build_app(ex6)
    for e in state.pop1:
        assert replay(net, [j + 1 for j in e.perm]) == net.m_end
    for a in state.archive:
        assert a.ca == state.fitness(a.lam, a.mu)


def test_critical_example(ex6):
    ev = evaluate(ex6, Coding.of([1, 4, 5, 3, 2], [2, 2, 1, 1, 2]))
    info = H.critical_min_factory(ex6, ev)
    assert (info.critical_product, info.critical_factory, info.min_factory) == (1, 1, 2)


def test_critical_degenerate():
    rng = random.Random(2)
    for _ in range(30):
        inst = random_instance(rng)
        one_f = make_instance(inst.proc, inst.asm, inst.plan, inst.psi, f=1)
        lam = list(range(1, inst.u + 1))
        rng.shuffle(lam)
        info = H.critical_min_factory(one_f, evaluate(one_f, Coding.of(lam, [1] * inst.u)))
        assert info.critical_factory == info.min_factory == 1
    inst = make_instance([[2, 3], [4, 1]], [2], [[1, 2]], psi=2, f=2)
    ev = evaluate(inst, Coding.of([1, 2], [1, 2]))
    assert H.critical_min_factory(inst, ev).critical_product == ev.schedule.sigma[0]


def test_empty_factory_is_min_factory():
    inst = make_instance([[2, 3], [4, 1]], [2], [[1, 2]], psi=2, f=3)
    ev = evaluate(inst, Coding.of([1, 2], [1, 1]))
    assert H.critical_min_factory(inst, ev).min_factory == 2


def test_local_search_trivial_instance():
    inst = make_instance([[5]], [2], [[1]], psi=1, f=1)
    state = H.initialize(inst, params())
    e = state.archive[0]
    for op in H.LOCAL_SEARCH:
        assert op(state, e) == e


def test_ls4_identity_on_best():
    inst = random_instance(random.Random(4), u_max=8, u_min=6)
    state = H.initialize(inst, params(cd=1.0))
    guide = min(state.archive, key=lambda a: a.ca)
    assert H.ls_destroy_rebuild(state, guide) == guide


def test_local_search_never_worsens():
    rng = random.Random(12)
    for trial in range(20):
        inst = random_instance(rng, u_max=12, u_min=6, f_max=3)
        state = H.initialize(inst, params(ps=8, seed=trial))
        before = [a.ca for a in state.archive]
        H.local_search(state)
        after = [a.ca for a in state.archive]
        assert all(a <= b for a, b in zip(after, before))
        for a in state.archive:
            assert a.ca == state.fitness(a.lam, a.mu)
        assert state.best.ca <= min(after)


def test_solve_example(ex6):
    for seed in range(3):
        coding, res, stats = H.solve(ex6, params(ps=10, seed=seed, max_generations=5))
        assert res.ca_max <= 30
        assert res.ca_max == evaluate(ex6, coding).ca_max
        assert list(stats.history) == sorted(stats.history, reverse=True)


def test_solve_zero_generations(ex6):
    p = params(ps=6, max_generations=0)
    state = H.initialize(ex6, p)
    _, res, stats = H.solve(ex6, p)
    assert stats.generations == 0
    assert res.ca_max == state.best.ca


def test_solve_deterministic():
    rng = random.Random(21)
    for trial in range(5):
        inst = random_instance(rng, u_max=10, u_min=5)
        p = params(ps=6, seed=trial, max_generations=4)
        a, b = H.solve(inst, p), H.solve(inst, p)
        assert a[0] == b[0] and a[2].history == b[2].history


def test_restart_keeps_archive():
    inst = random_instance(random.Random(9), u_max=6, u_min=6)
    _, _, stats = H.solve(inst, params(ps=4, alpha=1, max_generations=6))
    assert stats.restarts >= 1


def test_variants_and_baselines(ex6):
    base = params(ps=6)
    assert H.variant_params(base, "hcce-nols").local_search is False
    nomc = H.variant_params(base, "hcce-nomccea")
    assert not nomc.itm and not nomc.local_search
    for fn in (H.random_search, H.greedy_l1):
        coding, res, _ = fn(ex6, base)
        assert res.ca_max == evaluate(ex6, coding).ca_max


def brute_force(inst):
    best = None
    for lam in itertools.permutations(range(1, inst.u + 1)):
        for mu in itertools.product(range(1, inst.f + 1), repeat=inst.u):
            ca = evaluate(inst, Coding.of(lam, mu)).ca_max
            best = ca if best is None else min(best, ca)
    return best


def test_toy_never_below_optimum():
    rng = random.Random(30)
    for seed in range(3):
        inst = random_instance(rng, u_max=4, u_min=4, f_max=2)
        _, res, _ = H.solve(inst, params(ps=8, seed=seed, max_generations=5))
        assert res.ca_max >= brute_force(inst)
