import random
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import example_instance, random_instance
from dafsp import _kernels as K
from dafsp.petri import (
    AmendStep,
    DeadlockInfeasible,
    OracleCapExceeded,
    TransitionDisabled,
    build_app,
    dump_marking,
    dump_net,
    fire,
    fire_job_and_settle,
    iba_safe,
    idam,
    idam_trace,
    marking_from,
    reach_safe_oracle,
    reachable_markings,
    replay,
    settle,
)
from dafsp.instance import make_instance


@pytest.fixture
def net():
    return build_app(example_instance())


def deadlock_marking(net):
    return marking_from(net, {"p_i2": 1, "pe_i4": 1, "pe_i5": 1, "pe_i1": 1, "p_i3": 1, "p_B": 0})


def safe_marking(net):
    return marking_from(net, {"p_i1": 1, "pe_i2": 1, "p_i3": 1, "p_i4": 1, "p_i5": 1, "p_B": 2})


def test_build_shape(net):
    assert net.n_places == 2 * 5 + 2 + 1
    assert net.n_transitions == 7
    assert net.m0[net.p_buffer] == 3
    assert all(net.m0[net.p_job(i)] == 1 for i in range(1, 6))
    post_q2 = dict(net.post[net.t_product(2)])
    assert post_q2[net.p_buffer] == 3
    assert dict(net.post[net.t_product(1)])[net.p_buffer] == 2
    assert dict(net.pre[net.t_product(2)]) == {net.p_buffered(i): 1 for i in (2, 4, 5)}


def test_minimal_net():
    n = build_app(make_instance([[1]], [1], [[1]], psi=1, f=1))
    assert replay(n, [1]) == n.m_end


def test_fire_and_settle(net):
    m = fire_job_and_settle(net, net.m0, 1)
    assert m[net.p_buffered(1)] == 1 and m[net.p_buffer] == 2
    assert m[net.p_product(1)] == 0
    m = fire_job_and_settle(net, m, 4)
    assert m[net.p_buffer] == 1
    m = fire_job_and_settle(net, m, 3)
    assert m[net.p_product(1)] == 1
    assert m[net.p_buffered(1)] == m[net.p_buffered(3)] == 0
    assert m[net.p_buffered(4)] == 1
    assert m[net.p_buffer] == 2


def test_fire_disabled(net):
    m = marking_from(net, {"p_i1": 1, "p_B": 0})
    with pytest.raises(TransitionDisabled, match="p_B"):
        fire(net, m, net.t_job(1))


def test_iba_example_markings(net):
    assert iba_safe(net, deadlock_marking(net)) is False
    assert iba_safe(net, safe_marking(net)) is True
    assert iba_safe(net, net.m_end) is True
    assert reach_safe_oracle(net, deadlock_marking(net)) is False
    assert reach_safe_oracle(net, safe_marking(net)) is True


def test_idam_example_trace(net):
    gamma, steps = idam_trace(net, (1, 4, 5, 3, 2))
    assert gamma == (1, 4, 3, 2, 5)
    assert steps == (
        AmendStep(1, 1, True),
        AmendStep(2, 4, True),
        AmendStep(3, 5, False),
        AmendStep(3, 3, True),
        AmendStep(4, 2, True),
        AmendStep(5, 5, True),
    )
    assert sum(not s.accepted for s in steps) == 1


def test_idam_identity_with_large_buffer():
    rng = random.Random(2)
    for _ in range(100):
        inst = random_instance(rng)
        inst = make_instance(inst.proc, inst.asm, inst.plan, psi=inst.u, f=inst.f)
        lam = list(range(1, inst.u + 1))
        rng.shuffle(lam)
        assert idam(build_app(inst), lam) == tuple(lam)


def test_idam_infeasible():
    with pytest.warns(UserWarning):
        inst = make_instance([[1]] * 3, [1], [[1, 2, 3]], psi=2, f=1)
    with pytest.raises(DeadlockInfeasible):
        idam(build_app(inst), [1, 2, 3])


def test_idam_rejects_non_permutation(net):
    with pytest.raises(ValueError):
        idam(net, [1, 1, 2, 3, 4])


def test_oracle_cap():
    rng = random.Random(0)
    inst = random_instance(rng, u_max=13, u_min=13)
    with pytest.raises(OracleCapExceeded):
        reach_safe_oracle(build_app(inst), build_app(inst).m0)


def test_reachable_invariants():
    rng = random.Random(7)
    for _ in range(200):
        inst = random_instance(rng, u_max=7, feasible=rng.random() < 0.8)
        net = build_app(inst)
        for m in reachable_markings(net):
            assert settle(net, m) == m
            for i in range(1, inst.u + 1):
                q = inst.product_of[i - 1]
                assert m[net.p_job(i)] + m[net.p_buffered(i)] + m[net.p_product(q)] == 1
            assert m[net.p_buffer] == inst.psi - sum(m[net.p_buffered(i)] for i in range(1, inst.u + 1))


def test_iba_monotone_in_free_slots():
    rng = random.Random(9)
    for _ in range(200):
        inst = random_instance(rng, u_max=7, feasible=False)
        net = build_app(inst)
        for m in reachable_markings(net):
            if iba_safe(net, m):
                more = list(m)
                more[net.p_buffer] += 1
                assert iba_safe(net, tuple(more))


def _perm(rng, u):
    lam = list(range(1, u + 1))
    rng.shuffle(lam)
    return lam


def test_idam_properties():
    rng = random.Random(13)
    checked = 0
    while checked < 500:
        inst = random_instance(rng)
        net = build_app(inst)
        lam = _perm(rng, inst.u)
        out = idam(net, lam)
        assert sorted(out) == sorted(lam)
        assert idam(net, out) == out
        assert replay(net, out) == net.m_end
        checked += 1


def test_idam_identity_on_safe_prefixes():
    rng = random.Random(17)
    for _ in range(300):
        inst = random_instance(rng)
        net = build_app(inst)
        lam = _perm(rng, inst.u)
        m, ok = net.m0, True
        for i in lam:
            if m[net.p_buffer] == 0:
                ok = False
                break
            m = fire_job_and_settle(net, m, i)
            if not reach_safe_oracle(net, m):
                ok = False
                break
        if ok:
            assert idam(net, lam) == tuple(lam)


def _kernel_amend(inst, lam):
    arr = inst.arrays
    seq = np.array([i - 1 for i in lam], dtype=np.int64)
    out = np.empty_like(seq)
    moves = K.amend(seq, arr.product_of, arr.sizes, arr.psi, out)
    return moves, tuple(int(x) + 1 for x in out)


def test_kernel_amend_matches_reference():
    rng = random.Random(19)
    for _ in range(1000):
        inst = random_instance(rng, u_max=10, feasible=rng.random() < 0.9)
        net = build_app(inst)
        lam = _perm(rng, inst.u)
        moves, out = _kernel_amend(inst, lam)
        try:
            gamma, steps = idam_trace(net, lam)
        except DeadlockInfeasible:
            assert moves == K.INFEASIBLE
            continue
        assert out == gamma
        assert moves == sum(not s.accepted for s in steps)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kernel_amend_partial_sequences(seed):
    # amending a subset behaves like amending the full order of a restricted instance
    rng = random.Random(seed)
    inst = random_instance(rng, u_max=8)
    keep = sorted(rng.sample(range(1, inst.u + 1), rng.randint(1, inst.u)))
    lam = [i for i in _perm(rng, inst.u) if i in keep]
    arr = inst.arrays
    seq = np.array([i - 1 for i in lam], dtype=np.int64)
    sizes = K.present_sizes(seq, arr.product_of, inst.l)
    out = np.empty_like(seq)
    assert K.amend(seq, arr.product_of, sizes, arr.psi, out) >= 0
    sub_plan = [[keep.index(i) + 1 for i in p if i in keep] for p in inst.plan]
    sub_plan = [p for p in sub_plan if p]
    sub = make_instance([inst.proc[i - 1] for i in keep], [1] * len(sub_plan), sub_plan, inst.psi, inst.f)
    expect = idam(build_app(sub), [keep.index(i) + 1 for i in lam])
    assert [keep[j - 1] for j in expect] == [int(x) + 1 for x in out]


def test_dumps(net):
    text = dump_net(net)
    assert "t_q2: pe_i2 + pe_i4 + pe_i5 -> pe_q2 + 3*p_B" in text
    assert "p_B\t3" in dump_marking(net, net.m0)


def test_idam_runtime_growth():
    # wall time should grow no faster than cubically in u
    rng = random.Random(23)

    def timed(u):
        inst = random_instance(rng, u_max=u, u_min=u, f_max=1, m_max=1)
        net = build_app(inst)
        lam = _perm(rng, u)
        t = time.perf_counter()
        for _ in range(3):
            idam(net, lam)
        return (time.perf_counter() - t) / 3

    small = min(timed(10) for _ in range(5))
    large = min(timed(40) for _ in range(5))
    assert large / small < 4**3 * 4
