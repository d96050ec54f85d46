"""Assembly-procedure Petri net: job entries into the assembly buffer.

Place layout of a net for ``u`` jobs and ``l`` products (0-based indices)::

    p_i    -> i - 1               job i finished, not yet in the buffer
    pe_i   -> u + i - 1           job i waiting in the buffer
    pe_q   -> 2u + q - 1          product q assembled
    p_B    -> 2u + l              free buffer slots

Transition ``t_i`` (index ``i - 1``) moves job ``i`` into the buffer and
``t_q`` (index ``u + q - 1``) assembles product ``q``, returning ``|AP_q|``
slots.  Markings are plain tuples of token counts in place order.

Assembly transitions fire as soon as they are enabled, so every marking the
public functions hand out is *settled*: no assembly transition is enabled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .instance import Instance

Marking = tuple[int, ...]


class TransitionDisabled(RuntimeError):
    """Raised when firing a transition whose preset is not marked."""


class DeadlockInfeasible(RuntimeError):
    """No remaining job can enter the buffer without losing safety."""


class OracleCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class APPNet:
    u: int
    l: int
    psi: int
    plan: tuple[tuple[int, ...], ...]
    product_of: tuple[int, ...]
    pre: tuple[tuple[tuple[int, int], ...], ...]  # per transition: (place, weight)
    post: tuple[tuple[tuple[int, int], ...], ...]
    m0: Marking
    m_end: Marking
    place_names: tuple[str, ...] = field(repr=False)
    transition_names: tuple[str, ...] = field(repr=False)

    # place index helpers
    def p_job(self, i: int) -> int:
        return i - 1

    def p_buffered(self, i: int) -> int:
        return self.u + i - 1

    def p_product(self, q: int) -> int:
        return 2 * self.u + q - 1

    @property
    def p_buffer(self) -> int:
        return 2 * self.u + self.l

    def t_job(self, i: int) -> int:
        return i - 1

    def t_product(self, q: int) -> int:
        return self.u + q - 1

    @property
    def n_places(self) -> int:
        return 2 * self.u + self.l + 1

    @property
    def n_transitions(self) -> int:
        return self.u + self.l


def build_app(inst: Instance) -> APPNet:
    u, l = inst.u, inst.l
    n_places = 2 * u + l + 1
    p_b = 2 * u + l
    pre: list[tuple[tuple[int, int], ...]] = []
    post: list[tuple[tuple[int, int], ...]] = []
    for i in range(1, u + 1):
        pre.append(((i - 1, 1), (p_b, 1)))
        post.append(((u + i - 1, 1),))
    for q, jobs in enumerate(inst.plan, start=1):
        pre.append(tuple((u + i - 1, 1) for i in jobs))
        post.append(((2 * u + q - 1, 1), (p_b, len(jobs))))

    m0 = [0] * n_places
    m_end = [0] * n_places
    for i in range(u):
        m0[i] = 1
    for q in range(l):
        m_end[2 * u + q] = 1
    m0[p_b] = m_end[p_b] = inst.psi

    names = (
        [f"p_i{i}" for i in range(1, u + 1)]
        + [f"pe_i{i}" for i in range(1, u + 1)]
        + [f"pe_q{q}" for q in range(1, l + 1)]
        + ["p_B"]
    )
    return APPNet(
        u=u,
        l=l,
        psi=inst.psi,
        plan=inst.plan,
        product_of=inst.product_of,
        pre=tuple(pre),
        post=tuple(post),
        m0=tuple(m0),
        m_end=tuple(m_end),
        place_names=tuple(names),
        transition_names=tuple([f"t_i{i}" for i in range(1, u + 1)] + [f"t_q{q}" for q in range(1, l + 1)]),
    )


def enabled(net: APPNet, m: Marking, t: int) -> bool:
    return all(m[p] >= w for p, w in net.pre[t])


def fire(net: APPNet, m: Marking, t: int) -> Marking:
    for p, w in net.pre[t]:
        if m[p] < w:
            raise TransitionDisabled(
                f"{net.transition_names[t]} is disabled: {net.place_names[p]} holds {m[p]} < {w}"
            )
    out = list(m)
    for p, w in net.pre[t]:
        out[p] -= w
    for p, w in net.post[t]:
        out[p] += w
    return tuple(out)


def settle(net: APPNet, m: Marking) -> Marking:
    """Fire enabled assembly transitions, lowest product id first, until none is enabled."""
    changed = True
    while changed:
        changed = False
        for q in range(1, net.l + 1):
            t = net.t_product(q)
            if enabled(net, m, t):
                m = fire(net, m, t)
                changed = True
    return m


def fire_job_and_settle(net: APPNet, m: Marking, job: int) -> Marking:
    return settle(net, fire(net, m, net.t_job(job)))


def replay(net: APPNet, lam: Iterable[int], m: Marking | None = None) -> Marking:
    """Fire jobs in order from ``m`` (default the initial marking)."""
    m = net.m0 if m is None else m
    for i in lam:
        m = fire_job_and_settle(net, m, i)
    return m


@dataclass
class IbaWork:
    """Working state of the safety check."""

    omega: set[int]
    theta: list[int]
    feasible: set[int]
    m_cu: list[int]


def iba_start(net: APPNet, m: Marking) -> IbaWork:
    omega = {q for q in range(1, net.l + 1) if m[net.p_product(q)] == 0}
    theta = [len(jobs) - sum(m[net.p_buffered(i)] for i in jobs) for jobs in net.plan]
    work = IbaWork(omega=omega, theta=theta, feasible=set(), m_cu=list(m))
    work.feasible = _feasible(net, work)
    return work


def _feasible(net: APPNet, work: IbaWork) -> set[int]:
    free = work.m_cu[net.p_buffer]
    return {q for q in work.omega if free >= work.theta[q - 1]}


def iba_safe(net: APPNet, m: Marking) -> bool:
    """Banker's-style safety test: can every unfinished product still be assembled?

    Repeatedly picks an unfinished product whose missing jobs fit in the free
    buffer slots and assembles it virtually, releasing the slots its buffered
    jobs hold.  Assembling only ever frees slots, so the greedy choice is
    complete; the lowest product id is taken for determinism.
    """
    work = iba_start(net, m)
    while work.omega:
        if not work.feasible:
            return False
        q = min(work.feasible)
        work.omega.discard(q)
        jobs = net.plan[q - 1]
        work.m_cu[net.p_product(q)] = 1
        work.m_cu[net.p_buffer] += len(jobs) - work.theta[q - 1]
        for i in jobs:
            work.m_cu[net.p_job(i)] = 0
            work.m_cu[net.p_buffered(i)] = 0
        work.feasible = _feasible(net, work)
    return True


@dataclass(frozen=True)
class AmendStep:
    """One tentative firing during amendment."""

    position: int  # 1-based slot being filled
    job: int
    accepted: bool


def idam_trace(net: APPNet, lam: Sequence[int]) -> tuple[tuple[int, ...], tuple[AmendStep, ...]]:
    """Amend ``lam`` into a deadlock-free order, recording every tentative firing.

    Slot by slot, the job currently at the slot is fired; if the resulting
    marking fails :func:`iba_safe` the job is moved to the end of the working
    sequence and the next candidate is tried.
    """
    if sorted(lam) != list(range(1, net.u + 1)):
        raise ValueError(f"not a permutation of jobs 1..{net.u}: {list(lam)}")
    gamma = list(lam)
    m = net.m0
    steps: list[AmendStep] = []
    for r in range(len(gamma)):
        for _ in range(len(gamma) - r):
            job = gamma[r]
            t = net.t_job(job)
            if enabled(net, m, t):
                nxt = settle(net, fire(net, m, t))
                if iba_safe(net, nxt):
                    steps.append(AmendStep(r + 1, job, True))
                    m = nxt
                    break
            steps.append(AmendStep(r + 1, job, False))
            gamma.append(gamma.pop(r))
        else:
            raise DeadlockInfeasible(
                f"no safe job for position {r + 1}; remaining {gamma[r:]} with "
                f"{m[net.p_buffer]} free buffer slots"
            )
    return tuple(gamma), tuple(steps)


def idam(net: APPNet, lam: Sequence[int]) -> tuple[int, ...]:
    return idam_trace(net, lam)[0]


def reach_safe_oracle(net: APPNet, m: Marking, cap: int = 12) -> bool:
    """Exhaustive check that the final marking is reachable from ``m``."""
    if net.u > cap:
        raise OracleCapExceeded(f"{net.u} jobs exceeds the oracle cap of {cap}")
    seen: set[Marking] = set()
    stack = [settle(net, m)]
    while stack:
        cur = stack.pop()
        if cur == net.m_end:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        for i in range(1, net.u + 1):
            if enabled(net, cur, net.t_job(i)):
                stack.append(fire_job_and_settle(net, cur, i))
    return False


def reachable_markings(net: APPNet, cap: int = 12) -> set[Marking]:
    """All settled markings reachable from the initial marking by job firings."""
    if net.u > cap:
        raise OracleCapExceeded(f"{net.u} jobs exceeds the oracle cap of {cap}")
    start = settle(net, net.m0)
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for i in range(1, net.u + 1):
            if enabled(net, cur, net.t_job(i)):
                nxt = fire_job_and_settle(net, cur, i)
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    return seen


def marking_from(net: APPNet, tokens: dict[str, int]) -> Marking:
    """Build a marking from ``{place name: tokens}``; unnamed places are empty."""
    index = {name: k for k, name in enumerate(net.place_names)}
    m = [0] * net.n_places
    for name, v in tokens.items():
        m[index[name]] = v
    return tuple(m)


def dump_marking(net: APPNet, m: Marking, *, skip_empty: bool = True) -> str:
    return "\n".join(
        f"{name}\t{m[k]}" for k, name in enumerate(net.place_names) if m[k] or not skip_empty
    )


def dump_net(net: APPNet) -> str:
    lines = [f"places {net.n_places}", f"transitions {net.n_transitions}"]
    for t, name in enumerate(net.transition_names):
        ins = " + ".join(_weighted(net.place_names[p], w) for p, w in net.pre[t])
        outs = " + ".join(_weighted(net.place_names[p], w) for p, w in net.post[t])
        lines.append(f"{name}: {ins} -> {outs}")
    lines.append("initial:")
    lines.append(dump_marking(net, net.m0))
    return "\n".join(lines)


def _weighted(name: str, w: int) -> str:
    return name if w == 1 else f"{w}*{name}"
