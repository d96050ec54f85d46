"""Timed schedules for deadlock-free codings.

The manufacturing stage is scheduled backwards from the last job entering the
assembly buffer: on the last machine, each job completes just before the next
job in the amended entry order (same factory: when the next job starts; other
factory: one time unit earlier), and upstream machines are filled in latest
first along each factory's sequence.  Times are then shifted so the earliest
start is zero.  Products are assembled serially in the order in which their
last job enters the buffer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .instance import Coding, Instance, check_coding
from .petri import DeadlockInfeasible


@dataclass(frozen=True)
class Schedule:
    """Start/completion times; row ``i-1`` belongs to job ``i``, entry ``q-1`` to product ``q``."""

    S: np.ndarray
    C: np.ndarray
    SA: np.ndarray
    CA: np.ndarray
    cm_max: int
    ca_max: int
    sigma: tuple[int, ...]
    anchor_shift: int
    lam: tuple[int, ...]
    mu: tuple[int, ...]


@dataclass(frozen=True)
class EvalResult:
    lambda_prime: tuple[int, ...]
    schedule: Schedule
    cm_max: int
    ca_max: int
    max_buffer_occupancy: int
    deferrals: int


def _arr(seq: Sequence[int]) -> np.ndarray:
    return np.fromiter((x - 1 for x in seq), dtype=np.int64, count=len(seq))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def backward_schedule(
    inst: Instance, lambda_prime: Sequence[int], mu: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, int]:
    """Start and completion matrices of the manufacturing stage, and CM_max.

    ``lambda_prime`` must already be deadlock-free; it may list a subset of
    the jobs, in which case the other rows stay zero.
    """
    arr = inst.arrays
    seq = _arr(lambda_prime)
    S = np.zeros((inst.u, inst.m), dtype=np.int64)
    C = np.zeros((inst.u, inst.m), dtype=np.int64)
    succ = np.full(inst.u, -1, dtype=np.int64)
    cm, _ = K.backward(seq, _arr(mu), arr.proc, S, C, succ)
    return S, C, int(cm)


def assembly_pass(
    inst: Instance, C: np.ndarray, sigma: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, int]:
    SA = np.zeros(inst.l, dtype=np.int64)
    CA = np.zeros(inst.l, dtype=np.int64)
    t = 0
    for idx, q in enumerate(sigma):
        ready = max(int(C[i - 1, -1]) for i in inst.plan[q - 1])
        start = ready if idx == 0 else max(t, ready)
        SA[q - 1] = start
        CA[q - 1] = start + inst.asm[q - 1]
        t = int(CA[q - 1])
    return SA, CA, t


def evaluate(inst: Instance, c: Coding) -> EvalResult:
    """Amend, decode and schedule a coding."""
    check_coding(inst, c)
    arr = inst.arrays
    mu0 = _arr(c.mu)
    lam, S, C, SA, CA, sigma, cm, ca, shift, moves = K.evaluate_full(
        _arr(c.lam), mu0, arr.proc, arr.asm, arr.product_of, arr.psi
    )
    if moves < 0:
        raise DeadlockInfeasible(
            f"buffer capacity {inst.psi} admits no deadlock-free order "
            f"(largest product has {int(arr.sizes.max())} jobs)"
        )
    sched = Schedule(
        S=_frozen(S),
        C=_frozen(C),
        SA=_frozen(SA),
        CA=_frozen(CA),
        cm_max=int(cm),
        ca_max=int(ca),
        sigma=tuple(int(q) + 1 for q in sigma),
        anchor_shift=int(shift),
        lam=tuple(int(j) + 1 for j in lam),
        mu=c.mu,
    )
    trace = buffer_trace(inst, sched)
    return EvalResult(
        lambda_prime=sched.lam,
        schedule=sched,
        cm_max=sched.cm_max,
        ca_max=sched.ca_max,
        max_buffer_occupancy=trace.peak,
        deferrals=int(moves),
    )


@dataclass(frozen=True)
class BufferTrace:
    series: tuple[tuple[int, int], ...]  # (time, occupancy after the event)
    peak: int
    psi: int

    @property
    def violation(self) -> bool:
        return self.peak > self.psi


def buffer_trace(inst: Instance, sched: Schedule) -> BufferTrace:
    """Occupancy of the assembly buffer over time.

    Job ``i`` sits in the buffer from its last-machine completion until its
    product starts assembly.  At equal timestamps arrivals are counted before
    departures, so a job that completes exactly when its product starts still
    takes a slot, as its entry transition does in the net.
    """
    events: list[tuple[int, int]] = []
    for i in range(1, inst.u + 1):
        q = inst.product_of[i - 1]
        events.append((int(sched.C[i - 1, -1]), 0))
        events.append((int(sched.SA[q - 1]), 1))
    events.sort()
    level = peak = 0
    series = []
    for t, kind in events:
        level += 1 if kind == 0 else -1
        peak = max(peak, level)
        series.append((t, level))
    return BufferTrace(series=tuple(series), peak=peak, psi=inst.psi)


def export_gantt(sched: Schedule, inst: Instance) -> list[tuple]:
    """Rows ``(factory, machine, job, start, end)`` then ``("A", "-", product, start, end)``."""
    rows = []
    for i in range(1, inst.u + 1):
        fac = sched.mu[i - 1]
        for k in range(1, inst.m + 1):
            rows.append((fac, k, i, int(sched.S[i - 1, k - 1]), int(sched.C[i - 1, k - 1])))
    rows.sort(key=lambda r: (r[0], r[1], r[3], r[2]))
    assembly = [("A", "-", q, int(sched.SA[q - 1]), int(sched.CA[q - 1])) for q in sched.sigma]
    return rows + assembly
