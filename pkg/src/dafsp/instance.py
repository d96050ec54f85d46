"""Problem data, solution coding and decoding for the distributed assembly flowshop.

Ids are 1-based everywhere in this module (jobs ``1..u``, factories ``1..f``,
products ``1..l``), matching instance and coding files.  The numeric kernels
work on 0-based arrays derived from :class:`Instance` via ``Instance.arrays``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


class InstanceError(ValueError):
    """Malformed or inconsistent instance data."""


class CodingError(ValueError):
    """A coding that does not fit its instance."""


@dataclass(frozen=True)
class Instance:
    """A DAFSP instance with a limited assembly buffer.

    ``proc[i-1][k-1]`` is the processing time of job ``i`` on machine ``k``,
    ``asm[q-1]`` the assembly time of product ``q`` and ``plan[q-1]`` the
    sorted job ids that product ``q`` is built from.
    """

    u: int
    f: int
    m: int
    l: int
    proc: tuple[tuple[int, ...], ...]
    asm: tuple[int, ...]
    plan: tuple[tuple[int, ...], ...]
    psi: int

    def __post_init__(self) -> None:
        _validate(self)

    @cached_property
    def product_of(self) -> tuple[int, ...]:
        """Product id of every job, indexed by ``job - 1``."""
        owner = [0] * self.u
        for q, jobs in enumerate(self.plan, start=1):
            for i in jobs:
                owner[i - 1] = q
        return tuple(owner)

    @cached_property
    def arrays(self) -> "InstanceArrays":
        """0-based int64 arrays for the compiled kernels."""
        return _arrays(self)


@dataclass(frozen=True)
class InstanceArrays:
    """0-based contiguous views used by the compiled kernels."""

    proc: np.ndarray  # (u, m) int64
    asm: np.ndarray  # (l,) int64
    product_of: np.ndarray  # (u,) int64, 0-based product index
    sizes: np.ndarray  # (l,) int64, |AP_q|
    psi: int
    f: int


def _arrays(inst: Instance) -> InstanceArrays:
    arr = InstanceArrays(
        proc=np.ascontiguousarray(np.array(inst.proc, dtype=np.int64).reshape(inst.u, inst.m)),
        asm=np.array(inst.asm, dtype=np.int64),
        product_of=np.array(inst.product_of, dtype=np.int64) - 1,
        sizes=np.array([len(g) for g in inst.plan], dtype=np.int64),
        psi=inst.psi,
        f=inst.f,
    )
    for a in (arr.proc, arr.asm, arr.product_of, arr.sizes):
        a.setflags(write=False)
    return arr


def _validate(inst: Instance) -> None:
    for name in ("u", "f", "m", "l"):
        v = getattr(inst, name)
        if not isinstance(v, int) or v < 1:
            raise InstanceError(f"{name} must be a positive integer, got {v!r}")
    if not isinstance(inst.psi, int) or inst.psi < 1:
        raise InstanceError(f"buffer capacity must be >= 1, got {inst.psi!r}")
    if len(inst.proc) != inst.u:
        raise InstanceError(f"processing has {len(inst.proc)} rows, expected {inst.u}")
    for i, row in enumerate(inst.proc, start=1):
        if len(row) != inst.m:
            raise InstanceError(f"processing row of job {i} has {len(row)} entries, expected {inst.m}")
        for k, p in enumerate(row, start=1):
            if not isinstance(p, int) or p < 1:
                raise InstanceError(f"processing time of job {i} on machine {k} must be >= 1, got {p!r}")
    if len(inst.asm) != inst.l:
        raise InstanceError(f"assembly has {len(inst.asm)} entries, expected {inst.l}")
    for q, p in enumerate(inst.asm, start=1):
        if not isinstance(p, int) or p < 1:
            raise InstanceError(f"assembly time of product {q} must be >= 1, got {p!r}")
    if len(inst.plan) != inst.l:
        raise InstanceError(f"plan has {len(inst.plan)} products, expected {inst.l}")
    seen: dict[int, int] = {}
    for q, jobs in enumerate(inst.plan, start=1):
        if not jobs:
            raise InstanceError(f"product {q} has no jobs")
        for i in jobs:
            if not isinstance(i, int) or not 1 <= i <= inst.u:
                raise InstanceError(f"product {q} lists unknown job {i!r}")
            if i in seen:
                raise InstanceError(f"job {i} appears in products {seen[i]} and {q}")
            seen[i] = q
    missing = sorted(set(range(1, inst.u + 1)) - seen.keys())
    if missing:
        raise InstanceError(f"jobs {missing} belong to no product")


def make_instance(
    proc: Sequence[Sequence[int]],
    asm: Sequence[int],
    plan: Sequence[Sequence[int]],
    psi: int,
    f: int,
) -> Instance:
    """Build an instance from plain sequences; job sets in ``plan`` are sorted."""
    proc_t = tuple(tuple(int(p) for p in row) for row in proc)
    inst = Instance(
        u=len(proc_t),
        f=int(f),
        m=len(proc_t[0]) if proc_t else 0,
        l=len(plan),
        proc=proc_t,
        asm=tuple(int(p) for p in asm),
        plan=tuple(tuple(sorted(int(i) for i in jobs)) for jobs in plan),
        psi=int(psi),
    )
    biggest = max(len(g) for g in inst.plan)
    if inst.psi < biggest:
        warnings.warn(
            f"buffer capacity {inst.psi} is below the largest product size {biggest}; "
            "no deadlock-free job order exists",
            stacklevel=2,
        )
    return inst


_KEYS = ("jobs", "factories", "machines", "products", "processing", "assembly", "plan", "buffer")


def load_instance(text: str) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"instance is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InstanceError("instance must be a JSON object")
    missing = [k for k in _KEYS if k not in data]
    if missing:
        raise InstanceError(f"instance is missing keys {missing}")
    _require_ints(data)
    try:
        inst = make_instance(
            proc=data["processing"],
            asm=data["assembly"],
            plan=data["plan"],
            psi=data["buffer"],
            f=data["factories"],
        )
    except (TypeError, IndexError) as exc:
        raise InstanceError(f"malformed instance field: {exc}") from exc
    for key, value in (("jobs", inst.u), ("machines", inst.m), ("products", inst.l)):
        if data[key] != value:
            raise InstanceError(f"{key}={data[key]!r} disagrees with the data ({value})")
    return inst


def _require_ints(data: dict) -> None:
    def is_int(v) -> bool:
        return isinstance(v, int) and not isinstance(v, bool)

    for key in ("jobs", "factories", "machines", "products", "buffer"):
        if not is_int(data[key]):
            raise InstanceError(f"{key} must be an integer, got {data[key]!r}")
    if not isinstance(data["assembly"], list) or not all(is_int(v) for v in data["assembly"]):
        raise InstanceError("assembly must be a list of integers")
    for key in ("processing", "plan"):
        rows = data[key]
        if not isinstance(rows, list) or not all(
            isinstance(r, list) and all(is_int(v) for v in r) for r in rows
        ):
            raise InstanceError(f"{key} must be a list of integer lists")
    if not data["processing"]:
        raise InstanceError("processing is empty")


def dump_instance(inst: Instance) -> str:
    """Canonical text form; ``dump_instance(load_instance(s)) == s`` for canonical ``s``."""

    def rows(matrix) -> str:
        return "[" + ", ".join(json.dumps(list(r)) for r in matrix) + "]"

    lines = [
        f'  "jobs": {inst.u}',
        f'  "factories": {inst.f}',
        f'  "machines": {inst.m}',
        f'  "products": {inst.l}',
        f'  "processing": {rows(inst.proc)}',
        f'  "assembly": {json.dumps(list(inst.asm))}',
        f'  "plan": {rows(inst.plan)}',
        f'  "buffer": {inst.psi}',
    ]
    return "{\n" + ",\n".join(lines) + "\n}\n"


@dataclass(frozen=True)
class Coding:
    """An individual ``{lambda, mu}``: job entry order and job-indexed factory map."""

    lam: tuple[int, ...]
    mu: tuple[int, ...]

    @classmethod
    def of(cls, lam: Sequence[int], mu: Sequence[int]) -> "Coding":
        return cls(tuple(int(i) for i in lam), tuple(int(c) for c in mu))


def validate_coding(inst: Instance, c: Coding) -> list[str]:
    problems: list[str] = []
    if len(c.lam) != inst.u:
        problems.append(f"lambda has {len(c.lam)} entries, expected {inst.u}")
    counts: dict[int, int] = {}
    for i in c.lam:
        counts[i] = counts.get(i, 0) + 1
    for i in sorted(counts):
        if not 1 <= i <= inst.u:
            problems.append(f"lambda contains unknown job {i}")
        elif counts[i] > 1:
            problems.append(f"lambda lists job {i} {counts[i]} times")
    for i in range(1, inst.u + 1):
        if i not in counts:
            problems.append(f"lambda is missing job {i}")
    if len(c.mu) != inst.u:
        problems.append(f"mu has {len(c.mu)} entries, expected {inst.u}")
    for i, fac in enumerate(c.mu, start=1):
        if not 1 <= fac <= inst.f:
            problems.append(f"mu assigns job {i} to factory {fac}, outside 1..{inst.f}")
    return problems


def check_coding(inst: Instance, c: Coding) -> None:
    problems = validate_coding(inst, c)
    if problems:
        raise CodingError("; ".join(problems))


def load_coding(text: str) -> Coding:
    try:
        data = json.loads(text)
        return Coding.of(data["lambda"], data["mu"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CodingError(f"malformed coding file: {exc}") from exc


def dump_coding(c: Coding) -> str:
    return json.dumps({"lambda": list(c.lam), "mu": list(c.mu)}) + "\n"


@dataclass(frozen=True)
class Solution:
    """Per-factory job sequences and the product assembly order."""

    pi: tuple[tuple[int, ...], ...]
    sigma: tuple[int, ...]


def product_order(inst: Instance, lam: Sequence[int]) -> tuple[int, ...]:
    """Products sorted by the position in ``lam`` of their last-entering job."""
    last = [0] * inst.l
    for pos, i in enumerate(lam):
        last[inst.product_of[i - 1] - 1] = pos
    return tuple(sorted(range(1, inst.l + 1), key=lambda q: last[q - 1]))


def decode(inst: Instance, c: Coding) -> Solution:
    check_coding(inst, c)
    pi: list[list[int]] = [[] for _ in range(inst.f)]
    for i in c.lam:
        pi[c.mu[i - 1] - 1].append(i)
    return Solution(pi=tuple(tuple(seq) for seq in pi), sigma=product_order(inst, c.lam))


@dataclass(frozen=True)
class JobTotals:
    s: tuple[int, ...]
    sp: tuple[int, ...]


def totals(inst: Instance) -> JobTotals:
    s = tuple(sum(row) for row in inst.proc)
    sp = tuple(sum(s[i - 1] for i in jobs) for jobs in inst.plan)
    return JobTotals(s=s, sp=sp)
