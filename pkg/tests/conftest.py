import random
import warnings

import pytest

from dafsp.instance import Instance, make_instance

EX_PROC = [[5, 3, 6], [4, 3, 5], [3, 3, 4], [6, 4, 6], [4, 6, 4]]
EX_ASM = [4, 5]
EX_PLAN = [[1, 3], [2, 4, 5]]


def example_instance(psi: int = 3) -> Instance:
    """Five jobs, two factories, three machines, two products."""
    return make_instance(EX_PROC, EX_ASM, EX_PLAN, psi=psi, f=2)


@pytest.fixture
def ex6() -> Instance:
    return example_instance()


def random_instance(rng: random.Random, u_max: int = 8, f_max: int = 3, m_max: int = 4,
                    feasible: bool = True, u_min: int = 1) -> Instance:
    """Small random instance; with ``feasible`` the buffer fits the largest product."""
    u = rng.randint(u_min, u_max)
    l = rng.randint(1, u)
    f = rng.randint(1, f_max)
    m = rng.randint(1, m_max)
    owner = list(range(l)) + [rng.randrange(l) for _ in range(u - l)]
    rng.shuffle(owner)
    plan = [[i + 1 for i in range(u) if owner[i] == q] for q in range(l)]
    biggest = max(len(p) for p in plan)
    psi = rng.randint(biggest, u) if feasible else rng.randint(1, u)
    proc = [[rng.randint(1, 20) for _ in range(m)] for _ in range(u)]
    asm = [rng.randint(1, 10) for _ in range(l)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return make_instance(proc, asm, plan, psi=psi, f=f)


# acceptance criteria report one line each; printed at the end of the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
