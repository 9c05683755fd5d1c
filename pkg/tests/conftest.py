import itertools

import numpy as np
import pytest

from foliation_lab.maps import SmoothMap, make_box

_ACCEPTANCE: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {number} [{'PASS' if ok else 'FAIL'}] {title}"
    if detail:
        line += f" :: {detail}"
    _ACCEPTANCE.append(line)
    print(line, flush=True)


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)


def random_poly_text(rng, n: int, degree: int = 3, terms: int = 6) -> str:
    """A random polynomial in x1..xn with coefficients in [-2, 2]."""
    monos = [m for d in range(degree + 1) for m in itertools.combinations_with_replacement(range(1, n + 1), d)]
    pick = rng.choice(len(monos), size=min(terms, len(monos)), replace=False)
    parts = []
    for k in sorted(pick):
        c = rng.uniform(-2, 2)
        mono = "*".join(f"x{j}" for j in monos[k]) or "1"
        parts.append(f"({c!r})*{mono}")
    return " + ".join(parts)


def random_poly_map(rng, n: int, degree: int = 3, name: str = "poly") -> SmoothMap:
    return SmoothMap.from_strings([random_poly_text(rng, n, degree) for _ in range(n)], name,
                                  make_box([(-1.5, 1.5)] * n))


@pytest.fixture
def spiral2():
    return SmoothMap.from_strings(["exp(x1)*cos(x2)", "exp(x1)*sin(x2)"], "spiral2", make_box([(-1, 1), (-1, 7)]))


@pytest.fixture
def spiral3():
    return SmoothMap.from_strings(["exp(x1)*cos(x2)", "exp(x1)*sin(x2)", "x3"], "spiral3",
                                  make_box([(-2, 2), (-7, 7), (-2, 2)]))


@pytest.fixture
def braun():
    return SmoothMap.from_strings(["x1*(1 + x1*x2)", "x2"], "braun", make_box([(-2, 2), (-2, 2)]))


def fd_gradient(fn, x, h=1e-6):
    """Central differences of a scalar function."""
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g
