from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import settings

from pmicert.measures import MeasureSpec
from pmicert.polyalg import Poly, PolyMatrix

settings.register_profile("pmicert", max_examples=40, deadline=None)
settings.load_profile("pmicert")

DATA = Path(__file__).parent / "data"


def x(i: int, n: int, m: int = 0) -> Poly:
    return Poly.x(i, n, m)


def scalar(p: Poly) -> PolyMatrix:
    return PolyMatrix.scalar(p)


def unit_interval_constraint(m: int = 0) -> PolyMatrix:
    """``1 - x^2`` in one x variable (and ``m`` unused y variables)."""
    t = Poly.x(0, 1, m)
    return PolyMatrix.scalar(1 - t ** 2)


def two_by_two_target() -> PolyMatrix:
    t = Poly.x(0, 1)
    return PolyMatrix([[3 - t ** 2, t], [t, 3 - t ** 2]])


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def box_probability() -> MeasureSpec:
    return MeasureSpec.box([Fraction(-1)], [Fraction(1)])


# -- acceptance summary ------------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str, seconds: float) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail}; {seconds:.2f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
