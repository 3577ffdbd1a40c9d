import numpy as np
import pytest
from hypothesis import strategies as st

from rmckf.bench import builtin_problem

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_spd(rng, n, floor=0.5):
    A = rng.standard_normal((n, n))
    return A @ A.T + floor * np.eye(n)


@st.composite
def spd_matrices(draw, n=None, max_n=4):
    n = n or draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    scale = draw(st.floats(0.1, 10.0))
    return scale * random_spd(np.random.default_rng(seed), n)


@pytest.fixture(scope="session")
def problem1():
    return builtin_problem("problem1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
