import mpmath
import numpy as np
import pytest

from rramsec import trng

# Lines recorded by the acceptance tests, echoed in the terminal summary so
# they appear in plain `pytest -v` output without `-s`.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def binary_expansion(constant, n_bits):
    """First ``n_bits`` binary digits of a constant in [2, 4), integer part included."""
    mpmath.mp.prec = n_bits + 64
    value = int(mpmath.floor(constant() * mpmath.mpf(2) ** (n_bits - 2)))
    digits = bin(value)[2:]
    assert len(digits) == n_bits
    return np.frombuffer(digits.encode("ascii"), dtype=np.uint8) - ord("0")


@pytest.fixture(scope="session")
def e_bits():
    """One million binary digits of e, the reference suite's long test vector."""
    return binary_expansion(lambda: mpmath.e, 1_000_000)


@pytest.fixture(scope="session")
def pi_bits():
    """100 binary digits of pi, the reference suite's short test vector."""
    return binary_expansion(lambda: mpmath.pi, 100)


@pytest.fixture(scope="session")
def half_pulse():
    return trng.find_half_pulse(tol=1e-4)
