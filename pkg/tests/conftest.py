import numpy as np
import pytest

from quarterwalk.model import aloha_family, aloha_kernel, aloha_stability_example


@pytest.fixture(scope="session")
def sym_kernel():
    """Load-adaptive ALOHA model with lam=0.2, a=0.6, thresholds (2, 2)."""
    return aloha_kernel(aloha_family(0.2, 0.6))


@pytest.fixture(scope="session")
def asym_kernel():
    """Asymmetric example with saturated arrivals (0.15, 0.1)."""
    return aloha_kernel(aloha_stability_example(0.15, 0.1))


@pytest.fixture(scope="session")
def sym_oracle(sym_kernel):
    from quarterwalk.oracle import truncated_stationary

    return truncated_stationary(sym_kernel, 300)


@pytest.fixture(scope="session")
def asym_oracle(asym_kernel):
    from quarterwalk.oracle import truncated_stationary

    return truncated_stationary(asym_kernel, 300)


@pytest.fixture(scope="session")
def sym_solution(sym_kernel):
    from quarterwalk.pipeline import solve_stationary

    return solve_stationary(sym_kernel)


@pytest.fixture(scope="session")
def skew_kernel():
    """Irreducible asymmetric load-adaptive model (rates 0.15/0.08, weights 0.7/0.5)."""
    from quarterwalk.model import AlohaParams, RegionSplit

    split = RegionSplit(2, 2)
    n1, n2 = np.indices(split.shape).astype(float)
    tot = n1 + n2
    share = lambda n: np.divide(n, tot, out=np.zeros_like(n), where=tot > 0)  # noqa: E731
    l1, l2 = 0.15 * 2.0 ** -tot, 0.08 * 2.0 ** -tot
    a1, a2 = 0.7 * share(n1), 0.5 * share(n2)
    l1[2, 2], l2[2, 2], a1[2, 2], a2[2, 2] = 0.15, 0.08, 0.7, 0.5
    return aloha_kernel(AlohaParams(split, l1, l2, a1, a2))


@pytest.fixture(scope="session")
def skew_oracle(skew_kernel):
    from quarterwalk.oracle import truncated_stationary

    return truncated_stationary(skew_kernel, 300)


@pytest.fixture(scope="session")
def skew_solution(skew_kernel):
    from quarterwalk.pipeline import solve_stationary

    return solve_stationary(skew_kernel)


@pytest.fixture(scope="session")
def sym_boundary(sym_kernel):
    from quarterwalk import bvp

    return bvp.solve_boundary(sym_kernel)


def border_vector(pi, N1, N2):
    """Unknown vector (border grid, K = 0) taken from a probability grid."""
    return np.r_[np.asarray(pi)[: N1 + 1, : N2 + 1].ravel(), 0.0]


def gen_row(pi, n2, N1, x):
    """Truncated generating function sum_{n1>=N1} pi(n1, n2) x^(n1-N1)."""
    col = np.asarray(pi)[N1:, n2]
    return np.polynomial.polynomial.polyval(np.asarray(x, dtype=complex), col)


def gen_col(pi, n1, N2, y):
    row = np.asarray(pi)[n1, N2:]
    return np.polynomial.polynomial.polyval(np.asarray(y, dtype=complex), row)
