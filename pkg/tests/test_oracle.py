import numpy as np
import pytest

from quarterwalk.errors import ModelError
from quarterwalk.model import RegionSplit, TransitionKernel
from quarterwalk.oracle import compare, simulate, transition_matrix, truncated_stationary


def test_transition_matrix_stochastic(sym_kernel):
    P = transition_matrix(sym_kernel, 30)
    np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-14)


def test_truncated_balance_and_symmetry(sym_oracle):
    assert sym_oracle.residual < 1e-12
    pi = sym_oracle.pi_hat
    assert abs(pi.sum() - 1) < 1e-12
    np.testing.assert_allclose(pi, pi.T, atol=1e-14)
    assert sym_oracle.tail_mass(100) < 1e-12  # roundoff floor of the direct solve


def test_random_walk_1d_geometric():
    # reflected walk on one axis only: stationary law is geometric with ratio p/q
    law = np.zeros((3, 3))
    law[2, 1], law[0, 1], law[1, 1] = 0.2, 0.4, 0.4
    k = TransitionKernel.homogeneous(RegionSplit(1, 1), law)
    sol = truncated_stationary(k, 60)
    m = sol.pi_hat[:, 0]
    np.testing.assert_allclose(m[:20], 0.5 * 0.5 ** np.arange(20), atol=1e-12)


def test_truncation_too_small(sym_kernel):
    with pytest.raises(ModelError):
        truncated_stationary(sym_kernel, 2)


def test_simulation_reproducible(sym_kernel):
    a = simulate(sym_kernel, 20000, seed=7)
    b = simulate(sym_kernel, 20000, seed=7)
    np.testing.assert_array_equal(a.counts, b.counts)
    assert a.final_state == b.final_state
    c = simulate(sym_kernel, 20000, seed=8)
    assert not np.array_equal(a.counts, c.counts)


def test_simulation_matches_truncated_solve(sym_kernel, sym_oracle):
    res = simulate(sym_kernel, 10**6, seed=42)
    emp = res.empirical
    # binomial standard error at the largest state probability is ~5e-4; correlations inflate it
    assert compare(emp, sym_oracle.pi_hat, 6).max_abs < 0.01
    assert abs(res.drift[2]) < 5 * res.drift_se[2] + 1e-3


def test_compare_properties():
    rng = np.random.default_rng(3)
    a, b = rng.random((8, 8)), rng.random((8, 8))
    r1, r2 = compare(a, b, 5), compare(b, a, 5)
    assert r1.max_abs == r2.max_abs and r1.total_variation == r2.total_variation
    assert compare(a, a, 5).max_abs == 0.0
    with pytest.raises(ValueError):
        compare(a, b, 9)
