import dataclasses

import numpy as np
import pytest

from quarterwalk import pipeline as pl
from quarterwalk.errors import NotErgodic, UnsupportedCase
from quarterwalk.kernel import contour, kernel_coeffs
from quarterwalk.model import RegionSplit, TransitionKernel, aloha_family, aloha_kernel

from conftest import border_vector


def _u(oracle, k):
    return border_vector(oracle.pi_hat, k.N1, k.N2)


def test_rows_vanish_at_oracle(sym_kernel, sym_oracle, sym_boundary):
    ev, _ = sym_boundary
    u = _u(sym_oracle, sym_kernel)
    bal = [r.form.evaluate(u) for r in pl.balance_rows(sym_kernel, ev.layout)]
    assert len(bal) == 4 and np.abs(bal).max() < 1e-6
    drows, (rx, ry) = pl.derivative_rows(sym_kernel, ev)
    assert 0 < rx <= 0.4 and 0 < ry <= 0.4
    assert np.abs([r.form.evaluate(u) for r in drows]).max() < 1e-5
    row, g11, _ = pl.normalization_row(sym_kernel, ev)
    assert abs(row.form.evaluate(u)) < 1e-4
    corner = sym_oracle.pi_hat[2:, 2:].sum()
    assert g11.evaluate(u).real == pytest.approx(corner, abs=1e-8)


def test_solution_matches_oracle(sym_solution, sym_oracle):
    pi = sym_oracle.pi_hat
    W = sym_solution.config.window
    grid = sym_solution.grid
    n1, n2 = np.indices(grid.shape)
    assert np.abs(grid - pi[: W + 1, : W + 1]).max() < 1e-10
    assert np.abs(grid - pi[: W + 1, : W + 1])[n1 + n2 <= 10].max() < 1e-10
    assert sym_solution.chi == -4 and abs(sym_solution.K) < 1e-12
    assert sym_solution.residual < 1e-8


def test_symmetric_model_is_symmetric(sym_solution):
    b = sym_solution.border
    np.testing.assert_allclose(b, b.T, atol=1e-12)
    np.testing.assert_allclose(sym_solution.grid, sym_solution.grid.T, atol=1e-12)


def test_mass_and_metrics(sym_solution, sym_oracle):
    m = pl.metrics(sym_solution)
    assert abs(m.mass_in_window - 1) < 1e-6 and m.tail_bound < 1e-8
    e1, e2 = sym_oracle.mean_queues()
    assert m.EQ1 == pytest.approx(e1, rel=1e-3) and m.EQ2 == pytest.approx(e2, rel=1e-3)
    assert m.total == pytest.approx(0.67633484, abs=1e-7)


def test_evaluate_pi(sym_solution, sym_oracle):
    pi = sym_oracle.pi_hat
    for n1, n2 in [(0, 0), (2, 1), (5, 0), (7, 9), (80, 0)]:
        assert pl.evaluate_pi(sym_solution, n1, n2) == pytest.approx(pi[n1, n2], abs=1e-12)
    with pytest.raises(ValueError):
        pl.evaluate_pi(sym_solution, -1, 0)
    # the bottom row sums to g0(1)
    row = sum(pl.evaluate_pi(sym_solution, n, 0) for n in range(2, 61))
    assert row == pytest.approx(sym_solution.g0(np.array([1.0]))[0].real, abs=1e-10)


def test_diagnostics(sym_solution):
    assert pl.boundary_residual(sym_solution) < 1e-10
    rng = np.random.default_rng(3)
    x = 0.5 * np.exp(2j * np.pi * rng.random(20))
    y = 0.5 * np.exp(2j * np.pi * rng.random(20))
    assert pl.functional_equation_residual(sym_solution, x, y).max() < 1e-12
    rich, g11 = pl.normalization_crosscheck(sym_solution)
    assert rich == pytest.approx(g11, abs=1e-5)


def test_g0_real_nonnegative_on_axis(sym_solution, sym_kernel):
    beta0 = contour(kernel_coeffs(sym_kernel), "M", 256).extreme[0]
    x = np.linspace(0, min(1.0, beta0), 40, endpoint=False)
    g = sym_solution.g0(x)
    assert np.abs(g.imag).max() < 1e-12
    assert g.real.min() >= 0
    assert np.all(np.diff(g.real) > 0)


def test_asymmetric_solution(skew_solution, skew_oracle):
    pi = skew_oracle.pi_hat
    W = skew_solution.config.window
    assert np.abs(skew_solution.grid - pi[: W + 1, : W + 1]).max() < 1e-10
    assert not np.allclose(skew_solution.border, skew_solution.border.T)


@pytest.mark.parametrize("change", [{"contour_points": 1024}, {"derivative_radius_cap": 0.3}])
def test_numerical_settings_invariance(sym_kernel, sym_solution, change):
    cfg = dataclasses.replace(pl.SolveConfig(), **change)
    other = pl.solve_stationary(sym_kernel, cfg)
    assert np.abs(other.border - sym_solution.border).max() < 1e-8


def test_rejections():
    with pytest.raises(NotErgodic):
        pl.solve_stationary(aloha_kernel(aloha_family(0.45, 0.3)))
    p = np.full((3, 3), 1 / 9)
    with pytest.raises(UnsupportedCase):
        pl.solve_stationary(TransitionKernel.homogeneous(RegionSplit(2, 2), p))


def test_low_load_uses_analyticity_rows():
    # here B(X0(y), y) vanishes inside the unit disc and the winding drops to 1
    k = aloha_kernel(aloha_family(0.02, 0.6))
    sol = pl.solve_stationary(k)
    assert sol.chi == -2
    from quarterwalk.oracle import truncated_stationary

    pi = truncated_stationary(k, 200).pi_hat
    assert np.abs(sol.grid - pi[:61, :61]).max() < 1e-12
    rows, r = pl.analyticity_rows(sol.evals)
    assert len(rows) == 1 and r < 1
    assert abs(rows[0].form.evaluate(sol.u)) < 1e-12
