from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quarterwalk import bvp
from quarterwalk.kernel import branch_X0, contour, kernel_coeffs

from conftest import border_vector, gen_col, gen_row


def _disc(seed, n, r=0.95):
    rng = np.random.default_rng(seed)
    return r * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))


@given(st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=30)
def test_analytic_coeffs_reproduce_real_part(a, b):
    t = 2 * np.pi * np.arange(64) / 64
    f = 1 + a * np.cos(t) + b * np.sin(3 * t)
    c = bvp.analytic_coeffs(f)
    val = bvp.series_eval(c, np.exp(1j * t))
    np.testing.assert_allclose(val.real, f, atol=1e-12)
    assert abs(c[0].imag) < 1e-14


def test_theodorsen_on_circle():
    r = 0.7
    stub = SimpleNamespace(phi=np.zeros(128), radius=lambda th: np.full(np.shape(th), r))
    cm = bvp.theodorsen(stub, tol=1e-13)
    z = _disc(0, 20, 1.0)
    np.testing.assert_allclose(cm.forward(z), r * z, atol=1e-12)


@pytest.fixture(scope="module")
def sym_maps(sym_kernel):
    kp = kernel_coeffs(sym_kernel)
    return kp, bvp.theodorsen(contour(kp, "M", 512)), bvp.theodorsen(contour(kp, "M", 1024))


def test_conformal_map_properties(sym_maps):
    kp, cm, cm2 = sym_maps
    z = _disc(1, 50)
    assert np.abs(cm.forward(z) - cm2.forward(z)).max() < 1e-7
    assert cm.forward(0.0) == 0
    np.testing.assert_allclose(cm.forward(np.conj(z)), np.conj(cm.forward(z)), atol=1e-13)
    x = cm.forward(z)
    assert np.abs(cm.inverse(x) - z).max() < 1e-8
    # boundary goes onto the contour
    xb, y = cm.boundary()
    # on the slit both X branches are conjugate, so compare real part and modulus
    xs = branch_X0(kp, y.astype(complex))
    np.testing.assert_allclose(xs.real, xb.real, atol=1e-9)
    np.testing.assert_allclose(np.abs(xs), np.abs(xb), atol=1e-9)
    np.testing.assert_allclose(np.abs(cm.forward(np.exp(1j * cm.phi))), np.abs(xb), atol=1e-8)


def test_rh_data_symmetry(sym_kernel, sym_maps):
    kp, cm, _ = sym_maps
    prob = bvp.build_rh(sym_kernel, kp, cm)
    rev = (-np.arange(cm.n)) % cm.n
    np.testing.assert_allclose(prob.U[rev], np.conj(prob.U), atol=1e-12)
    zero = np.zeros(prob.w.n_unknowns)
    assert np.abs(prob.w.evaluate(zero)).max() < 1e-14


def test_index_is_grid_invariant(sym_kernel):
    kp = kernel_coeffs(sym_kernel)
    chis = set()
    for n in (512, 768):
        c = contour(kp, "M", n)
        cm = bvp.theodorsen(c)
        chis.add(bvp.build_rh(sym_kernel, kp, cm, bvp.detect_poles(sym_kernel, kp, c)).chi)
    assert chis == {-4}


def test_reference_regression(sym_boundary):
    ev, rep = sym_boundary
    assert ev.chi == -4 and ev.winding == 2
    assert len(ev.poles) == 0
    assert rep.converged and rep.changes[-1] < 1e-12


def test_boundary_functions_match_oracle(sym_boundary, sym_oracle):
    ev, _ = sym_boundary
    pi = sym_oracle.pi_hat
    u = border_vector(pi, 2, 2)
    x = ev.cmap.forward(_disc(2, 30, 0.9))
    np.testing.assert_allclose(ev.g0(x).evaluate(u), gen_row(pi, 0, 2, x), atol=1e-10)
    assert np.abs(ev.constraints.evaluate(u)).max() < 1e-10
    assert ev.h0(0.5).evaluate(u) == pytest.approx(gen_col(pi, 0, 2, 0.5), abs=1e-5)
    y = 0.07 * np.exp(2j * np.pi * np.arange(16) / 16)
    np.testing.assert_allclose(ev.h0(y).evaluate(u), gen_col(pi, 0, 2, y), atol=1e-10)
