import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quarterwalk.errors import ModelError
from quarterwalk.model import (
    S0, S1, S2, S3, AlohaParams, RegionSplit, TransitionKernel, aloha_family, aloha_jump_laws,
    aloha_kernel, jump_distribution, region_of, validate,
)

prob = st.floats(0.0, 1.0, allow_nan=False)


def test_region_examples():
    sp = RegionSplit(2, 2)
    assert region_of(sp, (0, 0)) == S0
    assert region_of(sp, (2, 1)) == S1
    assert region_of(sp, (1, 5)) == S2
    assert region_of(sp, (5, 7)) == S3


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 50), st.integers(0, 50))
def test_region_total(N1, N2, n1, n2):
    r = region_of(RegionSplit(N1, N2), (n1, n2))
    want = {(False, False): S0, (True, False): S1, (False, True): S2, (True, True): S3}[(n1 >= N1, n2 >= N2)]
    assert r == want


def test_split_rejects_zero_threshold():
    with pytest.raises(ModelError):
        RegionSplit(0, 2)


def test_saturated_law_hand_values():
    # a = 0.6, lam = 0.2 for both users, worked out by hand from the product formulas
    p = aloha_jump_laws(0.2, 0.2, 0.6, 0.6)
    want = np.array([[0.0, 0.1536, 0.0384], [0.1536, 0.4096, 0.0928], [0.0384, 0.0928, 0.0208]])
    np.testing.assert_allclose(p, want, atol=1e-15)


def test_trivial_laws():
    p = aloha_jump_laws(0.0, 0.0, 0.0, 0.0)
    assert p[1, 1] == 1.0 and p.sum() == 1.0
    p = aloha_jump_laws(0.0, 0.0, 1.0, 0.0)
    assert p[0, 1] == 1.0


@given(prob, prob, prob, prob)
def test_aloha_laws_are_stochastic(l1, l2, a1, a2):
    p = aloha_jump_laws(l1, l2, a1, a2)
    assert p.min() >= 0.0
    assert abs(p.sum() - 1.0) < 1e-12
    assert p[0, 0] == 0.0  # no simultaneous departures


@given(prob, prob, st.integers(1, 4))
@settings(max_examples=30)
def test_symmetric_family_swap_invariance(lam, a, N):
    k = aloha_kernel(aloha_family(lam, a, N, N))
    s = k.swapped()
    np.testing.assert_allclose(s.table, k.table, atol=1e-15)


def test_partial_homogeneity(sym_kernel):
    k = sym_kernel
    np.testing.assert_array_equal(jump_distribution(k, (7, 1)), k.table[2, 1])
    np.testing.assert_array_equal(jump_distribution(k, (9, 30)), k.s3)
    assert abs(jump_distribution(k, (0, 13)).sum() - 1) < 1e-12


def test_aloha_params_reject_out_of_range():
    sp = RegionSplit(1, 1)
    z = np.zeros((2, 2))
    with pytest.raises(ModelError):
        AlohaParams(sp, z + 1.2, z, z, z)
    bad = z.copy()
    bad[0, 1] = 0.5  # user 1 transmits with an empty queue
    with pytest.raises(ModelError):
        AlohaParams(sp, z, z, bad, z)


def test_validate_examples(sym_kernel):
    assert validate(sym_kernel, "analytic").ok
    k = sym_kernel.with_s3(np.array([[0.1, 0.1, 0.0], [0.1, 0.5, 0.1], [0.0, 0.1, 0.0]]))
    rep = validate(k, "analytic")
    assert any("Psi(0,0)>0" in v for v in rep.violations)
    assert validate(k, "oracle").ok
    t = np.array(sym_kernel.table)
    t[1, 1, 1, 1] -= 0.1
    rep = validate(TransitionKernel(sym_kernel.split, t), "oracle")
    assert any("not stochastic" in v for v in rep.violations)


def test_validate_boundary_admissibility():
    sp = RegionSplit(1, 1)
    law = np.zeros((3, 3))
    law[0, 1] = law[2, 1] = law[1, 0] = law[1, 2] = 0.25
    k = TransitionKernel.homogeneous(sp, law)
    rep = validate(k, "analytic")
    assert any("westward" in v for v in rep.violations)
    assert any("southward" in v for v in rep.violations)
    assert validate(k, "oracle").ok


def test_validate_reducible():
    sp = RegionSplit(1, 1)
    law = np.zeros((3, 3))
    law[2, 1] = 1.0  # always moves right: the origin is never revisited
    rep = validate(TransitionKernel.homogeneous(sp, law), "oracle")
    assert any("reducible" in v for v in rep.violations)
