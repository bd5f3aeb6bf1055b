import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capcmk import (
    ConeViolation,
    F_and_grad,
    SymEndo,
    assert_gamma_k,
    contract,
    in_gamma_k,
    newton_maclaurin_check,
    polarize_qk,
    sigma_k,
    sigma_k_grad,
)

finite = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)
positive = st.floats(min_value=0.2, max_value=3.0, allow_nan=False)


def random_endo(rng, size=6):
    return SymEndo(
        rng.uniform(-2.0, 2.0, size), rng.uniform(-2.0, 2.0, size), rng.uniform(-2.0, 2.0, size)
    )


def random_spd_endo(rng, size=6):
    """Rotated diagonal with eigenvalues in [0.2, 2], so inside Gamma_2."""
    l1 = rng.uniform(0.2, 2.0, size)
    l2 = rng.uniform(0.2, 2.0, size)
    c, s = np.cos(ang := rng.uniform(0.0, math.pi, size)), np.sin(ang)
    return SymEndo(c**2 * l1 + s**2 * l2, c * s * (l1 - l2), s**2 * l1 + c**2 * l2)


@given(a11=finite, a12=finite, a22=finite)
@settings(derandomize=True, max_examples=60)
def test_sigma_closed_forms(a11, a12, a22):
    a = SymEndo(np.array([a11]), np.array([a12]), np.array([a22]))
    assert sigma_k(a, 0)[0] == 1.0
    assert sigma_k(a, 1)[0] == pytest.approx(a11 + a22)
    assert sigma_k(a, 2)[0] == pytest.approx(a11 * a22 - a12 * a12)
    assert sigma_k(a, 3)[0] == 0.0


@given(a11=finite, a12=finite, a22=finite)
@settings(derandomize=True, max_examples=60)
def test_eigenvalues_match_dense_solver(a11, a12, a22):
    a = SymEndo(np.array([a11]), np.array([a12]), np.array([a22]))
    lo, hi = a.eigenvalues
    ref = np.linalg.eigvalsh(np.array([[a11, a12], [a12, a22]]))
    assert lo[0] == pytest.approx(ref[0], abs=1e-12)
    assert hi[0] == pytest.approx(ref[1], abs=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_homogeneity_contraction(k):
    # sum_ij sigma_k^{ij} a_ij = k sigma_k(A), an exact Euler identity
    a = random_endo(np.random.default_rng(0), size=200)
    lhs = contract(sigma_k_grad(a, k), a)
    rhs = k * sigma_k(a, k)
    scale = np.maximum(1.0, np.abs(rhs))
    assert np.max(np.abs(lhs - rhs) / scale) < 1e-12


@pytest.mark.parametrize("k", [1, 2])
def test_sigma_grad_matches_finite_differences(k):
    rng = np.random.default_rng(1)
    a = random_endo(rng, size=4)
    grad = sigma_k_grad(a, k)
    eps = 1e-6
    for comp, factor in (("a11", 1.0), ("a12", 2.0), ("a22", 1.0)):
        # off-diagonal entries move in pairs, hence the factor 2
        bump = {n: getattr(a, n).copy() for n in ("a11", "a12", "a22")}
        bump[comp] = bump[comp] + eps
        up = sigma_k(SymEndo(**bump), k)
        bump[comp] = bump[comp] - 2.0 * eps
        dn = sigma_k(SymEndo(**bump), k)
        fd = (up - dn) / (2.0 * eps)
        assert np.max(np.abs(fd - factor * getattr(grad, comp))) < 1e-7


def test_sigma_grad_rejects_unsupported_order():
    a = SymEndo.identity((2,))
    with pytest.raises(ValueError):
        sigma_k_grad(a, 3)


def test_identity_and_diagonal_constructors():
    i = SymEndo.identity((3,))
    assert np.all(i.a11 == 1.0) and np.all(i.a12 == 0.0) and np.all(i.a22 == 1.0)
    d = SymEndo.diagonal(np.array([2.0]), np.array([5.0]))
    lo, hi = d.eigenvalues
    assert lo[0] == 2.0 and hi[0] == 5.0


def test_endo_algebra_matches_componentwise():
    rng = np.random.default_rng(2)
    a, b = random_endo(rng), random_endo(rng)
    s = a + b
    assert np.allclose(s.a11, a.a11 + b.a11)
    m = 2.5 * a
    assert np.allclose(m.a12, 2.5 * a.a12)


@pytest.mark.parametrize("k", [1, 2])
def test_polarization_diagonal_normalization(k):
    # Q_k(A, ..., A) = sigma_k(A) / C(n, k)
    a = random_endo(np.random.default_rng(3), size=50)
    got = polarize_qk([a] * k, n=2)
    want = sigma_k(a, k) / math.comb(2, k)
    assert np.max(np.abs(got - want)) < 1e-12 * max(1.0, float(np.max(np.abs(want))))


def test_polarization_is_symmetric_and_multilinear():
    rng = np.random.default_rng(4)
    a, b, c = random_endo(rng), random_endo(rng), random_endo(rng)
    ab = polarize_qk([a, b], n=2)
    ba = polarize_qk([b, a], n=2)
    assert np.max(np.abs(ab - ba)) < 1e-12
    lin = polarize_qk([2.0 * a + 0.5 * c, b], n=2)
    parts = 2.0 * polarize_qk([a, b], n=2) + 0.5 * polarize_qk([c, b], n=2)
    assert np.max(np.abs(lin - parts)) < 1e-12


def test_polarization_rejects_empty_argument_list():
    with pytest.raises(ValueError):
        polarize_qk([], n=2)


def test_gamma_cone_membership_and_violation():
    inside = SymEndo.diagonal(np.array([1.0]), np.array([2.0]))
    outside = SymEndo.diagonal(np.array([1.0]), np.array([-2.0]))
    assert bool(in_gamma_k(inside, 2)[0])
    assert not bool(in_gamma_k(outside, 1)[0])
    assert_gamma_k(inside, 2)
    with pytest.raises(ConeViolation) as err:
        assert_gamma_k(outside, 2)
    assert err.value.j == 1


def test_operator_f_is_one_homogeneous_and_cone_guarded():
    a = random_spd_endo(np.random.default_rng(5))
    f, grad = F_and_grad(a, 2)
    assert np.max(np.abs(contract(grad, a) - f)) < 1e-12
    assert np.max(np.abs(f - np.sqrt(sigma_k(a, 2)))) < 1e-12
    with pytest.raises(ConeViolation):
        F_and_grad(SymEndo.diagonal(np.array([1.0]), np.array([-1.0])), 2)


@given(t=st.floats(min_value=0.0, max_value=1.0), seed=st.integers(min_value=0, max_value=50))
@settings(derandomize=True, max_examples=40)
def test_operator_f_is_concave_on_the_cone(t, seed):
    rng = np.random.default_rng(seed)
    a = random_spd_endo(rng)
    b = random_spd_endo(rng)
    mix = SymEndo(
        t * a.a11 + (1 - t) * b.a11,
        t * a.a12 + (1 - t) * b.a12,
        t * a.a22 + (1 - t) * b.a22,
    )
    fa, _ = F_and_grad(a, 2)
    fb, _ = F_and_grad(b, 2)
    fm, _ = F_and_grad(mix, 2)
    assert np.min(fm - (t * fa + (1 - t) * fb)) > -1e-12


def test_maclaurin_chain_on_the_cone():
    ok, margin = newton_maclaurin_check(random_spd_endo(np.random.default_rng(6), 100), 2)
    assert ok and margin >= 0.0
    vac_ok, vac_margin = newton_maclaurin_check(SymEndo.identity((3,)), 1)
    assert vac_ok and vac_margin == math.inf
