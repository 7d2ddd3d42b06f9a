from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kp2lab.lattice import (SQUARE, DomainError, DyadicShell, FreqNode, TorusSpec,
                            anisotropic_rescale, dyadic_shell, galilean_phase_change,
                            galilean_shift, omega, omega_continuous, omega_exact,
                            physical_node, resonance, resonance_array, resonance_exact,
                            resonance_lower_bound_check)

nonzero = st.integers(-2 ** 10, 2 ** 10).filter(lambda v: v != 0)
etas = st.integers(-2 ** 20, 2 ** 20)


def test_omega_examples():
    assert omega(FreqNode(1, 0)) == 1
    assert omega(FreqNode(2, 2)) == 6
    assert omega(FreqNode(2, 8)) == -24


def test_omega_domain():
    with pytest.raises(DomainError):
        omega(FreqNode(0, 3))
    with pytest.raises(DomainError):
        physical_node(0, 1)
    assert not FreqNode(0, 1).physical


def test_omega_irrational_torus_rescales_eta():
    torus = TorusSpec(Fraction(3, 4))
    # eta/gamma = 4 at eta = 3
    assert omega_exact(2, 3, torus) == 8 - Fraction(16, 2)
    assert omega(FreqNode(2, 3), torus) == 0.0


@pytest.mark.parametrize("g", [Fraction(1, 2), Fraction(0), Fraction(3, 2)])
def test_torus_rejects_gamma(g):
    with pytest.raises(ValueError):
        TorusSpec(g)


def test_resonance_examples():
    assert resonance(FreqNode(1, 0), FreqNode(1, 0)) == 6
    assert resonance(FreqNode(1, 1), FreqNode(1, -1)) == 8
    diff = omega(FreqNode(2, 0)) - omega(FreqNode(1, 1)) - omega(FreqNode(1, -1))
    assert diff == 8


def test_resonance_domain():
    for a, b in [((0, 1), (1, 0)), ((1, 0), (0, 2)), ((2, 0), (-2, 5))]:
        with pytest.raises(DomainError):
            resonance(FreqNode(*a), FreqNode(*b))


def test_lower_bound_examples():
    assert resonance_lower_bound_check(FreqNode(1, 0), FreqNode(1, 0)) == (6, 6)
    assert resonance_lower_bound_check(FreqNode(2, 0), FreqNode(-1, 0)) == (6, 6)
    assert resonance_lower_bound_check(FreqNode(1, 5), FreqNode(1, -5)) == (56, 6)


def test_galilean_examples():
    p = FreqNode(2, 2)
    q = galilean_shift(p, 3)
    assert q == FreqNode(2, 8)
    assert omega(q) == omega(p) - 2 * 3 * 2 - 3 ** 2 * 2
    assert galilean_shift(p, 0) == p
    assert galilean_phase_change(p, 0) == 0


def test_galilean_sign_oracle():
    # brute force on 10^3 nodes: the A^2 xi term enters with a minus sign
    rng = np.random.default_rng(7)
    for torus in (SQUARE, TorusSpec(Fraction(5, 7))):
        plus_ok = 0
        for _ in range(1000):
            xi = int(rng.integers(1, 200)) * int(rng.choice([-1, 1]))
            eta = int(rng.integers(-5000, 5000))
            A = int(rng.integers(-30, 30))
            lhs = omega_exact(xi, eta + A * xi, torus)
            base = omega_exact(xi, eta, torus)
            g2 = torus.gamma ** 2
            assert lhs == base + (-2 * A * eta - A * A * xi) / g2
            assert lhs - base == galilean_phase_change(FreqNode(xi, eta), A, torus)
            plus_ok += lhs == base + (-2 * A * eta + A * A * xi) / g2
        # the "+A^2 xi" variant only holds when A = 0
        assert plus_ok < 100


def test_anisotropic_rescale():
    assert anisotropic_rescale(FreqNode(8, 0), 8) == (1, 0)
    assert anisotropic_rescale(FreqNode(16, 64), 8) == (2, 1)
    a, b = anisotropic_rescale(FreqNode(4, 8), 4)
    assert omega(FreqNode(4, 8)) == 48 == 4 ** 3 * omega_continuous(a, b)
    with pytest.raises(ValueError):
        anisotropic_rescale(FreqNode(1, 0), 0)


def test_dyadic_shell():
    assert [dyadic_shell(x) for x in (1, 2, 3, 4, 7, 8, -9)] == [1, 2, 2, 4, 4, 8, 8]
    with pytest.raises(DomainError):
        dyadic_shell(0)
    sh = DyadicShell(4, 2)
    assert sh.contains_xi(7) and not sh.contains_xi(8)
    assert sh.contains_modulation(3) and not sh.contains_modulation(4)
    assert DyadicShell(4, 2, bottom=True).contains_modulation(0.5)
    with pytest.raises(ValueError):
        DyadicShell(3, 1)


def test_resonance_random_samples():
    # 10^5 samples, |xi| <= 2^10, |eta| <= 2^20: identity, symmetry and lower bound
    rng = np.random.default_rng(2024)
    n = 100_000
    x1 = rng.integers(-2 ** 10, 2 ** 10 + 1, n)
    x2 = rng.integers(-2 ** 10, 2 ** 10 + 1, n)
    e1 = rng.integers(-2 ** 20, 2 ** 20 + 1, n)
    e2 = rng.integers(-2 ** 20, 2 ** 20 + 1, n)
    keep = (x1 != 0) & (x2 != 0) & (x1 + x2 != 0)
    x1, x2, e1, e2 = x1[keep], x2[keep], e1[keep], e2[keep]
    om = resonance_array(x1, e1, x2, e2)
    assert np.allclose(om, resonance_array(x2, e2, x1, e1), rtol=1e-12, atol=0)
    kdv = 3.0 * np.abs(x1 * x2 * (x1 + x2))
    assert np.all(np.abs(om) >= kdv)
    shells = np.stack([2.0 ** np.floor(np.log2(np.abs(v))) for v in (x1, x2, x1 + x2)])
    lower = 0.75 * shells.max(axis=0) ** 2 * shells.min(axis=0)
    assert np.all(kdv >= lower)
    # exact integer cross-check of the omega-difference identity on a subsample
    for i in range(0, x1.size, 50):
        a, b, c, d = int(x1[i]), int(e1[i]), int(x2[i]), int(e2[i])
        ex = omega_exact(a + c, b + d) - omega_exact(a, b) - omega_exact(c, d)
        assert ex == resonance_exact(FreqNode(a, b), FreqNode(c, d))
        assert abs(float(ex) - om[i]) <= 1e-12 * abs(float(ex))


@given(nonzero, etas, nonzero, etas)
def test_resonance_symmetric_and_consistent(a, b, c, d):
    if a + c == 0:
        return
    p, q = FreqNode(a, b), FreqNode(c, d)
    assert resonance_exact(p, q) == resonance_exact(q, p)
    assert resonance(p, q) == resonance(q, p)
    diff = omega_exact(a + c, b + d) - omega_exact(a, b) - omega_exact(c, d)
    assert abs(resonance(p, q) - float(diff)) <= 1e-12 * abs(float(diff))
    big, small = resonance_lower_bound_check(p, q)
    assert big >= small


@given(nonzero, etas, st.integers(-10 ** 6, 10 ** 6))
def test_shift_inverse(xi, eta, A):
    p = FreqNode(xi, eta)
    assert galilean_shift(galilean_shift(p, A), -A) == p


@given(st.integers(1, 2 ** 40))
def test_shell_partition(x):
    hits = [N for N in (1 << k for k in range(42)) if N <= x < 2 * N]
    assert hits == [dyadic_shell(x)]
