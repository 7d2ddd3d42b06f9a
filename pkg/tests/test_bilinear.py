import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kp2lab.bilinear import (GridMismatchError, bilinear_quotient, bilinear_suite,
                             bourgain_bound, convolve_l2, convolve_l2_dense,
                             cordoba_overlap, cordoba_width, cordoba_window_decompose,
                             count_eta_slice, count_eta_slice_secondorder, counting_suite,
                             galilean_covariance_defect, make_modeset, sharpness_bilinear_fit,
                             sharpness_pair, slice_transversality, suite_max, transversality)
from kp2lab.bilinear import _random_pair
from kp2lab.lattice import DomainError, DyadicShell, omega_exact


def bottom(N, L=1):
    return DyadicShell(N, L, bottom=True)


def test_single_node_characteristic():
    f = make_modeset(bottom(8), (8, 9), (0, 0))
    assert f.n_nodes == 1 and f.node.size == 1
    # omega = 512, cells cover [511, 513] exactly
    assert f.start[0] == 511 * 8 and f.length[0] == 16
    assert f.l2_norm() == pytest.approx(math.sqrt(2.0))
    assert f.max_modulation() == 1.0


def test_modeset_shells_and_errors():
    f = make_modeset(DyadicShell(4, 2), (4, 8), (-3, 3))
    assert 2 <= f.max_modulation() <= 4
    assert np.all((f.xi >= 4) & (f.xi < 8))
    g = make_modeset(bottom(4, 4), (4, 8), (-3, 3), "gaussian", seed=3)
    assert g.max_modulation() <= 4
    with pytest.raises(ValueError):
        make_modeset(bottom(4, 1), (4, 8), (0, 1), dtau=Fraction(1, 4))
    with pytest.raises(ValueError):
        make_modeset(bottom(4), (9, 12), (0, 1))


def test_modeset_plancherel():
    f = make_modeset(bottom(4, 2), (4, 8), (-2, 5), "gaussian", seed=1)
    ref = sum(abs(v) ** 2 * n / 8 for v, n in zip(f.value, f.length))
    assert f.l2_norm() ** 2 == pytest.approx(ref, rel=1e-12)


def test_sharpness_pair_construction():
    f1, f2 = sharpness_pair(64, 16)
    assert f1.n_nodes == f2.n_nodes == 4
    assert set(f1.xi.tolist()) == {64} and set(f2.xi.tolist()) == {16}
    # cells lie inside [omega - 1/2, omega + 1/2]; off-grid centres lose one cell
    assert np.all((f1.length >= 7) & (f1.length <= 8))
    assert f1.max_modulation() <= 0.5
    _, Dmax = transversality(f1, f2)
    assert Dmax <= 16 ** -0.5


@given(st.integers(0, 10 ** 6))
def test_convolution_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    f1, f2 = _random_pair(rng, 8, "gaussian" if seed % 2 else "characteristic")
    a = convolve_l2(f1, f2)
    b = convolve_l2_dense(f1, f2)
    assert a == pytest.approx(b, rel=1e-11)


def test_convolution_symmetric_and_bilinear():
    rng = np.random.default_rng(5)
    for _ in range(20):
        f1, f2 = _random_pair(rng, 32, "gaussian")
        a = convolve_l2(f1, f2)
        assert convolve_l2(f2, f1) == pytest.approx(a, rel=1e-12)
        assert convolve_l2(f1.scaled(2 - 1j), f2.scaled(-0.5)) == pytest.approx(
            abs((2 - 1j) * 0.5) * a, rel=1e-12)


def test_tau_translation_and_grid_mismatch():
    f1, f2 = sharpness_pair(32, 8)
    a = convolve_l2(f1, f2)
    # translating one profile in tau moves the output without changing its norm
    assert convolve_l2(f1.tau_shifted(10 ** 6), f2) == pytest.approx(a, rel=1e-12)
    g = make_modeset(bottom(8), (8, 9), (0, 1), dtau=Fraction(1, 16))
    with pytest.raises(GridMismatchError):
        convolve_l2(f1, g)
    empty = f1.restrict_xi(0, 1)
    assert convolve_l2(empty, f2) == 0.0


def test_galilean_covariance():
    rng = np.random.default_rng(11)
    for k in range(30):
        f1, f2 = _random_pair(rng, 64, "gaussian" if k % 2 else "characteristic")
        for A in (1, -3):
            assert galilean_covariance_defect(f1, f2, A) <= 1e-10


def test_sharpness_quotient_values():
    q16 = bilinear_quotient(*sharpness_pair(64, 16))
    assert 1.0 <= q16 <= 4.0  # within a factor 2 of 16^(1/4)
    q1 = bilinear_quotient(*sharpness_pair(4, 1))
    assert q1 == pytest.approx(math.sqrt(2 / 3))
    a = bilinear_quotient(*sharpness_pair(4 * 64, 64))
    b = bilinear_quotient(*sharpness_pair(16 * 64, 64))
    assert abs(a - b) <= 0.1 * a


def test_sharpness_bilinear_fit():
    fit = sharpness_bilinear_fit([16, 32, 64, 128, 256, 512, 1024], 4)
    assert 0.20 <= fit.slope <= 0.30


def test_bourgain_bound_example():
    B = bourgain_bound(4, 4, 1, 1, 4, 4)
    expect = 4 ** 0.25 + 2 + min(1.0, 4 ** 0.25 * 2)
    assert B.value == pytest.approx(expect)
    assert B.branch == "L_max"
    prev = 0
    for L in (1, 2, 4, 8, 64, 1024):
        v = bourgain_bound(16, 4, L, 2, 3, 5).value
        assert v >= prev
        prev = v
    assert bourgain_bound(64, 64, 1, 2 ** 12, 1, 1).branch == "I_min"


def test_transversality_examples():
    f = make_modeset(bottom(2), (2, 4), (0, 0))
    g = make_modeset(bottom(1), (1, 2), (0, 0))
    assert transversality(f, g) == (0.0, 0.0)
    f = make_modeset(bottom(2), (2, 3), (2, 2))
    assert transversality(f, g) == (1.0, 1.0)


def _count_oracle(tau, xi, eta, xi1, box1, box2, L):
    n = 0
    for e1 in range(box1[0], box1[1] + 1):
        e2 = eta - e1
        if box2[0] <= e2 <= box2[1]:
            if abs(tau - omega_exact(xi1, e1) - omega_exact(xi - xi1, e2)) <= L:
                n += 1
    return n


def test_counting_examples():
    # vacuous constraint counts the whole admissible box
    assert count_eta_slice(0, 12, 4, 8, (-5, 5), (-10, 10), 10 ** 9) == 11
    assert count_eta_slice(0, 12, 4, 8, (0, 2), (10, 20), 10 ** 9) == 0
    with pytest.raises(DomainError):
        count_eta_slice(0, 8, 0, 8, (0, 1), (0, 1), 1)
    with pytest.raises(DomainError):
        count_eta_slice_secondorder(0, 4, 0, 8, (0, 1), (0, 1), 1)


@given(st.integers(0, 10 ** 6))
def test_counting_against_enumeration(seed):
    rng = np.random.default_rng(seed)
    xi1 = int(rng.integers(1, 40)) * int(rng.choice([-1, 1]))
    xi2 = int(rng.integers(1, 40)) * int(rng.choice([-1, 1]))
    xi = xi1 + xi2
    if xi == 0:
        return
    box1 = (int(rng.integers(-60, 0)), int(rng.integers(0, 60)))
    box2 = (int(rng.integers(-60, 0)), int(rng.integers(0, 60)))
    eta = int(rng.integers(-60, 60))
    L = int(2 ** rng.integers(0, 12))
    e1 = int(rng.integers(box1[0], box1[1] + 1))
    tau = omega_exact(xi1, e1) + omega_exact(xi2, eta - e1) + Fraction(int(rng.integers(-50, 50)), 8)
    n = count_eta_slice(tau, xi, eta, xi1, box1, box2, L)
    assert n == _count_oracle(tau, xi, eta, xi1, box1, box2, L)
    D = slice_transversality(xi, eta, xi1, box1, box2)
    if 0 < D < math.inf:
        # two monotone branches at most, each with spacing >= 2D
        assert n <= 2 * (1 + L / D)
    if (xi1 > 0) == (xi2 > 0):
        Nmin = 2 ** int(math.log2(min(abs(xi1), abs(xi2))))
        assert n <= 2 + 4 * math.sqrt(2 * L * Nmin)


def test_secondorder_single_point():
    # f'' = -2(1/xi1 + 1/xi2) = -1 at xi1 = xi2 = 4: the gap between the
    # critical value and its neighbours is 1/2, so L = 1/4 isolates one point
    xi1, xi2, eta = 4, 4, 0
    tau = omega_exact(xi1, 0) + omega_exact(xi2, 0)
    assert count_eta_slice_secondorder(tau, 8, eta, 4, (-10, 10), (-10, 10), Fraction(1, 4)) == 1
    assert count_eta_slice_secondorder(tau, 8, eta, 4, (-10, 10), (-10, 10), Fraction(1, 2)) == 3


def test_cordoba_width_formula():
    assert cordoba_width(64, 8, 32, 64) == 4
    assert cordoba_width(64, 8, 1, 64) == 2
    assert cordoba_width(2 ** 10, 8, 1, 2 ** 5) == 2


def test_cordoba_decomposition():
    f1 = make_modeset(bottom(64, 8), (64, 80), (0, 3), "gaussian", seed=1)
    f2 = make_modeset(bottom(8, 8), (8, 16), (0, 3), "gaussian", seed=2)
    D = transversality(f1, f2)[1]
    w, pairs = cordoba_window_decompose(f1, f2, D)
    assert w == cordoba_width(64, 8, D, 8)
    covered = sorted({u for u, _ in pairs})
    assert covered[0][0] == 64 and covered[-1][1] == 80
    C = cordoba_overlap(f1, f2, D)
    assert 0 < C <= 8
    with pytest.raises(ValueError):
        cordoba_window_decompose(f2, f1, D)


def test_counting_suite_constants():
    rows = counting_suite(300, seed=1)
    assert suite_max(rows, "transversal") <= 8
    assert suite_max(rows, "secondorder") <= 8
    assert rows == counting_suite(300, seed=1)


def test_bilinear_suite_constants():
    rows = bilinear_suite(100, seed=2)
    for kind in ("bourgain", "transversal", "secondorder"):
        assert 0 < suite_max(rows, kind) <= 8
    assert {r[5] for r in rows if r[1] == "bourgain"} <= {"L_max", "I_min"}
