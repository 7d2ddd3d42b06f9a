import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kp2lab.flatsets import (NotBracketedError, PlanarRect, cover_count_fit, cover_report,
                             cover_svg, custom_phase, flat_cover, flat_defect,
                             flat_length_fit, hessian_null_direction, kp_degenerate_direction,
                             kp_phase, max_flat_length, segment_defect, shear_normalize,
                             shifted_direction_lengths, shifted_phase)
from kp2lab.flatsets import _kp_hess

KP = kp_phase()
DELTAS = [2.0 ** -k for k in range(6, 21)]


def test_degenerate_rectangle_and_affine():
    S = PlanarRect((1.0, 0.0), ((1, 0), (0, 1)), (0.0, 0.0))
    assert flat_defect(KP, S).value == 0.0
    aff = custom_phase(lambda x, y: 2 * x + 3 * y + 1,
                       lambda x, y: (np.full_like(x, 2.0), np.full_like(y, 3.0)), (0, 1, 0, 1))
    S = PlanarRect.axis_aligned(0.0, 1.0, 0.0, 1.0)
    assert flat_defect(aff, S, grid=9).value == 0.0


def test_cubic_segment_oracle():
    cube = custom_phase(lambda x, y: x ** 3, lambda x, y: (3 * x ** 2, 0 * y), (0, 4, -1, 1))
    for h in (0.5, 0.1, 0.01):
        S = PlanarRect((1 + h / 2, 0.0), ((1, 0), (0, 1)), (h / 2, 0.0))
        # v^3 - u^3 - 3u^2(v - u) = (v - u)^2 (v + 2u), largest at u = 1 + h, v = 1
        assert flat_defect(cube, S).value == pytest.approx(h * h * (3 + 2 * h), rel=1e-12)


def test_defect_domain_and_grid_errors():
    with pytest.raises(ValueError):
        flat_defect(KP, PlanarRect.axis_aligned(0.1, 1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        flat_defect(KP, PlanarRect.axis_aligned(1.0, 1.1, 0.0, 0.1), grid=4)
    with pytest.raises(ValueError):
        PlanarRect((0, 0), ((1, 0), (1, 0)), (1, 1))


def test_defect_refinement_reports_gap():
    d = flat_defect(KP, PlanarRect((1.2, 0.3), ((0.6, 0.8), (-0.8, 0.6)), (0.1, 0.05)))
    assert d.grid > 32 and d.gap <= 0.01 * d.value


# half-extents <= 0.4 reach at most 0.4 sqrt 2 in xi, so x >= 1.1 stays in xi >= 0.5
@given(st.floats(1.1, 3.0), st.floats(-2.0, 2.0), st.floats(0.01, 0.4), st.floats(0.01, 0.4),
       st.floats(0, math.pi))
def test_defect_monotone_in_inclusion(x, y, a, b, th):
    ax = ((math.cos(th), math.sin(th)), (-math.sin(th), math.cos(th)))
    big = PlanarRect((x, y), ax, (a, b))
    c = np.asarray(big.center) - 0.5 * a * np.asarray(ax[0]) - 0.5 * b * np.asarray(ax[1])
    small = PlanarRect(tuple(c), ax, (a / 2, b / 2))
    # the small grid is a subset of the refined big grid
    ds = flat_defect(KP, small, grid=9, refine=False).value
    db = flat_defect(KP, big, grid=17, refine=False).value
    assert ds <= db * (1 + 1e-12) + 1e-14


def test_flat_length_generic_directions():
    for d in ((1, 0), (0, 1)):
        fit = flat_length_fit(KP, (1, 0), d, DELTAS)
        assert 0.45 <= fit.slope <= 0.55


def test_flat_length_degenerate_directions():
    # a2 vanishes along xi where eta^2 = 3 xi^4
    fit = flat_length_fit(KP, (1, math.sqrt(3)), (1, 0), DELTAS)
    assert 0.30 <= fit.slope <= 0.40
    # and along the Hessian null direction at (1, 0)
    fit = flat_length_fit(KP, (1, 0), kp_degenerate_direction(1, 0), DELTAS)
    assert 0.30 <= fit.slope <= 0.40


def test_null_direction_formula():
    for p in ((1, 0), (1.3, 0.4), (2.0, -1.5)):
        for b in (1, -1):
            d = kp_degenerate_direction(*p, branch=b)
            h11, h12, h22 = _kp_hess(*p)
            assert abs(h11 * d[0] ** 2 + 2 * h12 * d[0] * d[1] + h22 * d[1] ** 2) < 1e-12
            e = hessian_null_direction(KP, p, b)
            assert abs(h11 * e[0] ** 2 + 2 * h12 * e[0] * e[1] + h22 * e[1] ** 2) < 1e-12


@given(st.floats(1.0, 2.0), st.floats(-1.0, 1.0), st.floats(0, math.pi),
       st.floats(1e-6, 0.1), st.floats(1.0, 4.0))
def test_flat_length_monotone_in_delta(x, y, th, d, k):
    u = (math.cos(th), math.sin(th))
    a = max_flat_length(KP, (x, y), u, d)
    b = max_flat_length(KP, (x, y), u, min(k * d, 0.25))
    assert a <= b * (1 + 1e-5)
    assert segment_defect(KP, (x, y), u, a) <= d


def test_flat_length_errors():
    with pytest.raises(NotBracketedError):
        max_flat_length(KP, (1, 0), (1, 0), 1e-6, lo=0.5)
    with pytest.raises(ValueError):
        max_flat_length(KP, (1, 0), (1, 0), 0.5)


def test_shear_normalize_examples():
    V = [(0, 0), (2, 0), (2, 1), (0, 1)]
    A, R, _ = shear_normalize(V, 64, 0.5)
    assert A == 0 and R.corners().min(axis=0).tolist() == [0, 0]
    A, R, _ = shear_normalize([(0, 0), (1, 1), (1, 2), (0, 1)], 1, 0.0)
    assert A == 1
    assert np.allclose(sorted(map(tuple, R.corners())), [(0, 0), (0, 1), (1, 0), (1, 1)])


def test_shear_normalize_containment():
    rng = np.random.default_rng(0)
    N, alpha = 64, 0.5
    delta = N ** (alpha - 3)
    lx = N * delta ** (1 / 3)          # xi-extent of a rescaled flat set
    w = N ** 2 * delta ** 0.5          # eta-thickness
    for _ in range(500):
        s = rng.uniform(-3 * N, 3 * N)
        x0, y0 = rng.uniform(N, 2 * N), rng.uniform(-N * N, N * N)
        l, t = rng.uniform(0, lx), rng.uniform(0, w)
        V = [(x0, y0), (x0 + l, y0 + s * l), (x0 + l, y0 + s * l + t), (x0, y0 + t)]
        A, R, box = shear_normalize(V, N, alpha)
        assert A == math.floor(s) or abs(s - round(s)) < 1e-9
        W = np.array(V, float)
        W[:, 1] -= A * W[:, 0]
        assert np.all(R.contains(W, tol=1e-9))
        # residual slope in [0, 1) adds at most the xi-extent to the height
        assert 2 * R.half[0] <= box[0] + 1e-9
        assert 2 * R.half[1] <= box[1] + box[0] + 1e-9


def test_shear_invariance_of_defect():
    rng = np.random.default_rng(2)
    for _ in range(10):
        A = int(rng.integers(-3, 4))
        sheared = custom_phase(lambda x, y: x ** 3 - (y + A * x) ** 2 / x,
                               lambda x, y: (3 * x ** 2 + (y + A * x) ** 2 / x ** 2 - 2 * A * (y + A * x) / x,
                                             -2 * (y + A * x) / x), (0.5, 4, -20, 20))
        S = PlanarRect((rng.uniform(1.2, 1.8), rng.uniform(-0.5, 0.5)), ((0.6, 0.8), (-0.8, 0.6)),
                       (0.1, 0.05))
        a = flat_defect(KP, S, refine=False).value
        b = flat_defect(sheared, S, refine=False).value
        assert abs(a - b) <= 1e-9


def test_cover_coarse_and_soundness():
    assert len(flat_cover(KP, 0.25)) <= 64
    for k in (10, 14):
        cov = flat_cover(KP, 2.0 ** -k)
        rep = cover_report(cov, KP)
        assert rep["misses"] == 0
        assert rep["max_overlap"] <= 2 * math.log(2 ** k)
        assert rep["certified_C"] <= 1.0 and rep["replay_C"] <= rep["certified_C"]


def test_cover_count_exponent():
    # a nondegenerate Hessian forces area <~ delta per flat set
    fit = cover_count_fit(KP, [2.0 ** -k for k in range(4, 15)])
    assert 0.9 <= fit.slope <= 1.1


def test_cover_export():
    cov = flat_cover(KP, 0.25)
    svg = cover_svg(cov.rects, shear=1)
    assert svg.startswith("<svg") and svg.count("<polygon") == len(cov)


def test_shifted_phase_probe():
    ph = shifted_phase(1.0, 32.0)
    fit = flat_length_fit(ph, (0, 0), (0, 1), [2.0 ** -k for k in range(10, 21)])
    assert 0.45 <= fit.slope <= 0.55
    for eta0 in (16.0, 64.0):
        for d in (2.0 ** -10, 2.0 ** -16):
            lens = [l for _, l in shifted_direction_lengths(1.0, eta0, (0, 0), d, 8)]
            assert max(lens) <= eta0 * d ** (1 / 3)
    with pytest.raises(ValueError):
        shifted_phase(1.0, 0.5)
