"""Linear L^4 Strichartz experiments: quotients, sharpness families and exponent fits."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .field import (QuadratureSpec, SpectralField, l2_norm, lp_spacetime_norm_report,
                    make_band_field, make_extremizer_linear, make_extremizer_shorttime,
                    shorttime_eta_max)
from .fitting import FitResult, fit_loglog, parallel_map
from .lattice import SQUARE, TorusSpec, is_dyadic


def linear_ratio_report(f: SpectralField, t_end: float = 1.0,
                        q: QuadratureSpec | None = None) -> tuple[float, float]:
    """(||S(t) f||_{L^4([0,T] x T^2)} / ||f||_{L^2}, refinement delta)."""
    if len(f) == 0 or not np.any(f.amp):
        raise ValueError("linear_ratio needs a nonzero field")
    q = QuadratureSpec(t_end=t_end) if q is None else replace(q, t_end=t_end)
    norm, delta, _ = lp_spacetime_norm_report(f, 4, q)
    return norm / l2_norm(f), delta


def linear_ratio(f: SpectralField, t_end: float = 1.0, q: QuadratureSpec | None = None) -> float:
    return linear_ratio_report(f, t_end, q)[0]


def shorttime_ratio(f: SpectralField, N: int, alpha: float,
                    q: QuadratureSpec | None = None) -> float:
    """linear_ratio on the window [0, N^-alpha]."""
    if not (0 <= alpha <= 1):
        raise ValueError("alpha must lie in [0, 1]")
    return linear_ratio(f, float(N) ** (-alpha), q)


def _check_list(N_list):
    N_list = [int(n) for n in N_list]
    if len(N_list) < 4:
        raise ValueError("an exponent fit needs at least 4 dyadic points")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly increasing")
    if not all(is_dyadic(n) for n in N_list):
        raise ValueError("N_list entries must be powers of two")
    return N_list


def sharpness_linear_fit(N_list, torus: TorusSpec = SQUARE, q: QuadratureSpec | None = None,
                         threads: int | None = None) -> FitResult:
    """Fit the N-growth of the ratio on the comb f = 1 at xi = N, 0 <= eta <= sqrt N.

    A single x-frequency makes the x-integral trivial, so the quadrature
    runs on a one-dimensional grid in y.
    """
    N_list = _check_list(N_list)

    def point(N):
        return linear_ratio_report(make_extremizer_linear(N, torus), 1.0, q)

    res = parallel_map(point, N_list, threads)
    return fit_loglog(N_list, [r for r, _ in res], [d for _, d in res])


def sharpness_shorttime_fit(N_list, alpha: float = 0.5, torus: TorusSpec = SQUARE,
                            eta_factor: float = 1 / 16, q: QuadratureSpec | None = None,
                            threads: int | None = None) -> FitResult:
    """Fit the N-growth of the ratio on [0, N^-alpha] for the short-time comb.

    ``eta_factor`` bounds the comb height by eta_factor * N^2, the smallness
    regime in which the short-time bound is stated.
    """
    N_list = _check_list(N_list)
    for N in N_list:
        if shorttime_eta_max(N, alpha) > eta_factor * N * N:
            raise ValueError(f"comb height at N={N} exceeds {eta_factor} N^2")

    def point(N):
        f = make_extremizer_shorttime(N, alpha, N, torus)
        return linear_ratio_report(f, float(N) ** (-alpha), q)

    res = parallel_map(point, N_list, threads)
    return fit_loglog(N_list, [r for r, _ in res], [d for _, d in res])


def band_interval(N: int, k: int) -> tuple[int, int]:
    return N, N + max(1, N // k)


def shifted_band_fit(N: int, k_list, seeds, torus: TorusSpec = SQUARE, scale: float = 1.0,
                     q: QuadratureSpec | None = None, threads: int | None = None) -> FitResult:
    """Median over seeds of the ratio on random band data, fitted against k.

    The band sits at xi in [N, N + N/k), eta in [k S, (k+1) S] with S = scale N^2.
    """
    k_list = [int(k) for k in k_list]
    seeds = [int(s) for s in seeds]
    if not k_list or not seeds:
        raise ValueError("need nonempty k_list and seeds")
    if any(k > N or k < 1 for k in k_list):
        raise ValueError("all k must satisfy 1 <= k <= N")
    grid = [(k, s) for k in k_list for s in seeds]

    def point(ks):
        k, s = ks
        f = make_band_field(N, k, band_interval(N, k), s, torus, scale)
        return linear_ratio_report(f, 1.0, q)

    res = parallel_map(point, grid, threads)
    ratios, deltas = [], []
    for i in range(len(k_list)):
        chunk = res[i * len(seeds):(i + 1) * len(seeds)]
        ratios.append(float(np.median([r for r, _ in chunk])))
        deltas.append(max(d for _, d in chunk))
    return fit_loglog(k_list, ratios, deltas)
