"""delta-flat sets of the KP-II surface and of shifted phases.

A set S is (phi, delta)-flat when sup_{u, v in S} |phi(v) - phi(u) - grad phi(u).(v - u)|
is at most delta.  This module samples that defect, probes maximal flat
segment lengths, normalizes long parallelograms by integer Galilean shears and
builds quadtree covers whose flatness is certified by Hessian bounds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .fitting import FitResult, fit_loglog


class NotBracketedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# phases

@dataclass(frozen=True)
class PhaseFn:
    """A phase with value, gradient and (optionally) interval Hessian bounds.

    ``domain`` is (xi_min, xi_max, eta_min, eta_max).
    """

    tag: str
    f: object
    grad: object
    domain: tuple
    params: tuple = ()
    hess_bound: object = None  # (x0, x1, y0, y1) -> (|H11|, |H12|, |H22|) upper bounds
    hess: object = None        # (x, y) -> (H11, H12, H22)

    def check(self, pts: np.ndarray) -> None:
        x0, x1, y0, y1 = self.domain
        tol = 1e-12
        if np.any(pts[..., 0] < x0 - tol) or np.any(pts[..., 0] > x1 + tol) or \
                np.any(pts[..., 1] < y0 - tol) or np.any(pts[..., 1] > y1 + tol):
            raise ValueError(f"set leaves the domain of the {self.tag} phase")


def _kp_f(x, y):
    return x ** 3 - y ** 2 / x


def _kp_grad(x, y):
    return 3 * x ** 2 + y ** 2 / x ** 2, -2 * y / x


def _kp_hess(x, y):
    return 6 * x - 2 * y ** 2 / x ** 3, 2 * y / x ** 2, -2 / x


def _sq_range(lo, hi):
    if lo <= 0 <= hi:
        return 0.0, max(lo * lo, hi * hi)
    return min(lo * lo, hi * hi), max(lo * lo, hi * hi)


def _kp_hess_bound(x0, x1, y0, y1):
    """Interval bounds of |H_ij| for xi in [x0, x1] (x0 > 0), eta in [y0, y1]."""
    x0 = np.asarray(x0, float)
    x1 = np.asarray(x1, float)
    y0 = np.asarray(y0, float)
    y1 = np.asarray(y1, float)
    straddle = (y0 <= 0) & (y1 >= 0)
    e_lo = np.where(straddle, 0.0, np.minimum(y0 * y0, y1 * y1))
    e_hi = np.maximum(y0 * y0, y1 * y1)
    lo = 6 * x0 - 2 * e_hi / x0 ** 3
    hi = 6 * x1 - 2 * e_lo / x1 ** 3
    b11 = np.maximum(np.abs(lo), np.abs(hi))
    b12 = 2 * np.maximum(np.abs(y0), np.abs(y1)) / x0 ** 2
    b22 = 2 / x0
    return b11, b12, b22


def kp_phase(domain=(0.5, 4.0, -4.0, 4.0)) -> PhaseFn:
    """omega(xi, eta) = xi^3 - eta^2 / xi on a box with xi > 0."""
    if domain[0] <= 0:
        raise ValueError("the kp phase needs xi > 0 on its domain")
    return PhaseFn("kp", _kp_f, _kp_grad, tuple(domain), (), _kp_hess_bound, _kp_hess)


def shifted_phase(xi0: float, eta0: float, domain=(-1.0, 1.0, -1.0, 1.0)) -> PhaseFn:
    """(xi0 + xi/eta0)^3 - (eta + eta0)^2 / (xi0 + xi/eta0)."""
    if xi0 + min(domain[0], domain[1]) / eta0 <= 0 and xi0 + max(domain[0], domain[1]) / eta0 >= 0:
        raise ValueError("shifted phase is singular on this domain")

    def f(x, y):
        return _kp_f(xi0 + x / eta0, y + eta0)

    def grad(x, y):
        gx, gy = _kp_grad(xi0 + x / eta0, y + eta0)
        return gx / eta0, gy

    def hess(x, y):
        a, b, c = _kp_hess(xi0 + x / eta0, y + eta0)
        return a / eta0 ** 2, b / eta0, c

    def hb(x0, x1, y0, y1):
        X0, X1 = xi0 + np.asarray(x0) / eta0, xi0 + np.asarray(x1) / eta0
        b11, b12, b22 = _kp_hess_bound(np.minimum(X0, X1), np.maximum(X0, X1),
                                       np.asarray(y0) + eta0, np.asarray(y1) + eta0)
        return b11 / eta0 ** 2, b12 / abs(eta0), b22

    return PhaseFn("shifted", f, grad, tuple(domain), (xi0, eta0), hb, hess)


def custom_phase(f, grad, domain, tag="custom") -> PhaseFn:
    return PhaseFn(tag, f, grad, tuple(domain))


# ---------------------------------------------------------------------------
# rectangles

@dataclass(frozen=True)
class PlanarRect:
    center: tuple
    axes: tuple  # two orthonormal unit vectors
    half: tuple

    def __post_init__(self):
        a = np.asarray(self.axes, float)
        if a.shape != (2, 2) or not np.allclose(a @ a.T, np.eye(2), atol=1e-12):
            raise ValueError("axes must be two orthonormal vectors")
        if min(self.half) < 0:
            raise ValueError("half-lengths must be nonnegative")

    @classmethod
    def axis_aligned(cls, x0, x1, y0, y1) -> "PlanarRect":
        return cls(((x0 + x1) / 2, (y0 + y1) / 2), ((1.0, 0.0), (0.0, 1.0)),
                   ((x1 - x0) / 2, (y1 - y0) / 2))

    def sample(self, grid: int) -> np.ndarray:
        """grid x grid points including the boundary, shape (grid*grid, 2)."""
        s = np.linspace(-1.0, 1.0, grid)
        A, B = np.meshgrid(s * self.half[0], s * self.half[1], indexing="ij")
        ax = np.asarray(self.axes, float)
        c = np.asarray(self.center, float)
        return c + A.reshape(-1, 1) * ax[0] + B.reshape(-1, 1) * ax[1]

    def corners(self) -> np.ndarray:
        ax = np.asarray(self.axes, float)
        c = np.asarray(self.center, float)
        return np.array([c + sa * self.half[0] * ax[0] + sb * self.half[1] * ax[1]
                         for sa, sb in ((-1, -1), (1, -1), (1, 1), (-1, 1))])

    def contains(self, pts, tol: float = 1e-12) -> np.ndarray:
        d = np.asarray(pts, float) - np.asarray(self.center, float)
        ax = np.asarray(self.axes, float)
        return (np.abs(d @ ax[0]) <= self.half[0] + tol) & (np.abs(d @ ax[1]) <= self.half[1] + tol)


# ---------------------------------------------------------------------------
# defects

def _pair_defect(phase: PhaseFn, pts: np.ndarray, chunk: int = 1 << 22) -> float:
    x, y = pts[:, 0], pts[:, 1]
    val = phase.f(x, y)
    gx, gy = phase.grad(x, y)
    best = 0.0
    step = max(1, chunk // max(1, pts.shape[0]))
    for s in range(0, pts.shape[0], step):
        u = slice(s, s + step)
        d = (val[None, :] - val[u, None] - gx[u, None] * (x[None, :] - x[u, None])
             - gy[u, None] * (y[None, :] - y[u, None]))
        best = max(best, float(np.abs(d).max()))
    return best


@dataclass(frozen=True)
class FlatDefect:
    value: float
    gap: float  # change under the last grid refinement
    grid: int

    def __float__(self):
        return self.value


def flat_defect(phase: PhaseFn, S: PlanarRect, grid: int = 32, refine: bool = True,
                max_grid: int = 64, rtol: float = 0.01) -> FlatDefect:
    """Sampled sup of the flatness defect over grid^2 x grid^2 point pairs.

    With ``refine`` the grid is refined (nested, 2g - 1 points per axis) until
    the sup moves by at most ``rtol`` relative; the last move is reported as gap.
    """
    if grid < 8:
        raise ValueError("grid must be at least 8 per axis")
    if max(S.half) == 0:
        phase.check(np.asarray([S.center], float))
        return FlatDefect(0.0, 0.0, grid)
    pts = S.sample(grid)
    phase.check(pts)
    d = _pair_defect(phase, pts)
    gap = float("nan")
    g = grid
    while refine and 2 * g - 1 <= max_grid:
        g = 2 * g - 1
        d2 = _pair_defect(phase, S.sample(g))
        gap = abs(d2 - d)
        d = d2
        if gap <= rtol * max(d, 1e-300):
            break
    return FlatDefect(d, gap, g)


def segment_defect(phase: PhaseFn, point, direction, length: float, samples: int = 129) -> float:
    """Flatness defect of the segment of given length centred at point."""
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    s = np.linspace(-0.5, 0.5, samples) * length
    pts = np.asarray(point, float) + s[:, None] * u
    phase.check(pts)
    return _pair_defect(phase, pts)


def max_flat_length(phase: PhaseFn, point, direction, delta: float, lo: float = 1e-8,
                    hi: float | None = None, rtol: float = 1e-6, samples: int = 129) -> float:
    """Largest l with the centred segment of length l (phase, delta)-flat.

    Bisection in log l between ``lo`` (must be flat) and ``hi`` (defaults to
    the longest segment that stays in the domain).
    """
    if not (0 < delta <= 0.25):
        raise ValueError("delta must lie in (0, 1/4]")
    p = np.asarray(point, float)
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    if hi is None:
        x0, x1, y0, y1 = phase.domain
        lim = []
        for c, v, a, b in ((p[0], u[0], x0, x1), (p[1], u[1], y0, y1)):
            if abs(v) > 1e-15:
                lim.append(min((b - c) / abs(v), (c - a) / abs(v)))
        hi = 2 * min(lim)
    if segment_defect(phase, p, u, lo, samples) > delta:
        raise NotBracketedError(f"segment of length {lo} is already not {delta}-flat")
    if segment_defect(phase, p, u, hi, samples) <= delta:
        return hi
    a, b = math.log(lo), math.log(hi)
    while b - a > rtol:
        m = 0.5 * (a + b)
        if segment_defect(phase, p, u, math.exp(m), samples) <= delta:
            a = m
        else:
            b = m
    return math.exp(a)


def hessian_null_direction(phase: PhaseFn, point, branch: int = 1) -> np.ndarray:
    """Unit direction d with d^T H d = 0 at point (the a2 = 0 configuration)."""
    if phase.hess is None:
        raise ValueError("phase has no Hessian")
    h11, h12, h22 = (float(v) for v in phase.hess(float(point[0]), float(point[1])))
    disc = h12 * h12 - h11 * h22
    if disc < 0:
        raise ValueError("Hessian is definite: no null direction")
    if abs(h22) > 1e-14:
        s = (-h12 + branch * math.sqrt(disc)) / h22  # d = (1, s)
        d = np.array([1.0, s])
    else:
        d = np.array([0.0, 1.0]) if branch > 0 else np.array([h22, -2 * h12])
    return d / np.linalg.norm(d)


def kp_degenerate_direction(xi0: float, eta0: float, branch: int = 1) -> np.ndarray:
    """Closed form for the kp phase: slope d_eta/d_xi = (eta0 + branch sqrt3 xi0^2) / xi0."""
    s = (eta0 + branch * math.sqrt(3) * xi0 ** 2) / xi0
    d = np.array([1.0, s])
    return d / np.linalg.norm(d)


def flat_length_fit(phase: PhaseFn, point, direction, deltas) -> FitResult:
    """Fit log l against log delta."""
    lengths = [max_flat_length(phase, point, direction, d) for d in deltas]
    return fit_loglog(deltas, lengths)


def shifted_direction_lengths(xi0: float, eta0: float, point, delta: float, n_dirs: int = 16):
    """(angle, flat length) over directions in the half-plane, for the shifted phase."""
    phase = shifted_phase(xi0, eta0)
    out = []
    for th in np.linspace(0, math.pi, n_dirs, endpoint=False):
        d = (math.cos(th), math.sin(th))
        out.append((float(th), max_flat_length(phase, point, d, delta)))
    return out


# ---------------------------------------------------------------------------
# Galilean shear normalization

def shear_normalize(vertices, N: int, alpha: float):
    """Integer shear eta -> eta - A xi that straightens a long parallelogram.

    ``vertices`` are four (xi, eta) corners in order.  A is the floor of the
    slope of the edge with the largest xi-extent.  Returns (A, bounding
    axis-aligned PlanarRect of the sheared vertices, target box (N^(alpha/3),
    N^((1+alpha)/2))).
    """
    V = np.asarray(vertices, float)
    if V.shape != (4, 2):
        raise ValueError("need four vertices")
    edges = np.roll(V, -1, axis=0) - V
    k = int(np.argmax(np.abs(edges[:, 0])))
    dx, dy = edges[k]
    A = 0 if abs(dx) < 1e-12 else math.floor(dy / dx + 1e-12)
    W = V.copy()
    W[:, 1] = V[:, 1] - A * V[:, 0]
    rect = PlanarRect.axis_aligned(W[:, 0].min(), W[:, 0].max(), W[:, 1].min(), W[:, 1].max())
    box = (N ** (alpha / 3), N ** ((1 + alpha) / 2))
    return A, rect, box


# ---------------------------------------------------------------------------
# covers

@dataclass
class CoverResult:
    rects: np.ndarray  # (n, 4): x0, x1, y0, y1
    delta: float
    max_bound: float  # largest certified defect bound over the leaves
    domain: tuple
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.rects.shape[0]

    def planar(self, i: int) -> PlanarRect:
        return PlanarRect.axis_aligned(*self.rects[i])


def _certified_defect(phase: PhaseFn, R: np.ndarray) -> np.ndarray:
    b11, b12, b22 = phase.hess_bound(R[:, 0], R[:, 1], R[:, 2], R[:, 3])
    a = R[:, 1] - R[:, 0]
    b = R[:, 3] - R[:, 2]
    return 0.5 * (b11 * a * a + 2 * b12 * a * b + b22 * b * b)


def flat_cover(phase: PhaseFn, delta: float, domain=(1.0, 2.0, -1.0, 1.0),
               max_leaves: int = 5_000_000) -> CoverResult:
    """Quadtree cover of ``domain`` by axis-parallel (phase, delta)-flat rectangles.

    Flatness is certified with Taylor's theorem and interval bounds on the
    Hessian; a rectangle is split across the axis carrying the larger
    second-order term.
    """
    if not (0 < delta <= 0.25):
        raise ValueError("delta must lie in (0, 1/4]")
    if phase.hess_bound is None:
        raise ValueError("flat_cover needs a phase with Hessian bounds")
    phase.check(np.array([[domain[0], domain[2]], [domain[1], domain[3]]]))
    active = np.array([domain], dtype=float)
    leaves = []
    bounds = []
    while active.size:
        cert = _certified_defect(phase, active)
        done = cert <= delta
        leaves.append(active[done])
        bounds.append(cert[done])
        act = active[~done]
        if act.size == 0:
            break
        b11, _, b22 = phase.hess_bound(act[:, 0], act[:, 1], act[:, 2], act[:, 3])
        a = act[:, 1] - act[:, 0]
        b = act[:, 3] - act[:, 2]
        split_x = b11 * a * a >= b22 * b * b
        xm = 0.5 * (act[:, 0] + act[:, 1])
        ym = 0.5 * (act[:, 2] + act[:, 3])
        c1 = act.copy()
        c2 = act.copy()
        c1[split_x, 1] = xm[split_x]
        c2[split_x, 0] = xm[split_x]
        c1[~split_x, 3] = ym[~split_x]
        c2[~split_x, 2] = ym[~split_x]
        active = np.concatenate([c1, c2])
        if sum(len(l) for l in leaves) + active.shape[0] > max_leaves:
            raise MemoryError("cover exceeds max_leaves")
    rects = np.concatenate(leaves)
    bnd = np.concatenate(bounds)
    return CoverResult(rects, delta, float(bnd.max()) / delta, tuple(domain),
                       {"leaves": int(rects.shape[0])})


def cover_multiplicity(rects: np.ndarray, pts: np.ndarray, bins: int = 64,
                       tol: float = 1e-12) -> np.ndarray:
    """Number of closed rectangles containing each point."""
    pts = np.asarray(pts, float)
    x_lo, x_hi = rects[:, 0].min(), rects[:, 1].max()
    y_lo, y_hi = rects[:, 2].min(), rects[:, 3].max()
    sx = (x_hi - x_lo) / bins
    sy = (y_hi - y_lo) / bins

    def cell(v, lo, s):
        return np.clip(np.floor((v - lo) / s).astype(np.int64), 0, bins - 1)

    ix0, ix1 = cell(rects[:, 0] - tol, x_lo, sx), cell(rects[:, 1] + tol, x_lo, sx)
    iy0, iy1 = cell(rects[:, 2] - tol, y_lo, sy), cell(rects[:, 3] + tol, y_lo, sy)
    nx = ix1 - ix0 + 1
    ny = iy1 - iy0 + 1
    cnt = nx * ny
    rid = np.repeat(np.arange(rects.shape[0]), cnt)
    off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    cx = ix0[rid] + off % nx[rid]
    cy = iy0[rid] + off // nx[rid]
    key = cx * bins + cy
    order = np.argsort(key, kind="stable")
    key, rid = key[order], rid[order]
    starts = np.searchsorted(key, np.arange(bins * bins), side="left")
    ends = np.searchsorted(key, np.arange(bins * bins), side="right")
    pk = cell(pts[:, 0], x_lo, sx) * bins + cell(pts[:, 1], y_lo, sy)
    n_c = ends[pk] - starts[pk]
    pid = np.repeat(np.arange(pts.shape[0]), n_c)
    cand = rid[np.repeat(starts[pk], n_c) + (np.arange(n_c.sum()) - np.repeat(np.cumsum(n_c) - n_c, n_c))]
    R = rects[cand]
    P = pts[pid]
    inside = (P[:, 0] >= R[:, 0] - tol) & (P[:, 0] <= R[:, 1] + tol) & \
             (P[:, 1] >= R[:, 2] - tol) & (P[:, 1] <= R[:, 3] + tol)
    return np.bincount(pid[inside], minlength=pts.shape[0])


def domain_sample(domain, n: int = 64, seed: int | None = None) -> np.ndarray:
    """n x n grid over the closed domain, or n*n uniform points when seeded."""
    x0, x1, y0, y1 = domain
    if seed is None:
        X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(x0, x1, n * n), rng.uniform(y0, y1, n * n)])


def cover_report(cover: CoverResult, phase: PhaseFn, n_points: int = 64, replay: int = 64,
                 seed: int = 0) -> dict:
    """Misses and multiplicity on sample points plus a sampled-defect replay."""
    rng = np.random.default_rng(seed)
    # rectangle corners are where closed leaves meet, so include some
    pick = rng.choice(len(cover), size=min(n_points * n_points, len(cover)), replace=False)
    R = cover.rects[pick]
    corners = np.column_stack([R[:, 0], R[:, 2]])
    pts = np.concatenate([domain_sample(cover.domain, n_points),
                          domain_sample(cover.domain, n_points, seed), corners])
    mult = cover_multiplicity(cover.rects, pts)
    idx = rng.choice(len(cover), size=min(replay, len(cover)), replace=False)
    worst = 0.0
    for i in idx:
        worst = max(worst, flat_defect(phase, cover.planar(int(i)), grid=8, refine=False).value)
    grid_pts = n_points * n_points
    return {"rectangles": len(cover), "misses": int(np.sum(mult[:2 * grid_pts] == 0)),
            "max_overlap": int(mult.max()), "log_inv_delta": math.log(1 / cover.delta),
            "certified_C": cover.max_bound, "replay_C": worst / cover.delta}


def cover_count_fit(phase: PhaseFn, deltas, domain=(1.0, 2.0, -1.0, 1.0)) -> FitResult:
    """Fit log #cover against log(1/delta)."""
    counts = [len(flat_cover(phase, d, domain)) for d in deltas]
    return fit_loglog([1.0 / d for d in deltas], counts)


def cover_rows(cover: CoverResult) -> list:
    """Rows (xi0, xi1, eta0, eta1) for CSV export."""
    return [tuple(float(v) for v in r) for r in cover.rects]


def cover_svg(rects, shear: int = 0, width: int = 480, height: int = 480) -> str:
    """Outline rectangles (x0, x1, y0, y1), optionally as parallelograms eta -> eta + A xi."""
    R = np.asarray(rects, float)
    polys = []
    for x0, x1, y0, y1 in R:
        P = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        P[:, 1] += shear * P[:, 0]
        polys.append(P)
    allp = np.concatenate(polys) if polys else np.zeros((1, 2))
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    m = 20
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    for P in polys:
        X = m + (P[:, 0] - lo[0]) / span[0] * (width - 2 * m)
        Y = height - m - (P[:, 1] - lo[1]) / span[1] * (height - 2 * m)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X, Y))
        out.append(f'<polygon points="{pts}" fill="none" stroke="steelblue" stroke-width="0.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
