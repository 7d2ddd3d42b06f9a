"""Space-time convolutions of modulation-localized data and lattice counting.

A :class:`ModeSet` holds nodes (xi, eta) with tau-profiles that are piecewise
constant on the global grid tau = k * dtau, dtau = 1/m.  The convolution of two
boxes in tau is a trapezoid, i.e. a sum of four ramps, so the L^2 norm of
f1 * f2 can be evaluated exactly from the ramp breakpoints without ever
sampling tau.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .fitting import FitResult, fit_loglog, parallel_map
from .lattice import SQUARE, DomainError, DyadicShell, TorusSpec, dyadic_shell


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Nodes plus run-length tau-profiles.

    Run ``r`` covers cells ``start[r] .. start[r] + length[r] - 1`` of node
    ``node[r]`` with the constant value ``value[r]``.
    """

    xi: np.ndarray
    eta: np.ndarray
    node: np.ndarray
    start: np.ndarray
    length: np.ndarray
    value: np.ndarray
    m: int
    shell: DyadicShell
    xi_window: tuple[int, int]
    torus: TorusSpec = SQUARE

    @property
    def dtau(self) -> float:
        return 1.0 / self.m

    @property
    def n_nodes(self) -> int:
        return int(self.xi.size)

    @property
    def window_length(self) -> int:
        return self.xi_window[1] - self.xi_window[0]

    def l2_norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.value) ** 2 * self.length)) / self.m)

    def _replace(self, **kw) -> "ModeSet":
        d = {k: getattr(self, k) for k in ("xi", "eta", "node", "start", "length", "value",
                                          "m", "shell", "xi_window", "torus")}
        d.update(kw)
        return ModeSet(**d)

    def scaled(self, c: complex) -> "ModeSet":
        return self._replace(value=c * self.value)

    def tau_shifted(self, cells: int) -> "ModeSet":
        """Translate every profile by ``cells`` grid cells (no longer centred on omega)."""
        return self._replace(start=self.start + int(cells))

    def sheared(self, A: int) -> "ModeSet":
        """eta -> eta + A xi with profiles recentred by the induced phase change."""
        g2 = self.torus.gamma ** 2
        shift = []
        for x, e in zip(self.xi.tolist(), self.eta.tolist()):
            s = Fraction(-2 * A * e - A * A * x) / g2 * self.m
            if s.denominator != 1:
                raise ValueError("phase change is not a whole number of tau cells")
            shift.append(int(s))
        shift = np.array(shift, dtype=np.int64)
        return self._replace(eta=self.eta + int(A) * self.xi, start=self.start + shift[self.node])

    def restrict_xi(self, lo: int, hi: int) -> "ModeSet":
        """Nodes with lo <= xi < hi."""
        keep = (self.xi >= lo) & (self.xi < hi)
        idx = np.flatnonzero(keep)
        remap = -np.ones(self.n_nodes, dtype=np.int64)
        remap[idx] = np.arange(idx.size)
        rk = keep[self.node]
        return self._replace(xi=self.xi[idx], eta=self.eta[idx], node=remap[self.node[rk]],
                             start=self.start[rk], length=self.length[rk],
                             value=self.value[rk], xi_window=(max(lo, self.xi_window[0]),
                                                              min(hi, self.xi_window[1])))

    def max_modulation(self) -> float:
        """max |tau - omega| over the support (cell edges included)."""
        if self.node.size == 0:
            return 0.0
        w = _omega_fractions(self.xi, self.eta, self.torus)
        out = Fraction(0)
        for r in range(self.node.size):
            om = w[int(self.node[r])]
            a = Fraction(int(self.start[r]), self.m)
            b = Fraction(int(self.start[r] + self.length[r]), self.m)
            out = max(out, abs(a - om), abs(b - om))
        return float(out)


def _omega_fractions(xi, eta, torus: TorusSpec):
    g = torus.gamma
    return [Fraction(x) ** 3 - (Fraction(e) / g) ** 2 / x for x, e in zip(xi.tolist(), eta.tolist())]


def _snap_cells(center: Fraction, lo_off: Fraction, hi_off: Fraction, m: int) -> tuple[int, int]:
    """Cells [k/m, (k+1)/m] contained in [center + lo_off, center + hi_off]."""
    lo = math.ceil((center + lo_off) * m)
    hi = math.floor((center + hi_off) * m)
    return lo, hi - lo


def make_modeset(shell: DyadicShell, interval: tuple[int, int], eta_box, profile="characteristic",
                 dtau: float | Fraction = Fraction(1, 8), seed: int | None = None,
                 halfwidth: Fraction | None = None, torus: TorusSpec = SQUARE,
                 runs_per_node: int = 4) -> ModeSet:
    """Populate a ModeSet on xi in [a, b) intersected with the N-shell.

    ``eta_box`` is either an inclusive pair (lo, hi) or a callable xi -> (lo, hi).
    Bottom shells use tau in [omega - h, omega + h] with h = ``halfwidth`` or L;
    other shells use L <= |tau - omega| <= 2L.  ``profile`` is "characteristic"
    or "gaussian"; the gaussian profile splits each support into up to
    ``runs_per_node`` runs with independent complex normal values.
    """
    dtau = Fraction(dtau).limit_denominator(1 << 20)
    if dtau.numerator != 1:
        raise ValueError("dtau must be 1/m for an integer m")
    m = dtau.denominator
    L = shell.L
    if dtau > Fraction(L, 8):
        raise ValueError(f"dtau = {dtau} exceeds L/8 = {Fraction(L, 8)}")
    a, b = interval
    xs = [x for x in range(a, b) if x != 0 and shell.contains_xi(x)]
    if profile not in ("characteristic", "gaussian"):
        raise ValueError(f"unknown profile {profile!r}")
    rng = np.random.default_rng(seed) if profile == "gaussian" else None
    if shell.bottom:
        h = Fraction(L) if halfwidth is None else Fraction(halfwidth)
        pieces = [(-h, h)]
    else:
        pieces = [(Fraction(-2 * L), Fraction(-L)), (Fraction(L), Fraction(2 * L))]
    g = torus.gamma
    X, Y, nodes, starts, lens, vals = [], [], [], [], [], []
    for x in xs:
        lo, hi = eta_box(x) if callable(eta_box) else eta_box
        for e in range(int(lo), int(hi) + 1):
            om = Fraction(x) ** 3 - (Fraction(e) / g) ** 2 / x
            k = len(X)
            used = False
            for lo_off, hi_off in pieces:
                s0, n = _snap_cells(om, lo_off, hi_off, m)
                if n <= 0:
                    continue
                used = True
                if rng is None:
                    starts.append(s0)
                    lens.append(n)
                    vals.append(1.0)
                    nodes.append(k)
                    continue
                r = min(runs_per_node, n)
                cuts = np.linspace(0, n, r + 1).round().astype(int)
                z = rng.standard_normal(r) + 1j * rng.standard_normal(r)
                for j in range(r):
                    if cuts[j + 1] > cuts[j]:
                        starts.append(s0 + int(cuts[j]))
                        lens.append(int(cuts[j + 1] - cuts[j]))
                        vals.append(z[j])
                        nodes.append(k)
            if used:
                X.append(x)
                Y.append(e)
    if not X:
        raise ValueError("no admissible nodes in the requested box")
    return ModeSet(np.array(X, dtype=np.int64), np.array(Y, dtype=np.int64),
                   np.array(nodes, dtype=np.int64), np.array(starts, dtype=np.int64),
                   np.array(lens, dtype=np.int64), np.array(vals, dtype=complex), m, shell,
                   (int(a), int(b)), torus)


# ---------------------------------------------------------------------------
# convolution

def convolve_l2(f1: ModeSet, f2: ModeSet) -> float:
    """||f1 * f2||_{L^2(R x Z^2)}, exact for piecewise-constant profiles."""
    if f1.m != f2.m:
        raise GridMismatchError(f"tau grids differ: 1/{f1.m} vs 1/{f2.m}")
    if f1.torus != f2.torus:
        raise GridMismatchError("ModeSets live on different tori")
    if f1.node.size == 0 or f2.node.size == 0:
        return 0.0
    return math.sqrt(max(_conv_sq(f1, f2), 0.0))


def _conv_sq(f1: ModeSet, f2: ModeSet) -> float:
    r1, r2 = f1.node.size, f2.node.size
    i = np.repeat(np.arange(r1), r2)
    j = np.tile(np.arange(r2), r1)
    n1, n2 = f1.node[i], f2.node[j]
    ox = f1.xi[n1] + f2.xi[n2]
    oy = f1.eta[n1] + f2.eta[n2]
    a = f1.start[i] + f2.start[j]
    l1, l2 = f1.length[i], f2.length[j]
    w = f1.value[i] * f2.value[j] / f1.m

    # four ramp impulses per trapezoid; dc tracks open trapezoids
    pos = np.concatenate([a, a + l1, a + l2, a + l1 + l2])
    wt = np.concatenate([w, -w, -w, w])
    nt = w.size
    dc = np.concatenate([np.ones(nt, np.int64), np.zeros(2 * nt, np.int64),
                         -np.ones(nt, np.int64)])
    kx = np.tile(ox, 4)
    ky = np.tile(oy, 4)
    order = np.lexsort((-dc, pos, ky, kx))
    pos, wt, dc = pos[order], wt[order], dc[order]

    cnt = np.cumsum(dc)
    reset = cnt == 0
    seg = np.concatenate([[0], np.cumsum(reset)[:-1]])
    first = np.concatenate([[True], seg[1:] != seg[:-1]])
    seg_start = np.maximum.accumulate(np.where(first, np.arange(seg.size), 0))

    cs = np.cumsum(wt)
    base = np.where(seg_start > 0, cs[seg_start - 1], 0)
    slope = cs - base  # slope right of each impulse

    same = np.zeros(seg.size, dtype=bool)
    same[:-1] = seg[1:] == seg[:-1]
    gap = np.zeros(seg.size)
    gap[:-1] = (pos[1:] - pos[:-1]).astype(float)
    inc = np.where(same, slope * gap, 0)
    cs2 = np.cumsum(inc)
    excl = cs2 - inc
    V = excl - excl[seg_start]
    Vn = V + inc
    piece = gap / 3.0 * (np.abs(V) ** 2 + (V * np.conj(Vn)).real + np.abs(Vn) ** 2)
    return float(np.sum(piece[same])) / f1.m


def convolve_l2_dense(f1: ModeSet, f2: ModeSet) -> float:
    """Brute-force reference: explicit sums over node pairs on the full tau grid."""
    if f1.m != f2.m:
        raise GridMismatchError("tau grids differ")
    prof1 = _dense_profiles(f1)
    prof2 = _dense_profiles(f2)
    out = {}
    for (x1, e1), (s1, a1) in prof1.items():
        for (x2, e2), (s2, a2) in prof2.items():
            g = np.convolve(a1, a2) / f1.m
            key = (x1 + x2, e1 + e2)
            k0 = s1 + s2 + 1  # knot index of g[0]
            if key in out:
                k_old, g_old = out[key]
                lo = min(k_old, k0)
                hi = max(k_old + g_old.size, k0 + g.size)
                acc = np.zeros(hi - lo, dtype=complex)
                acc[k_old - lo:k_old - lo + g_old.size] += g_old
                acc[k0 - lo:k0 - lo + g.size] += g
                out[key] = (lo, acc)
            else:
                out[key] = (k0, g)
    total = 0.0
    for _, g in out.values():
        v = np.concatenate([[0], g, [0]])
        total += np.sum(np.abs(v[:-1]) ** 2 + (v[:-1] * np.conj(v[1:])).real
                        + np.abs(v[1:]) ** 2) / 3.0
    return math.sqrt(total / f1.m)


def _dense_profiles(f: ModeSet) -> dict:
    out = {}
    for k in range(f.n_nodes):
        rs = np.flatnonzero(f.node == k)
        lo = int(f.start[rs].min())
        hi = int((f.start[rs] + f.length[rs]).max())
        arr = np.zeros(hi - lo, dtype=complex)
        for r in rs:
            arr[f.start[r] - lo:f.start[r] - lo + f.length[r]] = f.value[r]
        out[(int(f.xi[k]), int(f.eta[k]))] = (lo, arr)
    return out


# ---------------------------------------------------------------------------
# closed-form bounds

@dataclass(frozen=True)
class BourgainBound:
    value: float
    terms: tuple[float, float, float]
    branch: str  # which argument of the min is active: "L_max" or "I_min"


def bourgain_bound(N1, N2, L1, L2, I1, I2, eps: float = 0.01) -> BourgainBound:
    """B(N1, N2, L1, L2, |I1|, |I2|) evaluated literally, with the active min-branch."""
    Lmin, Lmax = min(L1, L2), max(L1, L2)
    Nmin, Nmax = min(N1, N2), max(N1, N2)
    Imin = min(I1, I2)
    t1 = Lmin ** 0.5 * Lmax ** 0.25 * Nmin ** 0.25
    t2 = Lmin ** 0.5 * Imin ** 0.5
    m1 = Lmin ** 0.5 * Lmax ** (0.5 + eps) * (Nmin / Nmax) ** 0.25
    m2 = t1 * Imin ** 0.5
    t3, branch = (m1, "L_max") if m1 <= m2 else (m2, "I_min")
    return BourgainBound(t1 + t2 + t3, (t1, t2, t3), branch)


def bracket(x: float) -> float:
    return 1.0 + abs(x)


def transversality_bound(I_min, L_min, L_max, D) -> float:
    """I_min^(1/2) L_min^(1/2) <L_max / D>^(1/2)."""
    return math.sqrt(I_min * L_min * bracket(L_max / D))


def secondorder_bound(A, L_min, L_max, N2) -> float:
    """<A>^(1/2) L_min^(1/2) <L_max N2>^(1/4)."""
    return math.sqrt(bracket(A) * L_min) * bracket(L_max * N2) ** 0.25


def transversality(f1: ModeSet, f2: ModeSet) -> tuple[float, float]:
    """(min, max) over node pairs of |eta1/xi1 - eta2/xi2|."""
    s1 = f1.eta / f1.xi
    s2 = f2.eta / f2.xi
    d = np.abs(s1[:, None] - s2[None, :])
    return float(d.min()), float(d.max())


# ---------------------------------------------------------------------------
# counting oracles

def _slice_values(tau: Fraction, xi: int, eta: int, xi1: int, box1, box2):
    """Admissible eta1 and the exact integer form of tau - omega1 - omega2."""
    xi2 = xi - xi1
    if xi1 == 0 or xi2 == 0:
        raise DomainError("counting needs xi1 != 0 and xi - xi1 != 0")
    lo = max(int(box1[0]), eta - int(box2[1]))
    hi = min(int(box1[1]), eta - int(box2[0]))
    if hi < lo:
        return np.zeros(0, dtype=object), None, None
    e1 = np.arange(lo, hi + 1).astype(object)
    e2 = eta - e1
    tau = Fraction(tau)
    # (tau - w1 - w2) * xi1 * xi2 * td as Python integers
    tn, td = tau.numerator, tau.denominator
    num = tn * xi1 * xi2 - td * ((xi1 ** 4 - e1 * e1) * xi2 + (xi2 ** 4 - e2 * e2) * xi1)
    den = td * abs(xi1 * xi2)
    return e1, num, den


def count_eta_slice(tau, xi: int, eta: int, xi1: int, box1, box2, L_max) -> int:
    """#{eta1 in box1 : eta - eta1 in box2, |tau - w(xi1, eta1) - w(xi - xi1, eta - eta1)| <= L_max}."""
    e1, num, den = _slice_values(tau, xi, eta, xi1, box1, box2)
    if e1.size == 0:
        return 0
    L = Fraction(L_max)
    lim = L.numerator * den
    return int(sum(1 for v in num if abs(v) * L.denominator <= lim))


def count_eta_slice_secondorder(tau, xi: int, eta: int, xi1: int, box1, box2, L_max) -> int:
    """Same count, restricted to xi1 and xi - xi1 of equal sign."""
    if xi1 == 0 or xi - xi1 == 0 or (xi1 > 0) != (xi - xi1 > 0):
        raise DomainError("second-order count needs xi1 and xi - xi1 of the same sign")
    return count_eta_slice(tau, xi, eta, xi1, box1, box2, L_max)


def slice_transversality(xi: int, eta: int, xi1: int, box1, box2) -> float:
    """min over admissible eta1 of |eta1/xi1 - (eta - eta1)/(xi - xi1)|."""
    lo = max(int(box1[0]), eta - int(box2[1]))
    hi = min(int(box1[1]), eta - int(box2[0]))
    if hi < lo:
        return math.inf
    e1 = np.arange(lo, hi + 1, dtype=float)
    return float(np.min(np.abs(e1 / xi1 - (eta - e1) / (xi - xi1))))


def count_bound_first(L_max, D, C: float = 1.0) -> float:
    return C * bracket(L_max / D)


def count_bound_second(L_max, N_min, C: float = 1.0) -> float:
    return C * (1.0 + math.sqrt(L_max * N_min))


# ---------------------------------------------------------------------------
# Cordoba-Fefferman windows

def cordoba_width(N1, N2, D, L_max) -> int:
    return math.ceil(D * D * N2 / N1 ** 2 + L_max / N1 ** 2 + 1)


def cordoba_window_decompose(f1: ModeSet, f2: ModeSet, D: float):
    """Split both xi-windows into intervals of the almost-orthogonality width.

    Returns (width, pairs) with pairs a list of ((a1, b1), (a2, b2)) half-open
    windows that both carry nodes.
    """
    N1, N2 = f1.shell.N, f2.shell.N
    if not N2 < N1:
        raise ValueError("need N2 < N1")
    if not (np.all(f1.xi > 0) and np.all(f2.xi > 0)) and \
            not (np.all(f1.xi < 0) and np.all(f2.xi < 0)):
        raise ValueError("both supports must have xi of one common sign")
    L_max = max(f1.shell.L, f2.shell.L)
    w = cordoba_width(N1, N2, D, L_max)

    def windows(f):
        a, b = f.xi_window
        out = []
        for s in range(a, b, w):
            e = min(s + w, b)
            if np.any((f.xi >= s) & (f.xi < e)):
                out.append((s, e))
        return out

    pairs = [(u, v) for u in windows(f1) for v in windows(f2)]
    return w, pairs


def cordoba_overlap(f1: ModeSet, f2: ModeSet, D: float) -> float:
    """||f1 * f2||^2 / sum over window pairs of ||f1_J * f2_K||^2."""
    _, pairs = cordoba_window_decompose(f1, f2, D)
    total = convolve_l2(f1, f2) ** 2
    parts = sum(convolve_l2(f1.restrict_xi(*u), f2.restrict_xi(*v)) ** 2 for u, v in pairs)
    return total / parts if parts > 0 else 0.0


# ---------------------------------------------------------------------------
# sharpness example with single xi-nodes

def sharpness_pair(N1: int, N2: int, dtau=Fraction(1, 8), halfwidth=Fraction(1, 2),
                   torus: TorusSpec = SQUARE) -> tuple[ModeSet, ModeSet]:
    """Characteristic data at xi_i = N_i, eta in an interval of length ceil(sqrt N2)
    centred at 0, tau within 1/2 of omega."""
    if N2 > N1:
        raise ValueError("need N2 <= N1")
    M = math.isqrt(N2 - 1) + 1 if N2 > 1 else 1
    lo = -(M // 2)
    box = (lo, lo + M - 1)
    f1 = make_modeset(DyadicShell(N1, 1, bottom=True), (N1, N1 + 1), box, dtau=dtau,
                      halfwidth=halfwidth, torus=torus)
    f2 = make_modeset(DyadicShell(N2, 1, bottom=True), (N2, N2 + 1), box, dtau=dtau,
                      halfwidth=halfwidth, torus=torus)
    return f1, f2


def bilinear_quotient(f1: ModeSet, f2: ModeSet) -> float:
    return convolve_l2(f1, f2) / (f1.l2_norm() * f2.l2_norm())


def sharpness_bilinear_fit(N2_list, N1_ratio: int = 4, dtau=Fraction(1, 8),
                           threads: int | None = None) -> FitResult:
    N2_list = [int(n) for n in N2_list]
    if len(N2_list) < 2:
        raise ValueError("need at least two N2 values")
    if N1_ratio < 1:
        raise ValueError("N1_ratio must be >= 1")

    def point(N2):
        return bilinear_quotient(*sharpness_pair(N1_ratio * N2, N2, dtau))

    return fit_loglog(N2_list, parallel_map(point, N2_list, threads))


# ---------------------------------------------------------------------------
# randomized suites

def _dyadic(rng, lo_exp: int, hi_exp: int) -> int:
    return 1 << int(rng.integers(lo_exp, hi_exp + 1))


def _random_slope_box(rng, N, width, height, slope):
    """Window in the N-shell and an eta-box hugging eta = slope * xi."""
    a = int(rng.integers(N, 2 * N - width + 1)) if width < N else N
    b = a + width

    def box(x, s=slope, h=height):
        c = int(round(s * x))
        return c, c + h - 1
    return (a, b), box


def counting_suite(n_cases: int = 1000, seed: int = 0, N_max: int = 128):
    """Exact eta1-counts against both counting bounds.

    Returns rows (case_id, kind, count, bound_unit, ratio); bound_unit is the
    bound with constant 1 so ratio is the empirical constant.
    """
    rng = np.random.default_rng(seed)
    rows = []
    top = int(math.log2(N_max))
    for c in range(n_cases):
        N1 = _dyadic(rng, 0, top)
        N2 = _dyadic(rng, 0, top)
        xi1 = int(rng.integers(N1, 2 * N1))
        xi2 = int(rng.integers(N2, 2 * N2))
        xi = xi1 + xi2
        h = int(rng.integers(1, 4 * max(N1, N2) + 1))
        c1 = int(rng.integers(-4 * N1, 4 * N1 + 1))
        c2 = int(rng.integers(-4 * N2, 4 * N2 + 1))
        box1, box2 = (c1, c1 + h), (c2, c2 + h)
        eta = int(rng.integers(c1 + c2, c1 + c2 + 2 * h + 1))
        L = _dyadic(rng, 0, int(math.log2(max(N1, N2) ** 3)))
        e1 = int(rng.integers(max(box1[0], eta - box2[1]), min(box1[1], eta - box2[0]) + 1))
        w = Fraction(xi1) ** 3 - Fraction(e1) ** 2 / xi1 \
            + Fraction(xi2) ** 3 - Fraction(eta - e1) ** 2 / xi2
        tau = w + Fraction(int(rng.integers(-8 * L, 8 * L + 1)), 8)
        n = count_eta_slice(tau, xi, eta, xi1, box1, box2, L)
        D = slice_transversality(xi, eta, xi1, box1, box2)
        if D > 0:
            b = count_bound_first(L, D)
            rows.append((c, "transversal", n, b, n / b))
        Nmin = min(dyadic_shell(xi1), dyadic_shell(xi2))
        n2 = count_eta_slice_secondorder(tau, xi, eta, xi1, box1, box2, L)
        b = count_bound_second(L, Nmin)
        rows.append((c, "secondorder", n2, b, n2 / b))
    return rows


def _random_pair(rng, N_max, profile, halfwidth_cells=None):
    top = int(math.log2(N_max))
    N1 = _dyadic(rng, 0, top)
    N2 = _dyadic(rng, 0, top)
    Lcap1 = int(math.log2(max(N1, N2) ** 3))
    L1 = _dyadic(rng, 0, Lcap1)
    L2 = _dyadic(rng, 0, Lcap1)
    w1 = int(rng.integers(1, min(N1, 6) + 1))
    w2 = int(rng.integers(1, min(N2, 6) + 1))
    h1 = int(rng.integers(1, 9))
    h2 = int(rng.integers(1, 9))
    s1 = float(rng.uniform(-4, 4))
    s2 = float(rng.uniform(-4, 4))
    I1, box1 = _random_slope_box(rng, N1, w1, h1, s1)
    I2, box2 = _random_slope_box(rng, N2, w2, h2, s2)
    sd = int(rng.integers(0, 2 ** 31))
    f1 = make_modeset(DyadicShell(N1, L1, bottom=True), I1, box1, profile, seed=sd)
    f2 = make_modeset(DyadicShell(N2, L2, bottom=True), I2, box2, profile, seed=sd + 1)
    return f1, f2


def bilinear_suite(n_cases: int = 1000, seed: int = 0, N_max: int = 128, eps: float = 0.01,
                   threads: int | None = None):
    """Empirical constants for the three bilinear bounds on random data.

    Each row: (case_id, kind, lhs, bound, ratio[, branch]) where lhs =
    ||f1 * f2|| / (||f1|| ||f2||).
    """
    rng = np.random.default_rng(seed)
    specs = []
    for c in range(n_cases):
        prof = "gaussian" if c % 2 else "characteristic"
        specs.append((c, prof, int(rng.integers(0, 2 ** 31))))

    def one(spec):
        c, prof, sd = spec
        r = np.random.default_rng(sd)
        f1, f2 = _random_pair(r, N_max, prof)
        q = bilinear_quotient(f1, f2)
        N1, N2 = f1.shell.N, f2.shell.N
        L1, L2 = f1.shell.L, f2.shell.L
        I1, I2 = f1.window_length, f2.window_length
        out = []
        B = bourgain_bound(N1, N2, L1, L2, I1, I2, eps)
        out.append((c, "bourgain", q, B.value, q / B.value, B.branch))
        D, _ = transversality(f1, f2)
        if D > 0:
            b = transversality_bound(min(I1, I2), min(L1, L2), max(L1, L2), D)
            out.append((c, "transversal", q, b, q / b, ""))
        same = (np.all(f1.xi > 0) and np.all(f2.xi > 0))
        if same and N2 < N1:
            b = secondorder_bound(max(I1, I2), min(L1, L2), max(L1, L2), N2)
            out.append((c, "secondorder", q, b, q / b, ""))
        return out

    rows = []
    for chunk in parallel_map(one, specs, threads):
        rows.extend(chunk)
    return rows


def suite_max(rows, kind: str) -> float:
    vals = [r[4] for r in rows if r[1] == kind]
    return max(vals) if vals else 0.0


def galilean_covariance_defect(f1: ModeSet, f2: ModeSet, A: int) -> float:
    """Relative change of convolve_l2 when both inputs are sheared by A."""
    a = convolve_l2(f1, f2)
    b = convolve_l2(f1.sheared(A), f2.sheared(A))
    return abs(a - b) / a if a else abs(b)



def covariance_suite(n_cases: int = 30, seed: int = 11, N_max: int = 64, shears=(1, -3)) -> float:
    """Largest relative Galilean covariance defect over random pairs and shears."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_cases):
        f1, f2 = _random_pair(rng, N_max, "gaussian" if k % 2 else "characteristic")
        for A in shears:
            worst = max(worst, galilean_covariance_defect(f1, f2, int(A)))
    return worst
