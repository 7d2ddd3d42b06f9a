"""Modulation-weighted norms X_N, X_N^b, short-time norms F_N and the energy norm.

Conventions:

* norms are taken on Fourier coefficients (no torus-area factor), matching
  :func:`kp2lab.field.sobolev_norm`;
* the time Fourier transform is unitary, g^(tau) = (2 pi)^(-1/2) int e^(-i t tau) g(t) dt;
* the modulation partition is eta_1 = eta0 and eta_L(s) = eta0(s/L) - eta0(2s/L)
  for dyadic L >= 2, so that sum_L eta_L = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .bilinear import ModeSet, _omega_fractions
from .field import SpectralField
from .fitting import FitResult, fit_loglog, parallel_map
from .lattice import SQUARE, DomainError, TorusSpec, is_dyadic, omega_array


# ---------------------------------------------------------------------------
# the bump and the modulation partition

def _psi(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def eta0(r):
    """C^infinity even bump: 1 on |r| <= 1, 0 on |r| >= 2."""
    r = np.abs(np.asarray(r, float))
    a = _psi(2.0 - r)
    b = _psi(r - 1.0)
    with np.errstate(invalid="ignore"):
        mid = a / (a + b)
    return np.where(r <= 1.0, 1.0, np.where(r >= 2.0, 0.0, mid))


def eta_L(L: int, s):
    """Partition piece at dyadic modulation L."""
    s = np.asarray(s, float)
    if L == 1:
        return eta0(s)
    return eta0(s / L) - eta0(2.0 * s / L)


def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _antiderivative_table(fn, panels: int = 4096, order: int = 12):
    """Spline for C(x) = int_0^x fn(s)^2 ds on [0, 2], exact derivative at nodes."""
    edges = np.linspace(0.0, 2.0, panels + 1)
    x, w = _gl(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
    vals = (0.5 * (b - a) * w * fn(nodes) ** 2).sum(axis=1)
    C = np.concatenate([[0.0], np.cumsum(vals)])
    return CubicHermiteSpline(edges, C, fn(edges) ** 2)


_TABLES: dict = {}


def _cum(which: str, x):
    """Odd extension of int_0^x piece^2, constant beyond |x| = 2."""
    if which not in _TABLES:
        fn = eta0 if which == "bottom" else (lambda s: eta0(s) - eta0(2 * s))
        _TABLES[which] = _antiderivative_table(fn)
    sp = _TABLES[which]
    x = np.asarray(x, float)
    c = sp(np.minimum(np.abs(x), 2.0))
    return np.sign(x) * c


def shell_integral(L: int, a, b):
    """int_a^b eta_L(s)^2 ds, vectorized over interval endpoints."""
    if L == 1:
        v = _cum("bottom", b) - _cum("bottom", a)
    else:
        v = L * (_cum("upper", np.asarray(b, float) / L) - _cum("upper", np.asarray(a, float) / L))
    return np.maximum(v, 0.0)


def _dyadics_upto(smax: float) -> list[int]:
    out = [1]
    while out[-1] / 2 < smax:
        out.append(out[-1] * 2)
    return out


# ---------------------------------------------------------------------------
# X_N on piecewise-constant tau profiles

def _check_support(xi, N: int):
    if not is_dyadic(N):
        raise ValueError(f"N must be a power of two, got {N}")
    a = np.abs(np.asarray(xi))
    if a.size and (np.any(a < N) or np.any(a >= 2 * N)):
        raise DomainError(f"support violation: |xi| outside [{N}, {2 * N})")


def shell_masses(f: ModeSet) -> dict:
    """{L: ||eta_L(tau - omega) f||_2^2} for the run-length profiles of f."""
    if f.node.size == 0:
        return {1: 0.0}
    om = _omega_fractions(f.xi, f.eta, f.torus)
    lo = np.empty(f.node.size)
    hi = np.empty(f.node.size)
    for r in range(f.node.size):
        w = om[int(f.node[r])]
        lo[r] = float(Fraction(int(f.start[r]), f.m) - w)
        hi[r] = float(Fraction(int(f.start[r] + f.length[r]), f.m) - w)
    amp2 = np.abs(f.value) ** 2
    smax = float(max(np.abs(lo).max(), np.abs(hi).max()))
    return {L: float(np.sum(amp2 * shell_integral(L, lo, hi))) for L in _dyadics_upto(smax)}


def _weighted_sum(masses: dict, weight) -> float:
    return float(sum(weight(L) * math.sqrt(m) for L, m in masses.items() if m > 0))


def xnorm(f: ModeSet, N: int) -> float:
    """sum_L L^(1/2) (1 + L/N^3)^(1/4) ||eta_L(tau - omega) f||_2."""
    _check_support(f.xi, N)
    return _weighted_sum(shell_masses(f), lambda L: L ** 0.5 * (1 + L / N ** 3) ** 0.25)


def xnorm_b(f: ModeSet, N: int, b: float) -> float:
    """sum_L L^b ||eta_L(tau - omega) f||_2."""
    _check_support(f.xi, N)
    return _weighted_sum(shell_masses(f), lambda L: float(L) ** b)


def add_modesets(f: ModeSet, g: ModeSet) -> ModeSet:
    """Pointwise sum of two profiles on the same tau grid."""
    if f.m != g.m or f.torus != g.torus:
        raise ValueError("profiles live on different grids")
    cells: dict = {}
    for h in (f, g):
        for r in range(h.node.size):
            key = (int(h.xi[h.node[r]]), int(h.eta[h.node[r]]))
            d = cells.setdefault(key, {})
            s, n, v = int(h.start[r]), int(h.length[r]), complex(h.value[r])
            # breakpoints: accumulate a difference array keyed by cell index
            d[s] = d.get(s, 0) + v
            d[s + n] = d.get(s + n, 0) - v
    keys = sorted(cells)
    xi = np.array([k[0] for k in keys], dtype=np.int64)
    eta = np.array([k[1] for k in keys], dtype=np.int64)
    node, start, length, value = [], [], [], []
    for i, k in enumerate(keys):
        pts = sorted(cells[k])
        acc = 0j
        for a, b in zip(pts, pts[1:]):
            acc += cells[k][a]
            if acc != 0:
                node.append(i)
                start.append(a)
                length.append(b - a)
                value.append(acc)
    lo = min(f.xi_window[0], g.xi_window[0])
    hi = max(f.xi_window[1], g.xi_window[1])
    return ModeSet(xi, eta, np.array(node, dtype=np.int64), np.array(start, dtype=np.int64),
                   np.array(length, dtype=np.int64), np.array(value, dtype=complex), f.m,
                   f.shell, (lo, hi), f.torus)


# ---------------------------------------------------------------------------
# space-time samples and short-time norms

@dataclass(frozen=True, eq=False)
class SpaceTimeSample:
    """u(t) = sum_j amp[t, j] e^(i(x xi_j + y eta_j / gamma)) sampled on t in [0, T].

    ``times`` is a uniform grid with times[0] = 0 and times[-1] = T.
    """

    xi: np.ndarray
    eta: np.ndarray
    times: np.ndarray
    amp: np.ndarray
    alpha: float
    torus: TorusSpec = SQUARE

    def __post_init__(self):
        T = float(self.times[-1])
        if not (0 < T <= 1) or self.times[0] != 0:
            raise ValueError("times must run over [0, T] with T in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.amp.shape != (self.times.size, self.xi.size):
            raise ValueError("amp must have shape (len(times), n_modes)")
        if np.any(self.xi == 0):
            raise DomainError("mean-zero violated")

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def omega(self) -> np.ndarray:
        return omega_array(self.xi, self.eta, float(self.torus.gamma))

    def profile(self) -> np.ndarray:
        """Interaction-picture amplitudes amp * exp(-i t omega)."""
        return self.amp * np.exp(-1j * np.outer(self.times, self.omega()))

    def localized(self, N: int) -> "SpaceTimeSample":
        """P_N u: modes with |xi| in [N, 2N)."""
        keep = (np.abs(self.xi) >= N) & (np.abs(self.xi) < 2 * N)
        return SpaceTimeSample(self.xi[keep], self.eta[keep], self.times, self.amp[:, keep],
                               self.alpha, self.torus)

    def restricted(self, T: float) -> "SpaceTimeSample":
        """Restriction to [0, T] on the same grid spacing (T must be a grid point)."""
        k = int(round(T / (self.times[1] - self.times[0])))
        if abs(self.times[k] - T) > 1e-12 * max(1.0, T):
            raise ValueError("T must be a grid point")
        return SpaceTimeSample(self.xi, self.eta, self.times[:k + 1], self.amp[:k + 1],
                               self.alpha, self.torus)

    def scaled(self, c: complex) -> "SpaceTimeSample":
        return SpaceTimeSample(self.xi, self.eta, self.times, c * self.amp, self.alpha, self.torus)

    def plus(self, other: "SpaceTimeSample") -> "SpaceTimeSample":
        if not (np.array_equal(self.xi, other.xi) and np.array_equal(self.eta, other.eta)
                and np.array_equal(self.times, other.times)):
            raise ValueError("samples must share modes and times")
        return SpaceTimeSample(self.xi, self.eta, self.times, self.amp + other.amp,
                               self.alpha, self.torus)


def free_sample(f: SpectralField, T: float, alpha: float, nt: int = 65) -> SpaceTimeSample:
    """Samples of the free evolution of f on [0, T]."""
    keep = f.xi != 0
    t = np.linspace(0.0, T, nt)
    w = omega_array(f.xi[keep], f.eta[keep], float(f.torus.gamma))
    amp = f.amp[keep][None, :] * np.exp(1j * np.outer(t, w))
    return SpaceTimeSample(f.xi[keep], f.eta[keep], t, amp, alpha, f.torus)


def trajectory_sample(times, fields, alpha: float) -> SpaceTimeSample:
    """Stack SpectralField snapshots sharing one mode list."""
    f0 = fields[0]
    amp = np.stack([g.amp for g in fields])
    keep = f0.xi != 0
    return SpaceTimeSample(f0.xi[keep], f0.eta[keep], np.asarray(times, float), amp[:, keep],
                           alpha, f0.torus)


def _extension(u: SpaceTimeSample):
    """Fixed extension: reflect the interaction-picture profile at 0 and T and
    cut off smoothly on [-T/2, 3T/2]."""
    T = u.T
    prof = u.profile()
    if u.times.size >= 4:
        sp = CubicSpline(u.times, prof, axis=0)
    else:
        sp = None

    def ev(t):
        t = np.asarray(t, float)
        r = np.where(t < 0, -t, np.where(t > T, 2 * T - t, t))
        r = np.clip(r, 0.0, T)
        vals = sp(r) if sp is not None else np.repeat(prof[:1], t.size, axis=0)
        cut = eta0(2.0 * np.abs(t - T / 2) / T)
        return vals * cut[:, None]

    return ev


def _tk_grid(u: SpaceTimeSample, N: int, density: float) -> np.ndarray:
    T = u.T
    w = N ** (-u.alpha)
    if w >= T:
        return np.array([T / 2])
    h = w / density
    k = int(math.floor(T / h))
    return T / 2 + h * np.arange(-k, k + 1)


_PANELS: dict = {}


def _low_panels(S: float, samples: int, split: float, Ls: tuple):
    """Gauss nodes on [-split, split], the transform matrix relative to the
    window start, and eta_L^2 at the nodes.  Cached: interior windows share them."""
    key = (round(S, 15), samples, round(split, 15), Ls)
    hit = _PANELS.get(key)
    if hit is not None:
        return hit
    pw = min(0.25, 1.0 / (4 * S))
    npan = int(math.ceil(2 * split / pw))
    x, wq = _gl(8)
    edges = np.linspace(-split, split, npan + 1)
    a, b = edges[:-1, None], edges[1:, None]
    sig = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    wts = (0.5 * (b - a) * wq).ravel()
    h = S / samples
    t = h * (np.arange(samples) + 0.5)
    E = np.exp(-1j * np.outer(sig, t))
    cut = [eta_L(L, sig) ** 2 for L in Ls]
    if len(_PANELS) > 16:
        _PANELS.clear()
    _PANELS[key] = (sig, wts, E, cut)
    return _PANELS[key]


def _window_masses(ev, tk: float, w: float, T: float, samples: int, split: float,
                   dual: float | None = None) -> dict:
    """{L: sum_j ||eta_L(sigma) FT[window * profile_j](sigma)||^2} for one window."""
    lo = max(tk - 2 * w, -T / 2)
    hi = min(tk + 2 * w, 1.5 * T)
    S = hi - lo
    h = S / samples
    t = lo + h * (np.arange(samples) + 0.5)
    g = ev(t) * eta0((t - tk) / w)[:, None]
    smax = math.pi / h
    Ls = _dyadics_upto(smax)
    masses = dict.fromkeys(Ls, 0.0)
    norm = h / math.sqrt(2 * math.pi)

    def weight(sig):
        if dual is None:
            return 1.0
        return 1.0 / (sig ** 2 + dual ** 2)

    # low modulation: direct transform on Gauss panels
    sig, wq, E, cut = _low_panels(S, samples, min(split, smax), tuple(Ls))
    wts = wq * weight(sig)
    dens = np.sum(np.abs(norm * (E @ g)) ** 2, axis=1)
    for L, c in zip(Ls, cut):
        masses[L] += float(np.sum(wts * dens * c))
    # high modulation: padded FFT, Riemann sum beyond the split
    P = 2 * samples
    G = np.fft.fft(g, n=P, axis=0)
    sg = 2 * math.pi * np.fft.fftfreq(P, d=h)
    dsig = 2 * math.pi / (P * h)
    far = np.abs(sg) > split
    if np.any(far):
        d = np.sum(np.abs(norm * G[far]) ** 2, axis=1) * dsig * weight(sg[far])
        for L in Ls:
            masses[L] += float(np.sum(d * eta_L(L, sg[far]) ** 2))
    return masses


def fnorm_profile(u: SpaceTimeSample, N: int, b: float | None = None, density: float = 4.0,
                  samples: int = 512, split: float = 32.0, dual: bool = False):
    """(t_k, windowed X_N norm) over the t_k grid of spacing N^(-alpha)/density.

    ``b`` switches to the X_N^b weight L^b; ``dual`` applies the Duhamel
    multiplier (tau - omega + i N^alpha)^(-1).
    """
    _check_support(u.xi, N)
    ev = _extension(u)
    w = N ** (-u.alpha)
    tks = _tk_grid(u, N, density)
    if b is None:
        weight = lambda L: L ** 0.5 * (1 + L / N ** 3) ** 0.25  # noqa: E731
    else:
        weight = lambda L: float(L) ** b  # noqa: E731
    out = []
    for tk in tks:
        m = _window_masses(ev, float(tk), w, u.T, samples, split, N ** u.alpha if dual else None)
        out.append((float(tk), _weighted_sum(m, weight)))
    return out


def fnorm(u: SpaceTimeSample, N: int, density: float = 4.0, **kw) -> float:
    """Short-time norm F_N(T) of P_N u, with the fixed extension (an upper bound)."""
    return max(v for _, v in fnorm_profile(u, N, density=density, **kw))


def fnorm_b(u: SpaceTimeSample, N: int, b: float, density: float = 4.0, **kw) -> float:
    return max(v for _, v in fnorm_profile(u, N, b=b, density=density, **kw))


def dual_norm(u: SpaceTimeSample, N: int, density: float = 4.0, **kw) -> float:
    """Diagnostic N_N(T) norm with the fixed extension."""
    return max(v for _, v in fnorm_profile(u, N, density=density, dual=True, **kw))


def fs_norm(u: SpaceTimeSample, s: float, **kw) -> float:
    """(sum_N N^(2s) ||P_N u||_{F_N(T)}^2)^(1/2) over the shells present."""
    total = 0.0
    for N in sorted({1 << (int(abs(x)).bit_length() - 1) for x in u.xi.tolist()}):
        total += N ** (2 * s) * fnorm(u.localized(N), N, **kw) ** 2
    return math.sqrt(total)


def energy_norm(fields, s: float) -> float:
    """(||P_{<8} u(0)||^2 + sum_{N>=8} N^(2s) sup_t ||P_N u(t)||^2)^(1/2).

    ``fields`` is a sequence of SpectralField snapshots, the first at t = 0.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one snapshot")
    f0 = fields[0]
    low = float(np.sum(np.abs(f0.amp[np.abs(f0.xi) < 8]) ** 2))
    sup: dict = {}
    for f in fields:
        a = np.abs(f.xi)
        sel = a >= 8
        if not np.any(sel):
            continue
        shells = 1 << (np.log2(a[sel]).astype(np.int64))
        p = np.abs(f.amp[sel]) ** 2
        for N in np.unique(shells).tolist():
            sup[N] = max(sup.get(N, 0.0), float(p[shells == N].sum()))
    return math.sqrt(low + sum(N ** (2 * s) * v for N, v in sup.items()))


# ---------------------------------------------------------------------------
# embedding and slack probes

def random_localized_sample(N: int, T: float, alpha: float, seed: int, n_modes: int = 12,
                            nt: int = 129, torus: TorusSpec = SQUARE) -> SpaceTimeSample:
    """Random modes in the N-shell with |eta| <= N^2 and profiles modulated at rates <= N^alpha."""
    rng = np.random.default_rng(seed)
    xi = rng.integers(N, 2 * N, size=n_modes) * rng.choice([-1, 1], size=n_modes)
    eta = rng.integers(-N * N, N * N + 1, size=n_modes)
    pairs = sorted(set(zip(xi.tolist(), eta.tolist())))
    xi = np.array([p[0] for p in pairs], dtype=np.int64)
    eta = np.array([p[1] for p in pairs], dtype=np.int64)
    n = xi.size
    c = (rng.normal(size=n) + 1j * rng.normal(size=n)) / math.sqrt(2)
    d = 0.3 * (rng.normal(size=n) + 1j * rng.normal(size=n)) / math.sqrt(2)
    nu = rng.uniform(-1.0, 1.0, size=n) * N ** alpha
    t = np.linspace(0.0, T, nt)
    prof = c[None, :] + d[None, :] * np.exp(1j * np.outer(t, nu))
    w = omega_array(xi, eta, float(torus.gamma))
    amp = prof * np.exp(1j * np.outer(t, w))
    return SpaceTimeSample(xi, eta, t, amp, alpha, torus)


def embedding_quotient(u: SpaceTimeSample, N: int, s: float = 0.0, **kw) -> float:
    """sup_t ||P_N u(t)||_{H^{s,0}} / (N^s ||P_N u||_{F_N(T)})."""
    v = u.localized(N)
    wts = (1.0 + np.abs(v.xi)) ** (2 * s)
    top = math.sqrt(float(np.max(np.sum(wts * np.abs(v.amp) ** 2, axis=1))))
    return top / (N ** s * fnorm(v, N, **kw))


def embedding_probe(suite_seed: int, N_list=(8, 16, 32, 64, 128, 256), alpha: float = 0.5,
                    T: float = 1.0, n_seeds: int = 3, threads: int | None = None) -> FitResult:
    """Fit log of the worst embedding quotient over seeds against log N."""
    def one(N):
        qs = [embedding_quotient(random_localized_sample(N, T, alpha, suite_seed * 1000 + k), N)
              for k in range(n_seeds)]
        return max(qs)

    vals = parallel_map(one, list(N_list), threads)
    return fit_loglog(list(N_list), vals)


def slack_quotient(u: SpaceTimeSample, N: int, b: float, **kw) -> float:
    return fnorm_b(u, N, b, **kw) / fnorm(u, N, **kw)


def slack_probe(b: float, T_list, seed: int, N: int = 16, alpha: float = 0.5,
                n_seeds: int = 3, threads: int | None = None) -> FitResult:
    """Fit log of the median quotient F_N^b(T)/F_N(T) against log T."""
    if b >= 0.5:
        raise ValueError("slack needs b < 1/2")

    def one(T):
        qs = [slack_quotient(random_localized_sample(N, T, alpha, seed * 1000 + k), N, b)
              for k in range(n_seeds)]
        return float(np.median(qs))

    vals = parallel_map(one, list(T_list), threads)
    return fit_loglog(list(T_list), vals)


def fnorm_restricted(u: SpaceTimeSample, T: float, N: int, T_grid=None, **kw) -> float:
    """Upper bound for F_N(T) of u restricted to [0, T].

    Any extension built from u on [0, T'] with T' >= T also extends u on
    [0, T], so the bound is the minimum over the grid ``T_grid`` of restriction
    lengths (default: T, 2T, 4T, ... up to the stored length).  This keeps the
    bound nondecreasing in T, as the infimum over extensions is.
    """
    if T_grid is None:
        T_grid = []
        t = T
        while t <= u.T * (1 + 1e-12):
            T_grid.append(t)
            t *= 2
    cands = [t for t in T_grid if T * (1 - 1e-12) <= t <= u.T * (1 + 1e-12)]
    if not cands:
        raise ValueError("no restriction length at or above T")
    return min(fnorm(u.restricted(t), N, **kw) for t in cands)
