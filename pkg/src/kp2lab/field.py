"""Spectral fields on the torus and space-time Lebesgue norms of free waves.

A :class:`SpectralField` stores unnormalized Fourier coefficients, so that

    u(x, y) = sum_{xi, eta} a(xi, eta) exp(i (x xi + y eta / gamma))

on [0, 2pi] x [0, 2pi gamma] and ||u||_{L^2}^2 = (2pi)^2 gamma sum |a|^2.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math
from pathlib import Path

import numpy as np
import scipy.fft

from .lattice import SQUARE, DomainError, TorusSpec, dyadic_shell, omega_array


class RefinementError(RuntimeError):
    """Quadrature did not stabilise under refinement."""

    def __init__(self, message, value=None, delta=None):
        super().__init__(message)
        self.value = value
        self.delta = delta


@dataclass(frozen=True, eq=False)
class SpectralField:
    xi: np.ndarray
    eta: np.ndarray
    amp: np.ndarray
    torus: TorusSpec = SQUARE
    real: bool = False

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=np.int64).ravel()
        eta = np.asarray(self.eta, dtype=np.int64).ravel()
        amp = np.asarray(self.amp, dtype=np.complex128).ravel()
        if not (xi.shape == eta.shape == amp.shape):
            raise ValueError("xi, eta, amp must have equal length")
        if np.any((xi == 0) & (amp != 0)):
            raise DomainError("mean-zero violated: nonzero amplitude at xi = 0")
        if xi.size > 1 and np.unique(np.stack([xi, eta]), axis=1).shape[1] != xi.size:
            raise ValueError("duplicate modes")
        for name, arr in (("xi", xi), ("eta", eta), ("amp", amp)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_modes(cls, modes: dict, torus: TorusSpec = SQUARE, real: bool = False):
        keys = sorted(modes)
        xi = [k[0] for k in keys]
        eta = [k[1] for k in keys]
        return cls(np.array(xi, dtype=np.int64), np.array(eta, dtype=np.int64),
                   np.array([modes[k] for k in keys], dtype=complex), torus, real)

    def __len__(self):
        return self.amp.size

    def modes(self) -> dict:
        return {(int(a), int(b)): complex(c) for a, b, c in zip(self.xi, self.eta, self.amp)}

    @property
    def box(self) -> tuple[int, int]:
        if len(self) == 0:
            return 0, 0
        return int(np.abs(self.xi).max()), int(np.abs(self.eta).max())

    def scaled(self, c: complex) -> "SpectralField":
        return SpectralField(self.xi, self.eta, c * self.amp, self.torus, self.real)

    def with_amp(self, amp) -> "SpectralField":
        return SpectralField(self.xi, self.eta, amp, self.torus, self.real)

    def sheared(self, A: int) -> "SpectralField":
        """Galilean relabelling eta -> eta + A xi."""
        return SpectralField(self.xi, self.eta + int(A) * self.xi, self.amp, self.torus, self.real)

    def omega(self) -> np.ndarray:
        return omega_array(self.xi, self.eta, float(self.torus.gamma))

    def is_hermitian(self) -> bool:
        m = self.modes()
        return all(np.conj(v) == m.get((-a, -b), 0) for (a, b), v in m.items())


@dataclass(frozen=True)
class QuadratureSpec:
    """Time/space resolution for Lebesgue norms of S_KP(t) f.

    ``time_samples`` is the number of Gauss-Legendre nodes on [0, t_end]; when
    None it is derived from the bandwidth of the integrand.
    """

    t_end: float = 1.0
    spatial_oversample: int = 2
    time_samples: int | None = None
    gl_order: int = 16
    panel_phase: float = 24.0
    tol: float = 1e-6
    check: bool = True

    def __post_init__(self):
        if self.spatial_oversample < 2:
            raise ValueError("spatial_oversample must be >= 2")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")


# ---------------------------------------------------------------------------
# basic operations

def l2_norm(f: SpectralField) -> float:
    return math.sqrt(f.torus.area) * float(np.linalg.norm(f.amp))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Anisotropic H^{s,0} norm on coefficients with <xi> = 1 + |xi|."""
    w = (1.0 + np.abs(f.xi)) ** (2 * s)
    return float(np.sqrt(np.sum(w * np.abs(f.amp) ** 2)))


def propagate(f: SpectralField, t: float) -> SpectralField:
    """S_KP(t) f: multiply every amplitude by exp(i t omega)."""
    if len(f) == 0 or t == 0:
        return f
    return f.with_amp(f.amp * np.exp(1j * t * f.omega()))


def hermitian_symmetrize(modes: dict) -> dict:
    out = {}
    for (a, b), v in modes.items():
        w = modes.get((-a, -b), 0)
        out[(a, b)] = 0.5 * (v + np.conj(w))
        out[(-a, -b)] = 0.5 * (w + np.conj(v))
    return out


def random_field(xi_range, eta_range, seed: int, torus: TorusSpec = SQUARE,
                 real: bool = False, decay: float = 0.0) -> SpectralField:
    """Complex Gaussian amplitudes on the integer box, xi = 0 excluded.

    ``decay`` multiplies each amplitude by (1 + xi^2 + eta^2)^(-decay/2).
    """
    rng = np.random.default_rng(seed)
    xs = [x for x in range(xi_range[0], xi_range[1] + 1) if x != 0]
    ys = list(range(eta_range[0], eta_range[1] + 1))
    X, Y = np.meshgrid(np.array(xs), np.array(ys), indexing="ij")
    X, Y = X.ravel(), Y.ravel()
    amp = rng.standard_normal(X.size) + 1j * rng.standard_normal(X.size)
    amp *= (1.0 + X ** 2 + Y ** 2) ** (-decay / 2)
    f = SpectralField(X, Y, amp, torus)
    if real:
        return SpectralField.from_modes(hermitian_symmetrize(f.modes()), torus, real=True)
    return f


# ---------------------------------------------------------------------------
# extremizer families

def make_extremizer_linear(N: int, torus: TorusSpec = SQUARE) -> SpectralField:
    """Characteristic data at xi = N, eta = 0..floor(sqrt N)."""
    M = math.isqrt(N)
    eta = np.arange(M + 1)
    return SpectralField(np.full(M + 1, N), eta, np.ones(M + 1), torus)


def shorttime_eta_max(N: int, alpha: float) -> int:
    e = (1 + alpha) / 2
    m = int(math.floor(N ** e + 1e-9))
    return m


def make_extremizer_shorttime(N: int, alpha: float, xi0: int | None = None,
                              torus: TorusSpec = SQUARE) -> SpectralField:
    """Characteristic data at xi = xi0, eta = 0..floor(N^((1+alpha)/2))."""
    xi0 = N if xi0 is None else xi0
    if dyadic_shell(xi0) != N:
        raise ValueError(f"|xi0| = {abs(xi0)} is not in [{N}, {2 * N})")
    if not (0 <= alpha <= 1):
        raise ValueError("alpha must lie in [0, 1]")
    M = shorttime_eta_max(N, alpha)
    eta = np.arange(M + 1)
    return SpectralField(np.full(M + 1, xi0), eta, np.ones(M + 1), torus)


def make_band_field(N: int, k: int, interval: tuple[int, int], seed: int,
                    torus: TorusSpec = SQUARE, scale: float = 1.0) -> SpectralField:
    """Random field on xi in [a, b), eta in [k S, (k+1) S] with S = scale N^2."""
    a, b = interval
    if not (1 <= k <= N):
        raise ValueError("need 1 <= k <= N")
    if b - a > max(1, N // k):
        raise ValueError(f"|I| = {b - a} exceeds max(1, N/k) = {max(1, N // k)}")
    xs = [x for x in range(a, b) if N <= abs(x) < 2 * N]
    if not xs:
        raise ValueError("empty band: no xi of the interval lies in the N-shell")
    S = int(round(scale * N * N))
    ys = np.arange(k * S, (k + 1) * S + 1)
    X, Y = np.meshgrid(np.array(xs), ys, indexing="ij")
    rng = np.random.default_rng(seed)
    amp = rng.standard_normal(X.size) + 1j * rng.standard_normal(X.size)
    return SpectralField(X.ravel(), Y.ravel(), amp, torus)


# ---------------------------------------------------------------------------
# space-time norms

def _gauss_legendre_nodes(t_end: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    h = t_end / panels
    starts = np.arange(panels) * h
    t = (starts[:, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
    wt = np.tile(0.5 * h * w, panels)
    return t, wt


def _reduced_phase(f: SpectralField) -> np.ndarray:
    """omega minus its least-squares affine part in (xi, eta).

    Subtracting a + b xi + c eta from the phase translates u(t) in space by a
    t-dependent vector and multiplies it by a unimodular constant, which leaves
    every spatial L^p norm unchanged while shrinking the time bandwidth.
    """
    w = f.omega()
    if w.size <= 3:
        return w - w.mean()
    G = np.column_stack([np.ones_like(w), f.xi.astype(float), f.eta.astype(float)])
    coef, *_ = np.linalg.lstsq(G, w, rcond=None)
    r = w - G @ coef
    return r - 0.5 * (r.max() + r.min())


def _spatial_power_integrals(f: SpectralField, phase: np.ndarray, times: np.ndarray,
                             p: int, oversample: int) -> np.ndarray:
    """int_{T^2} |S(t) f|^p for each t; exact for trigonometric polynomials."""
    area = f.torus.area
    xi0, eta0 = int(f.xi.min()), int(f.eta.min())
    ix = f.xi - xi0
    iy = f.eta - eta0
    sx, sy = int(ix.max()) + 1, int(iy.max()) + 1
    one_d = sx == 1
    ny = scipy.fft.next_fast_len(oversample * sy)
    nx = 1 if one_d else scipy.fft.next_fast_len(oversample * sx)
    out = np.empty(times.size)
    batch = max(1, (1 << 21) // (nx * ny))
    for s in range(0, times.size, batch):
        tb = times[s:s + batch]
        coef = f.amp[None, :] * np.exp(1j * tb[:, None] * phase[None, :])
        grid = np.zeros((tb.size, nx, ny), dtype=complex)
        grid[:, ix, iy] = coef
        if one_d:
            u = scipy.fft.ifft(grid, axis=2, norm="forward")
        else:
            u = scipy.fft.ifft2(grid, axes=(1, 2), norm="forward")
        m2 = u.real ** 2 + u.imag ** 2
        if p == 2:
            out[s:s + batch] = area * m2.mean(axis=(1, 2))
        else:
            out[s:s + batch] = area * (m2 * m2).mean(axis=(1, 2))
    return out


def _auto_panels(phase: np.ndarray, p: int, q: QuadratureSpec) -> int:
    band = (p // 2) * float(phase.max() - phase.min()) if phase.size else 0.0
    return max(1, math.ceil(band * q.t_end / q.panel_phase))


def spatial_lp_integral(f: SpectralField, p: int, t: float = 0.0, oversample: int = 2) -> float:
    """int_{T^2} |S(t) f|^p at a single time."""
    if p not in (2, 4):
        raise ValueError("only p = 2 and p = 4 are supported")
    return float(_spatial_power_integrals(f, f.omega(), np.array([float(t)]), p, oversample)[0])


def lp_spacetime_integral(f: SpectralField, p: int, q: QuadratureSpec, panels: int) -> float:
    """int_0^T int |S(t)f|^p with ``panels`` Gauss-Legendre panels."""
    phase = _reduced_phase(f)
    t, w = _gauss_legendre_nodes(q.t_end, panels, q.gl_order)
    vals = _spatial_power_integrals(f, phase, t, p, q.spatial_oversample)
    return float(np.sum(w * vals))


def lp_spacetime_norm_report(f: SpectralField, p: int, q: QuadratureSpec = QuadratureSpec()):
    """(norm, relative refinement delta, time_samples) for p in {2, 4}."""
    if p not in (2, 4):
        raise ValueError("only p = 2 and p = 4 are supported")
    if len(f) == 0 or not np.any(f.amp):
        return 0.0, 0.0, 0
    if q.time_samples is not None:
        panels = max(1, math.ceil(q.time_samples / q.gl_order))
    else:
        panels = _auto_panels(_reduced_phase(f), p, q)
    coarse = lp_spacetime_integral(f, p, q, panels) ** (1.0 / p)
    if not q.check:
        return coarse, float("nan"), panels * q.gl_order
    fine = lp_spacetime_integral(f, p, q, 2 * panels) ** (1.0 / p)
    delta = abs(fine - coarse) / abs(fine)
    if delta > q.tol:
        raise RefinementError(
            f"time refinement moved the L^{p} norm by {delta:.3e} > {q.tol:.1e}",
            value=fine, delta=delta)
    return fine, delta, 2 * panels * q.gl_order


def lp_spacetime_norm(f: SpectralField, p: int, q: QuadratureSpec = QuadratureSpec()) -> float:
    return lp_spacetime_norm_report(f, p, q)[0]


# ---------------------------------------------------------------------------
# serialization

def write_field(f: SpectralField, path) -> None:
    """One line per mode ``xi eta re im`` after a header carrying gamma and the real flag."""
    g = f.torus.gamma
    lines = [f"# kp2-field gamma={g.numerator}/{g.denominator} real={int(f.real)}"]
    for a, b, c in zip(f.xi, f.eta, f.amp):
        lines.append(f"{int(a)} {int(b)} {float(c.real)!r} {float(c.imag)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path) -> SpectralField:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# kp2-field"):
        raise ValueError(f"{path}: missing kp2-field header")
    meta = dict(tok.split("=", 1) for tok in text[0].split()[2:])
    torus = TorusSpec(Fraction(meta.get("gamma", "1")))
    real = bool(int(meta.get("real", "0")))
    xi, eta, amp = [], [], []
    for line in text[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        a, b, re_, im_ = line.split()
        xi.append(int(a))
        eta.append(int(b))
        amp.append(complex(float(re_), float(im_)))
    return SpectralField(np.array(xi, dtype=np.int64), np.array(eta, dtype=np.int64),
                         np.array(amp, dtype=complex), torus, real)
