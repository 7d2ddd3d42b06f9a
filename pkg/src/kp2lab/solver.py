"""Pseudospectral KP-II integrator with an integrating-factor RK4 stepper.

The equation is u_t + u_xxx + d_x^{-1} u_yy = sign * u u_x on the torus
[0, 2pi] x [0, 2pi gamma].  In Fourier coefficients (same convention as
:class:`~kp2lab.field.SpectralField`) this reads

    a_t = i omega a + sign * (i xi / 2) FT(u^2),

and the linear part is integrated exactly.  The xi = 0 plane is kept at zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np
import scipy.fft
from scipy.integrate import solve_ivp

from .field import SpectralField
from .lattice import SQUARE, TorusSpec, is_dyadic, omega_array


class InstabilityError(RuntimeError):
    pass


def _wavenumbers(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n).round().astype(np.int64)


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    torus: TorusSpec = SQUARE

    def __post_init__(self):
        if not (is_dyadic(self.nx) and is_dyadic(self.ny)) or self.nx < 4 or self.ny < 1:
            raise ValueError("grid sizes must be powers of two (nx >= 4)")

    @property
    def xi(self) -> np.ndarray:
        return np.broadcast_to(_wavenumbers(self.nx)[:, None], (self.nx, self.ny))

    @property
    def eta(self) -> np.ndarray:
        return np.broadcast_to(_wavenumbers(self.ny)[None, :], (self.nx, self.ny))

    @property
    def mask(self) -> np.ndarray:
        """2/3 rule: keep |xi| < nx/3 and |eta| < ny/3, and drop xi = 0."""
        return (3 * np.abs(self.xi) < self.nx) & (3 * np.abs(self.eta) < self.ny) & (self.xi != 0)

    def omega(self) -> np.ndarray:
        xi = self.xi.astype(float)
        out = np.zeros((self.nx, self.ny))
        nz = xi != 0
        out[nz] = omega_array(xi[nz], self.eta[nz], float(self.torus.gamma))
        return out


@dataclass(frozen=True, eq=False)
class SolverState:
    """Coefficients on the FFT layout of ``grid`` at ``time``."""

    coeff: np.ndarray
    time: float
    grid: Grid
    dt: float
    sign: int = 1

    @property
    def field(self) -> SpectralField:
        m = self.grid.mask
        return SpectralField(self.grid.xi[m], self.grid.eta[m], self.coeff[m], self.grid.torus,
                             real=True)


def state_from_field(f: SpectralField, nx: int, ny: int, dt: float, sign: int = 1,
                     t0: float = 0.0) -> SolverState:
    """Place a real, mean-zero field on the grid; modes must survive dealiasing."""
    g = Grid(nx, ny, f.torus)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    c = np.zeros((nx, ny), dtype=complex)
    if len(f):
        if np.any(3 * np.abs(f.xi) >= nx) or np.any(3 * np.abs(f.eta) >= ny):
            raise ValueError("initial modes exceed the dealiased range of the grid")
        c[f.xi % nx, f.eta % ny] = f.amp
    c[~g.mask] = 0
    sym = _symmetrize(c)
    if np.max(np.abs(c - sym)) > 1e-12 * (1 + np.max(np.abs(c))):
        raise ValueError("initial data is not real-valued")
    return SolverState(sym, float(t0), g, float(dt), sign)


def _reflect(c: np.ndarray) -> np.ndarray:
    """c(-xi, -eta) on the FFT layout."""
    return np.roll(c[::-1, ::-1], (1, 1), axis=(0, 1))


def _symmetrize(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + np.conj(_reflect(c)))


def _physical(c: np.ndarray) -> np.ndarray:
    n = c.size
    return (scipy.fft.ifft2(c) * n).real


def _nonlinear(c: np.ndarray, ikx: np.ndarray, mask: np.ndarray, sign: int) -> np.ndarray:
    u = _physical(c)
    sq = scipy.fft.fft2(u * u) / c.size
    return np.where(mask, sign * 0.5 * ikx * sq, 0)


def step(state: SolverState, nonlinear: bool = True, growth_limit: float | None = None) -> SolverState:
    """One integrating-factor RK4 step."""
    g = state.grid
    dt = state.dt
    mask = g.mask
    w = g.omega()
    E = np.where(mask, np.exp(1j * w * dt), 0)
    E2 = np.where(mask, np.exp(0.5j * w * dt), 0)
    a = state.coeff
    if nonlinear:
        ikx = 1j * g.xi
        N = lambda c: _nonlinear(c, ikx, mask, state.sign)  # noqa: E731
        k1 = N(a)
        k2 = N(E2 * (a + 0.5 * dt * k1))
        k3 = N(E2 * a + 0.5 * dt * k2)
        k4 = N(E * a + dt * E2 * k3)
        new = E * a + dt / 6 * (E * k1 + 2 * E2 * (k2 + k3) + k4)
    else:
        new = E * a
    new = _symmetrize(np.where(mask, new, 0))
    assert np.array_equal(new, np.conj(_reflect(new))), "Hermitian symmetry lost"
    assert not np.any(new[g.xi == 0]), "mean-zero violated"
    if growth_limit is not None and np.max(np.abs(new)) > growth_limit:
        raise InstabilityError(f"amplitude exceeded {growth_limit:g} at t = {state.time + dt:g}")
    if not np.all(np.isfinite(new)):
        raise InstabilityError(f"non-finite amplitude at t = {state.time + dt:g}")
    return replace(state, coeff=new, time=state.time + dt)


def invariants(state: SolverState) -> tuple[float, float]:
    """(M, E) with M = 1/2 int u^2 and the Hamiltonian conserved for the chosen sign:

        E = 1/2 int (u_x^2 - (d_x^{-1} u_y)^2) + sign/6 int u^3.

    With sign = -1 this is 1/2 int (u_x^2 - u^3/3 - (d_x^{-1} u_y)^2).
    """
    g = state.grid
    area = g.torus.area
    c = state.coeff
    p = np.abs(c) ** 2
    M = 0.5 * area * float(p.sum())
    xi = g.xi.astype(float)
    ey = g.eta / float(g.torus.gamma)
    quad = np.zeros_like(p)
    nz = xi != 0
    quad[nz] = (xi[nz] ** 2 - (ey[nz] / xi[nz]) ** 2) * p[nz]
    u = _physical(c)
    # modes |k| < n/3 make the grid mean of u^3 exact
    cubic = area * float(np.mean(u ** 3))
    E = 0.5 * area * float(quad.sum()) + state.sign / 6.0 * cubic
    return M, E


def stable_dt(f: SpectralField, nx: int, ny: int, c: float = 0.05) -> float:
    """Heuristic step: c / (max |xi| * max |u| + 1), rounded down to 1/2^k."""
    s = state_from_field(f, nx, ny, 1.0)
    umax = float(np.max(np.abs(_physical(s.coeff)))) if len(f) else 0.0
    h = c / (nx / 3 * umax + 1.0)
    return 2.0 ** math.floor(math.log2(h))


@dataclass
class Trajectory:
    times: list
    fields: list
    M: list
    E: list
    bands: list = field(default_factory=list)  # dicts {N: ||P_N u(t)||}

    def band_sup(self) -> dict:
        out: dict = {}
        for b in self.bands:
            for N, v in b.items():
                out[N] = max(out.get(N, 0.0), v)
        return out

    def rows(self) -> list:
        Ns = sorted({N for b in self.bands for N in b})
        head = ["t", "M", "E"] + [f"band_{N}" for N in Ns]
        body = [[t, m, e] + [b.get(N, 0.0) for N in Ns]
                for t, m, e, b in zip(self.times, self.M, self.E, self.bands)]
        return [head] + body


def band_norms(f: SpectralField) -> dict:
    """{N: coefficient l2 norm of P_N f} over dyadic shells |xi| in [N, 2N)."""
    out: dict = {}
    a = np.abs(f.xi)
    keep = a > 0
    shells = 1 << np.floor(np.log2(a[keep])).astype(np.int64)
    p = np.abs(f.amp[keep]) ** 2
    for N in np.unique(shells).tolist():
        out[int(N)] = math.sqrt(float(p[shells == N].sum()))
    return out


def run(initial: SpectralField, T_end: float, dt: float, nx: int = 64, ny: int = 64,
        observe_every: int = 1, nonlinear: bool = True, sign: int = 1,
        growth_factor: float = 1e6) -> Trajectory:
    """Integrate to T_end (a whole number of steps) and record observers."""
    n = int(round(T_end / dt))
    if n < 1 or abs(n * dt - T_end) > 1e-12 * max(1.0, T_end):
        raise ValueError("T_end must be a whole number of steps")
    s = state_from_field(initial, nx, ny, dt, sign)
    peak = float(np.max(np.abs(s.coeff))) if s.coeff.size else 0.0
    limit = growth_factor * peak if peak > 0 else None
    traj = Trajectory([], [], [], [], [])

    def record(st):
        M, E = invariants(st)
        f = st.field
        traj.times.append(st.time)
        traj.fields.append(f)
        traj.M.append(M)
        traj.E.append(E)
        traj.bands.append(band_norms(f))

    record(s)
    for k in range(1, n + 1):
        s = step(s, nonlinear, limit)
        # recompute the clock from the step count to avoid drift
        s = replace(s, time=k * dt)
        if k % observe_every == 0 or k == n:
            record(s)
    return traj


def final_state(initial: SpectralField, T_end: float, dt: float, nx: int = 64, ny: int = 64,
                nonlinear: bool = True, sign: int = 1) -> SolverState:
    n = int(round(T_end / dt))
    s = state_from_field(initial, nx, ny, dt, sign)
    for k in range(1, n + 1):
        s = replace(step(s, nonlinear), time=k * dt)
    return s


def physical_field(state: SolverState) -> np.ndarray:
    """u on the nx x ny collocation grid."""
    return _physical(state.coeff)


# ---------------------------------------------------------------------------
# independent 1D reference: KdV u_t + u_xxx = sign * u u_x

def kdv_reference(u0_hat: dict, T_end: float, n: int = 64, sign: int = 1,
                  rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """Physical solution at T_end on n points, from coefficients {xi: a}.

    Uses real FFTs and an adaptive Dormand-Prince 8(5,3) integrator in the
    interaction picture, independent of the RK4 stepper above.
    """
    k = np.arange(n // 2 + 1)
    keep = 3 * k < n
    keep[0] = False
    v0 = np.zeros(n // 2 + 1, dtype=complex)
    for xi, a in u0_hat.items():
        if xi > 0:
            v0[xi] = a
    w = k.astype(float) ** 3

    def rhs(t, y):
        v = y[: k.size] + 1j * y[k.size:]
        c = np.where(keep, v * np.exp(1j * w * t), 0)
        u = np.fft.irfft(c * n, n)
        sq = np.fft.rfft(u * u) / n
        dc = np.where(keep, sign * 0.5j * k * sq, 0) * np.exp(-1j * w * t)
        return np.concatenate([dc.real, dc.imag])

    y0 = np.concatenate([v0.real, v0.imag])
    sol = solve_ivp(rhs, (0.0, T_end), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    v = sol.y[: k.size, -1] + 1j * sol.y[k.size:, -1]
    c = np.where(keep, v * np.exp(1j * w * T_end), 0)
    return np.fft.irfft(c * n, n)


def smooth_random_data(seed: int, box: int = 4, amplitude: float = 0.5, decay: float = 3.0,
                       torus: TorusSpec = SQUARE) -> SpectralField:
    """Real random data on |xi|, |eta| <= box with algebraic decay."""
    from .field import random_field
    return random_field((-box, box), (-box, box), seed, torus, real=True,
                        decay=decay).scaled(amplitude)


def order_study(f: SpectralField, T_end: float = 1.0, dts=(1 / 256, 1 / 512, 1 / 1024, 1 / 2048),
                nx: int = 64, ny: int = 64):
    """Self-convergence: e(dt) = sup |u_dt - u_{dt/2}| at T_end for consecutive dts.

    Returns (fitted order, list of (dt, e(dt))).
    """
    sols = [physical_field(final_state(f, T_end, dt, nx, ny)) for dt in dts]
    pairs = [(dts[i], float(np.max(np.abs(sols[i] - sols[i + 1])))) for i in range(len(dts) - 1)]
    x = np.log2([p[0] for p in pairs])
    y = np.log2([p[1] for p in pairs])
    order = float(np.polyfit(x, y, 1)[0])
    return order, pairs
