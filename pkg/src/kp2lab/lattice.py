"""Integer frequency lattice, KP-II dispersion and resonance algebra.

Frequencies live on Z x Z/gamma: the x-frequency ``xi`` is an integer and the
y-frequency is ``eta / gamma`` with ``eta`` an integer.  All exact quantities
are returned as :class:`fractions.Fraction`; the float entry points round the
exact value once, so no cancellation enters through differences of large
dispersion values.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np


class DomainError(ValueError):
    """Raised when a frequency lies outside the domain of a symbol."""


@dataclass(frozen=True)
class TorusSpec:
    """Torus T x T_gamma with y-period 2*pi*gamma."""

    gamma: Fraction = Fraction(1)

    def __post_init__(self):
        g = Fraction(self.gamma).limit_denominator(10**12) if isinstance(self.gamma, float) \
            else Fraction(self.gamma)
        if not (Fraction(1, 2) < g <= 1):
            raise ValueError(f"gamma must lie in (1/2, 1], got {g}")
        object.__setattr__(self, "gamma", g)

    @property
    def area(self) -> float:
        """Lebesgue measure of [0, 2pi] x [0, 2pi*gamma]."""
        return (2 * math.pi) ** 2 * float(self.gamma)

    @property
    def is_square(self) -> bool:
        return self.gamma == 1


SQUARE = TorusSpec()


def dyadic_shell(xi: int) -> int:
    """The dyadic N with |xi| in [N, 2N)."""
    a = abs(int(xi))
    if a == 0:
        raise DomainError("xi = 0 belongs to no dyadic shell")
    return 1 << (a.bit_length() - 1)


def is_dyadic(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, order=True)
class FreqNode:
    xi: int
    eta: int

    @property
    def physical(self) -> bool:
        return self.xi != 0

    @property
    def shell(self) -> int:
        return dyadic_shell(self.xi)

    def __add__(self, other: "FreqNode") -> "FreqNode":
        return FreqNode(self.xi + other.xi, self.eta + other.eta)

    def __neg__(self) -> "FreqNode":
        return FreqNode(-self.xi, -self.eta)


def physical_node(xi: int, eta: int) -> FreqNode:
    """Constructor for physical (mean-zero) modes; rejects xi = 0."""
    if xi == 0:
        raise DomainError("physical modes require xi != 0")
    return FreqNode(int(xi), int(eta))


@dataclass(frozen=True)
class DyadicShell:
    """Region |xi| in [N, 2N) with modulation either in [L, 2L) or, for the
    bottom shell, |tau - omega| <= L."""

    N: int
    L: int
    bottom: bool = False

    def __post_init__(self):
        if not is_dyadic(self.N) or not is_dyadic(self.L):
            raise ValueError(f"N and L must be powers of two, got N={self.N}, L={self.L}")

    def contains_xi(self, xi: int) -> bool:
        return self.N <= abs(xi) < 2 * self.N

    def contains_modulation(self, m: float) -> bool:
        m = abs(m)
        if self.bottom:
            return m <= self.L
        return self.L <= m < 2 * self.L


# ---------------------------------------------------------------------------
# dispersion

def omega_exact(xi: int, eta: int, torus: TorusSpec = SQUARE) -> Fraction:
    if xi == 0:
        raise DomainError("omega is undefined at xi = 0")
    g = torus.gamma
    return Fraction(xi) ** 3 - (Fraction(eta) / g) ** 2 / xi


def omega(p: FreqNode, torus: TorusSpec = SQUARE) -> float:
    """xi^3 - (eta/gamma)^2 / xi."""
    if p.xi == 0:
        raise DomainError("omega is undefined at xi = 0")
    if torus.is_square:
        # exact integer numerator, one correctly rounded division
        return (p.xi ** 4 - p.eta ** 2) / p.xi
    return float(omega_exact(p.xi, p.eta, torus))


def omega_array(xi, eta, gamma: float = 1.0) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float) / gamma
    if np.any(xi == 0):
        raise DomainError("omega is undefined at xi = 0")
    return xi ** 3 - eta ** 2 / xi


def omega_continuous(xi: float, eta: float) -> float:
    return xi ** 3 - eta ** 2 / xi


def _check_pair(p1: FreqNode, p2: FreqNode):
    if p1.xi == 0 or p2.xi == 0 or p1.xi + p2.xi == 0:
        raise DomainError("resonance requires xi1, xi2, xi1 + xi2 all nonzero")


def resonance_exact(p1: FreqNode, p2: FreqNode, torus: TorusSpec = SQUARE) -> Fraction:
    _check_pair(p1, p2)
    x1, x2 = p1.xi, p2.xi
    x3 = x1 + x2
    cross = Fraction(p1.eta * x2 - p2.eta * x1) / torus.gamma
    return 3 * Fraction(x1 * x2 * x3) + cross ** 2 / (x1 * x2 * x3)


def resonance(p1: FreqNode, p2: FreqNode, torus: TorusSpec = SQUARE) -> float:
    """3 xi1 xi2 (xi1+xi2) + (eta1 xi2 - eta2 xi1)^2 / (xi1 xi2 (xi1+xi2))."""
    _check_pair(p1, p2)
    if torus.is_square:
        x1, x2 = p1.xi, p2.xi
        den = x1 * x2 * (x1 + x2)
        num = 3 * den * den + (p1.eta * x2 - p2.eta * x1) ** 2
        return num / den
    return float(resonance_exact(p1, p2, torus))


def resonance_array(xi1, eta1, xi2, eta2, gamma: float = 1.0) -> np.ndarray:
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    den = xi1 * xi2 * (xi1 + xi2)
    if np.any(den == 0):
        raise DomainError("resonance requires xi1, xi2, xi1 + xi2 all nonzero")
    cross = (np.asarray(eta1, dtype=float) * xi2 - np.asarray(eta2, dtype=float) * xi1) / gamma
    return 3 * den + cross ** 2 / den


def resonance_lower_bound_check(p1: FreqNode, p2: FreqNode,
                                torus: TorusSpec = SQUARE) -> tuple[float, float]:
    """(|Omega|, 3 |xi1 xi2 (xi1+xi2)|); the first always dominates."""
    _check_pair(p1, p2)
    kdv = 3 * abs(p1.xi * p2.xi * (p1.xi + p2.xi))
    return abs(resonance(p1, p2, torus)), float(kdv)


# ---------------------------------------------------------------------------
# symmetries

def galilean_shift(p: FreqNode, A: int) -> FreqNode:
    return FreqNode(p.xi, p.eta + int(A) * p.xi)


def galilean_phase_change(p: FreqNode, A: int, torus: TorusSpec = SQUARE) -> Fraction:
    """omega(xi, eta + A xi) - omega(xi, eta) = -2 A eta/gamma^2 - A^2 xi/gamma^2.

    Affine in (xi, eta); the A^2 term enters with a minus sign.
    """
    g2 = torus.gamma ** 2
    return Fraction(-2 * A * p.eta - A * A * p.xi) / g2


def anisotropic_rescale(p: FreqNode, N: int) -> tuple[float, float]:
    if N < 1:
        raise ValueError("N must be >= 1")
    return p.xi / N, p.eta / N ** 2
