"""Explicit unitaries: clock and shift, exact theta-pairs, Voiculescu pairs,
Haar samples, seeded perturbations, scalar twists and the tensor lift."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import IrrationalTarget, SoftTorusError
from .matcore import UNITARY_TOL, as_cmatrix, dagger, expm, kron, operator_norm, unitarity_defect


@dataclass(frozen=True)
class RationalAngle:
    """Rational rotation angle p/q, normalized to (-1/2, 1/2] in lowest terms."""

    p: int
    q: int = 1

    def __post_init__(self):
        if self.q == 0:
            raise SoftTorusError("denominator must be nonzero")
        frac = Fraction(int(self.p), int(self.q))
        frac -= math.floor(frac + Fraction(1, 2))
        if frac == Fraction(-1, 2):
            frac = Fraction(1, 2)
        object.__setattr__(self, "p", frac.numerator)
        object.__setattr__(self, "q", frac.denominator)

    @classmethod
    def parse(cls, text: str) -> "RationalAngle":
        """Parse "p/q" or an integer string."""
        num, _, den = str(text).strip().partition("/")
        try:
            return cls(int(num), int(den) if den else 1)
        except ValueError as exc:
            raise SoftTorusError(f"cannot parse rational angle {text!r}") from exc

    @classmethod
    def snap(cls, x: float, max_q: int = 64, tol: float = 1e-9) -> "RationalAngle":
        """Nearest rational with denominator <= ``max_q``; IrrationalTarget if none within ``tol``."""
        frac = Fraction(float(x)).limit_denominator(max_q)
        if abs(float(frac) - float(x)) > tol:
            raise IrrationalTarget(f"{x!r} is not within {tol} of a rational with q <= {max_q}")
        return cls(frac.numerator, frac.denominator)

    @property
    def value(self) -> float:
        return self.p / self.q

    @property
    def phase(self) -> complex:
        """lambda = exp(2 pi i theta)."""
        return np.exp(2j * np.pi * self.value)

    def __float__(self):
        return self.value

    def __str__(self):
        return f"{self.p}/{self.q}"


Angle = Union[RationalAngle, float]


def angle_value(theta: Angle) -> float:
    return theta.value if isinstance(theta, RationalAngle) else float(theta)


def as_rational(theta: Angle) -> RationalAngle:
    if isinstance(theta, RationalAngle):
        return theta
    return RationalAngle.snap(float(theta))


@dataclass(frozen=True, eq=False)
class UnitaryPair:
    """Two unitaries of equal size plus the target angle theta of uv = e^{2 pi i theta} vu."""

    u: np.ndarray
    v: np.ndarray
    theta: Angle = RationalAngle(0)

    def __post_init__(self):
        u, v = as_cmatrix(self.u).copy(), as_cmatrix(self.v).copy()
        if u.shape != v.shape:
            raise SoftTorusError(f"shape mismatch {u.shape} vs {v.shape}")
        for name, m in (("u", u), ("v", v)):
            if unitarity_defect(m) > UNITARY_TOL:
                raise SoftTorusError(f"{name} is not unitary")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def with_theta(self, theta: Angle) -> "UnitaryPair":
        return UnitaryPair(self.u, self.v, theta)


def clock(q: int, theta: Angle) -> np.ndarray:
    """diag(1, lambda, ..., lambda^{q-1}) with lambda = e^{2 pi i theta}."""
    k = np.arange(q)
    if isinstance(theta, RationalAngle):
        # reduce k*p mod the denominator exactly before exponentiating
        turns = ((k * theta.p) % theta.q) / theta.q
    else:
        turns = k * float(theta)
    return np.diag(np.exp(2j * np.pi * turns)).astype(np.complex128)


def shift(q: int) -> np.ndarray:
    """Cyclic shift: ones on the subdiagonal and in the top-right corner."""
    return np.roll(np.eye(q, dtype=np.complex128), 1, axis=0)


def theta_pair(theta: RationalAngle, m: int = 1) -> UnitaryPair:
    """Canonical exact pair (I_m (x) S1, I_m (x) S2) of size q*m."""
    theta = as_rational(theta)
    eye = np.eye(m)
    return UnitaryPair(kron(eye, clock(theta.q, theta)), kron(eye, shift(theta.q)), theta)


def voiculescu(n: int) -> UnitaryPair:
    """(clock(n, 1/n), shift(n)), viewed as an almost commuting pair (theta = 0)."""
    if n < 2:
        raise SoftTorusError("voiculescu pairs need n >= 2")
    return UnitaryPair(clock(n, RationalAngle(1, n)), shift(n), RationalAngle(0))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def haar_unitary(n: int, seed) -> np.ndarray:
    """Haar-distributed unitary; QR of a complex Ginibre matrix with phase fix."""
    rng = _rng(seed)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_pair(n: int, seed, theta: Angle = RationalAngle(0)) -> UnitaryPair:
    """Two independent Haar unitaries; their seeds are spawned from ``seed``."""
    first, second = np.random.SeedSequence(int(seed)).generate_state(2)
    return UnitaryPair(haar_unitary(n, first), haar_unitary(n, second), theta)


def random_skew_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    """Skew-Hermitian matrix with unit operator norm."""
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (g + dagger(g))
    return 1j * h / operator_norm(h)


def perturb_pair(pair: UnitaryPair, eps: float, seed) -> UnitaryPair:
    """Multiplicative perturbation (u exp(eps K1), v exp(eps K2)); ||u' - u|| <= eps."""
    if not 0.0 <= eps <= 0.5:
        raise SoftTorusError("eps must lie in [0, 0.5]")
    if eps == 0.0:
        return pair
    rng = _rng(seed)
    k1 = random_skew_hermitian(pair.n, rng)
    k2 = random_skew_hermitian(pair.n, rng)
    return UnitaryPair(pair.u @ expm(eps * k1), pair.v @ expm(eps * k2), pair.theta)


def twist(pair: UnitaryPair, r1: complex, r2: complex) -> UnitaryPair:
    """Scalar rescaling (r1 u, r2 v) by unit complex numbers."""
    if abs(abs(r1) - 1.0) > 1e-12 or abs(abs(r2) - 1.0) > 1e-12:
        raise SoftTorusError("twist scalars must have unit modulus")
    return UnitaryPair(r1 * pair.u, r2 * pair.v, pair.theta)


def conjugate(pair: UnitaryPair, w: np.ndarray) -> UnitaryPair:
    """Simultaneous conjugation (w* u w, w* v w)."""
    return UnitaryPair(dagger(w) @ pair.u @ w, dagger(w) @ pair.v @ w, pair.theta)


def tensor_lift(pair: UnitaryPair, theta: RationalAngle) -> UnitaryPair:
    """(u (x) S2, v (x) S1) with S1 = clock(q, theta), S2 = shift(q).

    The multiplicative commutator of the lift is (uvu*v*) (x) e^{-2 pi i theta} I_q,
    so a pair whose commutator is close to e^{2 pi i theta} lifts to an almost
    commuting pair.
    """
    theta = as_rational(theta)
    s1, s2 = clock(theta.q, theta), shift(theta.q)
    return UnitaryPair(kron(pair.u, s2), kron(pair.v, s1), RationalAngle(0))
