"""Obstruction invariants of almost commuting unitary pairs.

The bott integer is read off the 2n x 2n positive matrix

    e(u, v) = [[f(u),            g(u) + h(u) v*],
               [g(u) + v h(u),   1 - f(u)      ]]

as (number of eigenvalues above 1/2) - n, and compared with the winding
number Tr log(u v u* v*) / 2 pi i. For matrices the two agree whenever e(u, v)
has a spectral gap at 1/2 and the commutator avoids -1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import GapTooSmall, NotCentral, NotUnitary, SpectrumOnCut
from .generators import Angle, RationalAngle, UnitaryPair, angle_value, as_rational, tensor_lift
from .matcore import (
    LOG0,
    PRINCIPAL,
    UNITARY_TOL,
    BranchCut,
    as_cmatrix,
    dagger,
    herm_eig,
    log_unitary,
    operator_norm,
    reunitarize,
    unitarity_defect,
    unitary_eig,
)

DEFAULT_GAP_POLICY = 0.05
EXEL_TOL = 1e-6


class TraceKind(enum.Enum):
    NORMALIZED = "normalized"
    UNNORMALIZED = "unnormalized"

    def apply(self, m: np.ndarray) -> complex:
        tr = np.trace(m)
        return tr / m.shape[0] if self is TraceKind.NORMALIZED else tr


def cut_for(theta: Angle) -> BranchCut:
    """Branch adapted to a target angle: the cut at +1 for theta = 1/2, else principal."""
    return LOG0 if math.isclose(angle_value(theta), 0.5) else PRINCIPAL


def fgh(t):
    """The three bott functions on the circle, as functions of the turn t in [0, 1].

    f is the tent 1 - 2t / 2t - 1; g and h carry sqrt(f - f^2) on the upper and
    lower half circle respectively, so g h = 0 and g^2 + h^2 = f - f^2.
    """
    t = np.asarray(t, dtype=float)
    upper = t <= 0.5
    f = np.where(upper, 1.0 - 2.0 * t, -1.0 + 2.0 * t)
    root = np.sqrt(np.clip(f - f * f, 0.0, None))
    g = np.where(upper, root, 0.0)
    h = np.where(upper, 0.0, root)
    return f, g, h


def _turns(z: np.ndarray) -> np.ndarray:
    return np.mod(np.angle(z) / (2 * np.pi), 1.0)


@dataclass(frozen=True, eq=False)
class BottReport:
    n: int
    w: np.ndarray
    gap: float
    rank_above: int
    bott: int
    winding_unnormalized: float
    exel_discrepancy: float
    defect: float

    @property
    def winding_normalized(self) -> float:
        return self.winding_unnormalized / self.n

    @property
    def exel_pass(self) -> bool:
        return bool(self.exel_discrepancy < EXEL_TOL)


def defect(pair: UnitaryPair) -> float:
    """||u v - e^{2 pi i theta} v u||."""
    lam = np.exp(2j * np.pi * angle_value(pair.theta))
    return operator_norm(pair.u @ pair.v - lam * (pair.v @ pair.u))


def mult_commutator(pair: UnitaryPair) -> np.ndarray:
    """w = u v u* v*, re-unitarized when rounding drift exceeds 1e-12."""
    u, v = pair.u, pair.v
    return reunitarize(u @ v @ dagger(u) @ dagger(v))


def winding(pair: UnitaryPair, cut: BranchCut = PRINCIPAL,
            tk: TraceKind = TraceKind.UNNORMALIZED) -> float:
    """Tr log_cut(u v u* v*) / 2 pi i under the chosen trace normalization."""
    log_w = log_unitary(mult_commutator(pair), cut)
    return float((tk.apply(log_w) / (2j * np.pi)).real)


def bott_matrix(u, v) -> np.ndarray:
    """The Hermitian 2n x 2n matrix e(u, v)."""
    u, v = as_cmatrix(u), as_cmatrix(v)
    n = u.shape[0]
    eig = unitary_eig(u)
    f, g, h = fgh(_turns(eig.values))
    V = eig.vectors
    fu = (V * f) @ dagger(V)
    gu = (V * g) @ dagger(V)
    hu = (V * h) @ dagger(V)
    upper = gu + hu @ dagger(v)
    e = np.block([[fu, upper], [dagger(upper), np.eye(n) - fu]])
    return 0.5 * (e + dagger(e))


def _sign_trace(x: np.ndarray, tol: float = 1e-13, max_iter: int = 100) -> float:
    # Newton iteration for the matrix sign function, independent of the eigensolver.
    for _ in range(max_iter):
        nxt = 0.5 * (x + np.linalg.inv(x))
        nxt = 0.5 * (nxt + dagger(nxt))
        done = np.linalg.norm(nxt - x, 1) <= tol * np.linalg.norm(nxt, 1)
        x = nxt
        if done:
            break
    return float(np.trace(x).real)


def bott_pair(pair: UnitaryPair, gap_policy: float = DEFAULT_GAP_POLICY,
              cut: BranchCut = PRINCIPAL) -> BottReport:
    """Bott integer of an almost commuting pair, with gap and winding diagnostics.

    Raises ``GapTooSmall`` when the spectrum of e(u, v) comes within
    ``gap_policy`` of 1/2, or when the eigenvalue count disagrees with the
    trace of the sign-function projection. The winding fields are NaN when
    the commutator's spectrum meets the cut.
    """
    u, v = pair.u, pair.v
    if unitarity_defect(u) > UNITARY_TOL or unitarity_defect(v) > UNITARY_TOL:
        raise NotUnitary("bott_pair needs unitary inputs")
    n = pair.n
    e = bott_matrix(u, v)
    spectrum = herm_eig(e).values
    gap = float(np.min(np.abs(spectrum - 0.5)))
    if gap < gap_policy:
        raise GapTooSmall(f"spectrum of e(u,v) is within {gap:.3g} of 1/2 (policy {gap_policy})")
    rank_above = int(np.count_nonzero(spectrum > 0.5))
    rank_check = int(round(0.5 * (2 * n + _sign_trace(2.0 * e - np.eye(2 * n)))))
    if rank_check != rank_above:
        raise GapTooSmall(f"eigenvalue count {rank_above} disagrees with projection trace {rank_check}")
    bott = rank_above - n
    w = mult_commutator(pair)
    try:
        wind = winding(pair, cut, TraceKind.UNNORMALIZED)
    except SpectrumOnCut:
        wind = math.nan
    return BottReport(
        n=n,
        w=w,
        gap=gap,
        rank_above=rank_above,
        bott=bott,
        winding_unnormalized=wind,
        exel_discrepancy=abs(bott - wind),
        defect=operator_norm(u @ v - v @ u),
    )


def exel_check(pair: UnitaryPair, gap_policy: float = DEFAULT_GAP_POLICY,
               cut: BranchCut = PRINCIPAL) -> BottReport:
    """Bott integer versus winding number; ``report.exel_pass`` is the verdict.

    Unlike ``bott_pair`` this propagates ``SpectrumOnCut`` from the logarithm.
    """
    winding(pair, cut, TraceKind.UNNORMALIZED)
    return bott_pair(pair, gap_policy, cut)


def bott_power_identity(pair: UnitaryPair, theta: RationalAngle,
                        gap_policy: float = DEFAULT_GAP_POLICY) -> tuple[int, int]:
    """(bott(U^q, V^q), q^2 bott(U, V)) for the tensor lift (U, V) of ``pair``."""
    theta = as_rational(theta)
    lift = tensor_lift(pair, theta)
    q = theta.q
    powered = UnitaryPair(np.linalg.matrix_power(lift.u, q), np.linalg.matrix_power(lift.v, q))
    return bott_pair(powered, gap_policy).bott, q * q * bott_pair(lift, gap_policy).bott


def scalar_commutator_check(pair: UnitaryPair, tol: float = 1e-8,
                            cut: BranchCut = PRINCIPAL) -> tuple[float, float]:
    """Angle and scalar residual of a central multiplicative commutator.

    Requires w = u v u* v* to commute with u and v within ``tol`` (else
    ``NotCentral``); returns (theta_hat, ||w - e^{2 pi i theta_hat} I||) with
    theta_hat the normalized winding.
    """
    w = mult_commutator(pair)
    if (operator_norm(w @ pair.u - pair.u @ w) > tol
            or operator_norm(w @ pair.v - pair.v @ w) > tol):
        raise NotCentral("u v u* v* does not commute with u and v")
    theta_hat = winding(pair, cut, TraceKind.NORMALIZED)
    residual = operator_norm(w - np.exp(2j * np.pi * theta_hat) * np.eye(pair.n))
    return theta_hat, residual


def determinant_tau(u, tk: TraceKind = TraceKind.NORMALIZED,
                    cut: BranchCut = PRINCIPAL) -> complex:
    """exp(trace(log u)); the ordinary determinant for the unnormalized trace."""
    return complex(np.exp(tk.apply(log_unitary(u, cut))))
