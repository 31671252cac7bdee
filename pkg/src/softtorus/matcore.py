"""Dense complex linear algebra kernel.

Matrices are plain ``numpy`` complex arrays. The eigensolvers are written
here (cyclic Jacobi with a round-robin ordering, and a unitary solver built
on the commuting Hermitian pair (u + u*)/2, (u - u*)/2i); SVD, QR and dense
inverses come from numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NotHermitian, NotUnitary, SingularInput, SoftTorusError, SpectrumOnCut

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-8
CLUSTER_TOL = 1e-7
REUNITARIZE_TOL = 1e-12
GAP_MIN = 1e-6
EXPM_TERM_TOL = 1e-13


def as_cmatrix(a) -> np.ndarray:
    """Coerce ``a`` to a finite square complex128 array (a copy when needed)."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise SoftTorusError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise SoftTorusError("matrix has non-finite entries")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def kron(a, b) -> np.ndarray:
    """Kronecker product; block (i, j) of the result is ``a[i, j] * b``."""
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def operator_norm(a) -> float:
    """Largest singular value."""
    a = np.asarray(a, dtype=np.complex128)
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[0])


def unitarity_defect(u) -> float:
    u = np.asarray(u)
    return operator_norm(dagger(u) @ u - np.eye(u.shape[0]))


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    return unitarity_defect(u) <= tol


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (real, or unit complex for unitaries) and eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ dagger(self.vectors)

    def apply(self, fn) -> np.ndarray:
        """Functional calculus: V diag(fn(values)) V*."""
        return (self.vectors * fn(self.values)) @ dagger(self.vectors)


@lru_cache(maxsize=None)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    # Circle-method tournament: every index pair meets exactly once per sweep,
    # and the pairs within one round are disjoint so they rotate together.
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        top, bot = players[: m // 2], players[m // 2:][::-1]
        ps, qs = [], []
        for p, q in zip(top, bot):
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _jacobi(h: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    a = h.copy()
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    if n == 1:
        return a.real.diagonal().copy(), v
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(a.diagonal()))
        if off <= tol * scale:
            break
        for P, Q in rounds:
            apq = a[P, Q]
            mag = np.abs(apq)
            active = mag > 1e-18 * scale
            if not active.any():
                continue
            app = a[P, P].real
            aqq = a[Q, Q].real
            safe = np.where(active, mag, 1.0)
            tau = (aqq - app) / (2.0 * safe)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            ph = np.where(active, apq / safe, 1.0)
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            phc = ph.conj()
            # J = [[c, s], [-s*conj(ph), c*conj(ph)]] on each (p, q) plane
            ap, aq = a[:, P], a[:, Q]
            a[:, P] = ap * c - aq * (s * phc)
            a[:, Q] = ap * s + aq * (c * phc)
            rp, rq = a[P, :], a[Q, :]
            a[P, :] = rp * c[:, None] - rq * (s * ph)[:, None]
            a[Q, :] = rp * s[:, None] + rq * (c * ph)[:, None]
            vp, vq = v[:, P], v[:, Q]
            v[:, P] = vp * c - vq * (s * phc)
            v[:, Q] = vp * s + vq * (c * phc)
            a[P, Q] = 0.0
            a[Q, P] = 0.0
    return a.diagonal().real.copy(), v


def herm_eig(h, tol: float = HERMITIAN_TOL) -> EigenSystem:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Eigenvalues are returned in nondecreasing order (ties keep index order).
    Raises ``NotHermitian`` when ``||h - h*|| > tol * (1 + ||h||)``.
    """
    h = as_cmatrix(h)
    if operator_norm(h - dagger(h)) > tol * (1.0 + operator_norm(h)):
        raise NotHermitian("input is not Hermitian")
    h = 0.5 * (h + dagger(h))
    vals, vecs = _jacobi(h)
    order = np.argsort(vals, kind="stable")
    return EigenSystem(vals[order], vecs[:, order])


def _clusters(sorted_vals: np.ndarray, tol: float) -> list[np.ndarray]:
    if sorted_vals.size == 0:
        return []
    breaks = np.nonzero(np.diff(sorted_vals) > tol)[0] + 1
    return np.split(np.arange(sorted_vals.size), breaks)


def unitary_eig(u, tol: float = UNITARY_TOL, cluster_tol: float = CLUSTER_TOL) -> EigenSystem:
    """Eigendecomposition of a unitary via its commuting real and imaginary parts.

    The Hermitian part is diagonalized first; inside each cluster of its
    eigenvalues (absolute width ``cluster_tol``) the anti-Hermitian part is
    diagonalized to split the degeneracy. Values are unit complex numbers
    sorted by phase in (-pi, pi].
    """
    u = as_cmatrix(u)
    if unitarity_defect(u) > tol:
        raise NotUnitary("input is not unitary")
    re = 0.5 * (u + dagger(u))
    im = (u - dagger(u)) / 2j
    first = herm_eig(re)
    vecs = first.vectors.copy()
    for idx in _clusters(first.values, cluster_tol):
        if idx.size < 2:
            continue
        block = vecs[:, idx]
        sub = herm_eig(dagger(block) @ im @ block)
        vecs[:, idx] = block @ sub.vectors
    z = np.einsum("ij,ij->j", vecs.conj(), u @ vecs)
    z = z / np.abs(z)
    order = np.argsort(np.angle(z), kind="stable")
    return EigenSystem(z[order], vecs[:, order])


def expm(a, term_tol: float = EXPM_TERM_TOL) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a truncated Taylor series."""
    a = as_cmatrix(a)
    n = a.shape[0]
    norm = np.linalg.norm(a, 1)
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    x = a / (2.0 ** squarings)
    out = np.eye(n, dtype=np.complex128)
    term = np.eye(n, dtype=np.complex128)
    for k in range(1, 60):
        term = term @ x / k
        out = out + term
        if np.linalg.norm(term, 1) <= term_tol:
            break
    for _ in range(squarings):
        out = out @ out
    return out


def polar_unitary(a, tol: float = 1e-12) -> np.ndarray:
    """Unitary factor U of the polar decomposition a = U H.

    U is the unitary maximizing Re Tr(W* a). Raises ``SingularInput`` when
    the smallest singular value is below ``tol * ||a||``.
    """
    a = as_cmatrix(a)
    left, sing, right = np.linalg.svd(a)
    if sing[-1] < tol * sing[0] or sing[0] == 0.0:
        raise SingularInput("matrix is numerically singular")
    return left @ right


@dataclass(frozen=True)
class BranchCut:
    """A branch of the logarithm on the unit circle.

    ``omega`` is the excluded point e^{i omega}. Logarithm phases are lifted
    to the open interval (a, a + 2 pi), where ``a`` is ``omega`` wrapped into
    [-pi, pi): the principal cut (omega = pi) gives (-pi, pi), the cut at
    omega = 0 gives (0, 2 pi).
    """

    omega: float = math.pi
    gap_min: float = GAP_MIN

    def __post_init__(self):
        if not 0.0 <= self.gap_min < math.pi:
            raise SoftTorusError("gap_min must lie in [0, pi)")
        object.__setattr__(self, "omega", float(self.omega) % (2 * math.pi))

    @property
    def start(self) -> float:
        return (self.omega + math.pi) % (2 * math.pi) - math.pi

    def lift(self, phases: np.ndarray) -> np.ndarray:
        """Map angles to the branch interval; raise if any is too close to the cut."""
        offset = np.mod(np.asarray(phases) - self.start, 2 * math.pi)
        distance = np.minimum(offset, 2 * math.pi - offset)
        if distance.size and distance.min() < max(self.gap_min, 1e-15):
            raise SpectrumOnCut(
                f"eigenvalue within {distance.min():.3g} rad of the cut at angle {self.omega:.6g}"
            )
        return self.start + offset


PRINCIPAL = BranchCut(math.pi)
LOG0 = BranchCut(0.0)


def reunitarize(u, tol: float = REUNITARIZE_TOL) -> np.ndarray:
    """Project onto the unitary group when rounding drift exceeds ``tol``."""
    u = as_cmatrix(u)
    if unitarity_defect(u) > tol:
        return polar_unitary(u)
    return u


def log_unitary(u, cut: BranchCut = PRINCIPAL, tol: float = UNITARY_TOL) -> np.ndarray:
    """Skew-Hermitian logarithm of a unitary on the branch ``cut``."""
    u = as_cmatrix(u)
    drift = unitarity_defect(u)
    if drift > tol:
        raise NotUnitary("input is not unitary")
    if drift > REUNITARIZE_TOL:
        u = polar_unitary(u)
    eig = unitary_eig(u)
    phases = cut.lift(np.angle(eig.values))
    return (eig.vectors * (1j * phases)) @ dagger(eig.vectors)
