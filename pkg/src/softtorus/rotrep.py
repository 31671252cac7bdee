"""Finite-dimensional representations of the rational rotation algebra.

For theta = p/q every irreducible representation is q-dimensional and, up to
unitary equivalence, is (r1 S1, r2 S2) where (t1, t2) = (r1^q, r2^q) is a
point of the torus. An exact theta-pair of size n = q m therefore splits into
m such blocks; ``decompose_exact_pair`` recovers them together with the
conjugating unitary.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DecompositionFailed,
    NotCentralPower,
    NotDivisible,
    RelationViolation,
    RootMismatch,
)
from .generators import RationalAngle, UnitaryPair, as_rational, clock, shift
from .invariants import defect
from .matcore import as_cmatrix, dagger, herm_eig, operator_norm, polar_unitary

JOINT_CLUSTER_TOL = 1e-6


def principal_root(t: complex, q: int) -> complex:
    """The q-th root of a unit complex number with phase in (-pi/q, pi/q]."""
    return cmath.exp(1j * cmath.phase(t) / q)


@dataclass(frozen=True)
class IrrepSpec:
    """Base point (t1, t2) on the torus plus chosen q-th roots (r1, r2).

    The roots default to the principal q-th roots of t1 and t2.
    """

    theta: RationalAngle
    t1: complex
    t2: complex
    r1: complex | None = None
    r2: complex | None = None

    def __post_init__(self):
        theta = as_rational(self.theta)
        object.__setattr__(self, "theta", theta)
        q = theta.q
        for name in ("t1", "t2"):
            val = complex(getattr(self, name))
            if abs(abs(val) - 1.0) > 1e-12:
                raise RootMismatch(f"{name} must have unit modulus")
            object.__setattr__(self, name, val)
        for root, base in (("r1", "t1"), ("r2", "t2")):
            val = getattr(self, root)
            t = getattr(self, base)
            val = principal_root(t, q) if val is None else complex(val)
            if abs(abs(val) - 1.0) > 1e-12:
                raise RootMismatch(f"{root} must have unit modulus")
            if abs(val ** q - t) > 1e-10:
                raise RootMismatch(f"{root}^{q} does not equal {base}")
            object.__setattr__(self, root, val)


def irrep_at(spec: IrrepSpec) -> UnitaryPair:
    """The irreducible pair (r1 S1, r2 S2); u^q = t1 I and v^q = t2 I."""
    q = spec.theta.q
    return UnitaryPair(spec.r1 * clock(q, spec.theta), spec.r2 * shift(q), spec.theta)


def spectral_projections(u, r1: complex, theta: RationalAngle, tol: float = 1e-8) -> list[np.ndarray]:
    """E_j = (1/q) sum_k (r1 lambda^j)^{-k} u^k, the projection onto eigenvalue r1 lambda^j.

    Requires u^q to be scalar (within ``tol``), as it is in any representation.
    """
    u = as_cmatrix(u)
    theta = as_rational(theta)
    q, n = theta.q, u.shape[0]
    powers = [np.eye(n, dtype=np.complex128)]
    for _ in range(q):
        powers.append(powers[-1] @ u)
    top = powers[q]
    if operator_norm(top - (np.trace(top) / n) * np.eye(n)) > tol:
        raise NotCentralPower("u^q is not a scalar matrix")
    lam = theta.phase
    projections = []
    for j in range(q):
        z = r1 * lam ** j
        projections.append(sum(z ** (-k) * powers[k] for k in range(q)) / q)
    return projections


def matrix_unit_residual(units: np.ndarray) -> float:
    """Largest violation of E_ij E_kl = delta_jk E_il and sum_i E_ii = I."""
    q, n = units.shape[0], units.shape[2]
    worst = operator_norm(sum(units[i, i] for i in range(q)) - np.eye(n))
    for i in range(q):
        for j in range(q):
            for k in range(q):
                for l in range(q):
                    target = units[i, l] if j == k else 0.0
                    worst = max(worst, operator_norm(units[i, j] @ units[k, l] - target))
    return worst


def matrix_units(projections, v, r2: complex, tol: float = 1e-6) -> np.ndarray:
    """E_ij = (conj(r2) v)^{i-j} E_j, returned as an array of shape (q, q, n, n).

    Raises ``RelationViolation`` if the matrix-unit relations fail by more than ``tol``.
    """
    v = as_cmatrix(v)
    q, n = len(projections), v.shape[0]
    x = np.conj(r2) * v
    pos = [np.eye(n, dtype=np.complex128)]
    for _ in range(q - 1):
        pos.append(pos[-1] @ x)
    if operator_norm(pos[-1] @ x - np.eye(n)) > tol:
        raise RelationViolation("(conj(r2) v)^q is not the identity")
    neg = [dagger(p) for p in pos]
    units = np.empty((q, q, n, n), dtype=np.complex128)
    for i in range(q):
        for j in range(q):
            step = pos[i - j] if i >= j else neg[j - i]
            units[i, j] = step @ projections[j]
    residual = matrix_unit_residual(units)
    if residual > tol:
        raise RelationViolation(f"matrix unit relations violated by {residual:.3g}")
    return units


def block_pair(specs, theta: RationalAngle) -> tuple[np.ndarray, np.ndarray]:
    """Block-diagonal (blkdiag(r1 S1), blkdiag(r2 S2)) for a sequence of IrrepSpecs."""
    theta = as_rational(theta)
    q = theta.q
    specs = list(specs)
    n = q * len(specs)
    a = np.zeros((n, n), dtype=np.complex128)
    b = np.zeros((n, n), dtype=np.complex128)
    s1, s2 = clock(q, theta), shift(q)
    for k, spec in enumerate(specs):
        sl = slice(k * q, (k + 1) * q)
        a[sl, sl] = spec.r1 * s1
        b[sl, sl] = spec.r2 * s2
    return a, b


@dataclass(frozen=True, eq=False)
class RepDecomposition:
    """Irreducible blocks (with multiplicities), conjugator W and fit residual.

    ``W* u W`` is block diagonal with the blocks in the listed order, each
    spec repeated ``multiplicity`` times.
    """

    theta: RationalAngle
    blocks: list = field(default_factory=list)
    conjugator: np.ndarray = None
    residual: float = 0.0

    def expanded(self) -> list[IrrepSpec]:
        return [spec for spec, mult in self.blocks for _ in range(mult)]

    def reassemble(self) -> UnitaryPair:
        a, b = block_pair(self.expanded(), self.theta)
        w = self.conjugator
        return UnitaryPair(w @ a @ dagger(w), w @ b @ dagger(w), self.theta)


def _hermitian_parts(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return 0.5 * (m + dagger(m)), (m - dagger(m)) / 2j


def joint_clusters(a: np.ndarray, b: np.ndarray, seed=0, tol: float = JOINT_CLUSTER_TOL):
    """Approximate joint eigenspaces of two commuting normal matrices.

    A seeded random real combination of their Hermitian parts is
    diagonalized; neighbouring eigenvectors whose joint Rayleigh quotients
    (a, b) agree within ``tol`` are grouped. Returns a list of
    (columns, mean a-value, mean b-value).
    """
    coeffs = np.random.default_rng(int(seed)).uniform(0.5, 1.5, size=4)
    coeffs *= np.random.default_rng(int(seed) + 1).choice([-1.0, 1.0], size=4)
    parts = _hermitian_parts(a) + _hermitian_parts(b)
    eig = herm_eig(sum(c * p for c, p in zip(coeffs, parts)))
    vecs = eig.vectors
    za = np.einsum("ij,ij->j", vecs.conj(), a @ vecs)
    zb = np.einsum("ij,ij->j", vecs.conj(), b @ vecs)
    groups, current = [], [0]
    for k in range(1, vecs.shape[1]):
        if abs(za[k] - za[current[-1]]) + abs(zb[k] - zb[current[-1]]) <= tol:
            current.append(k)
        else:
            groups.append(current)
            current = [k]
    groups.append(current)
    return [(vecs[:, g], za[g].mean(), zb[g].mean()) for g in groups]


def decompose_exact_pair(pair: UnitaryPair, theta: RationalAngle, tol: float = 1e-8,
                         seed=0) -> RepDecomposition:
    """Split an exact theta-pair into irreducible blocks.

    The commuting matrices u^q and v^q are jointly diagonalized; each joint
    eigenspace carries copies of one irrep, whose canonical basis is built
    from the spectral projections of u and the matrix units generated by v.
    """
    theta = as_rational(theta)
    q, n = theta.q, pair.n
    if n % q:
        raise NotDivisible(f"q = {q} does not divide n = {n}")
    err = defect(pair.with_theta(theta))
    if err > 100 * tol:
        raise DecompositionFailed(f"input violates the theta relation by {err:.3g}")
    uq = np.linalg.matrix_power(pair.u, q)
    vq = np.linalg.matrix_power(pair.v, q)
    clusters = joint_clusters(uq, vq, seed)
    clusters.sort(key=lambda c: (round(cmath.phase(c[1]), 9), round(cmath.phase(c[2]), 9)))
    blocks, columns = [], []
    for basis, t1, t2 in clusters:
        d = basis.shape[1]
        if d % q:
            raise DecompositionFailed(f"joint eigenspace of dimension {d} is not a multiple of q = {q}")
        mult = d // q
        t1, t2 = t1 / abs(t1), t2 / abs(t2)
        spec = IrrepSpec(theta, t1, t2)
        cu = dagger(basis) @ pair.u @ basis
        cv = dagger(basis) @ pair.v @ basis
        try:
            projections = spectral_projections(cu, spec.r1, theta, tol=max(tol, 1e-8))
            units = matrix_units(projections, cv, spec.r2)
        except (NotCentralPower, RelationViolation) as exc:
            raise DecompositionFailed(str(exc)) from exc
        lead = herm_eig(projections[0])
        x = lead.vectors[:, d - mult:]
        if mult and (lead.values[d - mult] < 0.5 or (d > mult and lead.values[d - mult - 1] > 0.5)):
            raise DecompositionFailed("spectral projection has the wrong rank")
        for k in range(mult):
            for j in range(q):
                columns.append(basis @ (units[j, 0] @ x[:, k]))
        blocks.append((spec, mult))
    w = polar_unitary(np.column_stack(columns))
    decomposition = RepDecomposition(theta, blocks, w, 0.0)
    a, b = block_pair(decomposition.expanded(), theta)
    residual = max(operator_norm(dagger(w) @ pair.u @ w - a), operator_norm(dagger(w) @ pair.v @ w - b))
    if residual > 100 * tol:
        raise DecompositionFailed(f"block residual {residual:.3g} exceeds {100 * tol:.3g}")
    return RepDecomposition(theta, blocks, w, residual)
