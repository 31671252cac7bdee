"""Projection of nearly theta-commuting pairs onto exactly theta-commuting ones.

Every exact theta-pair of size n = q m is W A W*, W B W* with
A = blkdiag(r1_k S1), B = blkdiag(r2_k S2) and W unitary. The solver
minimizes ||u - W A W*||_F^2 + ||v - W B W*||_F^2 over that family. The
block phases are eliminated in closed form; W moves along geodesics of the
unitary group by L-BFGS, preconditioned with the Gauss-Newton operator,
which is diagonal in the Weyl basis of each block pair. A polar (Procrustes)
update and damped gradient steps serve as fallbacks. The returned pair is
exact by construction.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, IrrationalTarget, SoftTorusError, SpectrumOnCut
from .generators import Angle, RationalAngle, UnitaryPair, as_rational, clock, haar_unitary, shift
from .invariants import TraceKind, cut_for, defect, winding
from .matcore import dagger, expm, herm_eig, operator_norm, polar_unitary, unitary_eig
from .rotrep import principal_root

log = logging.getLogger(__name__)

OBSTRUCTION_TOL = 1e-6
PRECONDITION_SHIFT = 0.1


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 500
    stall_tolerance: float = 1e-10
    damping: float = 0.5
    min_damping: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise SoftTorusError("max_iterations must be >= 1")
        if self.stall_tolerance <= 0:
            raise SoftTorusError("stall_tolerance must be positive")
        if not 0 < self.damping <= 1:
            raise SoftTorusError("damping must lie in (0, 1]")


@dataclass
class SolverState:
    W: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    objective: float = math.inf


@dataclass(frozen=True)
class SolveReport:
    converged: bool
    iterations: int
    dist_u: float
    dist_v: float
    relation_residual: float
    objective_trace: list = field(default_factory=list)

    @property
    def max_dist(self) -> float:
        return max(self.dist_u, self.dist_v)


@dataclass(frozen=True)
class Feasibility:
    divisible: bool
    winding_normalized: float
    obstruction_ok: bool
    defect: float

    @property
    def feasible(self) -> bool:
        return self.divisible and self.obstruction_ok


@dataclass(frozen=True)
class Certificate:
    relation_residual: float
    dist_u: float
    dist_v: float
    winding_normalized: float
    winding_error: float


def _target(theta: Angle) -> RationalAngle:
    if isinstance(theta, RationalAngle):
        return theta
    try:
        return RationalAngle.snap(float(theta))
    except IrrationalTarget:
        raise IrrationalTarget(
            f"theta = {theta!r} is irrational at matrix scale; no exact pair exists in M_n"
        ) from None


def feasibility(pair: UnitaryPair, theta: Angle) -> Feasibility:
    """Divisibility q | n and agreement of the normalized winding with theta.

    The winding is taken on the branch adapted to theta (cut at +1 when
    theta = 1/2, principal otherwise); ``SpectrumOnCut`` propagates.
    """
    theta = _target(theta)
    wind = winding(pair, cut_for(theta), TraceKind.NORMALIZED)
    return Feasibility(
        divisible=pair.n % theta.q == 0,
        winding_normalized=wind,
        obstruction_ok=abs(wind - theta.value) <= OBSTRUCTION_TOL,
        defect=defect(pair.with_theta(theta)),
    )


class _Model:
    """Block structure for a fixed theta and size n = q m."""

    def __init__(self, theta: RationalAngle, n: int):
        self.theta = theta
        self.q = theta.q
        self.m = n // theta.q
        self.s1 = clock(self.q, theta)
        self.s2 = shift(self.q)
        self.clock_diag = np.diagonal(self.s1).copy()

    def A(self, r1: np.ndarray) -> np.ndarray:
        return np.diag(np.kron(r1, self.clock_diag))

    def B(self, r2: np.ndarray) -> np.ndarray:
        return np.kron(np.diag(r2), self.s2)

    def blocks(self, x: np.ndarray) -> np.ndarray:
        q, m = self.q, self.m
        return np.stack([x[k * q:(k + 1) * q, k * q:(k + 1) * q] for k in range(m)])

    def phases(self, W, u, v, r1, r2):
        """Closed-form optimal block phases for fixed W."""
        xu = self.blocks(dagger(W) @ u @ W)
        xv = self.blocks(dagger(W) @ v @ W)
        c1 = np.einsum("ij,kij->k", self.s1.conj(), xu)
        c2 = np.einsum("ij,kij->k", self.s2.conj(), xv)
        r1 = np.where(np.abs(c1) > 1e-300, c1 / np.where(c1 == 0, 1, np.abs(c1)), r1)
        r2 = np.where(np.abs(c2) > 1e-300, c2 / np.where(c2 == 0, 1, np.abs(c2)), r2)
        return r1, r2

    def precondition(self, g: np.ndarray, r1, r2, mu: float) -> np.ndarray:
        """Apply (H + mu)^{-1}, H the Gauss-Newton operator X -> ad_A* ad_A X + ad_B* ad_B X.

        On the (k, l) block H is diagonal in the Weyl basis S1^a S2^b with
        eigenvalue 2 (|r1_k - r1_l lambda^-b|^2 + |r2_k lambda^-a - r2_l|^2).
        """
        q, m = self.q, self.m
        lam = self.clock_diag
        idx = np.arange(q)
        cols = (idx[:, None] - idx[None, :]) % q  # [i, b] -> column i - b
        four = np.conj(lam[np.outer(idx, idx) % q])  # [a, i] -> lambda^{-a i}
        y = g.reshape(m, q, m, q).transpose(0, 2, 1, 3)
        diags = y[:, :, idx[:, None], cols]
        coef = np.einsum("ai,klib->klab", four, diags) / q
        back1 = lam[(-idx) % q]  # lambda^{-b}
        w1 = np.abs(r1[:, None, None] - r1[None, :, None] * back1[None, None, :]) ** 2
        w2 = np.abs(r2[:, None, None] * back1[None, None, :] - r2[None, :, None]) ** 2
        weight = 2.0 * (w1[:, :, None, :] + w2[:, :, :, None]) + mu
        diags = np.einsum("ai,klab->klib", four.conj(), coef / weight)
        out = np.empty_like(y)
        out[:, :, idx[:, None], cols] = diags
        out = out.transpose(0, 2, 1, 3).reshape(g.shape)
        return 0.5 * (out - dagger(out))

    def objective(self, W, u, v, r1, r2) -> float:
        a, b = self.A(r1), self.B(r2)
        return float(np.linalg.norm(u @ W - W @ a) ** 2 + np.linalg.norm(v @ W - W @ b) ** 2)


def _warm_start(pair: UnitaryPair, model: _Model, seed) -> np.ndarray | None:
    """Conjugator built from the near-central powers u^q, v^q, or None if the spectrum is unclear."""
    q, m = model.q, model.m
    u, v = pair.u, pair.v
    eig = unitary_eig(u)
    phases = np.angle(eig.values)
    folded = np.sort(np.mod(q * phases, 2 * np.pi))
    gaps = np.diff(np.concatenate([folded, [folded[0] + 2 * np.pi]]))
    k = int(np.argmax(gaps))
    cut = folded[k] + 0.5 * gaps[k]
    # one representative per orbit z -> z lambda: phases in a window of width 2 pi / q
    offset = np.mod(phases - cut / q, 2 * np.pi)
    reps = np.nonzero(offset < 2 * np.pi / q)[0]
    if reps.size != m:
        return None
    x = eig.vectors[:, reps]
    uq = np.linalg.matrix_power(u, q)
    vq = np.linalg.matrix_power(v, q)
    c1 = dagger(x) @ uq @ x
    c2 = dagger(x) @ vq @ x
    rng = np.random.default_rng(int(seed))
    coeffs = rng.uniform(0.5, 1.5, size=4) * rng.choice([-1.0, 1.0], size=4)
    parts = []
    for c in (c1, c2):
        parts += [0.5 * (c + dagger(c)), (c - dagger(c)) / 2j]
    mix = sum(a * p for a, p in zip(coeffs, parts))
    x = x @ herm_eig(0.5 * (mix + dagger(mix))).vectors
    columns = []
    for k in range(m):
        xk = x[:, k]
        t2 = np.vdot(xk, vq @ xk)
        step = np.conj(principal_root(t2 / abs(t2), q)) * v if abs(t2) > 1e-12 else v
        col = xk
        for _ in range(q):
            columns.append(col)
            col = step @ col
    return polar_unitary(np.column_stack(columns))


def _skew_gradient(model: _Model, W, u, v, r1, r2) -> np.ndarray:
    # descent direction D on the tangent space: J(W exp(t D)) decreases for small t > 0
    a, b = model.A(r1), model.B(r2)
    xu = dagger(W) @ u @ W
    xv = dagger(W) @ v @ W
    mt = a @ dagger(xu) - dagger(xu) @ a + b @ dagger(xv) - dagger(xv) @ b
    mt = dagger(mt)
    return 0.5 * (mt - dagger(mt))


def _evaluate(model: _Model, W, u, v, r1, r2) -> SolverState:
    r1, r2 = model.phases(W, u, v, r1, r2)
    return SolverState(W, r1, r2, model.objective(W, u, v, r1, r2))


def _gradient(model: _Model, state: SolverState, u, v) -> np.ndarray:
    # gradient of the phase-eliminated objective in the Lie algebra at W
    return -2.0 * _skew_gradient(model, state.W, u, v, state.r1, state.r2)


def _inner(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.vdot(x, y).real)


class _LBFGSMemory:
    """Curvature pairs for L-BFGS on the unitary group (left-trivialized, identity transport)."""

    def __init__(self, size: int = 8):
        self.pairs = deque(maxlen=size)

    def clear(self):
        self.pairs.clear()

    def push(self, s: np.ndarray, y: np.ndarray):
        sy = _inner(s, y)
        if sy > 1e-14 * math.sqrt(_inner(s, s) * _inner(y, y)):
            self.pairs.append((s, y, 1.0 / sy))

    def direction(self, grad: np.ndarray, precondition) -> np.ndarray:
        q = grad.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            alpha = rho * _inner(s, q)
            q -= alpha * y
            alphas.append(alpha)
        q = precondition(q)
        for (s, y, rho), alpha in zip(self.pairs, reversed(alphas)):
            beta = rho * _inner(y, q)
            q += (alpha - beta) * s
        return -q


def _quasi_newton_step(model, state, grad, memory, u, v, max_step=0.5, armijo=1e-4):
    """Backtracking line search along the L-BFGS direction; (None, None) on failure."""
    mu = PRECONDITION_SHIFT * max(state.objective / model.m, 1e-14)
    direction = memory.direction(grad, lambda g: model.precondition(g, state.r1, state.r2, mu))
    slope = _inner(grad, direction)
    if slope >= 0:
        memory.clear()
        direction = -grad
        slope = -_inner(grad, grad)
    if slope == 0:
        return None, None
    size = operator_norm(direction)
    step = min(1.0, max_step / size)
    for _ in range(40):
        W = polar_unitary(state.W @ expm(step * direction))
        trial = _evaluate(model, W, u, v, state.r1, state.r2)
        if trial.objective <= state.objective + armijo * step * slope:
            return trial, step * direction
        step *= 0.5
    return None, None


def _fallback_step(model, state, u, v, opts):
    """Polar flip-flop update, then damped geodesic gradient steps; None when nothing decreases."""
    a, b = model.A(state.r1), model.B(state.r2)
    W = polar_unitary(u @ state.W @ dagger(a) + v @ state.W @ dagger(b))
    trial = _evaluate(model, W, u, v, state.r1, state.r2)
    if trial.objective <= state.objective:
        return trial
    direction = _skew_gradient(model, state.W, u, v, state.r1, state.r2)
    size = operator_norm(direction)
    damping = opts.damping
    while size > 0 and damping >= opts.min_damping:
        step = direction * (damping * min(1.0, size) / size)
        trial = _evaluate(model, polar_unitary(state.W @ expm(step)), u, v, state.r1, state.r2)
        if trial.objective <= state.objective:
            return trial
        damping *= 0.5
    return None


def _finish(pair, model, state, iterations, converged, trace):
    W = state.W
    a, b = model.A(state.r1), model.B(state.r2)
    ut = W @ a @ dagger(W)
    vt = W @ b @ dagger(W)
    out = UnitaryPair(ut, vt, model.theta)
    report = SolveReport(
        converged=converged,
        iterations=iterations,
        dist_u=operator_norm(pair.u - ut),
        dist_v=operator_norm(pair.v - vt),
        relation_residual=defect(out),
        objective_trace=trace,
    )
    return out, report


def project_to_theta_pairs(pair: UnitaryPair, theta: Angle,
                           opts: SolverOptions | None = None) -> tuple[UnitaryPair, SolveReport]:
    """Nearby exact theta-pair by alternating minimization.

    Raises ``Infeasible`` when q does not divide n or the winding of the
    input differs from theta; otherwise returns the best iterate, with
    ``report.converged`` False if ``max_iterations`` ran out first.
    """
    opts = opts or SolverOptions()
    theta = _target(theta)
    verdict = feasibility(pair, theta)
    if not verdict.feasible:
        reason = ("q does not divide n" if not verdict.divisible
                  else f"winding {verdict.winding_normalized:.12g} != theta {theta.value:.12g}")
        raise Infeasible(f"infeasible target {theta}: {reason}",
                         obstruction=verdict.winding_normalized, divisible=verdict.divisible)
    model = _Model(theta, pair.n)
    u, v = pair.u, pair.v
    W = _warm_start(pair, model, opts.seed)
    if W is None:
        log.info("warm start unavailable, using a Haar-random conjugator")
        W = haar_unitary(pair.n, opts.seed)
    ones = np.ones(model.m, dtype=np.complex128)
    state = _evaluate(model, W, u, v, ones, ones)
    grad = _gradient(model, state, u, v)
    memory = _LBFGSMemory()
    trace = [state.objective]
    converged = False
    iterations = 0
    floor = 1e-28 * 2.0 * pair.n
    while iterations < opts.max_iterations:
        iterations += 1
        previous = state.objective
        if previous <= floor:
            converged = True
            break
        candidate, step = _quasi_newton_step(model, state, grad, memory, u, v)
        if candidate is None:
            memory.clear()
            candidate = _fallback_step(model, state, u, v, opts)
        if candidate is None:
            converged = True
            break
        new_grad = _gradient(model, candidate, u, v)
        if step is not None:
            memory.push(step, new_grad - grad)
        state, grad = candidate, new_grad
        trace.append(state.objective)
        if previous - state.objective <= opts.stall_tolerance * max(previous, 1e-300):
            converged = True
            break
    return _finish(pair, model, state, iterations, converged, trace)


def commuting_projection(pair: UnitaryPair,
                         opts: SolverOptions | None = None) -> tuple[UnitaryPair, SolveReport]:
    """Nearby exactly commuting pair (the theta = 0 case: simultaneously diagonal)."""
    return project_to_theta_pairs(pair, RationalAngle(0), opts)


def certify(pair: UnitaryPair, candidate: UnitaryPair, theta: Angle) -> Certificate:
    """Relation residual, distances to ``pair`` and winding of ``candidate``."""
    theta = _target(theta)
    if pair.n != candidate.n:
        raise SoftTorusError("pair and candidate differ in size")
    try:
        wind = winding(candidate, cut_for(theta), TraceKind.NORMALIZED)
    except SpectrumOnCut:
        wind = math.nan
    return Certificate(
        relation_residual=defect(candidate.with_theta(theta)),
        dist_u=operator_norm(pair.u - candidate.u),
        dist_v=operator_norm(pair.v - candidate.v),
        winding_normalized=wind,
        winding_error=abs(wind - theta.value),
    )
