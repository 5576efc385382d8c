"""Dense primal-dual interior-point solver for small semidefinite programs.

Problems are stated over real symmetric block-diagonal matrices::

    minimize / maximize   sum_b <C_b, X_b>
    subject to            sum_b <A_ib, X_b> = b_i,   X_b >= 0.

Complex Hermitian variables enter through :func:`realify`; the helpers at the
bottom of the module build the lifted phase problems used by the optimizers and
turn relaxed solutions into unit-modulus phase vectors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .exceptions import DimensionMismatch, NoFeasibleCandidate
from .tolerances import TOL

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"
NUMERICAL_FAILURE = "numerical_failure"

# Certificate thresholds applied to every solution labelled optimal.
CERT_PSD = 1e-7
CERT_EQ = 1e-7
CERT_GAP = 1e-6


@dataclass
class SolverOptions:
    max_iter: int = 200
    tol: float = 1e-8
    randomization_count: int = 1000
    verbosity: int = 0

    def __post_init__(self):
        if self.max_iter <= 0 or self.tol <= 0 or self.randomization_count <= 0:
            raise ValueError("solver options must be positive")


@dataclass
class SdpProblem:
    block_dims: list
    objective: list
    equalities: list = field(default_factory=list)
    maximize: bool = True

    def __post_init__(self):
        self.block_dims = [int(n) for n in self.block_dims]
        if len(self.objective) != len(self.block_dims):
            raise DimensionMismatch("one objective matrix per block is required")
        self.objective = [_checked_sym(c, n, "objective") for c, n in zip(self.objective, self.block_dims)]
        eqs = []
        for coeffs, rhs in self.equalities:
            if len(coeffs) != len(self.block_dims):
                raise DimensionMismatch("equality must list one coefficient (or None) per block")
            eqs.append(([None if a is None else _checked_sym(a, n, "constraint")
                         for a, n in zip(coeffs, self.block_dims)], float(rhs)))
        self.equalities = eqs


@dataclass
class SdpSolution:
    blocks: list
    value: float
    status: str
    iterations: int
    gap: float
    dual: np.ndarray | None = None
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _checked_sym(a, n, what):
    a = np.asarray(a, dtype=float)
    if a.shape != (n, n):
        raise DimensionMismatch(f"{what} matrix has shape {a.shape}, expected {(n, n)}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.T).max(initial=0.0) > 1e-12 * scale:
        raise ValueError(f"{what} matrix is not symmetric")
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# complex <-> real embedding


def realify(H) -> np.ndarray:
    """``[[Re H, -Im H], [Im H, Re H]]`` for a Hermitian ``H``."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatch("realify expects a square matrix")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.conj().T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("realify expects a Hermitian matrix")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def complexify(X) -> np.ndarray:
    """Inverse of :func:`realify`, projecting a general symmetric matrix onto the embedding."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0] // 2
    re = 0.5 * (X[:n, :n] + X[n:, n:])
    im = 0.5 * (X[n:, :n] - X[:n, n:])
    H = re + 1j * im
    return 0.5 * (H + H.conj().T)


# ---------------------------------------------------------------------------
# interior point method


def _max_step(X, D):
    """Largest ``a`` with ``X + a D`` positive semidefinite (inf if unbounded)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    M = Li @ D @ Li.T
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


class _Operator:
    """Stacked constraint matrices, one ``(m, n, n)`` array per block."""

    def __init__(self, mats, dims):
        self.mats = mats
        self.dims = dims
        self.flat = [a.reshape(a.shape[0], -1) for a in mats]

    @property
    def m(self):
        return self.mats[0].shape[0] if self.mats else 0

    def apply(self, Xs):
        out = np.zeros(self.m)
        for f, X in zip(self.flat, Xs):
            out += f @ X.ravel()
        return out

    def adjoint(self, y):
        return [np.tensordot(y, a, axes=1) for a in self.mats]


def _inner(As, Bs):
    return float(sum(np.vdot(a, b) for a, b in zip(As, Bs)))


def _fro(As):
    return float(np.sqrt(sum(np.vdot(a, a) for a in As)))


def _reduce_equalities(mats, b, dims):
    """Drop linearly dependent rows; report inconsistency as infeasibility."""
    m = b.shape[0]
    flat = np.hstack([a.reshape(m, -1) for a in mats]) if m else np.zeros((0, 0))
    U, s, _ = np.linalg.svd(flat, full_matrices=False)
    cutoff = (s[0] if s.size else 0.0) * max(flat.shape) * 1e-13
    r = int(np.sum(s > cutoff))
    if r == m:
        return mats, b, None, True
    Ur = U[:, :r]
    resid = b - Ur @ (Ur.T @ b)
    if np.linalg.norm(resid) > 1e-9 * (1.0 + np.linalg.norm(b)):
        return None, None, resid, False
    new_mats = [np.tensordot(Ur.T, a, axes=1) for a in mats]
    return new_mats, Ur.T @ b, Ur, True


def solve(problem: SdpProblem, opts: SolverOptions | None = None) -> SdpSolution:
    """Solve ``problem`` with an infeasible-start Mehrotra predictor-corrector (HKM direction).

    Every solution returned with status ``optimal`` has had its primal
    feasibility, PSD-ness and duality gap re-checked from scratch.
    """
    opts = opts or SolverOptions()
    dims = problem.block_dims
    m = len(problem.equalities)
    sign = -1.0 if problem.maximize else 1.0
    C = [sign * c for c in problem.objective]
    mats = [np.zeros((m, n, n)) for n in dims]
    b = np.zeros(m)
    for i, (coeffs, rhs) in enumerate(problem.equalities):
        b[i] = rhs
        for k, a in enumerate(coeffs):
            if a is not None:
                mats[k][i] = a

    def finish(Xs, y, status, it, msg=""):
        value = sign * _inner(C, Xs) if Xs is not None else float("nan")
        return SdpSolution(blocks=Xs, value=value, status=status, iterations=it,
                           gap=float("nan"), dual=y, message=msg)

    if m == 0:
        return finish([np.zeros((n, n)) for n in dims], np.zeros(0), NUMERICAL_FAILURE, 0,
                      "problems without equality constraints are not supported")

    # row scaling: every constraint gets unit Frobenius norm
    norms = np.sqrt(sum(np.sum(a.reshape(m, -1) ** 2, axis=1) for a in mats))
    if np.any(norms == 0):
        zero_rows = norms == 0
        if np.any(np.abs(b[zero_rows]) > 0):
            return finish(None, None, INFEASIBLE, 0, "zero constraint with nonzero right-hand side")
        norms[zero_rows] = 1.0
    mats = [a / norms[:, None, None] for a in mats]
    b_s = b / norms
    red_mats, red_b, basis, consistent = _reduce_equalities(mats, b_s, dims)
    if not consistent:
        return finish(None, None, INFEASIBLE, 0, "linear equality constraints are inconsistent")

    c_scale = max(1.0, _fro(C))
    Cs = [c / c_scale for c in C]
    b_scale = max(1.0, float(np.linalg.norm(red_b)))
    bs = red_b / b_scale
    A = _Operator(red_mats, dims)
    n_tot = sum(dims)

    # starting point
    a_norms = [np.sqrt(sum(np.sum(a[i] ** 2) for a in red_mats)) for i in range(A.m)]
    xi = max(10.0, np.sqrt(max(dims)), max((1 + abs(bi)) / (1 + an) for bi, an in zip(bs, a_norms)))
    zeta = max(10.0, np.sqrt(max(dims)), max(a_norms), _fro(Cs))
    X = [xi * np.eye(n) for n in dims]
    Z = [zeta * np.eye(n) for n in dims]
    y = np.zeros(A.m)

    status = MAX_ITER
    it = 0
    stall = 0
    for it in range(1, opts.max_iter + 1):
        rp = bs - A.apply(X)
        At_y = A.adjoint(y)
        Rd = [c - aty - z for c, aty, z in zip(Cs, At_y, Z)]
        pobj = _inner(Cs, X)
        dobj = float(bs @ y)
        mu = _inner(X, Z) / n_tot
        relp = np.linalg.norm(rp) / (1.0 + np.linalg.norm(bs))
        reld = _fro(Rd) / (1.0 + _fro(Cs))
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if opts.verbosity:
            logger.info("it %3d pobj %+.8e dobj %+.8e relp %.1e reld %.1e gap %.1e",
                        it, pobj, dobj, relp, reld, gap)
        if relp <= opts.tol and reld <= opts.tol and gap <= opts.tol:
            status = OPTIMAL
            break
        # Farkas certificate of primal infeasibility: A^T y + Z ~ 0, b^T y > 0
        if dobj > 1e-12:
            farkas = _fro([aty + z for aty, z in zip(At_y, Z)]) / dobj
            if farkas < 1e-8 and dobj > 1e6:
                status = INFEASIBLE
                break
        if pobj < -1e-12:
            ray = np.linalg.norm(A.apply(X)) / -pobj
            if ray < 1e-8 and -pobj > 1e6:
                status = INFEASIBLE
                break

        try:
            Zinv = [np.linalg.inv(z) for z in Z]
            Mschur = np.zeros((A.m, A.m))
            for k in range(len(dims)):
                T = np.matmul(np.matmul(X[k], red_mats[k]), Zinv[k])
                Mschur += A.flat[k] @ T.reshape(A.m, -1).T
            Mschur = 0.5 * (Mschur + Mschur.T)
            cho = sla.cho_factor(Mschur)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            status = NUMERICAL_FAILURE
            break

        XRdZi = [x @ rd @ zi for x, rd, zi in zip(X, Rd, Zinv)]

        def direction(Rc):
            rhs = rp - A.apply([rc @ zi for rc, zi in zip(Rc, Zinv)]) + A.apply(XRdZi)
            dy = sla.cho_solve(cho, rhs)
            At_dy = A.adjoint(dy)
            dZ = [rd - a for rd, a in zip(Rd, At_dy)]
            dX = [(rc - x @ dz) @ zi for rc, x, dz, zi in zip(Rc, X, dZ, Zinv)]
            dX = [0.5 * (d + d.T) for d in dX]
            return dX, dy, dZ

        Rc_aff = [-x @ z for x, z in zip(X, Z)]
        dXa, dya, dZa = direction(Rc_aff)
        ap = min(1.0, min(_max_step(x, d) for x, d in zip(X, dXa)))
        ad = min(1.0, min(_max_step(z, d) for z, d in zip(Z, dZa)))
        mu_aff = _inner([x + ap * d for x, d in zip(X, dXa)], [z + ad * d for z, d in zip(Z, dZa)]) / n_tot
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        Rc = [sigma * mu * np.eye(n) - x @ z - dx @ dz for n, x, z, dx, dz in zip(dims, X, Z, dXa, dZa)]
        dX, dy, dZ = direction(Rc)
        ap = min(1.0, 0.98 * min(_max_step(x, d) for x, d in zip(X, dX)))
        ad = min(1.0, 0.98 * min(_max_step(z, d) for z, d in zip(Z, dZ)))
        if ap < 1e-10 and ad < 1e-10:
            stall += 1
            if stall >= 3:
                status = NUMERICAL_FAILURE
                break
        X = [x + ap * d for x, d in zip(X, dX)]
        X = [0.5 * (x + x.T) for x in X]
        y = y + ad * dy
        Z = [z + ad * d for z, d in zip(Z, dZ)]
        Z = [0.5 * (z + z.T) for z in Z]

    # undo scaling: X solves the row-scaled system, y maps back through the row basis
    X_out = [x * b_scale for x in X]
    y_red = y * c_scale
    y_rows = basis @ y_red if basis is not None else y_red
    y_full = y_rows / norms
    sol = SdpSolution(blocks=X_out, value=sign * _inner(C, X_out), status=status, iterations=it,
                      gap=float("nan"), dual=sign * y_full)
    _certify(sol, problem, C, problem.equalities, b)
    if status == INFEASIBLE:
        sol.message = "infeasibility certificate found"
    return sol


def _certify(sol: SdpSolution, problem: SdpProblem, C, equalities, b):
    """Recompute residuals from the original data; downgrade unverifiable optima."""
    Xs = sol.blocks
    scale_x = max(1.0, max(float(np.abs(x).max()) for x in Xs))
    res = []
    for coeffs, rhs in equalities:
        lhs = sum(float(np.vdot(a, x)) for a, x in zip(coeffs, Xs) if a is not None)
        xnorm = sum(float(np.linalg.norm(a) * np.linalg.norm(x)) for a, x in zip(coeffs, Xs) if a is not None)
        res.append(abs(lhs - rhs) / (1.0 + abs(rhs) + xnorm))
    sol.primal_residual = float(max(res, default=0.0))
    min_eig = min(float(np.linalg.eigvalsh(x)[0]) / scale_x for x in Xs)
    sign = -1.0 if problem.maximize else 1.0
    pobj = _inner(C, Xs)
    dobj = float(b @ (sign * sol.dual)) if sol.dual is not None and sol.dual.shape == b.shape else float("nan")
    sol.gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    # dual slack must be PSD as well
    if sol.dual is not None and sol.dual.shape == b.shape:
        Zs = [c.copy() for c in C]
        for yi, (coeffs, _) in zip(sign * sol.dual, equalities):
            for k, a in enumerate(coeffs):
                if a is not None:
                    Zs[k] -= yi * a
        zscale = max(1.0, max(float(np.abs(c).max(initial=0.0)) for c in C),
                     max(abs(pobj), abs(dobj)))
        sol.dual_residual = float(max(-min(np.linalg.eigvalsh(z)[0] for z in Zs), 0.0) / zscale)
    if sol.status == OPTIMAL:
        ok = (min_eig >= -CERT_PSD and sol.primal_residual <= CERT_EQ and sol.gap <= CERT_GAP
              and sol.dual_residual <= CERT_EQ)
        if not ok:
            sol.status = NUMERICAL_FAILURE
            sol.message = (f"certificate failed: min_eig={min_eig:.2e} eq={sol.primal_residual:.2e} "
                           f"gap={sol.gap:.2e} dual={sol.dual_residual:.2e}")


# ---------------------------------------------------------------------------
# lifted phase problems


def _hermitian_basis(n):
    """Real basis of the n x n Hermitian matrices (n^2 elements)."""
    basis = []
    for p in range(n):
        E = np.zeros((n, n), complex)
        E[p, p] = 1.0
        basis.append(E)
    for p in range(n):
        for q in range(p + 1, n):
            E = np.zeros((n, n), complex)
            E[p, q] = E[q, p] = 1.0
            basis.append(E)
            F = np.zeros((n, n), complex)
            F[p, q] = 1j
            F[q, p] = -1j
            basis.append(F)
    return basis


def lifted_problem(objective, maximize: bool = True) -> SdpProblem:
    """Optimize ``Tr(objective Q)`` over Hermitian ``Q >= 0`` with unit diagonal.

    ``Q`` occupies block 0 as its real embedding; ``Tr(C Q) = <realify(C), X>/2``.
    """
    Cq = np.asarray(objective, complex)
    n = Cq.shape[0]
    eqs = []
    for i in range(n):
        E = np.zeros((n, n), complex)
        E[i, i] = 1.0
        eqs.append(([0.5 * realify(E)], 1.0))
    return SdpProblem([2 * n], [0.5 * realify(Cq)], eqs, maximize=maximize)


def add_lmi_as_block(base: SdpProblem, terms: Sequence) -> SdpProblem:
    """Append a slack block ``S = sum_k c_k chi_k Q chi_k^H`` constrained PSD.

    ``terms`` is a sequence of ``(coefficient, chi)`` pairs with every ``chi``
    of shape ``(M, n)`` where ``n`` is the size of the lifted variable in block 0.
    """
    n = base.block_dims[0] // 2
    terms = [(float(c), np.asarray(chi, complex)) for c, chi in terms]
    if not terms:
        raise DimensionMismatch("at least one LMI term is required")
    M = terms[0][1].shape[0]
    for _, chi in terms:
        if chi.shape != (M, n):
            raise DimensionMismatch(f"chi has shape {chi.shape}, expected {(M, n)}")
    dims = base.block_dims + [2 * M]
    objective = base.objective + [np.zeros((2 * M, 2 * M))]
    eqs = [(coeffs + [None], rhs) for coeffs, rhs in base.equalities]
    n_other = len(base.block_dims) - 1
    for B in _hermitian_basis(M):
        adj = sum(c * chi.conj().T @ B @ chi for c, chi in terms)
        adj = 0.5 * (adj + adj.conj().T)
        coeffs = [-0.5 * realify(adj)] + [None] * n_other + [0.5 * realify(B)]
        eqs.append((coeffs, 0.0))
    return SdpProblem(dims, objective, eqs, maximize=base.maximize)


def lifted_solution(sol: SdpSolution) -> np.ndarray:
    """Hermitian ``Q`` recovered from block 0 with its diagonal pinned to one."""
    Q = complexify(sol.blocks[0])
    d = np.sqrt(np.clip(np.real(np.diag(Q)), 1e-300, None))
    Q = Q / np.outer(d, d)
    return 0.5 * (Q + Q.conj().T)


# ---------------------------------------------------------------------------
# rank-one extraction


def _phases_from_vectors(V):
    """Phases ``theta`` with ``v_n = exp(-j theta_n)`` for columns ``V = [v; v_last]``."""
    ratio = V[:-1] / V[-1]
    return np.mod(-np.angle(ratio), 2 * np.pi).T


def is_rank_one(Q, rel=None) -> bool:
    lam = np.linalg.eigvalsh(0.5 * (Q + Q.conj().T))
    rel = TOL.rank_one_rel if rel is None else rel
    return bool(lam.size < 2 or lam[-2] <= rel * max(lam[-1], 0.0))


def principal_phases(Q) -> np.ndarray:
    """Phases decoded from the principal eigenvector of ``Q``."""
    lam, U = np.linalg.eigh(0.5 * (Q + Q.conj().T))
    principal = U[:, -1:]
    if abs(principal[-1, 0]) < 1e-300:
        principal = principal + 1e-300
    return _phases_from_vectors(principal)[0]


def extract_rank_one(Q, accept: Callable, score: Callable, opts: SolverOptions | None = None,
                     rng: np.random.Generator | None = None, minimize: bool = True, extra=None):
    """Pick a unit-modulus phase vector from a relaxed lifted matrix.

    ``accept`` and ``score`` are vectorized: both receive a ``(K, N)`` array of
    candidate phases and return length-``K`` arrays.  A numerically rank-one
    ``Q`` is decoded deterministically from its principal eigenvector;
    otherwise ``opts.randomization_count`` Gaussian draws ``U Lambda^{1/2} r``
    are decoded and scored together with the principal-eigenvector candidate.

    ``extra`` is an optional ``(K', N)`` array of further candidates that
    join the pool unconditionally (e.g. decoded earlier iterates).

    Returns ``(theta, info)`` where ``theta`` is a 1-D array.
    """
    opts = opts or SolverOptions()
    rng = rng if rng is not None else np.random.default_rng(0)
    Q = 0.5 * (np.asarray(Q, complex) + np.asarray(Q, complex).conj().T)
    lam, U = np.linalg.eigh(Q)
    lam = np.clip(lam, 0.0, None)
    principal = U[:, -1:]
    if abs(principal[-1, 0]) < 1e-300:
        principal = principal + 1e-300
    rank_one = is_rank_one(Q)
    if rank_one:
        cands = _phases_from_vectors(principal)
    else:
        K = opts.randomization_count
        R = (rng.standard_normal((Q.shape[0], K)) + 1j * rng.standard_normal((Q.shape[0], K))) / np.sqrt(2)
        V = (U * np.sqrt(lam)) @ R
        V[-1, np.abs(V[-1]) == 0] = 1e-300
        cands = np.vstack([_phases_from_vectors(principal), _phases_from_vectors(V)])
    if extra is not None and len(extra):
        cands = np.vstack([cands, np.atleast_2d(np.asarray(extra, float))])
    ok = np.asarray(accept(cands), dtype=bool).reshape(-1)
    info = {"rank_one": rank_one, "candidates": int(cands.shape[0]), "accepted": int(ok.sum())}
    if not ok.any():
        raise NoFeasibleCandidate(f"none of {cands.shape[0]} candidates passed the acceptance test")
    raw = np.asarray(score(cands), dtype=float).reshape(-1)
    if not minimize:
        raw = -raw
    vals = np.where(ok, raw, np.inf)
    best = int(np.argmin(vals))  # first occurrence on ties
    info["best_index"] = best
    rejected = np.where(ok, np.inf, np.nan_to_num(raw, nan=np.inf))
    if np.isfinite(rejected).any() and rejected.min() < vals[best]:
        info["best_rejected"] = cands[int(np.argmin(rejected))].copy()
    return cands[best].copy(), info
