"""Damped Newton solver for the weight vector, with initial-guess strategies."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .model import Problem, TargetMeasure
from .quad import QuadConfig, cell_measure, hessian_entry
from .trace import TOL as TRACE_TOL, CellBoundary, CellContext, trace_cell

__all__ = [
    "SolveOptions",
    "Tessellation",
    "SolverReport",
    "ReducedBasis",
    "InfeasibleWeights",
    "ReducedSystemSingular",
    "StepUnderflow",
    "StepCollapse",
    "NegativeEffectiveMass",
    "tessellate",
    "gradient",
    "hessian",
    "fd_hessian",
    "newton_step",
    "feasibility_kappa",
    "feasibility_bound",
    "enforce_feasible",
    "damped_newton",
    "grid_measure",
    "grid_initial_guess",
    "trivial_homotopy",
    "nonsingular_homotopy",
    "homotopy_step",
    "solve",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 512
KAPPA_WARN = 1e-3
MAX_FEAS_HALVINGS = 60


class InfeasibleWeights(ValueError):
    pass


class ReducedSystemSingular(np.linalg.LinAlgError):
    pass


class StepUnderflow(RuntimeError):
    pass


class StepCollapse(RuntimeError):
    pass


class NegativeEffectiveMass(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    newton_tol: float = 1e-8
    maxit: int = 20
    quad: QuadConfig = QuadConfig()
    trace_tol: float = TRACE_TOL
    threads: int = 1
    hessian_mode: str = "analytic"  # or "forward" / "centered" finite differences


@dataclass
class Tessellation:
    w: np.ndarray
    boundaries: list[CellBoundary]
    measures: np.ndarray
    quad_converged: bool

    @property
    def n(self) -> int:
        return len(self.boundaries)


def tessellate(problem: Problem, w, options: SolveOptions | None = None) -> Tessellation:
    """Trace every cell at ``w`` and integrate the source density over it."""
    options = options or SolveOptions()
    w = np.asarray(w, dtype=float)

    def one(i):
        ctx = CellContext.for_cell(problem, w, i, options.trace_tol)
        b = trace_cell(ctx)
        return b, cell_measure(b, ctx, problem.density, options.quad)

    if options.threads > 1:
        with ThreadPoolExecutor(options.threads) as pool:
            out = list(pool.map(one, range(problem.n)))
    else:
        out = [one(i) for i in range(problem.n)]
    bnds = [b for b, _ in out]
    mus = np.array([m.value for _, m in out])
    return Tessellation(w.copy(), bnds, mus, all(m.converged for _, m in out))


def gradient(problem: Problem, w, options: SolveOptions | None = None) -> np.ndarray:
    """``mu(A(y_i)) - nu_i`` for every cell."""
    return tessellate(problem, w, options).measures - problem.masses


def hessian(problem: Problem, w, boundaries, options: SolveOptions | None = None) -> np.ndarray:
    """Symmetric Hessian with non-positive off-diagonal and zero row sums.

    Only pairs ``i < j`` whose cells share an arc are integrated.
    """
    options = options or SolveOptions()
    n = problem.n
    H = np.zeros((n, n))
    pairs = [(i, k - 1) for i in range(n) for k in sorted(boundaries[i].neighbors()) if k - 1 > i]

    def entry(p):
        i, j = p
        return hessian_entry(i, j, boundaries, problem, w, options.quad)

    if options.threads > 1:
        with ThreadPoolExecutor(options.threads) as pool:
            vals = list(pool.map(entry, pairs))
    else:
        vals = [entry(p) for p in pairs]
    for (i, j), v in zip(pairs, vals):
        H[i, j] = H[j, i] = v
    H[np.diag_indices(n)] = -H.sum(axis=1)
    return H


def fd_hessian(problem: Problem, w, mode: str = "forward", options: SolveOptions | None = None,
               g0: np.ndarray | None = None, structured: bool = True) -> np.ndarray:
    """Finite-difference Jacobian of the gradient, one column per weight.

    Forward differences use ``h = sqrt(eps)``, centered ones ``h = eps^(1/3)``.
    With ``structured`` the result is symmetrised and its diagonal reset so
    that rows sum to zero, as for the analytic Hessian.
    """
    w = np.asarray(w, dtype=float)
    n = problem.n
    eps = np.finfo(float).eps
    H = np.zeros((n, n))
    if mode == "forward":
        h = math.sqrt(eps)
        base = g0 if g0 is not None else gradient(problem, w, options)
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            H[:, j] = (gradient(problem, w + e, options) - base) / h
    elif mode == "centered":
        h = eps ** (1.0 / 3.0)
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            H[:, j] = (gradient(problem, w + e, options) - gradient(problem, w - e, options)) / (2 * h)
    else:
        raise ValueError(f"unknown finite-difference mode {mode!r}")
    if structured:
        H = 0.5 * (H + H.T)
        H[np.diag_indices(n)] = 0.0
        H[np.diag_indices(n)] = -H.sum(axis=1)
    return H


class ReducedBasis:
    """Orthonormal basis ``[q Q]`` with ``q = e / sqrt(N)`` from a Householder reflector."""

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("need at least two cells")
        e = np.ones(n)
        e1 = np.zeros(n)
        e1[0] = 1.0
        sn = math.sqrt(n)
        # scaled so that |u|^2 = 2, which makes I - u u^T an orthogonal reflector
        self.u = (e / sn - e1) / math.sqrt(1.0 - 1.0 / sn)
        U = np.eye(n) - np.outer(self.u, self.u)
        self.q = U[:, 0]
        self.Q = U[:, 1:]
        self.n = n

    def project(self, v) -> np.ndarray:
        return self.Q.T @ v


def newton_step(H, g, basis: ReducedBasis) -> np.ndarray:
    """``s = -Q (Q^T H Q)^{-1} Q^T g`` with a Cholesky (or CG for large N) solve."""
    Q = basis.Q
    A = Q.T @ H @ Q
    rhs = -(Q.T @ g)
    if not np.any(rhs):
        return np.zeros(len(g))
    if basis.n <= DENSE_LIMIT:
        try:
            c = scipy.linalg.cho_factor(A)
        except np.linalg.LinAlgError as exc:
            raise ReducedSystemSingular(f"reduced Hessian is not positive definite: {exc}") from exc
        z = scipy.linalg.cho_solve(c, rhs)
    else:
        z, info = scipy.sparse.linalg.cg(A, rhs, rtol=1e-13, maxiter=10 * basis.n)
        if info != 0:
            raise ReducedSystemSingular(f"conjugate gradients did not converge (info={info})")
    if not np.all(np.isfinite(z)):
        raise ReducedSystemSingular("reduced solve produced non-finite values")
    return Q @ z


def feasibility_kappa(targets, cost, w) -> float:
    """``min_{i<j} 1 - |w_i - w_j| / c(y_i, y_j)``; positive iff ``w`` is feasible."""
    pts = targets.points if isinstance(targets, TargetMeasure) else np.asarray(targets, dtype=float)
    w = np.asarray(w, dtype=float)
    i, j = np.triu_indices(len(w), 1)
    d = pts[i] - pts[j]
    c = cost.norm_v(d[:, 0], d[:, 1])
    return float(np.min(1.0 - np.abs(w[i] - w[j]) / c))


def _pair_matrix(problem: Problem):
    n = problem.n
    i, j = np.triu_indices(n, 1)
    A = np.zeros((len(i), n))
    A[np.arange(len(i)), i] = 1.0
    A[np.arange(len(i)), j] = -1.0
    d = problem.points[i] - problem.points[j]
    b = problem.cost.norm_v(d[:, 0], d[:, 1])
    return A, b


def feasibility_bound(problem: Problem, w0, s) -> int:
    """Closed-form upper bound on the number of halvings making ``w0 + s/2^k`` feasible."""
    A, b = _pair_matrix(problem)
    As = np.abs(A @ s)
    eps = b - np.abs(A @ w0)
    mask = As > 0
    if not np.any(mask):
        return 0
    return max(0, int(math.ceil(np.max(np.log2(As[mask]) - np.log2(np.abs(eps[mask]))))))


def enforce_feasible(problem: Problem, w0, s) -> tuple[np.ndarray, int]:
    """Halve ``s`` until ``w0 + s`` is feasible; returns ``(w1, halvings)``."""
    w0 = np.asarray(w0, dtype=float)
    s = np.asarray(s, dtype=float)
    h = 0
    while feasibility_kappa(problem.targets, problem.cost, w0 + s) <= 0.0:
        s = 0.5 * s
        h += 1
        if h > MAX_FEAS_HALVINGS:
            raise StepUnderflow("feasibility halving underflow (ill-conditioned problem or poor initial guess)")
    return w0 + s, h


# ---------------------------------------------------------------------------
# damped Newton


@dataclass
class SolverReport:
    status: str = "not-started"
    iterations: int = 0
    damping_halvings: int = 0
    feasibility_halvings: int = 0
    final_error: float = math.inf
    kappa: float = math.nan
    kappa0: float = math.nan
    per_cell_measures: list = field(default_factory=list)
    wall_time: float = 0.0
    accuracy_flags: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    history: list = field(default_factory=list)
    init: str = "zero"
    init_iterations: int = 0
    homotopy_steps: int = 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _zero_sum(w):
    w = np.asarray(w, dtype=float)
    return w - w.mean()


def _reduced_norm2(basis, g):
    v = basis.Q.T @ g
    return float(v @ v)


def damped_newton(problem: Problem, w0, maxit: int = 20, tol: float = 1e-8,
                  options: SolveOptions | None = None, report: SolverReport | None = None):
    """Damped Newton on ``grad Phi(w) = 0`` in the complement of the constant vector.

    Returns ``(w, report)``.  The report status is ``converged``,
    ``stagnated`` (step below ``tol / 2**maxit``) or ``max-iterations``.
    """
    options = options or SolveOptions()
    t_start = time.perf_counter()
    rep = report or SolverReport()
    basis = ReducedBasis(problem.n)
    w0 = _zero_sum(w0)
    kappa0 = feasibility_kappa(problem.targets, problem.cost, w0)
    if kappa0 <= 0.0:
        raise InfeasibleWeights(f"initial weights are infeasible (kappa={kappa0:.3e})")
    rep.kappa0 = kappa0
    tess0 = tessellate(problem, w0, options)
    err0 = tess0.measures - problem.masses
    flags = set()
    if not tess0.quad_converged:
        flags.add("quadrature-depth-exhausted")
    step_floor = tol / 2.0**maxit
    rep.history.append({"iteration": 0, "w": w0.tolist(), "error": float(np.max(np.abs(err0))),
                        "kappa": kappa0, "damping": 0})
    status = "max-iterations"
    w_final, tess_final, err_final = w0, tess0, err0
    if np.max(np.abs(err0)) <= tol:
        status = "converged"
    else:
        for it in range(1, maxit + 1):
            if options.hessian_mode == "analytic":
                H = hessian(problem, w0, tess0.boundaries, options)
            else:
                H = fd_hessian(problem, w0, options.hessian_mode, options, g0=err0)
            s = newton_step(H, err0, basis)
            w1, fh = enforce_feasible(problem, w0, s)
            rep.feasibility_halvings += fh
            s = w1 - w0
            w1 = _zero_sum(w1)
            tess1 = tessellate(problem, w1, options)
            err1 = tess1.measures - problem.masses
            g0 = _reduced_norm2(basis, err0)
            damping = 0
            while _reduced_norm2(basis, err1) > g0 and np.max(np.abs(s)) >= step_floor:
                s = 0.5 * s
                damping += 1
                # the feasible set is convex, so this re-check never halves further
                w1, fh = enforce_feasible(problem, w0, s)
                rep.feasibility_halvings += fh
                s = w1 - w0
                w1 = _zero_sum(w1)
                tess1 = tessellate(problem, w1, options)
                err1 = tess1.measures - problem.masses
            rep.damping_halvings += damping
            if not tess1.quad_converged:
                flags.add("quadrature-depth-exhausted")
            kappa1 = feasibility_kappa(problem.targets, problem.cost, w1)
            rep.iterations = it
            rep.history.append({"iteration": it, "w": w1.tolist(), "error": float(np.max(np.abs(err1))),
                                "kappa": kappa1, "damping": damping, "feasibility_halvings": fh})
            log.debug("newton %d: error %.3e kappa %.4g damping %d", it, np.max(np.abs(err1)), kappa1, damping)
            w_final, tess_final, err_final = w1, tess1, err1
            if np.max(np.abs(err1)) <= tol:
                status = "converged"
                break
            if np.max(np.abs(s)) <= step_floor:
                status = "stagnated"
                break
            w0, tess0, err0 = w1, tess1, err1
    rep.status = status
    rep.final_error = float(np.max(np.abs(err_final)))
    rep.kappa = feasibility_kappa(problem.targets, problem.cost, w_final)
    rep.per_cell_measures = tess_final.measures.tolist()
    if rep.kappa < KAPPA_WARN:
        rep.warnings.append(f"small feasibility coefficient kappa={rep.kappa:.3e}; expect slow convergence")
    rep.accuracy_flags = sorted(set(rep.accuracy_flags) | flags)
    rep.wall_time += time.perf_counter() - t_start
    rep.tessellation = tess_final
    return w_final, rep


# ---------------------------------------------------------------------------
# initial guesses


def _grid(problem: Problem, h: float):
    x0, y0, x1, y1 = problem.domain.bbox
    nx = int(round((x1 - x0) / h))
    ny = int(round((y1 - y0) / h))
    X1 = x0 + h * (np.arange(nx) + 0.5)
    X2 = y0 + h * (np.arange(ny) + 0.5)
    g1, g2 = np.meshgrid(X1, X2, indexing="ij")
    g1, g2 = g1.ravel(), g2.ravel()
    inside = problem.domain.contains(g1, g2)
    g1, g2 = g1[inside], g2[inside]
    weights = problem.density(g1, g2) * h * h
    pts = problem.points
    cost = np.stack([problem.cost.norm_v(g1 - y[0], g2 - y[1]) for y in pts])
    return cost, weights


def grid_measure(problem: Problem, w, h: float, _cache=None) -> np.ndarray:
    """Approximate cell measures by classifying grid-cell centres (ties go to the lowest index)."""
    cost, weights = _cache if _cache is not None else _grid(problem, h)
    ind = np.argmin(cost - np.asarray(w, dtype=float)[:, None], axis=0)
    return np.bincount(ind, weights=weights, minlength=problem.n)


def grid_initial_guess(problem: Problem, h: float = 0.05, maxit: int = 50) -> tuple[np.ndarray, int]:
    """Coordinate-wise adjustment of ``w`` on a grid until ``|M_i - nu_i| < h^2``.

    Returns ``(w0, outer_iterations)``; ``w0`` is zero-sum and feasible.
    """
    cache = _grid(problem, h)
    n = problem.n
    nu = problem.masses
    w0 = np.zeros(n)
    it = 0
    for it in range(1, maxit + 1):
        M = grid_measure(problem, w0, h, cache)
        M0 = M
        for k in range(n):
            M0 = grid_measure(problem, w0, h, cache)
            incr = math.sqrt(h)
            while abs(M0[k] - nu[k]) > h * h and incr > h**4:
                shift = np.sign(M0[k] - nu[k]) * incr / (n - 1)
                w0 = w0 + shift
                w0[k] -= shift
                M1 = grid_measure(problem, w0, h, cache)
                if abs(M1[k] - nu[k]) > abs(M0[k] - nu[k]):
                    incr *= math.sqrt(h)
                M0 = M1
        if np.max(np.abs(M0 - nu)) < h * h or np.max(np.abs(M0 - nu)) >= np.max(np.abs(M - nu)):
            break
    w0 = _zero_sum(w0)
    halvings = 0
    while feasibility_kappa(problem.targets, problem.cost, w0) <= 0.0 and halvings < MAX_FEAS_HALVINGS:
        w0 = 0.5 * w0
        halvings += 1
    return w0, it


def homotopy_step(delta: float, k: int) -> float:
    """Next continuation step ``2^((4-k)/3) * delta`` after ``k`` Newton iterations."""
    return 2.0 ** ((4 - k) / 3.0) * delta


def trivial_homotopy(problem: Problem, delta0: float = 0.1, tol: float = 1e-8, maxit: int = 20,
                     options: SolveOptions | None = None):
    """Continuation from the Voronoi masses (``w = 0``) to the prescribed masses.

    Returns ``(w, report)`` where the report accumulates all Newton iterations.
    """
    if not 0 < delta0 <= 1:
        raise ValueError("delta0 must lie in (0, 1]")
    options = options or SolveOptions()
    t_start = time.perf_counter()
    V = tessellate(problem, np.zeros(problem.n), options).measures
    alpha, delta = 0.0, delta0
    w = np.zeros(problem.n)
    total_it, steps = 0, 0
    rep = None
    while alpha < 1.0:
        a = min(1.0, alpha + delta)
        nu_hat = (1.0 - a) * V + a * problem.masses
        sub = dataclasses.replace(problem, targets=TargetMeasure(problem.points, nu_hat))
        try:
            w_a, rep = damped_newton(sub, w, maxit, tol, options)
            ok = rep.converged
        except (InfeasibleWeights, StepUnderflow, ReducedSystemSingular):
            ok = False
        if ok:
            total_it += rep.iterations
            steps += 1
            alpha, w = a, w_a
            delta = homotopy_step(delta, rep.iterations)
        else:
            delta *= 0.5
            if delta < 1e-6:
                raise StepCollapse(f"homotopy step collapsed at alpha={alpha:.6f}")
    rep.iterations = total_it
    rep.homotopy_steps = steps
    rep.init = "homotopy"
    rep.wall_time = time.perf_counter() - t_start
    return w, rep


def _nonsingular_newton(problem, w0, alpha, tol, maxit, options, basis):
    """Damped Newton on ``(1-alpha) w + alpha (mu(w) - nu)`` with Jacobian ``(1-alpha) I + alpha H``."""
    w0 = _zero_sum(w0)
    tess0 = tessellate(problem, w0, options)
    g0 = (1 - alpha) * w0 + alpha * (tess0.measures - problem.masses)
    n = problem.n
    for it in range(1, maxit + 1):
        if np.max(np.abs(g0)) <= tol:
            return w0, it - 1, True
        H = hessian(problem, w0, tess0.boundaries, options)
        J = (1 - alpha) * np.eye(n) + alpha * H
        s = scipy.linalg.cho_solve(scipy.linalg.cho_factor(J), -g0)
        w1, _ = enforce_feasible(problem, w0, s)
        s = w1 - w0
        while True:
            tess1 = tessellate(problem, w1, options)
            g1 = (1 - alpha) * w1 + alpha * (tess1.measures - problem.masses)
            if g1 @ g1 <= g0 @ g0 or np.max(np.abs(s)) < tol / 2.0**maxit:
                break
            s = 0.5 * s
            w1 = w0 + s
        w0, tess0, g0 = w1, tess1, g1
        if np.max(np.abs(g0)) <= tol:
            return w0, it, True
    return w0, maxit, False


def nonsingular_homotopy(problem: Problem, delta0: float = 0.1, tol: float = 1e-8, maxit: int = 20,
                         options: SolveOptions | None = None):
    """Continuation on ``(1-alpha) w + alpha grad Phi(w) = 0`` from ``w = 0`` at ``alpha = 0``."""
    if not 0 < delta0 <= 1:
        raise ValueError("delta0 must lie in (0, 1]")
    options = options or SolveOptions()
    t_start = time.perf_counter()
    basis = ReducedBasis(problem.n)
    alpha, delta = 0.0, delta0
    w = np.zeros(problem.n)
    total_it, steps = 0, 0
    rep = None
    while alpha < 1.0:
        a = min(1.0, alpha + delta)
        ok = False
        k = 0
        try:
            if a < 1.0:
                w_a, k, ok = _nonsingular_newton(problem, w, a, tol, maxit, options, basis)
                nu_hat = problem.masses - (1 - a) / a * w_a
                if ok and np.any(nu_hat <= 0):
                    ok = False
                    if delta * 0.5 < 1e-6:
                        raise NegativeEffectiveMass(f"effective mass not positive at alpha={a:.6f}")
            else:
                w_a, rep = damped_newton(problem, w, maxit, tol, options)
                k, ok = rep.iterations, rep.converged
        except (InfeasibleWeights, StepUnderflow, ReducedSystemSingular, np.linalg.LinAlgError):
            ok = False
        if ok:
            total_it += k
            steps += 1
            alpha, w = a, w_a
            delta = homotopy_step(delta, k)
        else:
            delta *= 0.5
            if delta < 1e-6:
                raise StepCollapse(f"homotopy step collapsed at alpha={alpha:.6f}")
    rep.iterations = total_it
    rep.homotopy_steps = steps
    rep.init = "ns-homotopy"
    rep.wall_time = time.perf_counter() - t_start
    return w, rep


def solve(problem: Problem, init: str = "grid", grid_h: float = 0.05, maxit: int = 20, tol: float = 1e-8,
          options: SolveOptions | None = None, w0=None, delta0: float = 0.1):
    """Default pipeline: an initial guess followed by damped Newton; returns ``(w, report)``."""
    options = options or SolveOptions()
    t_start = time.perf_counter()
    if init == "zero":
        w, rep = damped_newton(problem, np.zeros(problem.n) if w0 is None else w0, maxit, tol, options)
    elif init == "grid":
        g, outer = grid_initial_guess(problem, grid_h)
        w, rep = damped_newton(problem, g, maxit, tol, options)
        rep.init_iterations = outer
    elif init == "homotopy":
        w, rep = trivial_homotopy(problem, delta0, tol, maxit, options)
    elif init == "ns-homotopy":
        w, rep = nonsingular_homotopy(problem, delta0, tol, maxit, options)
    else:
        raise ValueError(f"unknown init strategy {init!r}")
    rep.init = init
    rep.wall_time = time.perf_counter() - t_start
    return w, rep
