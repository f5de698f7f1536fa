"""
Certified max-margin feasibility for  H x >= kappa,  ||x||_2 <= 1.

The optimum  max_{||x|| <= 1} min_i h_i^T x  is paired with the dual

    min_{lambda in simplex} ||H^T lambda||_2,

the distance from the origin to the convex hull of the rows. For any simplex
weights lambda and any unit x, weak duality gives

    min_i h_i^T x  <=  lambda^T H x  <=  ||H^T lambda||_2,

so every (x, lambda) pair brackets the optimum and the solver stops on the
width of that bracket rather than on iterate movement.

Two dual solvers are provided:

* ``"wolfe"`` (default): Wolfe's min-norm-point algorithm, which terminates
  finitely with the exact minimizer up to rounding.
* ``"away_fw"``: Frank-Wolfe with away steps on  1/2 ||H^T lambda||^2.  Also
  used to polish a Wolfe answer whose bracket is still too wide.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import nnls


class Decision(str, enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    UNDECIDED = "Undecided"


@dataclass
class MarginCertificate:
    """Primal direction and dual weights bracketing the ball optimum.

    ``margin_lower`` is min_i h_i^T x for the reported x; ``margin_upper`` is
    ||H^T lambda|| (minus lambda^T offsets when offsets are present). Since
    x = 0 is always admissible on the ball, the certified interval for the
    optimum is [max(margin_lower, 0), margin_upper] and ``gap`` is its width.
    """

    x: np.ndarray
    lam: np.ndarray
    margin_lower: float
    margin_upper: float
    gap: float
    iterations: int = 0
    converged: bool = True
    offsets: np.ndarray | None = field(default=None, repr=False)

    @property
    def ball_lower(self) -> float:
        return max(self.margin_lower, 0.0)


class IterationLimit(RuntimeError):
    def __init__(self, certificate: MarginCertificate):
        super().__init__(
            f"gap {certificate.gap:.3e} still open after {certificate.iterations} iterations"
        )
        self.certificate = certificate


def _as_matrix(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
        raise ValueError(f"pattern matrix must be 2-D and non-empty, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("pattern matrix has non-finite entries")
    return H


def _certificate(H, lam, x_fallback, iterations, converged=True) -> MarginCertificate:
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    y = H.T @ lam
    upper = float(np.linalg.norm(y))
    if upper > 0.0:
        x = y / upper
    else:
        x = x_fallback
    lower = float(np.min(H @ x))
    gap = upper - max(lower, 0.0)
    return MarginCertificate(x, lam, lower, upper, gap, iterations, converged)


def _default_direction(n):
    e = np.zeros(n)
    e[0] = 1.0
    return e


def _wolfe(P, max_iters, eps=1e-12):
    """Wolfe's min-norm-point algorithm on the rows of P.

    Keeps a corral S of affinely independent rows and the Cholesky factor of
    M = 1 1^T + P_S P_S^T, whose inverse applied to 1 gives the affine
    minimizer of aff(S). Adding a row extends the factor in O(|S|^2); a
    minor-cycle removal refactors from scratch.
    """
    m, n = P.shape
    sq = np.einsum("ij,ij->i", P, P)
    scale = max(float(sq.max()), 1.0)
    j0 = int(np.argmin(sq))
    S = [j0]
    w = np.array([1.0])
    x = P[j0].copy()
    L = np.array([[math.sqrt(1.0 + sq[j0])]])
    it = 0
    for it in range(1, max_iters + 1):
        g = P @ x
        j = int(np.argmin(g))
        if float(x @ x) - g[j] <= eps * scale or j in S:
            break
        col = 1.0 + P[S] @ P[j]
        l = solve_triangular(L, col, lower=True)
        d2 = 1.0 + sq[j] - float(l @ l)
        if d2 <= 1e-14 * scale:
            break  # affinely dependent within rounding: nothing left to gain
        k = len(S)
        grown = np.zeros((k + 1, k + 1))
        grown[:k, :k] = L
        grown[k, :k] = l
        grown[k, k] = math.sqrt(d2)
        L = grown
        S.append(j)
        w = np.append(w, 0.0)
        while True:
            z = solve_triangular(L, np.ones(len(S)), lower=True)
            z = solve_triangular(L.T, z, lower=False)
            alpha = z / z.sum()
            if np.all(alpha > eps):
                w = alpha
                break
            neg = alpha <= eps
            ratios = np.full(len(S), np.inf)
            ratios[neg] = w[neg] / (w[neg] - alpha[neg])
            drop = int(np.argmin(ratios))
            theta = ratios[drop]
            w = theta * alpha + (1.0 - theta) * w
            w[drop] = 0.0
            keep = w > eps
            S = [s for s, kf in zip(S, keep) if kf]
            w = w[keep] / w[keep].sum()
            PS = P[S]
            L = cholesky(1.0 + PS @ PS.T, lower=True)
        x = w @ P[S]
    lam = np.zeros(m)
    lam[S] = w
    return lam, it


def _away_fw(H, lam, tol, max_iters, gram=None):
    """Away-step Frank-Wolfe on 1/2 ||H^T lam||^2 over the simplex.

    Works on the Gram matrix so each iteration costs O(m). Returns the final
    weights, the best unit direction seen, and the iteration count.
    """
    G = H @ H.T if gram is None else gram
    lam = lam.copy()
    grad = G @ lam  # = H y, y = H^T lam
    x_best, lower_best = None, -math.inf
    it = 0
    for it in range(1, max_iters + 1):
        yy = float(lam @ grad)  # ||y||^2
        upper = math.sqrt(max(yy, 0.0))
        s = int(np.argmin(grad))
        if upper > 0.0:
            lower = float(grad[s]) / upper
            if lower > lower_best:
                lower_best = lower
                x_best = lam.copy()
        # half the budget: the incrementally updated gradient drifts slightly
        if upper - max(lower_best, 0.0) <= 0.5 * tol or upper <= 0.5 * tol:
            break
        active = np.flatnonzero(lam > 0.0)
        a = int(active[np.argmax(grad[active])])
        fw_gap = yy - float(grad[s])
        away_gap = float(grad[a]) - yy
        if fw_gap >= away_gap:
            # d = e_s - lam
            dgrad = G[:, s] - grad
            dd = float(G[s, s]) - 2.0 * float(grad[s]) + yy
            gamma_max = 1.0
            slope = float(grad[s]) - yy
            gamma = min(gamma_max, -slope / dd) if dd > 0 else gamma_max
            gamma = max(gamma, 0.0)
            lam *= 1.0 - gamma
            lam[s] += gamma
            grad += gamma * dgrad
        else:
            # d = lam - e_a
            la = lam[a]
            gamma_max = la / (1.0 - la) if la < 1.0 else math.inf
            dgrad = grad - G[:, a]
            dd = yy - 2.0 * float(grad[a]) + float(G[a, a])
            slope = yy - float(grad[a])
            gamma = min(gamma_max, -slope / dd) if dd > 0 else gamma_max
            gamma = max(gamma, 0.0)
            lam *= 1.0 + gamma
            lam[a] -= gamma
            if gamma == gamma_max:
                lam[a] = 0.0
            grad += gamma * dgrad
        lam = np.clip(lam, 0.0, None)
        total = lam.sum()
        if abs(total - 1.0) > 1e-13 or it % 64 == 0:
            lam /= total
            grad = G @ lam
    return lam, x_best, it


def max_margin(H, tol: float = 1e-9, max_iters: int = 10_000, method: str = "wolfe") -> MarginCertificate:
    """Solve max_{||x|| <= 1} min_i h_i^T x with a duality certificate.

    Raises IterationLimit (carrying the best certificate) if the bracket is
    still wider than ``tol`` after ``max_iters`` iterations.
    """
    H = _as_matrix(H)
    if not tol > 0:
        raise ValueError("tol must be positive")
    m, n = H.shape
    e1 = _default_direction(n)
    iterations = 0
    if method == "wolfe":
        lam, iterations = _wolfe(H, max_iters)
    elif method == "away_fw":
        lam = np.full(m, 1.0 / m)
    else:
        raise ValueError(f"unknown method {method!r}")

    cert = _certificate(H, lam, e1, iterations)
    if cert.gap <= tol:
        return cert

    lam, lam_best_x, it = _away_fw(H, cert.lam, tol, max_iters)
    cert = _certificate(H, lam, e1, iterations + it)
    if lam_best_x is not None:
        # the best primal direction may come from an earlier iterate
        y = H.T @ lam_best_x
        ny = np.linalg.norm(y)
        if ny > 0:
            x = y / ny
            lower = float(np.min(H @ x))
            if lower > cert.margin_lower:
                cert.x = x
                cert.margin_lower = lower
                cert.gap = cert.margin_upper - max(lower, 0.0)
    if cert.gap > tol:
        cert.converged = False
        raise IterationLimit(cert)
    return cert


# ---------------------------------------------------------------------------
# constraints with per-row offsets:  h_i^T x - c_i >= t


def _least_distance(G, h):
    """min ||x|| s.t. G x >= h via NNLS (Lawson & Hanson, ch. 23).

    Returns (x, u) with u >= 0 the NNLS weights, or (None, u) if the system
    G x >= h has no solution at all.
    """
    m, n = G.shape
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=max(3 * m, 1000))
    r = E @ u - f
    if np.linalg.norm(r) <= 1e-12:
        return None, u
    return -r[:n] / r[n], u


def max_margin_offsets(H, offsets, tol: float = 1e-9, max_iters: int = 200) -> MarginCertificate:
    """Solve max_{||x|| <= 1} min_i (h_i^T x - c_i) by bisection on the level.

    Each level t is a least-distance problem {H x >= t + c}; it is feasible on
    the ball iff its min-norm solution has norm <= 1. The upper bound uses
    lambda from the last infeasible level, for which weak duality gives
    t* <= ||H^T lambda|| - c^T lambda. The returned x may lie inside the ball.
    """
    H = _as_matrix(H)
    c = np.asarray(offsets, dtype=float)
    if c.shape != (H.shape[0],):
        raise ValueError("offsets must have one entry per row")
    m, n = H.shape
    x_best = np.zeros(n)
    lower = float(np.min(-c))
    norms = np.linalg.norm(H, axis=1)
    i0 = int(np.argmin(norms - c))
    lam_best = np.zeros(m)
    lam_best[i0] = 1.0
    upper = float(norms[i0] - c[i0])
    it = 0
    while upper - lower > tol and it < max_iters:
        it += 1
        t = 0.5 * (lower + upper)
        x, u = _least_distance(H, t + c)
        if x is not None and np.linalg.norm(x) <= 1.0:
            level = float(np.min(H @ x - c))
            if level > lower:
                x_best, lower = x, level
            else:
                lower = t
        else:
            if u.sum() > 0:
                lam = u / u.sum()
                bound = float(np.linalg.norm(H.T @ lam) - c @ lam)
                if bound < upper:
                    lam_best, upper = lam, bound
                else:
                    upper = t if t < upper else upper
            else:
                upper = t
    # bisection can leave 'upper' at a level without a dual vector; recompute
    upper_cert = float(np.linalg.norm(H.T @ lam_best) - c @ lam_best)
    upper = max(upper, lower) if upper_cert > upper else upper
    cert = MarginCertificate(
        x=x_best,
        lam=lam_best,
        margin_lower=lower,
        margin_upper=max(upper_cert, lower) if upper_cert < lower else upper_cert,
        gap=0.0,
        iterations=it,
        converged=True,
        offsets=c,
    )
    cert.gap = cert.margin_upper - max(cert.margin_lower, float(np.min(-c)))
    cert.converged = cert.gap <= tol
    return cert


# ---------------------------------------------------------------------------
# decisions


def is_feasible(H, kappa: float, tol: float = 1e-9) -> Decision:
    """Decide whether some unit x has H x >= kappa, for kappa >= 0.

    kappa > 0: ball and sphere problems coincide, so the certificate decides
    directly. kappa = 0: x = 0 trivially satisfies the ball version, so the
    sphere question is settled by the dual (origin inside the hull up to
    ``tol`` means infeasible) or by a strictly positive primal margin.
    """
    if kappa < 0:
        raise ValueError("is_feasible needs kappa >= 0; use sphere_heuristic for kappa < 0")
    try:
        cert = max_margin(H, tol=tol)
    except IterationLimit as exc:
        cert = exc.certificate
    return decide(cert, kappa, tol)


def decide(cert: MarginCertificate, kappa: float, tol: float) -> Decision:
    if kappa == 0.0:
        if cert.margin_lower > tol:
            return Decision.FEASIBLE
        if cert.margin_upper < tol:
            return Decision.INFEASIBLE
        return Decision.UNDECIDED
    if cert.margin_lower >= kappa:
        return Decision.FEASIBLE
    if cert.margin_upper < kappa:
        return Decision.INFEASIBLE
    return Decision.UNDECIDED


def verify_witness(H, x, kappa: float, atol: float = 1e-9) -> bool:
    """Exact-sum check that x is (nearly) unit and every row clears kappa."""
    H = np.asarray(H, dtype=float)
    x = np.asarray(x, dtype=float)
    norm = math.sqrt(math.fsum(float(v) * float(v) for v in x))
    if abs(norm - 1.0) > atol:
        return False
    for row in H:
        if math.fsum(float(a) * float(b) for a, b in zip(row, x)) < kappa:
            return False
    return True


def sphere_heuristic(
    H,
    kappa: float,
    restarts: int = 16,
    seed: int = 0,
    max_iters: int = 2000,
) -> np.ndarray | None:
    """Search the unit sphere for x with H x >= kappa; return x or None.

    Projected subgradient ascent on min_i h_i^T x with step c/sqrt(t),
    c = 1 / max row norm, from ``restarts`` random starts (the certified ball
    direction is tried first). Returning None never means infeasible: for
    kappa < 0 the sphere problem is nonconvex.
    """
    H = _as_matrix(H)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    m, n = H.shape
    row_max = float(np.max(np.linalg.norm(H, axis=1)))
    c = 1.0 / row_max if row_max > 0 else 1.0
    rng = np.random.default_rng(seed)

    starts = []
    try:
        starts.append(max_margin(H, tol=1e-9).x)
    except IterationLimit as exc:
        starts.append(exc.certificate.x)
    for _ in range(restarts):
        z = rng.standard_normal(n)
        starts.append(z / np.linalg.norm(z))

    for x in starts:
        x = x / np.linalg.norm(x)
        best_x, best_val = x, float(np.min(H @ x))
        for t in range(1, max_iters + 1):
            if best_val >= kappa and verify_witness(H, best_x, kappa):
                return best_x
            i = int(np.argmin(H @ x))
            step = x + (c / math.sqrt(t)) * H[i]
            norm = np.linalg.norm(step)
            if norm == 0.0:
                break
            x = step / norm
            val = float(np.min(H @ x))
            if val > best_val:
                best_x, best_val = x, val
        if best_val >= kappa and verify_witness(H, best_x, kappa):
            return best_x
    return None
