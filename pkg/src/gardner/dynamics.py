"""
Pattern storage in a sign network and fixed-point checks.

Site k of the network updates as

    s_k <- sign( sum_{j != k} s_j X_jk - T_k ),   sign(0) := +1,

and pattern H_i is a fixed point with margin kappa when
H_ik (sum_{j != k} H_ij X_jk - T_k) > kappa for every site k. The conditions
for different k involve different columns of X only, so storage is one
perceptron problem per column: rows H_ik * H_{i, j != k}, unit-norm solution.
The diagonal X_kk is held at zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .margin import IterationLimit, MarginCertificate, max_margin, max_margin_offsets


class StorageFailed(RuntimeError):
    def __init__(self, site: int, certificate: MarginCertificate, kappa: float):
        super().__init__(
            f"site {site}: certified margin in [{certificate.margin_lower:.6g}, "
            f"{certificate.margin_upper:.6g}] does not exceed kappa={kappa:g}"
        )
        self.site = site
        self.certificate = certificate


@dataclass
class InteractionMatrix:
    X: np.ndarray
    thresholds: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def fields(self, states: np.ndarray) -> np.ndarray:
        """sum_{j != k} s_j X_jk - T_k for each row of ``states``."""
        states = np.atleast_2d(states)
        return states @ self.X - states * np.diag(self.X) - self.thresholds


@dataclass
class StorageResult:
    interaction: InteractionMatrix
    per_site_margin: np.ndarray
    certificates: list[MarginCertificate]


def check_patterns(patterns) -> np.ndarray:
    H = np.asarray(patterns, dtype=float)
    if H.ndim != 2 or H.size == 0:
        raise ValueError("patterns must be a non-empty m x n array")
    if not np.all(np.abs(H) == 1.0):
        raise ValueError("pattern entries must be exactly +1 or -1")
    return H


def random_patterns(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.where(rng.random((m, n)) < 0.5, 1.0, -1.0)


def site_rows(H: np.ndarray, k: int) -> np.ndarray:
    others = np.delete(H, k, axis=1)
    return H[:, k:k + 1] * others


def store_patterns(patterns, kappa: float, tol: float = 1e-9, thresholds=None) -> StorageResult:
    """Build X column by column so every pattern is a fixed point with margin > kappa.

    Raises StorageFailed with the first site whose certified margin does not
    exceed kappa (its certificate shows whether the site is infeasible or only
    undecided at this tolerance).
    """
    if kappa < 0:
        raise ValueError("store_patterns needs kappa >= 0")
    H = check_patterns(patterns)
    m, n = H.shape
    T = np.zeros(n) if thresholds is None else np.asarray(thresholds, dtype=float)
    if T.shape != (n,):
        raise ValueError("thresholds must have one entry per site")
    X = np.zeros((n, n))
    margins = np.zeros(n)
    certs = []
    for k in range(n):
        rows = site_rows(H, k)
        offsets = H[:, k] * T[k]
        if np.any(offsets != 0.0):
            cert = max_margin_offsets(rows, offsets, tol=tol)
            x = cert.x
            norm = np.linalg.norm(x)
            if norm > 0:
                x = x / norm
            achieved = float(np.min(rows @ x - offsets)) if norm > 0 else -np.inf
        else:
            try:
                cert = max_margin(rows, tol=tol)
            except IterationLimit as exc:
                cert = exc.certificate
            x = cert.x
            achieved = cert.margin_lower
        if not achieved > kappa:
            raise StorageFailed(k, cert, kappa)
        X[np.arange(n) != k, k] = x
        margins[k] = achieved
        certs.append(cert)
    return StorageResult(InteractionMatrix(X, T), margins, certs)


@dataclass
class FixedPointReport:
    satisfied: np.ndarray  # (m, n) bool
    fields: np.ndarray

    @property
    def n_violations(self) -> int:
        return int(self.satisfied.size - np.count_nonzero(self.satisfied))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.satisfied))

    def violations(self) -> list[tuple[int, int]]:
        return [tuple(map(int, ij)) for ij in np.argwhere(~self.satisfied)]


def verify_fixed_points(patterns, interaction: InteractionMatrix, kappa: float) -> FixedPointReport:
    """Check H_ik (sum_{j != k} H_ij X_jk - T_k) > kappa for every (i, k)."""
    H = check_patterns(patterns)
    if H.shape[1] != interaction.n:
        raise ValueError("pattern length does not match the interaction matrix")
    f = interaction.fields(H)
    return FixedPointReport(H * f > kappa, f)


def sign(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 0, 1.0, -1.0)


def step_dynamics(state, interaction: InteractionMatrix) -> np.ndarray:
    """One synchronous update of every site."""
    s = np.asarray(state, dtype=float)
    return sign(interaction.fields(s)[0])


def run_dynamics(state, interaction: InteractionMatrix, max_steps: int = 100) -> tuple[np.ndarray, int, bool]:
    """Iterate until a fixed point or ``max_steps``; returns (state, steps, reached_fixed_point)."""
    s = np.asarray(state, dtype=float)
    for t in range(1, max_steps + 1):
        nxt = step_dynamics(s, interaction)
        if np.array_equal(nxt, s):
            return s, t - 1, True
        s = nxt
    return s, max_steps, False


@dataclass(frozen=True)
class RecoveryStats:
    attempts: int
    recovered: int
    mean_steps: float

    @property
    def fraction(self) -> float:
        return self.recovered / self.attempts if self.attempts else float("nan")


def one_bit_recovery(
    patterns,
    interaction: InteractionMatrix,
    rng: np.random.Generator,
    flips_per_pattern: int = 1,
    max_steps: int = 50,
) -> RecoveryStats:
    """Flip one random site of each pattern and count returns to that pattern."""
    H = check_patterns(patterns)
    recovered, attempts, steps_total = 0, 0, 0
    for pattern in H:
        for _ in range(flips_per_pattern):
            s = pattern.copy()
            k = int(rng.integers(len(s)))
            s[k] = -s[k]
            final, steps, _ = run_dynamics(s, interaction, max_steps)
            attempts += 1
            if np.array_equal(final, pattern):
                recovered += 1
                steps_total += steps
    mean_steps = steps_total / recovered if recovered else float("nan")
    return RecoveryStats(attempts, recovered, mean_steps)
