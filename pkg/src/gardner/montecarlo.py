"""
Monte Carlo phase-transition harness.

Each trial owns one random stream, seeded by a splitmix64 mix of
(master_seed, point_index, trial_index). Rows are drawn from that stream in
order, so any m-row matrix is a prefix of every larger one drawn with the same
seed. Sweeps exploit this coupling: a trial's decisions along an increasing
alpha grid come from nested prefixes of one matrix, which makes them monotone
exactly rather than statistically.

Results are gathered per trial and summed, so any worker count (including a
plain loop) produces the same output.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .margin import Decision, IterationLimit, decide, max_margin, sphere_heuristic

MASK64 = (1 << 64) - 1
WILSON_Z = 1.959963984540054
CSV_HEADER = ["axis_value", "p_feasible", "n_trials", "n_undecided", "wilson_halfwidth"]
WORKERS_ENV = "GARDNER_WORKERS"


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(master_seed: int, point_index: int, trial_index: int) -> int:
    """splitmix64(splitmix64(splitmix64(master) ^ point) ^ trial), all mod 2^64."""
    h = splitmix64(master_seed & MASK64)
    h = splitmix64(h ^ (point_index & MASK64))
    return splitmix64(h ^ (trial_index & MASK64))


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class EnsembleKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI_SYMMETRIC = "bernoulli"
    BERNOULLI_ASYMMETRIC = "asymmetric"


@dataclass(frozen=True)
class Ensemble:
    kind: EnsembleKind = EnsembleKind.GAUSSIAN
    m_a: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EnsembleKind(self.kind))
        if self.kind is EnsembleKind.BERNOULLI_ASYMMETRIC:
            if not 0.0 <= self.m_a < 1.0:
                raise ValueError(f"m_a must satisfy 0 <= m_a < 1, got {self.m_a}")
        elif self.m_a != 0.0:
            raise ValueError("m_a only applies to the asymmetric ensemble")

    @classmethod
    def gaussian(cls):
        return cls(EnsembleKind.GAUSSIAN)

    @classmethod
    def bernoulli(cls):
        return cls(EnsembleKind.BERNOULLI_SYMMETRIC)

    @classmethod
    def asymmetric(cls, m_a: float):
        return cls(EnsembleKind.BERNOULLI_ASYMMETRIC, m_a)


def rows_for(alpha: float, n: int) -> int:
    """m = round(alpha * n) with ties rounded up."""
    return int(math.floor(alpha * n + 0.5))


@dataclass(frozen=True)
class TrialConfig:
    n: int
    alpha: float
    kappa: float
    ensemble: Ensemble = field(default_factory=Ensemble)
    seed: int = 0
    solver_tol: float = 1e-6

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.m < 1:
            raise ValueError("round(alpha * n) must be >= 1")

    @property
    def m(self) -> int:
        return rows_for(self.alpha, self.n)


class RowStream:
    """Rows of one trial's pattern matrix, drawn lazily and cached."""

    def __init__(self, n: int, ensemble: Ensemble, seed: int):
        self.n = n
        self.ensemble = ensemble
        self._rng = np.random.default_rng(seed & MASK64)
        self._rows = np.empty((0, n))

    def _draw(self, k: int) -> np.ndarray:
        kind = self.ensemble.kind
        if kind is EnsembleKind.GAUSSIAN:
            return self._rng.standard_normal((k, self.n))
        u = self._rng.random((k, self.n))
        p_plus = 0.5 * (1.0 + self.ensemble.m_a)
        return np.where(u < p_plus, 1.0, -1.0)

    def take(self, m: int) -> np.ndarray:
        have = self._rows.shape[0]
        if m > have:
            self._rows = np.vstack([self._rows, self._draw(m - have)])
        return self._rows[:m]


def sample_matrix(config: TrialConfig) -> np.ndarray:
    """The raw m x n pattern matrix for a trial (deterministic in the seed)."""
    return RowStream(config.n, config.ensemble, config.seed).take(config.m).copy()


def constraint_rows(H: np.ndarray, ensemble: Ensemble) -> np.ndarray:
    """Rows whose margin decides storability.

    For biased patterns the raw rows all lean toward the all-ones direction,
    so the relevant constraints are those of a single site: rows
    H_i1 * H_i,2:n, exactly as a stored pattern must satisfy at site 1. For
    the symmetric ensembles the raw rows already have that law.
    """
    if ensemble.kind is EnsembleKind.BERNOULLI_ASYMMETRIC:
        return H[:, :1] * H[:, 1:]
    return H


def _decide(rows: np.ndarray, kappa: float, tol: float, seed: int) -> Decision:
    if kappa < 0:
        x = sphere_heuristic(rows, kappa, seed=seed)
        return Decision.FEASIBLE if x is not None else Decision.UNDECIDED
    try:
        cert = max_margin(rows, tol=tol)
    except IterationLimit as exc:
        cert = exc.certificate
    return decide(cert, kappa, tol)


def run_trial(config: TrialConfig) -> Decision:
    H = sample_matrix(config)
    rows = constraint_rows(H, config.ensemble)
    return _decide(rows, config.kappa, config.solver_tol, splitmix64(config.seed))


# ---------------------------------------------------------------------------
# sweeps


class Axis(str, enum.Enum):
    ALPHA = "alpha"
    KAPPA = "kappa"


@dataclass
class SweepResult:
    axis: Axis
    grid: list[float]
    p_feasible: list[float]
    n_trials: list[int]
    n_undecided: list[int]
    wilson_halfwidth: list[float]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in zip(self.grid, self.p_feasible, self.n_trials, self.n_undecided, self.wilson_halfwidth):
            writer.writerow([f"{row[0]:.17g}", f"{row[1]:.17g}", row[2], row[3], f"{row[4]:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, axis: Axis = Axis.ALPHA) -> "SweepResult":
        reader = csv.DictReader(io.StringIO(text))
        cols = {k: [] for k in CSV_HEADER}
        for rec in reader:
            for k in CSV_HEADER:
                cols[k].append(rec[k])
        return cls(
            axis=axis,
            grid=[float(v) for v in cols["axis_value"]],
            p_feasible=[float(v) for v in cols["p_feasible"]],
            n_trials=[int(v) for v in cols["n_trials"]],
            n_undecided=[int(v) for v in cols["n_undecided"]],
            wilson_halfwidth=[float(v) for v in cols["wilson_halfwidth"]],
        )

    def crossing(self, level: float = 0.5) -> float:
        """Axis value where p_feasible first drops through ``level`` (linear interpolation)."""
        pts = [(g, p) for g, p in zip(self.grid, self.p_feasible) if not math.isnan(p)]
        for (g0, p0), (g1, p1) in zip(pts, pts[1:]):
            if p0 >= level > p1:
                return g0 + (p0 - level) * (g1 - g0) / (p0 - p1)
        return math.nan

    def p_at(self, value: float) -> float:
        return self.p_feasible[self.grid.index(value)]


def wilson_halfwidth(successes: int, total: int, z: float = WILSON_Z) -> float:
    if total == 0:
        return math.nan
    p = successes / total
    denom = 1.0 + z * z / total
    return z * math.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total)) / denom


def aggregate(axis: Axis, grid: Sequence[float], paths: Iterable[Sequence[Decision]]) -> SweepResult:
    feasible = [0] * len(grid)
    undecided = [0] * len(grid)
    trials = [0] * len(grid)
    for path in paths:
        for i, d in enumerate(path):
            trials[i] += 1
            if d is Decision.FEASIBLE:
                feasible[i] += 1
            elif d is Decision.UNDECIDED:
                undecided[i] += 1
    p, half = [], []
    for f, u, t in zip(feasible, undecided, trials):
        decided = t - u
        p.append(f / decided if decided else math.nan)
        half.append(wilson_halfwidth(f, decided) if decided else math.nan)
    return SweepResult(axis, [float(g) for g in grid], p, trials, undecided, half)


@dataclass(frozen=True)
class _PathJob:
    n: int
    ensemble: Ensemble
    seed: int
    solver_tol: float
    alphas: tuple[float, ...]
    kappas: tuple[float, ...]


def _coupled_path(job: _PathJob) -> list[Decision]:
    """Decisions for one trial along a grid, all from prefixes of one stream."""
    stream = RowStream(job.n, job.ensemble, job.seed)
    cache: dict[tuple[int, float], Decision] = {}
    out = []
    for alpha, kappa in zip(job.alphas, job.kappas):
        m = rows_for(alpha, job.n)
        key = (m, kappa)
        if key not in cache:
            rows = constraint_rows(stream.take(m), job.ensemble)
            cache[key] = _decide(rows, kappa, job.solver_tol, splitmix64(job.seed))
        out.append(cache[key])
    return out


def _run_jobs(func, jobs: list, workers: int | None) -> Iterator:
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield func(job)
        return
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(func, jobs, chunksize=chunk)


def iter_alpha_paths(
    n: int,
    kappa: float,
    ensemble: Ensemble,
    alpha_grid: Sequence[float],
    trials: int,
    master_seed: int,
    solver_tol: float = 1e-6,
    workers: int | None = 1,
) -> Iterator[list[Decision]]:
    grid = tuple(float(a) for a in alpha_grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("alpha_grid must be strictly increasing")
    if grid and rows_for(grid[0], n) < 1:
        raise ValueError("smallest alpha gives zero rows")
    jobs = [
        _PathJob(n, ensemble, mix_seed(master_seed, 0, t), solver_tol, grid, (float(kappa),) * len(grid))
        for t in range(trials)
    ]
    return _run_jobs(_coupled_path, jobs, workers)


def sweep_alpha(
    n: int,
    kappa: float,
    ensemble: Ensemble,
    alpha_grid: Sequence[float],
    trials_per_point: int,
    master_seed: int,
    solver_tol: float = 1e-6,
    workers: int | None = 1,
) -> SweepResult:
    """Empirical feasibility probability along an increasing alpha grid."""
    if trials_per_point <= 0:
        return aggregate(Axis.ALPHA, [], [])
    paths = iter_alpha_paths(n, kappa, ensemble, alpha_grid, trials_per_point, master_seed, solver_tol, workers)
    return aggregate(Axis.ALPHA, list(alpha_grid), paths)


def sweep_kappa(
    n: int,
    alpha: float,
    ensemble: Ensemble,
    kappa_grid: Sequence[float],
    trials_per_point: int,
    master_seed: int,
    solver_tol: float = 1e-6,
    workers: int | None = 1,
) -> SweepResult:
    """Feasibility probability along a kappa grid at fixed alpha (one matrix per trial)."""
    if trials_per_point <= 0:
        return aggregate(Axis.KAPPA, [], [])
    grid = tuple(float(k) for k in kappa_grid)
    jobs = [
        _PathJob(n, ensemble, mix_seed(master_seed, 0, t), solver_tol, (float(alpha),) * len(grid), grid)
        for t in range(trials_per_point)
    ]
    return aggregate(Axis.KAPPA, list(grid), _run_jobs(_coupled_path, jobs, workers))


# ---------------------------------------------------------------------------
# empirical capacity


@dataclass(frozen=True)
class AlphaEstimate:
    alpha_hat: float
    ci: float
    stderr: float
    samples: tuple[float, ...]
    n_undecided: int


@dataclass(frozen=True)
class _CapacityJob:
    n: int
    kappa: float
    ensemble: Ensemble
    seed: int
    solver_tol: float
    max_rows: int


def _largest_feasible_m(job: _CapacityJob) -> tuple[int, int]:
    """Largest m whose m-row prefix is feasible; also the number of Undecided probes.

    Doubling finds a bracket, then bisection; Undecided probes are treated as
    not feasible so the estimate errs low.
    """
    stream = RowStream(job.n, job.ensemble, job.seed)
    undecided = 0

    def feasible(m):
        nonlocal undecided
        rows = constraint_rows(stream.take(m), job.ensemble)
        d = _decide(rows, job.kappa, job.solver_tol, splitmix64(job.seed))
        if d is Decision.UNDECIDED:
            undecided += 1
        return d is Decision.FEASIBLE

    if not feasible(1):
        return 0, undecided
    good, bad = 1, 2
    while bad <= job.max_rows and feasible(bad):
        good, bad = bad, 2 * bad
    if bad > job.max_rows:
        if bad // 2 >= job.max_rows or feasible(job.max_rows):
            return job.max_rows, undecided
        bad = job.max_rows
    while bad - good > 1:
        mid = (good + bad) // 2
        if feasible(mid):
            good = mid
        else:
            bad = mid
    return good, undecided


def estimate_alpha_hat(
    n: int,
    kappa: float,
    ensemble: Ensemble,
    trials: int,
    master_seed: int,
    solver_tol: float = 1e-6,
    workers: int | None = 1,
    max_alpha: float = 50.0,
) -> AlphaEstimate:
    """Mean of m*/n over trials, m* the largest storable prefix; ci = 1.96 stderr."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    max_rows = max(2, int(max_alpha * n))
    jobs = [
        _CapacityJob(n, float(kappa), ensemble, mix_seed(master_seed, 0, t), solver_tol, max_rows)
        for t in range(trials)
    ]
    results = list(_run_jobs(_largest_feasible_m, jobs, workers))
    samples = tuple(m / n for m, _ in results)
    mean = math.fsum(samples) / trials
    if trials > 1:
        var = math.fsum((s - mean) ** 2 for s in samples) / (trials - 1)
        stderr = math.sqrt(var / trials)
    else:
        stderr = 0.0
    return AlphaEstimate(mean, 1.96 * stderr, stderr, samples, sum(u for _, u in results))
