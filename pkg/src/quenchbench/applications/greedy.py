"""Greedy coordinate-wise Hamiltonian parameter estimation by maximizing F_d."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ..estimators import MeasurementRecord, f_d, f_hat_d
from ..spectral import diagonalize, evolve_exact, outcome_distribution, time_averaged_distribution

GRID_POINTS = 21
TOL_CONV = 1e-3
MAX_SWEEPS = 10


class FitDiagnosticsError(RuntimeError):
    pass


@dataclass
class ParameterSpace:
    """Named parameters with search intervals; ``builder`` maps a {name: value} dict to a Hamiltonian."""

    names: Sequence[str]
    lower: Sequence[float]
    upper: Sequence[float]
    builder: Callable[[dict], object]
    grid_points: int = GRID_POINTS

    def __post_init__(self):
        self.names = list(self.names)
        self.lower = np.asarray(self.lower, float)
        self.upper = np.asarray(self.upper, float)
        n = len(self.names)
        if n < 1:
            raise ValueError("parameter space needs at least one parameter")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("one interval per parameter")
        if np.any(self.upper <= self.lower):
            bad = [nm for nm, a, b in zip(self.names, self.lower, self.upper) if b <= a]
            raise ValueError(f"empty search interval for {bad}")
        if self.grid_points < 3:
            raise ValueError("grid needs at least three points")

    @property
    def size(self) -> int:
        return len(self.names)

    def grid(self, j: int) -> np.ndarray:
        return np.linspace(self.lower[j], self.upper[j], self.grid_points)

    def assign(self, theta) -> dict:
        return dict(zip(self.names, (float(v) for v in theta)))


class ForwardModel:
    """p(z; theta) and p_avg(z; theta) for a fixed initial state and quench time, memoized."""

    def __init__(self, space: ParameterSpace, psi0, t: float):
        self.space, self.psi0, self.t = space, np.asarray(psi0, complex), float(t)
        self._cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
        self.evaluations = 0

    def __call__(self, theta) -> tuple[np.ndarray, np.ndarray]:
        key = tuple(np.round(np.asarray(theta, float), 12))
        if key not in self._cache:
            sd = diagonalize(self.space.builder(self.space.assign(theta)))
            p = outcome_distribution(evolve_exact(sd, self.psi0, self.t))
            self._cache[key] = (p, time_averaged_distribution(sd, self.psi0))
            self.evaluations += 1
        return self._cache[key]


@dataclass
class TraceStep:
    sweep: int
    parameter: str
    value: float
    score: float


@dataclass
class GreedyFit:
    theta: np.ndarray
    score: float
    uncertainty: np.ndarray
    curvature: np.ndarray
    stat_err: float
    sweeps: int
    converged: bool
    trace: list[TraceStep] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "score": self.score, "uncertainty": self.uncertainty.tolist()}


def _make_objective(data, model: ForwardModel):
    if isinstance(data, MeasurementRecord):
        def score(theta):
            p, p_avg = model(theta)
            try:
                return f_hat_d(data, p, p_avg).value
            except ValueError:
                return -np.inf
    else:
        q = np.asarray(data, float)

        def score(theta):
            p, p_avg = model(theta)
            try:
                return f_d(q, p, p_avg)
            except ValueError:
                return -np.inf
    return score


def _stat_err(data, model, theta) -> float:
    if not isinstance(data, MeasurementRecord):
        return 0.0
    p, p_avg = model(theta)
    return f_hat_d(data, p, p_avg).stat_err


def _line_search(score, theta, j, space, current, refine=True):
    grid = space.grid(j)
    trial = theta.copy()

    def at(x):
        trial[j] = x
        return score(trial)

    values = np.array([at(x) for x in grid])
    if not np.isfinite(values).any():
        raise FitDiagnosticsError(f"F_d is non-finite on the whole grid of {space.names[j]}")
    i = int(np.nanargmax(np.where(np.isfinite(values), values, -np.inf)))
    best_x, best_v = grid[i], values[i]
    step = grid[1] - grid[0]
    if not refine:
        return (best_x, best_v) if best_v > current else (theta[j], current)
    lo, hi = max(grid[0], best_x - step), min(grid[-1], best_x + step)
    res = minimize_scalar(lambda x: -at(x), bounds=(lo, hi), method="bounded", options={"xatol": step * 1e-3})
    if res.success and -res.fun > best_v:
        best_x, best_v = float(res.x), float(-res.fun)
    if best_v > current:
        return best_x, best_v
    return theta[j], current


def _curvature(score, theta, j, space) -> float:
    h = (space.upper[j] - space.lower[j]) / (space.grid_points - 1) / 4
    up, down = theta.copy(), theta.copy()
    up[j] += h
    down[j] -= h
    return -(score(up) - 2 * score(theta) + score(down)) / h**2


def _fit_once(score, space, theta0, rng, tol_conv, max_sweeps, refine=True):
    theta = np.asarray(theta0, float).copy()
    current = score(theta)
    trace = [TraceStep(0, "", np.nan, current)]
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        start = current
        for j in rng.permutation(space.size):
            x, v = _line_search(score, theta, j, space, current, refine)
            if v > current:
                theta[j], current = x, v
                trace.append(TraceStep(sweep, space.names[j], x, v))
        if current - start < tol_conv:
            converged = True
            break
    return theta, current, trace, sweep, converged


def greedy_fit(data, space: ParameterSpace, psi0, t: float, seed, initial=None,
               tol_conv: float = TOL_CONV, max_sweeps: int = MAX_SWEEPS, refine: bool = True) -> GreedyFit:
    """Coordinate-wise maximization of F_d (or its sample estimate) over the parameters.

    ``data`` is a MeasurementRecord or an exact distribution q.  ``initial``
    may be one starting point or a list of them (multi-start); the default
    starts from the centre of every interval.  Each sweep visits the
    parameters in a fresh random order; a 1D step scans the grid and refines
    around its best point with a bounded Brent search (skipped when
    ``refine`` is false, which keeps every estimate on the grid).
    """
    rng = np.random.default_rng(seed)
    model = ForwardModel(space, psi0, t)
    score = _make_objective(data, model)
    if initial is None:
        starts = [(space.lower + space.upper) / 2]
    else:
        arr = np.asarray(initial, float)
        starts = [arr] if arr.ndim == 1 else list(arr)
    best = None
    for start in starts:
        run = _fit_once(score, space, start, rng, tol_conv, max_sweeps, refine)
        if best is None or run[1] > best[1]:
            best = run
    theta, value, trace, sweeps, converged = best
    err = _stat_err(data, model, theta)
    kappa = np.array([_curvature(score, theta, j, space) for j in range(space.size)])
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(kappa > 0, np.sqrt(2 * err / kappa), np.inf)
    return GreedyFit(theta, value, sigma, kappa, err, sweeps, converged, trace)
