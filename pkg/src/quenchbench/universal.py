"""Numerical checks of universal speckle statistics and the performance formulas.

Everything here works on a dense spectrum (``SpectralData``).  Infinite-time
averages are either evaluated spectrally or replaced by a long uniform-grid
quadrature whose error is estimated from block means.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import comb, factorial, prod

import numpy as np

from .estimators import f_d
from .spectral import (SpectralData, distributions_over_time, evolve_exact, projected_amplitudes, rescale,
                       time_averaged_distribution)

DEFAULT_WINDOW = 500.0
DEFAULT_STEP = 0.25
MOMENT_PREFACTORS = {1: 0.0, 2: 1.0, 3: 3.0}
BAND_INFLATION = 3.0
MULTISET_LIMIT = 5_000_000


def late_time(n_sites: int) -> float:
    """Default 'sufficiently late' observation time, linear in system size."""
    return float(max(2 * n_sites, 20))


@dataclass(frozen=True)
class MomentReport:
    k: int
    kind: str
    empirical: float
    predicted: float
    bound: float
    quadrature_error: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("moment order must be >= 1")
        if self.empirical < 0:
            raise ValueError("moments of non-negative variables cannot be negative")

    @property
    def within_bound(self) -> bool:
        return abs(self.empirical - self.predicted) <= self.bound + self.quadrature_error


@dataclass(frozen=True)
class EffectiveDimension:
    d_beta: float
    per_outcome: np.ndarray
    purity: float
    crude: float
    dimension: int

    def __post_init__(self):
        chain = [1.0 / self.dimension, self.crude, self.purity, 1.0 / self.d_beta, 1.0]
        slack = 1e-10
        for lo, hi in zip(chain, chain[1:]):
            if lo > hi * (1 + slack) + slack / self.dimension:
                raise AssertionError(f"effective-dimension inequality chain violated: {chain}")


def _outcome_weights(sd: SpectralData, psi0, p_avg=None):
    A = projected_amplitudes(sd, psi0)
    w = np.abs(A) ** 2
    if p_avg is None:
        p_avg = w.sum(axis=1)
    return A, w, np.asarray(p_avg, float)


def effective_dimension(sd: SpectralData, psi0, p_avg=None) -> EffectiveDimension:
    """Global and per-outcome effective dimension of the quench, with degeneracy groups."""
    _, w, p_avg = _outcome_weights(sd, psi0, p_avg)
    support = p_avg > 0
    collision = (w**2).sum(axis=1)
    per_inv = np.full(len(p_avg), np.nan)
    per_inv[support] = collision[support] / p_avg[support] ** 2
    inv = float(np.sum(collision[support] / p_avg[support]))
    group_w = w.sum(axis=0)
    return EffectiveDimension(
        d_beta=1.0 / inv,
        per_outcome=1.0 / per_inv,
        purity=float(np.sum(group_w**2)),
        crude=float(np.sum(p_avg**2)),
        dimension=len(p_avg),
    )


def pt_moment(k: int, D: int) -> float:
    """k! D^k / (D (D+1) ... (D+k-1)): k-th moment of D*p for a Haar-random state."""
    if k < 1 or D < 1:
        raise ValueError("need k >= 1 and D >= 1")
    return factorial(k) * prod(D / (D + i) for i in range(k))


def real_pt_moment(k: int) -> float:
    """(2k-1)!!, the moments of the real (orthogonal-ensemble) distribution."""
    if k < 1:
        raise ValueError("need k >= 1")
    return float(prod(range(2 * k - 1, 0, -2)))


def moment_band(k: int, d_beta: float) -> float:
    """Absolute tolerance for the k-th outcome-ensemble moment at effective dimension d_beta."""
    c = MOMENT_PREFACTORS.get(k, float(factorial(k)))
    return BAND_INFLATION * c / np.sqrt(d_beta)


def empirical_outcome_moments(ratio, p_avg, k_max: int, d_beta: float | None = None) -> list[MomentReport]:
    """P^(k) = sum_z p_avg p~^k for k = 1..k_max."""
    ratio = np.asarray(ratio, float)
    p_avg = np.asarray(p_avg, float)
    out = []
    for k in range(1, k_max + 1):
        value = float(np.sum(p_avg * ratio**k))
        bound = moment_band(k, d_beta) if d_beta else np.inf
        out.append(MomentReport(k, "outcomes-fixed-t", value, float(factorial(k)), bound))
    return out


def weighted_ks_distance(ratio, p_avg) -> float:
    """Kolmogorov-Smirnov distance between the p_avg-weighted law of p~ and Exp(1)."""
    ratio = np.asarray(ratio, float)
    p_avg = np.asarray(p_avg, float)
    order = np.argsort(ratio)
    x = ratio[order]
    w = p_avg[order] / p_avg.sum()
    upper = np.cumsum(w)
    lower = upper - w
    ref = 1.0 - np.exp(-x)
    return float(max(np.max(np.abs(upper - ref)), np.max(np.abs(lower - ref))))


def histogram_ks_distance(ratio, p_avg, bins: int = 40, upper: float = 8.0) -> float:
    """KS distance of the binned law: weighted CDF of p~ against 1 - exp(-x) at the bin edges only."""
    ratio = np.asarray(ratio, float)
    w = np.asarray(p_avg, float) / np.sum(p_avg)
    edges = np.linspace(0.0, upper, bins + 1)
    order = np.argsort(ratio)
    cdf = np.concatenate([[0.0], np.cumsum(w[order])])
    at_edges = cdf[np.searchsorted(ratio[order], edges, side="right")]
    return float(np.max(np.abs(at_edges - (1.0 - np.exp(-edges)))))


def pt_histogram(ratio, p_avg, bins=40, upper: float = 8.0):
    """Weighted density of p~ on [0, upper] with the exp(-x) reference at bin centres."""
    density, edges = np.histogram(ratio, bins=bins, range=(0.0, upper), weights=p_avg, density=True)
    centres = 0.5 * (edges[1:] + edges[:-1])
    return centres, density, np.exp(-centres)


def _uniform_grid(T: float, dt: float) -> np.ndarray:
    if T <= 0 or dt <= 0:
        raise ValueError("window and step must be positive")
    return np.linspace(0.0, T, int(round(T / dt)) + 1)


def _trapezoid_mean(values: np.ndarray) -> float:
    n = len(values) - 1
    if n < 1:
        return float(values[0])
    return float((values.sum() - 0.5 * (values[0] + values[-1])) / n)


def _block_error(values: np.ndarray, blocks: int = 8) -> float:
    parts = np.array_split(values, blocks)
    means = np.array([p.mean() for p in parts])
    return float(means.std(ddof=1) / np.sqrt(blocks))


def outcome_series(sd: SpectralData, psi0, z: int, times, chunk: int = 2048) -> np.ndarray:
    """p(z, t) on a time grid from the group-projected amplitudes of one outcome."""
    A = projected_amplitudes(sd, psi0)[z]
    E = sd.group_energies
    times = np.asarray(times, float)
    out = np.empty(len(times))
    for s in range(0, len(times), chunk):
        amp = np.exp(-1j * np.outer(times[s:s + chunk], E)) @ A
        out[s:s + chunk] = np.abs(amp) ** 2
    return out


def temporal_moments(sd: SpectralData, psi0, z: int, k_max: int, T: float = DEFAULT_WINDOW,
                     dt: float = DEFAULT_STEP) -> list[MomentReport]:
    """E_t[p~(z,t)^k] by quadrature, against k!(1 - k(k-1)/2 * D_beta(z)^-1 / 2)."""
    _, w, p_avg = _outcome_weights(sd, psi0)
    if p_avg[z] <= 0:
        raise ValueError(f"outcome {z} has zero time-averaged probability; p~ is undefined")
    inv_dz = float((w[z] ** 2).sum() / p_avg[z] ** 2)
    series = outcome_series(sd, psi0, z, _uniform_grid(T, dt)) / p_avg[z]
    out = []
    for k in range(1, k_max + 1):
        vals = series**k
        predicted = factorial(k) * (1 - k * (k - 1) / 2 * inv_dz / 2)
        out.append(MomentReport(k, "temporal-fixed-z", _trapezoid_mean(vals), predicted,
                                BAND_INFLATION * inv_dz, _block_error(vals)))
    return out


def _multisets(n: int, k: int) -> np.ndarray:
    """All non-decreasing length-k index rows over range(n)."""
    rows = np.arange(n, dtype=np.int32)[:, None]
    for _ in range(k - 1):
        last = rows[:, -1]
        counts = n - last
        rep = np.repeat(rows, counts, axis=0)
        starts = np.repeat(last, counts)
        offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        rows = np.hstack([rep, (starts + offsets)[:, None].astype(np.int32)])
    return rows


def twirling_sum(weights, k: int) -> float:
    """sum over multisets M of k levels of |perm(M)|^2 prod_i q(E_i).

    ``weights`` are the per-level probabilities q_z(E), summing to one.
    """
    q = np.asarray(weights, float)
    n = len(q)
    if comb(n + k - 1, k) > MULTISET_LIMIT:
        raise ValueError(
            f"{comb(n + k - 1, k)} multisets for k={k} over {n} levels; use temporal_moments instead"
        )
    rows = _multisets(n, k)
    term = np.prod(q[rows], axis=1)
    # multiplicities of equal neighbours in each sorted row
    arrangements = np.full(len(rows), float(factorial(k)))
    run = np.ones(len(rows))
    for j in range(1, k):
        same = rows[:, j] == rows[:, j - 1]
        run = np.where(same, run + 1, 1.0)
        arrangements /= np.where(same, run, 1.0)
    return float(np.sum(arrangements**2 * term))


@dataclass(frozen=True)
class TwirlingComparison:
    k: int
    direct: float
    quadrature: float
    quadrature_error: float

    @property
    def gap(self) -> float:
        return abs(self.direct - self.quadrature)


def twirling_oracle(sd: SpectralData, psi0, z: int, k: int, T: float = DEFAULT_WINDOW,
                    dt: float = DEFAULT_STEP) -> TwirlingComparison:
    """Direct multiset sum versus long-time quadrature of p~(z,t)^k."""
    _, w, p_avg = _outcome_weights(sd, psi0)
    if p_avg[z] <= 0:
        raise ValueError(f"outcome {z} has zero time-averaged probability")
    direct = twirling_sum(w[z] / p_avg[z], k)
    vals = (outcome_series(sd, psi0, z, _uniform_grid(T, dt)) / p_avg[z]) ** k
    return TwirlingComparison(k, direct, _trapezoid_mean(vals), _block_error(vals))


@dataclass(frozen=True)
class ResonanceReport:
    n_levels: int
    n_groups: int
    tol: float
    resonances: int
    examples: list = field(default_factory=list)
    mirror_pairs: int = 0

    @property
    def passes(self) -> bool:
        return self.resonances == 0


def no_resonance_check(energies, tol: float, relevant=None, max_examples: int = 10) -> ResonanceReport:
    """Second-order no-resonance test on degeneracy-collapsed levels.

    Pairs (a <= b) of distinct level groups whose sums E_a + E_b agree within
    ``tol`` are resonances.  ``relevant`` optionally restricts the test to a
    boolean mask over groups (e.g. those the initial state populates).
    """
    E = np.sort(np.asarray(energies, float))
    if len(E) > 10_000:
        raise ValueError("pair-sum enumeration is limited to 10^4 levels")
    new = np.nonzero(np.diff(E) > tol)[0] + 1
    starts = np.concatenate([[0], new]).astype(np.int64)
    levels = np.add.reduceat(E, starts) / np.diff(np.append(starts, len(E)))
    mirror = int(np.sum(np.abs(levels[:, None] + levels[None, :])[np.triu_indices(len(levels))] <= tol))
    if relevant is not None:
        relevant = np.asarray(relevant, bool)
        if relevant.shape != levels.shape:
            raise ValueError(f"relevant mask has {relevant.shape} entries for {len(levels)} groups")
        chosen = levels[relevant]
    else:
        chosen = levels
    a, b = np.triu_indices(len(chosen))
    sums = chosen[a] + chosen[b]
    order = np.argsort(sums, kind="stable")
    hits = np.nonzero(np.diff(sums[order]) <= tol)[0]
    examples = []
    for h in hits[:max_examples]:
        i, j = order[h], order[h + 1]
        examples.append(((int(a[i]), int(b[i])), (int(a[j]), int(b[j])), float(sums[i]), float(sums[j])))
    return ResonanceReport(len(E), len(levels), tol, int(len(hits)), examples, mirror)


@dataclass
class AutocorrelationReport:
    times: np.ndarray
    curves: np.ndarray
    a_inf: np.ndarray
    t_star: np.ndarray
    converged: np.ndarray
    degenerate: np.ndarray

    @property
    def mean_t_star(self) -> float:
        ok = ~self.degenerate
        return float(np.mean(self.t_star[ok])) if ok.any() else float("nan")


def _spectral_a_inf(sd: SpectralData, psi0, op) -> float:
    """Long-time value from the second twirling identity (ratio of time averages)."""
    V = sd.vectors
    c = V.conj().T @ psi0
    d = V.conj().T @ (op @ psi0)
    Xe = V.conj().T @ (op @ V)
    M = np.add.reduceat(np.add.reduceat(c.conj()[:, None] * Xe * d[None, :], sd.group_starts, axis=0),
                        sd.group_starts, axis=1)
    diag = np.diag(M)
    num = float(np.sum(np.abs(M) ** 2) - np.sum(np.abs(diag) ** 2) + abs(diag.sum()) ** 2)
    X2e = V.conj().T @ (op @ (op @ V))
    blocks = np.add.reduceat(np.add.reduceat(c.conj()[:, None] * X2e * c[None, :], sd.group_starts, axis=0),
                             sd.group_starts, axis=1)
    norm_t = float(np.real(np.trace(blocks)))
    norm_0 = float(np.real(np.vdot(psi0, op @ (op @ psi0))))
    return num / (norm_t * norm_0)


def autocorrelation_curve(sd: SpectralData, psi0, op, times) -> np.ndarray:
    """A(t) = |<psi(t)| X |e^{-iHt} X psi0>|^2 / (<psi(t)|X^2|psi(t)> <psi0|X^2|psi0>)."""
    from .spectral import evolve_times

    psi0 = np.asarray(psi0, complex)
    kicked = op @ psi0
    norm_0 = float(np.real(np.vdot(kicked, kicked)))
    if norm_0 <= 0:
        raise ValueError("error operator annihilates the initial state")
    out = np.empty(len(times))
    for s in range(0, len(times), 256):
        ts = times[s:s + 256]
        plain = evolve_times(sd, psi0, ts)
        later = evolve_times(sd, kicked, ts)
        x_plain = (op @ plain.T).T
        num = np.abs(np.sum(x_plain.conj() * later, axis=1)) ** 2
        den = np.sum(np.abs(x_plain) ** 2, axis=1) * norm_0
        out[s:s + 256] = num / den
    return out


def autocorrelation_time(sd: SpectralData, psi0, operators, times, spectral: bool | None = None,
                         tail_fraction: float = 0.2) -> AutocorrelationReport:
    """Error-operator autocorrelation time per operator.

    In a finite system A(t) keeps fluctuating around A(inf), so the integral
    of |A - A(inf)| grows without bound on long grids.  It is cut at the first
    time the curve enters the band A(inf) +- 2 sigma, sigma being the spread
    of A over the tail window.  A curve that only reaches the band inside the
    tail window is flagged as not converged.
    """
    times = np.asarray(times, float)
    ops = [op[1] if isinstance(op, tuple) else op for op in operators]
    if spectral is None:
        spectral = sd.dimension <= 4000
    curves, a_inf, t_star, conv, degen = [], [], [], [], []
    tail = times >= times[0] + (1 - tail_fraction) * (times[-1] - times[0])
    tail_start = int(np.argmax(tail))
    for op in ops:
        A = autocorrelation_curve(sd, psi0, op, times)
        ainf = _spectral_a_inf(sd, psi0, op) if spectral else float(A[tail].mean())
        dev = np.abs(A - ainf)
        inside = np.nonzero(dev <= 2 * A[tail].std() + 1e-12)[0]
        cut = int(inside[0]) if len(inside) else len(times) - 1
        flat = 1.0 - ainf < 1e-10
        curves.append(A)
        a_inf.append(ainf)
        degen.append(flat)
        t_star.append(np.nan if flat else float(np.trapezoid(dev[:cut + 1], times[:cut + 1])) / (1.0 - ainf))
        conv.append(flat or cut < tail_start)
    report = AutocorrelationReport(times, np.array(curves), np.array(a_inf), np.array(t_star),
                                   np.array(conv), np.array(degen))
    if not report.converged.all():
        warnings.warn("autocorrelation tail has not converged on this grid; extend the time window")
    return report


@dataclass(frozen=True)
class PerformancePrediction:
    delta_sys: float
    delta_sys_simple: float
    delta_temp_open: float
    delta_temp_coherent: float
    sample_complexity: float


def performance_predictions(F: float, d_beta: float, var_f_id_d: float) -> PerformancePrediction:
    """Closed-form accuracy predictions for F_d at fidelity F."""
    miss = 1.0 - F
    std = np.sqrt(var_f_id_d)
    return PerformancePrediction(
        delta_sys=miss * (0.5 / d_beta + var_f_id_d / 8.0),
        delta_sys_simple=miss / d_beta,
        delta_temp_open=0.5 * miss * std,
        delta_temp_coherent=np.sqrt(1.25) * miss * std,
        sample_complexity=1.0 + 2.0 * F - F**2,
    )


def single_error_response(sd: SpectralData, psi0, operators, starts, tau, p_avg=None) -> tuple[np.ndarray, float]:
    """F_d(t0 + tau) after one error V at t0, averaged over ``starts`` and ``operators``.

    Also returns F_beta, the mean fidelity |<psi(t0)|V psi(t0)>|^2 / |V psi(t0)|^2
    right after the error.
    """
    tau = np.asarray(tau, float)
    p_avg = time_averaged_distribution(sd, psi0) if p_avg is None else p_avg
    response = np.zeros(len(tau))
    f_beta, n = 0.0, 0
    for t0 in starts:
        base = evolve_exact(sd, psi0, t0)
        P = distributions_over_time(sd, psi0, t0 + tau)
        for V in operators:
            kicked = V @ base
            norm = np.linalg.norm(kicked)
            if norm < 1e-12:
                continue
            kicked /= norm
            f_beta += abs(np.vdot(base, kicked)) ** 2
            Q = distributions_over_time(sd, kicked, tau)
            response += [f_d(q, p, p_avg) for q, p in zip(Q, P)]
            n += 1
    if n == 0:
        raise ValueError("every error operator annihilates the state")
    return response / n, f_beta / n


def delay_time(tau, response, f_beta: float) -> float:
    """Area between the single-error response curve and its plateau F_beta."""
    return float(np.trapezoid(np.asarray(response, float) - f_beta, np.asarray(tau, float)))


def cost_function(times, f_d_curve, f_curve) -> float:
    """Time-integrated |F_d - F|."""
    return float(np.trapezoid(np.abs(np.asarray(f_d_curve) - np.asarray(f_curve)), np.asarray(times, float)))


def f_id_d_series(sd: SpectralData, psi0, times, p_avg=None) -> np.ndarray:
    """F_id,d(t) for the ideal quench on a time grid."""
    p_avg = time_averaged_distribution(sd, psi0) if p_avg is None else p_avg
    P = distributions_over_time(sd, psi0, times)
    return np.array([rescale(p, p_avg)[1] - 1.0 for p in P])
