"""Fidelity estimators computed from outcome distributions or finite records.

Distributions are length-D arrays over basis indices: ``q`` is what the
device samples from, ``p`` the ideal distribution at the same time and
``p_avg`` its infinite-time average.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectral import ReferenceMismatchError, rescale


class DegenerateReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementRecord:
    indices: np.ndarray
    source: str = "simulated"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or len(idx) < 1:
            raise ValueError("a record needs at least one sample")
        if idx.min() < 0:
            raise ValueError("negative outcome index in record")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class EstimateReport:
    name: str
    value: float
    stat_err: float
    samples: int
    time: float | None = None
    Z: float | None = None
    f_id_d: float | None = None
    f_xeb_d: float | None = None
    bootstrap_err: float | None = None


def _normalizer(p, p_avg):
    ratio, Z = rescale(p, p_avg)
    if Z <= 0:
        raise DegenerateReferenceError("normalization sum_z p_avg p~^2 vanishes")
    return ratio, Z


def f_d(q, p, p_avg) -> float:
    """2 sum_z q p~ / Z - 1."""
    ratio, Z = _normalizer(p, p_avg)
    return 2.0 * float(np.dot(q, ratio)) / Z - 1.0


def f_d_upper_bound(q, p, p_avg) -> float:
    """Cauchy-Schwarz ceiling 2 sqrt(sum p_avg q~^2 / sum p_avg p~^2) - 1."""
    ratio_p, Z = _normalizer(p, p_avg)
    ratio_q, Zq = rescale(q, p_avg)
    return 2.0 * np.sqrt(Zq / Z) - 1.0


def sample_record(q, M: int, seed) -> MeasurementRecord:
    """M i.i.d. draws from q by inverse CDF over the canonical index order."""
    q = np.asarray(q, float)
    cdf = np.cumsum(q)
    rng = np.random.default_rng(seed)
    u = rng.random(M) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(q) - 1)
    return MeasurementRecord(idx, "simulated", {"seed": seed, "M": M})


def f_hat_d(record: MeasurementRecord, p, p_avg, time: float | None = None,
            bootstrap: int = 0, seed=None) -> EstimateReport:
    """Sample estimate (2/M) sum_i p~(z_i) / Z - 1 with its standard error."""
    p_avg = np.asarray(p_avg, float)
    idx = record.indices
    if idx.max() >= len(p_avg):
        raise ValueError(f"record index {idx.max()} outside basis of size {len(p_avg)}")
    if np.any(p_avg[idx] <= 0):
        raise ReferenceMismatchError("record contains outcomes with zero time-averaged probability")
    ratio, Z = _normalizer(p, p_avg)
    stat = 2.0 * ratio[idx] / Z - 1.0
    M = len(stat)
    err = float(np.std(stat, ddof=1) / np.sqrt(M)) if M > 1 else float("inf")
    boot = None
    if bootstrap:
        rng = np.random.default_rng(seed)
        means = [stat[rng.integers(0, M, M)].mean() for _ in range(bootstrap)]
        boot = float(np.std(means, ddof=1))
    xeb_d = float(ratio[idx].mean()) - 1.0
    return EstimateReport("F_d", float(stat.mean()), err, M, time, Z, Z - 1.0, xeb_d, boot)


def f_xeb(q, p, D: int | None = None) -> float:
    """Linear cross-entropy D sum_z p q - 1."""
    D = len(p) if D is None else D
    return D * float(np.dot(p, q)) - 1.0


def f_c(q, p) -> float:
    """2 sum p q / sum p^2 - 1."""
    return 2.0 * float(np.dot(p, q)) / float(np.dot(p, p)) - 1.0


def f_id_d(p, p_avg) -> float:
    return _normalizer(p, p_avg)[1] - 1.0


def f_xeb_d(q, p, p_avg) -> float:
    ratio, _ = rescale(p, p_avg)
    return float(np.dot(q, ratio)) - 1.0


def f_e(q, p, p_avg) -> float:
    """F_XEB,d / F_id,d."""
    denom = f_id_d(p, p_avg)
    if abs(denom) < 1e-12:
        raise DegenerateReferenceError("F_id,d vanishes; the ratio estimator is undefined")
    return f_xeb_d(q, p, p_avg) / denom


def f_d_ph(q, p, p_avg) -> float:
    """Particle-hole corrected 3/2 sum q p~ / sum p p~ - 1/2."""
    ratio, _ = rescale(p, p_avg)
    return 1.5 * float(np.dot(q, ratio)) / float(np.dot(p, ratio)) - 0.5


def f_e_moving(q_series, p_series, times, window: float) -> np.ndarray:
    """Ratio estimator with p_avg replaced by a boxcar average of p over ``window``.

    The boxcar shrinks at the ends of the series.
    """
    q_series = np.asarray(q_series, float)
    p_series = np.asarray(p_series, float)
    times = np.asarray(times, float)
    n = len(times)
    if n < 3:
        raise ValueError("need at least three time points")
    dt = (times[-1] - times[0]) / (n - 1)
    half = int(np.floor(window / 2 / dt + 1e-9))
    if 2 * half + 1 < 3:
        raise ValueError(f"window {window} spans fewer than three grid points (dt={dt:.3g})")
    if 2 * half + 1 > n:
        warnings.warn("moving-average window exceeds the series; edges use truncated windows")
    csum = np.vstack([np.zeros(p_series.shape[1]), np.cumsum(p_series, axis=0)])
    out = np.empty(n)
    for k in range(n):
        lo, hi = max(0, k - half), min(n, k + half + 1)
        ref = (csum[hi] - csum[lo]) / (hi - lo)
        ratio, _ = rescale(p_series[k], ref)
        num = float(np.dot(q_series[k], ratio)) - 1.0
        den = float(np.dot(p_series[k], ratio)) - 1.0
        out[k] = num / den if abs(den) >= 1e-12 else np.nan
    if np.isnan(out).any():
        warnings.warn(f"{int(np.isnan(out).sum())} point(s) where p matches its moving average; F'_e is 0/0 there")
    return out


def record_from_labels(basis, labels) -> MeasurementRecord:
    """Resolve configuration strings such as "1,0,2,1"; unknown ones are an error."""
    from .lattice import parse_configuration

    idx = []
    for line_no, label in enumerate(labels, 1):
        i = basis.index_of(parse_configuration(label))
        if i is None:
            raise ValueError(f"sample {line_no}: configuration {label!r} is not in the basis")
        idx.append(i)
    return MeasurementRecord(np.array(idx), "ingested", {"M": len(idx)})
