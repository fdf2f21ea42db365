"""Exact diagonalization, time propagation and the ideal outcome distributions.

States are plain complex numpy vectors in the configuration basis.
Energies within ``tol_factor * (E_max - E_min)`` of their neighbour are
chained into one degeneracy group; the infinite-time average projects the
initial state onto each group as a whole.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

DENSE_LIMIT = 20_000
DEGENERACY_TOL = 1e-9
CACHE_MAGIC = b"QBSPEC"
CACHE_VERSION = 1


class DenseLimitError(RuntimeError):
    pass


class KrylovConvergenceError(RuntimeError):
    pass


class ReferenceMismatchError(ValueError):
    """Outcome probability where the time-averaged reference has no weight."""


@dataclass(frozen=True)
class SpectralData:
    energies: np.ndarray
    vectors: np.ndarray
    group_starts: np.ndarray
    tol_factor: float = DEGENERACY_TOL

    @property
    def dimension(self) -> int:
        return len(self.energies)

    @property
    def n_groups(self) -> int:
        return len(self.group_starts)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.diff(np.append(self.group_starts, self.dimension))

    @property
    def group_energies(self) -> np.ndarray:
        return np.add.reduceat(self.energies, self.group_starts) / self.group_sizes

    @property
    def has_degeneracies(self) -> bool:
        return self.n_groups < self.dimension

    def overlaps(self, psi0: np.ndarray) -> np.ndarray:
        """<E|psi0> for every eigenvector."""
        return self.vectors.conj().T @ psi0

    def group_weights(self, psi0: np.ndarray) -> np.ndarray:
        """||P_g psi0||^2 for every degeneracy group."""
        return np.add.reduceat(np.abs(self.overlaps(psi0)) ** 2, self.group_starts)


def degeneracy_groups(energies: np.ndarray, tol_factor: float = DEGENERACY_TOL) -> np.ndarray:
    width = energies[-1] - energies[0] if len(energies) else 0.0
    gaps = np.diff(energies)
    new = np.nonzero(gaps > tol_factor * width)[0] + 1
    return np.concatenate([[0], new]).astype(np.int64)


def diagonalize(H, tol_factor: float = DEGENERACY_TOL, max_dim: int = DENSE_LIMIT) -> SpectralData:
    D = H.shape[0]
    if D > max_dim:
        raise DenseLimitError(
            f"D={D} exceeds the dense diagonalization limit {max_dim}; use evolve_krylov and finite_time_average"
        )
    dense = H.toarray() if sp.issparse(H) else np.array(H)
    if np.iscomplexobj(dense) and not np.any(dense.imag):
        dense = dense.real
    E, V = la.eigh(dense, overwrite_a=True, check_finite=False, driver="evd")
    return SpectralData(E, V, degeneracy_groups(E, tol_factor), tol_factor)


def basis_state(dimension: int, index: int) -> np.ndarray:
    psi = np.zeros(dimension, dtype=complex)
    psi[index] = 1.0
    return psi


def evolve_exact(sd: SpectralData, psi0: np.ndarray, t: float) -> np.ndarray:
    c = sd.overlaps(psi0)
    return sd.vectors @ (np.exp(-1j * sd.energies * t) * c)


def evolve_times(sd: SpectralData, psi0: np.ndarray, times, chunk: int = 256) -> np.ndarray:
    """States at every time, shape (len(times), D)."""
    times = np.asarray(times, float)
    c = sd.overlaps(psi0)
    out = np.empty((len(times), sd.dimension), dtype=complex)
    for s in range(0, len(times), chunk):
        phases = np.exp(-1j * np.outer(sd.energies, times[s:s + chunk])) * c[:, None]
        out[s:s + chunk] = (sd.vectors @ phases).T
    return out


def distributions_over_time(sd: SpectralData, psi0: np.ndarray, times, chunk: int = 256) -> np.ndarray:
    """p(z, t) for every time, shape (len(times), D)."""
    times = np.asarray(times, float)
    out = np.empty((len(times), sd.dimension))
    for s in range(0, len(times), chunk):
        out[s:s + chunk] = np.abs(evolve_times(sd, psi0, times[s:s + chunk], chunk)) ** 2
    return out


def _expm_tridiagonal(alpha, beta, dt):
    """exp(-i T dt) e_1 for the symmetric tridiagonal T."""
    if len(alpha) == 1:
        return np.array([np.exp(-1j * alpha[0] * dt)])
    w, U = la.eigh_tridiagonal(alpha, beta)
    return U @ (np.exp(-1j * w * dt) * U[0].conj())


def evolve_krylov(H, psi0: np.ndarray, t: float, tol: float = 1e-10, max_dim: int = 40,
                  max_steps: int = 100_000) -> np.ndarray:
    """exp(-iHt) psi0 by restarted Lanczos with adaptive step size.

    Each accepted step keeps the a-posteriori Lanczos error below its share
    ``tol * |dt| / |t|`` of the total budget.
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    if t == 0:
        return psi
    sign = 1.0 if t > 0 else -1.0
    remaining = abs(t)
    dt = remaining
    steps = 0
    D = len(psi)
    while remaining > 1e-15 * abs(t):
        steps += 1
        if steps > max_steps:
            raise KrylovConvergenceError(
                f"no convergence after {max_steps} steps; reached {abs(t) - remaining:.6g} of {abs(t):.6g}, last dt={dt:.3g}"
            )
        norm = np.linalg.norm(psi)
        m_cap = min(max_dim, D)
        Q = np.empty((m_cap, D), dtype=complex)
        alpha, beta = [], []
        Q[0] = psi / norm
        breakdown = False
        for j in range(m_cap):
            w = H @ Q[j]
            a = np.vdot(Q[j], w).real
            alpha.append(a)
            w = w - a * Q[j] - (beta[-1] * Q[j - 1] if j else 0)
            w -= Q[: j + 1].T @ (Q[: j + 1].conj() @ w)
            b = np.linalg.norm(w)
            if b < 1e-14:
                breakdown = True
                break
            if j + 1 < m_cap:
                beta.append(b)
                Q[j + 1] = w / b
            else:
                last_beta = b
        m = len(alpha)
        alpha = np.array(alpha)
        beta_arr = np.array(beta[: m - 1])
        dt = min(dt, remaining)
        while True:
            y = _expm_tridiagonal(alpha, beta_arr, sign * dt)
            err = 0.0 if breakdown else last_beta * abs(y[-1]) * norm
            if err <= tol * dt / abs(t) or dt < 1e-12 * abs(t):
                break
            dt *= 0.5
        psi = norm * (Q[:m].T @ y)
        remaining -= dt
        if err < 0.1 * tol * dt / abs(t):
            dt *= 1.5
    return psi


def outcome_distribution(psi: np.ndarray) -> np.ndarray:
    return np.abs(psi) ** 2


def time_averaged_distribution(sd: SpectralData, psi0: np.ndarray, row_chunk: int = 2048) -> np.ndarray:
    """p_avg(z) = sum_g |<z|P_g|psi0>|^2."""
    c = sd.overlaps(psi0)
    sizes = sd.group_sizes
    single = np.repeat(sizes == 1, sizes)
    w = np.where(single, np.abs(c) ** 2, 0.0)
    p = np.empty(sd.dimension)
    for s in range(0, sd.dimension, row_chunk):
        p[s:s + row_chunk] = (np.abs(sd.vectors[s:s + row_chunk]) ** 2) @ w
    for start, size in zip(sd.group_starts[sizes > 1], sizes[sizes > 1]):
        block = slice(start, start + size)
        p += np.abs(sd.vectors[:, block] @ c[block]) ** 2
    return p


def projected_amplitudes(sd: SpectralData, psi0: np.ndarray) -> np.ndarray:
    """Matrix A[z, g] = <z|P_g|psi0>, one column per degeneracy group."""
    c = sd.overlaps(psi0)
    return np.add.reduceat(sd.vectors * c[None, :], sd.group_starts, axis=1)


def finite_time_average(H, psi0: np.ndarray, T: float, dt: float, tol: float = 1e-10) -> np.ndarray:
    """Trapezoidal average of p(z,t) on [0, T] with step dt.

    ``H`` is either SpectralData (exact evolution) or a sparse operator
    (stepwise Lanczos propagation).
    """
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    n = max(1, int(round(T / dt)))
    times = np.linspace(0.0, T, n + 1)
    weights = np.full(n + 1, 1.0 / n)
    weights[[0, -1]] *= 0.5
    if isinstance(H, SpectralData):
        acc = np.zeros(H.dimension)
        for s in range(0, n + 1, 256):
            acc += weights[s:s + 256] @ distributions_over_time(H, psi0, times[s:s + 256])
        return acc
    psi = np.asarray(psi0, dtype=complex)
    acc = weights[0] * outcome_distribution(psi)
    step = T / n
    for k in range(1, n + 1):
        psi = evolve_krylov(H, psi, step, tol=tol / n)
        acc += weights[k] * outcome_distribution(psi)
    return acc


def rescale(p: np.ndarray, p_avg: np.ndarray, zero_tol: float = 1e-14) -> tuple[np.ndarray, float]:
    """p~ = p / p_avg (0/0 -> 0) and Z = sum p_avg p~^2.

    ``p_avg`` entries below ``zero_tol / D`` count as zero support.
    """
    p = np.asarray(p, float)
    p_avg = np.asarray(p_avg, float)
    empty = p_avg <= zero_tol / len(p_avg)
    bad = empty & (p > 1e3 * zero_tol / len(p))
    if np.any(bad):
        z = int(np.nonzero(bad)[0][0])
        raise ReferenceMismatchError(
            f"{int(bad.sum())} outcome(s) have probability but no time-averaged weight (first index {z}, p={p[z]:.3g})"
        )
    ratio = np.divide(p, p_avg, out=np.zeros_like(p), where=~empty)
    Z = float(np.sum(p_avg * ratio**2))
    return ratio, Z


def diagonal_ensemble_purity(sd: SpectralData, psi0: np.ndarray) -> float:
    return float(np.sum(sd.group_weights(psi0) ** 2))


# ---------------------------------------------------------------- cache file

def save_spectrum(path, sd: SpectralData, model_hash: str) -> None:
    """Versioned little-endian container: magic, version, JSON header, payload."""
    vectors = np.asarray(sd.vectors)
    header = json.dumps({
        "model_hash": model_hash,
        "dimension": sd.dimension,
        "tol_factor": sd.tol_factor,
        "complex": bool(np.iscomplexobj(vectors)),
    }, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<II", CACHE_VERSION, len(header)))
        fh.write(header)
        fh.write(np.asarray(sd.energies, dtype="<f8").tobytes())
        if np.iscomplexobj(vectors):
            fh.write(np.ascontiguousarray(vectors, dtype="<c16").tobytes())
        else:
            fh.write(np.ascontiguousarray(vectors, dtype="<f8").tobytes())
    tmp.replace(path)


def load_spectrum(path, expected_hash: str | None = None) -> tuple[SpectralData, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(CACHE_MAGIC)) != CACHE_MAGIC:
            raise ValueError(f"{path} is not a spectral cache file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        header = json.loads(fh.read(hlen))
        if expected_hash is not None and header["model_hash"] != expected_hash:
            raise ValueError(f"{path}: cache built for model {header['model_hash']}, expected {expected_hash}")
        D = header["dimension"]
        energies = np.frombuffer(fh.read(8 * D), dtype="<f8").astype(float)
        dtype = "<c16" if header["complex"] else "<f8"
        size = 16 if header["complex"] else 8
        vectors = np.frombuffer(fh.read(size * D * D), dtype=dtype).reshape(D, D).copy()
    sd = SpectralData(energies, vectors, degeneracy_groups(energies, header["tol_factor"]), header["tol_factor"])
    return sd, header
