"""Stochastic pure-state trajectories for local jump noise.

Jump times follow a Poisson process.  Between jumps the state evolves
exactly: in the energy eigenbasis when a spectrum is supplied, otherwise
with the Lanczos propagator.  Each trajectory draws from its own generator,
seeded from ``(seed, trajectory index)``, so results do not depend on how
trajectories are split across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .spectral import SpectralData, evolve_exact, evolve_krylov

UNRAVELINGS = ("uniform-poisson", "norm-weighted")
_ZERO_NORM = 1e-12


@dataclass
class TrajectorySpec:
    operators: list
    rate: float
    sample_times: np.ndarray
    seed: int = 0
    unraveling: str = "uniform-poisson"
    per_site_rate: bool = False

    def __post_init__(self):
        self.sample_times = np.asarray(self.sample_times, float)
        if self.rate < 0:
            raise ValueError("jump rate must be non-negative")
        if np.any(np.diff(self.sample_times) < 0) or np.any(self.sample_times < 0):
            raise ValueError("sample times must be non-negative and ascending")
        if self.unraveling not in UNRAVELINGS:
            raise ValueError(f"unknown unraveling {self.unraveling!r}; expected one of {UNRAVELINGS}")
        self.operators = [op[1] if isinstance(op, tuple) else op for op in self.operators]
        if self.rate > 0 and not self.operators:
            raise ValueError("a positive jump rate needs at least one jump operator")

    @property
    def total_rate(self) -> float:
        return self.rate * len(self.operators) if self.per_site_rate else self.rate

    def generator(self, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(index,))))


@dataclass
class TrajectoryResult:
    times: np.ndarray
    states: np.ndarray
    jumps: list[tuple[float, int]] = field(default_factory=list)
    redraws: int = 0
    fidelity: np.ndarray | None = None


def _apply(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """M @ v without promoting a real M to a complex copy."""
    if np.iscomplexobj(M):
        return M @ v
    return M @ v.real + 1j * (M @ v.imag)


class _Stepper:
    """Free evolution and jump application in whichever basis is cheapest."""

    def __init__(self, H, psi0):
        self.spectral = isinstance(H, SpectralData)
        self.H = H
        if self.spectral:
            self.c0 = H.overlaps(psi0)
            self.V = H.vectors
            self.Vh = np.ascontiguousarray(H.vectors.conj().T)

    def start(self, psi0):
        return self.c0.copy() if self.spectral else np.asarray(psi0, complex).copy()

    def evolve(self, state, dt):
        if dt == 0:
            return state
        if self.spectral:
            return state * np.exp(-1j * self.H.energies * dt)
        return evolve_krylov(self.H, state, dt)

    def to_config(self, state):
        return _apply(self.V, state) if self.spectral else state

    def from_config(self, psi):
        return _apply(self.Vh, psi) if self.spectral else psi

    def ideal_overlap(self, state, t):
        """<psi_ideal(t)|state> with state stored at time t."""
        if self.spectral:
            return np.vdot(self.c0 * np.exp(-1j * self.H.energies * t), state)
        raise NotImplementedError


def _choose_jump(ops, psi, rng, unraveling):
    """Return (operator index, normalized post-jump state, redraw count)."""
    n = len(ops)
    if unraveling == "norm-weighted":
        images = [op @ psi for op in ops]
        weights = np.array([np.vdot(v, v).real for v in images])
        total = weights.sum()
        if total <= _ZERO_NORM:
            raise RuntimeError("every jump operator annihilates the current state")
        k = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
        k = min(k, n - 1)
        return k, images[k] / np.sqrt(weights[k]), 0
    redraws = 0
    tried = set()
    while True:
        k = int(rng.integers(n))
        image = ops[k] @ psi
        norm = np.linalg.norm(image)
        if norm > _ZERO_NORM:
            return k, image / norm, redraws
        redraws += 1
        tried.add(k)
        if len(tried) == n:
            raise RuntimeError("every jump operator annihilates the current state")


def _run(stepper: _Stepper, psi0, spec: TrajectorySpec, index: int):
    """One trajectory; returns stored states (working basis), jump log, redraws."""
    rng = spec.generator(index)
    gamma = spec.total_rate
    ops = spec.operators
    state = stepper.start(psi0)
    t_ref = 0.0
    next_jump = rng.exponential(1.0 / gamma) if gamma > 0 else np.inf
    out = np.empty((len(spec.sample_times), len(state)), dtype=complex)
    jumps, redraws = [], 0
    for k, ts in enumerate(spec.sample_times):
        while next_jump <= ts:
            psi = stepper.to_config(stepper.evolve(state, next_jump - t_ref))
            op, psi, r = _choose_jump(ops, psi, rng, spec.unraveling)
            redraws += r
            jumps.append((float(next_jump), op))
            state = stepper.from_config(psi)
            t_ref = next_jump
            next_jump = t_ref + rng.exponential(1.0 / gamma)
        out[k] = stepper.evolve(state, ts - t_ref)
    return out, jumps, redraws


def simulate_trajectory(H, psi0: np.ndarray, spec: TrajectorySpec, index: int = 0) -> TrajectoryResult:
    """Trajectory number ``index`` of the ensemble defined by ``spec``."""
    stepper = _Stepper(H, psi0)
    stored, jumps, redraws = _run(stepper, psi0, spec, index)
    states = np.array([stepper.to_config(s) for s in stored])
    fid = None
    if stepper.spectral:
        fid = np.array([abs(stepper.ideal_overlap(s, t)) ** 2 for s, t in zip(stored, spec.sample_times)])
    return TrajectoryResult(spec.sample_times.copy(), states, jumps, redraws, fid)


@dataclass
class EnsembleResult:
    times: np.ndarray
    q: np.ndarray
    fidelity: np.ndarray
    fidelity_sq: np.ndarray
    n_traj: int
    jump_counts: np.ndarray
    redraws: int
    jump_log: list[list[tuple[float, int]]]

    @property
    def fidelity_stderr(self) -> np.ndarray:
        var = np.maximum(self.fidelity_sq - self.fidelity**2, 0.0)
        return np.sqrt(var / max(self.n_traj - 1, 1))


def _chunk(H, psi0, spec, ideal, indices):
    stepper = _Stepper(H, psi0)
    n_t, D = len(spec.sample_times), len(psi0)
    q = np.zeros((n_t, D))
    f = np.zeros(n_t)
    f2 = np.zeros(n_t)
    stored = np.empty((n_t, len(indices), D), dtype=complex)
    logs, counts, redraws = [], [], 0
    for j, idx in enumerate(indices):
        out, jumps, r = _run(stepper, psi0, spec, idx)
        stored[:, j] = out
        logs.append(jumps)
        counts.append(len(jumps))
        redraws += r
    for k in range(n_t):
        block = stored[k]
        psi = _apply(H.vectors, block.T).T if stepper.spectral else block
        q[k] = np.sum(np.abs(psi) ** 2, axis=0)
        if ideal is not None:
            ov = np.abs(psi.conj() @ ideal[k]) ** 2
            f[k] = ov.sum()
            f2[k] = (ov**2).sum()
    return q, f, f2, logs, counts, redraws


def simulate_ensemble(H, psi0: np.ndarray, spec: TrajectorySpec, n_traj: int, threads: int = 1,
                      chunk: int = 50, ideal_states: np.ndarray | None = None,
                      first_index: int = 0) -> EnsembleResult:
    """q(z,t) and F(t) averaged over ``n_traj`` trajectories.

    ``ideal_states`` (n_times x D) defaults to the noiseless evolution when
    ``H`` is a spectrum.  Trajectory random streams are numbered from
    ``first_index``, so disjoint ranges give independent sub-ensembles.
    """
    if n_traj < 1:
        raise ValueError("ensemble needs at least one trajectory")
    if ideal_states is None:
        if not isinstance(H, SpectralData):
            raise ValueError("pass ideal_states when propagating without a spectrum")
        ideal_states = np.array([evolve_exact(H, psi0, t) for t in spec.sample_times])
    # bound the per-chunk state buffer to ~256 MB; depends only on problem size
    chunk = max(1, min(chunk, int(2**28 // (16 * len(spec.sample_times) * len(psi0)))))
    end = first_index + n_traj
    blocks = [range(s, min(s + chunk, end)) for s in range(first_index, end, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: _chunk(H, psi0, spec, ideal_states, b), blocks))
    else:
        parts = [_chunk(H, psi0, spec, ideal_states, b) for b in blocks]
    q = np.sum([p[0] for p in parts], axis=0) / n_traj
    f = np.sum([p[1] for p in parts], axis=0) / n_traj
    f2 = np.sum([p[2] for p in parts], axis=0) / n_traj
    logs = [log for p in parts for log in p[3]]
    counts = np.array([c for p in parts for c in p[4]])
    return EnsembleResult(spec.sample_times.copy(), q, f, f2, n_traj, counts, sum(p[5] for p in parts), logs)


def ensemble_distribution(results: list[TrajectoryResult], t_index: int) -> np.ndarray:
    if not results:
        raise ValueError("empty trajectory ensemble")
    return np.mean([np.abs(r.states[t_index]) ** 2 for r in results], axis=0)


def ensemble_fidelity(results: list[TrajectoryResult], ideal_states: np.ndarray) -> np.ndarray:
    if not results:
        raise ValueError("empty trajectory ensemble")
    return np.mean([np.abs(np.sum(ideal_states.conj() * r.states, axis=1)) ** 2 for r in results], axis=0)


def single_error_state(H, psi0: np.ndarray, error, t_err: float, t: float) -> np.ndarray:
    """exp(-iH(t - t_err)) normalize(V exp(-iH t_err) psi0)."""
    if t < t_err:
        raise ValueError("observation time precedes the error")
    evolve = (lambda s, dt: evolve_exact(H, s, dt)) if isinstance(H, SpectralData) else (lambda s, dt: evolve_krylov(H, s, dt))
    psi = evolve(np.asarray(psi0, complex), t_err)
    psi = error @ psi if sp.issparse(error) or isinstance(error, np.ndarray) else error(psi)
    norm = np.linalg.norm(psi)
    if norm <= _ZERO_NORM:
        raise ValueError("error operator annihilates the state")
    return evolve(psi / norm, t - t_err)
