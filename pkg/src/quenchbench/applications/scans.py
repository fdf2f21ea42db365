"""Target-state benchmarking: scan F_d between a prepared state and a family of targets."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from ..estimators import f_d, f_e, f_hat_d, sample_record
from ..lattice import Basis
from ..spectral import SpectralData, evolve_exact, outcome_distribution, time_averaged_distribution

# (base configuration, rotated configuration) of the locally rotated families, 8 sites / 12 spins
ROTATED_FAMILIES = {
    "bose-hubbard": ((1, 1, 1, 1, 1, 1, 1, 1), (1, 1, 1, 2, 0, 1, 1, 1)),
    # up block then down block: up,dn,up,dn,... versus up,dn,up,(updn),0,dn,up,dn
    "fermi-hubbard": ((1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0, 1),
                      (1, 0, 1, 1, 0, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0, 1)),
    "spin-chain": ((0,) * 12, (0,) * 5 + (1, 1) + (0,) * 5),
}


def rotated_state(basis: Basis, base, rotated, phi: float) -> np.ndarray:
    """cos(phi)|base> + i sin(phi)|rotated>."""
    i, j = basis.index_of(base), basis.index_of(rotated)
    if i is None or j is None:
        raise ValueError("family configurations are not in the basis")
    psi = np.zeros(basis.dimension, complex)
    psi[i] += np.cos(phi)
    psi[j] += 1j * np.sin(phi)
    return psi


def rotated_family(basis: Basis) -> Callable[[float], np.ndarray]:
    base, rotated = ROTATED_FAMILIES[basis.spec.kind]
    if len(base) != basis.spec.n_modes:
        raise ValueError(f"the {basis.spec.kind} family is defined for {len(base)} modes")
    return lambda phi: rotated_state(basis, base, rotated, phi)


def ground_state(sd: SpectralData) -> np.ndarray:
    if sd.n_groups > 1 and sd.group_sizes[0] > 1:
        raise ValueError("ground state is degenerate")
    return sd.vectors[:, 0].astype(complex)


@dataclass
class Prepared:
    """A pure state or an ensemble sum_n w_n |psi_n><psi_n| (states as columns)."""

    states: np.ndarray
    weights: np.ndarray

    @classmethod
    def pure(cls, psi) -> Prepared:
        return cls(np.asarray(psi, complex)[:, None], np.ones(1))

    def quenched_distribution(self, sd: SpectralData, t: float) -> np.ndarray:
        if len(self.weights) == 1:
            return outcome_distribution(evolve_exact(sd, self.states[:, 0], t))
        # all members at once: V e^{-iEt} V^dag S
        coeffs = sd.vectors.conj().T @ self.states
        amps = sd.vectors @ (np.exp(-1j * sd.energies * t)[:, None] * coeffs)
        return (np.abs(amps) ** 2) @ self.weights

    def fidelity(self, target) -> float:
        return float(np.dot(self.weights, np.abs(np.asarray(target).conj() @ self.states) ** 2))


@dataclass
class ScanResult:
    theta: np.ndarray
    f_hat_d: np.ndarray
    stat_err: np.ndarray
    f_d: np.ndarray
    f_e: np.ndarray
    fidelity: np.ndarray

    def argmax(self, which: str = "f_hat_d") -> float:
        return float(self.theta[int(np.argmax(getattr(self, which)))])

    def rows(self):
        names = ("theta", "F_hat_d", "stat_err", "F_d", "F_e", "F")
        cols = (self.theta, self.f_hat_d, self.stat_err, self.f_d, self.f_e, self.fidelity)
        return names, np.column_stack(cols)


def parameter_scan(thetas: Sequence[float], target: Callable[[float], np.ndarray], prepared,
                   sd: SpectralData, t: float, M: int, seed) -> ScanResult:
    """Compare one measured record of the prepared state with every target theta.

    ``prepared`` is a state vector or a Prepared ensemble; it is quenched
    with ``sd`` and sampled once (M shots), and each target supplies its
    own p(z, t) and p_avg(z) under the same quench.
    """
    if not isinstance(prepared, Prepared):
        prepared = Prepared.pure(prepared)
    q = prepared.quenched_distribution(sd, t)
    record = sample_record(q, M, seed)
    rows = []
    for th in thetas:
        psi = target(th)
        p = outcome_distribution(evolve_exact(sd, psi, t))
        p_avg = time_averaged_distribution(sd, psi)
        est = f_hat_d(record, p, p_avg, time=t)
        rows.append((est.value, est.stat_err, f_d(q, p, p_avg), f_e(q, p, p_avg), prepared.fidelity(psi)))
    cols = np.array(rows).T
    return ScanResult(np.asarray(thetas, float), *cols)


@dataclass
class TemperatureScan:
    temperature: np.ndarray
    fidelity: np.ndarray
    f_d: np.ndarray
    f_e: np.ndarray
    kept_states: np.ndarray

    def rows(self):
        names = ("T", "F", "F_d", "F_e")
        return names, np.column_stack((self.temperature, self.fidelity, self.f_d, self.f_e))


def boltzmann_ensemble(prep: SpectralData, T: float, cutoff: float = 1e-10) -> Prepared:
    """Eigenstates of the preparation Hamiltonian with Boltzmann weights above ``cutoff``."""
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T}")
    logw = -(prep.energies - prep.energies[0]) / T
    w = np.exp(logw - logw.max())
    w /= w.sum()
    keep = w > cutoff * w.max()
    w = w[keep] / w[keep].sum()
    return Prepared(prep.vectors[:, keep].astype(complex), w)


def gibbs_fidelity(prep: SpectralData, T: float) -> float:
    """exp(-E_0/T)/Z(T)."""
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T}")
    shifted = -(prep.energies - prep.energies[0]) / T
    return float(1.0 / np.sum(np.exp(shifted)))


def temperature_scan(prep: SpectralData, quench: SpectralData, temperatures: Sequence[float],
                     times: Sequence[float], cutoff: float = 1e-10) -> TemperatureScan:
    """F, and time-averaged F_d and F_e, between the quenched ground state and quenched Gibbs states.

    The Gibbs state is an eigenstate ensemble truncated at relative weight
    ``cutoff``; the estimators are averaged over the sample ``times``.
    """
    times = np.asarray(times, float)
    psi0 = ground_state(prep)
    p_avg = time_averaged_distribution(quench, psi0)
    ps = [outcome_distribution(evolve_exact(quench, psi0, t)) for t in times]
    out = []
    for T in temperatures:
        ens = boltzmann_ensemble(prep, T, cutoff)
        qs = [ens.quenched_distribution(quench, t) for t in times]
        fd = np.mean([f_d(q, p, p_avg) for q, p in zip(qs, ps)])
        fe = np.mean([f_e(q, p, p_avg) for q, p in zip(qs, ps)])
        out.append((gibbs_fidelity(prep, T), fd, fe, len(ens.weights)))
    F, fd, fe, kept = np.array(out).T
    return TemperatureScan(np.asarray(temperatures, float), F, fd, fe, kept.astype(int))
