"""Random matrix-product-state toy model for short-time estimator behaviour.

Each site carries a Haar-random unitary on (bond x physical) space with the
physical input fixed to |0>; the open bond legs at both ends are projected
on |0>.  An error V = W exp(i theta X) W^dag acts on N_A consecutive sites,
W being Haar random on that block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import unitary_group

MC_LIMIT = 2**14


@dataclass(frozen=True)
class MpsModelParams:
    d: int
    chi: int
    N: int
    n_a: int
    k: int = 1
    theta: float = 0.0

    def __post_init__(self):
        if self.d < 2 or self.chi < 1:
            raise ValueError("need local dimension d >= 2 and bond dimension chi >= 1")
        if not 1 <= self.n_a <= self.N:
            raise ValueError(f"error support {self.n_a} must lie in 1..{self.N}")
        if not 1 <= self.k <= self.N - self.n_a + 1:
            raise ValueError(f"offset k={self.k} puts the error outside the chain")
        if self.chi * self.d == 1:
            raise ValueError("chi * d = 1 makes the transfer matrices singular")

    @property
    def block_dimension(self) -> int:
        return self.d**self.n_a

    def error_generator(self) -> np.ndarray:
        """X: swap of the two lowest levels on the first site of the block, identity elsewhere."""
        flip = np.eye(self.d)
        flip[[0, 1]] = flip[[1, 0]]
        return np.kron(flip, np.eye(self.d ** (self.n_a - 1)))

    @property
    def trace_v(self) -> complex:
        ev = np.linalg.eigvalsh(self.error_generator())
        return complex(np.sum(np.exp(1j * self.theta * ev)))


def mean_fidelity(params: MpsModelParams, trace_v: complex | None = None) -> float:
    """(|tr V|^2 - 1) / (D_A^2 - 1)."""
    tv = params.trace_v if trace_v is None else trace_v
    DA = params.block_dimension
    return (abs(tv) ** 2 - 1) / (DA**2 - 1)


def transfer_matrices(d: int, chi: int) -> tuple[np.ndarray, np.ndarray]:
    cd = chi * d
    T0 = np.array([[cd**2 - d, cd * (d - 1)], [cd * (d - 1), cd**2 - d]], float) / (cd**2 - 1)
    S = np.diag([1.0, np.sqrt(d)])
    return T0, S @ T0 @ S


@dataclass(frozen=True)
class PartitionFunctions:
    f_xi: float
    f_xs: float
    ratio: float
    f_xi_chain: float


def mps_partition_functions(params: MpsModelParams) -> PartitionFunctions:
    """Ising-chain partition functions behind E[F_id + 1] and E[F_XEB + 1].

    Every site of the error block carries the field diag(1, d); between the
    N_A block sites sit N_A - 1 bonds, so the chain is
    T0^(k-1) S T1^(N_A-1) S T0^(N-N_A-k+1) with S = diag(1, sqrt d).
    """
    d, chi, N = params.d, params.chi, params.N
    T0, T1 = transfer_matrices(d, chi)
    S = np.diag([1.0, np.sqrt(d)])
    ones = np.ones(2)
    pref = chi / (chi + 1) * (chi * d + d) / (chi * d + 1)
    power = np.linalg.matrix_power
    chain = pref * ones @ power(T0, N - 1) @ ones
    closed = 2 * chi / (chi + 1) * ((chi * d + d) / (chi * d + 1)) ** N
    xs = (pref * ones @ power(T0, params.k - 1) @ S @ power(T1, params.n_a - 1) @ S
          @ power(T0, N - params.n_a - params.k + 1) @ ones)
    return PartitionFunctions(closed, float(xs), float(xs) / (params.block_dimension * closed), float(chain))


@dataclass(frozen=True)
class CrossoverPrediction:
    xeb_plus_one: float
    ratio: float
    exact_ratio: float
    regime: str


def mps_crossover_prediction(params: MpsModelParams, mean_f: float) -> CrossoverPrediction:
    """Predicted E[F_XEB + 1] = E[F_id + 1] (F + exp(-(d-1)/d N_A/chi) (1-F)/2).

    ``ratio`` is the predicted (F_XEB+1)/(F_id+1); ``exact_ratio`` replaces the
    exponential by the partition-function ratio.
    """
    if not 0 <= mean_f <= 1:
        raise ValueError("mean fidelity must lie in [0, 1]")
    pf = mps_partition_functions(params)
    decay = np.exp(-(params.d - 1) / params.d * params.n_a / params.chi)
    ratio = mean_f + decay * (1 - mean_f) / 2
    exact = mean_f + pf.ratio * (1 - mean_f)
    regime = "F_e" if decay < 0.1 else "F_d" if decay > 0.9 else "crossover"
    return CrossoverPrediction(pf.f_xi * ratio, ratio, exact, regime)


def random_mps(params: MpsModelParams, rng: np.random.Generator) -> np.ndarray:
    """Dense amplitudes of one random MPS, scaled by sqrt(chi) so the mean norm is one."""
    d, chi = params.d, params.chi
    state = np.zeros((1, chi), complex)
    state[0, 0] = 1.0
    for _ in range(params.N):
        U = unitary_group.rvs(chi * d, random_state=rng).reshape(chi, d, chi, d)
        # out-bond, out-phys, in-bond, in-phys with the physical input fixed to |0>
        A = U[:, :, :, 0]
        state = np.einsum("sb,odb->sdo", state, A).reshape(-1, chi)
    return np.sqrt(chi) * state[:, 0]


def apply_block(psi: np.ndarray, op: np.ndarray, params: MpsModelParams) -> np.ndarray:
    left = params.d ** (params.k - 1)
    view = psi.reshape(left, params.block_dimension, -1)
    return np.einsum("ab,lbr->lar", op, view).reshape(-1)


@dataclass(frozen=True)
class MonteCarloResult:
    xeb_plus_one: np.ndarray
    id_plus_one: np.ndarray
    fidelity: np.ndarray
    norm: np.ndarray
    purity_a: np.ndarray

    @staticmethod
    def _stat(x):
        return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))

    @property
    def ratio(self) -> tuple[float, float]:
        """(mean F_XEB+1)/(mean F_id+1) with a delta-method standard error."""
        a, b = self.xeb_plus_one, self.id_plus_one
        r = a.mean() / b.mean()
        resid = (a - r * b) / b.mean()
        return float(r), float(resid.std(ddof=1) / np.sqrt(len(a)))

    def summary(self) -> dict:
        return {"F_XEB": self._stat(self.xeb_plus_one - 1), "F_id": self._stat(self.id_plus_one - 1),
                "F": self._stat(self.fidelity)}


def _reduced_purity(psi, params):
    left = params.d ** (params.k - 1)
    view = psi.reshape(left, params.block_dimension, -1)
    rho = np.einsum("lar,lbr->ab", view, view.conj())
    return float(np.real(np.trace(rho @ rho)))


def mps_monte_carlo(params: MpsModelParams, n_samples: int, seed: int) -> MonteCarloResult:
    """Sample (F_XEB+1, F_id+1, F) over random MPS and random block unitaries W.

    F_XEB and F_id use the sqrt(chi)-scaled amplitudes, whose averages are the
    partition functions; F and the block purity use the normalized state.
    """
    D = params.d**params.N
    if D > MC_LIMIT:
        raise ValueError(f"d^N = {D} exceeds the dense Monte Carlo limit {MC_LIMIT}")
    rng = np.random.default_rng(seed)
    X = params.error_generator()
    ev, vecs = np.linalg.eigh(X)
    core = (vecs * np.exp(1j * params.theta * ev)) @ vecs.conj().T
    xeb, ide, fid, nrm, pur = (np.empty(n_samples) for _ in range(5))
    for s in range(n_samples):
        psi = random_mps(params, rng)
        W = unitary_group.rvs(params.block_dimension, random_state=rng)
        phi = apply_block(psi, W @ core @ W.conj().T, params)
        p = np.abs(psi) ** 2
        xeb[s] = D * np.dot(np.abs(phi) ** 2, p)
        ide[s] = D * np.dot(p, p)
        nrm[s] = np.vdot(psi, psi).real
        fid[s] = abs(np.vdot(psi, phi)) ** 2 / nrm[s] ** 2
        pur[s] = _reduced_purity(psi, params) / nrm[s] ** 2
    return MonteCarloResult(xeb, ide, fid, nrm, pur)


def expected_fidelity(params: MpsModelParams, purity) -> float:
    """Haar-W average of |<psi|V|psi>|^2 for a normalized state with block purity tr rho_A^2."""
    DA = params.block_dimension
    tv2 = abs(params.trace_v) ** 2
    return mean_fidelity(params) + (DA**2 - tv2) / (DA * (DA**2 - 1)) * purity


def predicted_xeb(params: MpsModelParams) -> float:
    """E[F_XEB + 1] = f_XI F + f_XS (1 - F) / D_A with F the mean fidelity of V."""
    pf = mps_partition_functions(params)
    F = mean_fidelity(params)
    return pf.f_xi * F + pf.f_xs / params.block_dimension * (1 - F)
