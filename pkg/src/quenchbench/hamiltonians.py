"""Sparse Hamiltonians and jump operators for the four lattice families.

All matrices are real ``scipy.sparse.csr_matrix`` in the configuration basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lattice import Basis

ERROR_MODELS = ("occupation", "pauli-xz", "pauli-z", "pauli-x")


def _require(basis: Basis, *kinds: str):
    if basis.spec.kind not in kinds:
        raise ValueError(f"builder needs a {' or '.join(kinds)} basis, got {basis.spec.kind}")


def _per_bond(value, n_bonds: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n_bonds,)) if np.ndim(value) == 0 else np.asarray(value, float)
    if arr.shape != (n_bonds,):
        raise ValueError(f"expected {n_bonds} bond values, got {arr.shape}")
    return arr


def _hermitian_from_upper(rows, cols, vals, diag, D) -> sp.csr_matrix:
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    r = np.concatenate([rows, cols, np.arange(D)])
    c = np.concatenate([cols, rows, np.arange(D)])
    v = np.concatenate([vals, vals, diag])
    H = sp.csr_matrix((v, (r, c)), shape=(D, D))
    H.sum_duplicates()
    H.eliminate_zeros()
    return H


def _lookup(basis: Basis, configs: np.ndarray) -> np.ndarray:
    idx = basis.indices_of(configs)
    if np.any(idx < 0):
        raise AssertionError("hopping produced a configuration outside the basis")
    return idx


def disordered_hopping(n_bonds: int, rng: np.random.Generator, scale: float = 0.2, levels: int = 10) -> np.ndarray:
    """Hopping amplitudes scale * m with m uniform on 1..levels."""
    return scale * rng.integers(1, levels + 1, size=n_bonds)


def build_bose_hubbard(basis: Basis, hopping=1.0, interaction=0.0, onsite=None) -> sp.csr_matrix:
    """H = -sum_j J_j (b+_j b_j+1 + h.c.) + U/2 sum_j n_j (n_j - 1) + sum_j mu_j n_j."""
    _require(basis, "bose-hubbard")
    L, D = basis.spec.n_sites, basis.dimension
    n = basis.configs.astype(np.int64)
    J = _per_bond(hopping, max(L - 1, 0))
    rows, cols, vals = [], [], []
    for j in range(L - 1):
        src = np.nonzero(n[:, j + 1] > 0)[0]
        new = n[src].copy()
        amp = np.sqrt((new[:, j] + 1) * new[:, j + 1])
        new[:, j] += 1
        new[:, j + 1] -= 1
        rows.append(_lookup(basis, new))
        cols.append(src)
        vals.append(-J[j] * amp)
    diag = 0.5 * interaction * (n * (n - 1)).sum(axis=1).astype(float)
    if onsite is not None:
        diag = diag + n @ np.asarray(onsite, float)
    return _hermitian_from_upper(rows, cols, vals, diag, D)


def build_fermi_hubbard(basis: Basis, hopping=1.0, interaction=0.0) -> sp.csr_matrix:
    """Open-chain Hubbard model; modes ordered site-major with up before down."""
    _require(basis, "fermi-hubbard")
    L, D = basis.spec.n_sites, basis.dimension
    occ = basis.configs.astype(np.int64)
    up, dn = occ[:, :L], occ[:, L:]
    J = _per_bond(hopping, max(L - 1, 0))
    rows, cols, vals = [], [], []
    for spin, (block, other) in enumerate(((up, dn), (dn, up))):
        offset = spin * L
        for j in range(L - 1):
            src = np.nonzero((block[:, j] == 0) & (block[:, j + 1] == 1))[0]
            # one mode sits between (j, s) and (j+1, s): (j, down) for up hops, (j+1, up) for down hops
            between = other[src, j] if spin == 0 else other[src, j + 1]
            sign = 1 - 2 * (between % 2)
            new = occ[src].copy()
            new[:, offset + j] = 1
            new[:, offset + j + 1] = 0
            rows.append(_lookup(basis, new))
            cols.append(src)
            vals.append(-J[j] * sign.astype(float))
    diag = interaction * (up * dn).sum(axis=1).astype(float)
    return _hermitian_from_upper(rows, cols, vals, diag, D)


def longrange_field(hz_tilde: float, alpha: float, n_sites: int) -> float:
    """h_z = hz_tilde * N^-1 sum_{j<i} |i-j|^-alpha."""
    i, j = np.triu_indices(n_sites, k=1)
    return hz_tilde * float(np.sum(np.abs(i - j) ** (-float(alpha)))) / n_sites


def _pauli_z(basis: Basis) -> np.ndarray:
    return 2.0 * basis.configs.astype(float) - 1.0


def build_trapped_ion(basis: Basis, coupling=1.0, hz_tilde=0.7, alpha=1.0, fields=None) -> sp.csr_matrix:
    """sum_{i>j} J/|i-j|^alpha X_i X_j + h_z sum_j Z_j + sum_j Delta_j Z_j.

    Site value 1 is spin up (Z = +1).
    """
    _require(basis, "spin-chain")
    if alpha <= 0:
        raise ValueError(f"power-law exponent must be positive, got {alpha}")
    L, D = basis.spec.n_sites, basis.dimension
    z = _pauli_z(basis)
    local = np.full(L, longrange_field(hz_tilde, alpha, L))
    if fields is not None:
        fields = np.asarray(fields, float)
        if fields.shape != (L,):
            raise ValueError(f"expected {L} disorder fields, got {fields.shape}")
        local = local + fields
    diag = z @ local
    rows, cols, vals = [], [], []
    src = np.arange(D)
    for a in range(L):
        for b in range(a + 1, L):
            new = basis.configs.copy()
            new[:, a] ^= 1
            new[:, b] ^= 1
            dst = _lookup(basis, new)
            keep = dst > src
            rows.append(dst[keep])
            cols.append(src[keep])
            vals.append(np.full(int(keep.sum()), coupling / abs(a - b) ** alpha))
    return _hermitian_from_upper(rows, cols, vals, diag, D)


def build_pxp(basis: Basis, rabi=1.0, detuning=0.0) -> sp.csr_matrix:
    """rabi * sum_j P X_j P + detuning * sum_j n_j on the blockaded basis."""
    _require(basis, "pxp-1d", "pxp-2d")
    L = basis.spec.n_sites
    rows, cols, vals = [], [], []
    for j in range(L):
        src = np.nonzero(basis.configs[:, j] == 0)[0]
        new = basis.configs[src].copy()
        new[:, j] = 1
        dst = basis.indices_of(new)
        ok = dst >= 0
        rows.append(dst[ok])
        cols.append(src[ok])
        vals.append(np.full(int(ok.sum()), float(rabi)))
    diag = detuning * basis.configs.sum(axis=1).astype(float)
    return _hermitian_from_upper(rows, cols, vals, diag, basis.dimension)


def site_occupation(basis: Basis, site: int) -> sp.csr_matrix:
    if basis.spec.kind == "fermi-hubbard":
        L = basis.spec.n_sites
        values = basis.configs[:, site] + basis.configs[:, L + site]
    else:
        values = basis.configs[:, site]
    return sp.diags(values.astype(float), format="csr")


def pauli_z(basis: Basis, site: int) -> sp.csr_matrix:
    return sp.diags(_pauli_z(basis)[:, site], format="csr")


def pauli_x(basis: Basis, site: int) -> sp.csr_matrix:
    _require(basis, "spin-chain")
    new = basis.configs.copy()
    new[:, site] ^= 1
    dst = _lookup(basis, new)
    D = basis.dimension
    return sp.csr_matrix((np.ones(D), (dst, np.arange(D))), shape=(D, D))


def default_error_model(kind: str) -> str:
    return {"bose-hubbard": "occupation", "fermi-hubbard": "occupation",
            "spin-chain": "pauli-xz", "pxp-1d": "pauli-z", "pxp-2d": "pauli-z"}[kind]


def build_jump_operators(basis: Basis, error_model: str | None = None) -> list[tuple[str, sp.csr_matrix]]:
    """Named local error operators, one (or two, for pauli-xz) per site."""
    kind = basis.spec.kind
    model = error_model or default_error_model(kind)
    if model not in ERROR_MODELS:
        raise ValueError(f"unknown error model {model!r}; expected one of {ERROR_MODELS}")
    L = basis.spec.n_sites
    if model == "occupation":
        _require(basis, "bose-hubbard", "fermi-hubbard")
        return [(f"n{j}", site_occupation(basis, j)) for j in range(L)]
    if model == "pauli-z":
        _require(basis, "spin-chain", "pxp-1d", "pxp-2d")
        return [(f"z{j}", pauli_z(basis, j)) for j in range(L)]
    _require(basis, "spin-chain")
    ops = [(f"x{j}", pauli_x(basis, j)) for j in range(L)]
    if model == "pauli-xz":
        ops += [(f"z{j}", pauli_z(basis, j)) for j in range(L)]
    return ops


@dataclass
class ModelParams:
    """Couplings for one model family; fields a family does not use are ignored.

    ``coupling`` is the hopping (scalar or per bond), the Ising prefactor or
    the Rabi frequency depending on the family.
    """

    coupling: float | list[float] = 1.0
    interaction: float = 0.0
    onsite: list[float] | None = None
    hz_tilde: float = 0.7
    alpha: float = 1.0
    fields: list[float] | None = None
    detuning: float = 0.0


def build_hamiltonian(basis: Basis, params: ModelParams) -> sp.csr_matrix:
    kind = basis.spec.kind
    if kind == "bose-hubbard":
        return build_bose_hubbard(basis, params.coupling, params.interaction, params.onsite)
    if kind == "fermi-hubbard":
        return build_fermi_hubbard(basis, params.coupling, params.interaction)
    if kind == "spin-chain":
        return build_trapped_ion(basis, params.coupling, params.hz_tilde, params.alpha, params.fields)
    return build_pxp(basis, params.coupling, params.detuning)


def hermiticity_error(op: sp.spmatrix) -> float:
    diff = (op - op.conj().T).tocoo()
    return float(np.abs(diff.data).max()) if diff.nnz else 0.0


def to_triplets(op: sp.spmatrix) -> str:
    """Coordinate-triplet text dump, one `row col value` line per stored entry."""
    coo = op.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"# {op.shape[0]} {op.shape[1]} {coo.nnz}"]
    for k in order:
        v = coo.data[k]
        val = f"{v.real:.17g}" if np.isrealobj(coo.data) else f"{v.real:.17g} {v.imag:.17g}"
        lines.append(f"{coo.row[k]} {coo.col[k]} {val}")
    return "\n".join(lines) + "\n"
