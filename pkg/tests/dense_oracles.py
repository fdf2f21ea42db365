"""Literal tensor-product constructions used as independent references."""

from functools import reduce

import numpy as np


def kron_all(mats):
    return reduce(np.kron, mats)


def embed(local, site, n_sites, dim):
    mats = [np.eye(dim)] * n_sites
    mats = list(mats)
    mats[site] = local
    return kron_all(mats)


def bose_hubbard_full(n_sites, n_max, hopping, interaction):
    d = n_max + 1
    b = np.diag(np.sqrt(np.arange(1, d)), 1)
    n = np.diag(np.arange(d, dtype=float))
    J = np.broadcast_to(np.asarray(hopping, float), (n_sites - 1,))
    H = np.zeros((d**n_sites,) * 2)
    for j in range(n_sites - 1):
        hop = embed(b.T, j, n_sites, d) @ embed(b, j + 1, n_sites, d)
        H -= J[j] * (hop + hop.T)
    for j in range(n_sites):
        nj = embed(n, j, n_sites, d)
        H += 0.5 * interaction * nj @ (nj - np.eye(d**n_sites))
    return H


def fermion_modes(n_modes):
    """Jordan-Wigner annihilators, mode 0 is the most significant tensor factor."""
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    z = np.diag([1.0, -1.0])
    ops = []
    for m in range(n_modes):
        mats = [z] * m + [a] + [np.eye(2)] * (n_modes - m - 1)
        ops.append(kron_all(mats))
    return ops


def fermi_hubbard_full(n_sites, hopping, interaction):
    """Modes ordered (site 0 up, site 0 down, site 1 up, ...)."""
    c = fermion_modes(2 * n_sites)
    H = np.zeros_like(c[0])
    for j in range(n_sites - 1):
        for s in (0, 1):
            hop = c[2 * j + s].T @ c[2 * (j + 1) + s]
            H -= hopping * (hop + hop.T)
    for j in range(n_sites):
        H += interaction * (c[2 * j].T @ c[2 * j]) @ (c[2 * j + 1].T @ c[2 * j + 1])
    return H


def fermion_full_index(config, n_sites):
    up, dn = config[:n_sites], config[n_sites:]
    bits = [v for j in range(n_sites) for v in (up[j], dn[j])]
    return int("".join(str(int(b)) for b in bits), 2)


# local spin basis: value 0 = down, value 1 = up
SZ = np.diag([-1.0, 1.0])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def trapped_ion_full(n_sites, coupling, hz, alpha, fields=None):
    H = np.zeros((2**n_sites,) * 2)
    for i in range(n_sites):
        for j in range(i):
            H += coupling / abs(i - j) ** alpha * embed(SX, i, n_sites, 2) @ embed(SX, j, n_sites, 2)
        h = hz + (0.0 if fields is None else fields[i])
        H += h * embed(SZ, i, n_sites, 2)
    return H


def pxp_full(neighbors, rabi, detuning):
    L = len(neighbors)
    down = np.diag([1.0, 0.0])
    up = np.diag([0.0, 1.0])
    H = np.zeros((2**L,) * 2)
    for j in range(L):
        term = embed(SX, j, L, 2)
        for k in neighbors[j]:
            term = term @ embed(down, k, L, 2)
        H += rabi * term + detuning * embed(up, j, L, 2)
    return H


def restrict(H_full, indices):
    idx = np.asarray(indices)
    return H_full[np.ix_(idx, idx)]
