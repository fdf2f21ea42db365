import numpy as np
import pytest
import scipy.sparse as sp

from quenchbench.hamiltonians import (
    ModelParams,
    build_bose_hubbard,
    build_fermi_hubbard,
    build_hamiltonian,
    build_jump_operators,
    build_pxp,
    build_trapped_ion,
    disordered_hopping,
    hermiticity_error,
    longrange_field,
    to_triplets,
)
from quenchbench.lattice import LatticeSpec, enumerate_basis

import dense_oracles as oracle


def eig(H):
    return np.linalg.eigvalsh(H.toarray())


def test_bose_two_on_two():
    b = enumerate_basis(LatticeSpec.bose_hubbard(2, 2))
    assert np.allclose(eig(build_bose_hubbard(b, 1.0, 0.0)), [-2, 0, 2])


def test_bose_unity_filling_diagonal_is_zero():
    b = enumerate_basis(LatticeSpec.bose_hubbard(6, 6))
    H = build_bose_hubbard(b, 1.0, 2.87)
    i = b.index_of((1,) * 6)
    assert H[i, i] == 0.0


def test_fermi_single_particle():
    b = enumerate_basis(LatticeSpec.fermi_hubbard(2, 1, 0))
    assert np.allclose(eig(build_fermi_hubbard(b, 1.0, 3.3)), [-1, 1])


def test_fermi_antiferromagnet_diagonal_is_zero():
    b = enumerate_basis(LatticeSpec.fermi_hubbard(4, 2, 2))
    H = build_fermi_hubbard(b, 1.0, 1.0)
    i = b.index_of((1, 0, 1, 0, 0, 1, 0, 1))
    assert H[i, i] == 0.0


def test_trapped_ion_two_qubits():
    b = enumerate_basis(LatticeSpec.spin_chain(2))
    assert np.allclose(eig(build_trapped_ion(b, 1.0, 0.0, 1.0)), [-1, -1, 1, 1])


def test_pxp_two_sites():
    b = enumerate_basis(LatticeSpec.pxp_chain(2))
    assert [b.configuration_of(i) for i in range(3)] == [(0, 0), (0, 1), (1, 0)]
    assert np.allclose(eig(build_pxp(b, 1.0, 0.0)), [-np.sqrt(2), 0, np.sqrt(2)])


def test_reference_parameter_sets_are_accepted():
    bh = enumerate_basis(LatticeSpec.bose_hubbard(4, 4))
    fh = enumerate_basis(LatticeSpec.fermi_hubbard(4, 2, 2))
    ti = enumerate_basis(LatticeSpec.spin_chain(4))
    px = enumerate_basis(LatticeSpec.pxp_grid(2, 3))
    for H in [build_bose_hubbard(bh, 1, 0.5), build_bose_hubbard(bh, 1, 2.87), build_fermi_hubbard(fh, 1, 1),
              build_trapped_ion(ti, 1, 0.7, 1), build_pxp(px, 1, 0.7)]:
        assert hermiticity_error(H) <= 1e-12


def test_zero_disorder_reproduces_clean_model():
    b = enumerate_basis(LatticeSpec.spin_chain(6))
    clean = build_trapped_ion(b, 1, 0.7, 1)
    zero = build_trapped_ion(b, 1, 0.7, 1, fields=np.zeros(6))
    assert abs(clean - zero).max() == 0


def test_trapped_ion_rejects_bad_exponent():
    b = enumerate_basis(LatticeSpec.spin_chain(3))
    with pytest.raises(ValueError):
        build_trapped_ion(b, 1, 0.7, 0.0)


def test_wrong_basis_kind():
    b = enumerate_basis(LatticeSpec.spin_chain(3))
    with pytest.raises(ValueError):
        build_bose_hubbard(b, 1, 1)
    with pytest.raises(ValueError):
        build_pxp(b, 1, 0)


def test_longrange_field_rescaling():
    # N = 3, alpha = 1: pairs at distance 1, 1, 2
    assert longrange_field(0.7, 1.0, 3) == pytest.approx(0.7 * (1 + 1 + 0.5) / 3)


def test_dense_oracle_bose_hubbard():
    for L, N, J, U in [(3, 3, 1.0, 2.87), (4, 2, [0.4, 1.2, 2.0], 0.5), (2, 4, 1.0, 1.3)]:
        b = enumerate_basis(LatticeSpec.bose_hubbard(L, N))
        assert b.dimension <= 64
        ref = oracle.restrict(oracle.bose_hubbard_full(L, N, J, U), b.keys)
        assert np.abs(build_bose_hubbard(b, J, U).toarray() - ref).max() <= 1e-14


def test_dense_oracle_fermi_hubbard():
    for L, nu, nd, U in [(3, 1, 1, 1.0), (3, 2, 1, 3.0), (4, 2, 1, 0.7), (4, 3, 2, 1.0)]:
        b = enumerate_basis(LatticeSpec.fermi_hubbard(L, nu, nd))
        assert b.dimension <= 64
        idx = [oracle.fermion_full_index(c, L) for c in b.configs]
        ref = oracle.restrict(oracle.fermi_hubbard_full(L, 1.0, U), idx)
        assert np.abs(build_fermi_hubbard(b, 1.0, U).toarray() - ref).max() <= 1e-14


def test_dense_oracle_trapped_ion():
    rng = np.random.default_rng(1)
    for L, alpha in [(4, 1.0), (6, 1.5)]:
        b = enumerate_basis(LatticeSpec.spin_chain(L))
        fields = rng.uniform(-0.5, 0.5, L)
        hz = longrange_field(0.7, alpha, L)
        ref = oracle.trapped_ion_full(L, 1.0, hz, alpha, fields)
        H = build_trapped_ion(b, 1.0, 0.7, alpha, fields)
        assert np.abs(H.toarray() - ref).max() <= 1e-14


def test_dense_oracle_pxp():
    for spec in [LatticeSpec.pxp_chain(8), LatticeSpec.pxp_grid(3, 3), LatticeSpec.pxp_chain(8, periodic=True)]:
        b = enumerate_basis(spec)
        assert b.dimension <= 64
        ref = oracle.restrict(oracle.pxp_full(spec.neighbors(), 1.0, 0.7), b.keys)
        assert np.abs(build_pxp(b, 1.0, 0.7).toarray() - ref).max() <= 1e-14


def test_trapped_ion_commutes_with_parity():
    b = enumerate_basis(LatticeSpec.spin_chain(10))
    H = build_trapped_ion(b, 1.0, 0.7, 1.0, fields=np.linspace(-0.3, 0.3, 10))
    parity = sp.diags((-1.0) ** (b.configs.sum(axis=1) % 2))
    assert abs(H @ parity - parity @ H).max() <= 1e-12


def test_pxp_spectrum_symmetric_at_zero_detuning():
    b = enumerate_basis(LatticeSpec.pxp_grid(3, 4))
    E = eig(build_pxp(b, 1.0, 0.0))
    assert np.abs(E + E[::-1]).max() <= 1e-10
    E = eig(build_pxp(b, 1.0, 0.7))
    assert np.abs(E + E[::-1]).max() > 1e-3


def test_jump_operators():
    bh = enumerate_basis(LatticeSpec.bose_hubbard(5, 5))
    ops = build_jump_operators(bh)
    assert len(ops) == 5
    i = bh.index_of((1,) * 5)
    for _, op in ops:
        assert op[i, i] == 1.0

    spins = enumerate_basis(LatticeSpec.spin_chain(4))
    ops = dict(build_jump_operators(spins))
    assert set(ops) == {f"x{j}" for j in range(4)} | {f"z{j}" for j in range(4)}
    x1 = ops["x1"].toarray()
    for src in range(spins.dimension):
        z = list(spins.configuration_of(src))
        z[1] ^= 1
        dst = spins.index_of(z)
        assert x1[dst, src] == 1 and x1[:, src].sum() == 1

    fh = enumerate_basis(LatticeSpec.fermi_hubbard(4, 2, 2))
    for _, op in build_jump_operators(fh, "occupation"):
        assert set(np.unique(op.diagonal())) <= {0.0, 1.0, 2.0}

    px = enumerate_basis(LatticeSpec.pxp_chain(5))
    assert len(build_jump_operators(px)) == 5
    with pytest.raises(ValueError):
        build_jump_operators(px, "pauli-x")
    with pytest.raises(ValueError):
        build_jump_operators(bh, "amplitude-damping")


def test_disordered_hopping_ensemble():
    values = disordered_hopping(10_000, np.random.default_rng(0))
    assert set(np.round(np.unique(values) / 0.2).astype(int)) == set(range(1, 11))


def test_dispatch_and_triplets():
    b = enumerate_basis(LatticeSpec.bose_hubbard(3, 2))
    H = build_hamiltonian(b, ModelParams(coupling=1.0, interaction=2.0))
    text = to_triplets(H)
    lines = text.strip().splitlines()
    assert lines[0] == f"# 6 6 {H.nnz}"
    r, c, v = lines[1].split()
    assert H[int(r), int(c)] == float(v)
