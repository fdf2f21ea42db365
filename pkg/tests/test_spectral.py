import numpy as np
import pytest
import scipy.sparse as sp

from quenchbench.hamiltonians import build_bose_hubbard, build_fermi_hubbard, build_pxp, build_trapped_ion
from quenchbench.lattice import LatticeSpec, enumerate_basis
from quenchbench.spectral import (
    DenseLimitError,
    ReferenceMismatchError,
    basis_state,
    diagonal_ensemble_purity,
    diagonalize,
    distributions_over_time,
    evolve_exact,
    evolve_krylov,
    evolve_times,
    finite_time_average,
    load_spectrum,
    outcome_distribution,
    projected_amplitudes,
    rescale,
    save_spectrum,
    time_averaged_distribution,
)


@pytest.fixture(scope="module")
def bh6():
    basis = enumerate_basis(LatticeSpec.bose_hubbard(6, 6))
    H = build_bose_hubbard(basis, 1.0, 2.87)
    psi0 = basis_state(basis.dimension, basis.index_of((1,) * 6))
    return basis, H, diagonalize(H), psi0


def test_bose_two_on_two_spectrum():
    b = enumerate_basis(LatticeSpec.bose_hubbard(2, 2))
    sd = diagonalize(build_bose_hubbard(b, 1.0, 0.0))
    assert np.allclose(sd.energies, [-2, 0, 2])
    assert np.allclose(sd.vectors.T @ sd.vectors, np.eye(3), atol=1e-8)


def test_pxp_groups_come_in_opposite_pairs():
    b = enumerate_basis(LatticeSpec.pxp_chain(10))
    sd = diagonalize(build_pxp(b, 1.0, 0.0))
    E, sizes = sd.group_energies, sd.group_sizes
    assert np.allclose(E, -E[::-1], atol=1e-10)
    assert np.array_equal(sizes, sizes[::-1])


def test_diagonal_hamiltonian_gives_permutation():
    H = sp.diags([3.0, -1.0, 2.0, 0.5])
    sd = diagonalize(H)
    assert np.array_equal(np.abs(sd.vectors).round(12), np.abs(sd.vectors).round(12).astype(bool).astype(float))
    assert np.all(np.abs(sd.vectors).sum(axis=0) == 1)


def test_dense_limit_is_enforced():
    H = sp.identity(50, format="csr")
    with pytest.raises(DenseLimitError, match="evolve_krylov"):
        diagonalize(H, max_dim=40)


def test_evolve_exact_basics(bh6):
    basis, H, sd, psi0 = bh6
    assert np.allclose(evolve_exact(sd, psi0, 0.0), psi0, atol=1e-12)
    eig = sd.vectors[:, 17].astype(complex)
    out = evolve_exact(sd, eig, 3.7)
    assert np.abs(np.abs(out) - np.abs(eig)).max() <= 1e-12
    for t in (1.0, 25.0, 300.0):
        assert abs(np.linalg.norm(evolve_exact(sd, psi0, t)) - 1) <= 1e-10


def test_krylov_matches_exact(bh6):
    basis, H, sd, psi0 = bh6
    assert np.linalg.norm(evolve_krylov(H, psi0, 10.0, tol=1e-10) - evolve_exact(sd, psi0, 10.0)) <= 1e-8
    assert np.array_equal(evolve_krylov(H, psi0, 0.0), psi0)
    back = evolve_krylov(H, evolve_krylov(H, psi0, 4.0), -4.0)
    assert np.linalg.norm(back - psi0) <= 1e-8


@pytest.mark.parametrize(
    "make",
    [
        lambda: (lambda b: (b, build_fermi_hubbard(b, 1.0, 1.0)))(enumerate_basis(LatticeSpec.fermi_hubbard(6, 3, 3))),
        lambda: (lambda b: (b, build_pxp(b, 1.0, 0.7)))(enumerate_basis(LatticeSpec.pxp_grid(4, 4))),
        lambda: (lambda b: (b, build_trapped_ion(b, 1.0, 0.7, 1.0)))(enumerate_basis(LatticeSpec.spin_chain(10))),
    ],
)
def test_krylov_cross_method_and_unitarity(make):
    basis, H = make()
    assert basis.dimension <= 2000
    sd = diagonalize(H)
    rng = np.random.default_rng(0)
    psi0 = rng.normal(size=basis.dimension) + 1j * rng.normal(size=basis.dimension)
    psi0 /= np.linalg.norm(psi0)
    e0 = np.vdot(psi0, H @ psi0).real
    psi = psi0
    for t in np.arange(5.0, 51.0, 5.0):
        psi = evolve_krylov(H, psi, 5.0, tol=1e-10)
        assert abs(np.linalg.norm(psi) - 1) <= 1e-9
        assert abs(np.vdot(psi, H @ psi).real - e0) <= 1e-8
    assert np.linalg.norm(psi - evolve_exact(sd, psi0, 50.0)) <= 1e-8


def test_outcome_distribution():
    e = basis_state(5, 2)
    assert np.array_equal(outcome_distribution(e), [0, 0, 1, 0, 0])
    u = np.full(16, 0.25 + 0j)
    assert np.allclose(outcome_distribution(u), 1 / 16)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=100) + 1j * rng.normal(size=100)
    psi /= np.linalg.norm(psi)
    assert abs(outcome_distribution(psi).sum() - 1) <= 1e-10


def test_frozen_dynamics():
    H = sp.diags([0.3, 1.1, -0.4, 2.5])
    sd = diagonalize(H)
    psi0 = np.array([0.5, 0.5j, -0.5, 0.5])
    p0 = outcome_distribution(psi0)
    assert np.allclose(time_averaged_distribution(sd, psi0), p0)
    assert np.allclose(finite_time_average(sd, psi0, 7.3, 0.1), p0)
    assert np.allclose(finite_time_average(H, psi0, 3.0, 0.5), p0)


def test_time_average_against_long_window(bh6):
    basis, H, sd, psi0 = bh6
    p_avg = time_averaged_distribution(sd, psi0)
    assert abs(p_avg.sum() - 1) <= 1e-10
    finite = finite_time_average(sd, psi0, 500, 0.1)
    assert abs(finite.sum() - 1) <= 1e-10
    gap = np.abs(finite - p_avg).max()
    assert gap <= 5e-3
    assert gap < np.abs(finite_time_average(sd, psi0, 50, 0.1) - p_avg).max()


def _quench(kind):
    if kind == "bh":
        b = enumerate_basis(LatticeSpec.bose_hubbard(6, 6))
        return b, build_bose_hubbard(b, 1.0, 0.5), (1,) * 6
    if kind == "fh":
        b = enumerate_basis(LatticeSpec.fermi_hubbard(6, 3, 3))
        return b, build_fermi_hubbard(b, 1.0, 1.0), (1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1)
    if kind == "pxp":
        b = enumerate_basis(LatticeSpec.pxp_chain(12))
        return b, build_pxp(b, 1.0, 0.7), (0,) * 12
    b = enumerate_basis(LatticeSpec.spin_chain(9))
    return b, build_trapped_ion(b, 1.0, 0.7, 1.0), (0,) * 9


@pytest.mark.parametrize("kind", ["bh", "fh", "pxp", "ion"])
def test_finite_window_gap_shrinks(kind):
    basis, H, z0 = _quench(kind)
    sd = diagonalize(H)
    psi0 = basis_state(basis.dimension, basis.index_of(z0))
    p_avg = time_averaged_distribution(sd, psi0)
    gaps = [np.abs(finite_time_average(sd, psi0, T, 0.1) - p_avg).max() for T in (50, 200, 500)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_krylov_time_average_matches_exact():
    b = enumerate_basis(LatticeSpec.bose_hubbard(4, 4))
    H = build_bose_hubbard(b, 1.0, 2.0)
    psi0 = basis_state(b.dimension, b.index_of((1,) * 4))
    exact = finite_time_average(diagonalize(H), psi0, 20.0, 0.1)
    assert np.abs(finite_time_average(H, psi0, 20.0, 0.1) - exact).max() <= 1e-8


def test_degeneracy_grouping_matters_for_fermions():
    b = enumerate_basis(LatticeSpec.fermi_hubbard(6, 2, 2))
    sd = diagonalize(build_fermi_hubbard(b, 1.0, 1.0))
    assert sd.has_degeneracies
    psi0 = basis_state(b.dimension, b.index_of((1, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0)))
    grouped = time_averaged_distribution(sd, psi0)
    naive = (np.abs(sd.vectors) ** 2) @ (np.abs(sd.overlaps(psi0)) ** 2)
    assert np.abs(grouped - naive).max() > 0
    assert abs(grouped.sum() - 1) <= 1e-10
    # the group projection is also what a long finite window sees
    finite = finite_time_average(sd, psi0, 2000.0, 0.25)
    assert np.abs(finite - grouped).max() < np.abs(finite - naive).max()


def test_projected_amplitudes_reproduce_average(bh6):
    basis, H, sd, psi0 = bh6
    A = projected_amplitudes(sd, psi0)
    assert A.shape == (basis.dimension, sd.n_groups)
    assert np.allclose((np.abs(A) ** 2).sum(axis=1), time_averaged_distribution(sd, psi0), atol=1e-14)
    assert np.allclose(A @ np.exp(-1j * sd.group_energies * 2.0), evolve_exact(sd, psi0, 2.0), atol=1e-10)


def test_evolve_times_matches_single_calls(bh6):
    basis, H, sd, psi0 = bh6
    times = np.linspace(0, 30, 7)
    many = evolve_times(sd, psi0, times, chunk=3)
    for k, t in enumerate(times):
        assert np.allclose(many[k], evolve_exact(sd, psi0, t), atol=1e-12)
    assert np.allclose(distributions_over_time(sd, psi0, times), np.abs(many) ** 2)


def test_rescale_identities(bh6):
    basis, H, sd, psi0 = bh6
    p_avg = time_averaged_distribution(sd, psi0)
    ratio, Z = rescale(p_avg, p_avg)
    assert np.allclose(ratio, 1.0) and Z == pytest.approx(1.0)
    p = outcome_distribution(evolve_exact(sd, psi0, 13.0))
    ratio, Z = rescale(p, p_avg)
    assert abs(np.sum(p_avg * ratio) - 1) <= 1e-10


def test_rescale_haar_second_moment():
    D = 2**10
    rng = np.random.default_rng(11)
    Zs = []
    for _ in range(20):
        psi = rng.normal(size=D) + 1j * rng.normal(size=D)
        psi /= np.linalg.norm(psi)
        Zs.append(rescale(outcome_distribution(psi), np.full(D, 1 / D))[1])
    assert np.mean(Zs) == pytest.approx(2.0, abs=0.1)


def test_rescale_zero_support():
    ratio, Z = rescale(np.array([0.5, 0.5, 0.0]), np.array([0.25, 0.75, 0.0]))
    assert ratio[2] == 0.0
    with pytest.raises(ReferenceMismatchError):
        rescale(np.array([0.5, 0.4, 0.1]), np.array([0.25, 0.75, 0.0]))


def test_normalized_second_moment_relaxes_to_two(bh6):
    basis, H, sd, psi0 = bh6
    p_avg = time_averaged_distribution(sd, psi0)
    Z0 = rescale(outcome_distribution(psi0), p_avg)[1]
    assert Z0 >= 1.0 / p_avg.max() / 2
    late = [rescale(p, p_avg)[1] for p in distributions_over_time(sd, psi0, np.linspace(40, 200, 41))]
    assert Z0 > 10
    assert np.mean(late) == pytest.approx(2.0, abs=0.3)


def test_diagonal_ensemble_purity():
    b = enumerate_basis(LatticeSpec.bose_hubbard(4, 4))
    sd = diagonalize(build_bose_hubbard(b, 1.0, 2.0))
    assert diagonal_ensemble_purity(sd, sd.vectors[:, 3].astype(complex)) == pytest.approx(1.0)
    uniform = sd.vectors @ np.full(b.dimension, 1 / np.sqrt(b.dimension))
    assert diagonal_ensemble_purity(sd, uniform) == pytest.approx(1 / b.dimension)


def test_cache_round_trip(tmp_path):
    b = enumerate_basis(LatticeSpec.fermi_hubbard(4, 2, 2))
    sd = diagonalize(build_fermi_hubbard(b, 1.0, 1.0))
    path = tmp_path / "spec.bin"
    save_spectrum(path, sd, "abc123")
    back, header = load_spectrum(path, "abc123")
    assert header["dimension"] == b.dimension
    assert np.array_equal(back.energies, sd.energies)
    assert np.array_equal(back.vectors, sd.vectors)
    assert np.array_equal(back.group_starts, sd.group_starts)
    raw = path.read_bytes()
    assert raw[:6] == b"QBSPEC"
    with pytest.raises(ValueError):
        load_spectrum(path, "other")
