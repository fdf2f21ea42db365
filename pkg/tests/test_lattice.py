import itertools
import time
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quenchbench.lattice import InvalidSpecError, LatticeSpec, enumerate_basis, parse_configuration


@pytest.mark.parametrize(
    "spec, dim",
    [
        (LatticeSpec.bose_hubbard(10, 10), 92378),
        (LatticeSpec.fermi_hubbard(10, 5, 5), 63504),
        (LatticeSpec.pxp_grid(5, 5), 55447),
        (LatticeSpec.spin_chain(16), 65536),
        (LatticeSpec.bose_hubbard(9, 9), 24310),
        (LatticeSpec.bose_hubbard(1, 1), 1),
    ],
)
def test_reference_dimensions(spec, dim):
    assert enumerate_basis(spec).dimension == dim


def test_large_bases_are_fast():
    start = time.perf_counter()
    for spec in [LatticeSpec.bose_hubbard(10, 10), LatticeSpec.fermi_hubbard(10, 5, 5),
                 LatticeSpec.pxp_grid(5, 5), LatticeSpec.spin_chain(16)]:
        enumerate_basis(spec)
    assert time.perf_counter() - start < 5.0


def _brute_force(spec):
    """All candidates of the full product space passing an explicit constraint check."""
    L = spec.n_sites
    if spec.kind == "bose-hubbard":
        cands = itertools.product(range(spec.n_bosons + 1), repeat=L)
        return [c for c in cands if sum(c) == spec.n_bosons]
    if spec.kind == "fermi-hubbard":
        cands = itertools.product((0, 1), repeat=2 * L)
        return [c for c in cands if sum(c[:L]) == spec.n_up and sum(c[L:]) == spec.n_down]
    cands = itertools.product((0, 1), repeat=L)
    if spec.kind == "spin-chain":
        return list(cands)
    nbrs = spec.neighbors()
    return [c for c in cands if all(not (c[i] and c[j]) for i in range(L) for j in nbrs[i])]


SMALL = [
    LatticeSpec.bose_hubbard(4, 3),
    LatticeSpec.bose_hubbard(5, 5),
    LatticeSpec.bose_hubbard(3, 0),
    LatticeSpec.fermi_hubbard(4, 2, 1),
    LatticeSpec.fermi_hubbard(5, 0, 3),
    LatticeSpec.spin_chain(6),
    LatticeSpec.pxp_chain(10),
    LatticeSpec.pxp_chain(9, periodic=True),
    LatticeSpec.pxp_grid(3, 4),
    LatticeSpec.pxp_grid(4, 4, periodic=True),
    LatticeSpec.pxp_grid(2, 5, periodic=True),
    LatticeSpec.pxp_chain(1),
]


@pytest.mark.parametrize("spec", SMALL, ids=str)
def test_matches_brute_force_filter_in_order(spec):
    basis = enumerate_basis(spec)
    expected = sorted(_brute_force(spec))
    assert [basis.configuration_of(i) for i in range(basis.dimension)] == expected


def test_pxp_counts_up_to_twenty_sites():
    for L in (14, 20):
        assert enumerate_basis(LatticeSpec.pxp_chain(L)).dimension == len(_brute_force(LatticeSpec.pxp_chain(L)))
    grid = LatticeSpec.pxp_grid(4, 5)
    assert enumerate_basis(grid).dimension == len(_brute_force(grid))


def test_combinatorial_counts():
    for L, N in [(6, 6), (8, 3), (7, 9)]:
        assert enumerate_basis(LatticeSpec.bose_hubbard(L, N)).dimension == comb(N + L - 1, N)
    for L, u, d in [(6, 3, 3), (7, 2, 5)]:
        assert enumerate_basis(LatticeSpec.fermi_hubbard(L, u, d)).dimension == comb(L, u) * comb(L, d)


def test_round_trip_bh8():
    basis = enumerate_basis(LatticeSpec.bose_hubbard(8, 8))
    rng = np.random.default_rng(4)
    for i in rng.integers(0, basis.dimension, size=1000):
        assert basis.index_of(basis.configuration_of(int(i))) == i


def test_every_configuration_satisfies_constraints_exhaustively():
    for spec in [LatticeSpec.bose_hubbard(8, 8), LatticeSpec.fermi_hubbard(8, 4, 4), LatticeSpec.pxp_grid(4, 4)]:
        basis = enumerate_basis(spec)
        assert basis.dimension <= 10**4
        c = basis.configs.astype(int)
        L = spec.n_sites
        if spec.kind == "bose-hubbard":
            assert np.all(c.sum(axis=1) == spec.n_bosons)
        elif spec.kind == "fermi-hubbard":
            assert np.all(c[:, :L].sum(axis=1) == spec.n_up) and np.all(c[:, L:].sum(axis=1) == spec.n_down)
        else:
            for i, nb in enumerate(spec.neighbors()):
                assert not np.any(c[:, i][:, None] & c[:, nb])
        assert np.all(np.diff(basis.keys) > 0)


def test_lookup_behaviour():
    bh = enumerate_basis(LatticeSpec.bose_hubbard(6, 6))
    unity = (1,) * 6
    i = bh.index_of(unity)
    assert i is not None and bh.configuration_of(i) == unity
    assert bh.index_of((2, 0, 1, 0, 0, 0)) is None
    assert bh.index_of((7, 0, 0, 0, 0, 0)) is None
    with pytest.raises(ValueError):
        bh.index_of((1, 1))
    with pytest.raises(IndexError):
        bh.configuration_of(bh.dimension)

    pxp = enumerate_basis(LatticeSpec.pxp_chain(6))
    assert pxp.index_of((0, 1, 1, 0, 0, 0)) is None
    assert pxp.index_of((0, 1, 0, 1, 0, 0)) is not None

    spins = enumerate_basis(LatticeSpec.spin_chain(5))
    assert spins.configuration_of(0) == (0,) * 5


def test_configuration_strings():
    bh = enumerate_basis(LatticeSpec.bose_hubbard(4, 4))
    i = bh.index_of((1, 0, 2, 1))
    assert bh.label(i) == "1,0,2,1"
    assert parse_configuration("1,0,2,1") == (1, 0, 2, 1)


@pytest.mark.parametrize(
    "make",
    [
        lambda: LatticeSpec.fermi_hubbard(3, 4, 1),
        lambda: LatticeSpec.pxp_grid(0, 5),
        lambda: LatticeSpec.bose_hubbard(0, 1),
        lambda: LatticeSpec.bose_hubbard(3, -1),
        lambda: LatticeSpec("ladder", (3,)),
        lambda: LatticeSpec("pxp-2d", (3,)),
    ],
)
def test_invalid_specs(make):
    with pytest.raises(InvalidSpecError):
        make()


@settings(max_examples=40, deadline=None)
@given(L=st.integers(1, 7), N=st.integers(0, 6))
def test_bose_bijection_property(L, N):
    basis = enumerate_basis(LatticeSpec.bose_hubbard(L, N))
    assert basis.dimension == comb(N + L - 1, N)
    idx = basis.indices_of(basis.configs)
    assert np.array_equal(idx, np.arange(basis.dimension))


@settings(max_examples=30, deadline=None)
@given(rows=st.integers(1, 4), cols=st.integers(1, 4), periodic=st.booleans())
def test_blockade_bijection_property(rows, cols, periodic):
    spec = LatticeSpec.pxp_grid(rows, cols, periodic=periodic)
    basis = enumerate_basis(spec)
    assert basis.dimension == len(_brute_force(spec))
    assert np.array_equal(basis.indices_of(basis.configs), np.arange(basis.dimension))


def test_order_is_stable_across_runs():
    a = enumerate_basis(LatticeSpec.fermi_hubbard(6, 3, 3))
    b = enumerate_basis(LatticeSpec.fermi_hubbard(6, 3, 3))
    assert np.array_equal(a.configs, b.configs)
