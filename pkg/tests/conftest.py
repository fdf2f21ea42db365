import numpy as np
import pytest

from quenchbench.hamiltonians import build_bose_hubbard
from quenchbench.lattice import LatticeSpec, enumerate_basis
from quenchbench.spectral import basis_state, diagonalize, load_spectrum, save_spectrum, time_averaged_distribution


class Quench:
    """Basis, spectrum, initial state and p_avg bundled for reuse."""

    def __init__(self, basis, H, sd, psi0):
        self.basis, self.H, self.sd, self.psi0 = basis, H, sd, psi0
        self.p_avg = time_averaged_distribution(sd, psi0)

    @property
    def D(self):
        return self.basis.dimension


def cached_spectrum(request, key, H):
    """Dense spectra above a few thousand levels are reused across sessions."""
    folder = request.config.cache.mkdir("quenchbench-spectra")
    path = folder / f"{key}.qbspec"
    if path.exists():
        try:
            return load_spectrum(path, key)[0]
        except Exception:
            path.unlink()
    sd = diagonalize(H)
    save_spectrum(path, sd, key)
    return sd


@pytest.fixture(scope="session")
def bh8(request):
    """8 bosons on 8 sites, (1, 0.5), quenched from unity filling."""
    basis = enumerate_basis(LatticeSpec.bose_hubbard(8, 8))
    H = build_bose_hubbard(basis, 1.0, 0.5)
    sd = cached_spectrum(request, "bh8-J1-U0.5", H)
    return Quench(basis, H, sd, basis_state(basis.dimension, basis.index_of((1,) * 8)))


@pytest.fixture(scope="session")
def bh6_mott(request):
    """6 bosons on 6 sites at (1, 2.87) from unity filling."""
    basis = enumerate_basis(LatticeSpec.bose_hubbard(6, 6))
    H = build_bose_hubbard(basis, 1.0, 2.87)
    return Quench(basis, H, diagonalize(H), basis_state(basis.dimension, basis.index_of((1,) * 6)))


@pytest.fixture(scope="session")
def bh6_sf(request):
    """6 bosons on 6 sites at (1, 0.5) from unity filling."""
    basis = enumerate_basis(LatticeSpec.bose_hubbard(6, 6))
    H = build_bose_hubbard(basis, 1.0, 0.5)
    return Quench(basis, H, diagonalize(H), basis_state(basis.dimension, basis.index_of((1,) * 6)))


@pytest.fixture(scope="session")
def bh8_critical(request):
    """8-on-8 chain at U=3.6: preparation spectrum and the disordered quench used by target-state scans."""
    basis = enumerate_basis(LatticeSpec.bose_hubbard(8, 8))
    disorder = np.random.default_rng(36).uniform(-3, 3, 8)
    prep = cached_spectrum(request, "bh8-J1-U3.6", build_bose_hubbard(basis, 1.0, 3.6))
    quench = cached_spectrum(request, "bh8-J1-U3.6-disorder36", build_bose_hubbard(basis, 1.0, 3.6, disorder))
    return basis, prep, quench


def haar_state(D, rng):
    v = rng.normal(size=D) + 1j * rng.normal(size=D)
    return v / np.linalg.norm(v)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def check(number: int, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] #{number} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("#")[1].split()[0])):
            terminalreporter.write_line(line)
