"""Constrained many-body bases with configuration <-> index maps.

Configurations are stored as rows of a small-integer array.  Each row is
encoded as an integer in base ``radix`` (first mode most significant) so
that lexicographic order on occupations coincides with numeric order of the
keys, and lookup is a binary search over the sorted keys.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

KINDS = ("bose-hubbard", "fermi-hubbard", "spin-chain", "pxp-1d", "pxp-2d")


class InvalidSpecError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    kind: str
    shape: tuple[int, ...]
    n_bosons: int = 0
    n_up: int = 0
    n_down: int = 0
    periodic: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpecError(f"unknown lattice kind {self.kind!r}; expected one of {KINDS}")
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        want = 2 if self.kind == "pxp-2d" else 1
        if len(shape) != want:
            raise InvalidSpecError(f"{self.kind} needs {want} extent(s), got {shape}")
        if any(s < 1 for s in shape):
            raise InvalidSpecError(f"grid extents must be >= 1, got {shape}")
        if min(self.n_bosons, self.n_up, self.n_down) < 0:
            raise InvalidSpecError("particle counts must be non-negative")
        L = self.n_sites
        if self.kind == "fermi-hubbard" and (self.n_up > L or self.n_down > L):
            raise InvalidSpecError(f"{self.n_up} up / {self.n_down} down fermions exceed {L} sites")
        if self.kind != "bose-hubbard" and self.n_bosons:
            raise InvalidSpecError("boson count only applies to bose-hubbard")
        if self.kind != "fermi-hubbard" and (self.n_up or self.n_down):
            raise InvalidSpecError("fermion counts only apply to fermi-hubbard")

    @classmethod
    def bose_hubbard(cls, n_sites: int, n_bosons: int) -> LatticeSpec:
        return cls("bose-hubbard", (n_sites,), n_bosons=n_bosons)

    @classmethod
    def fermi_hubbard(cls, n_sites: int, n_up: int, n_down: int) -> LatticeSpec:
        return cls("fermi-hubbard", (n_sites,), n_up=n_up, n_down=n_down)

    @classmethod
    def spin_chain(cls, n_sites: int) -> LatticeSpec:
        return cls("spin-chain", (n_sites,))

    @classmethod
    def pxp_chain(cls, n_sites: int, periodic: bool = False) -> LatticeSpec:
        return cls("pxp-1d", (n_sites,), periodic=periodic)

    @classmethod
    def pxp_grid(cls, rows: int, cols: int, periodic: bool = False) -> LatticeSpec:
        return cls("pxp-2d", (rows, cols), periodic=periodic)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_modes(self) -> int:
        """Entries per configuration (fermions carry an up and a down block)."""
        return 2 * self.n_sites if self.kind == "fermi-hubbard" else self.n_sites

    @property
    def radix(self) -> int:
        return self.n_bosons + 1 if self.kind == "bose-hubbard" else 2

    @property
    def grid(self) -> tuple[int, int]:
        """(rows, cols); chains are a single row."""
        return (self.shape[0], self.shape[1]) if len(self.shape) == 2 else (1, self.shape[0])

    def neighbors(self) -> list[list[int]]:
        """Nearest-neighbour lists on the chain or grid, row-major site order."""
        rows, cols = self.grid
        nbrs: list[set[int]] = [set() for _ in range(rows * cols)]

        def link(a, b):
            if a != b:
                nbrs[a].add(b)
                nbrs[b].add(a)

        for r in range(rows):
            for c in range(cols):
                s = r * cols + c
                if c + 1 < cols:
                    link(s, s + 1)
                elif self.periodic and cols > 2:
                    link(s, r * cols)
                if r + 1 < rows:
                    link(s, s + cols)
                elif self.periodic and rows > 2:
                    link(s, c)
        return [sorted(n) for n in nbrs]

    def expected_dimension(self) -> int | None:
        """Closed-form dimension where one exists (None for PXP)."""
        L = self.n_sites
        if self.kind == "bose-hubbard":
            return comb(self.n_bosons + L - 1, self.n_bosons)
        if self.kind == "fermi-hubbard":
            return comb(L, self.n_up) * comb(L, self.n_down)
        if self.kind == "spin-chain":
            return 2**L
        return None


@lru_cache(maxsize=None)
def _compositions(length: int, total: int, cap: int) -> np.ndarray:
    """All length-`length` rows of entries in [0, cap] summing to `total`, lex order."""
    if length == 0:
        return np.zeros((1 if total == 0 else 0, 0), dtype=np.int8)
    if length == 1:
        if total <= cap:
            return np.array([[total]], dtype=np.int8)
        return np.zeros((0, 1), dtype=np.int8)
    blocks = []
    for first in range(min(cap, total) + 1):
        tail = _compositions(length - 1, total - first, cap)
        if len(tail):
            head = np.full((len(tail), 1), first, dtype=np.int8)
            blocks.append(np.hstack([head, tail]))
    if not blocks:
        return np.zeros((0, length), dtype=np.int8)
    return np.vstack(blocks)


def _independent_rows(width: int, periodic: bool) -> np.ndarray:
    """Bit masks (column 0 most significant) with no two horizontally adjacent ones."""
    masks = np.array([0, 1], dtype=np.int64)
    for _ in range(width - 1):
        zero = masks << 1
        one = (masks[(masks & 1) == 0] << 1) | 1
        masks = np.concatenate([zero, one])
    if periodic and width > 2:
        top = 1 << (width - 1)
        masks = masks[~(((masks & top) != 0) & ((masks & 1) != 0))]
    return np.sort(masks)


def _blockade_keys(rows: int, cols: int, periodic: bool) -> np.ndarray:
    row_masks = _independent_rows(cols, periodic)
    keys = row_masks.copy()
    first = row_masks.copy()
    last = row_masks.copy()
    for _ in range(rows - 1):
        new_k, new_f, new_l = [], [], []
        for r in row_masks:
            ok = (last & r) == 0
            new_k.append((keys[ok] << cols) | r)
            new_f.append(first[ok])
            new_l.append(np.full(int(ok.sum()), r, dtype=np.int64))
        keys, first, last = (np.concatenate(a) for a in (new_k, new_f, new_l))
    if periodic and rows > 2:
        keys = keys[(first & last) == 0]
    return np.sort(keys)


def _decode(keys: np.ndarray, n_modes: int, radix: int) -> np.ndarray:
    out = np.empty((len(keys), n_modes), dtype=np.int8)
    rest = keys.copy()
    for m in range(n_modes - 1, -1, -1):
        out[:, m] = rest % radix
        rest //= radix
    return out


class Basis:
    """Sorted configuration list for one lattice spec.

    ``configs[i]`` is the i-th configuration; ``keys`` holds the matching
    integer encodings in ascending order.
    """

    def __init__(self, spec: LatticeSpec, configs: np.ndarray):
        self.spec = spec
        self.configs = np.ascontiguousarray(configs, dtype=np.int8)
        self.configs.setflags(write=False)
        self._weights = spec.radix ** np.arange(spec.n_modes - 1, -1, -1, dtype=np.int64)
        self.keys = self.encode(self.configs)
        self.keys.setflags(write=False)

    @property
    def dimension(self) -> int:
        return len(self.configs)

    def __len__(self):
        return len(self.configs)

    def __repr__(self):
        return f"Basis({self.spec.kind}, shape={self.spec.shape}, D={self.dimension})"

    def encode(self, configs: np.ndarray) -> np.ndarray:
        return np.asarray(configs, dtype=np.int64) @ self._weights

    def index_of(self, z) -> int | None:
        """Dense index of configuration `z`, or None if it is not in the basis."""
        z = np.asarray(z)
        if z.shape != (self.spec.n_modes,):
            raise ValueError(f"configuration needs {self.spec.n_modes} entries, got shape {z.shape}")
        if z.min() < 0 or z.max() >= self.spec.radix:
            return None
        idx = int(self.indices_of(z[None, :])[0])
        return None if idx < 0 else idx

    def indices_of(self, configs: np.ndarray) -> np.ndarray:
        """Vectorised lookup; -1 marks configurations outside the basis."""
        keys = self.encode(configs)
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        return np.where(self.keys[pos] == keys, pos, -1)

    def configuration_of(self, i: int) -> tuple[int, ...]:
        if not 0 <= i < self.dimension:
            raise IndexError(f"index {i} out of range for D={self.dimension}")
        return tuple(int(v) for v in self.configs[i])

    def label(self, i: int) -> str:
        return ",".join(str(v) for v in self.configs[i])


def parse_configuration(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.strip().split(","))


def enumerate_basis(spec: LatticeSpec) -> Basis:
    if spec.radix ** spec.n_modes >= 2**62:
        raise InvalidSpecError(f"{spec} is too large for 64-bit configuration keys")
    L = spec.n_sites
    if spec.kind == "bose-hubbard":
        configs = _compositions(L, spec.n_bosons, spec.n_bosons)
    elif spec.kind == "fermi-hubbard":
        up = _compositions(L, spec.n_up, 1)
        down = _compositions(L, spec.n_down, 1)
        configs = np.hstack([np.repeat(up, len(down), axis=0), np.tile(down, (len(up), 1))])
    elif spec.kind == "spin-chain":
        configs = _decode(np.arange(2**L, dtype=np.int64), L, 2)
    else:
        rows, cols = spec.grid
        configs = _decode(_blockade_keys(rows, cols, spec.periodic), L, 2)
    return Basis(spec, configs)
