"""Honeycomb lattices for the transverse-field Ising model.

Only graph structure matters here: a set of sites, the bonds between them and
a partition of the bonds into groups of pairwise disjoint bonds (the groups
that can be applied simultaneously in one layer of a Trotter step).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Lattice",
    "TfimParams",
    "LatticeError",
    "BUILTIN_LATTICES",
    "build_lattice",
    "periodic_honeycomb",
    "ring",
    "spectral_bound",
    "critical_beta",
]


class LatticeError(ValueError):
    """Raised for unknown, malformed or inconsistent lattice descriptions."""


def critical_beta() -> float:
    """Critical inverse temperature of the classical honeycomb Ising model (J=1)."""
    return math.log(2.0 + math.sqrt(3.0)) / 2.0


@dataclass(frozen=True)
class TfimParams:
    """Couplings of H = -J sum_<ij> Z_i Z_j + h_x sum_i X_i."""

    J: float = 1.0
    hx: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.J) and math.isfinite(self.hx)):
            raise ValueError(f"couplings must be finite, got J={self.J}, hx={self.hx}")


@dataclass(frozen=True)
class Lattice:
    n_sites: int
    bonds: tuple[tuple[int, int], ...]
    bond_groups: tuple[tuple[int, ...], ...]
    name: str = "custom"
    adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_sites < 1:
            raise LatticeError("n_sites must be positive")
        bonds = tuple(tuple(sorted((int(i), int(j)))) for i, j in self.bonds)
        object.__setattr__(self, "bonds", bonds)
        seen = set()
        for i, j in bonds:
            if i == j:
                raise LatticeError(f"bond ({i}, {j}) is a self-loop")
            if not (0 <= i < self.n_sites and 0 <= j < self.n_sites):
                raise LatticeError(f"bond ({i}, {j}) out of range for {self.n_sites} sites")
            if (i, j) in seen:
                raise LatticeError(f"duplicate bond ({i}, {j})")
            seen.add((i, j))

        groups = tuple(tuple(int(b) for b in g) for g in self.bond_groups)
        flat = [b for g in groups for b in g]
        if sorted(flat) != list(range(len(bonds))):
            raise LatticeError("bond groups must partition the bond list exactly")
        for g in groups:
            touched = [s for b in g for s in bonds[b]]
            if len(touched) != len(set(touched)):
                raise LatticeError(f"bonds in group {g} share a site")
        object.__setattr__(self, "bond_groups", groups)

        adj: list[list[int]] = [[] for _ in range(self.n_sites)]
        for i, j in bonds:
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adj))

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency])

    def bond_array(self) -> np.ndarray:
        """Bonds as an ``(n_bonds, 2)`` integer array."""
        return np.array(self.bonds, dtype=np.int64).reshape(-1, 2)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n_sites": self.n_sites,
            "n_bonds": self.n_bonds,
            "group_sizes": [len(g) for g in self.bond_groups],
            "degrees": sorted(set(int(d) for d in self.degrees())),
        }

    def to_json(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "bonds": [list(b) for b in self.bonds],
            "groups": [list(g) for g in self.bond_groups],
        }


def greedy_bond_groups(n_sites: int, bonds) -> list[list[int]]:
    """Partition bonds into matchings by first-fit edge colouring."""
    groups: list[list[int]] = []
    used: list[set[int]] = []
    for b, (i, j) in enumerate(bonds):
        for g, sites in zip(groups, used):
            if i not in sites and j not in sites:
                g.append(b)
                sites.update((i, j))
                break
        else:
            groups.append([b])
            used.append({i, j})
    return groups


def _from_grouped(name, n_sites, grouped_bonds) -> Lattice:
    bonds, groups = [], []
    for g in grouped_bonds:
        groups.append(list(range(len(bonds), len(bonds) + len(g))))
        bonds.extend(g)
    return Lattice(n_sites, tuple(bonds), tuple(map(tuple, groups)), name=name)


def periodic_honeycomb(lx: int, ly: int, name: str | None = None) -> Lattice:
    """Honeycomb torus of ``lx * ly`` unit cells (two sites each).

    Site index is ``2 * (cx + lx * cy) + sublattice``. Every site has degree 3
    as long as ``lx >= 2`` and ``ly >= 2`` with ``lx * ly >= 3``. Bonds are grouped by
    their orientation.
    """
    if lx < 1 or ly < 1:
        raise LatticeError("lx and ly must be positive")
    grouped = []
    for dx, dy in ((0, 0), (1, 0), (0, 1)):
        g = []
        for cy in range(ly):
            for cx in range(lx):
                a = 2 * (cx + lx * cy)
                b = 2 * (((cx + dx) % lx) + lx * ((cy + dy) % ly)) + 1
                g.append((a, b))
        grouped.append(g)
    return _from_grouped(name or f"honeycomb_torus_{lx}x{ly}", 2 * lx * ly, grouped)


def ring(n: int) -> Lattice:
    """Periodic chain of ``n`` sites (``n >= 3``)."""
    if n < 3:
        raise LatticeError("a ring needs at least 3 sites")
    bonds = [(i, (i + 1) % n) for i in range(n)]
    return Lattice(n, tuple(bonds), tuple(map(tuple, greedy_bond_groups(n, bonds))), name=f"ring{n}")


def _honeycomb10() -> Lattice:
    # Two fused hexagons; bond groups are the three parallel sets.
    return _from_grouped(
        "honeycomb10",
        10,
        [
            [(0, 1), (2, 3), (5, 6), (7, 8)],
            [(1, 2), (3, 4), (6, 7), (8, 9)],
            [(0, 9), (2, 7), (4, 5)],
        ],
    )


def _honeycomb16_flake() -> Lattice:
    # Open 2x2 patch of hexagons: 16 sites, 19 bonds.
    return _from_grouped(
        "honeycomb16_flake",
        16,
        [
            [(0, 5), (2, 7), (4, 9), (6, 11), (8, 13), (10, 15)],
            [(0, 1), (2, 3), (5, 6), (7, 8), (9, 10), (12, 13), (14, 15)],
            [(1, 2), (3, 4), (6, 7), (8, 9), (11, 12), (13, 14)],
        ],
    )


BUILTIN_LATTICES = {
    "honeycomb10": _honeycomb10,
    "honeycomb16": lambda: periodic_honeycomb(4, 2, name="honeycomb16"),
    "honeycomb16_flake": _honeycomb16_flake,
    "ring4": lambda: ring(4),
}


def load_lattice_file(path) -> Lattice:
    """Read a JSON lattice description (keys ``n_sites``, ``bonds``, optional ``groups``)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        n_sites = int(doc["n_sites"])
        bonds = [tuple(int(s) for s in b) for b in doc["bonds"]]
        if any(len(b) != 2 for b in bonds):
            raise LatticeError("every bond must have exactly two sites")
        groups = doc.get("groups")
    except (OSError, ValueError, KeyError, TypeError) as exc:
        if isinstance(exc, LatticeError):
            raise
        raise LatticeError(f"malformed lattice file {path}: {exc}") from exc
    if groups is None:
        groups = greedy_bond_groups(n_sites, bonds)
    return Lattice(n_sites, tuple(bonds), tuple(tuple(g) for g in groups), name=path.stem)


def build_lattice(name_or_file) -> Lattice:
    """Return a built-in lattice by name or load one from a JSON file."""
    if isinstance(name_or_file, Lattice):
        return name_or_file
    key = str(name_or_file)
    if key in BUILTIN_LATTICES:
        return BUILTIN_LATTICES[key]()
    if Path(key).suffix == ".json" or Path(key).is_file():
        if not Path(key).is_file():
            raise LatticeError(f"lattice file not found: {key}")
        return load_lattice_file(key)
    raise LatticeError(f"unknown lattice {key!r}; built-ins are {sorted(BUILTIN_LATTICES)}")


def spectral_bound(lattice: Lattice, params: TfimParams) -> float:
    """Upper bound ``|J| N_bonds + |h_x| N_sites`` on the spectral radius."""
    return abs(params.J) * lattice.n_bonds + abs(params.hx) * lattice.n_sites
