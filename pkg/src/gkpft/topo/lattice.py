"""Periodic cubic lattice whose sites are parity checks and whose edges are node qubits.

This is the primal syndrome graph of a toric 3D cluster: each unit cell is a
check over its six faces, and each face qubit is shared by the two cells
it separates. Cells become lattice sites and face qubits become the edges
joining neighbouring sites. Edge ``3*site + axis`` points from ``site`` in the
positive ``axis`` direction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class RhgLattice:
    d: int

    def __post_init__(self):
        if self.d < 3 or self.d % 2 == 0:
            raise ValueError(f"d must be odd and at least 3, got {self.d}")

    @property
    def n_checks(self) -> int:
        return self.d ** 3

    @property
    def n_qubits(self) -> int:
        return 3 * self.d ** 3

    def site(self, x: int, y: int, z: int) -> int:
        d = self.d
        return ((x % d) * d + (y % d)) * d + (z % d)

    def coords(self, site: int) -> tuple[int, int, int]:
        d = self.d
        return site // (d * d), (site // d) % d, site % d

    @cached_property
    def endpoints(self) -> np.ndarray:
        """(n_qubits, 2) array of the two checks touched by each qubit."""
        d = self.d
        x, y, z = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
        x, y, z = x.ravel(), y.ravel(), z.ravel()
        src = (x * d + y) * d + z
        ends = np.empty((self.n_qubits, 2), dtype=np.int64)
        for axis, (dx, dy, dz) in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
            dst = (((x + dx) % d) * d + (y + dy) % d) * d + (z + dz) % d
            ends[axis::3, 0] = src
            ends[axis::3, 1] = dst
        return ends

    @cached_property
    def check_matrix(self) -> sparse.csc_matrix:
        """Checks x qubits incidence matrix over GF(2)."""
        e = self.endpoints
        rows = e.ravel()
        cols = np.repeat(np.arange(self.n_qubits), 2)
        data = np.ones(2 * self.n_qubits, dtype=np.uint8)
        return sparse.csc_matrix((data, (rows, cols)), shape=(self.n_checks, self.n_qubits))

    @cached_property
    def logical_mask(self) -> np.ndarray:
        """x-directed qubits crossing the sheet between x = d-1 and x = 0."""
        mask = np.zeros(self.n_qubits, dtype=bool)
        d = self.d
        for y in range(d):
            for z in range(d):
                mask[3 * self.site(d - 1, y, z)] = True
        return mask

    def syndrome(self, errors: np.ndarray) -> np.ndarray:
        errors = np.asarray(errors, dtype=np.uint8)
        s = np.zeros(self.n_checks, dtype=np.uint8)
        np.add.at(s, self.endpoints[:, 0], errors)
        np.add.at(s, self.endpoints[:, 1], errors)
        return s & 1

    def logical_parity(self, chain: np.ndarray) -> int:
        return int(np.asarray(chain, dtype=np.int64)[self.logical_mask].sum() & 1)

    def plaquette(self, site: int, axes: tuple[int, int] = (0, 1)) -> np.ndarray:
        """Boolean mask of the four edges of an elementary square: a closed, trivial cycle."""
        a, b = axes
        x, y, z = self.coords(site)
        step = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
        off_a = self.site(x + step[a][0], y + step[a][1], z + step[a][2])
        off_b = self.site(x + step[b][0], y + step[b][1], z + step[b][2])
        mask = np.zeros(self.n_qubits, dtype=bool)
        for q in (3 * site + a, 3 * site + b, 3 * off_a + b, 3 * off_b + a):
            mask[q] = True
        return mask


def build_lattice(d: int) -> RhgLattice:
    return RhgLattice(d)
