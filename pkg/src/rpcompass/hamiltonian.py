"""Hyperfine and Zeeman Hamiltonians (rad/us) and a deterministic Hermitian eigensolver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalContractError
from .model import GAMMA_E, FieldSpec, Radical, RadicalPairSystem
from .spin import ELECTRON_A, ELECTRON_D, HilbertLayout, embed_spin, embed_many, spin_operators

DEGENERACY_TOL = 1e-7


def build_hyperfine(system: RadicalPairSystem) -> np.ndarray:
    """H_0 = sum over nuclei of s_k . T . I, converted from mT to rad/us."""
    layout = system.layout
    h = np.zeros((layout.dim, layout.dim), dtype=complex)
    electron = spin_operators(2)
    for offset, nucleus in enumerate(system.nuclei):
        site = offset + 2
        e_site = ELECTRON_D if nucleus.radical is Radical.D else ELECTRON_A
        nuc = spin_operators(nucleus.multiplicity)
        tensor = nucleus.tensor_array
        for u in range(3):
            # fold the tensor row into one nuclear operator: sum_v T_uv I_v
            coupled = sum(tensor[u, v] * nuc[v] for v in range(3))
            if not np.any(coupled):
                continue
            h += embed_many({e_site: electron[u], site: coupled}, layout)
    return GAMMA_E * h


def build_zeeman(field: FieldSpec, layout: HilbertLayout) -> np.ndarray:
    """B = -|gamma_e| b n.(s_D + s_A), with b converted from uT to mT."""
    n = field.direction
    out = np.zeros((layout.dim, layout.dim), dtype=complex)
    if field.b == 0:
        return out
    for site in (ELECTRON_D, ELECTRON_A):
        for comp, op in zip(n, embed_spin(site, layout)):
            if comp != 0.0:
                out += comp * op
    return -GAMMA_E * (field.b * 1e-3) * out


@dataclass(frozen=True)
class EigenSystem:
    """Eigen-decomposition H = V diag(E) V^dagger with ascending energies."""

    energies: np.ndarray
    vectors: np.ndarray
    degeneracy_tol: float = DEGENERACY_TOL

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def frequencies(self) -> np.ndarray:
        """omega_mn = E_m - E_n."""
        return self.energies[:, None] - self.energies[None, :]

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ op @ self.vectors

    def from_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors @ op @ self.vectors.conj().T

    def degenerate_mask(self) -> np.ndarray:
        """Boolean matrix, True where |E_m - E_n| <= degeneracy_tol."""
        return np.abs(self.frequencies) <= self.degeneracy_tol

    def degenerate_blocks(self) -> list[slice]:
        """Contiguous index ranges of (near-)degenerate levels."""
        blocks = []
        start = 0
        for i in range(1, self.dim + 1):
            if i == self.dim or self.energies[i] - self.energies[i - 1] > self.degeneracy_tol:
                blocks.append(slice(start, i))
                start = i
        return blocks

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.energies) @ self.vectors.conj().T


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude component is real positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    return vectors * (np.abs(pivots) / pivots)[None, :]


def check_hermitian(h: np.ndarray, tol: float = 1e-10) -> None:
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NumericalContractError(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    dev = float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0
    if dev > tol * scale:
        raise NumericalContractError(f"matrix is not Hermitian (max |H - H^dagger| = {dev:.3e})")


def eigendecompose(h: np.ndarray, degeneracy_tol: float = DEGENERACY_TOL) -> EigenSystem:
    check_hermitian(h)
    h = (h + h.conj().T) / 2
    energies, vectors = np.linalg.eigh(h)
    return EigenSystem(energies, fix_phases(vectors), degeneracy_tol)


def total_hamiltonian(system: RadicalPairSystem, field: FieldSpec, h0: np.ndarray | None = None) -> np.ndarray:
    if h0 is None:
        h0 = build_hyperfine(system)
    return h0 + build_zeeman(field, system.layout)
