"""Spin operators and tensor-product embedding.

Site ordering is fixed: electron D, electron A, then the nuclei of D and
the nuclei of A in declaration order.  All matrices are dense complex128.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import prod
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidMultiplicityError, LayoutError

ELECTRON_D = 0
ELECTRON_A = 1


class SpinOperatorTriple(NamedTuple):
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray


@lru_cache(maxsize=None)
def _spin_operators_cached(multiplicity: int) -> SpinOperatorTriple:
    s = (multiplicity - 1) / 2
    m = s - np.arange(multiplicity)
    # <m+1|S+|m> on the superdiagonal (basis ordered m = s ... -s)
    raise_elems = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    splus = np.diag(raise_elems, k=1).astype(complex)
    sminus = splus.conj().T
    sx = (splus + sminus) / 2
    sy = (splus - sminus) / 2j
    sz = np.diag(m).astype(complex)
    for op in (sx, sy, sz):
        op.setflags(write=False)
    return SpinOperatorTriple(sx, sy, sz)


def spin_operators(multiplicity: int) -> SpinOperatorTriple:
    """Angular-momentum matrices (hbar = 1) for a spin of the given multiplicity.

    The basis is ordered ``m = s, s-1, ..., -s``.  Returned arrays are read-only.
    """
    if int(multiplicity) != multiplicity or multiplicity < 2:
        raise InvalidMultiplicityError(f"multiplicity must be an integer >= 2, got {multiplicity!r}")
    return _spin_operators_cached(int(multiplicity))


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered site dimensions of the joint electron-nuclear space."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 2 or dims[0] != 2 or dims[1] != 2:
            raise LayoutError(f"layout must start with two electron sites of dimension 2, got {dims}")
        if any(d < 2 for d in dims):
            raise LayoutError(f"all site dimensions must be >= 2, got {dims}")

    @classmethod
    def from_nuclei(cls, multiplicities: Sequence[int]) -> "HilbertLayout":
        return cls((2, 2, *multiplicities))

    @property
    def dim(self) -> int:
        return prod(self.dims)

    @property
    def nuclear_dim(self) -> int:
        return prod(self.dims[2:])

    def __len__(self) -> int:
        return len(self.dims)


def embed(local_op: np.ndarray, site_index: int, layout: HilbertLayout) -> np.ndarray:
    """Place ``local_op`` on one site, identity elsewhere."""
    local_op = np.asarray(local_op)
    if not 0 <= site_index < len(layout.dims):
        raise LayoutError(f"site index {site_index} outside layout of {len(layout.dims)} sites")
    d = layout.dims[site_index]
    if local_op.shape != (d, d):
        raise LayoutError(
            f"operator of shape {local_op.shape} does not fit site {site_index} of dimension {d}"
        )
    left = prod(layout.dims[:site_index])
    right = prod(layout.dims[site_index + 1 :])
    out = np.kron(np.eye(left, dtype=complex), local_op.astype(complex, copy=False))
    return np.kron(out, np.eye(right, dtype=complex))


def embed_spin(site_index: int, layout: HilbertLayout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Sx, Sy, Sz) of one site on the full space."""
    ops = spin_operators(layout.dims[site_index])
    return tuple(embed(op, site_index, layout) for op in ops)


SINGLET_VECTOR = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)


def singlet_projector(layout: HilbertLayout) -> np.ndarray:
    """Q_S = |S><S| (x) identity on the nuclei."""
    electron = np.outer(SINGLET_VECTOR, SINGLET_VECTOR.conj())
    return np.kron(electron, np.eye(layout.nuclear_dim, dtype=complex))


def triplet_projector(layout: HilbertLayout) -> np.ndarray:
    return np.eye(layout.dim, dtype=complex) - singlet_projector(layout)


def embed_many(local_ops: dict[int, np.ndarray], layout: HilbertLayout) -> np.ndarray:
    """Tensor product of several local operators, identity on the remaining sites."""
    out = np.ones((1, 1), dtype=complex)
    for site, d in enumerate(layout.dims):
        op = local_ops.get(site)
        if op is None:
            op = np.eye(d, dtype=complex)
        elif np.shape(op) != (d, d):
            raise LayoutError(f"operator of shape {np.shape(op)} does not fit site {site} of dimension {d}")
        out = np.kron(out, op)
    return out
