"""Independent reference computations used only by the tests.

Nothing here calls the package's eigendecomposition or resolvent code.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

SPIN_ONE = {
    "x": np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / np.sqrt(2),
    "y": np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / np.sqrt(2),
    "z": np.diag([1.0, 0.0, -1.0]).astype(complex),
}


def kron_all(*ops):
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def singlet_projector_2e(nuclear_dim: int) -> np.ndarray:
    s = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
    return np.kron(np.outer(s, s.conj()), np.eye(nuclear_dim))


def quadrature_singlet_yield(h, rho0, q_s, k, n_periods=40.0, nodes=20, panel=None):
    """k * int_0^T Tr(Q_S rho(t)) exp(-k t) dt with rho(t) from matrix exponentials.

    Composite Gauss-Legendre on panels of width ~6/(spectral spread); the
    tail beyond T = n_periods/k is below exp(-n_periods).
    """
    spread = float(np.linalg.norm(h, 2)) * 2 + k
    if panel is None:
        panel = min(6.0 / spread, 0.5 / k)
    t_end = n_periods / k
    n_panels = int(np.ceil(t_end / panel))
    panel = t_end / n_panels
    x, w = np.polynomial.legendre.leggauss(nodes)
    offsets = (x + 1) * panel / 2
    weights = w * panel / 2
    step = expm(-1j * h * panel)
    node_props = np.stack([expm(-1j * h * s) for s in offsets])
    decay = weights * np.exp(-k * offsets)
    u = np.eye(h.shape[0], dtype=complex)
    total = 0.0
    for p in range(n_panels):
        v = node_props @ u
        # Tr(Q v rho0 v^dag) for all nodes at once
        vals = np.sum((q_s @ v @ rho0) * v.conj(), axis=(1, 2)).real
        total += np.exp(-k * p * panel) * float(decay @ vals)
        u = step @ u
    return k * total


def rotation_matrix(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * kx @ kx


def direction(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def angles_of(n):
    n = np.asarray(n, dtype=float) / np.linalg.norm(n)
    return float(np.arccos(np.clip(n[2], -1, 1))), float(np.arctan2(n[1], n[0]) % (2 * np.pi))


def spearman_by_ranks(a, b):
    """Pearson correlation of average ranks, no ties handling beyond averaging."""
    def ranks(v):
        order = np.argsort(v, kind="mergesort")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        return r

    ra, rb = ranks(np.asarray(a)), ranks(np.asarray(b))
    ra -= ra.mean()
    rb -= rb.mean()
    return float(ra @ rb / np.sqrt((ra @ ra) * (rb @ rb)))

