"""Two-path interferometer: outcome, fringe contrast and coherence of a qubit probe."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

NORM_TOL = 1e-12


@dataclass(frozen=True)
class TwoStateAmplitudes:
    gamma_alpha: complex
    gamma_beta: complex

    def __post_init__(self):
        norm = abs(self.gamma_alpha) ** 2 + abs(self.gamma_beta) ** 2
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError("amplitudes", f"|gamma_alpha|^2 + |gamma_beta|^2 = {norm!r}, expected 1")

    @classmethod
    def from_population(cls, p_alpha: float, relative_phase: float = 0.0) -> "TwoStateAmplitudes":
        if not 0.0 <= p_alpha <= 1.0:
            raise ValidationError("p_alpha", f"must lie in [0, 1], got {p_alpha}")
        return cls(complex(np.sqrt(p_alpha)), np.sqrt(1.0 - p_alpha) * np.exp(1j * relative_phase))

    @property
    def weight(self) -> float:
        """|gamma_alpha|^2 |gamma_beta|^2."""
        return abs(self.gamma_alpha) ** 2 * abs(self.gamma_beta) ** 2

    def density(self, phase: float = 0.0) -> np.ndarray:
        a, b = self.gamma_alpha, self.gamma_beta
        off = a * np.conj(b) * np.exp(1j * phase)
        return np.array([[abs(a) ** 2, off], [np.conj(off), abs(b) ** 2]])

    def coherent_density(self) -> np.ndarray:
        rho = self.density()
        return rho - np.diag(np.diag(rho))


def interference_outcome(amps: TwoStateAmplitudes, phase) -> float | np.ndarray:
    """m = 1 - 2 |g_a|^2 |g_b|^2 (1 - cos phase)."""
    out = 1.0 - 2.0 * amps.weight * (1.0 - np.cos(phase))
    return float(out) if np.ndim(out) == 0 else out


def fringe_contrast(amps: TwoStateAmplitudes) -> float:
    # max cos - min cos over a full period is 2
    return 2.0 * amps.weight * 2.0


def toy_coherence(amps: TwoStateAmplitudes) -> float:
    """|Tr(rho^c M)| at zero phase, with M the projector on the input state."""
    return 2.0 * amps.weight


def outcome_from_density(amps: TwoStateAmplitudes, phase: float) -> float:
    """Tr(rho_phase M) evaluated by matrix algebra (cross-check of the closed form)."""
    psi = np.array([amps.gamma_alpha, amps.gamma_beta])
    m = np.outer(psi, psi.conj())
    return float(np.real(np.trace(amps.density(phase) @ m)))
