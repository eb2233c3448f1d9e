"""Figures of merit: yield maps, sensitivity, coherent part, global coherence, epsilon."""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    master_equation_yields,
    field_frame_amplitudes,
    perturbative_phase_table,
    perturbative_yield,
    phase_stripped_yield,
    singlet_yield_spectral,
)
from .errors import DomainError
from .hamiltonian import EigenSystem, build_hyperfine, build_zeeman, eigendecompose
from .model import FieldSpec, RadicalPairSystem, ReactionSpec


class MapMode(str, enum.Enum):
    EXACT = "exact"
    #: exact evolution with the field-induced coherence phases removed
    PHASE_STRIPPED = "phase_stripped"
    #: phase-only evolution, amplitudes frozen at their t = 0 values
    PERTURBATIVE = "perturbative"


@dataclass(frozen=True)
class AngleGrid:
    thetas: np.ndarray
    phis: np.ndarray

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        phis = np.asarray(self.phis, dtype=float)
        if thetas.size < 2 or np.any(np.diff(thetas) <= 0) or np.any(np.diff(phis) <= 0):
            raise DomainError("grid angles must be strictly increasing")
        if thetas[0] != 0.0 or thetas[-1] != np.pi:
            raise DomainError("theta grid must include both poles")
        if phis.size < 1 or phis[0] < 0 or phis[-1] >= 2 * np.pi:
            raise DomainError("phi grid must lie in [0, 2pi)")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "phis", phis)

    @classmethod
    def regular(cls, n_theta: int = 19, n_phi: int = 36) -> "AngleGrid":
        """``n_theta`` polar angles from pole to pole, ``n_phi`` azimuths in [0, 2pi)."""
        return cls(np.linspace(0.0, np.pi, n_theta), 2 * np.pi * np.arange(n_phi) / n_phi)

    def refined(self, factor: int = 2) -> "AngleGrid":
        return AngleGrid.regular(factor * (self.thetas.size - 1) + 1, factor * self.phis.size)

    def directions(self) -> list[tuple[float, float]]:
        """Distinct directions; each pole appears once with phi = 0."""
        out = []
        for theta in self.thetas:
            if theta in (0.0, np.pi):
                out.append((float(theta), 0.0))
            else:
                out.extend((float(theta), float(phi)) for phi in self.phis)
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.thetas.size, self.phis.size


DEFAULT_GRID = AngleGrid.regular()


@dataclass(frozen=True)
class YieldMap:
    grid: AngleGrid
    values: np.ndarray

    def rows(self) -> list[tuple[float, float, float]]:
        """(theta, phi, Y_s) per distinct direction, poles once."""
        out = []
        for i, theta in enumerate(self.grid.thetas):
            if theta in (0.0, np.pi):
                out.append((float(theta), 0.0, float(self.values[i, 0])))
            else:
                out.extend(
                    (float(theta), float(phi), float(self.values[i, j])) for j, phi in enumerate(self.grid.phis)
                )
        return out


def _direction_yield(args) -> float:
    system, h0, eig0, rho0, b, reaction, mode, theta, phi = args
    field = FieldSpec(b, theta, phi)
    zeeman = build_zeeman(field, system.layout)
    closed = reaction.noiseless and reaction.equal_rates
    if mode is MapMode.EXACT:
        if closed:
            return singlet_yield_spectral(eigendecompose(h0 + zeeman), rho0, reaction.k_s)
        return master_equation_yields(h0 + zeeman, rho0, reaction, system.layout)[0]
    if not closed:
        raise DomainError(f"map mode {mode.value!r} requires equal rates and no noise")
    table = perturbative_phase_table(eig0, zeeman)
    if mode is MapMode.PERTURBATIVE:
        return perturbative_yield(table, rho0, reaction.k_s)
    return phase_stripped_yield(table, eigendecompose(h0 + zeeman), rho0, reaction.k_s)


def yield_map(
    system: RadicalPairSystem,
    rho0: np.ndarray,
    b: float,
    reaction: ReactionSpec,
    grid: AngleGrid = DEFAULT_GRID,
    mode: MapMode | str = MapMode.EXACT,
    parallel: int = 1,
    h0: np.ndarray | None = None,
) -> YieldMap:
    """Singlet yield for every grid direction at field strength ``b`` (uT).

    Uses the spectral formula when k_S = k_T and no noise is active, the
    master equation otherwise.
    """
    mode = MapMode(mode)
    if h0 is None:
        h0 = build_hyperfine(system)
    eig0 = eigendecompose(h0) if mode is not MapMode.EXACT else None
    dirs = grid.directions()
    jobs = [(system, h0, eig0, rho0, b, reaction, mode, th, ph) for th, ph in dirs]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            ys = list(pool.map(_direction_yield, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))
    else:
        ys = [_direction_yield(j) for j in jobs]
    values = np.empty(grid.shape)
    it = iter(ys)
    for i, theta in enumerate(grid.thetas):
        if theta in (0.0, np.pi):
            values[i, :] = next(it)
        else:
            for j in range(grid.phis.size):
                values[i, j] = next(it)
    return YieldMap(grid, values)


def sensitivity(ymap: YieldMap) -> float:
    """D_s = max - min of the singlet yield over field directions."""
    values = np.asarray(ymap.values if isinstance(ymap, YieldMap) else ymap, dtype=float)
    if values.size == 0:
        raise DomainError("empty yield map")
    return float(values.max() - values.min())


def coherent_part(rho0: np.ndarray, eig0: EigenSystem, degenerate: str = "block_traceless") -> np.ndarray:
    """GC: the part of rho0 that dephases under H_0, in the product basis.

    Between distinct levels this is r_mn for m != n.  Inside a block of
    (near-)degenerate levels no single eigenbasis is preferred, so the
    incoherent remainder is taken to be the only block state that is
    diagonal in every eigenbasis, Tr(P_b rho0) P_b / d_b
    (``degenerate="block_traceless"``).  ``degenerate="exclude"`` instead
    drops the whole block, which discards these coherences entirely.
    """
    if degenerate not in ("block_traceless", "exclude"):
        raise ValueError(f"unknown degenerate-block treatment {degenerate!r}")
    r = eig0.to_eigenbasis(rho0)
    for blk in eig0.degenerate_blocks():
        if degenerate == "exclude":
            r[blk, blk] = 0.0
        else:
            d = blk.stop - blk.start
            r[blk, blk] -= np.trace(r[blk, blk]) * np.eye(d) / d
    return eig0.from_eigenbasis(r)


def global_coherence(
    system: RadicalPairSystem,
    rho0: np.ndarray,
    k: float | None = None,
    reaction: ReactionSpec | None = None,
    h0: np.ndarray | None = None,
) -> float:
    """C = |singlet yield of the coherent part| at zero field.

    Pass ``k`` for the closed equal-rate form.  Pass ``reaction`` to
    propagate the coherent part under the same recombination and noise
    generator (the noisy generalization); it reduces to the closed form when
    the reaction is noiseless with equal rates.
    """
    if (k is None) == (reaction is None):
        raise ValueError("give exactly one of k or reaction")
    if h0 is None:
        h0 = build_hyperfine(system)
    eig0 = eigendecompose(h0)
    gc = coherent_part(rho0, eig0)
    if reaction is None:
        return abs(singlet_yield_spectral(eig0, gc, k))
    if reaction.noiseless and reaction.equal_rates:
        return abs(singlet_yield_spectral(eig0, gc, reaction.k_s))
    return abs(master_equation_yields(h0, gc, reaction, system.layout)[0])


@dataclass(frozen=True)
class EpsilonTrace:
    times: np.ndarray
    epsilon: np.ndarray
    weighted_mean: float
    uniform_mean: float


def epsilon_trace(
    system: RadicalPairSystem,
    rho0: np.ndarray,
    field: FieldSpec,
    times,
    k: float = 0.5,
    h0: np.ndarray | None = None,
) -> EpsilonTrace:
    """Field-induced change of the coherent amplitudes beyond the phase picture.

    epsilon(t) = [sum_{m != n} (|r^t_mn| - |r_mn|)^2]^(1/2), where r^t is the
    exact state in the (adapted) H_0 eigenbasis with the perturbative phases
    removed.  Only moduli are compared, so higher-order phase drift does not
    contribute.  The weighted mean uses weights proportional to k exp(-k t).
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(times < 0):
        raise DomainError("times must be non-empty and non-negative")
    if h0 is None:
        h0 = build_hyperfine(system)
    eig0 = eigendecompose(h0)
    zeeman = build_zeeman(field, system.layout)
    table = perturbative_phase_table(eig0, zeeman)
    eig = eigendecompose(h0 + zeeman)
    r0 = np.abs(table.to_basis(rho0))
    off = ~np.eye(r0.shape[0], dtype=bool)
    eps = np.empty(times.size)
    for i, t in enumerate(times):
        diff = np.abs(field_frame_amplitudes(table, eig, rho0, t)) - r0
        eps[i] = np.sqrt(np.sum(diff[off] ** 2))
    weights = k * np.exp(-k * times)
    weighted = float(np.dot(weights, eps) / weights.sum())
    return EpsilonTrace(times, eps, weighted, float(eps.mean()))
