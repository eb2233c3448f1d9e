"""State evolution and reaction yields.

All density matrices passed in and out of this module are expressed in the
product (site) basis.  Eigen-basis representations are internal.

Three routes to the singlet yield are provided:

* :func:`singlet_yield_spectral` -- closed form for equal recombination
  rates without noise, from an eigen-decomposition of the total Hamiltonian.
* :func:`singlet_yield_ode` -- the Haberkorn + Lindblad master equation.
  The default route solves for the time-integrated state ``X = int rho dt``
  directly (``L[X] = -rho_0``), which is exact up to the linear-solver
  residual; ``method="rk4"`` time-steps the equation instead.
* the perturbative phase picture (:func:`perturbative_phase_table`,
  :func:`evolve_perturbative`, :func:`perturbative_yield`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, schur
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import DomainError, IntegrationError, NumericalContractError
from .hamiltonian import EigenSystem, build_hyperfine, build_zeeman, eigendecompose
from .model import FieldSpec, NoiseModel, RadicalPairSystem, ReactionSpec
from .spin import ELECTRON_A, ELECTRON_D, SINGLET_VECTOR, HilbertLayout, embed

IMAG_TOL = 1e-10
TRACE_CUTOFF = 1e-7
DENSE_LIMIT = 32

_SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
_SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
_SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def singlet_projector_for_dim(n: int) -> np.ndarray:
    if n % 4:
        raise NumericalContractError(f"dimension {n} is not a multiple of 4")
    return np.kron(np.outer(SINGLET_VECTOR, SINGLET_VECTOR.conj()), np.eye(n // 4, dtype=complex))


def _singlet_rows(vectors: np.ndarray) -> np.ndarray:
    """(<S| (x) 1) V as an (N/4) x N matrix, so that V^dag Q_S V = R^dag R."""
    n = vectors.shape[0]
    blocks = vectors.reshape(4, n // 4, n)
    return (blocks[1] - blocks[2]) / np.sqrt(2)


def projector_in_basis(vectors: np.ndarray) -> np.ndarray:
    rows = _singlet_rows(vectors)
    return rows.conj().T @ rows


# -- closed evolution --------------------------------------------------------


def evolve_closed(rho0: np.ndarray, eig: EigenSystem, t: float) -> np.ndarray:
    """rho(t) = sum_mn r_mn exp(-i w_mn t) |m><n| under the Hamiltonian of ``eig``."""
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    phases = np.exp(-1j * eig.energies * t)
    u = (eig.vectors * phases) @ eig.vectors.conj().T
    return u @ rho0 @ u.conj().T


def yield_kernel(omega: np.ndarray, k: float) -> np.ndarray:
    """int_0^inf k exp(-k t) exp(-i omega t) dt."""
    return k / (k + 1j * omega)


def _real_part(value: complex, what: str) -> float:
    if abs(value.imag) > IMAG_TOL:
        raise NumericalContractError(f"{what} has imaginary residue {value.imag:.3e}")
    return float(value.real)


def singlet_yield_spectral(eig: EigenSystem, rho0: np.ndarray, k: float) -> float:
    """Equal-rate singlet yield sum_mn r_mn (Q_S)_nm k / (k + i w_mn).

    ``eig`` must diagonalize the full Hamiltonian H_0 + B.  ``rho0`` may be a
    density matrix or a traceless coherent part; the latter gives a signed
    value.
    """
    if not k > 0:
        raise DomainError(f"recombination rate must be > 0, got {k}")
    r = eig.to_eigenbasis(rho0)
    q = projector_in_basis(eig.vectors)
    value = np.sum(r * q.T * yield_kernel(eig.frequencies, k))
    return _real_part(complex(value), "spectral singlet yield")


# -- master equation ---------------------------------------------------------


def build_dissipators(model: NoiseModel, layout: HilbertLayout) -> list[np.ndarray]:
    """Jump operators of one noise model, embedded on the full space."""
    model = NoiseModel(model)
    if model is NoiseModel.LOCAL_DEPHASING:
        return [embed(_SIGMA_Z, ELECTRON_D, layout), embed(_SIGMA_Z, ELECTRON_A, layout)]
    if model is NoiseModel.RELAXATION:
        return [
            embed(_SIGMA_PLUS, ELECTRON_D, layout),
            embed(_SIGMA_MINUS, ELECTRON_D, layout),
            embed(_SIGMA_PLUS, ELECTRON_A, layout),
            embed(_SIGMA_MINUS, ELECTRON_A, layout),
        ]
    qs = singlet_projector_for_dim(layout.dim)
    return [2 * qs - np.eye(layout.dim, dtype=complex)]


@dataclass(frozen=True)
class MasterEquation:
    """d rho/dt = A rho + rho A^dag + xi sum_k L_k rho L_k^dag.

    ``A = -iH - (k_S Q_S + k_T Q_T + xi sum_k L_k^dag L_k) / 2`` collects
    the coherent, Haberkorn and anticommutator parts.
    """

    a: np.ndarray
    jumps: tuple[np.ndarray, ...]
    xi: float
    q_s: np.ndarray
    k_s: float
    k_t: float

    @classmethod
    def build(cls, h: np.ndarray, reaction: ReactionSpec, layout: HilbertLayout) -> "MasterEquation":
        n = layout.dim
        q_s = singlet_projector_for_dim(n)
        q_t = np.eye(n, dtype=complex) - q_s
        a = -1j * h - 0.5 * (reaction.k_s * q_s + reaction.k_t * q_t)
        jumps: tuple[np.ndarray, ...] = ()
        xi = 0.0
        if not reaction.noiseless:
            xi = reaction.noise.xi
            jumps = tuple(build_dissipators(reaction.noise.model, layout))
            a = a - 0.5 * xi * sum(j.conj().T @ j for j in jumps)
        return cls(a, jumps, xi, q_s, reaction.k_s, reaction.k_t)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = self.a @ x + x @ self.a.conj().T
        for j in self.jumps:
            out += self.xi * (j @ x @ j.conj().T)
        return out

    def apply_hermitian(self, rho: np.ndarray) -> np.ndarray:
        m = self.a @ rho
        out = m + m.conj().T
        for j in self.jumps:
            out += self.xi * (j @ rho @ j.conj().T)
        return out

    def superoperator(self) -> np.ndarray:
        """Row-major vectorized generator: vec(A X B) = (A kron B^T) vec(X)."""
        n = self.dim
        eye = np.eye(n, dtype=complex)
        sup = np.kron(self.a, eye) + np.kron(eye, self.a.conj())
        for j in self.jumps:
            sup += self.xi * np.kron(j, j.conj())
        return sup

    def yields(self, x: np.ndarray) -> tuple[float, float]:
        """(Y_s, Y_t) from the time-integrated state ``x``."""
        ts = float(np.real(np.trace(self.q_s @ x)))
        return self.k_s * ts, self.k_t * (float(np.real(np.trace(x))) - ts)

    def total_rate_bound(self) -> float:
        return self.k_s + self.k_t + self.xi * sum(np.linalg.norm(j, 2) ** 2 for j in self.jumps)


class _SylvesterPreconditioner:
    """Solves A Y + Y A^dag = C using one Schur factorization of A."""

    def __init__(self, a: np.ndarray):
        self.t, self.z = schur(a, output="complex")

    def solve(self, c: np.ndarray) -> np.ndarray:
        c_t = self.z.conj().T @ c @ self.z
        y, scale, info = lapack.ztrsyl(self.t, self.t, c_t, trana="N", tranb="C")
        if info < 0:
            raise NumericalContractError(f"ztrsyl failed with info={info}")
        return self.z @ (y / scale) @ self.z.conj().T


def integrated_state(
    eq: MasterEquation, rho0: np.ndarray, method: str = "auto", tol: float = 1e-12
) -> np.ndarray:
    """X = int_0^inf rho(t) dt, i.e. the solution of L[X] = -rho0."""
    n = eq.dim
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "krylov"
    scale = max(1.0, float(np.linalg.norm(rho0)))
    if method == "dense":
        x = np.linalg.solve(eq.superoperator(), -rho0.reshape(-1)).reshape(n, n)
    elif method == "krylov":
        pre = _SylvesterPreconditioner(eq.a)
        if not eq.jumps:
            x = pre.solve(-rho0)
        else:
            # right-preconditioned: solve (L o P^-1) y = -rho0, then X = P^-1 y
            def matvec(v):
                y = v.reshape(n, n)
                return eq.apply(pre.solve(y)).reshape(-1)

            op = LinearOperator((n * n, n * n), matvec=matvec, dtype=complex)
            y, info = gmres(op, -rho0.reshape(-1), rtol=tol, atol=0.0, restart=200, maxiter=50)
            x = pre.solve(y.reshape(n, n))
    else:
        raise ValueError(f"unknown solver method {method!r}")
    residual = float(np.linalg.norm(eq.apply(x) + rho0)) / scale
    if residual > 1e-8:
        raise IntegrationError(f"integrated-state solve ({method}) did not converge", residual)
    return (x + x.conj().T) / 2 if _is_hermitian(rho0) else x


def _is_hermitian(m: np.ndarray) -> bool:
    return bool(np.allclose(m, m.conj().T, atol=1e-13, rtol=0))


@dataclass(frozen=True)
class MasterEquationResult:
    singlet_yield: float
    triplet_yield: float
    final_time: float
    final_trace: float
    steps: int
    dt: float
    max_hermiticity_error: float
    min_eigenvalue: float | None


def integrate_master_equation(
    eq: MasterEquation,
    h_norm: float,
    rho0: np.ndarray,
    dt: float | None = None,
    trace_cutoff: float = TRACE_CUTOFF,
    positivity_every: int = 0,
    max_time: float | None = None,
) -> MasterEquationResult:
    """Classical fixed-step RK4 on (rho, Y_s, Y_t) until Tr rho < trace_cutoff.

    ``dt`` defaults to min(0.02 / ||H||, 0.02 / total_rate).  When
    ``positivity_every`` is positive the minimum eigenvalue of rho is
    sampled every that many steps.
    """
    if dt is None:
        dt = 0.02 / max(h_norm, 1e-300)
        dt = min(dt, 0.02 / eq.total_rate_bound())
    if max_time is None:
        # far beyond any physical decay: exp(-k_min t) < 1e-30
        max_time = 70.0 / min(eq.k_s, eq.k_t)
    q_s = eq.q_s
    k_s, k_t = eq.k_s, eq.k_t

    def pops(r):
        ts = np.real(np.trace(q_s @ r))
        return k_s * ts, k_t * (np.real(np.trace(r)) - ts)

    rho = rho0.astype(complex, copy=True)
    ys = yt = 0.0
    t = 0.0
    steps = 0
    max_herm = 0.0
    min_eig = None
    f = eq.apply_hermitian
    while np.real(np.trace(rho)) >= trace_cutoff:
        if t > max_time:
            raise IntegrationError("trace did not decay below cutoff", float(np.real(np.trace(rho))))
        k1 = f(rho)
        r2 = rho + 0.5 * dt * k1
        k2 = f(r2)
        r3 = rho + 0.5 * dt * k2
        k3 = f(r3)
        r4 = rho + dt * k3
        k4 = f(r4)
        p1, p2, p3, p4 = pops(rho), pops(r2), pops(r3), pops(r4)
        ys += dt / 6 * (p1[0] + 2 * p2[0] + 2 * p3[0] + p4[0])
        yt += dt / 6 * (p1[1] + 2 * p2[1] + 2 * p3[1] + p4[1])
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(rho)):
            raise IntegrationError("state became non-finite", float("inf"))
        max_herm = max(max_herm, float(np.max(np.abs(rho - rho.conj().T))))
        rho = (rho + rho.conj().T) / 2
        t += dt
        steps += 1
        if positivity_every and steps % positivity_every == 0:
            lo = float(np.linalg.eigvalsh(rho)[0])
            min_eig = lo if min_eig is None else min(min_eig, lo)
    return MasterEquationResult(
        float(ys), float(yt), t, float(np.real(np.trace(rho))), steps, dt, max_herm, min_eig
    )


def integrate_with_halving(
    eq: MasterEquation,
    h_norm: float,
    rho0: np.ndarray,
    tol: float = 1e-7,
    max_halvings: int = 4,
    **kwargs,
) -> MasterEquationResult:
    """RK4 with a step-halving convergence check on the singlet yield."""
    dt = min(0.02 / max(h_norm, 1e-300), 0.02 / eq.total_rate_bound())
    coarse = integrate_master_equation(eq, h_norm, rho0, dt=dt, **kwargs)
    diff = float("inf")
    for _ in range(max_halvings):
        dt /= 2
        fine = integrate_master_equation(eq, h_norm, rho0, dt=dt, **kwargs)
        diff = abs(fine.singlet_yield - coarse.singlet_yield)
        if diff <= tol:
            return fine
        coarse = fine
    raise IntegrationError("step halving did not converge", diff)


def singlet_yield_ode(
    system: RadicalPairSystem,
    field: FieldSpec,
    reaction: ReactionSpec,
    rho0: np.ndarray,
    method: str = "auto",
    h0: np.ndarray | None = None,
) -> tuple[float, float]:
    """(Y_s, Y_t) from the master equation with Haberkorn recombination and noise.

    ``method`` is ``"dense"``, ``"krylov"``, ``"rk4"`` or ``"auto"``.
    """
    if h0 is None:
        h0 = build_hyperfine(system)
    h = h0 + build_zeeman(field, system.layout)
    return master_equation_yields(h, rho0, reaction, system.layout, method)


def master_equation_yields(
    h: np.ndarray, rho0: np.ndarray, reaction: ReactionSpec, layout: HilbertLayout, method: str = "auto"
) -> tuple[float, float]:
    eq = MasterEquation.build(h, reaction, layout)
    if method == "rk4":
        res = integrate_with_halving(eq, float(np.linalg.norm(h, 2)), rho0)
        return res.singlet_yield, res.triplet_yield
    return eq.yields(integrated_state(eq, rho0, method))


# -- perturbative phase picture ----------------------------------------------


@dataclass(frozen=True)
class PhaseTable:
    """Bare and first-order field-induced transition frequencies (rad/us).

    ``vectors`` is the eigenbasis of H_0 adapted to the perturbation: inside
    each degenerate block it also diagonalizes the projected field term.
    """

    omega0: np.ndarray
    omegaB: np.ndarray
    energies: np.ndarray
    shifts: np.ndarray
    vectors: np.ndarray

    def to_basis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ op @ self.vectors

    def from_basis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors @ op @ self.vectors.conj().T


def perturbative_phase_table(eig0: EigenSystem, zeeman: np.ndarray) -> PhaseTable:
    vectors = eig0.vectors.copy()
    shifts = np.zeros(eig0.dim)
    for block in eig0.degenerate_blocks():
        v = vectors[:, block]
        projected = v.conj().T @ zeeman @ v
        projected = (projected + projected.conj().T) / 2
        if block.stop - block.start == 1:
            shifts[block] = projected.real.ravel()
            continue
        w, u = np.linalg.eigh(projected)
        shifts[block] = w
        vectors[:, block] = v @ u
    omega0 = eig0.frequencies
    omega_b = shifts[:, None] - shifts[None, :]
    return PhaseTable(omega0, omega_b, eig0.energies.copy(), shifts, vectors)


def evolve_perturbative(
    rho0: np.ndarray, table: PhaseTable, t: float, include_field_phases: bool = True
) -> np.ndarray:
    """Phase-only evolution: amplitudes frozen, phases from the table."""
    if rho0.shape != table.omega0.shape:
        raise NumericalContractError(
            f"state of shape {rho0.shape} does not match phase table of dimension {table.omega0.shape[0]}"
        )
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    omega = table.omega0 + table.omegaB if include_field_phases else table.omega0
    r = table.to_basis(rho0)
    return table.from_basis(r * np.exp(-1j * omega * t))


def perturbative_yield(table: PhaseTable, rho0: np.ndarray, k: float, include_field_phases: bool = True) -> float:
    """Equal-rate singlet yield of the phase-only evolution."""
    if not k > 0:
        raise DomainError(f"recombination rate must be > 0, got {k}")
    omega = table.omega0 + table.omegaB if include_field_phases else table.omega0
    r = table.to_basis(rho0)
    q = projector_in_basis(table.vectors)
    return _real_part(complex(np.sum(r * q.T * yield_kernel(omega, k))), "perturbative yield")


def field_frame_amplitudes(table: PhaseTable, eig: EigenSystem, rho0: np.ndarray, t: float) -> np.ndarray:
    """Exact r^t_mn: the exactly evolved state in the adapted H_0 basis with the
    phases (omega0 + omegaB) t removed."""
    u = (eig.vectors * np.exp(-1j * eig.energies * t)) @ eig.vectors.conj().T
    rho_t = table.to_basis(u @ rho0 @ u.conj().T)
    return rho_t * np.exp(1j * (table.omega0 + table.omegaB) * t)


def phase_stripped_yield(table: PhaseTable, eig: EigenSystem, rho0: np.ndarray, k: float) -> float:
    """Equal-rate singlet yield of the exact evolution with the field-induced
    phases removed (amplitude changes kept).

    Closed form: sum_{mnpq} Q_nm G_mp rho'_pq G*_nq k / (k + i(w_pq - wB_mn))
    with G = V^dag W linking the adapted H_0 basis V to the eigenbasis W of
    the full Hamiltonian.  Cost is O(N^4).
    """
    if not k > 0:
        raise DomainError(f"recombination rate must be > 0, got {k}")
    g = table.vectors.conj().T @ eig.vectors
    rho_p = eig.to_eigenbasis(rho0)
    q = projector_in_basis(table.vectors)
    omega = eig.frequencies
    g_conj = g.conj()
    total = 0.0 + 0.0j
    for m in range(g.shape[0]):
        r_m = g[m, :, None] * rho_p  # [p, q]
        kern = yield_kernel(omega[None, :, :] - table.omegaB[m, :, None, None], k)  # [n, p, q]
        s = np.einsum("pq,nq,npq->n", r_m, g_conj, kern, optimize=True)
        total += np.dot(q[:, m], s)
    return _real_part(complex(total), "phase-stripped yield")


def eigensystem_for(system: RadicalPairSystem, field: FieldSpec, h0: np.ndarray | None = None) -> EigenSystem:
    if h0 is None:
        h0 = build_hyperfine(system)
    return eigendecompose(h0 + build_zeeman(field, system.layout))
