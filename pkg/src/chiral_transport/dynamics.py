"""Lindblad time evolution: fixed-step RK4 and a dense expm oracle.

Superoperators act on column-stacked density matrices,
``vec(rho) = rho.ravel(order="F")``, so ``vec(A X B) = (B.T kron A) vec(X)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .hilbert import (
    DimensionError, total_number_op, validate_density_matrix,
)
from .model import LindbladModel

# Largest dim whose dense superoperator (dim**2 x dim**2) may be formed.
ORACLE_MAX_DIM = 64
# Up to this dim squared vec entries, RK4 steps use a dense step matrix.
DENSE_STEP_MAX_DIM = 24


class InvariantError(RuntimeError):
    """Evolution produced a state violating trace/Hermiticity/positivity."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float = 1e-3
    t_max: float = 20.0
    record_stride: int = 10
    trace_tol: float = 1e-8
    herm_tol: float = 1e-10
    pos_tol: float = 1e-8

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if not (self.t_max >= self.dt and math.isfinite(self.t_max)):
            raise ValueError("t_max must be finite and >= dt")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")
        for name in ("trace_tol", "herm_tol", "pos_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, int(math.ceil(self.t_max / self.dt - 1e-9)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    times: np.ndarray
    states: Optional[np.ndarray] = None
    observables: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)


def _check_dims(model: LindbladModel, rho: np.ndarray):
    if rho.shape != (model.dim, model.dim):
        raise DimensionError(f"state shape {rho.shape} does not match model dim {model.dim}")


def lindblad_rhs(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """``-i[H, rho] + sum_k (L rho L^+ - 1/2 {L^+ L, rho})``."""
    rho = np.asarray(rho, dtype=complex)
    _check_dims(model, rho)
    h = model.hamiltonian
    out = -1j * (h @ rho - (h.T @ rho.T).T)
    for op in model.collapse_ops:
        op_dag = op.conj().T
        ldl = (op_dag @ op)
        out += op @ (op_dag.T @ rho.T).T
        out -= 0.5 * (ldl @ rho + (ldl.T @ rho.T).T)
    return np.asarray(out)


def liouvillian_matrix(model: LindbladModel) -> np.ndarray:
    """Dense superoperator built column by column from :func:`lindblad_rhs`."""
    d = model.dim
    if d > ORACLE_MAX_DIM:
        raise ValueError(f"dense Liouvillian limited to dim <= {ORACLE_MAX_DIM}, got {d}")
    sup = np.empty((d * d, d * d), dtype=complex)
    unit = np.zeros((d, d), dtype=complex)
    for col in range(d * d):
        i, j = col % d, col // d
        unit[i, j] = 1.0
        sup[:, col] = lindblad_rhs(model, unit).ravel(order="F")
        unit[i, j] = 0.0
    return sup


def sparse_liouvillian(model: LindbladModel) -> sp.csr_matrix:
    """Same superoperator assembled from Kronecker products."""
    d = model.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    h = model.hamiltonian
    k = -1j * h
    jumps = sp.csr_matrix((d * d, d * d), dtype=complex)
    for op in model.collapse_ops:
        k = k - 0.5 * (op.conj().T @ op)
        jumps = jumps + sp.kron(op.conj(), op, format="csr")
    # K rho + rho K^+  ->  (I kron K) + (conj(K) kron I)
    sup = sp.kron(eye, k, format="csr") + sp.kron(k.conj(), eye, format="csr") + jumps
    sup.sum_duplicates()
    sup.eliminate_zeros()
    return sup.tocsr()


def evolve_exact(model: LindbladModel, rho0: np.ndarray, t: float) -> np.ndarray:
    """``rho(t) = unvec(expm(L t) vec(rho0))`` via Pade scaling and squaring."""
    rho0 = np.asarray(rho0, dtype=complex)
    _check_dims(model, rho0)
    if t == 0:
        return rho0.copy()
    prop = scipy.linalg.expm(liouvillian_matrix(model) * t)
    if not np.isfinite(prop).all():
        raise ArithmeticError("matrix exponential did not converge")
    d = model.dim
    return (prop @ rho0.ravel(order="F")).reshape((d, d), order="F")


def rk4_step_matrix(sup, dt: float) -> np.ndarray:
    """One classical RK4 step of ``dv/dt = sup @ v`` as an explicit matrix.

    For a linear autonomous system the four stages collapse to
    ``I + A + A^2/2 + A^3/6 + A^4/24`` with ``A = dt * sup``.
    """
    a = dt * (sup.toarray() if sp.issparse(sup) else np.asarray(sup))
    eye = np.eye(a.shape[0], dtype=complex)
    return eye + a @ (eye + a / 2 @ (eye + a / 3 @ (eye + a / 4)))


def _record_steps(settings: IntegratorSettings) -> np.ndarray:
    n, s = settings.n_steps, int(settings.record_stride)
    steps = list(range(0, n + 1, s))
    if steps[-1] != n:
        steps.append(n)
    return np.array(steps)


def _run_dense(sup, v, dt, steps):
    step = rk4_step_matrix(sup, dt)
    powers = {}
    out = [v]
    for prev, cur in zip(steps[:-1], steps[1:]):
        n = int(cur - prev)
        if n not in powers:
            powers[n] = np.linalg.matrix_power(step, n)
        v = powers[n] @ v
        if not np.isfinite(v).all():
            raise InvariantError("nonfinite state", int(cur))
        out.append(v)
    return out


def _run_sparse(sup, v, dt, steps):
    half = 0.5 * dt
    sixth = dt / 6.0
    out = [v]
    current = 0
    for target in steps[1:]:
        while current < target:
            k1 = sup @ v
            k2 = sup @ (v + half * k1)
            k3 = sup @ (v + half * k2)
            k4 = sup @ (v + dt * k3)
            v = v + sixth * (k1 + 2 * k2 + 2 * k3 + k4)
            current += 1
        if not np.isfinite(v).all():
            raise InvariantError("nonfinite state", int(target))
        out.append(v)
    return out


def invariant_mask(model: LindbladModel, sup, rho0: np.ndarray) -> Optional[np.ndarray]:
    """Vec entries of the excitation-difference blocks touched by ``rho0``.

    When ``H`` conserves the excitation number and every collapse operator
    lowers it by a fixed amount, entries ``(i, j)`` with different
    ``N_i - N_j`` never mix.  Returns ``None`` if the model couples blocks.
    """
    n = model.layout.total_excitation()
    diff = (n[:, None] - n[None, :]).ravel(order="F")
    present = np.unique(diff[np.abs(rho0).ravel(order="F") > 0])
    mask = np.isin(diff, present)
    if mask.all():
        return None
    coo = sup.tocoo()
    if np.any(mask[coo.row] != mask[coo.col]):
        return None
    return mask


def evolve(model: LindbladModel, rho0: np.ndarray,
           settings: IntegratorSettings = IntegratorSettings(),
           store_states: bool = True,
           observables: Optional[Mapping[str, sp.spmatrix]] = None,
           check: bool = True) -> Trajectory:
    """Integrate the master equation with fixed-step classical RK4.

    States are recorded every ``record_stride`` steps and at the final step.
    Only the excitation-difference blocks reached from ``rho0`` are
    integrated (see :func:`invariant_mask`).  Small problems apply each RK4
    step through its exact step matrix, raised to the record stride; larger
    ones evaluate the four stages with a sparse Liouvillian.  Both compute
    the same RK4 map.

    Raises :class:`InvariantError` (with the step index) if a recorded state
    violates the trace, Hermiticity or positivity tolerances, unless
    ``check`` is false.
    """
    d = model.dim
    rho0 = validate_density_matrix(rho0, d, herm_tol=settings.herm_tol,
                                   trace_tol=settings.trace_tol, pos_tol=settings.pos_tol)
    steps = _record_steps(settings)
    sup = sparse_liouvillian(model)
    v0 = rho0.ravel(order="F")
    mask = invariant_mask(model, sup, rho0)
    if mask is not None:
        sup = sup[mask][:, mask]
        v0 = v0[mask]
    if sup.shape[0] <= DENSE_STEP_MAX_DIM ** 2:
        vecs = _run_dense(sup, v0, settings.dt, steps)
    else:
        vecs = _run_sparse(sup, v0, settings.dt, steps)
    vecs = np.stack(vecs)
    if mask is not None:
        full = np.zeros((len(steps), d * d), dtype=complex)
        full[:, mask] = vecs
        vecs = full
    states = vecs.reshape(len(steps), d, d).transpose(0, 2, 1)
    times = steps * settings.dt

    n_tot = np.real(np.einsum("tii,i->t", states, model.layout.total_excitation()))
    obs = {"trace": np.real(np.trace(states, axis1=1, axis2=2)), "N_tot": n_tot}
    for name, op in (observables or {}).items():
        dense = op.toarray() if sp.issparse(op) else np.asarray(op)
        obs[name] = np.einsum("ij,tji->t", dense, states)

    tr_err = np.abs(obs["trace"] - 1)
    herm = np.abs(states - states.conj().transpose(0, 2, 1)).max(axis=(1, 2))
    sym = 0.5 * (states + states.conj().transpose(0, 2, 1))
    min_eig = np.linalg.eigvalsh(sym).min(axis=1)
    diag = {"trace_drift": float(tr_err.max()), "hermiticity": float(herm.max()),
            "min_eigenvalue": float(min_eig.min()),
            "max_excitation_increase": float(np.max(np.diff(n_tot), initial=0.0))}
    if check:
        for name, values, bad in (
                ("trace drift", tr_err, tr_err > settings.trace_tol),
                ("Hermiticity defect", herm, herm > settings.herm_tol),
                ("negative eigenvalue", min_eig, min_eig < -settings.pos_tol)):
            if bad.any():
                i = int(np.argmax(bad))
                raise InvariantError(f"{name} {values[i]:.3g}", int(steps[i]))
    return Trajectory(times, states if store_states else None, obs, diag)


def total_excitation(model: LindbladModel):
    return total_number_op(model.layout)
