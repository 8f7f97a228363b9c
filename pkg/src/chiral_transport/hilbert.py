"""Composite qubit/boson Hilbert spaces and sparse operator algebra.

A :class:`SpaceLayout` enumerates occupation-number configurations of an
ordered list of subsystems, optionally restricted to a total excitation
number ``<= excitation_cap``.  Operators are ``scipy.sparse.csr_matrix``
objects kept in a canonical form (sorted indices, no duplicates, entries
below ``PRUNE_TOL`` removed).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import scipy.sparse as sp

PRUNE_TOL = 1e-15

QUBIT = "qubit"
BOSON = "boson"


class DimensionError(ValueError):
    """Operands live on spaces of different dimension."""


@dataclass(frozen=True)
class SubsystemSpec:
    kind: str
    cutoff: int = 1

    def __post_init__(self):
        if self.kind not in (QUBIT, BOSON):
            raise ValueError(f"unknown subsystem kind {self.kind!r}")
        if self.kind == BOSON and self.cutoff < 1:
            raise ValueError("boson cutoff must be >= 1")

    @property
    def dim(self) -> int:
        return 2 if self.kind == QUBIT else self.cutoff + 1


def qubit() -> SubsystemSpec:
    return SubsystemSpec(QUBIT)


def boson(cutoff: int) -> SubsystemSpec:
    return SubsystemSpec(BOSON, cutoff)


@dataclass(frozen=True, eq=False)
class SpaceLayout:
    """Basis of a composite space.

    ``basis`` is an integer array of shape ``(dim, n_subsystems)``; row ``i``
    holds the occupation numbers of basis state ``i``.  Rows are in
    lexicographic order.
    """

    subsystems: tuple
    excitation_cap: Optional[int]
    basis: np.ndarray = field(repr=False)
    index_of: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def local_dims(self) -> tuple:
        return tuple(s.dim for s in self.subsystems)

    def __len__(self) -> int:
        return len(self.subsystems)

    def index(self, config: Sequence[int]) -> int:
        try:
            return self.index_of[tuple(int(c) for c in config)]
        except KeyError:
            raise KeyError(f"configuration {tuple(config)} not in layout") from None

    def total_excitation(self) -> np.ndarray:
        return self.basis.sum(axis=1)

    def same_space(self, other: "SpaceLayout") -> bool:
        return (self.subsystems == other.subsystems
                and self.excitation_cap == other.excitation_cap)


def _configurations(dims: Sequence[int], cap: Optional[int]) -> Iterator[tuple]:
    """Yield occupation tuples in lexicographic order, pruned by ``cap``."""
    n = len(dims)

    def rec(pos, budget, prefix):
        if pos == n:
            yield tuple(prefix)
            return
        top = dims[pos] - 1
        if budget is not None:
            top = min(top, budget)
        for occ in range(top + 1):
            prefix.append(occ)
            yield from rec(pos + 1, None if budget is None else budget - occ, prefix)
            prefix.pop()

    yield from rec(0, cap, [])


def build_layout(subsystems: Iterable[SubsystemSpec],
                 excitation_cap: Optional[int] = None) -> SpaceLayout:
    subsystems = tuple(subsystems)
    if not subsystems:
        raise ValueError("a layout needs at least one subsystem")
    if excitation_cap is not None and excitation_cap < 0:
        raise ValueError("excitation_cap must be nonnegative")
    configs = list(_configurations([s.dim for s in subsystems], excitation_cap))
    basis = np.array(configs, dtype=np.int64).reshape(len(configs), len(subsystems))
    basis.setflags(write=False)
    index_of = {c: i for i, c in enumerate(configs)}
    return SpaceLayout(subsystems, excitation_cap, basis, index_of)


def canonical(op) -> sp.csr_matrix:
    """Return ``op`` as a pruned CSR matrix with sorted, unique indices."""
    m = sp.csr_matrix(op, dtype=complex, copy=True)
    m.sum_duplicates()
    m.data[np.abs(m.data) < PRUNE_TOL] = 0.0
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _check_index(layout: SpaceLayout, j: int):
    if not 0 <= j < len(layout.subsystems):
        raise IndexError(f"subsystem index {j} out of range for {len(layout)} subsystems")


def lowering_op(layout: SpaceLayout, subsystem_index: int) -> sp.csr_matrix:
    """Annihilation operator (``a`` for bosons, ``sigma^-`` for qubits).

    Targets outside the layout cannot occur since lowering reduces the
    total excitation number.
    """
    j = subsystem_index
    _check_index(layout, j)
    basis = layout.basis
    src = np.flatnonzero(basis[:, j] > 0)
    rows = np.empty(src.size, dtype=np.int64)
    for n, i in enumerate(src):
        target = list(basis[i])
        target[j] -= 1
        rows[n] = layout.index_of[tuple(target)]
    vals = np.sqrt(basis[src, j].astype(float))
    return canonical(sp.coo_matrix((vals, (rows, src)), shape=(layout.dim, layout.dim)))


def raising_op(layout: SpaceLayout, subsystem_index: int) -> sp.csr_matrix:
    return adjoint(lowering_op(layout, subsystem_index))


def number_op(layout: SpaceLayout, subsystem_index: int) -> sp.csr_matrix:
    _check_index(layout, subsystem_index)
    return canonical(sp.diags(layout.basis[:, subsystem_index].astype(complex)))


def total_number_op(layout: SpaceLayout) -> sp.csr_matrix:
    return canonical(sp.diags(layout.total_excitation().astype(complex)))


def identity_op(layout: SpaceLayout) -> sp.csr_matrix:
    return canonical(sp.identity(layout.dim, dtype=complex))


def _same_dims(ops):
    shapes = {op.shape for op in ops}
    if len(shapes) != 1:
        raise DimensionError(f"operator shapes differ: {sorted(shapes)}")


def op_add(*ops) -> sp.csr_matrix:
    if not ops:
        raise ValueError("op_add needs at least one operand")
    _same_dims(ops)
    out = sp.csr_matrix(ops[0], dtype=complex)
    for op in ops[1:]:
        out = out + op
    return canonical(out)


def op_scale(op, factor: complex) -> sp.csr_matrix:
    return canonical(complex(factor) * sp.csr_matrix(op, dtype=complex))


def op_mul(*ops) -> sp.csr_matrix:
    """Matrix product ``ops[0] @ ops[1] @ ...``."""
    if not ops:
        raise ValueError("op_mul needs at least one operand")
    _same_dims(ops)
    out = sp.csr_matrix(ops[0], dtype=complex)
    for op in ops[1:]:
        out = out @ op
    return canonical(out)


def adjoint(op) -> sp.csr_matrix:
    return canonical(sp.csr_matrix(op, dtype=complex).conj().T)


def commutator(a, b) -> sp.csr_matrix:
    return op_add(op_mul(a, b), op_scale(op_mul(b, a), -1.0))


def expectation(op, rho: np.ndarray) -> complex:
    """``Tr(op @ rho)``."""
    rho = np.asarray(rho)
    if op.shape != rho.shape:
        raise DimensionError(f"operator {op.shape} and state {rho.shape} differ")
    return complex(sp.csr_matrix(op).multiply(rho.T).sum())


def embedding(sub: SpaceLayout, full: SpaceLayout) -> sp.csr_matrix:
    """Isometry from a capped layout into a layout over the same subsystems.

    Columns index ``sub`` basis states, rows index ``full``.
    """
    if tuple(s.kind for s in sub.subsystems) != tuple(s.kind for s in full.subsystems):
        raise DimensionError("layouts have different subsystem structure")
    rows = np.array([full.index(c) for c in sub.basis], dtype=np.int64)
    cols = np.arange(sub.dim)
    return sp.csr_matrix((np.ones(sub.dim, dtype=complex), (rows, cols)),
                         shape=(full.dim, sub.dim))


class InvalidStateError(ValueError):
    """Matrix is not a valid density matrix at the requested tolerance."""


def density_diagnostics(rho: np.ndarray) -> dict:
    """Trace error, Hermiticity defect and minimum eigenvalue.

    Works on a single matrix or a stack; values are worst cases over the stack.
    """
    rho = np.asarray(rho)
    herm = np.abs(rho - np.swapaxes(rho.conj(), -1, -2)).max(initial=0.0)
    trace = np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1).max(initial=0.0)
    sym = 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))
    min_eig = float(np.linalg.eigvalsh(sym).min())
    return {"trace_error": float(trace), "hermiticity": float(herm), "min_eigenvalue": min_eig}


def validate_density_matrix(rho: np.ndarray, dim: Optional[int] = None, herm_tol: float = 1e-10,
                            trace_tol: float = 1e-9, pos_tol: float = 1e-8) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got shape {rho.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise DimensionError(f"density matrix of dim {rho.shape[0]}, expected {dim}")
    if not np.isfinite(rho).all():
        raise InvalidStateError("density matrix has nonfinite entries")
    diag = density_diagnostics(rho)
    if diag["hermiticity"] > herm_tol:
        raise InvalidStateError(f"not Hermitian: defect {diag['hermiticity']:.3g}")
    if diag["trace_error"] > trace_tol:
        raise InvalidStateError(f"trace differs from 1 by {diag['trace_error']:.3g}")
    if diag["min_eigenvalue"] < -pos_tol:
        raise InvalidStateError(f"negative eigenvalue {diag['min_eigenvalue']:.3g}")
    return rho
