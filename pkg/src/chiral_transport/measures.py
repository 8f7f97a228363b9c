"""Entanglement and transport metrics.

``concurrence``, ``fidelity`` and ``root_fidelity`` accept a single matrix
or a stack of matrices with shape ``(..., d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .hilbert import DimensionError, InvalidStateError
from .states import Reduction

_SY_SY = np.array([[0, 0, 0, -1],
                   [0, 0, 1, 0],
                   [0, 1, 0, 0],
                   [-1, 0, 0, 0]], dtype=complex)

FIDELITY_KINDS = ("root", "squared")


def _check_hermitian(rho, tol, what="state"):
    defect = np.abs(rho - np.swapaxes(rho.conj(), -1, -2)).max(initial=0.0)
    if defect > tol:
        raise InvalidStateError(f"{what} is not Hermitian (defect {defect:.3g})")


def _psd_sqrt(rho, pos_tol):
    w, v = np.linalg.eigh(0.5 * (rho + np.swapaxes(rho.conj(), -1, -2)))
    if w.min(initial=0.0) < -pos_tol:
        raise InvalidStateError(f"state has negative eigenvalue {w.min():.3g}")
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def concurrence(rho: np.ndarray, herm_tol: float = 1e-8, pos_tol: float = 1e-8):
    """Wootters concurrence of a two-qubit density matrix.

    The decreasing ``lambda_i`` are the square roots of the eigenvalues of
    ``rho @ rho_tilde``, ``rho_tilde = (sy x sy) conj(rho) (sy x sy)``.  They
    are computed as the singular values of ``sqrt(rho) (sy x sy)
    conj(sqrt(rho))``, which avoids square roots of round-off eigenvalues
    at rank-deficient states.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4):
        raise DimensionError(f"concurrence needs a 4x4 matrix, got {rho.shape[-2:]}")
    _check_hermitian(rho, herm_tol)
    s = _psd_sqrt(rho, pos_tol)
    lam = np.linalg.svd(s @ _SY_SY @ s.conj(), compute_uv=False)
    c = lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3]
    out = np.clip(c, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def root_fidelity(rho: np.ndarray, sigma: np.ndarray, herm_tol: float = 1e-8,
                  pos_tol: float = 1e-8):
    """``Tr sqrt(sqrt(rho) sigma sqrt(rho))``."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape[-2:] != sigma.shape[-2:] or rho.shape[-1] != rho.shape[-2]:
        raise DimensionError(f"fidelity operands {rho.shape} and {sigma.shape} differ")
    _check_hermitian(rho, herm_tol)
    _check_hermitian(sigma, herm_tol)
    s = _psd_sqrt(rho, pos_tol)
    inner = s @ sigma @ s
    ev = np.linalg.eigvalsh(0.5 * (inner + np.swapaxes(inner.conj(), -1, -2)))
    out = np.clip(np.sqrt(np.clip(ev, 0.0, None)).sum(axis=-1), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def fidelity(rho: np.ndarray, sigma: np.ndarray, herm_tol: float = 1e-8,
             pos_tol: float = 1e-8):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    return root_fidelity(rho, sigma, herm_tol, pos_tol) ** 2


@dataclass(frozen=True)
class PeakResult:
    t_star: float
    value: float
    refined: bool
    index: int


def peak(series: Sequence[float], times: Sequence[float]) -> PeakResult:
    """Grid maximum, refined by the parabola through its two neighbours.

    The refinement is used only for an interior maximum with strictly
    negative curvature, in which case the vertex lies within the
    neighbouring samples and its value is at least the grid maximum.
    """
    y = np.asarray(series, dtype=float)
    t = np.asarray(times, dtype=float)
    if y.size == 0:
        raise ValueError("peak of an empty series")
    if y.shape != t.shape:
        raise ValueError("series and times differ in length")
    i = int(np.argmax(y))
    if 0 < i < y.size - 1:
        t0, t1, t2 = t[i - 1:i + 2]
        y0, y1, y2 = y[i - 1:i + 2]
        # Newton divided differences
        d1 = (y1 - y0) / (t1 - t0)
        d2 = (y2 - y1) / (t2 - t1)
        curv = (d2 - d1) / (t2 - t0)
        if curv < 0:
            slope = d1 + curv * (t1 - t0)  # derivative at t1
            ts = t1 - slope / (2 * curv)
            value = y1 + slope * (ts - t1) + curv * (ts - t1) ** 2
            return PeakResult(float(ts), float(max(value, y1)), True, i)
    return PeakResult(float(t[i]), float(y[i]), False, i)


@dataclass
class TransportSeries:
    concurrence: Optional[np.ndarray]
    fidelity: np.ndarray


def transport_metrics(traj, layout, target_qubits: Sequence[int], reference,
                      fidelity_kind: str = "root") -> TransportSeries:
    """Concurrence and fidelity of a node's reduced qubit state along ``traj``.

    ``reference`` is a ket or density matrix in the node's full ``2**N``
    product basis.  The reduction is carried out in the basis of node
    configurations reachable in ``layout``; the reference is projected onto
    that basis, which leaves the fidelity unchanged because every reduced
    state is supported there.  Concurrence is reported for two-qubit nodes
    only.
    """
    if fidelity_kind not in FIDELITY_KINDS:
        raise ValueError(f"fidelity_kind must be one of {FIDELITY_KINDS}")
    if traj.states is None:
        raise ValueError("trajectory was recorded without states")
    red = Reduction(layout, target_qubits)
    reduced = red(traj.states)
    ref = np.asarray(reference, dtype=complex)
    if ref.ndim == 1:
        amp = red.project_ket(ref)
        overlap = np.real(np.einsum("i,tij,j->t", amp.conj(), reduced, amp))
        root = np.sqrt(np.clip(overlap, 0.0, 1.0))
    else:
        root = root_fidelity(red.project_matrix(ref), reduced)
    fid = root if fidelity_kind == "root" else root ** 2
    conc = None
    if len(target_qubits) == 2:
        conc = concurrence(red.to_full(reduced))
    return TransportSeries(conc, np.asarray(fid, dtype=float))
