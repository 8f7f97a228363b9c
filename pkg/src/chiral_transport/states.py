"""Initial node states, global embedding and partial traces.

Node kets live in the full ``2**N`` qubit product basis with qubit 0 as the
most significant digit and occupation 1 meaning excited, so for two qubits
the ordering is ``|gg>, |ge>, |eg>, |ee>``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, pi
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import BOSON, QUBIT, DimensionError, SpaceLayout

BELL_LABELS = ("psi+", "psi-", "phi+", "phi-")
FAMILIES = ("bell", "psi_alpha", "psi_beta", "dicke", "ground")

_ANGLE_SLACK = 1e-12


class ExcitationCapError(ValueError):
    """A state has support outside the excitation-capped basis."""


@dataclass(frozen=True)
class NodeStateSpec:
    """Recipe for a node-local pure state.

    ``n`` is the number of qubits; it is fixed to 2 for the Bell and
    two-parameter families.  ``k`` is the Dicke excitation number.
    """

    family: str = "bell"
    label: str = "psi+"
    theta: float = 0.0
    phi: float = 0.0
    n: int = 2
    k: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown state family {self.family!r}")
        if self.family == "bell" and self.label not in BELL_LABELS:
            raise ValueError(f"unknown Bell state {self.label!r}")
        if self.family in ("bell", "psi_alpha", "psi_beta") and self.n != 2:
            raise ValueError(f"{self.family} states are two-qubit states")
        if self.n < 1:
            raise ValueError("a node needs at least one qubit")
        if self.family == "dicke" and not 0 <= self.k <= self.n:
            raise ValueError(f"Dicke excitation k={self.k} outside [0, {self.n}]")
        if self.family == "psi_alpha":
            _check_range("theta", self.theta, 0.0, pi)
            _check_range("phi", self.phi, 0.0, 2 * pi)
        elif self.family == "psi_beta":
            _check_range("theta", self.theta, 0.0, 2 * pi)
            _check_range("phi", self.phi, -pi, pi)

    @classmethod
    def bell(cls, label: str) -> "NodeStateSpec":
        return cls("bell", label=label)

    @classmethod
    def psi_alpha(cls, theta: float, phi: float) -> "NodeStateSpec":
        return cls("psi_alpha", theta=theta, phi=phi)

    @classmethod
    def psi_beta(cls, theta: float, phi: float) -> "NodeStateSpec":
        return cls("psi_beta", theta=theta, phi=phi)

    @classmethod
    def dicke(cls, n: int, k: int) -> "NodeStateSpec":
        return cls("dicke", n=n, k=k)

    @classmethod
    def ground(cls, n: int) -> "NodeStateSpec":
        return cls("ground", n=n)

    def resized(self, n: int) -> "NodeStateSpec":
        """Same family on ``n`` qubits (Dicke and ground only)."""
        if n == self.n:
            return self
        if self.family not in ("dicke", "ground"):
            raise ValueError(f"{self.family} states cannot be resized to {n} qubits")
        return NodeStateSpec(self.family, n=n, k=min(self.k, n))


def _check_range(name, value, lo, hi):
    if not (np.isfinite(value) and lo - _ANGLE_SLACK <= value <= hi + _ANGLE_SLACK):
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


def _fix_phase(psi: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(psi) > 1e-14)
    if nz.size:
        first = psi[nz[0]]
        psi = psi * (abs(first) / first)
    return psi


def _index(bits: Sequence[int]) -> int:
    out = 0
    for b in bits:
        out = 2 * out + b
    return out


def make_node_state(spec: NodeStateSpec) -> np.ndarray:
    n = spec.n
    psi = np.zeros(2**n, dtype=complex)
    gg, ge, eg, ee = 0, 1, 2, 3
    r = 1 / np.sqrt(2)
    if spec.family == "bell":
        sign = 1.0 if spec.label.endswith("+") else -1.0
        if spec.label.startswith("psi"):
            psi[eg], psi[ge] = r, sign * r
        else:
            psi[gg], psi[ee] = r, sign * r
    elif spec.family == "psi_alpha":
        psi[eg] = np.cos(spec.theta)
        psi[ge] = np.exp(1j * spec.phi) * np.sin(spec.theta)
    elif spec.family == "psi_beta":
        psi[gg] = np.cos(spec.theta)
        psi[ee] = np.exp(1j * spec.phi) * np.sin(spec.theta)
    elif spec.family == "dicke":
        amp = 1 / np.sqrt(comb(n, spec.k))
        for excited in itertools.combinations(range(n), spec.k):
            bits = [0] * n
            for q in excited:
                bits[q] = 1
            psi[_index(bits)] = amp
    else:
        psi[0] = 1.0
    psi[np.abs(psi) < 1e-15] = 0.0
    return _fix_phase(psi / np.linalg.norm(psi))


def ket_excitation(psi: np.ndarray) -> int:
    """Largest number of excited qubits among configurations in the support."""
    nz = np.flatnonzero(np.abs(psi) > 1e-14)
    return max((bin(int(i)).count("1") for i in nz), default=0)


def node_partition(layout: SpaceLayout) -> tuple:
    """Subsystem indices ``(node1 qubits, cavity1, node2 qubits, cavity2)``.

    The layout must be ``[qubit]*N1 + [boson] + [qubit]*N2 + [boson]``.
    """
    kinds = [s.kind for s in layout.subsystems]
    bosons = [i for i, k in enumerate(kinds) if k == BOSON]
    if len(bosons) != 2 or bosons[1] != len(kinds) - 1 or bosons[0] == 0:
        raise DimensionError("layout is not a two-node qubits+cavity layout")
    if any(kinds[i] != QUBIT for i in range(len(kinds)) if i not in bosons):
        raise DimensionError("layout is not a two-node qubits+cavity layout")
    c1, c2 = bosons
    return tuple(range(c1)), c1, tuple(range(c1 + 1, c2)), c2


def embed_global(layout: SpaceLayout, node1: np.ndarray, node2: np.ndarray) -> np.ndarray:
    """Pure global density matrix with both cavities in vacuum."""
    q1, c1, q2, c2 = node_partition(layout)
    n1, n2 = len(q1), len(q2)
    node1, node2 = np.asarray(node1, complex), np.asarray(node2, complex)
    if node1.shape != (2**n1,) or node2.shape != (2**n2,):
        raise DimensionError(
            f"node kets {node1.shape}, {node2.shape} do not match {n1}+{n2} qubits")
    psi = np.zeros(layout.dim, dtype=complex)
    for i in np.flatnonzero(node1):
        bits1 = [int(b) for b in format(int(i), f"0{n1}b")]
        for j in np.flatnonzero(node2):
            bits2 = [int(b) for b in format(int(j), f"0{n2}b")]
            config = tuple(bits1) + (0,) + tuple(bits2) + (0,)
            try:
                idx = layout.index(config)
            except KeyError:
                raise ExcitationCapError(
                    f"configuration {config} exceeds excitation cap "
                    f"{layout.excitation_cap}") from None
            psi[idx] += node1[i] * node2[j]
    return np.outer(psi, psi.conj())


class Reduction:
    """Precomputed partial trace of a layout onto a subset of subsystems.

    The reduced matrix is produced in the basis of kept configurations that
    actually occur in the parent layout (``configs``).  ``full_index`` maps
    those onto the kept subsystems' full product basis, used by
    :meth:`to_full`.
    """

    def __init__(self, layout: SpaceLayout, keep: Sequence[int]):
        keep = tuple(int(k) for k in keep)
        if not keep:
            raise ValueError("partial trace must keep at least one subsystem")
        if len(set(keep)) != len(keep) or any(not 0 <= k < len(layout) for k in keep):
            raise IndexError(f"invalid kept subsystems {keep}")
        self.layout = layout
        self.keep = keep
        rest = [i for i in range(len(layout)) if i not in keep]
        basis = layout.basis
        kept_cfg = basis[:, keep]
        self.configs, kidx = np.unique(kept_cfg, axis=0, return_inverse=True)
        kidx = kidx.ravel()
        kept_dims = np.array([layout.subsystems[k].dim for k in keep])
        self.full_dim = int(np.prod(kept_dims))
        radix = np.array([int(np.prod(kept_dims[i + 1:])) for i in range(len(keep))])
        self.full_index = self.configs @ radix
        _, ridx = np.unique(basis[:, rest], axis=0, return_inverse=True) if rest else (
            None, np.zeros(layout.dim, dtype=np.int64))
        ridx = np.asarray(ridx).ravel()
        d, m = layout.dim, len(self.configs)
        order = np.argsort(ridx, kind="stable")
        groups = np.split(order, np.flatnonzero(np.diff(ridx[order])) + 1)
        src, dst = [], []
        for g in groups:
            a, b = np.meshgrid(g, g, indexing="ij")
            src.append((a * d + b).ravel())
            dst.append((kidx[a] * m + kidx[b]).ravel())
        src, dst = np.concatenate(src), np.concatenate(dst)
        self._map = sp.csr_matrix((np.ones(src.size), (dst, src)), shape=(m * m, d * d))

    @property
    def dim(self) -> int:
        return len(self.configs)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        """Reduce one matrix ``(d, d)`` or a stack ``(T, d, d)``."""
        rho = np.asarray(rho)
        d, m = self.layout.dim, self.dim
        if rho.shape[-2:] != (d, d):
            raise DimensionError(f"state shape {rho.shape} does not match dim {d}")
        flat = rho.reshape(-1, d * d)
        out = (self._map @ flat.T).T
        return out.reshape(rho.shape[:-2] + (m, m))

    def to_full(self, red: np.ndarray) -> np.ndarray:
        red = np.asarray(red)
        out = np.zeros(red.shape[:-2] + (self.full_dim, self.full_dim), dtype=complex)
        ix = self.full_index
        out[..., ix[:, None], ix[None, :]] = red
        return out

    def project_ket(self, psi: np.ndarray) -> np.ndarray:
        """Components of a full-product-basis ket on the reduced basis."""
        psi = np.asarray(psi)
        if psi.shape != (self.full_dim,):
            raise DimensionError(f"ket of shape {psi.shape}, expected ({self.full_dim},)")
        return psi[self.full_index]

    def project_matrix(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape != (self.full_dim, self.full_dim):
            raise DimensionError(f"matrix of shape {rho.shape}, expected {self.full_dim}")
        ix = self.full_index
        return rho[np.ix_(ix, ix)]


def partial_trace(rho: np.ndarray, layout: SpaceLayout, keep: Sequence[int]) -> np.ndarray:
    """Reduced state of ``keep`` in the kept subsystems' full product basis."""
    red = Reduction(layout, keep)
    return red.to_full(red(rho))
