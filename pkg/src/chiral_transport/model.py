"""Two-node chiral waveguide network: Hamiltonian and jump operators.

Rates and frequencies are in units of ``gamma_R``; the Hamiltonian is
written in a frame rotating at ``frame_freq``.  Positions are fixed to
``x1 = 0`` and ``x2 = D`` so only the phase ``kD`` enters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    SpaceLayout, adjoint, boson, build_layout, canonical, lowering_op, number_op,
    op_add, op_mul, op_scale, qubit,
)
from .states import node_partition

TWO_PI = 2 * math.pi


class ConfigError(ValueError):
    """Physically invalid network description."""


def _as_tuple(value, n: int, name: str) -> tuple:
    if np.isscalar(value):
        out = (float(value),) * n
    else:
        out = tuple(float(v) for v in value)
    if len(out) != n:
        raise ConfigError(f"{name}: expected {n} values, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise ConfigError(f"{name}: values must be finite")
    return out


@dataclass(frozen=True)
class NodeConfig:
    """One node: ``n_qubits`` qubits coupled to a single cavity mode.

    Per-qubit fields accept a scalar (broadcast) or a sequence of length
    ``n_qubits``.  Couplings may be signed.
    """

    n_qubits: int = 2
    qubit_freqs: tuple = 0.0
    cavity_freq: float = 0.0
    couplings: tuple = 0.3
    qubit_decays: tuple = 0.0

    def __post_init__(self):
        if int(self.n_qubits) < 1:
            raise ConfigError("a node needs at least one qubit")
        n = int(self.n_qubits)
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "qubit_freqs", _as_tuple(self.qubit_freqs, n, "qubit_freqs"))
        object.__setattr__(self, "couplings", _as_tuple(self.couplings, n, "couplings"))
        object.__setattr__(self, "qubit_decays", _as_tuple(self.qubit_decays, n, "qubit_decays"))
        if not math.isfinite(self.cavity_freq):
            raise ConfigError("cavity_freq must be finite")
        object.__setattr__(self, "cavity_freq", float(self.cavity_freq))
        if any(g < 0 for g in self.qubit_decays):
            raise ConfigError("qubit decay rates must be >= 0")


@dataclass(frozen=True)
class NetworkConfig:
    node1: NodeConfig = field(default_factory=NodeConfig)
    node2: NodeConfig = field(default_factory=NodeConfig)
    gamma_L: float = 0.0
    gamma_R: float = 1.0
    kD: float = 0.0
    frame_freq: Optional[float] = None

    def __post_init__(self):
        for name in ("gamma_L", "gamma_R", "kD"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.gamma_L < 0 or self.gamma_R < 0:
            raise ConfigError("waveguide decay rates must be >= 0")
        if self.gamma_L + self.gamma_R <= 0:
            raise ConfigError("gamma_L + gamma_R must be positive")
        if not 0 <= self.kD < TWO_PI:
            raise ConfigError(f"kD={self.kD} outside [0, 2*pi)")

    @property
    def chi(self) -> float:
        return chirality(self.gamma_L, self.gamma_R)

    @property
    def reference_freq(self) -> float:
        if self.frame_freq is not None:
            return float(self.frame_freq)
        return self.node1.qubit_freqs[0]

    def with_couplings(self, g1, g2=None) -> "NetworkConfig":
        g2 = g1 if g2 is None else g2
        return replace(self,
                       node1=replace(self.node1, couplings=g1),
                       node2=replace(self.node2, couplings=g2))

    def with_qubit_decay(self, rate: float) -> "NetworkConfig":
        return replace(self,
                       node1=replace(self.node1, qubit_decays=rate),
                       node2=replace(self.node2, qubit_decays=rate))


def chirality(gamma_L: float, gamma_R: float) -> float:
    total = gamma_L + gamma_R
    if total <= 0:
        raise ConfigError("chirality undefined for gamma_L + gamma_R <= 0")
    return (gamma_R - gamma_L) / total


def gamma_left_for(chi: float, gamma_R: float = 1.0) -> float:
    """``gamma_L`` giving chirality ``chi`` at fixed ``gamma_R``."""
    if not -1 < chi <= 1:
        raise ConfigError(f"chi={chi} must lie in (-1, 1]")
    return gamma_R * (1 - chi) / (1 + chi)


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """``H`` plus jump operators with rates folded in as ``sqrt(rate)``."""

    layout: SpaceLayout
    hamiltonian: sp.csr_matrix
    collapse_ops: tuple
    config: Optional[NetworkConfig] = None

    @property
    def dim(self) -> int:
        return self.layout.dim


def network_layout(config: NetworkConfig, excitation_cap: Optional[int] = None,
                   cavity_cutoff: Optional[int] = None) -> SpaceLayout:
    """Layout ordered as node-1 qubits, cavity 1, node-2 qubits, cavity 2.

    The cavity cutoff defaults to the cap (or 1 without a cap), which is
    exact because no process raises the total excitation number.
    """
    if cavity_cutoff is None:
        cavity_cutoff = max(excitation_cap or 1, 1)
    subs = ([qubit()] * config.node1.n_qubits + [boson(cavity_cutoff)]
            + [qubit()] * config.node2.n_qubits + [boson(cavity_cutoff)])
    return build_layout(subs, excitation_cap)


def _check_layout(config: NetworkConfig, layout: SpaceLayout):
    try:
        q1, _, q2, _ = node_partition(layout)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(q1) != config.node1.n_qubits or len(q2) != config.node2.n_qubits:
        raise ConfigError(
            f"layout has {len(q1)}+{len(q2)} qubits, config has "
            f"{config.node1.n_qubits}+{config.node2.n_qubits}")


def build_hamiltonian(config: NetworkConfig, layout: SpaceLayout) -> sp.csr_matrix:
    _check_layout(config, layout)
    q1, c1, q2, c2 = node_partition(layout)
    w0 = config.reference_freq
    a1, a2 = lowering_op(layout, c1), lowering_op(layout, c2)
    terms = [sp.csr_matrix((layout.dim, layout.dim), dtype=complex)]
    for node, qubits, cav, a in ((config.node1, q1, c1, a1), (config.node2, q2, c2, a2)):
        if node.cavity_freq != w0:
            terms.append(op_scale(number_op(layout, cav), node.cavity_freq - w0))
        for q, w, g in zip(qubits, node.qubit_freqs, node.couplings):
            if w != w0:
                terms.append(op_scale(number_op(layout, q), w - w0))
            if g != 0:
                hop = op_mul(adjoint(a), lowering_op(layout, q))
                terms.append(op_scale(op_add(hop, adjoint(hop)), g))
    phase = np.exp(1j * config.kD)
    if config.gamma_L > 0:
        x = op_scale(op_mul(adjoint(a1), a2), phase)
        terms.append(op_scale(op_add(x, op_scale(adjoint(x), -1)), -0.5j * config.gamma_L))
    if config.gamma_R > 0:
        y = op_scale(op_mul(adjoint(a2), a1), phase)
        terms.append(op_scale(op_add(y, op_scale(adjoint(y), -1)), -0.5j * config.gamma_R))
    return op_add(*terms)


def build_collapse_ops(config: NetworkConfig, layout: SpaceLayout) -> list:
    _check_layout(config, layout)
    q1, c1, q2, c2 = node_partition(layout)
    a1, a2 = lowering_op(layout, c1), lowering_op(layout, c2)
    phase = np.exp(1j * config.kD)
    ops = []
    if config.gamma_L > 0:
        ops.append(op_scale(op_add(a1, op_scale(a2, phase)), math.sqrt(config.gamma_L)))
    if config.gamma_R > 0:
        ops.append(op_scale(op_add(a1, op_scale(a2, np.conj(phase))), math.sqrt(config.gamma_R)))
    for node, qubits in ((config.node1, q1), (config.node2, q2)):
        for q, rate in zip(qubits, node.qubit_decays):
            if rate > 0:
                ops.append(op_scale(lowering_op(layout, q), math.sqrt(rate)))
    return ops


def build_model(config: NetworkConfig, excitation_cap: Optional[int] = None,
                cavity_cutoff: Optional[int] = None) -> LindbladModel:
    layout = network_layout(config, excitation_cap, cavity_cutoff)
    return LindbladModel(layout, build_hamiltonian(config, layout),
                         tuple(build_collapse_ops(config, layout)), config)


def custom_model(layout: SpaceLayout, hamiltonian, collapse_ops=()) -> LindbladModel:
    """Model from explicit operators, e.g. a single damped cavity."""
    h = canonical(hamiltonian)
    ops = tuple(canonical(op) for op in collapse_ops)
    for op in (h,) + ops:
        if op.shape != (layout.dim, layout.dim):
            raise ConfigError(f"operator shape {op.shape} does not match dim {layout.dim}")
    return LindbladModel(layout, h, ops)
