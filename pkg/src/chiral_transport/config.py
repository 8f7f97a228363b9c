"""JSON experiment configuration: schema, defaults and conversion.

Every section is optional; an empty document (or one holding only
``task``) describes chiral transport of ``|Psi+>`` with two qubits per node,
``g = 0.3``, resonance, no qubit loss, ``kD = 0``, ``dt = 1e-3`` and
``t_max = 20`` (all in units of ``gamma_R``).  Unknown keys are rejected.
"""
from __future__ import annotations

import json
import math
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .dynamics import IntegratorSettings
from .explore import AXIS_NAMES, SimulationSpec
from .model import ConfigError, NetworkConfig, NodeConfig
from .states import BELL_LABELS, FAMILIES, NodeStateSpec

TASKS = ("simulate", "sweep", "optimize", "robustness", "loss_scan", "reproduce")
FIGURES = ("fig1b", "fig1c", "fig2a", "fig2b", "fig2c", "fig2d",
           "fig3a", "fig3b", "fig3c", "fig3d", "fig4a", "fig4b")

Scalars = Union[float, List[float]]


class ConfigSyntaxError(ValueError):
    pass


class ConfigSchemaError(ValueError):
    pass


class PhysicsError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NodeSection(_Strict):
    n_qubits: int = Field(2, ge=1)
    g: Scalars = 0.3
    qubit_freq: Scalars = 0.0
    cavity_freq: float = 0.0
    qubit_decay: Scalars = 0.0


class NetworkSection(_Strict):
    gamma_L: float = Field(0.0, ge=0)
    gamma_R: float = Field(1.0, ge=0)
    kD: float = Field(0.0, ge=0, lt=2 * math.pi)
    frame_freq: Optional[float] = None
    node1: NodeSection = NodeSection()
    node2: NodeSection = NodeSection()


class StateSection(_Strict):
    family: Literal[FAMILIES] = "bell"
    label: Literal[BELL_LABELS] = "psi+"
    theta: float = 0.0
    phi: float = 0.0
    n: Optional[int] = Field(None, ge=1)
    k: int = Field(1, ge=0)


class InitialSection(_Strict):
    node1: StateSection = StateSection()
    node2: Optional[StateSection] = None
    reference: Optional[StateSection] = None


class IntegratorSection(_Strict):
    dt: float = Field(1e-3, gt=0)
    t_max: float = Field(20.0, gt=0)
    record_stride: int = Field(10, ge=1)
    trace_tol: float = Field(1e-8, gt=0)
    herm_tol: float = Field(1e-10, gt=0)
    pos_tol: float = Field(1e-8, gt=0)


class AxisSection(_Strict):
    name: Literal[AXIS_NAMES]
    values: Optional[List[float]] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    num: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _grid(self):
        ranged = (self.start, self.stop, self.num)
        if self.values is None and None in ranged:
            raise ValueError("give either values or start/stop/num")
        if self.values is not None and any(v is not None for v in ranged):
            raise ValueError("values and start/stop/num are exclusive")
        if self.values is not None and not self.values:
            raise ValueError("values must be nonempty")
        return self

    def grid(self) -> List[float]:
        if self.values is not None:
            return list(self.values)
        if self.num == 1:
            return [self.start]
        step = (self.stop - self.start) / (self.num - 1)
        return [self.start + i * step for i in range(self.num)]


class SweepSection(_Strict):
    axes: List[AxisSection] = Field(min_length=1, max_length=2)
    metric: Literal["C_max", "F_max"] = "C_max"


class OptimizeSection(_Strict):
    bracket: Tuple[float, float] = (0.05, 0.8)
    coarse_points: int = Field(9, ge=3)
    tol: float = Field(1e-3, gt=0)
    metric: Literal["C_max", "F_max"] = "F_max"


class RobustnessSection(_Strict):
    delta: float = Field(0.1, ge=0)
    which: Literal["qubit", "cavity"] = "qubit"
    samples: int = Field(50, ge=1)


class LossScanSection(_Strict):
    gammas: List[float] = Field([0.0, 0.02, 0.05, 0.08, 0.1], min_length=1)
    optimize_g: bool = True
    bracket: Tuple[float, float] = (0.05, 0.65)
    coarse_points: int = Field(13, ge=3)
    tol: float = Field(1e-3, gt=0)
    kD: float = Field(math.pi, ge=0, lt=2 * math.pi)


class ReproduceSection(_Strict):
    figure: Literal[FIGURES]
    grid_points: Optional[int] = Field(None, ge=2)


class OutputSection(_Strict):
    dir: str = "results"
    format: Literal["csv"] = "csv"


class ExperimentConfig(_Strict):
    task: Literal[TASKS] = "simulate"
    network: NetworkSection = NetworkSection()
    initial: InitialSection = InitialSection()
    integrator: IntegratorSection = IntegratorSection()
    basis: Literal["sector", "full"] = "sector"
    fidelity: Literal["root", "squared"] = "root"
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    sweep: Optional[SweepSection] = None
    optimize: OptimizeSection = OptimizeSection()
    robustness: RobustnessSection = RobustnessSection()
    loss_scan: LossScanSection = LossScanSection()
    reproduce: Optional[ReproduceSection] = None
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _task_sections(self):
        if self.task == "sweep" and self.sweep is None:
            raise ValueError("task 'sweep' needs a 'sweep' section")
        if self.task == "reproduce" and self.reproduce is None:
            raise ValueError("task 'reproduce' needs a 'reproduce' section")
        return self

    def network_config(self) -> NetworkConfig:
        net = self.network

        def node(sec: NodeSection) -> NodeConfig:
            return NodeConfig(sec.n_qubits, qubit_freqs=sec.qubit_freq,
                              cavity_freq=sec.cavity_freq, couplings=sec.g,
                              qubit_decays=sec.qubit_decay)

        return NetworkConfig(node(net.node1), node(net.node2), net.gamma_L, net.gamma_R,
                             net.kD, net.frame_freq)

    def simulation_spec(self) -> SimulationSpec:
        """Core simulation description; raises :class:`PhysicsError`."""
        try:
            cfg = self.network_config()
            init = self.initial
            s1 = _state(init.node1, cfg.node1.n_qubits)
            s2 = None if init.node2 is None else _state(init.node2, cfg.node2.n_qubits)
            ref = None if init.reference is None else _state(init.reference,
                                                             cfg.node2.n_qubits)
            settings = IntegratorSettings(**self.integrator.model_dump())
            return SimulationSpec(cfg, s1, s2, ref, settings, self.basis, self.fidelity)
        except (ConfigError, ValueError) as exc:
            raise PhysicsError(str(exc)) from None


def _state(sec: StateSection, n_qubits: int) -> NodeStateSpec:
    n = sec.n if sec.n is not None else n_qubits
    return NodeStateSpec(sec.family, sec.label, sec.theta, sec.phi, n, sec.k)


def _field_path(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON config document.

    Raises :class:`ConfigSyntaxError` (with line/column),
    :class:`ConfigSchemaError` (with field paths) or :class:`PhysicsError`.
    """
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigSchemaError("<root>: config must be a JSON object")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        msgs = [f"{_field_path(e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise ConfigSchemaError("; ".join(msgs)) from None
    cfg.simulation_spec()
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    return cfg.model_dump_json(indent=2)
