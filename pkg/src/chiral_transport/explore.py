"""Transport simulations, parameter sweeps and coupling optimisation."""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .dynamics import IntegratorSettings, evolve
from .measures import FIDELITY_KINDS, peak, transport_metrics
from .model import NetworkConfig, NodeConfig, build_model, gamma_left_for
from .states import NodeStateSpec, embed_global, ket_excitation, make_node_state

GOLDEN = (math.sqrt(5) - 1) / 2
METRICS = ("C_max", "F_max")


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimulationSpec:
    """Everything needed to run one transport simulation.

    ``initial2`` defaults to the ground state of node 2.  ``reference`` is
    the state node 2 is compared against; by default the node-1 initial
    state carried over to node 2's size.
    """

    config: NetworkConfig = field(default_factory=NetworkConfig)
    initial1: NodeStateSpec = field(default_factory=NodeStateSpec)
    initial2: Optional[NodeStateSpec] = None
    reference: Optional[NodeStateSpec] = None
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    basis: str = "sector"
    fidelity_kind: str = "root"

    def __post_init__(self):
        if self.basis not in ("sector", "full"):
            raise ValueError("basis must be 'sector' or 'full'")
        if self.fidelity_kind not in FIDELITY_KINDS:
            raise ValueError(f"fidelity_kind must be one of {FIDELITY_KINDS}")
        if self.initial1.n != self.config.node1.n_qubits:
            raise ValueError(f"node-1 state has {self.initial1.n} qubits, node has "
                             f"{self.config.node1.n_qubits}")
        if self.initial2 is not None and self.initial2.n != self.config.node2.n_qubits:
            raise ValueError("node-2 state size does not match node 2")

    @property
    def node2_state(self) -> NodeStateSpec:
        return self.initial2 or NodeStateSpec.ground(self.config.node2.n_qubits)

    @property
    def reference_state(self) -> NodeStateSpec:
        return self.reference or self.initial1.resized(self.config.node2.n_qubits)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class SimulationResult:
    times: np.ndarray
    concurrence_node1: Optional[np.ndarray]
    concurrence_node2: Optional[np.ndarray]
    fidelity_node2: np.ndarray
    c_peak: Optional[object]
    f_peak: object
    fidelity_at_c_peak: Optional[float]
    diagnostics: dict
    dim: int

    @property
    def C_max(self) -> float:
        return float("nan") if self.c_peak is None else self.c_peak.value

    @property
    def F_max(self) -> float:
        return self.f_peak.value

    def metric(self, name: str) -> float:
        if name not in METRICS:
            raise ValueError(f"unknown metric {name!r}")
        return self.C_max if name == "C_max" else self.F_max

    def peak_time(self, name: str) -> float:
        p = self.c_peak if name == "C_max" else self.f_peak
        return float("nan") if p is None else p.t_star


def simulate(spec: SimulationSpec) -> SimulationResult:
    psi1 = make_node_state(spec.initial1)
    psi2 = make_node_state(spec.node2_state)
    n_exc = ket_excitation(psi1) + ket_excitation(psi2)
    if spec.basis == "sector":
        model = build_model(spec.config, excitation_cap=n_exc)
    else:
        model = build_model(spec.config, cavity_cutoff=max(n_exc, 1))
    rho0 = embed_global(model.layout, psi1, psi2)
    traj = evolve(model, rho0, spec.settings)

    n1, n2 = spec.config.node1.n_qubits, spec.config.node2.n_qubits
    node1 = tuple(range(n1))
    node2 = tuple(range(n1 + 1, n1 + 1 + n2))
    target = transport_metrics(traj, model.layout, node2, make_node_state(spec.reference_state),
                               spec.fidelity_kind)
    c1 = None
    if n1 == 2:
        c1 = transport_metrics(traj, model.layout, node1, psi1, spec.fidelity_kind).concurrence
    f_peak = peak(target.fidelity, traj.times)
    c_peak = f_at_c = None
    if target.concurrence is not None:
        c_peak = peak(target.concurrence, traj.times)
        f_at_c = float(target.fidelity[c_peak.index])
    return SimulationResult(traj.times, c1, target.concurrence, target.fidelity, c_peak, f_peak,
                            f_at_c, traj.diagnostics, model.dim)


def baseline_spec(g: float = 0.3, **changes) -> SimulationSpec:
    """Chiral Bell-state transport with two qubits per node."""
    config = NetworkConfig().with_couplings(g)
    return replace(SimulationSpec(config=config), **changes)


def dicke_spec(n: int, g: float, k: int = 1, m: Optional[int] = None,
               g2: Optional[float] = None,
               settings: IntegratorSettings = IntegratorSettings()) -> SimulationSpec:
    """Transport of ``|^n D_k>`` from an n-qubit node to an m-qubit node."""
    m = n if m is None else m
    config = NetworkConfig(node1=NodeConfig(n, couplings=g),
                           node2=NodeConfig(m, couplings=g if g2 is None else g2))
    return SimulationSpec(config=config, initial1=NodeStateSpec.dicke(n, k), settings=settings)


# -- parameter setters -------------------------------------------------------

def _set_node(spec, which, **kw):
    cfg = spec.config
    node = getattr(cfg, which)
    return replace(spec, config=replace(cfg, **{which: replace(node, **kw)}))


def _set_g(spec, value):
    return replace(spec, config=spec.config.with_couplings(value))


def _set_angle(spec, name, value):
    init = spec.initial1
    if init.family not in ("psi_alpha", "psi_beta"):
        raise ValueError(f"{name} axis needs a psi_alpha or psi_beta initial state")
    return replace(spec, initial1=replace(init, **{name: value}))


def _set_chi(spec, value):
    cfg = spec.config
    return replace(spec, config=replace(cfg, gamma_L=gamma_left_for(value, cfg.gamma_R)))


def _set_kd(spec, value):
    return replace(spec, config=replace(spec.config, kD=float(value) % (2 * math.pi)))


SETTERS: dict = {
    "g": _set_g,
    "g1": lambda s, v: _set_node(s, "node1", couplings=v),
    "g2": lambda s, v: _set_node(s, "node2", couplings=v),
    "kD": _set_kd,
    "gamma_L": lambda s, v: replace(s, config=replace(s.config, gamma_L=v)),
    "chi": _set_chi,
    "Gamma": lambda s, v: replace(s, config=s.config.with_qubit_decay(v)),
    "theta": lambda s, v: _set_angle(s, "theta", v),
    "phi": lambda s, v: _set_angle(s, "phi", v),
}
STOCHASTIC_AXES = ("delta_qubit", "delta_cavity")
AXIS_NAMES = tuple(SETTERS) + STOCHASTIC_AXES


def detuned(spec: SimulationSpec, delta: float, which: str, key) -> SimulationSpec:
    """Add independent uniform draws on ``[-delta, delta]`` to qubit or cavity
    frequencies.  ``key`` seeds a counter-based Philox stream."""
    if which not in ("qubit", "cavity"):
        raise ValueError("which must be 'qubit' or 'cavity'")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    cfg = spec.config
    rng = np.random.Generator(np.random.Philox(key=np.array(key, dtype=np.uint64)))
    # keep the rotating frame fixed while frequencies move
    cfg = replace(cfg, frame_freq=cfg.reference_freq)
    n1, n2 = cfg.node1.n_qubits, cfg.node2.n_qubits
    if which == "qubit":
        shift = rng.uniform(-delta, delta, size=n1 + n2)
        node1 = replace(cfg.node1, qubit_freqs=tuple(np.add(cfg.node1.qubit_freqs, shift[:n1])))
        node2 = replace(cfg.node2, qubit_freqs=tuple(np.add(cfg.node2.qubit_freqs, shift[n1:])))
    else:
        shift = rng.uniform(-delta, delta, size=2)
        node1 = replace(cfg.node1, cavity_freq=cfg.node1.cavity_freq + shift[0])
        node2 = replace(cfg.node2, cavity_freq=cfg.node2.cavity_freq + shift[1])
    return replace(spec, config=replace(cfg, node1=node1, node2=node2))


def apply_axis(spec: SimulationSpec, name: str, value: float, key=(0, 0)) -> SimulationSpec:
    if name in SETTERS:
        return SETTERS[name](spec, value)
    if name in STOCHASTIC_AXES:
        return detuned(spec, value, name.split("_")[1], key)
    raise ValueError(f"unknown sweep axis {name!r}")


# -- sweeps ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    base: SimulationSpec
    axes: tuple
    metric: str = "C_max"
    seed: int = 0

    def __post_init__(self):
        axes = tuple((str(n), tuple(float(v) for v in vals)) for n, vals in self.axes)
        if not 1 <= len(axes) <= 2:
            raise ValueError("a sweep has one or two axes")
        for name, vals in axes:
            if name not in AXIS_NAMES:
                raise ValueError(f"unknown sweep axis {name!r}")
            if not vals or not all(math.isfinite(v) for v in vals):
                raise ValueError(f"axis {name!r} needs a nonempty finite grid")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        object.__setattr__(self, "axes", axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(v) for _, v in self.axes)


@dataclass
class SweepResult:
    axes: tuple
    values: dict
    peak_times: dict
    provenance: dict
    errors: dict = field(default_factory=dict)

    @property
    def metric(self) -> str:
        return self.provenance.get("metric", next(iter(self.values)))

    @property
    def table(self) -> np.ndarray:
        return self.values[self.metric]

    def argmax(self) -> tuple:
        return np.unravel_index(int(np.nanargmax(self.table)), self.table.shape)


def _point_spec(spec: SweepSpec, idx: tuple) -> SimulationSpec:
    point = spec.base
    flat = int(np.ravel_multi_index(idx, spec.shape))
    for (name, vals), i in zip(spec.axes, idx):
        point = apply_axis(point, name, vals[i], key=(flat, spec.seed))
    return point


def _run_point(args):
    sim, metric = args
    try:
        if callable(sim):
            sim = sim()
        res = simulate(sim)
    except Exception as exc:  # recorded per point, not fatal
        return float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"
    return res.metric(metric), res.peak_time(metric), None


def map_points(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Apply ``fn`` to independent items, in a process pool when ``workers > 1``.

    Results come back in input order.
    """
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def provenance(base: SimulationSpec, seed: int, **extra) -> dict:
    return {"version": __version__, "config_hash": base.digest(), "seed": int(seed),
            "integrator": base.settings.to_dict(), "fidelity_kind": base.fidelity_kind,
            "basis": base.basis, **extra}


def sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    shape = spec.shape
    indices = list(np.ndindex(*shape))
    jobs = [(partial(_point_spec, spec, idx), spec.metric) for idx in indices]
    out = map_points(_run_point, jobs, workers)
    table = np.full(shape, np.nan)
    times = np.full(shape, np.nan)
    errors = {}
    for idx, (value, t_star, err) in zip(indices, out):
        table[idx] = value
        times[idx] = t_star
        if err is not None:
            errors[idx] = err
    axes = tuple((name, np.array(vals)) for name, vals in spec.axes)
    prov = provenance(spec.base, spec.seed, metric=spec.metric,
                      axes={n: list(v) for n, v in spec.axes})
    return SweepResult(axes, {spec.metric: table}, {spec.metric: times}, prov, errors)


def distance_scan(chis: Sequence[float], kds: Sequence[float],
                  base: Optional[SimulationSpec] = None, metric: str = "C_max",
                  workers: int = 1) -> SweepResult:
    """Metric against ``kD`` for each chirality (``gamma_R`` held fixed)."""
    for chi in chis:
        if not 0 <= chi <= 1:
            raise ValueError(f"chi={chi} outside [0, 1]")
    for kd in kds:
        if not 0 <= kd < 2 * math.pi:
            raise ValueError(f"kD={kd} outside [0, 2*pi)")
    base = base or baseline_spec()
    return sweep(SweepSpec(base, (("chi", chis), ("kD", kds)), metric), workers)


# -- optimisation ------------------------------------------------------------

def golden_section_max(f: Callable[[float], float], a: float, b: float,
                       tol: float = 1e-3) -> tuple:
    """Maximise a unimodal ``f`` on ``[a, b]`` until the bracket is ``<= tol``.

    Returns ``(x, f(x))`` for the best point evaluated.
    """
    if not b > a:
        raise ValueError("golden-section bracket must satisfy a < b")
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    best = max((fc, c), (fd, d))
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
            best = max(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
            best = max(best, (fd, d))
    return best[1], best[0]


@dataclass
class CouplingOptimum:
    g_opt: float
    value: float
    evaluations: dict
    metric: str = "F_max"


def optimize_coupling(base: SimulationSpec, bracket: tuple = (0.05, 0.8),
                      coarse_points: int = 9, tol: float = 1e-3, metric: str = "F_max",
                      setter: Callable = _set_g, workers: int = 1) -> CouplingOptimum:
    """Coarse scan over ``bracket`` followed by golden-section refinement.

    The refinement runs between the neighbours of the best coarse point,
    which must be interior.
    """
    lo, hi = map(float, bracket)
    if not hi > lo or coarse_points < 3:
        raise ValueError("need lo < hi and at least 3 coarse points")
    cache: dict = {}

    def objective(g):
        g = float(g)
        if g not in cache:
            cache[g] = simulate(setter(base, g)).metric(metric)
        return cache[g]

    grid = np.linspace(lo, hi, coarse_points)
    values = map_points(_run_point, [(setter(base, float(g)), metric) for g in grid], workers)
    for g, (v, _, err) in zip(grid, values):
        if err is not None:
            raise OptimizationError(f"coarse scan failed at g={g}: {err}")
        cache[float(g)] = v
    i = int(np.argmax([cache[float(g)] for g in grid]))
    if i == 0 or i == coarse_points - 1:
        raise OptimizationError(
            f"no interior maximum in [{lo}, {hi}]: coarse optimum at g={grid[i]}")
    g_opt, value = golden_section_max(objective, float(grid[i - 1]), float(grid[i + 1]), tol)
    return CouplingOptimum(g_opt, value, dict(sorted(cache.items())), metric)


def optimize_dicke_coupling(n: int, k: int = 1, bracket: Optional[tuple] = None,
                            coarse_points: int = 7, tol: float = 1e-3,
                            settings: IntegratorSettings = IntegratorSettings(),
                            workers: int = 1) -> CouplingOptimum:
    """Optimal common coupling ``g1 = g2`` for ``|^n D_k>`` transport.

    The default bracket spans ``sqrt(n) * g`` in ``[0.15, 0.75]``.
    """
    if bracket is None:
        bracket = (0.15 / math.sqrt(n), 0.75 / math.sqrt(n))
    return optimize_coupling(dicke_spec(n, 0.3, k, settings=settings), bracket,
                             coarse_points, tol, "F_max", workers=workers)


# -- robustness and losses ---------------------------------------------------

@dataclass
class RobustnessStats:
    delta: float
    which: str
    values: np.ndarray
    seed: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def min(self) -> float:
        return float(np.min(self.values))

    @property
    def max(self) -> float:
        return float(np.max(self.values))


def w3_spec(settings: IntegratorSettings = IntegratorSettings()) -> SimulationSpec:
    return dicke_spec(3, 0.248, settings=settings)


def detuning_robustness(delta: float, which: str, samples: int = 50, seed: int = 0,
                        base: Optional[SimulationSpec] = None, metric: str = "F_max",
                        workers: int = 1) -> RobustnessStats:
    """Statistics of the metric over random static detunings.

    Sample ``s`` draws from the Philox stream keyed by ``(s, seed)``, so
    results do not depend on evaluation order.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    base = base or w3_spec()
    jobs = [(detuned(base, delta, which, (s, seed)), metric) for s in range(samples)]
    out = map_points(_run_point, jobs, workers)
    for value, _, err in out:
        if err is not None:
            raise RuntimeError(err)
    return RobustnessStats(delta, which, np.array([v for v, _, _ in out]), seed)


def loss_scan(gammas: Sequence[float], optimize_g: bool = True,
              base: Optional[SimulationSpec] = None, bracket: tuple = (0.05, 0.65),
              coarse_points: int = 13, tol: float = 1e-3, kD: float = math.pi,
              workers: int = 1) -> SweepResult:
    """Best fidelity against qubit decay rate, chiral vs non-chiral at ``kD``.

    With ``optimize_g`` the common coupling is re-optimised for every rate
    and both chiralities; otherwise the base coupling is used.
    """
    base = base or baseline_spec()
    gammas = [float(x) for x in gammas]
    if any(x < 0 for x in gammas):
        raise ValueError("qubit decay rates must be >= 0")
    gamma_r = base.config.gamma_R
    variants = {"chiral": replace(base.config, gamma_L=0.0, kD=kD),
                "nonchiral": replace(base.config, gamma_L=gamma_r, kD=kD)}
    values = {f"{m}_{v}": np.full(len(gammas), np.nan)
              for v in variants for m in ("F_max", "g_opt")}
    times = {f"F_max_{v}": np.full(len(gammas), np.nan) for v in variants}
    for i, rate in enumerate(gammas):
        for name, cfg in variants.items():
            spec = replace(base, config=cfg.with_qubit_decay(rate))
            if optimize_g:
                opt = optimize_coupling(spec, bracket, coarse_points, tol, workers=workers)
                g = opt.g_opt
            else:
                g = spec.config.node1.couplings[0]
            res = simulate(_set_g(spec, g))
            values[f"F_max_{name}"][i] = res.F_max
            values[f"g_opt_{name}"][i] = g
            times[f"F_max_{name}"][i] = res.f_peak.t_star
    prov = provenance(base, 0, metric="F_max_chiral", optimize_g=optimize_g, kD=kD,
                      bracket=list(bracket))
    return SweepResult((("Gamma", np.array(gammas)),), values, times, prov)
