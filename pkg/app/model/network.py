# app/model/network.py
"""Coupled power / gas distribution network data model.

Every quantity held here is already in per-unit (see ``case_loader`` for the
conversion from file units). Instances are immutable once loaded.
"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping

import numpy as np

TERMINAL_RULES = ("free", "equal-to-initial")
INITIAL_LINEPACK_RULES = ("midpoint", "steady")
FUEL_MODELS = ("inflow_scaled", "consistent")
DRIVE_TYPES = ("gas", "electric")


# ==============================
# Bases
# ==============================
@dataclass(frozen=True)
class Bases:
    power_mva: float = 1.0
    voltage_kv: float = 12.66
    pressure_bar: float = 1.0
    gas_flow: float = 1.0  # kSm3/h

    @property
    def impedance(self) -> float:
        return self.voltage_kv ** 2 / self.power_mva

    @property
    def current_ka(self) -> float:
        return self.power_mva / (math.sqrt(3.0) * self.voltage_kv)


# ==============================
# Power distribution network
# ==============================
@dataclass(frozen=True)
class Bus:
    id: str
    g_shunt: float = 0.0
    b_shunt: float = 0.0
    v_min: float = 0.95
    v_max: float = 1.05


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    i_max_sq: float = math.inf


@dataclass(frozen=True)
class Generator:
    """Non-gas DG with cost a*p^2 + b*p + c per period."""

    id: str
    bus: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0


@dataclass(frozen=True)
class GasFiredGenerator:
    id: str
    bus: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    beta: float  # power per unit gas flow


@dataclass(frozen=True)
class PowerLoad:
    id: str
    bus: str
    p: float
    q: float
    shape: str
    q_shape: str | None = None  # reactive profile, defaults to ``shape``

    @property
    def reactive_shape(self) -> str:
        return self.q_shape or self.shape


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    gas_generators: tuple[GasFiredGenerator, ...]
    loads: tuple[PowerLoad, ...]
    reference_bus: str

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def lines_into(self) -> dict[str, list[int]]:
        out = {b.id: [] for b in self.buses}
        for k, line in enumerate(self.lines):
            out.setdefault(line.to_bus, []).append(k)
        return out

    @cached_property
    def lines_out_of(self) -> dict[str, list[int]]:
        out = {b.id: [] for b in self.buses}
        for k, line in enumerate(self.lines):
            out.setdefault(line.from_bus, []).append(k)
        return out

    @cached_property
    def generators_at(self) -> dict[str, list[int]]:
        return _group(self.generators, "bus")

    @cached_property
    def gas_generators_at(self) -> dict[str, list[int]]:
        return _group(self.gas_generators, "bus")

    @cached_property
    def loads_at(self) -> dict[str, list[int]]:
        return _group(self.loads, "bus")


# ==============================
# Gas distribution network
# ==============================
@dataclass(frozen=True)
class PipeParameters:
    """Physical pipeline data in SI units (X, R in m; T in K; mu in J/(kg K))."""

    length: float
    diameter: float
    friction: float
    gas_constant: float
    temperature: float
    compressibility: float
    std_density: float
    unit_constant: float = 1.0


@dataclass(frozen=True)
class GasNode:
    id: str
    tau_min: float
    tau_max: float


@dataclass(frozen=True)
class Pipeline:
    """Passive pipeline. ``phi``, ``linepack_k`` and ``initial_linepack`` are per-unit."""

    id: str
    from_node: str
    to_node: str
    phi: float
    linepack_k: float
    initial_linepack: float
    params: PipeParameters | None = None
    phi_override: float | None = None        # file units, kept for serialisation
    linepack_override: float | None = None   # file units, kept for serialisation


@dataclass(frozen=True)
class Compressor:
    id: str
    from_node: str
    to_node: str
    ratio: float
    y_max: float
    alpha: float = 0.04
    drive: str = "electric"
    chi: float = 0.0


@dataclass(frozen=True)
class Retailer:
    id: str
    node: str
    y_min: float
    y_max: float
    price: str


@dataclass(frozen=True)
class GasLoad:
    id: str
    node: str
    flow: float
    shape: str


@dataclass(frozen=True)
class GasNetwork:
    nodes: tuple[GasNode, ...]
    pipelines: tuple[Pipeline, ...]
    compressors: tuple[Compressor, ...]
    retailers: tuple[Retailer, ...]
    loads: tuple[GasLoad, ...]
    fuel_model: str = "inflow_scaled"

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def pipes_from(self) -> dict[str, list[int]]:
        return _group(self.pipelines, "from_node")

    @cached_property
    def pipes_to(self) -> dict[str, list[int]]:
        return _group(self.pipelines, "to_node")

    @cached_property
    def compressors_from(self) -> dict[str, list[int]]:
        return _group(self.compressors, "from_node")

    @cached_property
    def compressors_to(self) -> dict[str, list[int]]:
        return _group(self.compressors, "to_node")

    @cached_property
    def retailers_at(self) -> dict[str, list[int]]:
        return _group(self.retailers, "node")

    @cached_property
    def loads_at(self) -> dict[str, list[int]]:
        return _group(self.loads, "node")


# ==============================
# Coupling + horizon
# ==============================
@dataclass(frozen=True)
class CouplingMap:
    gas_generator_nodes: Mapping[str, str] = field(default_factory=dict)
    compressor_buses: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Horizon:
    periods: int
    duration: float
    shapes: Mapping[str, tuple[float, ...]]
    prices: Mapping[str, tuple[float, ...]]  # $ per per-unit gas flow per period
    terminal_rule: str = "free"
    initial_linepack: str = "midpoint"  # default for pipelines without an explicit value

    def shape(self, name: str) -> np.ndarray:
        return np.asarray(self.shapes[name], dtype=float)

    def price(self, name: str) -> np.ndarray:
        return np.asarray(self.prices[name], dtype=float)


# ==============================
# Case
# ==============================
@dataclass(frozen=True)
class CoupledCase:
    name: str
    power: PowerNetwork
    gas: GasNetwork
    coupling: CouplingMap
    horizon: Horizon
    bases: Bases = Bases()

    @property
    def periods(self) -> int:
        return self.horizon.periods

    @cached_property
    def active_demand(self) -> np.ndarray:
        """(T, buses) active load per bus and period."""
        return self._bus_demand("p")

    @cached_property
    def reactive_demand(self) -> np.ndarray:
        return self._bus_demand("q")

    @cached_property
    def gas_demand(self) -> np.ndarray:
        """(T, nodes) gas load per node and period."""
        out = np.zeros((self.periods, len(self.gas.nodes)))
        for load in self.gas.loads:
            out[:, self.gas.node_index[load.node]] += load.flow * self.horizon.shape(load.shape)
        return out

    @cached_property
    def retailer_prices(self) -> np.ndarray:
        """(T, retailers) purchase price per period."""
        if not self.gas.retailers:
            return np.zeros((self.periods, 0))
        return np.column_stack([self.horizon.price(w.price) for w in self.gas.retailers])

    @cached_property
    def electric_compressors(self) -> list[int]:
        return [k for k, c in enumerate(self.gas.compressors) if c.drive == "electric"]

    @cached_property
    def coupled_buses(self) -> list[str]:
        """Buses serving at least one electric compressor, in bus order."""
        served = set(self.coupling.compressor_buses.values())
        return [b.id for b in self.power.buses if b.id in served]

    @cached_property
    def coupled_nodes(self) -> list[str]:
        """Gas nodes fuelling at least one gas-fired DG, in node order."""
        fuelled = set(self.coupling.gas_generator_nodes.values())
        return [n.id for n in self.gas.nodes if n.id in fuelled]

    @cached_property
    def compressors_at_bus(self) -> dict[str, list[int]]:
        index = {c.id: k for k, c in enumerate(self.gas.compressors)}
        out: dict[str, list[int]] = {}
        for comp_id, bus in self.coupling.compressor_buses.items():
            out.setdefault(bus, []).append(index[comp_id])
        return out

    @cached_property
    def gas_generators_at_node(self) -> dict[str, list[int]]:
        index = {g.id: k for k, g in enumerate(self.power.gas_generators)}
        out: dict[str, list[int]] = {}
        for gen_id, node in self.coupling.gas_generator_nodes.items():
            out.setdefault(node, []).append(index[gen_id])
        return out

    def truncated(self, periods: int) -> "CoupledCase":
        """Same case restricted to the first ``periods`` periods."""
        if not 1 <= periods <= self.periods:
            raise ValueError(f"periods must be in [1, {self.periods}], got {periods}")
        horizon = replace(
            self.horizon,
            periods=periods,
            shapes={k: tuple(v[:periods]) for k, v in self.horizon.shapes.items()},
            prices={k: tuple(v[:periods]) for k, v in self.horizon.prices.items()},
        )
        return replace(self, name=f"{self.name}-T{periods}", horizon=horizon)

    def _bus_demand(self, attr: str) -> np.ndarray:
        out = np.zeros((self.periods, len(self.power.buses)))
        for load in self.power.loads:
            shape = load.reactive_shape if attr == "q" else load.shape
            out[:, self.power.bus_index[load.bus]] += getattr(load, attr) * self.horizon.shape(shape)
        return out


def _group(items, attr: str) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for k, item in enumerate(items):
        out.setdefault(getattr(item, attr), []).append(k)
    return out
