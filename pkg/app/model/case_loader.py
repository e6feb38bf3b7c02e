# app/model/case_loader.py
"""Case-file reading / writing.

Files hold quantities in engineering units (MW, ohm, kA, bar, kSm3/h, $); the
in-memory ``CoupledCase`` is per-unit. See docs/case_schema.md.
"""

import json
import logging
import math
import os
from dataclasses import replace

from app.config import settings
from app.config.aws_s3 import is_s3_uri, read_json_from_s3, split_s3_uri
from app.errors import CaseParseError, CaseReferenceError, CaseSchemaError, CaseTopologyError, OracleError
from app.model.coefficients import SM3_PER_PA_TO_KSM3_PER_BAR, linepack_coefficient, weymouth_coefficient
from app.model.network import (
    Bases,
    Bus,
    Compressor,
    CoupledCase,
    CouplingMap,
    GasFiredGenerator,
    GasLoad,
    GasNetwork,
    GasNode,
    Generator,
    Horizon,
    Line,
    PipeParameters,
    Pipeline,
    PowerLoad,
    PowerNetwork,
    Retailer,
)
from app.model.topology import validate_topology
from app.oracle.forward import steady_linepack

logger = logging.getLogger(__name__)

_MISSING = object()


# ==============================
# Public API
# ==============================
def load_case(path: str, validate: bool = True) -> CoupledCase:
    """Load a case file (local path or s3://bucket/key) into a per-unit ``CoupledCase``."""
    if is_s3_uri(path):
        bucket, key = split_s3_uri(path)
        data = read_json_from_s3(bucket, key)
    else:
        if not os.path.exists(path):
            raise FileNotFoundError(f"case file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as e:
            raise CaseParseError(f"{path}: {e}") from e

    default_name = os.path.splitext(os.path.basename(path))[0]
    case = case_from_dict(data, name=default_name, validate=validate)
    logger.info(
        f"✅ Loaded case '{case.name}': {len(case.power.buses)} buses, {len(case.power.lines)} lines, "
        f"{len(case.gas.nodes)} gas nodes, {len(case.gas.pipelines)} pipelines, "
        f"{len(case.gas.compressors)} compressors, T={case.periods}"
    )
    return case


def case_from_dict(data: dict, name: str = "case", validate: bool = True) -> CoupledCase:
    if not isinstance(data, dict):
        raise CaseParseError("case document must be a JSON object")
    for key in ("power", "gas", "coupling", "horizon", "bases"):
        _req(data, key, "case")

    bases = _parse_bases(data["bases"])
    horizon = _parse_horizon(data["horizon"], bases)
    power = _parse_power(data["power"], bases, horizon)
    gas = _parse_gas(data["gas"], bases, horizon)
    coupling = _parse_coupling(data["coupling"])
    case = CoupledCase(
        name=data.get("name", name), power=power, gas=gas, coupling=coupling, horizon=horizon, bases=bases,
    )

    _check_references(case)
    if validate:
        report = validate_topology(case)
        if report.issues:
            raise CaseTopologyError(report.issues)
    if horizon.initial_linepack == "steady":
        explicit = {str(x.get("id")) for x in data["gas"].get("pipelines", []) if "initial_linepack_ksm3" in x}
        case = _with_steady_linepack(case, explicit)
    return case


def serialize_case(case: CoupledCase) -> dict:
    """Inverse of ``case_from_dict``: file-unit JSON document."""
    b = case.bases
    dt = case.horizon.duration
    z, i_base = b.impedance, b.current_ka
    s, g, p = b.power_mva, b.gas_flow, b.pressure_bar

    def gen_common(dev):
        return {
            "id": dev.id, "bus": dev.bus,
            "p_min_mw": dev.p_min * s, "p_max_mw": dev.p_max * s,
            "q_min_mvar": dev.q_min * s, "q_max_mvar": dev.q_max * s,
        }

    def line_doc(line):
        doc = {"id": line.id, "from": line.from_bus, "to": line.to_bus, "r_ohm": line.r * z, "x_ohm": line.x * z}
        if math.isfinite(line.i_max_sq):
            doc["i_max_ka"] = math.sqrt(line.i_max_sq) * i_base
        return doc

    def pipe_doc(pipe):
        doc = {"id": pipe.id, "from": pipe.from_node, "to": pipe.to_node}
        if pipe.params is not None:
            pp = pipe.params
            doc.update({
                "length_m": pp.length, "diameter_m": pp.diameter, "friction": pp.friction,
                "gas_constant": pp.gas_constant, "temperature_k": pp.temperature,
                "compressibility": pp.compressibility, "std_density": pp.std_density,
                "unit_constant": pp.unit_constant,
            })
        if pipe.phi_override is not None:
            doc["phi"] = pipe.phi_override
        if pipe.linepack_override is not None:
            doc["linepack_k"] = pipe.linepack_override
        doc["initial_linepack_ksm3"] = pipe.initial_linepack * g * dt
        return doc

    return {
        "name": case.name,
        "bases": {"power_mva": s, "voltage_kv": b.voltage_kv, "pressure_bar": p, "gas_flow_ksm3h": g},
        "power": {
            "reference_bus": case.power.reference_bus,
            "buses": [
                {"id": x.id, "g_shunt_mw": x.g_shunt * s, "b_shunt_mvar": x.b_shunt * s, "v_min": x.v_min, "v_max": x.v_max}
                for x in case.power.buses
            ],
            "lines": [line_doc(x) for x in case.power.lines],
            "generators": [
                {**gen_common(x), "cost": {"a": x.a / (s * s * dt), "b": x.b / (s * dt), "c": x.c / dt}}
                for x in case.power.generators
            ],
            "gas_generators": [
                {**gen_common(x), "beta_mwh_per_ksm3": x.beta * s / g} for x in case.power.gas_generators
            ],
            "loads": [
                {"id": x.id, "bus": x.bus, "p_mw": x.p * s, "q_mvar": x.q * s, "profile": x.shape,
                 **({"q_profile": x.q_shape} if x.q_shape else {})}
                for x in case.power.loads
            ],
        },
        "gas": {
            "fuel_model": case.gas.fuel_model,
            "nodes": [
                {"id": x.id, "pressure_min_bar": x.tau_min * p, "pressure_max_bar": x.tau_max * p}
                for x in case.gas.nodes
            ],
            "pipelines": [pipe_doc(x) for x in case.gas.pipelines],
            "compressors": [
                {
                    "id": x.id, "from": x.from_node, "to": x.to_node, "ratio": x.ratio,
                    "y_max_ksm3h": x.y_max * g, "alpha": x.alpha, "drive": x.drive,
                    "chi_mw_per_ksm3h": x.chi * s / g,
                }
                for x in case.gas.compressors
            ],
            "retailers": [
                {"id": x.id, "node": x.node, "y_min_ksm3h": x.y_min * g, "y_max_ksm3h": x.y_max * g, "price": x.price}
                for x in case.gas.retailers
            ],
            "loads": [
                {"id": x.id, "node": x.node, "flow_ksm3h": x.flow * g, "profile": x.shape}
                for x in case.gas.loads
            ],
        },
        "coupling": {
            "gas_generators": dict(case.coupling.gas_generator_nodes),
            "compressors": dict(case.coupling.compressor_buses),
        },
        "horizon": {
            "periods": case.horizon.periods,
            "duration_h": dt,
            "terminal_linepack": case.horizon.terminal_rule,
            "initial_linepack": case.horizon.initial_linepack,
            "profiles": {k: list(v) for k, v in case.horizon.shapes.items()},
            "prices": {k: [c / (g * dt) for c in v] for k, v in case.horizon.prices.items()},
        },
    }


def dump_case(case: CoupledCase, path: str) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(serialize_case(case), fh, indent=2)
    return path


# ==============================
# Parsing helpers
# ==============================
def _req(doc: dict, key: str, ctx: str):
    value = doc.get(key, _MISSING) if isinstance(doc, dict) else _MISSING
    if value is _MISSING:
        raise CaseSchemaError(f"{ctx}: missing required field '{key}'")
    return value


def _num(doc: dict, key: str, ctx: str, default=_MISSING) -> float:
    value = doc.get(key, default)
    if value is _MISSING:
        raise CaseSchemaError(f"{ctx}: missing required field '{key}'")
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise CaseSchemaError(f"{ctx}: field '{key}' is not a number ({value!r})") from e


def _items(doc: dict, key: str, ctx: str, required: bool = True) -> list[dict]:
    value = doc.get(key, _MISSING if required else [])
    if value is _MISSING:
        raise CaseSchemaError(f"{ctx}: missing required field '{key}'")
    if not isinstance(value, list):
        raise CaseSchemaError(f"{ctx}: field '{key}' must be a list")
    return value


def _parse_bases(doc: dict) -> Bases:
    bases = Bases(
        power_mva=_num(doc, "power_mva", "bases"),
        voltage_kv=_num(doc, "voltage_kv", "bases"),
        pressure_bar=_num(doc, "pressure_bar", "bases"),
        gas_flow=_num(doc, "gas_flow_ksm3h", "bases"),
    )
    if min(bases.power_mva, bases.voltage_kv, bases.pressure_bar, bases.gas_flow) <= 0:
        raise CaseSchemaError("bases: all base values must be positive")
    return bases


def _parse_horizon(doc: dict, bases: Bases) -> Horizon:
    periods = int(_num(doc, "periods", "horizon"))
    duration = _num(doc, "duration_h", "horizon", settings.DEFAULT_PERIOD_HOURS)
    profiles = _req(doc, "profiles", "horizon")
    prices = doc.get("prices", {})
    try:
        shapes = {str(k): tuple(float(v) for v in vals) for k, vals in profiles.items()}
        price_pu = {
            str(k): tuple(float(v) * bases.gas_flow * duration for v in vals) for k, vals in prices.items()
        }
    except (TypeError, ValueError, AttributeError) as e:
        raise CaseSchemaError(f"horizon: malformed profile table ({e})") from e
    return Horizon(
        periods=periods,
        duration=duration,
        shapes=shapes,
        prices=price_pu,
        terminal_rule=doc.get("terminal_linepack", "free"),
        initial_linepack=doc.get("initial_linepack", "midpoint"),
    )


def _parse_power(doc: dict, bases: Bases, horizon: Horizon) -> PowerNetwork:
    s, dt = bases.power_mva, horizon.duration
    z, i_base = bases.impedance, bases.current_ka
    tan_phi = math.tan(math.acos(settings.DEFAULT_POWER_FACTOR))

    buses = tuple(
        Bus(
            id=str(_req(x, "id", "bus")),
            g_shunt=_num(x, "g_shunt_mw", "bus", 0.0) / s,
            b_shunt=_num(x, "b_shunt_mvar", "bus", 0.0) / s,
            v_min=_num(x, "v_min", "bus", 0.95),
            v_max=_num(x, "v_max", "bus", 1.05),
        )
        for x in _items(doc, "buses", "power")
    )

    lines = []
    for x in _items(doc, "lines", "power"):
        ctx = f"line {x.get('id')}"
        i_max = x.get("i_max_ka")
        lines.append(Line(
            id=str(_req(x, "id", "line")),
            from_bus=str(_req(x, "from", ctx)),
            to_bus=str(_req(x, "to", ctx)),
            r=_num(x, "r_ohm", ctx) / z,
            x=_num(x, "x_ohm", ctx) / z,
            i_max_sq=math.inf if i_max is None else (float(i_max) / i_base) ** 2,
        ))

    generators = []
    for x in _items(doc, "generators", "power", required=False):
        ctx = f"generator {x.get('id')}"
        cost = x.get("cost", {})
        generators.append(Generator(
            **_device(x, ctx, s),
            a=_num(cost, "a", ctx, 0.0) * s * s * dt,
            b=_num(cost, "b", ctx, 0.0) * s * dt,
            c=_num(cost, "c", ctx, 0.0) * dt,
        ))

    gas_generators = []
    for x in _items(doc, "gas_generators", "power", required=False):
        ctx = f"gas generator {x.get('id')}"
        gas_generators.append(GasFiredGenerator(
            **_device(x, ctx, s),
            beta=_num(x, "beta_mwh_per_ksm3", ctx) * bases.gas_flow / s,
        ))

    loads = []
    for x in _items(doc, "loads", "power", required=False):
        ctx = f"load {x.get('id')}"
        p = _num(x, "p_mw", ctx) / s
        q = _num(x, "q_mvar", ctx) / s if "q_mvar" in x else p * tan_phi
        loads.append(PowerLoad(
            id=str(_req(x, "id", "load")), bus=str(_req(x, "bus", ctx)), p=p, q=q, shape=str(_req(x, "profile", ctx)),
            q_shape=str(x["q_profile"]) if "q_profile" in x else None,
        ))

    return PowerNetwork(
        buses=buses,
        lines=tuple(lines),
        generators=tuple(generators),
        gas_generators=tuple(gas_generators),
        loads=tuple(loads),
        reference_bus=str(_req(doc, "reference_bus", "power")),
    )


def _device(x: dict, ctx: str, s: float) -> dict:
    return {
        "id": str(_req(x, "id", ctx)),
        "bus": str(_req(x, "bus", ctx)),
        "p_min": _num(x, "p_min_mw", ctx, 0.0) / s,
        "p_max": _num(x, "p_max_mw", ctx) / s,
        "q_min": _num(x, "q_min_mvar", ctx, 0.0) / s,
        "q_max": _num(x, "q_max_mvar", ctx, 0.0) / s,
    }


def _parse_gas(doc: dict, bases: Bases, horizon: Horizon) -> GasNetwork:
    p, g, dt = bases.pressure_bar, bases.gas_flow, horizon.duration

    nodes = tuple(
        GasNode(
            id=str(_req(x, "id", "gas node")),
            tau_min=_num(x, "pressure_min_bar", f"gas node {x.get('id')}") / p,
            tau_max=_num(x, "pressure_max_bar", f"gas node {x.get('id')}") / p,
        )
        for x in _items(doc, "nodes", "gas")
    )
    node_bounds = {n.id: n for n in nodes}

    pipelines = []
    for x in _items(doc, "pipelines", "gas", required=False):
        ctx = f"pipeline {x.get('id')}"
        from_node, to_node = str(_req(x, "from", ctx)), str(_req(x, "to", ctx))
        params = None
        if "length_m" in x:
            params = PipeParameters(
                length=_num(x, "length_m", ctx),
                diameter=_num(x, "diameter_m", ctx),
                friction=_num(x, "friction", ctx),
                gas_constant=_num(x, "gas_constant", ctx),
                temperature=_num(x, "temperature_k", ctx),
                compressibility=_num(x, "compressibility", ctx),
                std_density=_num(x, "std_density", ctx),
                unit_constant=_num(x, "unit_constant", ctx, 1.0),
            )
        phi_override = _num(x, "phi", ctx) if "phi" in x else None
        k_override = _num(x, "linepack_k", ctx) if "linepack_k" in x else None
        if params is None and (phi_override is None or k_override is None):
            raise CaseSchemaError(f"{ctx}: needs physical parameters or both 'phi' and 'linepack_k'")

        phi = phi_override if phi_override is not None else weymouth_coefficient(params)
        k_file = k_override if k_override is not None else linepack_coefficient(params) * SM3_PER_PA_TO_KSM3_PER_BAR
        phi_pu = phi * p * p / (g * g)
        k_pu = k_file * p / (g * dt)

        if "initial_linepack_ksm3" in x:
            m0 = _num(x, "initial_linepack_ksm3", ctx) / (g * dt)
        elif from_node in node_bounds and to_node in node_bounds:
            ends = (node_bounds[from_node], node_bounds[to_node])
            m0 = k_pu * 0.25 * sum(n.tau_min + n.tau_max for n in ends)
        else:
            raise CaseReferenceError(f"{ctx}: references unknown node")

        pipelines.append(Pipeline(
            id=str(_req(x, "id", "pipeline")), from_node=from_node, to_node=to_node,
            phi=phi_pu, linepack_k=k_pu, initial_linepack=m0, params=params,
            phi_override=phi_override, linepack_override=k_override,
        ))

    compressors = []
    for x in _items(doc, "compressors", "gas", required=False):
        ctx = f"compressor {x.get('id')}"
        compressors.append(Compressor(
            id=str(_req(x, "id", "compressor")),
            from_node=str(_req(x, "from", ctx)),
            to_node=str(_req(x, "to", ctx)),
            ratio=_num(x, "ratio", ctx),
            y_max=_num(x, "y_max_ksm3h", ctx) / g,
            alpha=_num(x, "alpha", ctx, settings.DEFAULT_FUEL_RATE),
            drive=str(x.get("drive", "electric")),
            chi=_num(x, "chi_mw_per_ksm3h", ctx, 0.0) * g / bases.power_mva,
        ))

    retailers = []
    for x in _items(doc, "retailers", "gas"):
        ctx = f"retailer {x.get('id')}"
        retailers.append(Retailer(
            id=str(_req(x, "id", "retailer")),
            node=str(_req(x, "node", ctx)),
            y_min=_num(x, "y_min_ksm3h", ctx, 0.0) / g,
            y_max=_num(x, "y_max_ksm3h", ctx) / g,
            price=str(_req(x, "price", ctx)),
        ))

    loads = []
    for x in _items(doc, "loads", "gas", required=False):
        ctx = f"gas load {x.get('id')}"
        loads.append(GasLoad(
            id=str(_req(x, "id", "gas load")),
            node=str(_req(x, "node", ctx)),
            flow=_num(x, "flow_ksm3h", ctx) / g,
            shape=str(_req(x, "profile", ctx)),
        ))

    return GasNetwork(
        nodes=nodes,
        pipelines=tuple(pipelines),
        compressors=tuple(compressors),
        retailers=tuple(retailers),
        loads=tuple(loads),
        fuel_model=str(doc.get("fuel_model", "inflow_scaled")),
    )


def _parse_coupling(doc: dict) -> CouplingMap:
    gens = doc.get("gas_generators", {})
    comps = doc.get("compressors", {})
    if not isinstance(gens, dict) or not isinstance(comps, dict):
        raise CaseSchemaError("coupling: 'gas_generators' and 'compressors' must be objects")
    return CouplingMap(
        gas_generator_nodes={str(k): str(v) for k, v in gens.items()},
        compressor_buses={str(k): str(v) for k, v in comps.items()},
    )


def _check_references(case: CoupledCase) -> None:
    """Dangling ids are load errors; structural problems are left to ``validate_topology``."""
    buses = {b.id for b in case.power.buses}
    nodes = {n.id for n in case.gas.nodes}
    gas_gens = {g.id for g in case.power.gas_generators}
    comps = {c.id for c in case.gas.compressors}
    missing = []

    refs = [(f"line {x.id}", e, buses) for x in case.power.lines for e in (x.from_bus, x.to_bus)]
    refs += [(f"device {x.id}", x.bus, buses) for x in (*case.power.generators, *case.power.gas_generators, *case.power.loads)]
    refs += [(f"branch {x.id}", e, nodes) for x in (*case.gas.pipelines, *case.gas.compressors) for e in (x.from_node, x.to_node)]
    refs += [(f"gas device {x.id}", x.node, nodes) for x in (*case.gas.retailers, *case.gas.loads)]
    refs += [(f"coupling {k}", k, gas_gens) for k in case.coupling.gas_generator_nodes]
    refs += [(f"coupling {k}", v, nodes) for k, v in case.coupling.gas_generator_nodes.items()]
    refs += [(f"coupling {k}", k, comps) for k in case.coupling.compressor_buses]
    refs += [(f"coupling {k}", v, buses) for k, v in case.coupling.compressor_buses.items()]
    refs += [("reference bus", case.power.reference_bus, buses)]
    refs += [(f"load {x.id}", x.shape, case.horizon.shapes) for x in (*case.power.loads, *case.gas.loads)]
    refs += [(f"load {x.id}", x.q_shape, case.horizon.shapes) for x in case.power.loads if x.q_shape]
    refs += [(f"retailer {x.id}", x.price, case.horizon.prices) for x in case.gas.retailers]

    for ctx, ref, pool in refs:
        if ref not in pool:
            missing.append(f"{ctx}: unknown id '{ref}'")
    if missing:
        raise CaseReferenceError("; ".join(missing))


def _with_steady_linepack(case: CoupledCase, explicit: set[str]) -> CoupledCase:
    """Replace default initial linepack with the peak-withdrawal steady state."""
    try:
        m0 = steady_linepack(case)
    except OracleError as e:
        raise CaseSchemaError(f"horizon: no steady initial linepack ({e})") from e
    pipelines = tuple(
        pipe if pipe.id in explicit else replace(pipe, initial_linepack=float(m))
        for pipe, m in zip(case.gas.pipelines, m0)
    )
    logger.info(f"📊 Steady initial linepack for {len(pipelines) - len(explicit)} pipelines of '{case.name}'")
    return replace(case, gas=replace(case.gas, pipelines=pipelines))
