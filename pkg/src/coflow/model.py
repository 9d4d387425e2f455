"""Scenario schema for coupled power-water-heat scheduling.

A scenario bundles three carrier networks sharing one discrete horizon:

* power: radial distribution grid in branch-flow (squared-magnitude)
  variables, per-unit on a declared (s_base, v_base);
* water: pressurized municipal network with reservoirs, junctions,
  split-node storage tanks, and plain/pump/valve pipes, in SI units;
* heat: two-pipe district-heating network (paired supply/return pipes)
  with CHP units, heating loads, and junctions, in SI units.

Coupling is explicit: every water pump pipe and every CHP unit names the
power node that carries its electrical demand or injection.

All per-slot profiles are dense arrays of length ``horizon.slot_count``;
scalars in the JSON document broadcast.  Field names carry their units
(``*_pu``, ``*_m``, ``*_m3s``, ``*_w``, ``*_c``); an unknown key is a
schema error, which catches unit-tag mistakes at load time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"

DEFAULT_V_MIN_SQ = 0.95 ** 2
DEFAULT_V_MAX_SQ = 1.10 ** 2
DEFAULT_GRAVITY = 9.81            # [m/s^2]
DEFAULT_DENSITY = 1000.0          # [kg/m^3]
DEFAULT_HEAT_CAPACITY = 4.186e6   # [J/(m^3 K)], volumetric, water
DEFAULT_Q_MAX = 1.0               # [m^3/s] generous pipe flow cap


class ScenarioError(Exception):
    """Base class for scenario loading failures."""


class ScenarioParseError(ScenarioError):
    """The document is not valid JSON."""


class ScenarioSchemaError(ScenarioError):
    """A field is missing, has the wrong type/shape, or is unknown."""


class ScenarioReferenceError(ScenarioError):
    """An element references a node id that does not exist."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class Horizon:
    slot_count: int
    slot_duration_s: float

    @property
    def dt_s(self) -> float:
        return self.slot_duration_s

    @property
    def dt_h(self) -> float:
        return self.slot_duration_s / 3600.0


@dataclass
class PowerNode:
    id: str
    p_load_pu: np.ndarray
    q_load_pu: np.ndarray
    v_min_sq_pu: float = DEFAULT_V_MIN_SQ
    v_max_sq_pu: float = DEFAULT_V_MAX_SQ


@dataclass
class PowerLine:
    sender: str
    receiver: str
    r_pu: float
    x_pu: float

    @property
    def z_sq_pu(self) -> float:
        return self.r_pu ** 2 + self.x_pu ** 2


@dataclass
class DerUnit:
    """Dispatchable resource at a power node.

    The per-slot feasible region is the box [p_min, p_max] x [q_min, q_max],
    optionally capped by an apparent-power circle of radius s_max_w.  Cost is
    convex in delivered energy: cost_per_wh * E + cost_quad_per_wh2 * E^2.
    """
    node: str
    p_min_w: np.ndarray
    p_max_w: np.ndarray
    q_min_w: np.ndarray
    q_max_w: np.ndarray
    s_max_w: float | None = None
    cost_per_wh: float = 0.0
    cost_quad_per_wh2: float = 0.0


@dataclass
class PowerNetwork:
    s_base_va: float
    v_base_v: float
    slack_node: str
    slack_voltage_sq_pu: float
    nodes: list[PowerNode]
    lines: list[PowerLine]
    ders: list[DerUnit]

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> PowerNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


@dataclass
class WaterJunction:
    id: str
    demand_m3s: np.ndarray
    min_head_m: float = 0.0


@dataclass
class WaterTank:
    """Storage tank split into an inlet node and an outlet node.

    Inflow pipes terminate at ``inlet``; outflow pipes originate at
    ``outlet``; there is no pipe between the two halves.  The outlet head
    integrates net inflow over the horizon from ``initial_head_m`` and must
    stay within [min_head_m, inlet head].
    """
    inlet: str
    outlet: str
    cross_section_m2: float
    initial_head_m: float
    min_head_m: float = 0.0


@dataclass
class WaterReservoir:
    id: str
    head_m: float


PIPE_KINDS = ("plain", "pump", "valve")


@dataclass
class WaterPipe:
    sender: str
    receiver: str
    kind: str = "plain"
    friction_s2m5: float = 0.0          # plain pipes: head drop = friction * q^2
    pump_a: float = 0.0                 # pump gain window: dh <= -a q^2 + b q + c
    pump_b: float = 0.0
    pump_c: float = 0.0
    efficiency: float = 1.0             # pump wire-to-water efficiency
    q_max_m3s: float = DEFAULT_Q_MAX

    @property
    def key(self) -> tuple[str, str]:
        return (self.sender, self.receiver)


@dataclass
class WaterNetwork:
    junctions: list[WaterJunction]
    tanks: list[WaterTank]
    reservoirs: list[WaterReservoir]
    pipes: list[WaterPipe]

    def node_ids(self) -> list[str]:
        ids: list[str] = [j.id for j in self.junctions]
        for t in self.tanks:
            ids.extend([t.inlet, t.outlet])
        ids.extend(r.id for r in self.reservoirs)
        return ids

    def pump_pipes(self) -> list[WaterPipe]:
        return [p for p in self.pipes if p.kind == "pump"]


@dataclass
class ChpUnit:
    """Combined heat and power unit at a heat node.

    The operating region is the convex hull of extreme points
    (p_w, q_w, heat_w) with a linear-in-weights cost; the unit also owns the
    circulation pump that lifts return-side head to supply-side head.
    """
    node: str
    extreme_p_w: np.ndarray        # (K,)
    extreme_q_w: np.ndarray
    extreme_heat_w: np.ndarray
    vertex_cost: np.ndarray        # ($ per slot at each extreme point)
    supply_temp_min_c: float
    supply_temp_max_c: float
    pump_a: float
    pump_b: float
    pump_c: float
    pump_efficiency: float
    q_rs_max_m3s: float = DEFAULT_Q_MAX


@dataclass
class HeatLoad:
    node: str
    demand_w: np.ndarray
    return_temp_min_c: float
    return_temp_max_c: float
    min_head_sep_m: float = 0.0    # supply head must exceed return head by this


@dataclass
class HeatPipe:
    sender: str
    receiver: str
    side: str                      # 'supply' | 'return'
    friction_s2m5: float
    xi_m3s: float                  # temperature decay constant, exponent -xi/q
    q_max_m3s: float = DEFAULT_Q_MAX

    @property
    def key(self) -> tuple[str, str]:
        return (self.sender, self.receiver)


@dataclass
class HeatNetwork:
    chps: list[ChpUnit]
    loads: list[HeatLoad]
    junction_ids: list[str]
    pipes: list[HeatPipe]
    ambient_c: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def node_ids(self) -> list[str]:
        ids = [c.node for c in self.chps]
        ids.extend(l.node for l in self.loads)
        ids.extend(self.junction_ids)
        return ids

    def supply_pipes(self) -> list[HeatPipe]:
        return [p for p in self.pipes if p.side == "supply"]

    def return_pipes(self) -> list[HeatPipe]:
        return [p for p in self.pipes if p.side == "return"]


@dataclass
class CouplingMap:
    """Which power node carries each shared electrical quantity.

    ``pump_nodes`` maps water pump pipe (sender, receiver) keys to power node
    ids; ``chp_nodes`` maps CHP heat-node ids to the power node receiving the
    generated power; ``chp_pump_nodes`` maps CHP heat-node ids to the node
    paying for the circulation pump (defaults to the CHP's own power node).
    """
    pump_nodes: dict[tuple[str, str], str] = field(default_factory=dict)
    chp_nodes: dict[str, str] = field(default_factory=dict)
    chp_pump_nodes: dict[str, str] = field(default_factory=dict)


@dataclass
class Prices:
    electricity_per_wh: np.ndarray   # (T,) [$ / Wh]
    water_per_m3: np.ndarray         # (T,) [$ / m^3]


@dataclass
class Constants:
    gravity_m_s2: float = DEFAULT_GRAVITY
    water_density_kg_m3: float = DEFAULT_DENSITY
    heat_capacity_j_m3k: float = DEFAULT_HEAT_CAPACITY


@dataclass
class Scenario:
    schema_version: str
    horizon: Horizon
    power: PowerNetwork
    water: WaterNetwork
    heat: HeatNetwork
    coupling: CouplingMap
    prices: Prices
    constants: Constants = field(default_factory=Constants)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioSchemaError(f"{where}: missing required field '{key}'")
    return d[key]


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ScenarioSchemaError(
            f"{where}: unknown field(s) {sorted(unknown)}; allowed: {sorted(allowed)}"
        )


def _as_float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioSchemaError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _as_positive(v, where: str) -> float:
    x = _as_float(v, where)
    if x <= 0:
        raise ScenarioSchemaError(f"{where}: must be > 0, got {x}")
    return x


def _as_profile(v, slots: int, where: str) -> np.ndarray:
    """Scalar broadcast or exact-length list -> float array of shape (slots,)."""
    if isinstance(v, bool):
        raise ScenarioSchemaError(f"{where}: expected number(s), got {v!r}")
    if isinstance(v, (int, float)):
        return np.full(slots, float(v))
    if isinstance(v, list):
        if len(v) != slots:
            raise ScenarioSchemaError(
                f"{where}: profile length {len(v)} != slot count {slots}"
            )
        try:
            return np.asarray([float(x) for x in v])
        except (TypeError, ValueError):
            raise ScenarioSchemaError(f"{where}: profile entries must be numbers")
    raise ScenarioSchemaError(f"{where}: expected scalar or list, got {type(v).__name__}")


def _as_id(v, where: str) -> str:
    if not isinstance(v, str) or not v:
        raise ScenarioSchemaError(f"{where}: node ids must be non-empty strings")
    return v


def load_scenario(path: str | Path) -> Scenario:
    """Load and fully populate a Scenario from a JSON file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(f"cannot read {path}: {e}") from e
    return parse_scenario(text)


def parse_scenario(text: str) -> Scenario:
    """Parse a UTF-8 JSON document into a fully populated Scenario."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ScenarioSchemaError("top level must be a JSON object")
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(doc, {"schema_version", "horizon", "power", "water", "heat",
                      "coupling", "prices", "constants"}, "scenario")
    version = _require(doc, "schema_version", "scenario")
    if not isinstance(version, str) or not version.startswith("1"):
        raise ScenarioSchemaError(
            f"unsupported schema_version {version!r}; this reader handles versions starting with '1'"
        )

    hd = _require(doc, "horizon", "scenario")
    _check_keys(hd, {"slot_count", "slot_duration_s"}, "horizon")
    slots = _require(hd, "slot_count", "horizon")
    if not isinstance(slots, int) or slots < 1:
        raise ScenarioSchemaError(f"horizon.slot_count must be a positive integer, got {slots!r}")
    horizon = Horizon(slots, _as_positive(_require(hd, "slot_duration_s", "horizon"),
                                          "horizon.slot_duration_s"))

    cd = doc.get("constants", {})
    _check_keys(cd, {"gravity_m_s2", "water_density_kg_m3", "heat_capacity_j_m3k"}, "constants")
    constants = Constants(
        gravity_m_s2=_as_positive(cd.get("gravity_m_s2", DEFAULT_GRAVITY), "constants.gravity_m_s2"),
        water_density_kg_m3=_as_positive(cd.get("water_density_kg_m3", DEFAULT_DENSITY),
                                         "constants.water_density_kg_m3"),
        heat_capacity_j_m3k=_as_positive(cd.get("heat_capacity_j_m3k", DEFAULT_HEAT_CAPACITY),
                                         "constants.heat_capacity_j_m3k"),
    )

    power = _load_power(_require(doc, "power", "scenario"), slots)
    water = _load_water(_require(doc, "water", "scenario"), slots)
    heat = _load_heat(_require(doc, "heat", "scenario"), slots)
    coupling = _load_coupling(_require(doc, "coupling", "scenario"))

    pd = _require(doc, "prices", "scenario")
    _check_keys(pd, {"electricity_per_wh", "water_per_m3"}, "prices")
    prices = Prices(
        electricity_per_wh=_as_profile(_require(pd, "electricity_per_wh", "prices"),
                                       slots, "prices.electricity_per_wh"),
        water_per_m3=_as_profile(_require(pd, "water_per_m3", "prices"),
                                 slots, "prices.water_per_m3"),
    )

    s = Scenario(schema_version=version, horizon=horizon, power=power, water=water,
                 heat=heat, coupling=coupling, prices=prices, constants=constants)
    _check_references(s)
    return s


def _load_power(d: dict, slots: int) -> PowerNetwork:
    _check_keys(d, {"s_base_va", "v_base_v", "slack_node", "slack_voltage_sq_pu",
                    "nodes", "lines", "ders"}, "power")
    nodes = []
    seen: set[str] = set()
    for i, nd in enumerate(_require(d, "nodes", "power")):
        where = f"power.nodes[{i}]"
        _check_keys(nd, {"id", "p_load_pu", "q_load_pu", "v_min_sq_pu", "v_max_sq_pu"}, where)
        nid = _as_id(_require(nd, "id", where), where)
        if nid in seen:
            raise ScenarioSchemaError(f"{where}: duplicate node id {nid!r}")
        seen.add(nid)
        nodes.append(PowerNode(
            id=nid,
            p_load_pu=_as_profile(nd.get("p_load_pu", 0.0), slots, f"{where}.p_load_pu"),
            q_load_pu=_as_profile(nd.get("q_load_pu", 0.0), slots, f"{where}.q_load_pu"),
            v_min_sq_pu=_as_float(nd.get("v_min_sq_pu", DEFAULT_V_MIN_SQ), f"{where}.v_min_sq_pu"),
            v_max_sq_pu=_as_float(nd.get("v_max_sq_pu", DEFAULT_V_MAX_SQ), f"{where}.v_max_sq_pu"),
        ))
    lines = []
    for i, ld in enumerate(_require(d, "lines", "power")):
        where = f"power.lines[{i}]"
        _check_keys(ld, {"sender", "receiver", "r_pu", "x_pu"}, where)
        lines.append(PowerLine(
            sender=_as_id(_require(ld, "sender", where), where),
            receiver=_as_id(_require(ld, "receiver", where), where),
            r_pu=_as_float(_require(ld, "r_pu", where), f"{where}.r_pu"),
            x_pu=_as_float(_require(ld, "x_pu", where), f"{where}.x_pu"),
        ))
    ders = []
    for i, rd in enumerate(d.get("ders", [])):
        where = f"power.ders[{i}]"
        _check_keys(rd, {"node", "p_min_w", "p_max_w", "q_min_w", "q_max_w",
                         "s_max_w", "cost_per_wh", "cost_quad_per_wh2"}, where)
        s_max = rd.get("s_max_w")
        ders.append(DerUnit(
            node=_as_id(_require(rd, "node", where), where),
            p_min_w=_as_profile(rd.get("p_min_w", 0.0), slots, f"{where}.p_min_w"),
            p_max_w=_as_profile(_require(rd, "p_max_w", where), slots, f"{where}.p_max_w"),
            q_min_w=_as_profile(rd.get("q_min_w", 0.0), slots, f"{where}.q_min_w"),
            q_max_w=_as_profile(rd.get("q_max_w", 0.0), slots, f"{where}.q_max_w"),
            s_max_w=None if s_max is None else _as_positive(s_max, f"{where}.s_max_w"),
            cost_per_wh=_as_float(rd.get("cost_per_wh", 0.0), f"{where}.cost_per_wh"),
            cost_quad_per_wh2=_as_float(rd.get("cost_quad_per_wh2", 0.0),
                                        f"{where}.cost_quad_per_wh2"),
        ))
    return PowerNetwork(
        s_base_va=_as_positive(_require(d, "s_base_va", "power"), "power.s_base_va"),
        v_base_v=_as_positive(_require(d, "v_base_v", "power"), "power.v_base_v"),
        slack_node=_as_id(_require(d, "slack_node", "power"), "power.slack_node"),
        slack_voltage_sq_pu=_as_positive(_require(d, "slack_voltage_sq_pu", "power"),
                                         "power.slack_voltage_sq_pu"),
        nodes=nodes, lines=lines, ders=ders,
    )


def _load_water(d: dict, slots: int) -> WaterNetwork:
    _check_keys(d, {"junctions", "tanks", "reservoirs", "pipes"}, "water")
    junctions = []
    for i, jd in enumerate(d.get("junctions", [])):
        where = f"water.junctions[{i}]"
        _check_keys(jd, {"id", "demand_m3s", "min_head_m"}, where)
        junctions.append(WaterJunction(
            id=_as_id(_require(jd, "id", where), where),
            demand_m3s=_as_profile(jd.get("demand_m3s", 0.0), slots, f"{where}.demand_m3s"),
            min_head_m=_as_float(jd.get("min_head_m", 0.0), f"{where}.min_head_m"),
        ))
    tanks = []
    for i, td in enumerate(d.get("tanks", [])):
        where = f"water.tanks[{i}]"
        _check_keys(td, {"inlet", "outlet", "cross_section_m2", "initial_head_m",
                         "min_head_m"}, where)
        tanks.append(WaterTank(
            inlet=_as_id(_require(td, "inlet", where), where),
            outlet=_as_id(_require(td, "outlet", where), where),
            cross_section_m2=_as_positive(_require(td, "cross_section_m2", where),
                                          f"{where}.cross_section_m2"),
            initial_head_m=_as_float(_require(td, "initial_head_m", where),
                                     f"{where}.initial_head_m"),
            min_head_m=_as_float(td.get("min_head_m", 0.0), f"{where}.min_head_m"),
        ))
    reservoirs = []
    for i, rd in enumerate(d.get("reservoirs", [])):
        where = f"water.reservoirs[{i}]"
        _check_keys(rd, {"id", "head_m"}, where)
        reservoirs.append(WaterReservoir(
            id=_as_id(_require(rd, "id", where), where),
            head_m=_as_float(_require(rd, "head_m", where), f"{where}.head_m"),
        ))
    pipes = []
    for i, pd in enumerate(d.get("pipes", [])):
        where = f"water.pipes[{i}]"
        _check_keys(pd, {"sender", "receiver", "kind", "friction_s2m5", "pump_a",
                         "pump_b", "pump_c", "efficiency", "q_max_m3s"}, where)
        kind = pd.get("kind", "plain")
        if kind not in PIPE_KINDS:
            raise ScenarioSchemaError(f"{where}: kind must be one of {PIPE_KINDS}, got {kind!r}")
        pipe = WaterPipe(
            sender=_as_id(_require(pd, "sender", where), where),
            receiver=_as_id(_require(pd, "receiver", where), where),
            kind=kind,
            friction_s2m5=_as_float(pd.get("friction_s2m5", 0.0), f"{where}.friction_s2m5"),
            pump_a=_as_float(pd.get("pump_a", 0.0), f"{where}.pump_a"),
            pump_b=_as_float(pd.get("pump_b", 0.0), f"{where}.pump_b"),
            pump_c=_as_float(pd.get("pump_c", 0.0), f"{where}.pump_c"),
            efficiency=_as_float(pd.get("efficiency", 1.0), f"{where}.efficiency"),
            q_max_m3s=_as_positive(pd.get("q_max_m3s", DEFAULT_Q_MAX), f"{where}.q_max_m3s"),
        )
        if kind == "plain" and pipe.friction_s2m5 <= 0:
            raise ScenarioSchemaError(f"{where}: plain pipes need friction_s2m5 > 0")
        if kind == "pump":
            if pipe.pump_a <= 0 or pipe.pump_b <= 0 or pipe.pump_c <= 0:
                raise ScenarioSchemaError(f"{where}: pump curve coefficients must be > 0")
            if not (0 < pipe.efficiency <= 1):
                raise ScenarioSchemaError(f"{where}: pump efficiency must be in (0, 1]")
        pipes.append(pipe)
    return WaterNetwork(junctions=junctions, tanks=tanks, reservoirs=reservoirs, pipes=pipes)


def _load_heat(d: dict, slots: int) -> HeatNetwork:
    _check_keys(d, {"chps", "loads", "junctions", "supply_pipes", "return_pipes",
                    "ambient_c"}, "heat")
    chps = []
    for i, cdd in enumerate(d.get("chps", [])):
        where = f"heat.chps[{i}]"
        _check_keys(cdd, {"node", "extreme_points", "supply_temp_min_c", "supply_temp_max_c",
                          "pump_a", "pump_b", "pump_c", "pump_efficiency", "q_rs_max_m3s"}, where)
        pts = _require(cdd, "extreme_points", where)
        if not isinstance(pts, list) or not pts:
            raise ScenarioSchemaError(f"{where}.extreme_points: need a non-empty list")
        p, q, h, cost = [], [], [], []
        for k, pt in enumerate(pts):
            pw = f"{where}.extreme_points[{k}]"
            _check_keys(pt, {"p_w", "q_w", "heat_w", "cost"}, pw)
            p.append(_as_float(_require(pt, "p_w", pw), f"{pw}.p_w"))
            q.append(_as_float(_require(pt, "q_w", pw), f"{pw}.q_w"))
            h.append(_as_float(_require(pt, "heat_w", pw), f"{pw}.heat_w"))
            cost.append(_as_float(_require(pt, "cost", pw), f"{pw}.cost"))
        pa = _as_positive(_require(cdd, "pump_a", where), f"{where}.pump_a")
        pb = _as_positive(_require(cdd, "pump_b", where), f"{where}.pump_b")
        pc = _as_positive(_require(cdd, "pump_c", where), f"{where}.pump_c")
        eff = _as_float(_require(cdd, "pump_efficiency", where), f"{where}.pump_efficiency")
        if not (0 < eff <= 1):
            raise ScenarioSchemaError(f"{where}: pump_efficiency must be in (0, 1]")
        tmin = _as_float(_require(cdd, "supply_temp_min_c", where), f"{where}.supply_temp_min_c")
        tmax = _as_float(_require(cdd, "supply_temp_max_c", where), f"{where}.supply_temp_max_c")
        if tmin > tmax:
            raise ScenarioSchemaError(f"{where}: supply temperature bounds are inverted")
        chps.append(ChpUnit(
            node=_as_id(_require(cdd, "node", where), where),
            extreme_p_w=np.asarray(p), extreme_q_w=np.asarray(q),
            extreme_heat_w=np.asarray(h), vertex_cost=np.asarray(cost),
            supply_temp_min_c=tmin, supply_temp_max_c=tmax,
            pump_a=pa, pump_b=pb, pump_c=pc, pump_efficiency=eff,
            q_rs_max_m3s=_as_positive(cdd.get("q_rs_max_m3s", DEFAULT_Q_MAX),
                                      f"{where}.q_rs_max_m3s"),
        ))
    loads = []
    for i, ldd in enumerate(d.get("loads", [])):
        where = f"heat.loads[{i}]"
        _check_keys(ldd, {"node", "demand_w", "return_temp_min_c", "return_temp_max_c",
                          "min_head_sep_m"}, where)
        tmin = _as_float(_require(ldd, "return_temp_min_c", where), f"{where}.return_temp_min_c")
        tmax = _as_float(_require(ldd, "return_temp_max_c", where), f"{where}.return_temp_max_c")
        if tmin > tmax:
            raise ScenarioSchemaError(f"{where}: return temperature bounds are inverted")
        demand = _as_profile(_require(ldd, "demand_w", where), slots, f"{where}.demand_w")
        if np.any(demand < 0):
            raise ScenarioSchemaError(f"{where}: heating demand must be >= 0")
        loads.append(HeatLoad(
            node=_as_id(_require(ldd, "node", where), where),
            demand_w=demand, return_temp_min_c=tmin, return_temp_max_c=tmax,
            min_head_sep_m=_as_float(ldd.get("min_head_sep_m", 0.0), f"{where}.min_head_sep_m"),
        ))
    junction_ids = [_as_id(j, f"heat.junctions[{i}]")
                    for i, j in enumerate(d.get("junctions", []))]
    pipes = []
    for side, key in (("supply", "supply_pipes"), ("return", "return_pipes")):
        for i, pd in enumerate(d.get(key, [])):
            where = f"heat.{key}[{i}]"
            _check_keys(pd, {"sender", "receiver", "friction_s2m5", "xi_m3s", "q_max_m3s"}, where)
            pipes.append(HeatPipe(
                sender=_as_id(_require(pd, "sender", where), where),
                receiver=_as_id(_require(pd, "receiver", where), where),
                side=side,
                friction_s2m5=_as_positive(_require(pd, "friction_s2m5", where),
                                           f"{where}.friction_s2m5"),
                xi_m3s=_as_positive(_require(pd, "xi_m3s", where), f"{where}.xi_m3s"),
                q_max_m3s=_as_positive(pd.get("q_max_m3s", DEFAULT_Q_MAX), f"{where}.q_max_m3s"),
            ))
    ambient = _as_profile(d.get("ambient_c", 10.0), slots, "heat.ambient_c")
    return HeatNetwork(chps=chps, loads=loads, junction_ids=junction_ids,
                       pipes=pipes, ambient_c=ambient)


def _load_coupling(d: dict) -> CouplingMap:
    _check_keys(d, {"water_pumps", "chp_units"}, "coupling")
    pump_nodes: dict[tuple[str, str], str] = {}
    for i, wd in enumerate(d.get("water_pumps", [])):
        where = f"coupling.water_pumps[{i}]"
        _check_keys(wd, {"pipe", "power_node"}, where)
        pipe = _require(wd, "pipe", where)
        if not (isinstance(pipe, list) and len(pipe) == 2):
            raise ScenarioSchemaError(f"{where}.pipe: expected [sender, receiver]")
        key = (_as_id(pipe[0], where), _as_id(pipe[1], where))
        pump_nodes[key] = _as_id(_require(wd, "power_node", where), where)
    chp_nodes: dict[str, str] = {}
    chp_pump_nodes: dict[str, str] = {}
    for i, cd in enumerate(d.get("chp_units", [])):
        where = f"coupling.chp_units[{i}]"
        _check_keys(cd, {"heat_node", "power_node", "pump_power_node"}, where)
        hn = _as_id(_require(cd, "heat_node", where), where)
        pn = _as_id(_require(cd, "power_node", where), where)
        chp_nodes[hn] = pn
        chp_pump_nodes[hn] = _as_id(cd.get("pump_power_node", pn), where)
    return CouplingMap(pump_nodes=pump_nodes, chp_nodes=chp_nodes,
                       chp_pump_nodes=chp_pump_nodes)


def _check_references(s: Scenario) -> None:
    """Dangling-id checks; raised at load time, before structural validation."""
    power_ids = set(s.power.node_ids())
    if s.power.slack_node not in power_ids:
        raise ScenarioReferenceError(f"slack node {s.power.slack_node!r} is not a power node")
    for ln in s.power.lines:
        for nid in (ln.sender, ln.receiver):
            if nid not in power_ids:
                raise ScenarioReferenceError(f"power line {ln.sender}->{ln.receiver}: "
                                             f"unknown node {nid!r}")
    for der in s.power.ders:
        if der.node not in power_ids:
            raise ScenarioReferenceError(f"DER at unknown power node {der.node!r}")

    water_ids = set(s.water.node_ids())
    if len(water_ids) != len(s.water.node_ids()):
        raise ScenarioReferenceError("duplicate water node id")
    for p in s.water.pipes:
        for nid in (p.sender, p.receiver):
            if nid not in water_ids:
                raise ScenarioReferenceError(f"water pipe {p.sender}->{p.receiver}: "
                                             f"unknown node {nid!r}")

    heat_ids = set(s.heat.node_ids())
    if len(heat_ids) != len(s.heat.node_ids()):
        raise ScenarioReferenceError("duplicate heat node id")
    for p in s.heat.pipes:
        for nid in (p.sender, p.receiver):
            if nid not in heat_ids:
                raise ScenarioReferenceError(f"heat {p.side} pipe {p.sender}->{p.receiver}: "
                                             f"unknown node {nid!r}")

    pump_keys = {p.key for p in s.water.pump_pipes()}
    for key, node in s.coupling.pump_nodes.items():
        if key not in pump_keys:
            raise ScenarioReferenceError(f"coupling names unknown pump pipe {key}")
        if node not in power_ids:
            raise ScenarioReferenceError(f"pump {key} coupled to unknown power node {node!r}")
    chp_heat_nodes = {c.node for c in s.heat.chps}
    for hn, pn in s.coupling.chp_nodes.items():
        if hn not in chp_heat_nodes:
            raise ScenarioReferenceError(f"coupling names unknown CHP heat node {hn!r}")
        if pn not in power_ids:
            raise ScenarioReferenceError(f"CHP {hn} coupled to unknown power node {pn!r}")
    for hn, pn in s.coupling.chp_pump_nodes.items():
        if pn not in power_ids:
            raise ScenarioReferenceError(f"CHP pump {hn} coupled to unknown power node {pn!r}")


# ---------------------------------------------------------------------------
# validation (structural findings on a well-formed scenario; pure)
# ---------------------------------------------------------------------------

@dataclass
class Finding:
    code: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding]

    @property
    def ok(self) -> bool:
        return not self.findings

    def codes(self) -> list[str]:
        return [f.code for f in self.findings]


def _find_power_cycle(lines, parent: dict[str, str | None]) -> list[str] | None:
    """Name one cycle closed by a non-tree line, if any."""
    tree = {(u, p) for u, p in parent.items() if p is not None}

    def path_to_root(u: str) -> list[str]:
        out = [u]
        while parent.get(out[-1]) is not None:
            out.append(parent[out[-1]])
        return out

    for ln in lines:
        u, v = ln.sender, ln.receiver
        if u == v:
            return [u, v]
        if (u, v) in tree or (v, u) in tree:
            continue
        pu, pv = path_to_root(u), path_to_root(v)
        while len(pu) > 1 and len(pv) > 1 and pu[-2] == pv[-2]:
            pu.pop()
            pv.pop()
        return pu + list(reversed(pv))[1:] + [u]
    return None


def validate_scenario(s: Scenario) -> ValidationReport:
    """Structural checks beyond reference integrity.

    Reports (never raises): power graph not a tree rooted at the slack node,
    tank halves wired wrongly, unpaired supply/return pipes, coupling map not
    covering every pump and CHP, and non-physical profile signs.
    """
    findings: list[Finding] = []

    # power network must be a tree rooted at the slack node
    ids = s.power.node_ids()
    n, m = len(ids), len(s.power.lines)
    adj: dict[str, set[str]] = {i: set() for i in ids}
    seen_edges: set[frozenset] = set()
    for ln in s.power.lines:
        e = frozenset((ln.sender, ln.receiver))
        if e in seen_edges or len(e) == 1:
            findings.append(Finding("power.not_a_tree",
                                    f"parallel or self line {ln.sender}->{ln.receiver}"))
        seen_edges.add(e)
        adj[ln.sender].add(ln.receiver)
        adj[ln.receiver].add(ln.sender)
    parent: dict[str, str | None] = {s.power.slack_node: None}
    stack = [s.power.slack_node]
    while stack:
        cur = stack.pop()
        for nb in sorted(adj[cur]):
            if nb not in parent:
                parent[nb] = cur
                stack.append(nb)
    if len(parent) != n:
        findings.append(Finding("power.not_a_tree",
                                f"{n - len(parent)} node(s) unreachable from the slack node"))
    elif m != n - 1:
        cycle = _find_power_cycle(s.power.lines, parent)
        detail = ("cycle " + "->".join(cycle)) if cycle else \
            f"{m} lines for {n} nodes; a radial network needs {n - 1}"
        findings.append(Finding("power.not_a_tree", detail))

    # tanks: split halves must be distinct, unconnected, and oriented in->out
    water_pipe_keys = {p.key for p in s.water.pipes}
    for t in s.water.tanks:
        if t.inlet == t.outlet:
            findings.append(Finding("water.tank_split",
                                    f"tank {t.inlet}: inlet and outlet must be distinct nodes"))
        if (t.inlet, t.outlet) in water_pipe_keys or (t.outlet, t.inlet) in water_pipe_keys:
            findings.append(Finding("water.tank_split",
                                    f"tank {t.inlet}/{t.outlet}: no pipe may join the two halves"))
        for p in s.water.pipes:
            if p.sender == t.inlet:
                findings.append(Finding("water.tank_split",
                                        f"tank inlet {t.inlet} must not send flow (pipe to {p.receiver})"))
            if p.receiver == t.outlet:
                findings.append(Finding("water.tank_split",
                                        f"tank outlet {t.outlet} must not receive flow (pipe from {p.sender})"))

    # every supply pipe needs a reversed return twin, and vice versa
    supply = {p.key for p in s.heat.supply_pipes()}
    ret = {p.key for p in s.heat.return_pipes()}
    for i, j in sorted(supply):
        if (j, i) not in ret:
            findings.append(Finding("heat.unpaired_pipe",
                                    f"supply pipe {i}->{j} has no return twin {j}->{i}"))
    for j, i in sorted(ret):
        if (i, j) not in supply:
            findings.append(Finding("heat.unpaired_pipe",
                                    f"return pipe {j}->{i} has no supply twin {i}->{j}"))

    # coupling must cover every pump pipe and every CHP
    for p in s.water.pump_pipes():
        if p.key not in s.coupling.pump_nodes:
            findings.append(Finding("coupling.uncovered_pump",
                                    f"pump pipe {p.sender}->{p.receiver} has no power node"))
    for c in s.heat.chps:
        if c.node not in s.coupling.chp_nodes:
            findings.append(Finding("coupling.uncovered_chp",
                                    f"CHP at {c.node} has no power node"))

    # sign sanity on demand profiles
    for j in s.water.junctions:
        if np.any(j.demand_m3s < 0):
            findings.append(Finding("water.negative_demand",
                                    f"junction {j.id} has negative demand"))

    return ValidationReport(findings)


# ---------------------------------------------------------------------------
# serialization (inverse of loading; round-trips exactly)
# ---------------------------------------------------------------------------

def _profile_out(a: np.ndarray) -> list | float:
    vals = [float(x) for x in a]
    if vals and all(v == vals[0] for v in vals):
        return vals[0]
    return vals


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "schema_version": s.schema_version,
        "horizon": {"slot_count": s.horizon.slot_count,
                    "slot_duration_s": s.horizon.slot_duration_s},
        "constants": {
            "gravity_m_s2": s.constants.gravity_m_s2,
            "water_density_kg_m3": s.constants.water_density_kg_m3,
            "heat_capacity_j_m3k": s.constants.heat_capacity_j_m3k,
        },
        "power": {
            "s_base_va": s.power.s_base_va,
            "v_base_v": s.power.v_base_v,
            "slack_node": s.power.slack_node,
            "slack_voltage_sq_pu": s.power.slack_voltage_sq_pu,
            "nodes": [{
                "id": n.id,
                "p_load_pu": _profile_out(n.p_load_pu),
                "q_load_pu": _profile_out(n.q_load_pu),
                "v_min_sq_pu": n.v_min_sq_pu,
                "v_max_sq_pu": n.v_max_sq_pu,
            } for n in s.power.nodes],
            "lines": [{"sender": l.sender, "receiver": l.receiver,
                       "r_pu": l.r_pu, "x_pu": l.x_pu} for l in s.power.lines],
            "ders": [{
                "node": r.node,
                "p_min_w": _profile_out(r.p_min_w), "p_max_w": _profile_out(r.p_max_w),
                "q_min_w": _profile_out(r.q_min_w), "q_max_w": _profile_out(r.q_max_w),
                **({"s_max_w": r.s_max_w} if r.s_max_w is not None else {}),
                "cost_per_wh": r.cost_per_wh,
                "cost_quad_per_wh2": r.cost_quad_per_wh2,
            } for r in s.power.ders],
        },
        "water": {
            "junctions": [{"id": j.id, "demand_m3s": _profile_out(j.demand_m3s),
                           "min_head_m": j.min_head_m} for j in s.water.junctions],
            "tanks": [{"inlet": t.inlet, "outlet": t.outlet,
                       "cross_section_m2": t.cross_section_m2,
                       "initial_head_m": t.initial_head_m,
                       "min_head_m": t.min_head_m} for t in s.water.tanks],
            "reservoirs": [{"id": r.id, "head_m": r.head_m} for r in s.water.reservoirs],
            "pipes": [{
                "sender": p.sender, "receiver": p.receiver, "kind": p.kind,
                **({"friction_s2m5": p.friction_s2m5} if p.kind == "plain" else {}),
                **({"pump_a": p.pump_a, "pump_b": p.pump_b, "pump_c": p.pump_c,
                    "efficiency": p.efficiency} if p.kind == "pump" else {}),
                "q_max_m3s": p.q_max_m3s,
            } for p in s.water.pipes],
        },
        "heat": {
            "chps": [{
                "node": c.node,
                "extreme_points": [{"p_w": float(p), "q_w": float(q),
                                    "heat_w": float(h), "cost": float(cc)}
                                   for p, q, h, cc in zip(c.extreme_p_w, c.extreme_q_w,
                                                          c.extreme_heat_w, c.vertex_cost)],
                "supply_temp_min_c": c.supply_temp_min_c,
                "supply_temp_max_c": c.supply_temp_max_c,
                "pump_a": c.pump_a, "pump_b": c.pump_b, "pump_c": c.pump_c,
                "pump_efficiency": c.pump_efficiency,
                "q_rs_max_m3s": c.q_rs_max_m3s,
            } for c in s.heat.chps],
            "loads": [{
                "node": l.node, "demand_w": _profile_out(l.demand_w),
                "return_temp_min_c": l.return_temp_min_c,
                "return_temp_max_c": l.return_temp_max_c,
                "min_head_sep_m": l.min_head_sep_m,
            } for l in s.heat.loads],
            "junctions": list(s.heat.junction_ids),
            "supply_pipes": [{
                "sender": p.sender, "receiver": p.receiver,
                "friction_s2m5": p.friction_s2m5, "xi_m3s": p.xi_m3s,
                "q_max_m3s": p.q_max_m3s,
            } for p in s.heat.supply_pipes()],
            "return_pipes": [{
                "sender": p.sender, "receiver": p.receiver,
                "friction_s2m5": p.friction_s2m5, "xi_m3s": p.xi_m3s,
                "q_max_m3s": p.q_max_m3s,
            } for p in s.heat.return_pipes()],
            "ambient_c": _profile_out(s.heat.ambient_c),
        },
        "coupling": {
            "water_pumps": [{"pipe": [k[0], k[1]], "power_node": v}
                            for k, v in s.coupling.pump_nodes.items()],
            "chp_units": [{"heat_node": hn, "power_node": pn,
                           **({"pump_power_node": s.coupling.chp_pump_nodes[hn]}
                              if s.coupling.chp_pump_nodes.get(hn, pn) != pn else {})}
                          for hn, pn in s.coupling.chp_nodes.items()],
        },
        "prices": {
            "electricity_per_wh": _profile_out(s.prices.electricity_per_wh),
            "water_per_m3": _profile_out(s.prices.water_per_m3),
        },
    }


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"
