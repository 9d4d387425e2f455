"""Post-solve studies on top of the scheduler.

Three independent tools live here: a sensitivity comparison of the two ways
to steer a heating pipe (push more water or push hotter water), a
three-point spread estimate of the schedule cost under uncertain inputs,
and the joint-versus-separate cost attribution table.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

from .model import (
    DEFAULT_DENSITY,
    DEFAULT_GRAVITY,
    Scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from .scheduler import ScheduleResult, SolverOptions, solve_opwhf, solve_separate


class AnalysisError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# pipe energy loss and its sensitivities
# ---------------------------------------------------------------------------

# mass-specific heat capacity of water [J/(kg K)]
SPECIFIC_HEAT_J_KGK = 4186.0

# default operating window the mode studies sweep over
DEFAULT_Q_RANGE_M3S = (1e-3, 0.02)
DEFAULT_TEMP_BAND_C = (60.0, 95.0)
DEFAULT_AMBIENT_C = 10.0

# geometry laws used when a query is built from pipe dimensions: friction
# grows with length over the fifth power of diameter, the thermal decay
# constant with the lateral surface, and the water mass with the volume
K_FRICTION_S2_M = 800.0
K_THERMAL_M_S = 3e-7

# sensitivities are compared per control step: one step of the flow handle
# moves this many m^3/s, one step of the temperature handle moves 1 degree
DEFAULT_FLOW_STEP_M3S = 1e-3


@dataclass(frozen=True)
class SensitivityQuery:
    """One pipe's parameters for the energy-loss sensitivity study.

    ``temp_band_c`` spans the supply temperatures the study should cover;
    the flow-side sensitivity depends on the temperature, so the band turns
    into an envelope of curves.  A degenerate band collapses the envelope.
    """
    mass_kg: float
    friction_s2m5: float
    xi_m3s: float
    temp_c: float
    temp_ref_c: float
    heat_capacity_j_kgk: float = SPECIFIC_HEAT_J_KGK
    gravity_m_s2: float = DEFAULT_GRAVITY
    q_lo_m3s: float = DEFAULT_Q_RANGE_M3S[0]
    q_hi_m3s: float = DEFAULT_Q_RANGE_M3S[1]
    temp_band_c: tuple[float, float] | None = None
    flow_step_m3s: float = DEFAULT_FLOW_STEP_M3S
    length_m: float | None = None
    diameter_m: float | None = None

    def __post_init__(self):
        if self.q_lo_m3s <= 0 or self.q_hi_m3s < self.q_lo_m3s:
            raise ValueError(
                f"flow range must satisfy 0 < lo <= hi, got "
                f"({self.q_lo_m3s}, {self.q_hi_m3s})")
        if self.friction_s2m5 <= 0:
            raise ValueError(f"friction must be > 0, got {self.friction_s2m5}")
        if self.xi_m3s < 0:
            raise ValueError(f"thermal constant must be >= 0, got {self.xi_m3s}")

    def band(self) -> tuple[float, float]:
        if self.temp_band_c is None:
            return (self.temp_c, self.temp_c)
        lo, hi = self.temp_band_c
        return (min(lo, hi), max(lo, hi))


def query_from_geometry(length_m: float, diameter_m: float,
                        temp_c: float = 80.0,
                        temp_ref_c: float = DEFAULT_AMBIENT_C,
                        temp_band_c: tuple[float, float] = DEFAULT_TEMP_BAND_C,
                        q_range_m3s: tuple[float, float] = DEFAULT_Q_RANGE_M3S,
                        k_friction: float = K_FRICTION_S2_M,
                        k_thermal: float = K_THERMAL_M_S,
                        density_kg_m3: float = DEFAULT_DENSITY,
                        ) -> SensitivityQuery:
    """Build a query for a pipe given only its length and diameter."""
    if length_m <= 0 or diameter_m <= 0:
        raise ValueError("pipe geometry must be positive")
    area = math.pi * diameter_m * diameter_m / 4.0
    return SensitivityQuery(
        mass_kg=density_kg_m3 * area * length_m,
        friction_s2m5=k_friction * length_m / diameter_m ** 5,
        xi_m3s=k_thermal * length_m * diameter_m,
        temp_c=temp_c,
        temp_ref_c=temp_ref_c,
        temp_band_c=temp_band_c,
        q_lo_m3s=q_range_m3s[0],
        q_hi_m3s=q_range_m3s[1],
        length_m=length_m,
        diameter_m=diameter_m,
    )


def pipe_energy_loss(qy: SensitivityQuery, q_m3s: float) -> float:
    """Energy lost along the pipe at flow q: friction head plus heat decay.

    The hydraulic part lifts the water back over the friction drop F*q^2;
    the thermal part is the heat the water sheds toward the reference
    temperature over the traversal, scaled by exp(-xi/q).
    """
    if q_m3s <= 0:
        raise ValueError(f"flow must be > 0, got {q_m3s}")
    hydraulic = qy.mass_kg * qy.gravity_m_s2 * qy.friction_s2m5 * q_m3s * q_m3s
    thermal = (qy.heat_capacity_j_kgk * qy.mass_kg
               * (qy.temp_c - qy.temp_ref_c) * math.exp(-qy.xi_m3s / q_m3s))
    return hydraulic + thermal


def loss_sensitivities(qy: SensitivityQuery, q_m3s: float) -> tuple[float, float]:
    """Partial derivatives of the loss with respect to flow and temperature."""
    if q_m3s <= 0:
        raise ValueError(f"flow must be > 0, got {q_m3s}")
    decay = math.exp(-qy.xi_m3s / q_m3s)
    d_dq = (2.0 * qy.mass_kg * qy.gravity_m_s2 * qy.friction_s2m5 * q_m3s
            + qy.heat_capacity_j_kgk * qy.mass_kg * (qy.temp_c - qy.temp_ref_c)
            * decay * qy.xi_m3s / (q_m3s * q_m3s))
    d_dtau = qy.heat_capacity_j_kgk * qy.mass_kg * decay
    return d_dq, d_dtau


# ---------------------------------------------------------------------------
# control-mode classification
# ---------------------------------------------------------------------------

class ControlMode(Enum):
    FLOW_RATE = "flow_rate"
    TEMPERATURE = "temperature"
    MIXED = "mixed"


@dataclass(frozen=True)
class ModeVerdict:
    mode: ControlMode
    intersection_1_m3s: float | None = None
    intersection_2_m3s: float | None = None


BISECT_TOL_M3S = 1e-6
_SCAN_POINTS = 256


def _margin(qy: SensitivityQuery, temp_c: float, q: float) -> float:
    """Per-step flow sensitivity minus per-degree temperature sensitivity.

    Positive means a flow step moves the loss harder than a temperature
    step, so flow is the stronger handle at this flow.
    """
    d_dq, d_dtau = loss_sensitivities(replace(qy, temp_c=temp_c), q)
    return qy.flow_step_m3s * d_dq - d_dtau


def _scan_grid(qy: SensitivityQuery) -> list[float]:
    lo, hi = qy.q_lo_m3s, qy.q_hi_m3s
    if hi == lo:
        return [lo]
    ratio = hi / lo
    return [lo * ratio ** (k / (_SCAN_POINTS - 1)) for k in range(_SCAN_POINTS)]


def _bisect(f: Callable[[float], float], lo: float, hi: float) -> float:
    flo = f(lo)
    while hi - lo > BISECT_TOL_M3S:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _first_root(f: Callable[[float], float], grid: Sequence[float]) -> float | None:
    for a, b in zip(grid, grid[1:]):
        if (f(a) > 0) != (f(b) > 0):
            return _bisect(f, a, b)
    return None


def _last_root(f: Callable[[float], float], grid: Sequence[float]) -> float | None:
    rev = list(reversed(grid))
    for hi, lo in zip(rev, rev[1:]):
        if (f(lo) > 0) != (f(hi) > 0):
            return _bisect(f, lo, hi)
    return None


def classify_control_mode(qy: SensitivityQuery) -> ModeVerdict:
    """Which handle steers the pipe's losses harder over the flow range.

    The flow-side sensitivity forms a band as the temperature sweeps the
    query's envelope; the temperature-side sensitivity does not depend on
    the temperature itself.  Intersection 1 is where the weak edge of the
    flow band crosses the temperature curve, intersection 2 where the
    strong edge does.  Left of 1 even the weakest flow response dominates,
    right of 2 even the strongest one loses, and the overlap in between is
    genuinely mixed.
    """
    t_lo, t_hi = qy.band()
    grid = _scan_grid(qy)
    weak = lambda q: _margin(qy, t_lo, q)
    strong = lambda q: _margin(qy, t_hi, q)
    if all(weak(q) > 0 for q in grid):
        return ModeVerdict(ControlMode.FLOW_RATE)
    if all(strong(q) <= 0 for q in grid):
        return ModeVerdict(ControlMode.TEMPERATURE)
    i1 = _first_root(weak, grid)
    i2 = _last_root(strong, grid)
    if i1 is not None and i2 is not None and i2 < i1:
        i1, i2 = i2, i1
    return ModeVerdict(ControlMode.MIXED,
                       intersection_1_m3s=i1, intersection_2_m3s=i2)


# ---------------------------------------------------------------------------
# control-mode map over pipe geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeMapPoint:
    length_m: float
    diameter_m: float
    friction_s2m5: float
    mode: ControlMode
    friction_crit_lo_s2m5: float
    friction_crit_hi_s2m5: float


@dataclass
class ControlModeMap:
    lengths_m: list[float]
    diameters_m: list[float]
    points: list[ModeMapPoint] = field(default_factory=list)

    def mode_at(self, length_m: float, diameter_m: float) -> ControlMode:
        for p in self.points:
            if p.length_m == length_m and p.diameter_m == diameter_m:
                return p.mode
        raise KeyError(f"no grid point at ({length_m}, {diameter_m})")

    def to_csv(self) -> str:
        lines = ["length_m,diameter_m,friction_s2m5,mode,"
                 "friction_crit_lo_s2m5,friction_crit_hi_s2m5"]
        for p in self.points:
            lines.append(f"{p.length_m:.6g},{p.diameter_m:.6g},"
                         f"{p.friction_s2m5:.6g},{p.mode.value},"
                         f"{p.friction_crit_lo_s2m5:.6g},"
                         f"{p.friction_crit_hi_s2m5:.6g}")
        return "\n".join(lines) + "\n"


def _critical_frictions(qy: SensitivityQuery) -> tuple[float, float]:
    """Friction levels where the verdict flips, at this query's other fields.

    Both margins grow with friction, so each boundary is monotone: below
    the lower critical the whole range is temperature-led, above the upper
    critical it is flow-led.
    """
    t_lo, t_hi = qy.band()
    grid = _scan_grid(qy)

    def worst_weak(f: float) -> float:
        q2 = replace(qy, friction_s2m5=f)
        return min(_margin(q2, t_lo, q) for q in grid)

    def best_strong(f: float) -> float:
        q2 = replace(qy, friction_s2m5=f)
        return max(_margin(q2, t_hi, q) for q in grid)

    def flip(fn: Callable[[float], float]) -> float:
        lo, hi = 1e-9, 1.0
        while fn(hi) <= 0:
            hi *= 10.0
            if hi > 1e15:
                return math.inf
        while fn(lo) > 0:
            lo /= 10.0
            if lo < 1e-15:
                return 0.0
        for _ in range(80):
            mid = math.sqrt(lo * hi)
            if fn(mid) > 0:
                hi = mid
            else:
                lo = mid
        return math.sqrt(lo * hi)

    return flip(best_strong), flip(worst_weak)


def control_mode_map(length_range_m: tuple[float, float],
                     diameter_range_m: tuple[float, float],
                     resolution: tuple[int, int] = (8, 8),
                     k_friction: float = K_FRICTION_S2_M,
                     k_thermal: float = K_THERMAL_M_S,
                     **query_kwargs) -> ControlModeMap:
    """Classify the control mode over a grid of pipe lengths and diameters."""
    n_len, n_dia = resolution
    if n_len < 2 or n_dia < 2:
        raise ValueError("resolution must be at least 2 per axis")

    def axis(rng, n):
        lo, hi = rng
        pts = [lo + (hi - lo) * k / (n - 1) for k in range(n)]
        pts[-1] = hi  # land exactly on the declared box edge
        return pts

    lengths = axis(length_range_m, n_len)
    diameters = axis(diameter_range_m, n_dia)
    out = ControlModeMap(lengths_m=lengths, diameters_m=diameters)
    for length in lengths:
        for dia in diameters:
            qy = query_from_geometry(length, dia, k_friction=k_friction,
                                     k_thermal=k_thermal, **query_kwargs)
            crit_lo, crit_hi = _critical_frictions(qy)
            out.points.append(ModeMapPoint(
                length_m=length, diameter_m=dia,
                friction_s2m5=qy.friction_s2m5,
                mode=classify_control_mode(qy).mode,
                friction_crit_lo_s2m5=crit_lo,
                friction_crit_hi_s2m5=crit_hi))
    return out


# ---------------------------------------------------------------------------
# three-point uncertainty propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UncertaintySpec:
    """Relative standard deviations of the uncertain inputs, as fractions."""
    sigma_solar: float = 0.0
    sigma_power: float = 0.0
    sigma_water: float = 0.0
    sigma_heat: float = 0.0

    def __post_init__(self):
        for name, v in self.items():
            if not 0.0 <= v <= 0.5:
                raise ValueError(f"sigma_{name} must lie in [0, 0.5], got {v}")

    def items(self) -> list[tuple[str, float]]:
        return [("solar", self.sigma_solar), ("power", self.sigma_power),
                ("water", self.sigma_water), ("heat", self.sigma_heat)]

    def scaled(self, factor: float) -> "UncertaintySpec":
        return UncertaintySpec(*(v * factor for _, v in self.items()))


def _scale_profile(value, factor: float):
    if isinstance(value, list):
        return [v * factor for v in value]
    return value * factor


def _scaled_scenario(s: Scenario, input_name: str, factor: float) -> Scenario:
    """Scenario with one uncertain input multiplied through by ``factor``.

    Solar means the available output of free-running resources (zero
    marginal cost); fueled units keep their ratings.
    """
    doc = copy.deepcopy(scenario_to_dict(s))
    if input_name == "solar":
        for der in doc["power"].get("ders", []):
            if der.get("cost_per_wh", 0.0) == 0.0 and der.get(
                    "cost_quad_per_wh2", 0.0) == 0.0:
                der["p_max_w"] = _scale_profile(der["p_max_w"], factor)
    elif input_name == "power":
        for node in doc["power"]["nodes"]:
            node["p_load_pu"] = _scale_profile(node["p_load_pu"], factor)
            node["q_load_pu"] = _scale_profile(node["q_load_pu"], factor)
    elif input_name == "water":
        for j in doc["water"].get("junctions", []):
            j["demand_m3s"] = _scale_profile(j["demand_m3s"], factor)
    elif input_name == "heat":
        for load in doc["heat"].get("loads", []):
            load["demand_w"] = _scale_profile(load["demand_w"], factor)
    else:
        raise ValueError(f"unknown uncertain input {input_name!r}")
    return scenario_from_dict(doc)


@dataclass
class UncertaintyResult:
    mean: float
    std: float
    evaluations: dict[str, float] = field(default_factory=dict)

    @property
    def relative_std(self) -> float:
        if self.mean == 0.0:
            return 0.0 if self.std == 0.0 else math.inf
        return self.std / abs(self.mean)


# the two-moment three-point scheme: mass 2/3 at the mean and 1/6 at each
# of mean +- sqrt(3) sigma reproduces the first and second moments exactly
_SHIFT = math.sqrt(3.0)
_W_CENTER = 2.0 / 3.0
_W_SIDE = 1.0 / 6.0


def three_point_estimate(s: Scenario, u: UncertaintySpec,
                         solve: Callable[[Scenario], float] | None = None,
                         ) -> UncertaintyResult:
    """Spread of the schedule cost when inputs wobble around their forecast.

    Each uncertain input is evaluated at its mean and the two concentration
    points of the three-point scheme while the others stay at their means;
    first and second moments combine across inputs as independent.
    """
    if solve is None:
        solve = lambda sc: solve_opwhf(sc).objective

    def run(tag: str, sc: Scenario) -> float:
        try:
            return solve(sc)
        except Exception as e:
            raise AnalysisError(f"solve failed at point {tag}: {e}") from e

    evals: dict[str, float] = {}
    center = run("center", s)
    evals["center"] = center
    m1, m2 = center, center * center
    for name, sigma in u.items():
        if sigma == 0.0:
            continue
        f_up = run(f"{name}+", _scaled_scenario(s, name, 1.0 + _SHIFT * sigma))
        f_dn = run(f"{name}-", _scaled_scenario(s, name, 1.0 - _SHIFT * sigma))
        evals[f"{name}+"] = f_up
        evals[f"{name}-"] = f_dn
        m1 += _W_SIDE * (f_up + f_dn) - 2.0 * _W_SIDE * center
        m2 += (_W_SIDE * (f_up * f_up + f_dn * f_dn)
               - 2.0 * _W_SIDE * center * center)
    var = max(0.0, m2 - m1 * m1)
    return UncertaintyResult(mean=m1, std=math.sqrt(var), evaluations=evals)


# ---------------------------------------------------------------------------
# joint versus separate cost attribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostRow:
    power: float
    water: float
    heating: float

    @property
    def total(self) -> float:
        return self.power + self.water + self.heating


@dataclass
class CostBreakdown:
    separate: CostRow
    joint: CostRow
    separate_certified: bool = True
    joint_certified: bool = True

    @property
    def savings(self) -> float:
        return self.separate.total - self.joint.total

    def to_csv(self) -> str:
        lines = ["item,separate,joint"]
        for name in ("power", "water", "heating"):
            lines.append(f"{name},{getattr(self.separate, name):.6f},"
                         f"{getattr(self.joint, name):.6f}")
        lines.append(f"total,{self.separate.total:.6f},{self.joint.total:.6f}")
        return "\n".join(lines) + "\n"


def _attribute(res: ScheduleResult) -> CostRow:
    """Fold the raw cost terms into the three-network attribution.

    The water network pays for its draws and its pumping electricity; the
    heating network pays generation and pumping net of the electricity it
    sells; the power network keeps the remainder so nothing is counted
    twice.
    """
    b = res.breakdown
    water = b["water_draw"] + b["wpump_electricity"]
    heating = (b["chp"] + b["hpump_electricity"]
               - b["chp_electricity_revenue"])
    return CostRow(power=b["total"] - water - heating,
                   water=water, heating=heating)


def compare_joint_separate(s: Scenario,
                           opts: SolverOptions | None = None) -> CostBreakdown:
    """Solve both ways and attribute the costs to the three networks."""
    sep = solve_separate(s, opts)
    joint = solve_opwhf(s, opts)
    return CostBreakdown(separate=_attribute(sep), joint=_attribute(joint),
                         separate_certified=sep.certified,
                         joint_certified=joint.certified)
