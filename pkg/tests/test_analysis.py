import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coflow.analysis import (
    AnalysisError,
    ControlMode,
    CostBreakdown,
    CostRow,
    SensitivityQuery,
    UncertaintySpec,
    classify_control_mode,
    compare_joint_separate,
    control_mode_map,
    loss_sensitivities,
    pipe_energy_loss,
    query_from_geometry,
    three_point_estimate,
)
from coflow.model import scenario_from_dict

from conftest import small_doc


def make_query(**overrides) -> SensitivityQuery:
    base = dict(mass_kg=1000.0, friction_s2m5=2e7, xi_m3s=1e-4,
                temp_c=75.0, temp_ref_c=10.0,
                q_lo_m3s=5e-3, q_hi_m3s=0.02, temp_band_c=(70.0, 80.0))
    base.update(overrides)
    return SensitivityQuery(**base)


# --- energy loss law ------------------------------------------------------

def test_loss_pure_hydraulic_when_temperatures_match():
    qy = make_query(mass_kg=2.0, friction_s2m5=3.0, temp_c=50.0,
                    temp_ref_c=50.0, temp_band_c=None)
    assert pipe_energy_loss(qy, 0.5) == pytest.approx(2.0 * 9.81 * 3.0 * 0.25)


def test_loss_unit_case_frozen():
    qy = make_query(mass_kg=1.0, friction_s2m5=1.0, temp_c=10.0,
                    temp_ref_c=10.0, temp_band_c=None)
    assert pipe_energy_loss(qy, 1.0) == pytest.approx(9.81)


def test_loss_thermal_term_saturates_at_high_flow():
    qy = make_query(mass_kg=1.0, friction_s2m5=1e-6, temp_c=80.0)
    q = 1e6
    hydraulic = qy.mass_kg * qy.gravity_m_s2 * qy.friction_s2m5 * q * q
    thermal_cap = qy.heat_capacity_j_kgk * qy.mass_kg * 70.0
    assert pipe_energy_loss(qy, q) - hydraulic == pytest.approx(
        thermal_cap, rel=1e-9)


def test_loss_rejects_nonpositive_flow():
    with pytest.raises(ValueError, match="flow"):
        pipe_energy_loss(make_query(), 0.0)
    with pytest.raises(ValueError, match="flow"):
        loss_sensitivities(make_query(), -1.0)


def test_query_validation():
    with pytest.raises(ValueError, match="friction"):
        make_query(friction_s2m5=0.0)
    with pytest.raises(ValueError, match="flow range"):
        make_query(q_lo_m3s=0.0)


# --- sensitivities --------------------------------------------------------

def test_temperature_sensitivity_frozen():
    # unit heat capacity and mass, xi equal to q: d/dtau is exp(-1)
    qy = make_query(mass_kg=1.0, heat_capacity_j_kgk=1.0, xi_m3s=0.01)
    _, d_dtau = loss_sensitivities(qy, 0.01)
    assert d_dtau == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_flow_sensitivity_vanishes_without_friction_or_gradient():
    qy = make_query(friction_s2m5=1e-12, temp_c=10.0, temp_ref_c=10.0,
                    temp_band_c=None)
    d_dq, _ = loss_sensitivities(qy, 0.01)
    assert abs(d_dq) <= 1e-9


# ranges chosen so the derivative never degenerates relative to the loss
# itself, keeping central differences honest at the asserted tolerance
@settings(max_examples=100, deadline=None)
@given(
    m=st.floats(1.0, 500.0),
    f=st.floats(10.0, 1e6),
    xi=st.floats(1e-5, 5e-4),
    tau=st.floats(40.0, 95.0),
    tau0=st.floats(0.0, 15.0),
    q=st.floats(2e-3, 0.02),
)
def test_sensitivities_match_finite_differences(m, f, xi, tau, tau0, q):
    qy = make_query(mass_kg=m, friction_s2m5=f, xi_m3s=xi, temp_c=tau,
                    temp_ref_c=tau0, temp_band_c=None)
    d_dq, d_dtau = loss_sensitivities(qy, q)
    hq = 1e-4 * q
    num_q = (pipe_energy_loss(qy, q + hq) - pipe_energy_loss(qy, q - hq)) / (2 * hq)
    ht = 1e-3
    up = pipe_energy_loss(replace(qy, temp_c=tau + ht), q)
    dn = pipe_energy_loss(replace(qy, temp_c=tau - ht), q)
    num_tau = (up - dn) / (2 * ht)
    assert num_q == pytest.approx(d_dq, rel=1e-6)
    assert num_tau == pytest.approx(d_dtau, rel=1e-6)


# --- control-mode classification ------------------------------------------

def test_near_frictionless_pipe_prefers_temperature():
    v = classify_control_mode(make_query(friction_s2m5=1e-3))
    assert v.mode is ControlMode.TEMPERATURE
    assert v.intersection_1_m3s is None and v.intersection_2_m3s is None


def test_high_friction_pipe_prefers_flow_rate():
    v = classify_control_mode(make_query(friction_s2m5=1e8))
    assert v.mode is ControlMode.FLOW_RATE


def test_mid_friction_pipe_is_mixed_with_ordered_intersections():
    v = classify_control_mode(make_query(friction_s2m5=2e7))
    assert v.mode is ControlMode.MIXED
    assert v.intersection_1_m3s is not None
    assert v.intersection_2_m3s is not None
    assert v.intersection_1_m3s <= v.intersection_2_m3s
    assert 5e-3 <= v.intersection_1_m3s <= 0.02
    assert v.intersection_1_m3s == pytest.approx(0.009788, abs=1e-4)
    assert v.intersection_2_m3s == pytest.approx(0.009916, abs=1e-4)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(1e-3, 1e3),
       f=st.sampled_from([1e-3, 1e5, 2e7, 1e8]))
def test_classification_invariant_under_mass_scaling(scale, f):
    qy = make_query(friction_s2m5=f)
    a = classify_control_mode(qy)
    b = classify_control_mode(replace(qy, mass_kg=qy.mass_kg * scale))
    assert a.mode is b.mode
    if a.intersection_1_m3s is not None:
        assert b.intersection_1_m3s == pytest.approx(
            a.intersection_1_m3s, abs=2e-6)


# --- control-mode map over geometry ---------------------------------------

def test_short_wide_pipe_prefers_temperature():
    v = classify_control_mode(query_from_geometry(20.0, 1.0))
    assert v.mode is ControlMode.TEMPERATURE


def test_long_thin_pipe_prefers_flow_rate():
    v = classify_control_mode(query_from_geometry(300.0, 0.3))
    assert v.mode is ControlMode.FLOW_RATE


@pytest.fixture(scope="module")
def mode_map():
    return control_mode_map((20.0, 300.0), (0.3, 1.0), (5, 4))


def test_map_covers_declared_box(mode_map):
    assert mode_map.lengths_m[0] == 20.0 and mode_map.lengths_m[-1] == 300.0
    assert mode_map.diameters_m[0] == 0.3 and mode_map.diameters_m[-1] == 1.0
    assert len(mode_map.points) == 20


def test_map_mode_monotone_in_length(mode_map):
    rank = {ControlMode.TEMPERATURE: 0, ControlMode.MIXED: 1,
            ControlMode.FLOW_RATE: 2}
    for dia in mode_map.diameters_m:
        ranks = [rank[p.mode] for p in mode_map.points
                 if p.diameter_m == dia]
        assert all(b >= a for a, b in zip(ranks, ranks[1:]))


def test_map_corner_modes(mode_map):
    assert mode_map.mode_at(20.0, 1.0) is ControlMode.TEMPERATURE
    assert mode_map.mode_at(300.0, 0.3) is ControlMode.FLOW_RATE


def test_map_records_critical_frictions(mode_map):
    for p in mode_map.points:
        assert p.friction_crit_lo_s2m5 <= p.friction_crit_hi_s2m5
        if p.mode is ControlMode.TEMPERATURE:
            assert p.friction_s2m5 <= p.friction_crit_lo_s2m5
        if p.mode is ControlMode.FLOW_RATE:
            assert p.friction_s2m5 >= p.friction_crit_hi_s2m5


def test_map_csv_shape_and_determinism(mode_map):
    text = mode_map.to_csv()
    lines = text.strip().split("\n")
    assert lines[0].startswith("length_m,diameter_m,friction_s2m5,mode")
    assert len(lines) == 21
    assert text == mode_map.to_csv()


def test_map_rejects_degenerate_resolution():
    with pytest.raises(ValueError, match="resolution"):
        control_mode_map((20.0, 300.0), (0.3, 1.0), (1, 4))


# --- three-point uncertainty ----------------------------------------------

def _demand_reader(water_norm: float, heat_norm: float):
    def solve(sc) -> float:
        water = sum(float(j.demand_m3s.sum()) for j in sc.water.junctions)
        heat = sum(float(l.demand_w.sum()) for l in sc.heat.loads)
        return water / water_norm + heat / heat_norm
    return solve


def _norms(s):
    water = sum(float(j.demand_m3s.sum()) for j in s.water.junctions)
    heat = sum(float(l.demand_w.sum()) for l in s.heat.loads)
    return water, heat


def test_three_point_zero_sigma_is_exact_zero():
    s = scenario_from_dict(small_doc())
    calls = []

    def solve(sc):
        calls.append(1)
        return 7.25

    out = three_point_estimate(s, UncertaintySpec(), solve=solve)
    assert out.std == 0.0
    assert out.relative_std == 0.0
    assert out.mean == 7.25
    assert len(calls) == 1


def test_three_point_reproduces_linear_propagation():
    """Two equal linear inputs at 5% each: std/mean = sqrt(2)*0.05/2."""
    s = scenario_from_dict(small_doc())
    wn, hn = _norms(s)
    u = UncertaintySpec(sigma_water=0.05, sigma_heat=0.05)
    out = three_point_estimate(s, u, solve=_demand_reader(wn, hn))
    assert out.mean == pytest.approx(2.0, abs=1e-9)
    assert out.relative_std == pytest.approx(
        math.sqrt(2.0) * 0.05 / 2.0, abs=1e-6)


def test_three_point_monotone_in_sigma():
    s = scenario_from_dict(small_doc())
    wn, hn = _norms(s)

    def convex(sc) -> float:
        base = _demand_reader(wn, hn)(sc)
        return base + 0.4 * base * base

    u = UncertaintySpec(sigma_water=0.04, sigma_heat=0.03)
    lo = three_point_estimate(s, u, solve=convex).relative_std
    hi = three_point_estimate(s, u.scaled(2.0), solve=convex).relative_std
    assert hi >= lo > 0.0


def test_three_point_names_the_failing_point():
    s = scenario_from_dict(small_doc())

    def solve(sc):
        if sum(float(j.demand_m3s.sum()) for j in sc.water.junctions) > 0.021:
            raise RuntimeError("boom")
        return 1.0

    with pytest.raises(AnalysisError, match="water\\+"):
        three_point_estimate(s, UncertaintySpec(sigma_water=0.2), solve=solve)


def test_uncertainty_spec_range_checked():
    with pytest.raises(ValueError, match="sigma"):
        UncertaintySpec(sigma_water=0.6)


def test_solar_scaling_touches_only_free_resources():
    from coflow.analysis import _scaled_scenario
    s = scenario_from_dict(small_doc())
    scaled = _scaled_scenario(s, "solar", 0.5)
    # the only resource in this fixture is fueled, so nothing changes
    assert float(scaled.power.ders[0].p_max_w[0]) == float(
        s.power.ders[0].p_max_w[0])


# --- joint versus separate attribution ------------------------------------

def test_cost_table_csv_layout():
    table = CostBreakdown(separate=CostRow(power=3.0, water=2.0, heating=1.5),
                          joint=CostRow(power=2.5, water=1.75, heating=1.5))
    lines = table.to_csv().strip().split("\n")
    assert lines[0] == "item,separate,joint"
    assert [l.split(",")[0] for l in lines[1:]] == [
        "power", "water", "heating", "total"]
    assert table.savings == pytest.approx(0.75)


def test_attribution_covers_the_solver_total():
    from types import SimpleNamespace
    from coflow.analysis import _attribute
    res = SimpleNamespace(breakdown={
        "total": 10.0, "water_draw": 1.0, "wpump_electricity": 0.5,
        "chp": 3.0, "hpump_electricity": 0.25,
        "chp_electricity_revenue": 2.0})
    row = _attribute(res)
    assert row.water == pytest.approx(1.5)
    assert row.heating == pytest.approx(1.25)
    assert row.total == pytest.approx(10.0, abs=1e-12)


def decoupled_doc() -> dict:
    """small_doc with no heat network and a pump-free water chain."""
    doc = small_doc()
    doc["heat"] = {"chps": [], "loads": [], "junctions": [],
                   "supply_pipes": [], "return_pipes": [], "ambient_c": 10.0}
    doc["coupling"] = {"water_pumps": [], "chp_units": []}
    doc["water"] = {
        "reservoirs": [{"id": "W0", "head_m": 25.0}],
        "junctions": [{"id": "W1", "demand_m3s": 0.0, "min_head_m": 0.0},
                      {"id": "W3", "demand_m3s": 0.01, "min_head_m": 15.0}],
        "tanks": [{"inlet": "W2", "outlet": "W2x", "cross_section_m2": 10.0,
                   "initial_head_m": 20.0, "min_head_m": 1.0}],
        "pipes": [
            {"sender": "W0", "receiver": "W1", "kind": "valve",
             "q_max_m3s": 0.05},
            {"sender": "W1", "receiver": "W2", "kind": "valve",
             "q_max_m3s": 0.05},
            {"sender": "W2x", "receiver": "W3", "kind": "plain",
             "friction_s2m5": 500.0, "q_max_m3s": 0.05},
        ],
    }
    return doc


def test_decoupled_scenario_has_nothing_to_coordinate():
    table = compare_joint_separate(scenario_from_dict(decoupled_doc()))
    assert table.separate_certified and table.joint_certified
    assert table.joint.heating == 0.0
    assert table.joint.total == pytest.approx(table.separate.total, abs=1e-9)


def test_compare_joint_separate_on_coupled_fixture():
    s = scenario_from_dict(small_doc())
    table = compare_joint_separate(s)
    assert table.separate_certified and table.joint_certified
    assert table.joint.total <= table.separate.total + 1e-6 * max(
        1.0, abs(table.separate.total))
