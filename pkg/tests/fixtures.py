"""Scenario builders for the acceptance suite.

Everything here is deterministic.  The town fixture is the large coupled
benchmark (37 power nodes, split-tank water loop, four-spoke heating
star, 24 hourly slots); the tariff-swing fixture isolates tank storage
behavior under a two-tier price; the randomized builder draws small
coupled scenarios for the joint-versus-separate sweep; the micro fixture
is small enough to grid-search exhaustively.
"""

import math
import random


def _daily(base: float, night: float, morning: float, evening: float) -> list:
    """24-value profile with a night floor and two peaks."""
    out = []
    for t in range(24):
        v = night
        v += morning * math.exp(-0.5 * ((t - 8.0) / 2.0) ** 2)
        v += evening * math.exp(-0.5 * ((t - 19.0) / 2.5) ** 2)
        out.append(round(base * v, 6))
    return out


def _pv_bell() -> list:
    return [round(max(0.0, math.sin(math.pi * (t - 6) / 12.0)) ** 2, 6)
            if 6 <= t <= 18 else 0.0 for t in range(24)]


def town_doc() -> dict:
    """Town-scale coupled fixture: 37-node feeder, tank, heating star."""
    # feeder tree: trunk E1..E8 off the slack, four 7-node laterals
    lines = []
    nodes = [{"id": "E0", "p_load_pu": 0.0, "q_load_pu": 0.0}]
    for k in range(1, 9):
        lines.append({"sender": f"E{k - 1}", "receiver": f"E{k}",
                      "r_pu": 0.008, "x_pu": 0.004})
    nxt = 9
    for root in (3, 5, 7, 8):
        prev = f"E{root}"
        for _ in range(7):
            lines.append({"sender": prev, "receiver": f"E{nxt}",
                          "r_pu": 0.014, "x_pu": 0.007})
            prev = f"E{nxt}"
            nxt += 1

    shape = _daily(1.0, 0.62, 0.55, 0.75)
    for i in range(1, 37):
        base = 0.004 + 0.008 * ((i * 37) % 97) / 97.0
        nodes.append({
            "id": f"E{i}",
            "p_load_pu": [round(base * s, 8) for s in shape],
            "q_load_pu": [round(0.3 * base * s, 8) for s in shape],
        })

    pv = _pv_bell()
    ders = [
        {"node": n, "p_max_w": [round(40e3 * v, 3) for v in pv],
         "q_min_w": 0.0, "q_max_w": 0.0, "cost_per_wh": 0.0}
        for n in ("E12", "E26", "E33")
    ]
    ders.append({"node": "E5", "p_max_w": 60e3, "q_min_w": -20e3,
                 "q_max_w": 20e3, "cost_per_wh": 1.3e-4})

    price = []
    for t in range(24):
        if t <= 5 or t >= 22:
            price.append(8e-5)
        elif t in (6, 7, 8, 15, 16, 17):
            price.append(1.5e-4)
        else:
            price.append(2.5e-4)

    wshape = _daily(1.0, 0.55, 0.65, 0.55)
    heat_shape = [round(1.0 - 0.35 * max(0.0,
                  math.sin(math.pi * (t - 6) / 12.0)), 6) for t in range(24)]

    return {
        "schema_version": "1",
        "horizon": {"slot_count": 24, "slot_duration_s": 3600.0},
        "power": {
            "s_base_va": 1.0e6,
            "v_base_v": 12.47e3,
            "slack_node": "E0",
            "slack_voltage_sq_pu": 1.0,
            "nodes": nodes,
            "lines": lines,
            "ders": ders,
        },
        "water": {
            "reservoirs": [{"id": "W0", "head_m": 30.0}],
            "junctions": [
                {"id": "W1", "demand_m3s": 0.0, "min_head_m": 0.0},
                {"id": "W3",
                 "demand_m3s": [round(0.012 * s, 8) for s in wshape],
                 "min_head_m": 12.0},
                {"id": "W4",
                 "demand_m3s": [round(0.008 * s, 8) for s in wshape],
                 "min_head_m": 10.0},
            ],
            "tanks": [{"inlet": "Wt", "outlet": "Wtx",
                       "cross_section_m2": 40.0, "initial_head_m": 26.0,
                       "min_head_m": 22.0}],
            "pipes": [
                {"sender": "W0", "receiver": "W1", "kind": "valve",
                 "q_max_m3s": 0.06},
                {"sender": "W1", "receiver": "Wt", "kind": "pump",
                 "pump_a": 1200.0, "pump_b": 150.0, "pump_c": 35.0,
                 "efficiency": 0.81, "q_max_m3s": 0.05},
                {"sender": "Wtx", "receiver": "W3", "kind": "plain",
                 "friction_s2m5": 400.0, "q_max_m3s": 0.05},
                {"sender": "W3", "receiver": "W4", "kind": "plain",
                 "friction_s2m5": 600.0, "q_max_m3s": 0.04},
            ],
        },
        "heat": {
            "chps": [{
                "node": "H0",
                "extreme_points": [
                    {"p_w": 30e3, "q_w": 5e3, "heat_w": 0.0, "cost": 2.0},
                    {"p_w": 90e3, "q_w": 15e3, "heat_w": 0.0, "cost": 7.5},
                    {"p_w": 25e3, "q_w": 5e3, "heat_w": 160e3, "cost": 9.0},
                    {"p_w": 75e3, "q_w": 12e3, "heat_w": 150e3, "cost": 13.5},
                ],
                "supply_temp_min_c": 60.0, "supply_temp_max_c": 95.0,
                "pump_a": 2000.0, "pump_b": 200.0, "pump_c": 30.0,
                "pump_efficiency": 0.81, "q_rs_max_m3s": 0.06,
            }],
            "loads": [
                {"node": "H1",
                 "demand_w": [round(30e3 * s, 3) for s in heat_shape],
                 "return_temp_min_c": 25.0, "return_temp_max_c": 50.0,
                 "min_head_sep_m": 2.0},
                {"node": "H2",
                 "demand_w": [round(22e3 * s, 3) for s in heat_shape],
                 "return_temp_min_c": 25.0, "return_temp_max_c": 50.0,
                 "min_head_sep_m": 2.0},
                {"node": "H3",
                 "demand_w": [round(18e3 * s, 3) for s in heat_shape],
                 "return_temp_min_c": 25.0, "return_temp_max_c": 50.0,
                 "min_head_sep_m": 2.0},
                {"node": "H4",
                 "demand_w": [round(25e3 * s, 3) for s in heat_shape],
                 "return_temp_min_c": 25.0, "return_temp_max_c": 50.0,
                 "min_head_sep_m": 2.0},
            ],
            "junctions": [],
            "supply_pipes": [
                {"sender": "H0", "receiver": h, "friction_s2m5": f,
                 "xi_m3s": x, "q_max_m3s": 0.02}
                for h, f, x in (("H1", 700.0, 1.8e-5), ("H2", 800.0, 2.2e-5),
                                ("H3", 900.0, 1.5e-5), ("H4", 750.0, 2.0e-5))
            ],
            "return_pipes": [
                {"sender": h, "receiver": "H0", "friction_s2m5": f,
                 "xi_m3s": x, "q_max_m3s": 0.02}
                for h, f, x in (("H1", 700.0, 1.8e-5), ("H2", 800.0, 2.2e-5),
                                ("H3", 900.0, 1.5e-5), ("H4", 750.0, 2.0e-5))
            ],
            "ambient_c": 10.0,
        },
        "coupling": {
            "water_pumps": [{"pipe": ["W1", "Wt"], "power_node": "E22"}],
            "chp_units": [{"heat_node": "H0", "power_node": "E21"}],
        },
        "prices": {"electricity_per_wh": price, "water_per_m3": 0.25},
    }


def tariff_swing_doc() -> dict:
    """Two-tier price, flat water demand: storage should carry the peak."""
    low, high = 8e-5, 1.0e-3
    return {
        "schema_version": "1",
        "horizon": {"slot_count": 12, "slot_duration_s": 3600.0},
        "power": {
            "s_base_va": 1.0e6,
            "v_base_v": 12.47e3,
            "slack_node": "E0",
            "slack_voltage_sq_pu": 1.0,
            "nodes": [
                {"id": "E0", "p_load_pu": 0.0, "q_load_pu": 0.0},
                {"id": "E1", "p_load_pu": 0.005, "q_load_pu": 0.001},
            ],
            "lines": [{"sender": "E0", "receiver": "E1",
                       "r_pu": 0.015, "x_pu": 0.008}],
            "ders": [],
        },
        "water": {
            "reservoirs": [{"id": "W0", "head_m": 18.0}],
            "junctions": [
                {"id": "W1", "demand_m3s": 0.0, "min_head_m": 0.0},
                {"id": "W3", "demand_m3s": 0.01, "min_head_m": 8.0},
            ],
            "tanks": [{"inlet": "Wt", "outlet": "Wtx",
                       "cross_section_m2": 50.0, "initial_head_m": 20.0,
                       "min_head_m": 5.0}],
            "pipes": [
                {"sender": "W0", "receiver": "W1", "kind": "valve",
                 "q_max_m3s": 0.05},
                {"sender": "W1", "receiver": "Wt", "kind": "pump",
                 "pump_a": 800.0, "pump_b": 120.0, "pump_c": 30.0,
                 "efficiency": 0.81, "q_max_m3s": 0.022},
                {"sender": "Wtx", "receiver": "W3", "kind": "plain",
                 "friction_s2m5": 300.0, "q_max_m3s": 0.04},
            ],
        },
        "heat": {"chps": [], "loads": [], "junctions": [],
                 "supply_pipes": [], "return_pipes": [], "ambient_c": 10.0},
        "coupling": {"water_pumps": [{"pipe": ["W1", "Wt"],
                                      "power_node": "E1"}],
                     "chp_units": []},
        "prices": {"electricity_per_wh": [low] * 6 + [high] * 6,
                   "water_per_m3": 0.05},
    }


def randomized_coupled_doc(seed: int) -> dict:
    """Small coupled scenario with randomized demands, prices, and costs.

    Ranges are chosen to stay inside the capacity of the pump and the CHP
    hull, so every draw is servable.
    """
    rng = random.Random(seed)
    slots = 4
    price = [rng.uniform(8e-5, 2.8e-4) for _ in range(slots)]
    heat_base = rng.uniform(10e3, 18e3)
    heat = [round(heat_base * rng.uniform(0.8, 1.2), 3) for _ in range(slots)]
    water = [round(rng.uniform(0.006, 0.014), 6) for _ in range(slots)]
    load = [round(rng.uniform(0.015, 0.035), 6) for _ in range(slots)]
    der_cost = rng.uniform(4e-5, 8e-5)
    c_lo = round(1.0 * rng.uniform(0.7, 1.3), 4)
    c_hi = round(6.0 * rng.uniform(0.7, 1.3), 4)
    return {
        "schema_version": "1",
        "horizon": {"slot_count": slots, "slot_duration_s": 3600.0},
        "power": {
            "s_base_va": 1.0e6,
            "v_base_v": 12.47e3,
            "slack_node": "E0",
            "slack_voltage_sq_pu": 1.0,
            "nodes": [
                {"id": "E0", "p_load_pu": 0.0, "q_load_pu": 0.0},
                {"id": "E1", "p_load_pu": load,
                 "q_load_pu": [round(0.25 * v, 6) for v in load]},
                {"id": "E2", "p_load_pu": 0.01, "q_load_pu": 0.002},
            ],
            "lines": [
                {"sender": "E0", "receiver": "E1", "r_pu": 0.02, "x_pu": 0.01},
                {"sender": "E1", "receiver": "E2", "r_pu": 0.03, "x_pu": 0.015},
            ],
            "ders": [
                {"node": "E2", "p_max_w": 50e3, "q_min_w": -20e3,
                 "q_max_w": 20e3, "s_max_w": 60e3, "cost_per_wh": der_cost},
            ],
        },
        "water": {
            "reservoirs": [{"id": "W0", "head_m": 25.0}],
            "junctions": [{"id": "W1", "demand_m3s": 0.0, "min_head_m": 0.0},
                          {"id": "W3", "demand_m3s": water,
                           "min_head_m": 15.0}],
            "tanks": [{"inlet": "W2", "outlet": "W2x",
                       "cross_section_m2": 10.0,
                       "initial_head_m": rng.uniform(26.0, 30.0),
                       "min_head_m": 1.0}],
            "pipes": [
                {"sender": "W0", "receiver": "W1", "kind": "valve",
                 "q_max_m3s": 0.05},
                {"sender": "W1", "receiver": "W2", "kind": "pump",
                 "pump_a": 1000.0, "pump_b": 100.0, "pump_c": 40.0,
                 "efficiency": 0.81, "q_max_m3s": 0.05},
                {"sender": "W2x", "receiver": "W3", "kind": "plain",
                 "friction_s2m5": 500.0, "q_max_m3s": 0.05},
            ],
        },
        "heat": {
            "chps": [{
                "node": "H0",
                "extreme_points": [
                    {"p_w": 20e3, "q_w": 5e3, "heat_w": 0.0, "cost": c_lo},
                    {"p_w": 40e3, "q_w": 8e3, "heat_w": 60e3, "cost": c_hi},
                ],
                "supply_temp_min_c": 60.0, "supply_temp_max_c": 95.0,
                "pump_a": 2000.0, "pump_b": 200.0, "pump_c": 30.0,
                "pump_efficiency": 0.81, "q_rs_max_m3s": 0.02,
            }],
            "loads": [{"node": "H1", "demand_w": heat,
                       "return_temp_min_c": 25.0, "return_temp_max_c": 50.0,
                       "min_head_sep_m": 2.0}],
            "junctions": [],
            "supply_pipes": [{"sender": "H0", "receiver": "H1",
                              "friction_s2m5": 800.0, "xi_m3s": 1e-4,
                              "q_max_m3s": 0.02}],
            "return_pipes": [{"sender": "H1", "receiver": "H0",
                              "friction_s2m5": 800.0, "xi_m3s": 1e-4,
                              "q_max_m3s": 0.02}],
            "ambient_c": 10.0,
        },
        "coupling": {
            "water_pumps": [{"pipe": ["W1", "W2"], "power_node": "E1"}],
            "chp_units": [{"heat_node": "H0", "power_node": "E2"}],
        },
        "prices": {"electricity_per_wh": price, "water_per_m3": 0.3},
    }


def micro_doc() -> dict:
    """Two slots, no reactive flows, heat output pinned by demand.

    The only coupled freedom is the CHP electricity level per slot (both
    hull vertices carry the same heat), which makes the scenario small
    enough to grid-search exhaustively.
    """
    return {
        "schema_version": "1",
        "horizon": {"slot_count": 2, "slot_duration_s": 3600.0},
        "power": {
            "s_base_va": 1.0e6,
            "v_base_v": 12.47e3,
            "slack_node": "E0",
            "slack_voltage_sq_pu": 1.0,
            "nodes": [
                {"id": "E0", "p_load_pu": 0.0, "q_load_pu": 0.0},
                {"id": "E1", "p_load_pu": [0.01, 0.02], "q_load_pu": 0.0},
            ],
            "lines": [{"sender": "E0", "receiver": "E1",
                       "r_pu": 0.02, "x_pu": 0.01}],
            "ders": [],
        },
        "water": {
            "reservoirs": [{"id": "W0", "head_m": 20.0}],
            "junctions": [{"id": "W1", "demand_m3s": 0.008,
                           "min_head_m": 25.0}],
            "tanks": [],
            "pipes": [{"sender": "W0", "receiver": "W1", "kind": "pump",
                       "pump_a": 900.0, "pump_b": 110.0, "pump_c": 30.0,
                       "efficiency": 0.81, "q_max_m3s": 0.03}],
        },
        "heat": {
            "chps": [{
                "node": "H0",
                "extreme_points": [
                    {"p_w": 10e3, "q_w": 0.0, "heat_w": 24e3, "cost": 3.0},
                    {"p_w": 40e3, "q_w": 0.0, "heat_w": 24e3, "cost": 5.4},
                ],
                "supply_temp_min_c": 60.0, "supply_temp_max_c": 95.0,
                "pump_a": 1500.0, "pump_b": 150.0, "pump_c": 25.0,
                "pump_efficiency": 0.81, "q_rs_max_m3s": 0.01,
            }],
            "loads": [{"node": "H1", "demand_w": 24e3,
                       "return_temp_min_c": 25.0, "return_temp_max_c": 50.0,
                       "min_head_sep_m": 2.0}],
            "junctions": [],
            "supply_pipes": [{"sender": "H0", "receiver": "H1",
                              "friction_s2m5": 600.0, "xi_m3s": 0.0,
                              "q_max_m3s": 0.01}],
            "return_pipes": [{"sender": "H1", "receiver": "H0",
                              "friction_s2m5": 600.0, "xi_m3s": 0.0,
                              "q_max_m3s": 0.01}],
            "ambient_c": 10.0,
        },
        "coupling": {
            "water_pumps": [{"pipe": ["W0", "W1"], "power_node": "E1"}],
            "chp_units": [{"heat_node": "H0", "power_node": "E1"}],
        },
        "prices": {"electricity_per_wh": [6e-5, 1.6e-4],
                   "water_per_m3": 0.3},
    }
