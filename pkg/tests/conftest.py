import copy

import pytest


def small_doc() -> dict:
    """A compact but fully featured scenario document.

    Three power nodes in a line, a reservoir-pump-junction-tank water chain,
    and a CHP feeding one heating load over a paired supply/return pipe.
    Used as the base document for schema and validation tests.
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
                {"id": "E1", "p_load_pu": [0.02, 0.03], "q_load_pu": 0.005},
                {"id": "E2", "p_load_pu": 0.01, "q_load_pu": 0.002},
            ],
            "lines": [
                {"sender": "E0", "receiver": "E1", "r_pu": 0.02, "x_pu": 0.01},
                {"sender": "E1", "receiver": "E2", "r_pu": 0.03, "x_pu": 0.015},
            ],
            "ders": [
                {"node": "E2", "p_max_w": 50e3, "q_min_w": -20e3, "q_max_w": 20e3,
                 "s_max_w": 60e3, "cost_per_wh": 5e-5},
            ],
        },
        "water": {
            "reservoirs": [{"id": "W0", "head_m": 25.0}],
            "junctions": [{"id": "W1", "demand_m3s": 0.0, "min_head_m": 0.0},
                          {"id": "W3", "demand_m3s": 0.01, "min_head_m": 15.0}],
            "tanks": [{"inlet": "W2", "outlet": "W2x", "cross_section_m2": 10.0,
                       "initial_head_m": 28.0, "min_head_m": 1.0}],
            "pipes": [
                {"sender": "W0", "receiver": "W1", "kind": "valve", "q_max_m3s": 0.05},
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
                    {"p_w": 20e3, "q_w": 5e3, "heat_w": 0.0, "cost": 1.0},
                    {"p_w": 40e3, "q_w": 8e3, "heat_w": 60e3, "cost": 6.0},
                ],
                "supply_temp_min_c": 60.0, "supply_temp_max_c": 95.0,
                "pump_a": 2000.0, "pump_b": 200.0, "pump_c": 30.0,
                "pump_efficiency": 0.81, "q_rs_max_m3s": 0.02,
            }],
            "loads": [{"node": "H1", "demand_w": [12e3, 16e3],
                       "return_temp_min_c": 25.0, "return_temp_max_c": 50.0,
                       "min_head_sep_m": 2.0}],
            "junctions": [],
            "supply_pipes": [{"sender": "H0", "receiver": "H1",
                              "friction_s2m5": 800.0, "xi_m3s": 1e-4, "q_max_m3s": 0.02}],
            "return_pipes": [{"sender": "H1", "receiver": "H0",
                              "friction_s2m5": 800.0, "xi_m3s": 1e-4, "q_max_m3s": 0.02}],
            "ambient_c": 10.0,
        },
        "coupling": {
            "water_pumps": [{"pipe": ["W1", "W2"], "power_node": "E1"}],
            "chp_units": [{"heat_node": "H0", "power_node": "E2"}],
        },
        "prices": {"electricity_per_wh": [1e-4, 2e-4], "water_per_m3": 0.3},
    }


@pytest.fixture
def base_doc():
    return copy.deepcopy(small_doc())
