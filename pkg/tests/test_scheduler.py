import copy
import math

import pytest

from coflow.conic import Objective, assemble
from coflow.convexify import LinearRow, ReferencePoint, ccp_bilinear
from coflow.model import scenario_from_dict
from coflow.scheduler import (
    InitializationError,
    SolveError,
    SolverOptions,
    find_initial_feasible,
    inner_ccp,
    solve_opwhf,
    solve_separate,
)
from coflow.scheduler.programs import ProgramParts, _soften

from conftest import small_doc


# --- inner iteration on a synthetic product program -----------------------
#
# min x + y  subject to  x*y = 6,  x, y in [0.5, 12].  The optimum sits at
# x = y = sqrt(6).  The product is the only nonconvexity, so this isolates
# the reference-pin iteration from any network modeling.

def _product_builder(ref, pen):
    slacks = []
    block = _soften(
        ccp_bilinear("z", "x", "y", ref.get("x"), ref.get("y"), "p"), slacks)
    fix = LinearRow(coeffs=(("z", 1.0),), sense="==", rhs=6.0, tag="fix_z")
    lin = {"x": 1.0, "y": 1.0}
    for sl in slacks:
        lin[sl] = pen
    prog = assemble(
        [block], Objective(linear=lin),
        {"x": (0.5, 12.0), "y": (0.5, 12.0), "z": (None, None)},
        extra_linear=[fix])
    return ProgramParts(program=prog, coupling={}, slack_names=slacks)


def _product_refresh(vals):
    return ReferencePoint({"x": vals["x"], "y": vals["y"]})


def test_inner_ccp_drives_out_product_slack():
    it = inner_ccp(_product_builder, _product_refresh,
                   ReferencePoint({"x": 2.0, "y": 3.0}), SolverOptions())
    assert it.ok
    assert it.slack <= 1e-8
    assert it.values["x"] * it.values["y"] == pytest.approx(6.0, abs=1e-6)


def test_inner_ccp_soft_start_reaches_the_optimum():
    """A soft opening weight lets the iterate travel before the pin hardens."""
    it = inner_ccp(_product_builder, _product_refresh,
                   ReferencePoint({"x": 2.0, "y": 3.0}),
                   SolverOptions(penalty_start=1.0))
    assert it.ok
    assert it.slack <= 1e-8
    assert it.values["x"] * it.values["y"] == pytest.approx(6.0, abs=1e-6)
    assert it.values["x"] == pytest.approx(math.sqrt(6.0), abs=0.02)
    assert it.values["x"] + it.values["y"] <= 2.0 * math.sqrt(6.0) + 1e-3


def test_inner_ccp_fixed_point_stays_put():
    r = math.sqrt(6.0)
    it = inner_ccp(_product_builder, _product_refresh,
                   ReferencePoint({"x": r, "y": r}),
                   SolverOptions(penalty_start=1e4))
    assert it.ok
    assert it.iterations <= 3
    assert it.values["x"] == pytest.approx(r, abs=1e-4)
    assert it.values["y"] == pytest.approx(r, abs=1e-4)


# --- initialization -------------------------------------------------------

def test_find_initial_feasible_on_servable_scenario():
    from coflow.indexing import ScenarioIndex
    from coflow.scheduler import variables as V
    from coflow.scheduler.loop import _free_points

    s = scenario_from_dict(small_doc())
    ix = ScenarioIndex(s)
    opts = SolverOptions()
    w0, h0 = _free_points(s, ix, opts)
    x0 = V.implied_coupling(s, ix, V.Units(s), w0.values, h0.values)
    w, h = find_initial_feasible(s, x0, opts, ix)
    assert w.ok and h.ok
    assert w.slack + h.slack <= opts.init_slack_tol


def test_solve_rejects_impossible_heat_demand():
    doc = small_doc()
    for load in doc["heat"]["loads"]:
        load["demand_w"] = [d * 50.0 for d in load["demand_w"]]
    with pytest.raises(InitializationError):
        solve_opwhf(scenario_from_dict(doc), SolverOptions())


# --- joint solve on the two-slot coupled system ---------------------------

@pytest.fixture(scope="module")
def joint():
    s = scenario_from_dict(small_doc())
    return solve_opwhf(s, SolverOptions())


def test_joint_converges_and_certifies(joint):
    assert joint.converged
    assert joint.certified
    assert joint.status == "converged"
    assert joint.residuals.max_rel <= 1e-4


def test_joint_objective_is_export_profitable(joint):
    # DER fuel at 5e-5/Wh undercuts both tariff slots, so the coordinated
    # schedule exports at a net profit
    assert -1.0 < joint.objective < 0.0


def test_joint_breakdown_sums_to_total(joint):
    b = joint.breakdown
    parts = b["grid"] + b["der"] + b["chp"] + b["water_draw"]
    assert parts == pytest.approx(b["total"], abs=1e-9)
    assert b["der"] == pytest.approx(5.0, abs=1e-6)  # 50 kW flat out, both hours


def test_joint_trace_objective_monotone(joint):
    objs = joint.trace.objectives()
    assert len(objs) == joint.iterations + 1
    assert all(b <= a + 1e-9 for a, b in zip(objs, objs[1:]))


def test_joint_trace_ends_converged(joint):
    last = joint.trace.records[-1]
    assert last.coupling_delta == 0.0
    assert last.slack <= 1e-6
    assert last.iteration == joint.iterations


def test_joint_couplings_reported(joint):
    kinds = {k.split("[")[0] for k in joint.x_couple}
    assert kinds == {"xw", "xcpump", "xcp", "xcq"}


def test_trace_jsonl_has_no_timing_fields(joint):
    text = joint.trace.to_jsonl()
    assert "seconds" not in text
    assert text.count("\n") == len(joint.trace.records)


def test_solve_is_deterministic(joint):
    s = scenario_from_dict(small_doc())
    again = solve_opwhf(s, SolverOptions())
    assert again.trace.to_jsonl() == joint.trace.to_jsonl()
    assert again.objective == joint.objective


def test_separate_baseline_certifies_and_joint_wins(joint):
    s = scenario_from_dict(small_doc())
    sep = solve_separate(s, SolverOptions())
    assert sep.certified
    assert sep.status == "separate"
    assert joint.objective <= sep.objective + 1e-6


def test_solve_rejects_invalid_scenario():
    doc = small_doc()
    doc["water"]["junctions"][1]["demand_m3s"] = -0.01
    with pytest.raises(SolveError, match="validation"):
        solve_opwhf(scenario_from_dict(doc), SolverOptions())
