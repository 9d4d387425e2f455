import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coflow.convexify import (
    Q_MIN_M3S,
    ReferencePoint,
    block_violation,
    ccp_bilinear,
    ccp_exponential,
    linearization_gap,
    relax_darcy_weisbach,
    relax_rank1,
)

finite = st.floats(min_value=-100, max_value=100, allow_nan=False)


# --- squared-current relaxation -------------------------------------------

def test_rank1_boundary_point_admitted():
    block = relax_rank1("v", "l", "P", "Q", "line0")
    assert block_violation(block, {"v": 25.0, "l": 1.0, "P": 3.0, "Q": 4.0}) == 0.0


def test_rank1_interior_point_admitted():
    block = relax_rank1("v", "l", "P", "Q", "line0")
    assert block_violation(block, {"v": 25.0, "l": 2.0, "P": 3.0, "Q": 4.0}) == 0.0


def test_rank1_infeasible_point_rejected():
    block = relax_rank1("v", "l", "P", "Q", "line0")
    # 25 * 0.5 = 12.5 < 9 + 16
    assert block_violation(block, {"v": 25.0, "l": 0.5, "P": 3.0, "Q": 4.0}) == pytest.approx(12.5)


@given(st.floats(min_value=0.5, max_value=2.0), finite, finite)
def test_rank1_soundness_on_exact_points(v, p, q):
    block = relax_rank1("v", "l", "P", "Q", "x")
    ell = (p * p + q * q) / v
    assert block_violation(block, {"v": v, "l": ell, "P": p, "Q": q}) <= 1e-9


# --- friction-drop relaxation ---------------------------------------------

def test_darcy_boundary_point_admitted():
    block = relax_darcy_weisbach("hi", "hj", "q", friction=100.0, q_max=0.05, tag="p0")
    vals = {"hi": 10.25, "hj": 10.0, "q": 0.05,
            "p0.W": 0.0025, "p0.gamma": 0.0025 ** 2 / 0.05}
    assert block_violation(block, vals) <= 1e-15


def test_darcy_relaxation_slack_admitted():
    block = relax_darcy_weisbach("hi", "hj", "q", friction=100.0, q_max=0.05, tag="p0")
    # W above q^2, drop follows W, squeeze satisfied with larger gamma
    vals = {"hi": 10.2, "hj": 10.0, "q": 0.04,
            "p0.W": 0.002, "p0.gamma": 0.002 ** 2 / 0.04}
    assert block_violation(block, vals) <= 1e-15


def test_darcy_no_flow_forces_zero_drop():
    block = relax_darcy_weisbach("hi", "hj", "q", friction=100.0, q_max=0.05, tag="p0")
    ok = {"hi": 10.0, "hj": 10.0, "q": 0.0, "p0.W": 0.0, "p0.gamma": 0.0}
    assert block_violation(block, ok) == 0.0
    # any positive W is squeezed out at q = 0
    bad = {"hi": 10.1, "hj": 10.0, "q": 0.0, "p0.W": 0.001, "p0.gamma": 0.000125}
    assert block_violation(block, bad) > 0.0


def test_darcy_rejects_nonpositive_friction():
    with pytest.raises(ValueError, match="friction"):
        relax_darcy_weisbach("hi", "hj", "q", friction=0.0, q_max=0.05, tag="p0")


@given(st.floats(min_value=1e-4, max_value=0.05))
def test_darcy_soundness_on_exact_points(q):
    friction, q_max = 250.0, 0.05
    block = relax_darcy_weisbach("hi", "hj", "q", friction, q_max, tag="p0")
    w = q * q
    vals = {"hi": 20.0, "hj": 20.0 - friction * w, "q": q,
            "p0.W": w, "p0.gamma": w * w / q}
    assert block_violation(block, vals) <= 1e-12


# --- bilinear product pair ------------------------------------------------

def test_bilinear_exact_at_reference():
    block = ccp_bilinear("z", "x", "y", 2.0, 3.0, "b0")
    assert block_violation(block, {"x": 2.0, "y": 3.0, "z": 6.0}) <= 1e-12


def test_bilinear_low_z_rejected_at_reference():
    block = ccp_bilinear("z", "x", "y", 2.0, 3.0, "b0")
    # z = 5 sits below the product value the lower row enforces
    assert block_violation(block, {"x": 2.0, "y": 3.0, "z": 5.0}) == pytest.approx(1.0)


def test_bilinear_origin_reference_pins_origin():
    block = ccp_bilinear("z", "x", "y", 0.0, 0.0, "b0")
    assert block_violation(block, {"x": 0.0, "y": 0.0, "z": 0.0}) == 0.0
    assert block_violation(block, {"x": 1.0, "y": 1.0, "z": 1.0}) > 0.5


def test_bilinear_rows_marked_softenable():
    block = ccp_bilinear("z", "x", "y", 2.0, 3.0, "b0")
    assert [r.softenable for r in block.soc] == [True, True]


def test_bilinear_rejects_nonfinite_reference():
    with pytest.raises(ValueError, match="finite"):
        ccp_bilinear("z", "x", "y", float("nan"), 0.0, "b0")


@given(finite, finite, finite, finite)
def test_bilinear_lower_row_bound_equals_product_plus_gap(x_ref, y_ref, x, y):
    """The smallest z the lower row admits is exactly x*y + gap."""
    block = ccp_bilinear("z", "x", "y", x_ref, y_ref, "b0")
    lower = next(r for r in block.soc if r.tag.endswith("lower"))
    gap = linearization_gap(x_ref, y_ref, x, y)
    z_lo = x * y + gap
    assert block_violation_row(lower, {"x": x, "y": y, "z": z_lo}) <= 1e-6
    if gap > 1e-6:
        assert block_violation_row(lower, {"x": x, "y": y, "z": x * y}) > 0.0


def block_violation_row(row, vals):
    from coflow.convexify import row_violation
    return row_violation(row, vals)


@given(finite, finite, finite, finite)
def test_bilinear_block_members_stay_within_gap(x_ref, y_ref, x, y):
    """Any z satisfying the full pair is within the linearization gap of x*y."""
    block = ccp_bilinear("z", "x", "y", x_ref, y_ref, "b0")
    gap = linearization_gap(x_ref, y_ref, x, y)
    for z in (x * y, x * y + gap, x * y - gap):
        if block_violation(block, {"x": x, "y": y, "z": z}) <= 1e-9:
            assert abs(z - x * y) <= gap + 1e-6


def test_gap_frozen_values():
    assert linearization_gap(2.0, 3.0, 2.0, 3.0) == 0.0
    # weights sy/sx = 3/2 and sx/sy = 2/3 on the two 0.1 deviations
    assert linearization_gap(2.0, 3.0, 2.1, 3.1) == pytest.approx(13.0 / 1200.0)
    assert linearization_gap(0.0, 0.0, 1.0, 1.0) == pytest.approx(1.0)


@given(finite, finite, finite, finite)
def test_gap_nonnegative_and_zero_only_at_reference(x_ref, y_ref, x, y):
    g = linearization_gap(x_ref, y_ref, x, y)
    assert g >= 0.0
    if x == x_ref and y == y_ref:
        assert g == 0.0


# --- exponential propagation ----------------------------------------------

def exp_block(native=True, xi=3e-4, q_ref=1e-3, tau_ref=80.0):
    y_ref = math.exp(-xi / q_ref)
    return ccp_exponential("ti", "to", "q", "y", "z", tau_ambient=10.0, xi=xi,
                           tau_ref=tau_ref, q_ref=q_ref, y_ref=y_ref,
                           tag="hp0", native_log=native), y_ref


def consistent_point(xi, q, tau_in, tau0=10.0):
    y = math.exp(-xi / q)
    z = -xi / q
    return {"ti": tau_in, "q": q, "y": y, "z": z,
            "to": tau0 + (tau_in - tau0) * y,
            "hp0.prod_ty": tau_in * y, "hp0.prod_qz": q * z}


def test_exponential_exact_at_reference():
    xi, q_ref, tau_ref = 3e-4, 1e-3, 80.0
    block, y_ref = exp_block(xi=xi, q_ref=q_ref, tau_ref=tau_ref)
    vals = consistent_point(xi, q_ref, tau_ref)
    assert block_violation(block, vals) <= 1e-9


def test_exponential_away_from_reference_needs_slack():
    xi, q_ref, tau_ref = 3e-4, 1e-3, 80.0
    block, _ = exp_block(xi=xi, q_ref=q_ref, tau_ref=tau_ref)
    vals = consistent_point(xi, 2e-3, 75.0)  # exact physics, different point
    assert block_violation(block, vals) > 1e-9


def test_exponential_tangent_fan_matches_native_on_curve():
    xi = 3e-4
    native, y_ref = exp_block(native=True, xi=xi)
    fan, _ = exp_block(native=False, xi=xi)
    assert not native.linear == fan.linear
    assert len(fan.exp) == 0 and len(native.exp) == 1
    assert sum(1 for r in fan.linear if ".log" in r.tag and "log_lin" not in r.tag) == 16
    vals = consistent_point(xi, 1e-3, 80.0)
    assert block_violation(fan, vals) <= 1e-9


def test_exponential_fan_rejects_point_below_curve():
    xi = 3e-4
    fan, _ = exp_block(native=False, xi=xi)
    # y far below exp(z): ln(0.2) < 0 = z
    vals = consistent_point(xi, 1e-3, 80.0)
    vals["y"], vals["z"] = 0.2, 0.0
    from coflow.convexify import row_violation
    fan_rows = [r for r in fan.linear if ".log" in r.tag and "log_lin" not in r.tag]
    assert max(row_violation(r, vals) for r in fan_rows) > 0.1


def test_exponential_validates_reference():
    with pytest.raises(ValueError, match="y_ref"):
        ccp_exponential("ti", "to", "q", "y", "z", 10.0, 3e-4,
                        80.0, 1e-3, 1.5, "hp0")
    with pytest.raises(ValueError, match="q_ref"):
        ccp_exponential("ti", "to", "q", "y", "z", 10.0, 3e-4,
                        80.0, -1e-3, 0.5, "hp0")


def test_exponential_bounds_avoid_flow_singularity():
    block, _ = exp_block()
    lo, hi = block.aux["y"]
    assert lo == pytest.approx(math.exp(-3e-4 / Q_MIN_M3S))
    assert hi == 1.0


# --- housekeeping ---------------------------------------------------------

def test_blocks_are_deterministic():
    a = ccp_bilinear("z", "x", "y", 1.5, -2.0, "b1")
    b = ccp_bilinear("z", "x", "y", 1.5, -2.0, "b1")
    assert a.soc == b.soc and a.linear == b.linear and a.aux == b.aux
    assert repr(a.soc) == repr(b.soc)


def test_block_variable_collection():
    block = relax_darcy_weisbach("hi", "hj", "q", 100.0, 0.05, "p0")
    assert block.variables() == {"hi", "hj", "q", "p0.W", "p0.gamma"}


def test_reference_point_rejects_nonfinite():
    with pytest.raises(ValueError, match="finite"):
        ReferencePoint({"x": float("inf")})
    rp = ReferencePoint({"x": 1.0})
    assert rp.get("x") == 1.0
    assert rp.get("missing", 7.0) == 7.0
    with pytest.raises(KeyError):
        rp.get("missing")
