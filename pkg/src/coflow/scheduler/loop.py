"""Coordination loop over the shared machine powers.

One outer iteration follows the decomposition: solve the water and heat
programs at the committed coupling powers, read the coupling-row duals,
let the power program propose new commitments priced by those duals, then
accept the proposal only if the whole-system cost estimate actually drops,
halving the step otherwise.  The estimate for a candidate is the sum of the
subproblem economic costs with the power program pinned to the pump and
generator powers the networks really imply, so descent is measured on one
consistent merit function.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Callable

from ..conic import SolveResult, solve
from ..convexify import ReferencePoint
from ..indexing import ScenarioIndex
from ..model import Scenario, validate_scenario
from ..physics import cost_breakdown, eval_residuals, total_cost
from . import variables as V
from .programs import (
    ProgramParts,
    build_ohf_c,
    build_opf_c,
    build_owf_c,
    heat_cost,
    power_cost,
    water_cost,
)
from .result import ScheduleResult
from .variables import Units


class SolveError(RuntimeError):
    def __init__(self, message: str, status: str = "error"):
        super().__init__(message)
        self.status = status


class InitializationError(SolveError):
    pass


@dataclass
class SolverOptions:
    eps_inner: float = 1e-5
    eps_stall: float = 1e-3       # relative merit band treated as no change
    eps_move: float = 1e-2        # iterate movement allowed at an inner stop
    max_inner: int = 40
    eps_outer: float = 1e-4
    max_outer: int = 50
    penalty: float = 1e4          # final weight on the linearization slacks
    penalty_start: float = 100.0  # first weight; low enough to let passes move,
    penalty_growth: float = 10.0  # high enough that slack never beats real cost
    solver_tol: float = 1e-8
    step_halvings: int = 5
    init_slack_tol: float = 1e-3  # residual slack allowed in the starting point
    certify_tol: float = 1e-3


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    power_cost: float
    water_cost: float
    heat_cost: float
    slack: float
    coupling_delta: float
    step: float
    inner_water: int
    inner_heat: int
    bundle_stamp: int
    stage_seconds: float = 0.0

    def to_dict(self, with_timing: bool = False) -> dict:
        d = {
            "iteration": self.iteration,
            "objective": self.objective,
            "power_cost": self.power_cost,
            "water_cost": self.water_cost,
            "heat_cost": self.heat_cost,
            "slack": self.slack,
            "coupling_delta": self.coupling_delta,
            "step": self.step,
            "inner_water": self.inner_water,
            "inner_heat": self.inner_heat,
            "bundle_stamp": self.bundle_stamp,
        }
        if with_timing:
            d["stage_seconds"] = self.stage_seconds
        return d


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]

    def to_jsonl(self) -> str:
        # timings stay out of the file so a rerun is byte-identical
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n"
                       for r in self.records)


@dataclass
class DualBundle:
    """Coupling-row duals and constraint values from the final inner iterates.

    g_val holds each coupling expression evaluated at the final iterate of
    the program built at the previous reference; d_map names the power-side
    decision each row budgets or commits.
    """
    mu: dict[str, float] = field(default_factory=dict)
    g_val: dict[str, float] = field(default_factory=dict)
    d_map: dict[str, str] = field(default_factory=dict)
    stamp: int = 0


@dataclass
class InnerResult:
    ok: bool
    status: str
    values: dict[str, float] = field(default_factory=dict)
    mu: dict[str, float] = field(default_factory=dict)
    g_val: dict[str, float] = field(default_factory=dict)
    d_map: dict[str, str] = field(default_factory=dict)
    iterations: int = 0
    objective: float = float("inf")
    slack: float = 0.0
    objectives: list[float] = field(default_factory=list)


def _coupling_readout(parts: ProgramParts, res: SolveResult) -> tuple[dict, dict]:
    """Duals and expression values on the coupling rows of a solved program."""
    lhs = {}
    for coeffs, rhs, tag in parts.program.eq_rows + parts.program.ineq_rows:
        if tag in parts.coupling:
            lhs[tag] = sum(c * res.values[n] for n, c in coeffs)
    mu = {tag: res.duals.get(tag, 0.0) for tag in parts.coupling}
    return mu, lhs


def inner_ccp(build: Callable[[ReferencePoint, float], ProgramParts],
              refresh: Callable[[dict[str, float]], ReferencePoint],
              ref0: ReferencePoint, opts: SolverOptions) -> InnerResult:
    """Convex-concave iteration on one subproblem.

    Each pass rebuilds the program at the reference taken from the previous
    iterate.  Any move away from the reference shows up as slack in the
    paired product rows, so the slack weight acts as a step-size control:
    passes start at a small weight so the iterate can travel, and the
    weight grows once the point stops moving, up to its final value.  At
    the final weight the loop ends when the merit stops falling and the
    point stops moving; the last iterate is returned, so the result sits
    close to its own linearization point and the product rows hold with
    little error.  A clear merit rise ends the loop with the previous
    iterate instead.  Merits are compared at the final weight throughout.
    """
    ref = ref0
    best: InnerResult | None = None
    objs: list[float] = []
    pen = min(opts.penalty_start, opts.penalty)
    for n in range(1, opts.max_inner + 1):
        parts = build(ref, pen)
        res = solve(parts.program, tol=opts.solver_tol)
        if not res.ok:
            if pen < opts.penalty:
                # a weakly weighted pass can be degenerate; retry heavier
                pen = min(pen * opts.penalty_growth, opts.penalty)
                continue
            if best is not None:
                best.iterations = n - 1
                return best
            return InnerResult(ok=False, status=res.status, iterations=n,
                               objectives=objs)
        slack = sum(max(0.0, res.values[sl]) for sl in parts.slack_names)
        merit = res.objective + (opts.penalty - pen) * slack
        objs.append(merit)
        # movement of the reference map, not of solver internals: free
        # auxiliaries may wiggle between optima without moving any pin
        next_ref = refresh(res.values)
        move = max((abs(v - ref.values[k])
                    for k, v in next_ref.values.items() if k in ref.values),
                   default=0.0)
        cur = _pack_inner(parts, res, n, objs, merit, slack)
        if pen < opts.penalty:
            if move <= opts.eps_move:
                pen = min(pen * opts.penalty_growth, opts.penalty)
            best = cur
        else:
            if best is not None:
                band = opts.eps_stall * max(1.0, abs(best.objective))
                if merit > best.objective + band:
                    # clear rise: back out to the previous iterate
                    best.iterations = n
                    best.objectives = objs
                    return best
                improved = merit < best.objective - band
                best = cur
                if not improved and move <= opts.eps_move:
                    return best
            else:
                best = cur
        ref = next_ref
    best.iterations = opts.max_inner
    best.objectives = objs
    return best


def _warm(opts: SolverOptions) -> SolverOptions:
    """Options with the slack-weight ramp skipped.

    Passes restarted from an already-converged reference gain nothing from
    a light first weight; they would only drift off the product manifold
    and spend passes coming back.
    """
    if opts.penalty_start >= opts.penalty:
        return opts
    return replace(opts, penalty_start=opts.penalty)


def _pack_inner(parts: ProgramParts, res: SolveResult, n: int,
                objs: list[float], merit: float, slack: float) -> InnerResult:
    mu, g_val = _coupling_readout(parts, res)
    return InnerResult(ok=True, status=res.status, values=dict(res.values),
                       mu=mu, g_val=g_val, d_map=dict(parts.coupling),
                       iterations=n, objective=merit, slack=slack,
                       objectives=list(objs))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def initial_coupling(s: Scenario, ix: ScenarioIndex | None = None,
                     opts: SolverOptions | None = None) -> dict[str, float]:
    """Physics-informed starting commitments.

    Solves the water and heat subproblems with the coupling rows left out,
    then reads off the machine powers that free operation implies.  A
    commitment proposed any other way risks forcing the generators to make
    heat the network cannot absorb, which no amount of slack repairs.
    """
    opts = opts or SolverOptions()
    ix = ix or ScenarioIndex(s)
    w, h = _free_points(s, ix, opts)
    return V.implied_coupling(s, ix, Units(s), w.values, h.values)


def _free_points(s: Scenario, ix: ScenarioIndex,
                 opts: SolverOptions) -> tuple[InnerResult, InnerResult]:
    """Inner iterations with no coupling rows: each network runs itself."""
    w = inner_ccp(lambda ref, pen: build_owf_c(s, ix, None, ref, pen),
                  lambda vals: V.water_reference_from(ix, vals),
                  V.initial_water_reference(s, ix), opts)
    if not w.ok:
        raise InitializationError(f"water initialization failed: {w.status}",
                                  status=w.status)
    h = inner_ccp(lambda ref, pen: build_ohf_c(s, ix, None, ref, pen),
                  lambda vals: V.heat_reference_from(s, ix, vals),
                  V.initial_heat_reference(s, ix), opts)
    if not h.ok:
        raise InitializationError(f"heat initialization failed: {h.status}",
                                  status=h.status)
    return w, h


def find_initial_feasible(s: Scenario, x_couple0: dict[str, float],
                          opts: SolverOptions | None = None,
                          ix: ScenarioIndex | None = None,
                          ref_w: ReferencePoint | None = None,
                          ref_h: ReferencePoint | None = None,
                          ) -> tuple[InnerResult, InnerResult]:
    """Feasible water and heat operating points at the given commitments.

    Runs the two inner iterations from the given (or physics-informed)
    references and checks that the linearization slack has been driven out;
    a commitment the networks cannot serve fails here with the residual
    slack norm reported.
    """
    opts = opts or SolverOptions()
    ix = ix or ScenarioIndex(s)
    w = inner_ccp(lambda ref, pen: build_owf_c(s, ix, x_couple0, ref, pen),
                  lambda vals: V.water_reference_from(ix, vals),
                  ref_w or V.initial_water_reference(s, ix),
                  _warm(opts) if ref_w is not None else opts)
    if not w.ok:
        raise InitializationError(f"water initialization failed: {w.status}",
                                  status=w.status)
    h = inner_ccp(lambda ref, pen: build_ohf_c(s, ix, x_couple0, ref, pen),
                  lambda vals: V.heat_reference_from(s, ix, vals),
                  ref_h or V.initial_heat_reference(s, ix),
                  _warm(opts) if ref_h is not None else opts)
    if not h.ok:
        raise InitializationError(f"heat initialization failed: {h.status}",
                                  status=h.status)
    if w.slack + h.slack > opts.init_slack_tol:
        raise InitializationError(
            "initialization left residual slack "
            f"{w.slack + h.slack:.3e} (water {w.slack:.3e}, heat {h.slack:.3e})",
            status="infeasible")
    return w, h


# ---------------------------------------------------------------------------
# joint solve
# ---------------------------------------------------------------------------

def _check_scenario(s: Scenario) -> None:
    report = validate_scenario(s)
    if report.findings:
        codes = ", ".join(f.code for f in report.findings)
        raise SolveError(f"scenario failed validation: {codes}",
                         status="invalid")


def _merit(s, ix, w: InnerResult, h: InnerResult, pres: SolveResult,
           penalty: float) -> tuple[float, dict[str, float]]:
    parts = {
        "power": power_cost(s, ix, pres.values),
        "water": water_cost(s, ix, w.values),
        "heat": heat_cost(s, ix, h.values),
    }
    f = parts["power"] + parts["water"] + parts["heat"] \
        + penalty * (w.slack + h.slack)
    return f, parts


def _evaluate(s, ix, x_try, ref_w, ref_h, opts):
    """Inner solves at a candidate commitment plus the pinned power solve."""
    wopts = _warm(opts)   # line-search references are already converged
    w = inner_ccp(lambda ref, pen: build_owf_c(s, ix, x_try, ref, pen),
                  lambda vals: V.water_reference_from(ix, vals), ref_w, wopts)
    if not w.ok:
        return None
    h = inner_ccp(lambda ref, pen: build_ohf_c(s, ix, x_try, ref, pen),
                  lambda vals: V.heat_reference_from(s, ix, vals), ref_h, wopts)
    if not h.ok:
        return None
    u = Units(s)
    pin = V.implied_coupling(s, ix, u, w.values, h.values)
    pparts = build_opf_c(s, ix, pin=pin)
    pres = solve(pparts.program, tol=opts.solver_tol)
    if not pres.ok:
        return None
    f, parts = _merit(s, ix, w, h, pres, opts.penalty)
    return w, h, pres, f, parts, pin


def _assemble_result(s, ix, w, h, pres, trace, iterations, converged, status,
                     x_impl, opts) -> ScheduleResult:
    sol = V.extract_solution(s, ix, pres.values, w.values, h.values)
    report = eval_residuals(s, sol)
    return ScheduleResult(
        solution=sol,
        objective=total_cost(s, sol),
        converged=converged,
        certified=report.certified(opts.certify_tol),
        residuals=report,
        trace=trace,
        iterations=iterations,
        status=status,
        x_couple=dict(x_impl),
        breakdown=cost_breakdown(s, sol),
    )


def solve_opwhf(s: Scenario, opts: SolverOptions | None = None,
                x_couple_init: dict[str, float] | None = None) -> ScheduleResult:
    """Joint schedule for the three networks over the horizon.

    Returns the best schedule found together with its certification status;
    a run that hits the iteration cap still returns, flagged not converged.
    """
    opts = opts or SolverOptions()
    _check_scenario(s)
    ix = ScenarioIndex(s)
    u = Units(s)
    names = V.coupling_names(ix)

    t0 = time.monotonic()
    ref_w = ref_h = None
    if x_couple_init is not None:
        x = dict(x_couple_init)
    else:
        w0, h0 = _free_points(s, ix, opts)
        x = V.implied_coupling(s, ix, u, w0.values, h0.values)
        ref_w = V.water_reference_from(ix, w0.values)
        ref_h = V.heat_reference_from(s, ix, h0.values)
    w, h = find_initial_feasible(s, x, opts, ix, ref_w, ref_h)
    pin = V.implied_coupling(s, ix, u, w.values, h.values)
    pparts = build_opf_c(s, ix, pin=pin)
    pres = solve(pparts.program, tol=opts.solver_tol)
    if not pres.ok:
        raise SolveError(f"power evaluation failed: {pres.status}",
                         status=pres.status)
    f, parts = _merit(s, ix, w, h, pres, opts.penalty)
    x_impl = pin
    trace = Trace()
    trace.records.append(TraceRecord(
        iteration=0, objective=f, power_cost=parts["power"],
        water_cost=parts["water"], heat_cost=parts["heat"],
        slack=w.slack + h.slack, coupling_delta=0.0, step=0.0,
        inner_water=w.iterations, inner_heat=h.iterations, bundle_stamp=0,
        stage_seconds=time.monotonic() - t0))

    if not names:
        return _assemble_result(s, ix, w, h, pres, trace, 1, True,
                                "converged", x_impl, opts)

    converged = False
    iterations = 0
    for m in range(1, opts.max_outer + 1):
        t0 = time.monotonic()
        iterations = m
        # duals from the inner solves at the current commitment, never stale
        bundle = DualBundle(mu={**w.mu, **h.mu},
                            g_val={**w.g_val, **h.g_val},
                            d_map={**w.d_map, **h.d_map}, stamp=m)
        oparts = build_opf_c(s, ix, bundle=bundle)
        ores = solve(oparts.program, tol=opts.solver_tol)
        if not ores.ok:
            converged = True
            break
        x_prop = {k: ores.values[k] for k in names}

        step = 1.0
        accepted = None
        for _ in range(opts.step_halvings + 1):
            x_try = {k: x[k] + step * (x_prop[k] - x[k]) for k in names}
            ev = _evaluate(s, ix, x_try,
                           V.water_reference_from(ix, w.values),
                           V.heat_reference_from(s, ix, h.values), opts)
            if ev is not None and ev[3] <= f + 1e-10 * max(1.0, abs(f)):
                accepted = (x_try, ev)
                break
            step *= 0.5

        if accepted is None:
            trace.records.append(TraceRecord(
                iteration=m, objective=f, power_cost=parts["power"],
                water_cost=parts["water"], heat_cost=parts["heat"],
                slack=w.slack + h.slack, coupling_delta=0.0, step=0.0,
                inner_water=0, inner_heat=0, bundle_stamp=m,
                stage_seconds=time.monotonic() - t0))
            converged = True
            break

        x_try, (w2, h2, pres2, f2, parts2, pin2) = accepted
        df = f - f2
        dx = V.couple_delta(pin2, x_impl)
        x, w, h, pres, f, parts, x_impl = x_try, w2, h2, pres2, f2, parts2, pin2
        trace.records.append(TraceRecord(
            iteration=m, objective=f, power_cost=parts["power"],
            water_cost=parts["water"], heat_cost=parts["heat"],
            slack=w.slack + h.slack, coupling_delta=dx, step=step,
            inner_water=w.iterations, inner_heat=h.iterations, bundle_stamp=m,
            stage_seconds=time.monotonic() - t0))
        x_scale = max(1.0, max(abs(v) for v in x_impl.values()))
        if df <= opts.eps_outer * max(1.0, abs(f)) and dx <= opts.eps_outer * x_scale:
            converged = True
            break

    status = "converged" if converged else "max_iterations"
    return _assemble_result(s, ix, w, h, pres, trace, iterations, converged,
                            status, x_impl, opts)


def solve_separate(s: Scenario, opts: SolverOptions | None = None) -> ScheduleResult:
    """Uncoordinated baseline: each network optimizes itself at posted prices.

    Water minimizes draw plus pump electricity, heat minimizes generation
    cost net of electricity sold, both at the grid tariff; the power network
    then serves whatever loads and injections result.
    """
    opts = opts or SolverOptions()
    _check_scenario(s)
    ix = ScenarioIndex(s)
    u = Units(s)
    lam = s.prices.electricity_per_wh

    w = inner_ccp(lambda ref, pen: build_owf_c(s, ix, None, ref, pen,
                                               electricity_price=lam),
                  lambda vals: V.water_reference_from(ix, vals),
                  V.initial_water_reference(s, ix), opts)
    if not w.ok:
        raise SolveError(f"water baseline failed: {w.status}", status=w.status)
    h = inner_ccp(lambda ref, pen: build_ohf_c(s, ix, None, ref, pen,
                                               electricity_price=lam),
                  lambda vals: V.heat_reference_from(s, ix, vals),
                  V.initial_heat_reference(s, ix), opts)
    if not h.ok:
        raise SolveError(f"heat baseline failed: {h.status}", status=h.status)

    pin = V.implied_coupling(s, ix, u, w.values, h.values)
    pparts = build_opf_c(s, ix, pin=pin)
    pres = solve(pparts.program, tol=opts.solver_tol)
    if not pres.ok:
        raise SolveError(f"power baseline failed: {pres.status}",
                         status=pres.status)
    f, parts = _merit(s, ix, w, h, pres, opts.penalty)
    trace = Trace()
    trace.records.append(TraceRecord(
        iteration=0, objective=f, power_cost=parts["power"],
        water_cost=parts["water"], heat_cost=parts["heat"],
        slack=w.slack + h.slack, coupling_delta=0.0, step=0.0,
        inner_water=w.iterations, inner_heat=h.iterations, bundle_stamp=0))
    return _assemble_result(s, ix, w, h, pres, trace, 1, True, "separate",
                            pin, opts)
