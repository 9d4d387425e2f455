"""Variable naming, unit scaling, and solution extraction.

Subproblems are assembled in solver-friendly units: pipe flows in L/s, heads
in m, temperatures in degC, grid quantities in per-unit, machine powers in
kW.  Conversion back to SI happens in one place, extract_solution, so the
physics oracle never sees scaled numbers.
"""
from __future__ import annotations

import math

import numpy as np

from ..convexify import ReferencePoint
from ..indexing import ScenarioIndex
from ..model import Scenario
from ..physics import Solution

L_PER_M3 = 1000.0
W_PER_KW = 1000.0

# flow floor for heat pipes, in L/s; keeps the decay exponent bounded
Q_MIN_L = 0.1


class Units:
    """Scaling constants derived from one scenario."""

    def __init__(self, s: Scenario):
        c = s.constants
        self.s_base_kw = s.power.s_base_va / W_PER_KW
        self.kw_to_pu = 1.0 / self.s_base_kw
        self.dt_s = s.horizon.slot_duration_s
        self.dt_h = s.horizon.dt_h
        # heat power in kW per (L/s * degC)
        self.heat_coeff = c.heat_capacity_j_m3k / (L_PER_M3 * W_PER_KW)
        self.rho_g = c.water_density_kg_m3 * c.gravity_m_s2

    def pump_coeff(self, efficiency: float) -> float:
        """kW of electric power per (m * L/s) of head-gain times flow."""
        return self.rho_g / (efficiency * L_PER_M3 * W_PER_KW)


def fhat(friction_s2m5: float) -> float:
    """Friction rescaled so head drop in m = fhat * (flow in L/s)^2."""
    return friction_s2m5 / (L_PER_M3 * L_PER_M3)


def xihat(xi_m3s: float) -> float:
    """Decay constant rescaled to L/s flow units."""
    return xi_m3s * L_PER_M3


# ---------------------------------------------------------------------------
# variable names
# ---------------------------------------------------------------------------
# power
def vsq(t: int, node: str) -> str:
    return f"vsq[{t},{node}]"


def pl(t: int, e: int) -> str:
    return f"pl[{t},{e}]"


def ql(t: int, e: int) -> str:
    return f"ql[{t},{e}]"


def isq(t: int, e: int) -> str:
    return f"isq[{t},{e}]"


def imp_p(t: int) -> str:
    return f"imp_p[{t}]"


def imp_q(t: int) -> str:
    return f"imp_q[{t}]"


def derp(t: int, d: int) -> str:
    return f"derp[{t},{d}]"


def derq(t: int, d: int) -> str:
    return f"derq[{t},{d}]"


def beta(t: int, c: int, k: int) -> str:
    return f"beta[{t},{c},{k}]"


# coupling decisions, all in kW
def xw(t: int, w: int) -> str:
    return f"xw[{t},{w}]"


def xcp(t: int, c: int) -> str:
    return f"xcp[{t},{c}]"


def xcq(t: int, c: int) -> str:
    return f"xcq[{t},{c}]"


def xcpump(t: int, c: int) -> str:
    return f"xcpump[{t},{c}]"


# water
def wq(t: int, e: int) -> str:
    return f"wq[{t},{e}]"


def wh(t: int, node: str) -> str:
    return f"wh[{t},{node}]"


def wdh(t: int, e: int) -> str:
    return f"wdh[{t},{e}]"


# heat; s/r prefixes pick the supply or return layer
def hq(side: str, t: int, e: int) -> str:
    return f"h{side}q[{t},{e}]"


def hh(side: str, t: int, node: str) -> str:
    return f"h{side}h[{t},{node}]"


def ht(side: str, t: int, node: str) -> str:
    return f"h{side}t[{t},{node}]"


def hto(side: str, t: int, e: int) -> str:
    return f"h{side}to[{t},{e}]"


def hy(side: str, t: int, e: int) -> str:
    return f"h{side}y[{t},{e}]"


def hz(side: str, t: int, e: int) -> str:
    return f"h{side}z[{t},{e}]"


def qrs(t: int, node: str) -> str:
    return f"qrs[{t},{node}]"


def alpha(t: int, c: int, k: int) -> str:
    return f"al[{t},{c},{k}]"


def hgen(t: int, c: int) -> str:
    return f"hgen[{t},{c}]"


def hdh(t: int, c: int) -> str:
    return f"hdh[{t},{c}]"


def coupling_tag_water(t: int, w: int) -> str:
    return f"coupling.water.{t}.{w}"


def coupling_tag_heat(part: str, t: int, c: int) -> str:
    return f"coupling.heat.{part}.{t}.{c}"


# ---------------------------------------------------------------------------
# coupling vector helpers
# ---------------------------------------------------------------------------

def coupling_names(ix: ScenarioIndex) -> list[str]:
    """All coupling decision names, in a fixed order."""
    names = []
    for t in ix.slots:
        for w in range(len(ix.pump_pipes)):
            names.append(xw(t, w))
        for c in range(len(ix.chps)):
            names.append(xcp(t, c))
            names.append(xcq(t, c))
            names.append(xcpump(t, c))
    return names


def coupling_caps(s: Scenario, ix: ScenarioIndex, u: Units) -> dict[str, tuple[float, float]]:
    """Box bounds for each coupling decision, in kW.

    Pump budgets run from zero to a generous over-estimate of the largest
    power the pump window admits; CHP electric output is boxed by the hull's
    extreme values (the beta rows enforce the exact hull).
    """
    caps: dict[str, tuple[float, float]] = {}
    for t in ix.slots:
        for w, e in enumerate(ix.pump_pipes):
            p = ix.water_pipes[e]
            qmax = p.q_max_m3s * L_PER_M3
            gain_hi = p.pump_c + p.pump_b * qmax / L_PER_M3  # b is per m3/s
            cap = u.pump_coeff(p.efficiency) * gain_hi * qmax
            caps[xw(t, w)] = (0.0, cap)
        for c, chp in enumerate(ix.chps):
            pk = chp.extreme_p_w / W_PER_KW
            qk = chp.extreme_q_w / W_PER_KW
            caps[xcp(t, c)] = (float(pk.min()), float(pk.max()))
            caps[xcq(t, c)] = (float(qk.min()), float(qk.max()))
            qmax = chp.q_rs_max_m3s * L_PER_M3
            gain_hi = chp.pump_c + chp.pump_b * qmax / L_PER_M3
            cap = u.pump_coeff(chp.pump_efficiency) * gain_hi * qmax
            caps[xcpump(t, c)] = (0.0, cap)
    return caps


def couple_delta(a: dict[str, float], b: dict[str, float]) -> float:
    """Max-norm distance between two coupling vectors on shared keys."""
    if not a and not b:
        return 0.0
    return max((abs(a[k] - b.get(k, 0.0)) for k in a), default=0.0)


def implied_coupling(s: Scenario, ix: ScenarioIndex, u: Units,
                     wvals: dict[str, float],
                     hvals: dict[str, float]) -> dict[str, float]:
    """Coupling powers actually used by the water and heat solutions, in kW.

    Pump powers are recomputed from head gain times flow so the power side
    gets pinned to what the networks really draw, not to the budgets.
    """
    x: dict[str, float] = {}
    for t in ix.slots:
        for w, e in enumerate(ix.pump_pipes):
            p = ix.water_pipes[e]
            x[xw(t, w)] = u.pump_coeff(p.efficiency) * wvals[wdh(t, e)] * wvals[wq(t, e)]
        for c, chp in enumerate(ix.chps):
            pk = chp.extreme_p_w / W_PER_KW
            qk = chp.extreme_q_w / W_PER_KW
            al = np.array([hvals[alpha(t, c, k)] for k in range(len(pk))])
            x[xcp(t, c)] = float(al @ pk)
            x[xcq(t, c)] = float(al @ qk)
            x[xcpump(t, c)] = (u.pump_coeff(chp.pump_efficiency)
                               * hvals[hdh(t, c)] * hvals[qrs(t, chp.node)])
    return x


# ---------------------------------------------------------------------------
# reference points
# ---------------------------------------------------------------------------

def _route_water_flows(s: Scenario, ix: ScenarioIndex) -> dict[str, float] | None:
    """Cheapest mass routing over the whole horizon.

    Continuity, tank storage, and draw cost only; head physics is left to
    the full iteration.  None when demands cannot be met this way.
    """
    from ..conic import Objective, assemble, solve
    from ..convexify import LinearRow

    u = Units(s)
    vars: dict[str, tuple] = {}
    rows = []
    obj: dict[str, float] = {}
    for t in ix.slots:
        for e, p in enumerate(ix.water_pipes):
            name = wq(t, e)
            vars[name] = (0.0, p.q_max_m3s * L_PER_M3)
            obj[name] = obj.get(name, 0.0) + 1e-3
        for j in s.water.junctions:
            coeffs = [(wq(t, e), 1.0) for e in ix.wpipes_in[j.id]]
            coeffs += [(wq(t, e), -1.0) for e in ix.wpipes_out[j.id]]
            rows.append(LinearRow(
                coeffs=tuple(coeffs), sense="==",
                rhs=float(j.demand_m3s[t]) * L_PER_M3,
                tag=f"wroute.c[{t},{j.id}]"))
        for tk in s.water.tanks:
            lvl = f"wroute.lvl[{t},{tk.outlet}]"
            vars[lvl] = (tk.min_head_m, None)
            gain = u.dt_s / (L_PER_M3 * tk.cross_section_m2)
            coeffs = [(lvl, 1.0)]
            coeffs += [(wq(t, e), -gain) for e in ix.wpipes_in[tk.inlet]]
            coeffs += [(wq(t, e), gain) for e in ix.wpipes_out[tk.outlet]]
            rhs = tk.initial_head_m
            if t > 0:
                coeffs.append((f"wroute.lvl[{t - 1},{tk.outlet}]", -1.0))
                rhs = 0.0
            rows.append(LinearRow(coeffs=tuple(coeffs), sense="==", rhs=rhs,
                                  tag=f"wroute.t[{t},{tk.outlet}]"))
        lam_w = float(s.prices.water_per_m3[t]) * u.dt_s / L_PER_M3
        for r in s.water.reservoirs:
            for e in ix.wpipes_out[r.id]:
                obj[wq(t, e)] = obj.get(wq(t, e), 0.0) + lam_w
            for e in ix.wpipes_in[r.id]:
                obj[wq(t, e)] = obj.get(wq(t, e), 0.0) - lam_w
    res = solve(assemble([], Objective(linear=obj), vars, extra_linear=rows))
    if not res.ok:
        return None
    return dict(res.values)


def initial_water_reference(s: Scenario, ix: ScenarioIndex) -> ReferencePoint:
    """Starting reference for the water product terms.

    Pump flows come from the horizon-wide mass routing so the iteration
    starts near its own dispatch; head gain starts at half the window
    height at that flow.  Quarter-capacity flow is the fallback when the
    routing has no answer.
    """
    routed = _route_water_flows(s, ix)
    vals: dict[str, float] = {}
    for t in ix.slots:
        for e in ix.pump_pipes:
            p = ix.water_pipes[e]
            if routed is not None:
                q = routed[wq(t, e)]
            else:
                q = max(Q_MIN_L, 0.25 * p.q_max_m3s * L_PER_M3)
            vals[wq(t, e)] = q
            q_si = q / L_PER_M3
            window = p.pump_c + p.pump_b * q_si - p.pump_a * q_si * q_si
            vals[wdh(t, e)] = 0.5 * max(0.0, window)
    return ReferencePoint(vals)


def water_reference_from(ix: ScenarioIndex, vals: dict[str, float]) -> ReferencePoint:
    out: dict[str, float] = {}
    for t in ix.slots:
        for e in ix.pump_pipes:
            out[wq(t, e)] = max(0.0, vals[wq(t, e)])
            out[wdh(t, e)] = max(0.0, vals[wdh(t, e)])
    return ReferencePoint(out)


def _heat_reference_consistent(s: Scenario, ix: ScenarioIndex,
                               temps: dict[str, float],
                               flows: dict[str, float],
                               qrs_vals: dict[str, float],
                               gains: dict[str, float]) -> ReferencePoint:
    """Complete a heat reference from node temps, pipe flows and transfers.

    Decay factors, outlet temperatures, and mixing inflow sums are recomputed
    from the primary values so every product sees a mutually consistent
    reference.
    """
    amb = s.heat.ambient_c
    vals: dict[str, float] = {}
    vals.update(temps)
    vals.update(qrs_vals)
    vals.update(gains)
    for t in ix.slots:
        a = float(amb[t])
        for side, pipes in (("s", ix.supply_pipes), ("r", ix.return_pipes)):
            for e, p in enumerate(pipes):
                q = max(Q_MIN_L, flows[hq(side, t, e)])
                vals[hq(side, t, e)] = q
                y = math.exp(-xihat(p.xi_m3s) / q)
                vals[hy(side, t, e)] = y
                tin = temps[ht(side, t, p.sender)]
                vals[hto(side, t, e)] = a + (tin - a) * y
        # mixing inflow sums per node
        for n in ix.heat_nodes:
            for side, pin in (("s", ix.spipes_in), ("r", ix.rpipes_in)):
                if pin[n]:
                    vals[f"h.mix{side}[{t},{n}].qin"] = sum(
                        vals[hq(side, t, e)] for e in pin[n])
    return ReferencePoint(vals)


def _route_heat_flows(s: Scenario, ix: ScenarioIndex, t: int,
                      load_draw: dict[str, float]) -> dict[str, float] | None:
    """Minimal pipe flows satisfying continuity at fixed load transfers.

    A plain linear program; None when the demands cannot be routed, in
    which case the caller falls back to uniform flows and lets the full
    iteration surface the infeasibility.
    """
    from ..conic import Objective, assemble, solve
    from ..convexify import LinearRow

    vars: dict[str, tuple] = {}
    rows = []
    obj: dict[str, float] = {}
    for side, pipes in (("s", ix.supply_pipes), ("r", ix.return_pipes)):
        for e, p in enumerate(pipes):
            name = hq(side, t, e)
            vars[name] = (Q_MIN_L, p.q_max_m3s * L_PER_M3)
            obj[name] = 1.0
    for n in ix.heat_nodes:
        if n in ix.chp_pos:
            chp = ix.chps[ix.chp_pos[n]]
            vars[qrs(t, n)] = (0.0, chp.q_rs_max_m3s * L_PER_M3)
        elif n in load_draw:
            vars[qrs(t, n)] = (-load_draw[n], -load_draw[n])
        else:
            vars[qrs(t, n)] = (0.0, 0.0)
        coeffs = [(hq("s", t, e), 1.0) for e in ix.spipes_in[n]]
        coeffs += [(hq("s", t, e), -1.0) for e in ix.spipes_out[n]]
        coeffs.append((qrs(t, n), 1.0))
        rows.append(LinearRow(coeffs=tuple(coeffs), sense="==", rhs=0.0,
                              tag=f"route.s.{n}"))
        coeffs = [(hq("r", t, e), 1.0) for e in ix.rpipes_in[n]]
        coeffs += [(hq("r", t, e), -1.0) for e in ix.rpipes_out[n]]
        coeffs.append((qrs(t, n), -1.0))
        rows.append(LinearRow(coeffs=tuple(coeffs), sense="==", rhs=0.0,
                              tag=f"route.r.{n}"))
    res = solve(assemble([], Objective(linear=obj), vars, extra_linear=rows))
    if not res.ok:
        return None
    return dict(res.values)


def _mix_side_temps(ix: ScenarioIndex, pipes, pin: dict[str, list[int]],
                    flow_of, source_temp, ambient: float) -> dict[str, float]:
    """Node temperatures implied by decay and flow-weighted mixing.

    Nodes without incoming pipes take source_temp; the rest resolve in
    sweep order once every upstream sender is known.  Nodes stuck in a
    cycle fall back to source_temp.
    """
    temps: dict[str, float] = {}
    pending = set(ix.heat_nodes)
    progress = True
    while pending and progress:
        progress = False
        for n in sorted(pending):
            ins = pin[n]
            if not ins:
                temps[n] = source_temp(n)
                pending.discard(n)
                progress = True
                continue
            if any(pipes[e].sender in pending for e in ins):
                continue
            num, den = 0.0, 0.0
            for e in ins:
                p = pipes[e]
                q = max(Q_MIN_L, flow_of(e))
                y = math.exp(-xihat(p.xi_m3s) / q)
                num += q * (ambient + (temps[p.sender] - ambient) * y)
                den += q
            temps[n] = num / den if den > 0 else source_temp(n)
            pending.discard(n)
            progress = True
    for n in pending:
        temps[n] = source_temp(n)
    return temps


def initial_heat_reference(s: Scenario, ix: ScenarioIndex) -> ReferencePoint:
    """Starting reference: routed flows with propagated temperatures.

    Load transfers are sized to carry each load's duty, flows are routed
    to satisfy continuity, and node temperatures follow decay and mixing
    from mid-band generation temperatures.  Return temperatures at loads
    are set so the transfer actually carries the duty, then the sizing is
    repeated a few times since the split depends on the flows.
    """
    u = Units(s)
    temps: dict[str, float] = {}
    flows: dict[str, float] = {}
    qv: dict[str, float] = {}
    gains: dict[str, float] = {}
    chp_ts = {c.node: 0.5 * (c.supply_temp_min_c + c.supply_temp_max_c)
              for c in ix.chps}
    ts = float(np.mean(list(chp_ts.values()))) if chp_ts else 70.0
    if ix.heat_loads:
        tr = float(np.mean([0.5 * (l.return_temp_min_c + l.return_temp_max_c)
                            for l in ix.heat_loads]))
    else:
        tr = 40.0
    dt_ref = max(5.0, ts - tr)
    for t in ix.slots:
        a = float(s.heat.ambient_c[t])
        draw: dict[str, float] = {}
        cap: dict[str, float] = {}
        for l in ix.heat_loads:
            duty = float(l.demand_w[t]) / W_PER_KW
            cap[l.node] = 0.95 * sum(ix.supply_pipes[e].q_max_m3s
                                     for e in ix.spipes_in[l.node]) * L_PER_M3
            draw[l.node] = min(max(Q_MIN_L, duty / (u.heat_coeff * dt_ref)),
                               max(Q_MIN_L, cap[l.node]))
        routed = None
        sup: dict[str, float] = {}
        for _ in range(3):
            routed = _route_heat_flows(s, ix, t, draw)
            if routed is None:
                break
            sup = _mix_side_temps(
                ix, ix.supply_pipes, ix.spipes_in,
                lambda e: routed[hq("s", t, e)],
                lambda n: chp_ts.get(n, ts), a)
            resized = False
            for l in ix.heat_loads:
                duty = float(l.demand_w[t]) / W_PER_KW
                need = duty / (u.heat_coeff * draw[l.node])
                tr_n = min(max(sup[l.node] - need, l.return_temp_min_c),
                           l.return_temp_max_c)
                have = max(5.0, sup[l.node] - tr_n)
                new = min(max(Q_MIN_L, duty / (u.heat_coeff * have)),
                          max(Q_MIN_L, cap[l.node]))
                if abs(new - draw[l.node]) > 1e-6:
                    resized = True
                draw[l.node] = new
            if not resized:
                break
        if routed is not None:
            for side, pipes in (("s", ix.supply_pipes), ("r", ix.return_pipes)):
                for e in range(len(pipes)):
                    flows[hq(side, t, e)] = routed[hq(side, t, e)]
            for n in ix.heat_nodes:
                qv[qrs(t, n)] = routed[qrs(t, n)]
            tr_src: dict[str, float] = {}
            for l in ix.heat_loads:
                duty = float(l.demand_w[t]) / W_PER_KW
                q_l = max(Q_MIN_L, abs(qv[qrs(t, l.node)]))
                need = duty / (u.heat_coeff * q_l)
                tr_src[l.node] = min(max(sup[l.node] - need,
                                         l.return_temp_min_c),
                                     l.return_temp_max_c)
            ret = _mix_side_temps(
                ix, ix.return_pipes, ix.rpipes_in,
                lambda e: routed[hq("r", t, e)],
                lambda n: tr_src.get(n, tr), a)
            for n in ix.heat_nodes:
                temps[ht("s", t, n)] = sup[n]
                temps[ht("r", t, n)] = ret[n]
        else:
            for n in ix.heat_nodes:
                temps[ht("s", t, n)] = ts
                temps[ht("r", t, n)] = tr
            for side, pipes in (("s", ix.supply_pipes), ("r", ix.return_pipes)):
                for e, p in enumerate(pipes):
                    flows[hq(side, t, e)] = max(Q_MIN_L,
                                                0.25 * p.q_max_m3s * L_PER_M3)
            for c in ix.chps:
                qv[qrs(t, c.node)] = min(
                    c.q_rs_max_m3s * L_PER_M3,
                    max(Q_MIN_L, sum(draw.values()) / max(1, len(ix.chps))))
            for n, d in draw.items():
                qv[qrs(t, n)] = -d
            for n in ix.heat_junctions:
                qv[qrs(t, n)] = 0.0
        for c in ix.chps:
            gains[hdh(t, ix.chp_pos[c.node])] = 0.5 * c.pump_c
    return _heat_reference_consistent(s, ix, temps, flows, qv, gains)


def heat_reference_from(s: Scenario, ix: ScenarioIndex,
                        vals: dict[str, float]) -> ReferencePoint:
    """Consistent reference rebuilt from a solved iterate."""
    temps: dict[str, float] = {}
    flows: dict[str, float] = {}
    qv: dict[str, float] = {}
    gains: dict[str, float] = {}
    for t in ix.slots:
        for n in ix.heat_nodes:
            temps[ht("s", t, n)] = vals[ht("s", t, n)]
            temps[ht("r", t, n)] = vals[ht("r", t, n)]
            qv[qrs(t, n)] = vals[qrs(t, n)]
        for side, pipes in (("s", ix.supply_pipes), ("r", ix.return_pipes)):
            for e in range(len(pipes)):
                flows[hq(side, t, e)] = vals[hq(side, t, e)]
        for c in range(len(ix.chps)):
            gains[hdh(t, c)] = max(0.0, vals[hdh(t, c)])
    return _heat_reference_consistent(s, ix, temps, flows, qv, gains)


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def extract_solution(s: Scenario, ix: ScenarioIndex,
                     pvals: dict[str, float],
                     wvals: dict[str, float],
                     hvals: dict[str, float]) -> Solution:
    """Assemble an SI Solution from the three subproblem value maps.

    Pump electric powers are recomputed from heads and flows so the pump
    identity holds exactly in the assembled solution.
    """
    u = Units(s)
    sol = Solution.zeros(s)
    T = ix.n_slots
    for t in range(T):
        for i, n in enumerate(ix.power_nodes):
            sol.v_sq_pu[t, i] = pvals[vsq(t, n)]
        for e in range(len(ix.lines)):
            sol.line_p_pu[t, e] = pvals[pl(t, e)]
            sol.line_q_pu[t, e] = pvals[ql(t, e)]
            sol.line_i_sq_pu[t, e] = pvals[isq(t, e)]
        sol.slack_p_pu[t] = pvals[imp_p(t)]
        sol.slack_q_pu[t] = pvals[imp_q(t)]
        for d in range(len(ix.ders)):
            sol.der_p_w[t, d] = pvals[derp(t, d)] * W_PER_KW
            sol.der_q_w[t, d] = pvals[derq(t, d)] * W_PER_KW

        for e, p in enumerate(ix.water_pipes):
            sol.water_q_m3s[t, e] = wvals[wq(t, e)] / L_PER_M3
        for i, n in enumerate(ix.water_nodes):
            sol.water_head_m[t, i] = wvals[wh(t, n)]
        for w, e in enumerate(ix.pump_pipes):
            p = ix.water_pipes[e]
            sol.wpump_w[t, w] = (u.rho_g / p.efficiency
                                 * wvals[wdh(t, e)] * sol.water_q_m3s[t, e])

        for i, n in enumerate(ix.heat_nodes):
            sol.heat_supply_head_m[t, i] = hvals[hh("s", t, n)]
            sol.heat_return_head_m[t, i] = hvals[hh("r", t, n)]
            sol.heat_supply_temp_c[t, i] = hvals[ht("s", t, n)]
            sol.heat_return_temp_c[t, i] = hvals[ht("r", t, n)]
            sol.q_rs_m3s[t, i] = hvals[qrs(t, n)] / L_PER_M3
        for e in range(len(ix.supply_pipes)):
            sol.heat_supply_q_m3s[t, e] = hvals[hq("s", t, e)] / L_PER_M3
            sol.heat_supply_temp_out_c[t, e] = hvals[hto("s", t, e)]
        for e in range(len(ix.return_pipes)):
            sol.heat_return_q_m3s[t, e] = hvals[hq("r", t, e)] / L_PER_M3
            sol.heat_return_temp_out_c[t, e] = hvals[hto("r", t, e)]
        for c, chp in enumerate(ix.chps):
            K = len(chp.vertex_cost)
            al = np.array([hvals[alpha(t, c, k)] for k in range(K)])
            sol.chp_alpha[c][t, :] = al
            sol.chp_p_w[t, c] = float(al @ chp.extreme_p_w)
            sol.chp_q_w[t, c] = float(al @ chp.extreme_q_w)
            sol.chp_heat_w[t, c] = float(al @ chp.extreme_heat_w)
            i = ix.hnode_pos[chp.node]
            sol.chp_pump_w[t, c] = (u.rho_g / chp.pump_efficiency
                                    * hvals[hdh(t, c)] * sol.q_rs_m3s[t, i])
    return sol
