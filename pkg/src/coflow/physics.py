"""Exact nonconvex physics: evaluation, residuals, and operating cost.

This module is the verification oracle for the scheduling engine.  It shares
no code with the convex solve path: every law is written here directly in its
nonconvex form and evaluated with plain numpy, so a schedule that passes both
paths has been checked twice by genuinely different routes.

Conventions
-----------
* Relative residuals divide by max(1, |lhs|, |rhs|); equalities report
  |lhs - rhs|, inequalities report max(0, overshoot).
* A pipe with flow below ``FLOW_EPS`` carries no water: its temperature
  propagation is inactive and it is excluded from mixing sums.
* Power-network quantities are per-unit; device powers are watts; hydraulics
  are SI (m, m^3/s); temperatures are Celsius.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .indexing import ScenarioIndex
from .model import Scenario, WaterTank

FLOW_EPS = 1e-9


# ---------------------------------------------------------------------------
# closed-form element laws
# ---------------------------------------------------------------------------

def temperature_out(tau_in: float, tau_ambient: float, xi: float, q: float) -> float:
    """Pipe outlet temperature after exponential decay toward ambient.

    tau_out = tau_ambient + (tau_in - tau_ambient) * exp(-xi / q),  q > 0.
    """
    if q <= 0:
        raise ValueError(f"temperature_out needs q > 0, got {q}")
    return tau_ambient + (tau_in - tau_ambient) * math.exp(-xi / q)


def pump_power_w(density: float, gravity: float, efficiency: float,
                 head_gain_m: float, q_m3s: float) -> float:
    """Electrical power drawn by a pump lifting q by head_gain."""
    return density * gravity * head_gain_m * q_m3s / efficiency


def darcy_drop_m(friction: float, q_m3s: float) -> float:
    """Friction head loss along a pipe: friction * q^2."""
    return friction * q_m3s ** 2


def simulate_tank(tank: WaterTank, inflow_m3s: np.ndarray, outflow_m3s: np.ndarray,
                  dt_s: float) -> np.ndarray:
    """Integrate outlet head over the horizon from the tank's initial head.

    head[t] = head[t-1] + dt/S * (inflow[t] - outflow[t]); volume is conserved
    exactly: S * (head[-1] - initial) == dt * sum(inflow - outflow) up to
    float rounding.
    """
    inflow = np.asarray(inflow_m3s, dtype=float)
    outflow = np.asarray(outflow_m3s, dtype=float)
    heads = np.empty_like(inflow)
    h = tank.initial_head_m
    for t in range(inflow.shape[0]):
        h = h + dt_s / tank.cross_section_m2 * (inflow[t] - outflow[t])
        heads[t] = h
    return heads


# ---------------------------------------------------------------------------
# schedule container
# ---------------------------------------------------------------------------

@dataclass
class Solution:
    """A full schedule over the horizon, in declaration-order arrays.

    Shapes: T slots; power nodes/lines, water nodes/pipes, heat nodes and
    supply/return pipes in scenario declaration order; chp_alpha is a list
    with one (T, K_i) array per CHP.
    """
    # power, per-unit
    v_sq_pu: np.ndarray            # (T, n_power_nodes)
    line_p_pu: np.ndarray          # (T, n_lines) sending-end active flow
    line_q_pu: np.ndarray          # (T, n_lines)
    line_i_sq_pu: np.ndarray       # (T, n_lines) squared current magnitude
    slack_p_pu: np.ndarray         # (T,) grid import at the slack node
    slack_q_pu: np.ndarray         # (T,)
    der_p_w: np.ndarray            # (T, n_ders)
    der_q_w: np.ndarray            # (T, n_ders)
    # coupling, watts
    chp_p_w: np.ndarray            # (T, n_chps)
    chp_q_w: np.ndarray            # (T, n_chps)
    chp_pump_w: np.ndarray         # (T, n_chps)
    wpump_w: np.ndarray            # (T, n_pump_pipes)
    # water, SI
    water_q_m3s: np.ndarray        # (T, n_water_pipes)
    water_head_m: np.ndarray       # (T, n_water_nodes)
    # heat, SI
    chp_alpha: list[np.ndarray]    # per CHP: (T, K)
    chp_heat_w: np.ndarray         # (T, n_chps)
    q_rs_m3s: np.ndarray           # (T, n_heat_nodes) return->supply transfer
    heat_supply_q_m3s: np.ndarray  # (T, n_supply_pipes)
    heat_return_q_m3s: np.ndarray  # (T, n_return_pipes)
    heat_supply_head_m: np.ndarray  # (T, n_heat_nodes)
    heat_return_head_m: np.ndarray  # (T, n_heat_nodes)
    heat_supply_temp_c: np.ndarray  # (T, n_heat_nodes)
    heat_return_temp_c: np.ndarray  # (T, n_heat_nodes)
    heat_supply_temp_out_c: np.ndarray  # (T, n_supply_pipes) pipe outlet temps
    heat_return_temp_out_c: np.ndarray  # (T, n_return_pipes)

    @classmethod
    def zeros(cls, s: Scenario) -> "Solution":
        ix = ScenarioIndex(s)
        T = s.horizon.slot_count
        return cls(
            v_sq_pu=np.ones((T, len(ix.power_nodes))),
            line_p_pu=np.zeros((T, len(ix.lines))),
            line_q_pu=np.zeros((T, len(ix.lines))),
            line_i_sq_pu=np.zeros((T, len(ix.lines))),
            slack_p_pu=np.zeros(T),
            slack_q_pu=np.zeros(T),
            der_p_w=np.zeros((T, len(ix.ders))),
            der_q_w=np.zeros((T, len(ix.ders))),
            chp_p_w=np.zeros((T, len(ix.chps))),
            chp_q_w=np.zeros((T, len(ix.chps))),
            chp_pump_w=np.zeros((T, len(ix.chps))),
            wpump_w=np.zeros((T, len(ix.pump_pipes))),
            water_q_m3s=np.zeros((T, len(ix.water_pipes))),
            water_head_m=np.zeros((T, len(ix.water_nodes))),
            chp_alpha=[np.zeros((T, len(c.extreme_p_w))) for c in ix.chps],
            chp_heat_w=np.zeros((T, len(ix.chps))),
            q_rs_m3s=np.zeros((T, len(ix.heat_nodes))),
            heat_supply_q_m3s=np.zeros((T, len(ix.supply_pipes))),
            heat_return_q_m3s=np.zeros((T, len(ix.return_pipes))),
            heat_supply_head_m=np.zeros((T, len(ix.heat_nodes))),
            heat_return_head_m=np.zeros((T, len(ix.heat_nodes))),
            heat_supply_temp_c=np.zeros((T, len(ix.heat_nodes))),
            heat_return_temp_c=np.zeros((T, len(ix.heat_nodes))),
            heat_supply_temp_out_c=np.zeros((T, len(ix.supply_pipes))),
            heat_return_temp_out_c=np.zeros((T, len(ix.return_pipes))),
        )

    def to_dict(self) -> dict:
        d = {}
        for name, val in self.__dict__.items():
            if name == "chp_alpha":
                d[name] = [a.tolist() for a in val]
            else:
                d[name] = np.asarray(val).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Solution":
        kwargs = {}
        for name in cls.__dataclass_fields__:
            if name == "chp_alpha":
                kwargs[name] = [np.asarray(a, dtype=float) for a in d[name]]
            else:
                kwargs[name] = np.asarray(d[name], dtype=float)
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Solution":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# residual accounting
# ---------------------------------------------------------------------------

@dataclass
class FamilyResidual:
    family: str
    max_abs: float = 0.0
    max_rel: float = 0.0
    worst: str = ""
    count: int = 0

    def to_dict(self) -> dict:
        return {"family": self.family, "max_abs": self.max_abs,
                "max_rel": self.max_rel, "worst": self.worst, "count": self.count}


class _Acc:
    """Accumulates worst-case residuals for one constraint family."""

    def __init__(self, family: str):
        self.r = FamilyResidual(family)

    def _note(self, abs_err: float, rel_err: float, where: str) -> None:
        self.r.count += 1
        if abs_err > self.r.max_abs:
            self.r.max_abs = abs_err
        if rel_err > self.r.max_rel:
            self.r.max_rel = rel_err
            self.r.worst = where

    def eq(self, lhs: float, rhs: float, where: str) -> None:
        err = abs(lhs - rhs)
        self._note(err, err / max(1.0, abs(lhs), abs(rhs)), where)

    def le(self, lhs: float, rhs: float, where: str) -> None:
        err = max(0.0, lhs - rhs)
        self._note(err, err / max(1.0, abs(lhs), abs(rhs)), where)

    def within(self, x: float, lo: float, hi: float, where: str) -> None:
        self.le(lo, x, where + " lower")
        self.le(x, hi, where + " upper")


@dataclass
class ResidualReport:
    families: dict[str, FamilyResidual]

    @property
    def max_rel(self) -> float:
        return float(max((f.max_rel for f in self.families.values()), default=0.0))

    def certified(self, tol: float = 1e-3) -> bool:
        return bool(self.max_rel <= tol)

    def worst_family(self) -> str:
        if not self.families:
            return ""
        return max(self.families.values(), key=lambda f: f.max_rel).family

    def to_dict(self) -> dict:
        return {"max_rel": self.max_rel,
                "families": {k: v.to_dict() for k, v in self.families.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# power network
# ---------------------------------------------------------------------------

def _power_injections_w(s: Scenario, ix: ScenarioIndex, sol: Solution):
    """Net device injection (W) at each power node per slot, excluding grid import."""
    T = s.horizon.slot_count
    inj_p = np.zeros((T, len(ix.power_nodes)))
    inj_q = np.zeros((T, len(ix.power_nodes)))
    for d, der in enumerate(ix.ders):
        k = ix.pnode_pos[der.node]
        inj_p[:, k] += sol.der_p_w[:, d]
        inj_q[:, k] += sol.der_q_w[:, d]
    for c, chp in enumerate(ix.chps):
        pn = s.coupling.chp_nodes.get(chp.node)
        if pn is not None:
            inj_p[:, ix.pnode_pos[pn]] += sol.chp_p_w[:, c]
            inj_q[:, ix.pnode_pos[pn]] += sol.chp_q_w[:, c]
        pumped = s.coupling.chp_pump_nodes.get(chp.node, pn)
        if pumped is not None:
            inj_p[:, ix.pnode_pos[pumped]] -= sol.chp_pump_w[:, c]
    for w, e in enumerate(ix.pump_pipes):
        pipe = ix.water_pipes[e]
        pn = s.coupling.pump_nodes.get(pipe.key)
        if pn is not None:
            inj_p[:, ix.pnode_pos[pn]] -= sol.wpump_w[:, w]
    return inj_p, inj_q


def slack_import_pu(s: Scenario, sol: Solution) -> np.ndarray:
    """Grid import at the slack node from the branch-flow balance, per slot."""
    ix = ScenarioIndex(s)
    inj_p, _ = _power_injections_w(s, ix, sol)
    k = ix.slack_pos
    nid = s.power.slack_node
    node = s.power.nodes[k]
    T = s.horizon.slot_count
    out = np.zeros(T)
    for t in range(T):
        sent = sum(sol.line_p_pu[t, e] for e in ix.lines_out[nid])
        recv = sum(sol.line_p_pu[t, e] - ix.lines[e].r_pu * sol.line_i_sq_pu[t, e]
                   for e in ix.lines_in[nid])
        balance_inj = sent - recv
        out[t] = balance_inj - inj_p[t, k] / s.power.s_base_va + node.p_load_pu[t]
    return out


def eval_power_residuals(s: Scenario, sol: Solution) -> dict[str, FamilyResidual]:
    ix = ScenarioIndex(s)
    T = s.horizon.slot_count
    flow = _Acc("power.flow")
    rank1 = _Acc("power.rank1")
    voltage = _Acc("power.voltage")
    injection = _Acc("power.injection")
    inj_p, inj_q = _power_injections_w(s, ix, sol)
    sb = s.power.s_base_va

    for t in range(T):
        for k, nid in enumerate(ix.power_nodes):
            node = s.power.nodes[k]
            p_i = inj_p[t, k] / sb - node.p_load_pu[t]
            q_i = inj_q[t, k] / sb - node.q_load_pu[t]
            if k == ix.slack_pos:
                p_i += sol.slack_p_pu[t]
                q_i += sol.slack_q_pu[t]
            in_p = sum(sol.line_p_pu[t, e] - ix.lines[e].r_pu * sol.line_i_sq_pu[t, e]
                       for e in ix.lines_in[nid])
            in_q = sum(sol.line_q_pu[t, e] - ix.lines[e].x_pu * sol.line_i_sq_pu[t, e]
                       for e in ix.lines_in[nid])
            out_p = sum(sol.line_p_pu[t, e] for e in ix.lines_out[nid])
            out_q = sum(sol.line_q_pu[t, e] for e in ix.lines_out[nid])
            flow.eq(in_p + p_i, out_p, f"t={t} node={nid} active balance")
            flow.eq(in_q + q_i, out_q, f"t={t} node={nid} reactive balance")
            if k == ix.slack_pos:
                voltage.eq(sol.v_sq_pu[t, k], s.power.slack_voltage_sq_pu,
                           f"t={t} node={nid} slack voltage")
            else:
                voltage.within(sol.v_sq_pu[t, k], node.v_min_sq_pu, node.v_max_sq_pu,
                               f"t={t} node={nid} voltage")
        for e, ln in enumerate(ix.lines):
            vi = sol.v_sq_pu[t, ix.pnode_pos[ln.sender]]
            vj = sol.v_sq_pu[t, ix.pnode_pos[ln.receiver]]
            P, Q, L = sol.line_p_pu[t, e], sol.line_q_pu[t, e], sol.line_i_sq_pu[t, e]
            flow.eq(vi - vj, 2 * (ln.r_pu * P + ln.x_pu * Q) - ln.z_sq_pu * L,
                    f"t={t} line={ln.sender}->{ln.receiver} voltage drop")
            rank1.eq(vi * L, P * P + Q * Q,
                     f"t={t} line={ln.sender}->{ln.receiver} current identity")
            injection.le(-L, 0.0, f"t={t} line={ln.sender}->{ln.receiver} current sign")
        for d, der in enumerate(ix.ders):
            p, q = sol.der_p_w[t, d], sol.der_q_w[t, d]
            injection.within(p, der.p_min_w[t], der.p_max_w[t],
                             f"t={t} der@{der.node} active")
            injection.within(q, der.q_min_w[t], der.q_max_w[t],
                             f"t={t} der@{der.node} reactive")
            if der.s_max_w is not None:
                injection.le(math.hypot(p, q), der.s_max_w,
                             f"t={t} der@{der.node} apparent cap")
    return {a.r.family: a.r for a in (flow, rank1, voltage, injection)}


# ---------------------------------------------------------------------------
# water network
# ---------------------------------------------------------------------------

def eval_water_residuals(s: Scenario, sol: Solution) -> dict[str, FamilyResidual]:
    ix = ScenarioIndex(s)
    T = s.horizon.slot_count
    limits = _Acc("water.flow_limits")
    continuity = _Acc("water.continuity")
    head_min = _Acc("water.min_head")
    tank_acc = _Acc("water.tank")
    reservoir = _Acc("water.reservoir")
    pump = _Acc("water.pump")
    valve = _Acc("water.valve")
    head_loss = _Acc("water.head_loss")
    g = s.constants.gravity_m_s2
    rho = s.constants.water_density_kg_m3

    for t in range(T):
        for e, p in enumerate(ix.water_pipes):
            q = sol.water_q_m3s[t, e]
            limits.within(q, 0.0, p.q_max_m3s, f"t={t} pipe={p.sender}->{p.receiver} flow")
            hi = sol.water_head_m[t, ix.wnode_pos[p.sender]]
            hj = sol.water_head_m[t, ix.wnode_pos[p.receiver]]
            if p.kind == "plain":
                head_loss.eq(hi - hj, darcy_drop_m(p.friction_s2m5, q),
                             f"t={t} pipe={p.sender}->{p.receiver} friction drop")
            elif p.kind == "valve":
                valve.le(hj, hi, f"t={t} valve={p.sender}->{p.receiver} no gain")
            elif p.kind == "pump":
                gain = hj - hi
                pump.le(0.0, gain, f"t={t} pump={p.sender}->{p.receiver} gain sign")
                pump.le(gain, -p.pump_a * q * q + p.pump_b * q + p.pump_c,
                        f"t={t} pump={p.sender}->{p.receiver} gain window")
        for j in s.water.junctions:
            inflow = sum(sol.water_q_m3s[t, e] for e in ix.wpipes_in[j.id])
            outflow = sum(sol.water_q_m3s[t, e] for e in ix.wpipes_out[j.id])
            continuity.eq(inflow, j.demand_m3s[t] + outflow,
                          f"t={t} junction={j.id} continuity")
            head_min.le(j.min_head_m, sol.water_head_m[t, ix.wnode_pos[j.id]],
                        f"t={t} junction={j.id} min head")
        for r in s.water.reservoirs:
            reservoir.eq(sol.water_head_m[t, ix.wnode_pos[r.id]], r.head_m,
                         f"t={t} reservoir={r.id} fixed head")
    for tank in s.water.tanks:
        inflow = np.array([sum(sol.water_q_m3s[t, e] for e in ix.wpipes_in[tank.inlet])
                           for t in range(T)])
        outflow = np.array([sum(sol.water_q_m3s[t, e] for e in ix.wpipes_out[tank.outlet])
                            for t in range(T)])
        heads = simulate_tank(tank, inflow, outflow, s.horizon.dt_s)
        for t in range(T):
            h_out = sol.water_head_m[t, ix.wnode_pos[tank.outlet]]
            h_in = sol.water_head_m[t, ix.wnode_pos[tank.inlet]]
            tank_acc.eq(h_out, heads[t], f"t={t} tank={tank.outlet} head recursion")
            tank_acc.le(tank.min_head_m, h_out, f"t={t} tank={tank.outlet} min head")
            tank_acc.le(h_out, h_in, f"t={t} tank={tank.outlet} below inlet head")
    # pump electrical power identity
    for w, e in enumerate(ix.pump_pipes):
        p = ix.water_pipes[e]
        for t in range(T):
            hi = sol.water_head_m[t, ix.wnode_pos[p.sender]]
            hj = sol.water_head_m[t, ix.wnode_pos[p.receiver]]
            q = sol.water_q_m3s[t, e]
            pump.eq(sol.wpump_w[t, w],
                    pump_power_w(rho, g, p.efficiency, hj - hi, q),
                    f"t={t} pump={p.sender}->{p.receiver} electrical power")
    return {a.r.family: a.r for a in (limits, continuity, head_min, tank_acc,
                                      reservoir, pump, valve, head_loss)}


# ---------------------------------------------------------------------------
# heat network
# ---------------------------------------------------------------------------

def eval_heat_residuals(s: Scenario, sol: Solution) -> dict[str, FamilyResidual]:
    ix = ScenarioIndex(s)
    T = s.horizon.slot_count
    chp_acc = _Acc("heat.chp")
    load_acc = _Acc("heat.load")
    junction_acc = _Acc("heat.junction")
    head_loss = _Acc("heat.head_loss")
    limits = _Acc("heat.flow_limits")
    prop = _Acc("heat.propagation")
    mixing = _Acc("heat.mixing")
    continuity = _Acc("heat.continuity")
    c_vol = s.constants.heat_capacity_j_m3k
    g = s.constants.gravity_m_s2
    rho = s.constants.water_density_kg_m3
    amb = s.heat.ambient_c

    for t in range(T):
        # CHP units: polytope, heating identity, temperatures, circulation pump
        for ci, chp in enumerate(ix.chps):
            k = ix.hnode_pos[chp.node]
            a = sol.chp_alpha[ci][t]
            chp_acc.eq(float(np.sum(a)), 1.0, f"t={t} chp={chp.node} weights sum")
            for kk, ak in enumerate(a):
                chp_acc.within(float(ak), 0.0, 1.0, f"t={t} chp={chp.node} weight {kk}")
            chp_acc.eq(sol.chp_p_w[t, ci], float(a @ chp.extreme_p_w),
                       f"t={t} chp={chp.node} active output")
            chp_acc.eq(sol.chp_q_w[t, ci], float(a @ chp.extreme_q_w),
                       f"t={t} chp={chp.node} reactive output")
            chp_acc.eq(sol.chp_heat_w[t, ci], float(a @ chp.extreme_heat_w),
                       f"t={t} chp={chp.node} heat output")
            q_rs = sol.q_rs_m3s[t, k]
            tau_s = sol.heat_supply_temp_c[t, k]
            tau_r = sol.heat_return_temp_c[t, k]
            chp_acc.eq(sol.chp_heat_w[t, ci], c_vol * q_rs * (tau_s - tau_r),
                       f"t={t} chp={chp.node} heating identity")
            chp_acc.within(tau_s, chp.supply_temp_min_c, chp.supply_temp_max_c,
                           f"t={t} chp={chp.node} supply temperature")
            chp_acc.le(0.0, q_rs, f"t={t} chp={chp.node} transfer sign")
            chp_acc.le(q_rs, chp.q_rs_max_m3s, f"t={t} chp={chp.node} transfer cap")
            gain = sol.heat_supply_head_m[t, k] - sol.heat_return_head_m[t, k]
            chp_acc.le(0.0, gain, f"t={t} chp={chp.node} pump gain sign")
            chp_acc.le(gain, -chp.pump_a * q_rs * q_rs + chp.pump_b * q_rs + chp.pump_c,
                       f"t={t} chp={chp.node} pump gain window")
            chp_acc.eq(sol.chp_pump_w[t, ci],
                       pump_power_w(rho, g, chp.pump_efficiency, gain, q_rs),
                       f"t={t} chp={chp.node} pump electrical power")
        # heating loads
        for li, load in enumerate(ix.heat_loads):
            k = ix.hnode_pos[load.node]
            q_rs = sol.q_rs_m3s[t, k]
            tau_s = sol.heat_supply_temp_c[t, k]
            tau_r = sol.heat_return_temp_c[t, k]
            load_acc.eq(load.demand_w[t], c_vol * q_rs * (tau_r - tau_s),
                        f"t={t} load={load.node} heating identity")
            load_acc.within(tau_r, load.return_temp_min_c, load.return_temp_max_c,
                            f"t={t} load={load.node} return temperature")
            load_acc.le(q_rs, 0.0, f"t={t} load={load.node} transfer sign")
            load_acc.le(load.min_head_sep_m,
                        sol.heat_supply_head_m[t, k] - sol.heat_return_head_m[t, k],
                        f"t={t} load={load.node} head separation")
        # junctions couple the two sides
        for nid in ix.heat_junctions:
            k = ix.hnode_pos[nid]
            junction_acc.eq(sol.heat_supply_temp_c[t, k], sol.heat_return_temp_c[t, k],
                            f"t={t} junction={nid} temperature tie")
            junction_acc.eq(sol.heat_supply_head_m[t, k], sol.heat_return_head_m[t, k],
                            f"t={t} junction={nid} head tie")
        # pipes: flow caps, friction, propagation
        for side, pipes, qs, touts, heads, temps in (
            ("supply", ix.supply_pipes, sol.heat_supply_q_m3s, sol.heat_supply_temp_out_c,
             sol.heat_supply_head_m, sol.heat_supply_temp_c),
            ("return", ix.return_pipes, sol.heat_return_q_m3s, sol.heat_return_temp_out_c,
             sol.heat_return_head_m, sol.heat_return_temp_c),
        ):
            for e, p in enumerate(pipes):
                q = qs[t, e]
                limits.within(q, 0.0, p.q_max_m3s,
                              f"t={t} {side} pipe={p.sender}->{p.receiver} flow")
                hi = heads[t, ix.hnode_pos[p.sender]]
                hj = heads[t, ix.hnode_pos[p.receiver]]
                head_loss.eq(hi - hj, darcy_drop_m(p.friction_s2m5, q),
                             f"t={t} {side} pipe={p.sender}->{p.receiver} friction drop")
                if q > FLOW_EPS:
                    tau_in = temps[t, ix.hnode_pos[p.sender]]
                    prop.eq(touts[t, e], temperature_out(tau_in, amb[t], p.xi_m3s, q),
                            f"t={t} {side} pipe={p.sender}->{p.receiver} outlet temperature")
        # mixing at receiving nodes (flow-weighted; dry pipes excluded)
        for nid in ix.heat_nodes:
            k = ix.hnode_pos[nid]
            for side, pin, qs, touts, temps in (
                ("supply", ix.spipes_in[nid], sol.heat_supply_q_m3s,
                 sol.heat_supply_temp_out_c, sol.heat_supply_temp_c),
                ("return", ix.rpipes_in[nid], sol.heat_return_q_m3s,
                 sol.heat_return_temp_out_c, sol.heat_return_temp_c),
            ):
                live = [e for e in pin if qs[t, e] > FLOW_EPS]
                if not live:
                    continue
                total = sum(qs[t, e] for e in live)
                mixed = sum(qs[t, e] * touts[t, e] for e in live)
                mixing.eq(mixed, total * temps[t, k], f"t={t} node={nid} {side} mixing")
        # continuity on both sides
        for nid in ix.heat_nodes:
            k = ix.hnode_pos[nid]
            s_in = sum(sol.heat_supply_q_m3s[t, e] for e in ix.spipes_in[nid])
            s_out = sum(sol.heat_supply_q_m3s[t, e] for e in ix.spipes_out[nid])
            continuity.eq(s_in + sol.q_rs_m3s[t, k], s_out,
                          f"t={t} node={nid} supply continuity")
            r_in = sum(sol.heat_return_q_m3s[t, e] for e in ix.rpipes_in[nid])
            r_out = sum(sol.heat_return_q_m3s[t, e] for e in ix.rpipes_out[nid])
            continuity.eq(r_in - sol.q_rs_m3s[t, k], r_out,
                          f"t={t} node={nid} return continuity")
    return {a.r.family: a.r for a in (chp_acc, load_acc, junction_acc, head_loss,
                                      limits, prop, mixing, continuity)}


def eval_residuals(s: Scenario, sol: Solution) -> ResidualReport:
    families: dict[str, FamilyResidual] = {}
    families.update(eval_power_residuals(s, sol))
    families.update(eval_water_residuals(s, sol))
    families.update(eval_heat_residuals(s, sol))
    return ResidualReport(families)


# ---------------------------------------------------------------------------
# operating cost
# ---------------------------------------------------------------------------

def reservoir_outflow_m3s(s: Scenario, sol: Solution) -> np.ndarray:
    """Total net draw from all reservoirs per slot."""
    ix = ScenarioIndex(s)
    T = s.horizon.slot_count
    out = np.zeros(T)
    for r in s.water.reservoirs:
        for t in range(T):
            out[t] += sum(sol.water_q_m3s[t, e] for e in ix.wpipes_out[r.id])
            out[t] -= sum(sol.water_q_m3s[t, e] for e in ix.wpipes_in[r.id])
    return out


def cost_breakdown(s: Scenario, sol: Solution) -> dict[str, float]:
    """Dollar totals per cost source over the horizon.

    Grid import is recomputed from the slack-node branch-flow balance, not
    read from the stored slack variable.
    """
    ix = ScenarioIndex(s)
    T = s.horizon.slot_count
    dt_h = s.horizon.dt_h
    lam_e = s.prices.electricity_per_wh
    lam_w = s.prices.water_per_m3
    sb = s.power.s_base_va

    p_e0 = slack_import_pu(s, sol)
    grid = float(sum(lam_e[t] * p_e0[t] * sb * dt_h for t in range(T)))
    der = 0.0
    for d, unit in enumerate(ix.ders):
        energy = sol.der_p_w[:, d] * dt_h
        der += float(np.sum(unit.cost_per_wh * energy
                            + unit.cost_quad_per_wh2 * energy ** 2))
    chp = 0.0
    for ci, unit in enumerate(ix.chps):
        chp += float(np.sum(sol.chp_alpha[ci] @ unit.vertex_cost))
    draw = reservoir_outflow_m3s(s, sol)
    water = float(sum(lam_w[t] * draw[t] * s.horizon.dt_s for t in range(T)))

    wpump_energy = float(sum(lam_e[t] * np.sum(sol.wpump_w[t]) * dt_h for t in range(T)))
    hpump_energy = float(sum(lam_e[t] * np.sum(sol.chp_pump_w[t]) * dt_h for t in range(T)))
    chp_revenue = float(sum(lam_e[t] * np.sum(sol.chp_p_w[t]) * dt_h for t in range(T)))

    return {
        "grid": grid,
        "der": der,
        "chp": chp,
        "water_draw": water,
        "total": grid + der + chp + water,
        "wpump_electricity": wpump_energy,
        "hpump_electricity": hpump_energy,
        "chp_electricity_revenue": chp_revenue,
    }


def total_cost(s: Scenario, sol: Solution) -> float:
    """Scheduling objective: DER + CHP operating cost + grid energy + water draw."""
    return cost_breakdown(s, sol)["total"]
