"""Conic subproblem builders.

Three programs cover the decomposition: a water program and a heat program,
each convexified around a reference point and holding the shared machine
powers to committed values, and a power program that either prices those
commitments through dual terms or pins them outright.

All coupling rows carry tags of the form coupling.water.{t}.{w} or
coupling.heat.{p|q|pump}.{t}.{c} so dual readout is name-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..convexify import (
    Aff,
    ConstraintBlock,
    LinearRow,
    ReferencePoint,
    SocRow,
    ccp_bilinear,
    ccp_exponential,
    relax_darcy_weisbach,
    relax_rank1,
)
from ..conic import ConicProgram, Objective, assemble
from ..indexing import ScenarioIndex
from ..model import Scenario
from . import variables as V
from .variables import Units, W_PER_KW, L_PER_M3, Q_MIN_L

HEAD_NUDGE = 1e-9       # pins the free head level in the heat circuits
AUX_NUDGE = 1e-4        # squeezes relaxation slack out of W and sq auxiliaries
CURRENT_NUDGE = 1e-9    # squeezes rank-1 slack out of line currents
STABILIZER = 1e-6       # weight on vertex costs in the power program
PIN_MARGIN = 1e-6       # interior ball around each product pin; without it the
                        # feasible set collapses to a point at the fixed point
                        # and the interior-point solver loses its footing


@dataclass
class ProgramParts:
    """A built program plus the bookkeeping the outer loop needs."""
    program: ConicProgram
    coupling: dict[str, str] = field(default_factory=dict)  # row tag -> x name
    slack_names: list[str] = field(default_factory=list)


def _soften(block: ConstraintBlock, slack_names: list[str],
            margin: float = PIN_MARGIN) -> ConstraintBlock:
    """Relax every softenable row by a slack variable plus a fixed margin."""
    out = ConstraintBlock(tag=block.tag, aux=dict(block.aux))
    for row in block.linear:
        if row.softenable:
            sl = f"{row.tag}.sl"
            out.aux[sl] = (0.0, None)
            slack_names.append(sl)
            out.linear.append(LinearRow(
                coeffs=row.coeffs + ((sl, -1.0),),
                sense=row.sense, rhs=row.rhs + margin, tag=row.tag))
        else:
            out.linear.append(row)
    for row in block.soc:
        if row.softenable:
            sl = f"{row.tag}.sl"
            out.aux[sl] = (0.0, None)
            slack_names.append(sl)
            out.soc.append(SocRow(
                u=Aff(coeffs=row.u.coeffs + ((sl, 1.0),),
                      const=row.u.const + margin),
                v=row.v, ws=row.ws, tag=row.tag))
        else:
            out.soc.append(row)
    out.exp.extend(block.exp)
    return out


def _mixing_block(side: str, t: int, node: str, in_pipes: list[int],
                  flows, temps_out, ref: ReferencePoint) -> ConstraintBlock:
    """Temperature mixing at a node: sum q*t_out = (sum q) * t_node.

    One product per incoming pipe plus one for the node total; the inflow
    sum gets its own auxiliary so every product is a plain pair.
    """
    tag = f"h.mix{side}[{t},{node}]"
    qin = f"{tag}.qin"
    pn = f"{tag}.pn"
    block = ConstraintBlock(tag=tag, aux={qin: (0.0, None), pn: (None, None)})
    bal = [(pn, -1.0)]
    qsum = [(qin, 1.0)]
    for e in in_pipes:
        pe = f"{tag}.p{e}"
        block.aux[pe] = (None, None)
        qv, tv = flows(e), temps_out(e)
        block.merge(ccp_bilinear(pe, qv, tv, ref.get(qv), ref.get(tv),
                                 f"{tag}.t{e}"))
        bal.append((pe, 1.0))
        qsum.append((qv, -1.0))
    block.merge(ccp_bilinear(pn, qin, f"h{side}t[{t},{node}]",
                             ref.get(qin), ref.get(f"h{side}t[{t},{node}]"),
                             f"{tag}.n"))
    block.linear.append(LinearRow(coeffs=tuple(qsum), sense="==", rhs=0.0,
                                  tag=f"{tag}.qsum"))
    block.linear.append(LinearRow(coeffs=tuple(bal), sense="==", rhs=0.0,
                                  tag=f"{tag}.bal"))
    return block


# ---------------------------------------------------------------------------
# water program
# ---------------------------------------------------------------------------

def build_owf_c(s: Scenario, ix: ScenarioIndex, x_couple: dict[str, float] | None,
                ref: ReferencePoint, penalty: float = 1e4,
                electricity_price: np.ndarray | None = None) -> ProgramParts:
    """Water subproblem around ``ref`` with pump budgets from ``x_couple``.

    With x_couple None the budget rows are dropped (the pump box still
    applies); with electricity_price set, pump power is priced directly,
    which is how the uncoordinated baseline values it.
    """
    u = Units(s)
    vars: dict[str, tuple] = {}
    blocks: list[ConstraintBlock] = []
    rows: list[LinearRow] = []
    lin_obj: dict[str, float] = {}
    slack_names: list[str] = []
    coupling: dict[str, str] = {}

    tanks = {tk.inlet: tk for tk in s.water.tanks}
    reservoirs = {r.id: r for r in s.water.reservoirs}

    for t in ix.slots:
        for j in s.water.junctions:
            vars[V.wh(t, j.id)] = (j.min_head_m, None)
        for r in s.water.reservoirs:
            vars[V.wh(t, r.id)] = (r.head_m, r.head_m)
        for tk in s.water.tanks:
            vars[V.wh(t, tk.inlet)] = (0.0, None)
            vars[V.wh(t, tk.outlet)] = (tk.min_head_m, None)
            rows.append(LinearRow(
                coeffs=((V.wh(t, tk.outlet), 1.0), (V.wh(t, tk.inlet), -1.0)),
                sense="<=", rhs=0.0, tag=f"w.tank_le[{t},{tk.outlet}]"))

        for e, p in enumerate(ix.water_pipes):
            qmax = p.q_max_m3s * L_PER_M3
            vars[V.wq(t, e)] = (0.0, qmax)
            if p.kind == "plain":
                blk = relax_darcy_weisbach(
                    V.wh(t, p.sender), V.wh(t, p.receiver), V.wq(t, e),
                    V.fhat(p.friction_s2m5), qmax, f"w.dw[{t},{e}]")
                blocks.append(blk)
                lin_obj[f"w.dw[{t},{e}].W"] = lin_obj.get(f"w.dw[{t},{e}].W", 0.0) + AUX_NUDGE
            elif p.kind == "valve":
                rows.append(LinearRow(
                    coeffs=((V.wh(t, p.receiver), 1.0), (V.wh(t, p.sender), -1.0)),
                    sense="<=", rhs=0.0, tag=f"w.valve[{t},{e}]"))
            else:  # pump
                vars[V.wdh(t, e)] = (0.0, None)
                rows.append(LinearRow(
                    coeffs=((V.wh(t, p.receiver), 1.0), (V.wh(t, p.sender), -1.0),
                            (V.wdh(t, e), -1.0)),
                    sense="==", rhs=0.0, tag=f"w.plift[{t},{e}]"))
                sq = f"w.pc[{t},{e}].sq"
                win = ConstraintBlock(tag=f"w.pc[{t},{e}]",
                                      aux={sq: (0.0, qmax * qmax)})
                win.soc.append(SocRow(u=Aff.of(sq), v=Aff(coeffs=(), const=1.0),
                                      ws=(Aff.of(V.wq(t, e)),),
                                      tag=f"w.pc[{t},{e}].sqr"))
                a_hat = p.pump_a / (L_PER_M3 * L_PER_M3)
                b_hat = p.pump_b / L_PER_M3
                win.linear.append(LinearRow(
                    coeffs=((V.wdh(t, e), 1.0), (sq, a_hat), (V.wq(t, e), -b_hat)),
                    sense="<=", rhs=p.pump_c, tag=f"w.pc[{t},{e}].win"))
                blocks.append(win)
                lin_obj[sq] = lin_obj.get(sq, 0.0) + AUX_NUDGE
                lin_obj[V.wdh(t, e)] = lin_obj.get(V.wdh(t, e), 0.0) + AUX_NUDGE
                # electric power = pump_coeff * head gain * flow
                prod = f"wpp[{t},{e}]"
                vars[prod] = (0.0, None)
                blocks.append(_soften(ccp_bilinear(
                    prod, V.wdh(t, e), V.wq(t, e),
                    ref.get(V.wdh(t, e)), ref.get(V.wq(t, e)),
                    f"w.pp[{t},{e}]"), slack_names))
                w = ix.pump_pipes.index(e)
                if x_couple is not None:
                    tagc = V.coupling_tag_water(t, w)
                    rows.append(LinearRow(
                        coeffs=((prod, u.pump_coeff(p.efficiency)),),
                        sense="<=", rhs=x_couple[V.xw(t, w)], tag=tagc))
                    coupling[tagc] = V.xw(t, w)
                if electricity_price is not None:
                    lam = float(electricity_price[t]) * W_PER_KW * u.dt_h
                    lin_obj[prod] = lin_obj.get(prod, 0.0) + lam * u.pump_coeff(p.efficiency)

        # continuity at junctions, storage recursion at tanks
        for j in s.water.junctions:
            coeffs = [(V.wq(t, e), 1.0) for e in ix.wpipes_in[j.id]]
            coeffs += [(V.wq(t, e), -1.0) for e in ix.wpipes_out[j.id]]
            rows.append(LinearRow(
                coeffs=tuple(coeffs), sense="==",
                rhs=float(j.demand_m3s[t]) * L_PER_M3,
                tag=f"w.cont[{t},{j.id}]"))
        for tk in s.water.tanks:
            gain = u.dt_s / (L_PER_M3 * tk.cross_section_m2)
            coeffs = [(V.wh(t, tk.outlet), 1.0)]
            coeffs += [(V.wq(t, e), -gain) for e in ix.wpipes_in[tk.inlet]]
            coeffs += [(V.wq(t, e), gain) for e in ix.wpipes_out[tk.outlet]]
            rhs = tk.initial_head_m
            if t > 0:
                coeffs.append((V.wh(t - 1, tk.outlet), -1.0))
                rhs = 0.0
            rows.append(LinearRow(coeffs=tuple(coeffs), sense="==", rhs=rhs,
                                  tag=f"w.tank[{t},{tk.outlet}]"))

        # water drawn from reservoirs is what the utility bills
        lam_w = float(s.prices.water_per_m3[t]) * u.dt_s / L_PER_M3
        for r in s.water.reservoirs:
            for e in ix.wpipes_out[r.id]:
                lin_obj[V.wq(t, e)] = lin_obj.get(V.wq(t, e), 0.0) + lam_w
            for e in ix.wpipes_in[r.id]:
                lin_obj[V.wq(t, e)] = lin_obj.get(V.wq(t, e), 0.0) - lam_w

    for sl in slack_names:
        lin_obj[sl] = lin_obj.get(sl, 0.0) + penalty
    prog = assemble(blocks, Objective(linear=lin_obj), vars, extra_linear=rows)
    return ProgramParts(program=prog, coupling=coupling, slack_names=slack_names)


def water_cost(s: Scenario, ix: ScenarioIndex, vals: dict[str, float]) -> float:
    """Billed water draw at the reservoirs, in dollars."""
    u = Units(s)
    total = 0.0
    for t in ix.slots:
        lam = float(s.prices.water_per_m3[t]) * u.dt_s / L_PER_M3
        for r in s.water.reservoirs:
            draw = sum(vals[V.wq(t, e)] for e in ix.wpipes_out[r.id])
            draw -= sum(vals[V.wq(t, e)] for e in ix.wpipes_in[r.id])
            total += lam * draw
    return total


# ---------------------------------------------------------------------------
# heat program
# ---------------------------------------------------------------------------

def build_ohf_c(s: Scenario, ix: ScenarioIndex, x_couple: dict[str, float] | None,
                ref: ReferencePoint, penalty: float = 1e4,
                electricity_price: np.ndarray | None = None) -> ProgramParts:
    """Heat subproblem around ``ref``.

    CHP electric output is committed exactly (equality rows) and circulation
    pump power is budgeted; with x_couple None those rows are dropped and,
    when a price is given, electricity is bought for pumping and sold from
    the generators at that price.
    """
    u = Units(s)
    vars: dict[str, tuple] = {}
    blocks: list[ConstraintBlock] = []
    rows: list[LinearRow] = []
    lin_obj: dict[str, float] = {}
    slack_names: list[str] = []
    coupling: dict[str, str] = {}
    amb = s.heat.ambient_c

    load_of = {l.node: l for l in s.heat.loads}
    for t in ix.slots:
        a_t = float(amb[t])
        for n in ix.heat_nodes:
            vars[V.hh("s", t, n)] = (0.0, None)
            vars[V.hh("r", t, n)] = (0.0, None)
            lin_obj[V.hh("s", t, n)] = HEAD_NUDGE
            lin_obj[V.hh("r", t, n)] = HEAD_NUDGE
            if n in ix.chp_pos:
                chp = ix.chps[ix.chp_pos[n]]
                vars[V.ht("s", t, n)] = (chp.supply_temp_min_c, chp.supply_temp_max_c)
                vars[V.ht("r", t, n)] = (None, None)
                vars[V.qrs(t, n)] = (0.0, chp.q_rs_max_m3s * L_PER_M3)
            elif n in load_of:
                l = load_of[n]
                vars[V.ht("s", t, n)] = (None, None)
                vars[V.ht("r", t, n)] = (l.return_temp_min_c, l.return_temp_max_c)
                q_cap = sum(ix.supply_pipes[e].q_max_m3s for e in ix.spipes_in[n])
                vars[V.qrs(t, n)] = (-q_cap * L_PER_M3, 0.0)
                if l.min_head_sep_m:
                    rows.append(LinearRow(
                        coeffs=((V.hh("r", t, n), 1.0), (V.hh("s", t, n), -1.0)),
                        sense="<=", rhs=-l.min_head_sep_m, tag=f"h.sep[{t},{n}]"))
            else:
                vars[V.ht("s", t, n)] = (None, None)
                vars[V.ht("r", t, n)] = (None, None)
                vars[V.qrs(t, n)] = (0.0, 0.0)
                rows.append(LinearRow(
                    coeffs=((V.ht("s", t, n), 1.0), (V.ht("r", t, n), -1.0)),
                    sense="==", rhs=0.0, tag=f"h.jt[{t},{n}]"))
                rows.append(LinearRow(
                    coeffs=((V.hh("s", t, n), 1.0), (V.hh("r", t, n), -1.0)),
                    sense="==", rhs=0.0, tag=f"h.jh[{t},{n}]"))

        # pipes: flow bounds, head loss, temperature decay
        for side, pipes, pin in (("s", ix.supply_pipes, ix.spipes_in),
                                 ("r", ix.return_pipes, ix.rpipes_in)):
            for e, p in enumerate(pipes):
                qmax = p.q_max_m3s * L_PER_M3
                vars[V.hq(side, t, e)] = (Q_MIN_L, qmax)
                blk = relax_darcy_weisbach(
                    V.hh(side, t, p.sender), V.hh(side, t, p.receiver),
                    V.hq(side, t, e), V.fhat(p.friction_s2m5), qmax,
                    f"h.dw{side}[{t},{e}]")
                blocks.append(blk)
                lin_obj[f"h.dw{side}[{t},{e}].W"] = AUX_NUDGE
                vars[V.hto(side, t, e)] = (None, None)
                blocks.append(_soften(ccp_exponential(
                    V.ht(side, t, p.sender), V.hto(side, t, e),
                    V.hq(side, t, e), V.hy(side, t, e), V.hz(side, t, e),
                    a_t, V.xihat(p.xi_m3s),
                    ref.get(V.ht(side, t, p.sender)), ref.get(V.hq(side, t, e)),
                    ref.get(V.hy(side, t, e)),
                    f"h.prop{side}[{t},{e}]", q_min=Q_MIN_L), slack_names))
            # mixing wherever a node receives flow
            for n in ix.heat_nodes:
                if pin[n]:
                    blocks.append(_soften(_mixing_block(
                        side, t, n, pin[n],
                        lambda e, side=side, t=t: V.hq(side, t, e),
                        lambda e, side=side, t=t: V.hto(side, t, e),
                        ref), slack_names))

        # continuity on both layers
        for n in ix.heat_nodes:
            coeffs = [(V.hq("s", t, e), 1.0) for e in ix.spipes_in[n]]
            coeffs += [(V.hq("s", t, e), -1.0) for e in ix.spipes_out[n]]
            coeffs.append((V.qrs(t, n), 1.0))
            rows.append(LinearRow(coeffs=tuple(coeffs), sense="==", rhs=0.0,
                                  tag=f"h.cons[{t},{n}]"))
            coeffs = [(V.hq("r", t, e), 1.0) for e in ix.rpipes_in[n]]
            coeffs += [(V.hq("r", t, e), -1.0) for e in ix.rpipes_out[n]]
            coeffs.append((V.qrs(t, n), -1.0))
            rows.append(LinearRow(coeffs=tuple(coeffs), sense="==", rhs=0.0,
                                  tag=f"h.conr[{t},{n}]"))

        # loads: demand = heat_coeff * (qrs*tr - qrs*ts), qrs <= 0
        for li, l in enumerate(s.heat.loads):
            n = l.node
            plr, pls = f"hlr[{t},{li}]", f"hls[{t},{li}]"
            vars[plr] = (None, None)
            vars[pls] = (None, None)
            blocks.append(_soften(ccp_bilinear(
                plr, V.qrs(t, n), V.ht("r", t, n),
                ref.get(V.qrs(t, n)), ref.get(V.ht("r", t, n)),
                f"h.lid[{t},{li}].r"), slack_names))
            blocks.append(_soften(ccp_bilinear(
                pls, V.qrs(t, n), V.ht("s", t, n),
                ref.get(V.qrs(t, n)), ref.get(V.ht("s", t, n)),
                f"h.lid[{t},{li}].s"), slack_names))
            rows.append(LinearRow(
                coeffs=((plr, u.heat_coeff), (pls, -u.heat_coeff)),
                sense="==", rhs=float(l.demand_w[t]) / W_PER_KW,
                tag=f"h.load[{t},{n}]"))

        # CHP units: hull weights, heating identity, circulation pump
        for c, chp in enumerate(ix.chps):
            n = chp.node
            K = len(chp.vertex_cost)
            for k in range(K):
                vars[V.alpha(t, c, k)] = (0.0, 1.0)
                lin_obj[V.alpha(t, c, k)] = float(chp.vertex_cost[k])
            rows.append(LinearRow(
                coeffs=tuple((V.alpha(t, c, k), 1.0) for k in range(K)),
                sense="==", rhs=1.0, tag=f"h.hull[{t},{c}]"))
            h_kw = chp.extreme_heat_w / W_PER_KW
            vars[V.hgen(t, c)] = (0.0, float(h_kw.max()))
            rows.append(LinearRow(
                coeffs=((V.hgen(t, c), 1.0),)
                + tuple((V.alpha(t, c, k), -float(h_kw[k])) for k in range(K)),
                sense="==", rhs=0.0, tag=f"h.hgen[{t},{c}]"))
            pcs, pcr = f"hcs[{t},{c}]", f"hcr[{t},{c}]"
            vars[pcs] = (None, None)
            vars[pcr] = (None, None)
            blocks.append(_soften(ccp_bilinear(
                pcs, V.qrs(t, n), V.ht("s", t, n),
                ref.get(V.qrs(t, n)), ref.get(V.ht("s", t, n)),
                f"h.cid[{t},{c}].s"), slack_names))
            blocks.append(_soften(ccp_bilinear(
                pcr, V.qrs(t, n), V.ht("r", t, n),
                ref.get(V.qrs(t, n)), ref.get(V.ht("r", t, n)),
                f"h.cid[{t},{c}].r"), slack_names))
            rows.append(LinearRow(
                coeffs=((V.hgen(t, c), 1.0), (pcs, -u.heat_coeff), (pcr, u.heat_coeff)),
                sense="==", rhs=0.0, tag=f"h.cid[{t},{c}]"))

            vars[V.hdh(t, c)] = (0.0, None)
            rows.append(LinearRow(
                coeffs=((V.hh("s", t, n), 1.0), (V.hh("r", t, n), -1.0),
                        (V.hdh(t, c), -1.0)),
                sense="==", rhs=0.0, tag=f"h.plift[{t},{c}]"))
            sq = f"h.pc[{t},{c}].sq"
            qmax = chp.q_rs_max_m3s * L_PER_M3
            win = ConstraintBlock(tag=f"h.pc[{t},{c}]", aux={sq: (0.0, qmax * qmax)})
            win.soc.append(SocRow(u=Aff.of(sq), v=Aff(coeffs=(), const=1.0),
                                  ws=(Aff.of(V.qrs(t, n)),),
                                  tag=f"h.pc[{t},{c}].sqr"))
            a_hat = chp.pump_a / (L_PER_M3 * L_PER_M3)
            b_hat = chp.pump_b / L_PER_M3
            win.linear.append(LinearRow(
                coeffs=((V.hdh(t, c), 1.0), (sq, a_hat), (V.qrs(t, n), -b_hat)),
                sense="<=", rhs=chp.pump_c, tag=f"h.pc[{t},{c}].win"))
            blocks.append(win)
            lin_obj[sq] = lin_obj.get(sq, 0.0) + AUX_NUDGE
            # unpriced runs leave the lift flat; settle it at its cheap end
            lin_obj[V.hdh(t, c)] = lin_obj.get(V.hdh(t, c), 0.0) + AUX_NUDGE
            ppp = f"hpp[{t},{c}]"
            vars[ppp] = (0.0, None)
            blocks.append(_soften(ccp_bilinear(
                ppp, V.hdh(t, c), V.qrs(t, n),
                ref.get(V.hdh(t, c)), ref.get(V.qrs(t, n)),
                f"h.pp[{t},{c}]"), slack_names))

            p_kw = chp.extreme_p_w / W_PER_KW
            q_kw = chp.extreme_q_w / W_PER_KW
            if x_couple is not None:
                tagp = V.coupling_tag_heat("p", t, c)
                rows.append(LinearRow(
                    coeffs=tuple((V.alpha(t, c, k), float(p_kw[k])) for k in range(K)),
                    sense="==", rhs=x_couple[V.xcp(t, c)], tag=tagp))
                coupling[tagp] = V.xcp(t, c)
                tagq = V.coupling_tag_heat("q", t, c)
                rows.append(LinearRow(
                    coeffs=tuple((V.alpha(t, c, k), float(q_kw[k])) for k in range(K)),
                    sense="==", rhs=x_couple[V.xcq(t, c)], tag=tagq))
                coupling[tagq] = V.xcq(t, c)
                tagm = V.coupling_tag_heat("pump", t, c)
                rows.append(LinearRow(
                    coeffs=((ppp, u.pump_coeff(chp.pump_efficiency)),),
                    sense="<=", rhs=x_couple[V.xcpump(t, c)], tag=tagm))
                coupling[tagm] = V.xcpump(t, c)
            if electricity_price is not None:
                lam = float(electricity_price[t]) * W_PER_KW * u.dt_h
                lin_obj[ppp] = (lin_obj.get(ppp, 0.0)
                                + lam * u.pump_coeff(chp.pump_efficiency))
                for k in range(K):
                    lin_obj[V.alpha(t, c, k)] -= lam * float(p_kw[k])

    for sl in slack_names:
        lin_obj[sl] = lin_obj.get(sl, 0.0) + penalty
    prog = assemble(blocks, Objective(linear=lin_obj), vars, extra_linear=rows)
    return ProgramParts(program=prog, coupling=coupling, slack_names=slack_names)


def heat_cost(s: Scenario, ix: ScenarioIndex, vals: dict[str, float]) -> float:
    """CHP operating cost over the horizon, in dollars."""
    total = 0.0
    for t in ix.slots:
        for c, chp in enumerate(ix.chps):
            for k in range(len(chp.vertex_cost)):
                total += float(chp.vertex_cost[k]) * vals[V.alpha(t, c, k)]
    return total


# ---------------------------------------------------------------------------
# power program
# ---------------------------------------------------------------------------

def build_opf_c(s: Scenario, ix: ScenarioIndex,
                bundle=None, pin: dict[str, float] | None = None) -> ProgramParts:
    """Power subproblem owning the coupling decisions.

    ``bundle`` prices the decisions with dual terms from the other two
    subproblems; ``pin`` fixes them instead (used for evaluation and for the
    final polish).  Both may be None for a stand-alone power solve.
    """
    u = Units(s)
    vars: dict[str, tuple] = {}
    blocks: list[ConstraintBlock] = []
    rows: list[LinearRow] = []
    lin_obj: dict[str, float] = {}
    quad_obj: dict[str, float] = {}
    const = 0.0

    caps = V.coupling_caps(s, ix, u)
    if pin is not None:
        caps = {k: (pin[k], pin[k]) for k in caps}

    # where each machine lives on the grid
    pump_node: dict[int, str] = {}
    for w, e in enumerate(ix.pump_pipes):
        pump_node[w] = s.coupling.pump_nodes[ix.water_pipes[e].key]
    chp_node = {c: s.coupling.chp_nodes[chp.node] for c, chp in enumerate(ix.chps)}
    chp_pump_node = {c: s.coupling.chp_pump_nodes[chp.node]
                     for c, chp in enumerate(ix.chps)}

    for t in ix.slots:
        lam_grid = float(s.prices.electricity_per_wh[t]) * s.power.s_base_va * u.dt_h
        lam_kw = float(s.prices.electricity_per_wh[t]) * W_PER_KW * u.dt_h
        for node in s.power.nodes:
            if node.id == s.power.slack_node:
                v0 = s.power.slack_voltage_sq_pu
                vars[V.vsq(t, node.id)] = (v0, v0)
            else:
                vars[V.vsq(t, node.id)] = (node.v_min_sq_pu, node.v_max_sq_pu)
        vars[V.imp_p(t)] = (None, None)
        vars[V.imp_q(t)] = (None, None)
        lin_obj[V.imp_p(t)] = lam_grid

        for e, ln in enumerate(ix.lines):
            vars[V.pl(t, e)] = (None, None)
            vars[V.ql(t, e)] = (None, None)
            vars[V.isq(t, e)] = (0.0, None)
            lin_obj[V.isq(t, e)] = CURRENT_NUDGE
            rows.append(LinearRow(
                coeffs=((V.vsq(t, ln.sender), 1.0), (V.vsq(t, ln.receiver), -1.0),
                        (V.pl(t, e), -2.0 * ln.r_pu), (V.ql(t, e), -2.0 * ln.x_pu),
                        (V.isq(t, e), ln.z_sq_pu)),
                sense="==", rhs=0.0, tag=f"p.volt[{t},{e}]"))
            blocks.append(relax_rank1(V.vsq(t, ln.sender), V.isq(t, e),
                                      V.pl(t, e), V.ql(t, e), f"p.rank1[{t},{e}]"))

        for d, der in enumerate(ix.ders):
            vars[V.derp(t, d)] = (float(der.p_min_w[t]) / W_PER_KW,
                                  float(der.p_max_w[t]) / W_PER_KW)
            vars[V.derq(t, d)] = (float(der.q_min_w[t]) / W_PER_KW,
                                  float(der.q_max_w[t]) / W_PER_KW)
            e_wh = W_PER_KW * u.dt_h
            lin_obj[V.derp(t, d)] = der.cost_per_wh * e_wh
            if der.cost_quad_per_wh2:
                quad_obj[V.derp(t, d)] = der.cost_quad_per_wh2 * e_wh * e_wh
            if der.s_max_w is not None:
                s_kw = der.s_max_w / W_PER_KW
                blk = ConstraintBlock(tag=f"p.scap[{t},{d}]")
                blk.soc.append(SocRow(
                    u=Aff(coeffs=(), const=s_kw), v=Aff(coeffs=(), const=s_kw),
                    ws=(Aff.of(V.derp(t, d)), Aff.of(V.derq(t, d))),
                    tag=f"p.scap[{t},{d}].c"))
                blocks.append(blk)

        for w in range(len(ix.pump_pipes)):
            vars[V.xw(t, w)] = caps[V.xw(t, w)]
        for c, chp in enumerate(ix.chps):
            vars[V.xcp(t, c)] = caps[V.xcp(t, c)]
            vars[V.xcq(t, c)] = caps[V.xcq(t, c)]
            vars[V.xcpump(t, c)] = caps[V.xcpump(t, c)]
            K = len(chp.vertex_cost)
            p_kw = chp.extreme_p_w / W_PER_KW
            q_kw = chp.extreme_q_w / W_PER_KW
            for k in range(K):
                vars[V.beta(t, c, k)] = (0.0, 1.0)
                lin_obj[V.beta(t, c, k)] = STABILIZER * float(chp.vertex_cost[k])
            rows.append(LinearRow(
                coeffs=tuple((V.beta(t, c, k), 1.0) for k in range(K)),
                sense="==", rhs=1.0, tag=f"p.hull[{t},{c}]"))
            rows.append(LinearRow(
                coeffs=((V.xcp(t, c), 1.0),)
                + tuple((V.beta(t, c, k), -float(p_kw[k])) for k in range(K)),
                sense="==", rhs=0.0, tag=f"p.hullp[{t},{c}]"))
            rows.append(LinearRow(
                coeffs=((V.xcq(t, c), 1.0),)
                + tuple((V.beta(t, c, k), -float(q_kw[k])) for k in range(K)),
                sense="==", rhs=0.0, tag=f"p.hullq[{t},{c}]"))

        # nodal branch-flow balance
        for node in s.power.nodes:
            n = node.id
            pc = [(V.pl(t, e), 1.0) for e in ix.lines_in[n]]
            pc += [(V.isq(t, e), -ix.lines[e].r_pu) for e in ix.lines_in[n]]
            pc += [(V.pl(t, e), -1.0) for e in ix.lines_out[n]]
            qc = [(V.ql(t, e), 1.0) for e in ix.lines_in[n]]
            qc += [(V.isq(t, e), -ix.lines[e].x_pu) for e in ix.lines_in[n]]
            qc += [(V.ql(t, e), -1.0) for e in ix.lines_out[n]]
            if n == s.power.slack_node:
                pc.append((V.imp_p(t), 1.0))
                qc.append((V.imp_q(t), 1.0))
            for d, der in enumerate(ix.ders):
                if der.node == n:
                    pc.append((V.derp(t, d), u.kw_to_pu))
                    qc.append((V.derq(t, d), u.kw_to_pu))
            for w in range(len(ix.pump_pipes)):
                if pump_node[w] == n:
                    pc.append((V.xw(t, w), -u.kw_to_pu))
            for c in range(len(ix.chps)):
                if chp_node[c] == n:
                    pc.append((V.xcp(t, c), u.kw_to_pu))
                    qc.append((V.xcq(t, c), u.kw_to_pu))
                if chp_pump_node[c] == n:
                    pc.append((V.xcpump(t, c), -u.kw_to_pu))
            rows.append(LinearRow(coeffs=tuple(pc), sense="==",
                                  rhs=float(node.p_load_pu[t]),
                                  tag=f"p.balp[{t},{n}]"))
            rows.append(LinearRow(coeffs=tuple(qc), sense="==",
                                  rhs=float(node.q_load_pu[t]),
                                  tag=f"p.balq[{t},{n}]"))

    if bundle is not None:
        for tag, mu in bundle.mu.items():
            x_name = bundle.d_map[tag]
            lin_obj[x_name] = lin_obj.get(x_name, 0.0) - mu
            const += mu * bundle.g_val[tag]

    prog = assemble(blocks, Objective(linear=lin_obj, quad=quad_obj, const=const),
                    vars, extra_linear=rows)
    return ProgramParts(program=prog)


def power_cost(s: Scenario, ix: ScenarioIndex, vals: dict[str, float]) -> float:
    """Grid energy cost plus dispatchable resource cost, in dollars."""
    u = Units(s)
    total = 0.0
    for t in ix.slots:
        lam = float(s.prices.electricity_per_wh[t])
        total += lam * s.power.s_base_va * u.dt_h * vals[V.imp_p(t)]
        for d, der in enumerate(ix.ders):
            e_wh = vals[V.derp(t, d)] * W_PER_KW * u.dt_h
            total += der.cost_per_wh * e_wh + der.cost_quad_per_wh2 * e_wh * e_wh
    return total
