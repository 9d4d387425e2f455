"""Conic building blocks for the nonconvex constraint families.

Each builder turns one nonconvex law into a small block of linear, rotated
second-order-cone, and exponential-cone rows over named variables:

* squared-current identity v*l = P^2 + Q^2  ->  rotated SOC v*l >= P^2 + Q^2;
* friction drop h_i - h_j = F q^2  ->  linear drop in an auxiliary W with
  q^2 <= W and W^2 <= gamma*q squeezing W toward q^2;
* bilinear products z = x*y  ->  a reference-point pair of convex rows that
  are exact at the reference and tighten as the iterate approaches it;
* exponential temperature decay  ->  product substitutions plus a log cone.

Builders are pure: the same inputs give byte-identical blocks, and auxiliary
names are derived from the block tag.  Reference-dependent rows are marked
``softenable``; the scheduler adds penalty slacks there so subproblems stay
feasible away from the reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Aff:
    """Affine expression: sum(coeffs[v] * v) + const."""
    coeffs: tuple[tuple[str, float], ...]
    const: float = 0.0

    @staticmethod
    def of(*terms, const: float = 0.0) -> "Aff":
        """Aff.of(("x", 2.0), ("y", -1.0), const=3.0); bare names get weight 1."""
        out = []
        for t in terms:
            if isinstance(t, str):
                out.append((t, 1.0))
            else:
                name, w = t
                out.append((name, float(w)))
        return Aff(tuple(out), float(const))

    def variables(self) -> set[str]:
        return {n for n, _ in self.coeffs}


@dataclass(frozen=True)
class LinearRow:
    """coeffs . vars (sense) rhs, sense in {"==", "<="}."""
    coeffs: tuple[tuple[str, float], ...]
    sense: str
    rhs: float
    tag: str
    softenable: bool = False

    def variables(self) -> set[str]:
        return {n for n, _ in self.coeffs}


@dataclass(frozen=True)
class SocRow:
    """Rotated second-order cone: u * v >= sum(w^2), u >= 0, v >= 0."""
    u: Aff
    v: Aff
    ws: tuple[Aff, ...]
    tag: str
    softenable: bool = False

    def variables(self) -> set[str]:
        out = self.u.variables() | self.v.variables()
        for w in self.ws:
            out |= w.variables()
        return out


@dataclass(frozen=True)
class ExpRow:
    """Exponential-cone row: exp(arg) <= result."""
    arg: Aff
    result: Aff
    tag: str

    def variables(self) -> set[str]:
        return self.arg.variables() | self.result.variables()


@dataclass
class ConstraintBlock:
    tag: str
    linear: list[LinearRow] = field(default_factory=list)
    soc: list[SocRow] = field(default_factory=list)
    exp: list[ExpRow] = field(default_factory=list)
    # auxiliary variables introduced by this block: name -> (lo, hi), None = open
    aux: dict[str, tuple[float | None, float | None]] = field(default_factory=dict)

    def variables(self) -> set[str]:
        out: set[str] = set()
        for r in self.linear:
            out |= r.variables()
        for r in self.soc:
            out |= r.variables()
        for r in self.exp:
            out |= r.variables()
        return out

    def merge(self, other: "ConstraintBlock") -> "ConstraintBlock":
        self.linear.extend(other.linear)
        self.soc.extend(other.soc)
        self.exp.extend(other.exp)
        for name, bounds in other.aux.items():
            if name in self.aux:
                raise ValueError(f"duplicate auxiliary {name}")
            self.aux[name] = bounds
        return self


@dataclass
class ReferencePoint:
    """Snapshot of iterate values the concave linearizations are taken at."""
    values: dict[str, float]

    def __post_init__(self):
        for name, v in self.values.items():
            if not math.isfinite(v):
                raise ValueError(f"reference value {name} is not finite: {v}")

    def get(self, name: str, default: float | None = None) -> float:
        if name in self.values:
            return self.values[name]
        if default is None:
            raise KeyError(name)
        return default


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def relax_rank1(v_name: str, ell_name: str, p_name: str, q_name: str,
                tag: str) -> ConstraintBlock:
    """Relax v*l = P^2 + Q^2 to the rotated cone v*l >= P^2 + Q^2."""
    row = SocRow(u=Aff.of(v_name), v=Aff.of(ell_name),
                 ws=(Aff.of(p_name), Aff.of(q_name)), tag=f"{tag}.cone")
    return ConstraintBlock(tag=tag, soc=[row])


def relax_darcy_weisbach(hi_name: str, hj_name: str, q_name: str,
                         friction: float, q_max: float,
                         tag: str) -> ConstraintBlock:
    """Friction head drop h_i - h_j = F q^2 as a squeezed SOC pair.

    W stands in for q^2: the drop is linear in W, q^2 <= W widens downward,
    and W^2 <= gamma*q with gamma <= q_max*W_max squeezes W back toward q^2.
    Residual tightness is audited against the exact law after solving.
    """
    if friction <= 0:
        raise ValueError(f"{tag}: friction must be > 0, got {friction}")
    w_name, g_name = f"{tag}.W", f"{tag}.gamma"
    w_max = q_max * q_max
    block = ConstraintBlock(tag=tag, aux={
        w_name: (0.0, w_max),
        g_name: (0.0, q_max * w_max),
    })
    block.linear.append(LinearRow(
        coeffs=((hi_name, 1.0), (hj_name, -1.0), (w_name, -friction)),
        sense="==", rhs=0.0, tag=f"{tag}.drop"))
    block.soc.append(SocRow(u=Aff.of(w_name), v=Aff((), 1.0),
                            ws=(Aff.of(q_name),), tag=f"{tag}.sq"))
    block.soc.append(SocRow(u=Aff.of(g_name), v=Aff.of(q_name),
                            ws=(Aff.of(w_name),), tag=f"{tag}.squeeze"))
    return block


def _factor_scales(x_ref: float, y_ref: float) -> tuple[float, float]:
    # floor at 1 so sub-unit factors keep their natural magnitude
    return max(1.0, abs(x_ref)), max(1.0, abs(y_ref))


def ccp_bilinear(z_name: str, x_name: str, y_name: str,
                 x_ref: float, y_ref: float, tag: str) -> ConstraintBlock:
    """Reference-point convex pair pinning z to the product x*y.

    With lin = y_ref*x + x_ref*y - x_ref*y_ref (the tangent plane of the
    product at the reference) the pair enforces

        lower:  z - lin >= (gx*dx + gy*dy)^2 / 2
        upper:  lin - z >= (gx^2*dx^2 + gy^2*dy^2) / 2

    where dx, dy are the deviations from the reference and gx = sqrt(sy/sx),
    gy = sqrt(sx/sy) weight each deviation by the other factor's magnitude
    (sx, sy = reference magnitudes floored at 1).  Both rows are exact at
    the reference and written in deviation form, so their coefficients stay
    near the factor scale instead of its square; mixed-magnitude products
    (a flow times a temperature, say) would otherwise lose several digits
    to the solver's relative tolerance.

    Away from the reference the pair over-constrains by the linearization
    gap, so both rows are softenable; the scheduler attaches penalty slacks.
    """
    if not (math.isfinite(x_ref) and math.isfinite(y_ref)):
        raise ValueError(f"{tag}: reference must be finite, got ({x_ref}, {y_ref})")
    sx, sy = _factor_scales(x_ref, y_ref)
    gx = math.sqrt(sy / sx)
    gy = 1.0 / gx
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    cx, cy = gx * inv_sqrt2, gy * inv_sqrt2
    lower = SocRow(
        u=Aff.of((z_name, 1.0), (x_name, -y_ref), (y_name, -x_ref),
                 const=x_ref * y_ref),
        v=Aff((), 1.0),
        ws=(Aff.of((x_name, cx), (y_name, cy),
                   const=-(cx * x_ref + cy * y_ref)),),
        tag=f"{tag}.lower", softenable=True)
    upper = SocRow(
        u=Aff.of((z_name, -1.0), (x_name, y_ref), (y_name, x_ref),
                 const=-x_ref * y_ref),
        v=Aff((), 1.0),
        ws=(Aff.of((x_name, cx), const=-cx * x_ref),
            Aff.of((y_name, cy), const=-cy * y_ref)),
        tag=f"{tag}.upper", softenable=True)
    return ConstraintBlock(tag=tag, soc=[lower, upper])


def linearization_gap(x_ref: float, y_ref: float, x: float, y: float) -> float:
    """Tangent error of the product pair at (x, y) for reference (x_ref, y_ref).

    The squared-deviation term each row gives up relative to the true
    product, in the same per-factor weighting the rows use:
    (gx^2*dx^2 + gy^2*dy^2) / 2.  Zero exactly at the reference.
    """
    sx, sy = _factor_scales(x_ref, y_ref)
    dx, dy = x - x_ref, y - y_ref
    return 0.5 * (sy / sx * dx * dx + sx / sy * dy * dy)


Q_MIN_M3S = 1e-4   # flow floor used only to bound the decay auxiliary


def ccp_exponential(tau_in_name: str, tau_out_name: str, q_name: str,
                    y_name: str, z_name: str,
                    tau_ambient: float, xi: float,
                    tau_ref: float, q_ref: float, y_ref: float,
                    tag: str, native_log: bool = True,
                    n_tangents: int = 16,
                    q_min: float = Q_MIN_M3S) -> ConstraintBlock:
    """Blocks for tau_out = tau_ambient + (tau_in - tau_ambient) * exp(-xi/q).

    Substitutions: y = exp(z), z = -xi/q.  The products tau_in*y and q*z get
    reference-pair blocks; ln(y) >= z is kept convex (native exponential cone
    or a tangent fan), and the concave side ln(y) <= z is linearized at y_ref.
    q_min sets the flow floor that bounds the decay auxiliaries; callers
    working in scaled units pass a floor in the same units as q.
    """
    if not (0.0 < y_ref < 1.0):
        raise ValueError(f"{tag}: y_ref must lie in (0, 1), got {y_ref}")
    if q_ref <= 0:
        raise ValueError(f"{tag}: q_ref must be > 0, got {q_ref}")
    y_min = math.exp(-xi / q_min)
    z_min = -xi / q_min
    p1, p2 = f"{tag}.prod_ty", f"{tag}.prod_qz"
    block = ConstraintBlock(tag=tag, aux={
        y_name: (y_min, 1.0),
        z_name: (z_min, 0.0),
        p1: (None, None),
        p2: (None, None),
    })
    # tau_in * y = tau_out - tau_ambient + tau_ambient * y
    block.merge(ccp_bilinear(p1, tau_in_name, y_name, tau_ref, y_ref, f"{tag}.ty"))
    block.linear.append(LinearRow(
        coeffs=((p1, 1.0), (tau_out_name, -1.0), (y_name, -tau_ambient)),
        sense="==", rhs=-tau_ambient, tag=f"{tag}.subst_t"))
    # q * z = -xi
    z_ref = -xi / q_ref
    block.merge(ccp_bilinear(p2, q_name, z_name, q_ref, z_ref, f"{tag}.qz"))
    block.linear.append(LinearRow(
        coeffs=((p2, 1.0),), sense="==", rhs=-xi, tag=f"{tag}.subst_q"))
    # convex side: exp(z) <= y
    if native_log:
        block.exp.append(ExpRow(arg=Aff.of(z_name), result=Aff.of(y_name),
                                tag=f"{tag}.log"))
    else:
        # outer tangent fan on z <= ln(y), tangents at geometric y grid
        ratio = (1.0 / y_min) ** (1.0 / (n_tangents - 1))
        for k in range(n_tangents):
            yk = y_min * ratio ** k
            block.linear.append(LinearRow(
                coeffs=((z_name, 1.0), (y_name, -1.0 / yk)),
                sense="<=", rhs=math.log(yk) - 1.0, tag=f"{tag}.log{k}"))
    # concave side, linearized at y_ref: ln(y_ref) + (y - y_ref)/y_ref <= z
    block.linear.append(LinearRow(
        coeffs=((y_name, 1.0 / y_ref), (z_name, -1.0)),
        sense="<=", rhs=1.0 - math.log(y_ref),
        tag=f"{tag}.log_lin", softenable=True))
    return block


# ---------------------------------------------------------------------------
# numeric evaluation of blocks (tests and audits)
# ---------------------------------------------------------------------------

def eval_aff(a: Aff, vals: dict[str, float]) -> float:
    return a.const + sum(c * vals[n] for n, c in a.coeffs)


def row_violation(row, vals: dict[str, float]) -> float:
    """Constraint violation of one row at a point; 0 means satisfied."""
    if isinstance(row, LinearRow):
        lhs = sum(c * vals[n] for n, c in row.coeffs)
        if row.sense == "==":
            return abs(lhs - row.rhs)
        return max(0.0, lhs - row.rhs)
    if isinstance(row, SocRow):
        u = eval_aff(row.u, vals)
        v = eval_aff(row.v, vals)
        wsq = sum(eval_aff(w, vals) ** 2 for w in row.ws)
        return max(0.0, -u, -v, wsq - u * v)
    if isinstance(row, ExpRow):
        return max(0.0, math.exp(eval_aff(row.arg, vals)) - eval_aff(row.result, vals))
    raise TypeError(f"unknown row type {type(row).__name__}")


def block_violation(block: ConstraintBlock, vals: dict[str, float]) -> float:
    """Worst violation over all rows and auxiliary bounds at a point."""
    worst = 0.0
    for rows in (block.linear, block.soc, block.exp):
        for row in rows:
            worst = max(worst, row_violation(row, vals))
    for name, (lo, hi) in block.aux.items():
        if name in vals:
            if lo is not None:
                worst = max(worst, lo - vals[name])
            if hi is not None:
                worst = max(worst, vals[name] - hi)
    return worst
