"""Conic program container and solver adapter.

The program is assembled once from constraint blocks and is immutable
afterwards.  The adapter contract is deliberately small: linear rows, convex
diagonal quadratic objectives, rotated second-order cones, and (optionally,
behind a capability flag) exponential cones.  Duals are retrieved by row tag
with the convention L = f + mu' (g - b), mu >= 0 on <= rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

import clarabel

from .convexify import Aff, ConstraintBlock, ExpRow, LinearRow, SocRow


def supports_exponential_cone() -> bool:
    """The installed backend can represent exp(z) <= y natively."""
    return True


@dataclass
class Objective:
    """minimize sum(linear[v]*v) + sum(quad[v]*v^2) + const."""
    linear: dict[str, float] = field(default_factory=dict)
    quad: dict[str, float] = field(default_factory=dict)
    const: float = 0.0

    def __post_init__(self):
        for name, c in self.quad.items():
            if c < 0:
                raise ValueError(f"objective: negative quadratic weight on {name}")


class AssemblyError(Exception):
    pass


@dataclass
class ConicProgram:
    var_names: list[str]
    var_pos: dict[str, int]
    bounds: list[tuple[float | None, float | None]]
    eq_rows: list[tuple[tuple[tuple[str, float], ...], float, str]]
    ineq_rows: list[tuple[tuple[tuple[str, float], ...], float, str]]
    soc_rows: list[SocRow]
    exp_rows: list[ExpRow]
    objective: Objective

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def dump(self) -> str:
        """Sparse text form: one `section index name coefficient` triplet per line."""
        out = [f"vars {self.n_vars}"]
        for name, (lo, hi) in zip(self.var_names, self.bounds):
            out.append(f"bound {name} {lo} {hi}")
        for name, c in sorted(self.objective.linear.items()):
            out.append(f"obj.lin {name} {c!r}")
        for name, c in sorted(self.objective.quad.items()):
            out.append(f"obj.quad {name} {c!r}")
        for kind, rows in (("eq", self.eq_rows), ("ineq", self.ineq_rows)):
            for i, (coeffs, rhs, tag) in enumerate(rows):
                for name, c in coeffs:
                    out.append(f"{kind} {i} {name} {c!r}")
                out.append(f"{kind}.rhs {i} {rhs!r} {tag}")
        for i, row in enumerate(self.soc_rows):
            out.append(f"soc {i} {row.tag} ws={len(row.ws)}")
        for i, row in enumerate(self.exp_rows):
            out.append(f"exp {i} {row.tag}")
        return "\n".join(out) + "\n"


def assemble(blocks: list[ConstraintBlock],
             objective: Objective,
             variables: dict[str, tuple[float | None, float | None]],
             extra_linear: list[LinearRow] = (),
             ) -> ConicProgram:
    """Merge blocks over a declared variable registry into one program.

    ``variables`` declares the primary variables with their box bounds;
    blocks contribute auxiliaries.  A variable declared twice with different
    bounds, a duplicate row tag, or a row referencing an undeclared variable
    is an assembly error.
    """
    var_names: list[str] = []
    var_pos: dict[str, int] = {}
    bounds: list[tuple[float | None, float | None]] = []

    def declare(name: str, b: tuple[float | None, float | None]) -> None:
        if name in var_pos:
            if bounds[var_pos[name]] != b:
                raise AssemblyError(
                    f"variable {name}: conflicting bounds {bounds[var_pos[name]]} vs {b}")
            return
        var_pos[name] = len(var_names)
        var_names.append(name)
        bounds.append(b)

    for name in sorted(variables):
        declare(name, variables[name])
    for block in blocks:
        for name in sorted(block.aux):
            declare(name, block.aux[name])

    eq_rows, ineq_rows = [], []
    soc_rows: list[SocRow] = []
    exp_rows: list[ExpRow] = []
    seen_tags: set[str] = set()

    def note_tag(tag: str) -> None:
        if tag in seen_tags:
            raise AssemblyError(f"duplicate row tag {tag}")
        seen_tags.add(tag)

    def check_vars(names: set[str], tag: str) -> None:
        missing = names - var_pos.keys()
        if missing:
            raise AssemblyError(f"row {tag} references undeclared {sorted(missing)}")

    def add_linear(row: LinearRow) -> None:
        note_tag(row.tag)
        check_vars(row.variables(), row.tag)
        if row.sense == "==":
            eq_rows.append((row.coeffs, row.rhs, row.tag))
        elif row.sense == "<=":
            ineq_rows.append((row.coeffs, row.rhs, row.tag))
        else:
            raise AssemblyError(f"row {row.tag}: unknown sense {row.sense!r}")

    for block in blocks:
        for row in block.linear:
            add_linear(row)
        for row in block.soc:
            note_tag(row.tag)
            check_vars(row.variables(), row.tag)
            soc_rows.append(row)
        for row in block.exp:
            note_tag(row.tag)
            check_vars(row.variables(), row.tag)
            exp_rows.append(row)
    for row in extra_linear:
        add_linear(row)

    for name in objective.linear:
        if name not in var_pos:
            raise AssemblyError(f"objective references undeclared {name}")
    for name in objective.quad:
        if name not in var_pos:
            raise AssemblyError(f"objective references undeclared {name}")

    return ConicProgram(var_names=var_names, var_pos=var_pos, bounds=bounds,
                        eq_rows=eq_rows, ineq_rows=ineq_rows,
                        soc_rows=soc_rows, exp_rows=exp_rows, objective=objective)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

@dataclass
class SolveResult:
    status: str
    objective: float
    values: dict[str, float]
    duals: dict[str, float]
    iterations: int
    solve_time_s: float

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "almost_optimal")


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "almost_optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "max_iterations",
    "MaxTime": "max_time",
    "NumericalError": "numerical_error",
    "InsufficientProgress": "insufficient_progress",
}


def _aff_row(a: Aff, var_pos: dict[str, int], cols: list, vals: list, rows: list,
             r: int, sign: float) -> float:
    """Append -sign*coeffs of an affine member; return sign*const for b."""
    for name, c in a.coeffs:
        rows.append(r)
        cols.append(var_pos[name])
        vals.append(-sign * c)
    return sign * a.const


def solve(p: ConicProgram, tol: float = 1e-8, max_iter: int = 200000,
          verbose: bool = False) -> SolveResult:
    """Solve with the conic backend; never raises on infeasibility."""
    n = p.n_vars
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b: list[float] = []
    cones = []
    r = 0

    # equality rows: a.x == rhs  ->  s = rhs - a.x = 0
    for coeffs, rhs, _tag in p.eq_rows:
        for name, c in coeffs:
            rows.append(r)
            cols.append(p.var_pos[name])
            vals.append(c)
        b.append(rhs)
        r += 1
    if p.eq_rows:
        cones.append(clarabel.ZeroConeT(len(p.eq_rows)))

    # inequality rows + variable bounds: a.x <= rhs  ->  s = rhs - a.x >= 0
    ineq_tags: list[str] = []
    for coeffs, rhs, tag in p.ineq_rows:
        for name, c in coeffs:
            rows.append(r)
            cols.append(p.var_pos[name])
            vals.append(c)
        b.append(rhs)
        ineq_tags.append(tag)
        r += 1
    n_bounds = 0
    for name, (lo, hi) in zip(p.var_names, p.bounds):
        j = p.var_pos[name]
        if hi is not None:
            rows.append(r)
            cols.append(j)
            vals.append(1.0)
            b.append(hi)
            ineq_tags.append(f"bound.{name}.hi")
            r += 1
            n_bounds += 1
        if lo is not None:
            rows.append(r)
            cols.append(j)
            vals.append(-1.0)
            b.append(-lo)
            ineq_tags.append(f"bound.{name}.lo")
            r += 1
            n_bounds += 1
    n_ineq = len(p.ineq_rows) + n_bounds
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))

    # rotated SOC u*v >= sum w^2 as plain SOC (u+v, 2w..., u-v)
    for row in p.soc_rows:
        u, v, ws = row.u, row.v, row.ws
        members: list[Aff] = [
            Aff(u.coeffs + v.coeffs, u.const + v.const),
            *[Aff(tuple((nm, 2.0 * c) for nm, c in w.coeffs), 2.0 * w.const)
              for w in ws],
            Aff(u.coeffs + tuple((nm, -c) for nm, c in v.coeffs), u.const - v.const),
        ]
        for m in members:
            b.append(_aff_row(m, p.var_pos, cols, vals, rows, r, 1.0))
            r += 1
        cones.append(clarabel.SecondOrderConeT(len(members)))

    # exponential cone: (arg, 1, result) gives exp(arg) <= result
    for row in p.exp_rows:
        b.append(_aff_row(row.arg, p.var_pos, cols, vals, rows, r, 1.0))
        r += 1
        rows.append(r)  # middle member is the constant 1: zero row of A
        cols.append(0)
        vals.append(0.0)
        b.append(1.0)
        r += 1
        b.append(_aff_row(row.result, p.var_pos, cols, vals, rows, r, 1.0))
        r += 1
        cones.append(clarabel.ExponentialConeT())

    A = sparse.csc_matrix((vals, (rows, cols)), shape=(r, n))
    q = np.zeros(n)
    for name, c in p.objective.linear.items():
        q[p.var_pos[name]] += c
    pdiag = np.zeros(n)
    for name, c in p.objective.quad.items():
        pdiag[p.var_pos[name]] += 2.0 * c
    P = sparse.diags(pdiag, format="csc")

    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = max_iter
    solver = clarabel.DefaultSolver(P, q, A, np.asarray(b), cones, settings)
    sol = solver.solve()

    status = _STATUS_MAP.get(str(sol.status), "failed")
    values = {}
    x = np.asarray(sol.x)
    if x.shape[0] == n and np.all(np.isfinite(x)):
        values = {name: float(x[j]) for name, j in p.var_pos.items()}
    duals: dict[str, float] = {}
    z = np.asarray(sol.z)
    if z.shape[0] == r and np.all(np.isfinite(z)):
        for i, (_c, _rhs, tag) in enumerate(p.eq_rows):
            duals[tag] = float(z[i])
        base = len(p.eq_rows)
        for i, tag in enumerate(ineq_tags):
            duals[tag] = float(z[base + i])
    obj = float(sol.obj_val) + p.objective.const if values else math.nan
    return SolveResult(status=status, objective=obj, values=values, duals=duals,
                       iterations=int(sol.iterations),
                       solve_time_s=float(sol.solve_time))
