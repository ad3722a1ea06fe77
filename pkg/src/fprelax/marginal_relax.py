"""Stationary marginal relaxation on a uniform grid.

The stationary Fokker-Planck equation is integrated over all but one
coordinate, which leaves a reduced equation per dimension that couples the
1-marginal to the pair marginals through the interaction force.  Finite
differences (central for diffusion, forward for transport by default) turn
each reduced equation into linear rows over discretized marginal tables.
Local consistency rows tie every pair table to its two 1-marginals, giving
a Sherali-Adams style linear program over nonnegative tables; an optional
PSD block on the stacked indicator second moments strengthens it.
"""

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import conic, potentials

__all__ = [
    "Grid", "uniform_grid", "MarginalSet", "MarginalProgram",
    "assemble_stationary_marginal_program", "solve_stationary_marginals",
    "marginal_consistency_residual", "marginals_from_reference",
    "marginal_vector", "row_group_residuals", "build_strengthening_block",
    "export_marginal_tables",
]


@dataclass(frozen=True)
class Grid:
    """Shared per-dimension uniform nodes with rectangle weights."""

    nodes: np.ndarray
    d: int
    periodic: bool = False

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 3:
            raise ValueError("need at least three 1-d nodes")
        dx = np.diff(x)
        if np.any(dx <= 0):
            raise ValueError("nodes must be strictly increasing")
        if not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
            raise ValueError("nodes must be uniformly spaced")
        object.__setattr__(self, "nodes", x)

    @property
    def n_g(self):
        return self.nodes.size

    @property
    def dx(self):
        return float(self.nodes[1] - self.nodes[0])

    @property
    def weight(self):
        """Rectangle-rule quadrature weight, uniform across nodes."""
        return self.dx


def uniform_grid(domain, n_g, d, periodic=False):
    a, b = float(domain[0]), float(domain[1])
    return Grid(nodes=np.linspace(a, b, int(n_g)), d=int(d),
                periodic=bool(periodic))


@dataclass
class MarginalSet:
    """Tables keyed by index tuple: (i,) vectors and (i,j) matrices."""

    grid: Grid
    tables: dict
    status: str = "external"
    solution: object = None

    def table(self, *index):
        return self.tables[tuple(sorted(index))]


@dataclass
class MarginalProgram:
    problem: conic.ConicProblem
    grid: Grid
    potential: potentials.PairwisePotential
    beta: float
    K: int
    psd: bool
    transport: str
    pairs: list
    meta: dict = field(default_factory=dict)


def _one_body_deriv(p, i, x):
    dc = np.polynomial.polynomial.polyder(p.one_body[i])
    return np.polynomial.polynomial.polyval(x, dc)


def _pair_deriv_tables(C, x):
    """(dV/du, dV/dv) of a coefficient matrix on the tensor grid x times x."""
    du = C[1:, :] * np.arange(1, C.shape[0])[:, None]
    dv = C[:, 1:] * np.arange(1, C.shape[1])[None, :]
    gu = np.polynomial.polynomial.polygrid2d(x, x, du) if du.size else \
        np.zeros((x.size, x.size))
    gv = np.polynomial.polynomial.polygrid2d(x, x, dv) if dv.size else \
        np.zeros((x.size, x.size))
    return gu, gv


def _rho1_name(i):
    return f"rho:{i}"


def _rho2_name(i, j):
    return f"rho:{i},{j}"


def _transport_entries(grid, i, m, force1, force2, name1=_rho1_name,
                       name2=_rho2_name):
    """Linear functional giving T_i at node index m.

    T_i(x_m) = rho_i[m] V_i'(x_m) + sum_j sum_b rho_ij[m,b] dV_ij/dx_i * w.
    Returns a list of ConicProblem entries; the name callables let the
    time-dependent assembly point the same stencil at per-step blocks.
    """
    w = grid.weight
    out = [(name1(i), (m,), force1[i][m])]
    n_g = grid.n_g
    for (a_, b_), (gu, gv) in force2.items():
        if i == a_:
            for b in range(n_g):
                c = gu[m, b] * w
                if c != 0.0:
                    out.append((name2(a_, b_), (m * n_g + b,), c))
        elif i == b_:
            for b in range(n_g):
                c = gv[b, m] * w
                if c != 0.0:
                    out.append((name2(a_, b_), (b * n_g + m,), c))
    return out


def assemble_stationary_marginal_program(p, grid, K=1, beta=1.0, psd=False,
                                         transport="forward"):
    """Build the stationary marginal LP (optionally PSD-strengthened).

    Variables are the 1-marginal tables and all pair tables; rows are the
    reduced FPE per dimension and node, pair-to-single consistency, and
    normalization.  Densities are assumed negligible outside the box, so
    non-periodic stencils use zero ghost nodes.
    """
    if K != 1:
        raise NotImplementedError("only K=1 (singles plus pair tables)")
    if transport not in ("forward", "backward", "central"):
        raise ValueError(f"unknown transport scheme {transport!r}")
    a, b = p.domain
    x = grid.nodes
    if x[0] < a - 1e-12 or x[-1] > b + 1e-12:
        raise ValueError("grid extends outside the potential domain")
    if grid.d != p.d:
        raise ValueError("grid dimension differs from the potential's")
    n_g, dx, w = grid.n_g, grid.dx, grid.weight

    prob = conic.ConicProblem(name="stationary-marginal")
    d = p.d
    pairs = list(itertools.combinations(range(d), 2))
    for i in range(d):
        prob.add_block(_rho1_name(i), "nonneg", n_g)
    for (i, j) in pairs:
        prob.add_block(_rho2_name(i, j), "nonneg", n_g * n_g)

    force1 = [_one_body_deriv(p, i, x) for i in range(d)]
    force2 = {key: _pair_deriv_tables(C, x) for key, C in p.two_body.items()}

    # Resolution heuristic: once the cell Peclet number beta*|V'|*dx gets
    # large the differenced transport term flips stencil signs and the
    # nonnegative polytope can be genuinely empty (tables may put exact
    # zeros where the flip happens, which buys some slack, so the usable
    # threshold sits near 2 rather than the naive 1).
    fmax = 0.0
    for i in range(d):
        fi = np.max(np.abs(force1[i]))
        for (a_, b_), (gu, gv) in force2.items():
            if i == a_:
                fi += np.max(np.abs(gu))
            elif i == b_:
                fi += np.max(np.abs(gv))
        fmax = max(fmax, float(fi))
    peclet = beta * fmax * dx
    if peclet >= 2.0:
        warnings.warn(
            f"cell Peclet number {peclet:.2f} >= 2: the grid likely cannot "
            "resolve the transport term and the program may be infeasible; "
            "refine the grid or lower beta", stacklevel=2)

    for i in range(d):
        prob.add_row([(_rho1_name(i), (m,), w) for m in range(n_g)],
                     1.0, name=f"norm:{i}")
    n_norm = d

    n_cons = 0
    for (i, j) in pairs:
        name = _rho2_name(i, j)
        for m in range(n_g):
            ent = [(name, (m * n_g + b,), w) for b in range(n_g)]
            ent.append((_rho1_name(i), (m,), -1.0))
            prob.add_row(ent, 0.0, name=f"cons:{i},{j}.{i}.{m}")
            n_cons += 1
        for m in range(n_g):
            ent = [(name, (b * n_g + m,), w) for b in range(n_g)]
            ent.append((_rho1_name(j), (m,), -1.0))
            prob.add_row(ent, 0.0, name=f"cons:{i},{j}.{j}.{m}")
            n_cons += 1

    def shift(m, s):
        t = m + s
        if grid.periodic:
            return t % n_g
        return t if 0 <= t < n_g else None

    # The reduced equation is imposed at interior nodes: it is second
    # order, so rows at the walls would overdetermine the tables (the
    # discrete operator has no exact null vector when closed with ghost
    # zeros on both sides) and normalization could never hold exactly.
    n_fpe = 0
    inv_b_dx2 = 1.0 / (beta * dx * dx)
    node_range = range(n_g) if grid.periodic else range(1, n_g - 1)
    for i in range(d):
        tr_cache = {}

        def transport_at(m):
            if m not in tr_cache:
                tr_cache[m] = _transport_entries(grid, i, m, force1, force2)
            return tr_cache[m]

        for m in node_range:
            ent = [(_rho1_name(i), (m,), 2.0 * inv_b_dx2)]
            for s in (-1, 1):
                t = shift(m, s)
                if t is not None:
                    ent.append((_rho1_name(i), (t,), -inv_b_dx2))
            if transport == "forward":
                stencil = [(1, -1.0 / dx), (0, 1.0 / dx)]
            elif transport == "backward":
                stencil = [(0, -1.0 / dx), (-1, 1.0 / dx)]
            else:
                stencil = [(1, -0.5 / dx), (-1, 0.5 / dx)]
            for s, coef in stencil:
                t = shift(m, s)
                if t is None:
                    continue
                ent.extend((blk, idx, coef * c)
                           for blk, idx, c in transport_at(t))
            prob.add_row(ent, 0.0, name=f"fpe:{i}.{m}")
            n_fpe += 1

    n_psd = 0
    if psd:
        side = d * n_g
        prob.add_block("G", "psd", side)
        for i in range(d):
            off = i * n_g
            for m in range(n_g):
                prob.add_row([("G", (off + m, off + m), 1.0),
                              (_rho1_name(i), (m,), -w)],
                             0.0, name=f"g.diag:{i}.{m}")
                n_psd += 1
            for m in range(n_g):
                for m2 in range(m + 1, n_g):
                    prob.add_row([("G", (off + m, off + m2), 1.0)],
                                 0.0, name=f"g.zero:{i}.{m},{m2}")
                    n_psd += 1
        w2 = w * w
        for (i, j) in pairs:
            oi, oj = i * n_g, j * n_g
            name = _rho2_name(i, j)
            for m in range(n_g):
                for b2 in range(n_g):
                    prob.add_row([("G", (oi + m, oj + b2), 1.0),
                                  (name, (m * n_g + b2,), -w2)],
                                 0.0, name=f"g.pair:{i},{j}.{m},{b2}")
                    n_psd += 1

    meta = {"n_g": n_g, "dx": dx, "norm_rows": n_norm, "cons_rows": n_cons,
            "fpe_rows": n_fpe, "psd_rows": n_psd, "nvar": prob.nvar}
    return MarginalProgram(problem=prob, grid=grid, potential=p,
                           beta=float(beta), K=K, psd=psd,
                           transport=transport, pairs=pairs, meta=meta)


def uniform_marginals(prog):
    """Uniform-density tables: normalized and consistent by construction."""
    grid = prog.grid
    lvl = 1.0 / (grid.n_g * grid.weight)
    tables = {(i,): np.full(grid.n_g, lvl) for i in range(prog.potential.d)}
    for (i, j) in prog.pairs:
        tables[(i, j)] = np.full((grid.n_g, grid.n_g), lvl * lvl)
    return MarginalSet(grid=grid, tables=tables, status="uniform")


def solve_stationary_marginals(prog, tol=1e-8, max_iter=200, solver="auto"):
    """Solve the assembled program and unpack the tables.

    With solver="auto" the pure LP goes to HiGHS, which settles
    feasibility decisively (near the Peclet limit the polytope can be
    genuinely empty, and interior-point centering then stalls instead of
    certifying that).  Programs with the PSD block use the analytic-center
    path, warm-started from the uniform tables, which already satisfy
    every row except the transport ones.
    """
    x0 = None
    if solver == "center" or (solver == "auto" and prog.psd):
        x0 = marginal_vector(prog, uniform_marginals(prog))
        if prog.psd:
            # the uniform G sits on the PSD boundary; nudge it inside
            off = prog.problem.block_offset("G")
            blk = prog.problem.block("G")
            side = blk.size
            eye = conic.full_to_vech(np.eye(side))
            x0[off:off + blk.nvar] += 1e-6 * eye
    sol = conic.solve_conic(prog.problem, tol=tol, max_iter=max_iter,
                            solver=solver, x0=x0)
    n_g = prog.grid.n_g
    tables = {}
    for i in range(prog.potential.d):
        tables[(i,)] = np.array(sol.block(_rho1_name(i)))
    for (i, j) in prog.pairs:
        tables[(i, j)] = np.array(sol.block(_rho2_name(i, j))).reshape(n_g,
                                                                       n_g)
    return MarginalSet(grid=prog.grid, tables=tables, status=sol.status,
                       solution=sol)


def marginal_consistency_residual(ms, grid):
    """Worst |sum_b rho_{I u j} w - rho_I| over pairs, sides, and nodes."""
    w = grid.weight
    worst = 0.0
    for key, tab in ms.tables.items():
        if len(key) != 2:
            continue
        i, j = key
        ri = ms.tables[(i,)]
        rj = ms.tables[(j,)]
        worst = max(worst, float(np.max(np.abs(tab.sum(axis=1) * w - ri))))
        worst = max(worst, float(np.max(np.abs(tab.sum(axis=0) * w - rj))))
    return worst


def marginals_from_reference(ref, grid, pairs=None):
    """Copy oracle marginal tables onto a matching grid.

    The reference must have been built on the same nodes; marginalizing
    one discrete density keeps the copied tables exactly consistent.
    """
    d = ref.d
    if pairs is None:
        pairs = list(itertools.combinations(range(d), 2))
    tables = {}
    for i in range(d):
        if ref.nodes[i].shape != grid.nodes.shape or \
                not np.allclose(ref.nodes[i], grid.nodes, atol=1e-12):
            raise ValueError("reference nodes differ from the grid")
        tables[(i,)] = np.array(ref.rho1[i], dtype=float)
    for (i, j) in pairs:
        tables[(i, j)] = np.array(ref.pair(i, j), dtype=float)
    return MarginalSet(grid=grid, tables=tables, status="reference")


def marginal_vector(prog, ms):
    """Flat variable vector for a MarginalSet (fills G when present)."""
    x = np.zeros(prog.problem.nvar)
    n_g = prog.grid.n_g
    for i in range(prog.potential.d):
        off = prog.problem.block_offset(_rho1_name(i))
        x[off:off + n_g] = ms.tables[(i,)]
    for (i, j) in prog.pairs:
        off = prog.problem.block_offset(_rho2_name(i, j))
        x[off:off + n_g * n_g] = ms.tables[(i, j)].ravel()
    if prog.psd:
        G = build_strengthening_block(ms, prog.grid)
        off = prog.problem.block_offset("G")
        blk = prog.problem.block("G")
        x[off:off + blk.nvar] = conic.full_to_vech(G)
    return x


def row_group_residuals(prog, ms):
    """Max |A x - b| per row-name prefix for oracle-feasibility checks."""
    x = marginal_vector(prog, ms)
    r = prog.problem.matrix() @ x - np.asarray(prog.problem.b)
    out = {}
    for name, val in zip(prog.problem.row_names, r):
        group = name.split(":", 1)[0]
        out[group] = max(out.get(group, 0.0), abs(float(val)))
    return out


def build_strengthening_block(ms, grid):
    """Indicator second-moment matrix of the tables (probability masses).

    G stacks one slot per (dimension, node); for a genuine joint density
    G is an expectation of outer products, hence PSD.  Diagonal blocks are
    diag of the 1-marginal masses because distinct nodes of one dimension
    are exclusive events.
    """
    w = grid.weight
    n_g = grid.n_g
    dims = sorted(i for (i,) in (k for k in ms.tables if len(k) == 1))
    side = len(dims) * n_g
    G = np.zeros((side, side))
    pos = {i: k * n_g for k, i in enumerate(dims)}
    for i in dims:
        o = pos[i]
        G[o:o + n_g, o:o + n_g] = np.diag(ms.tables[(i,)] * w)
    for key, tab in ms.tables.items():
        if len(key) != 2:
            continue
        i, j = key
        oi, oj = pos[i], pos[j]
        G[oi:oi + n_g, oj:oj + n_g] = tab * (w * w)
        G[oj:oj + n_g, oi:oi + n_g] = tab.T * (w * w)
    return G


def export_marginal_tables(ms, outdir, prefix="marginal", time_index=None,
                           fmt="csv"):
    """Write each table as CSV (coordinates + value) or JSON."""
    import json
    import os

    os.makedirs(outdir, exist_ok=True)
    x = ms.grid.nodes
    suffix = "" if time_index is None else f"_t{time_index}"
    written = []
    for key in sorted(ms.tables):
        tab = ms.tables[key]
        tag = "-".join(str(i) for i in key)
        path = os.path.join(outdir, f"{prefix}_rho_{tag}{suffix}.{fmt}")
        if fmt == "csv":
            with open(path, "w") as fh:
                if len(key) == 1:
                    fh.write(f"x{key[0]},value\n")
                    for m, v in enumerate(tab):
                        fh.write(f"{x[m]:.12g},{v:.12g}\n")
                else:
                    fh.write(f"x{key[0]},x{key[1]},value\n")
                    for m in range(tab.shape[0]):
                        for b in range(tab.shape[1]):
                            fh.write(f"{x[m]:.12g},{x[b]:.12g},"
                                     f"{tab[m, b]:.12g}\n")
        elif fmt == "json":
            doc = {"index": list(key), "nodes": [float(v) for v in x],
                   "time_index": time_index,
                   "values": np.asarray(tab).tolist()}
            with open(path, "w") as fh:
                json.dump(doc, fh)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written.append(path)
    return written
