"""Solver-agnostic conic problems and their certified solutions.

A ConicProblem is a set of variable blocks, each living in a cone (free
vector, nonnegative vector, or PSD matrix stored as its upper triangle),
plus sparse equality constraints A x = b and a linear objective c.  Every
relaxation in the package is assembled into this one standard form.

Three solve paths share the seam:

* "highs"   - scipy's HiGHS for pure LPs (free/nonneg blocks only),
* "conelp"  - cvxopt's cone LP solver for problems with an objective,
* "center"  - an in-house infeasible-start Newton method that finds the
              analytic center of the feasible region (maximizes the sum
              of log-barriers subject to A x = b).  Pure feasibility
              problems are solved this way by default: interior-point
              solvers run to an extreme point of the feasible set, while
              the central point is the natural representative the
              log-barrier regularization suggests.

Solutions are validated independently of the solver (validate_solution
recomputes residuals and cone violations from scratch).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

__all__ = [
    "Block",
    "ConicProblem",
    "ConicSolution",
    "ResidualReport",
    "solve_conic",
    "validate_solution",
    "export_problem",
    "import_problem",
    "vech_index",
    "vech_size",
]

CONES = ("free", "nonneg", "psd")


def vech_size(side):
    return side * (side + 1) // 2


def vech_index(side, r, c):
    """Row-major upper-triangle index of entry (r, c) of a side x side matrix."""
    if r > c:
        r, c = c, r
    return r * side - r * (r - 1) // 2 + (c - r)


def _triu_pairs(side):
    iu = np.triu_indices(side)
    return iu[0], iu[1]


def vech_to_full(v, side):
    M = np.zeros((side, side))
    r, c = _triu_pairs(side)
    M[r, c] = v
    M[c, r] = v
    return M


def full_to_vech(M):
    r, c = _triu_pairs(M.shape[0])
    return np.asarray(M)[r, c]


@dataclass(frozen=True)
class Block:
    name: str
    cone: str
    size: int  # side length for psd, vector length otherwise

    @property
    def nvar(self):
        return vech_size(self.size) if self.cone == "psd" else self.size


class ConicProblem:
    """Blocks + sparse equalities + linear objective.

    Rows are accumulated as triplets; the CSR matrix is built lazily.
    PSD entries are addressed by (r, c); the stored scalar is the matrix
    entry value itself (symmetry is implicit, no sqrt(2) scaling).
    """

    def __init__(self, name="problem"):
        self.name = name
        self.blocks = []
        self._block_pos = {}
        self._offsets = [0]
        self._rows = []        # per row: list of (global index, coef)
        self.row_names = []
        self.b = []
        self._c = {}           # global index -> coef
        self._A = None

    # -- construction -----------------------------------------------------
    def add_block(self, name, cone, size):
        if cone not in CONES:
            raise ValueError(f"unknown cone {cone!r}")
        if name in self._block_pos:
            raise ValueError(f"duplicate block name {name!r}")
        blk = Block(name, cone, int(size))
        self._block_pos[name] = len(self.blocks)
        self.blocks.append(blk)
        self._offsets.append(self._offsets[-1] + blk.nvar)
        return blk

    def block(self, name):
        return self.blocks[self._block_pos[name]]

    def block_offset(self, name):
        return self._offsets[self._block_pos[name]]

    @property
    def nvar(self):
        return self._offsets[-1]

    @property
    def nrow(self):
        return len(self.b)

    def var_index(self, block_name, *idx):
        """Global variable index: (i,) for vectors, (r, c) for psd blocks."""
        blk = self.block(block_name)
        off = self.block_offset(block_name)
        if blk.cone == "psd":
            r, c = idx
            return off + vech_index(blk.size, r, c)
        return off + idx[0]

    def add_row(self, entries, rhs, name=""):
        """entries: list of (block_name, index tuple, coef); coefficients on
        the same entry accumulate."""
        acc = {}
        for block_name, idx, coef in entries:
            g = self.var_index(block_name, *idx)
            acc[g] = acc.get(g, 0.0) + float(coef)
        self._rows.append(sorted(acc.items()))
        self.b.append(float(rhs))
        self.row_names.append(name or f"row{len(self.b) - 1}")
        self._A = None
        return len(self.b) - 1

    def set_objective(self, entries):
        """entries: list of (block_name, index tuple, coef); min c.x."""
        for block_name, idx, coef in entries:
            g = self.var_index(block_name, *idx)
            self._c[g] = self._c.get(g, 0.0) + float(coef)

    # -- matrix views ------------------------------------------------------
    def matrix(self):
        if self._A is None:
            rows, cols, vals = [], [], []
            for i, entries in enumerate(self._rows):
                for g, v in entries:
                    rows.append(i)
                    cols.append(g)
                    vals.append(v)
            self._A = sp.csr_matrix(
                (vals, (rows, cols)), shape=(len(self.b), self.nvar))
        return self._A

    @property
    def c(self):
        out = np.zeros(self.nvar)
        for g, v in self._c.items():
            out[g] = v
        return out

    def split(self, x):
        """Slice a flat solution vector into per-block values."""
        out = {}
        for blk, off in zip(self.blocks, self._offsets):
            chunk = x[off:off + blk.nvar]
            out[blk.name] = vech_to_full(chunk, blk.size) if blk.cone == "psd" \
                else np.array(chunk)
        return out


@dataclass
class ResidualReport:
    eq_residual: float
    psd_min_eig: dict
    nonneg_min: dict

    def max_cone_violation(self):
        worst = 0.0
        for v in self.psd_min_eig.values():
            worst = max(worst, -min(v, 0.0))
        for v in self.nonneg_min.values():
            worst = max(worst, -min(v, 0.0))
        return worst


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    objective: float
    block_values: dict
    report: ResidualReport
    solver: str
    iterations: int = 0
    message: str = ""

    def block(self, name):
        return self.block_values[name]


def validate_solution(problem, x):
    """Recompute residuals from scratch; never trust the solver's report."""
    A = problem.matrix()
    r = A @ x - np.asarray(problem.b)
    eq = float(np.max(np.abs(r))) if r.size else 0.0
    psd, nn = {}, {}
    vals = problem.split(x)
    for blk in problem.blocks:
        if blk.cone == "psd":
            psd[blk.name] = float(np.linalg.eigvalsh(vals[blk.name])[0])
        elif blk.cone == "nonneg":
            v = vals[blk.name]
            nn[blk.name] = float(v.min()) if v.size else 0.0
    return ResidualReport(eq_residual=eq, psd_min_eig=psd, nonneg_min=nn)


# ---------------------------------------------------------------------------
# row preprocessing

def _independent_rows(A, b, tol=1e-9):
    """Select a maximal independent row subset via pivoted Cholesky of AA'.

    Rows are scaled to unit norm first so that rank detection does not
    depend on how the program happened to be scaled (finite-difference
    rows carry 1/dx^2 coefficients next to unit normalization rows).
    Returns (keep indices, consistent flag).  Dropped rows are checked for
    consistency against the kept ones; an inconsistent dependent row means
    the equality system itself is infeasible.
    """
    m = A.shape[0]
    if m == 0:
        return np.array([], dtype=int), True
    b = np.asarray(b, dtype=float)
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    empty = norms <= 1e-300
    if np.any(empty) and np.max(np.abs(b[empty])) > 1e-12 * (1 + np.max(np.abs(b))):
        return np.flatnonzero(~empty), False
    d = np.where(empty, 0.0, 1.0 / np.maximum(norms, 1e-300))
    As = sp.diags(d) @ A
    bs = d * b
    Gram = (As @ As.T).toarray()
    Lf, piv, rank, _ = scipy.linalg.lapack.dpstrf(Gram, lower=1, tol=tol)
    keep = np.sort(piv[:rank] - 1)
    if rank == m:
        return keep, True
    # consistency of the dropped rows: appending b as an extra column
    # raises the row rank exactly when some vanishing row combination has
    # a nonvanishing right-hand side
    Gaug = Gram + np.outer(bs, bs)
    dn = np.sqrt(np.maximum(np.diag(Gaug), 1e-300))
    Gaug = Gaug / dn[:, None] / dn[None, :]
    _, _, rank_aug, _ = scipy.linalg.lapack.dpstrf(Gaug, lower=1, tol=tol)
    return keep, bool(rank_aug <= rank)


# ---------------------------------------------------------------------------
# analytic-center Newton solver

def _psd_hinv_sparse(S, side, entries):
    """H^{-1} action of the log-det barrier on a sparse vech direction.

    entries: (r, c, w) triples with r <= c.  The result is the vech of
    S U S with U the symmetrized matrix carrying w/(2 - delta_rc).
    """
    O = np.zeros((side, side))
    diag = np.zeros((side, side))
    for r, c, w in entries:
        if r == c:
            col = S[:, r] * w
            O += np.outer(col, S[:, r])
            diag += np.outer(col, S[:, r])
        else:
            O += np.outer(S[:, r] * (0.5 * w), S[:, c])
    X = O + O.T - diag
    return X


def _solve_center(problem, tol=1e-8, max_iter=200, verbose=False, x0=None,
                  gap_tol=None):
    """Analytic center of {A x = b} intersected with the cone product.

    Infeasible-start Newton on the equality-constrained barrier; the
    inverse Hessian of the log-det/log barriers acts in closed form,
    so each iteration costs one dense solve with the m x m Schur
    complement A H^{-1} A'.  A strictly interior x0 close to the
    equality set saves most of the infeasible phase.

    With an objective the same machinery continues as a barrier path:
    once centered, the weight on c grows geometrically and Newton
    re-centers min t c.x + barrier, until the duality-gap bound nu/t
    drops under gap_tol relative to the objective value.
    """
    for blk in problem.blocks:
        if blk.cone == "free":
            raise ValueError("the centering solver needs every block in a cone")
    A_full = problem.matrix()
    b_full = np.asarray(problem.b, dtype=float)
    keep, consistent = _independent_rows(A_full, b_full)
    if not consistent:
        x0 = _start_point(problem)
        return ConicSolution(
            status="infeasible", x=x0, objective=0.0,
            block_values=problem.split(x0),
            report=validate_solution(problem, x0), solver="center",
            message="dependent equality rows have inconsistent right-hand sides")
    A = A_full[keep].tocsr()
    b = b_full[keep]
    m = A.shape[0]
    if m == 0:
        x0 = _start_point(problem)
        return ConicSolution(status="feasible", x=x0,
                             objective=float(problem.c @ x0),
                             block_values=problem.split(x0),
                             report=validate_solution(problem, x0),
                             solver="center", message="no equality rows")

    offs = {blk.name: problem.block_offset(blk.name) for blk in problem.blocks}
    x = _start_point(problem)
    if x0 is not None and _strictly_interior(problem, np.asarray(x0, float),
                                             offs):
        x = np.array(x0, dtype=float)

    c = np.asarray(problem.c, dtype=float)
    has_obj = bool(np.any(c))
    nu = float(sum(blk.size for blk in problem.blocks
                   if blk.cone in ("psd", "nonneg")))
    if gap_tol is None:
        gap_tol = max(100.0 * tol, 1e-6)
    t_obj = 0.0
    path_done = False
    centered = None     # (x, t_obj) at the last centered path point
    since_stage = 0     # iterations since the path last made progress
    bump = 8.0          # weight increase per stage, halved on stalls

    # per-row sparse structure grouped by block
    row_entries = []  # per row: list of (block, [(r, c, w)] or [(i, w)])
    indptr, indices, data = A.indptr, A.indices, A.data
    blk_of = np.zeros(problem.nvar, dtype=int)
    for bi, blk in enumerate(problem.blocks):
        off = offs[blk.name]
        blk_of[off:off + blk.nvar] = bi
    tri = {blk.name: _triu_pairs(blk.size) for blk in problem.blocks
           if blk.cone == "psd"}
    for i in range(m):
        cols = indices[indptr[i]:indptr[i + 1]]
        vals = data[indptr[i]:indptr[i + 1]]
        per = {}
        for g, w in zip(cols, vals):
            bi = blk_of[g]
            per.setdefault(bi, []).append((g - problem._offsets[bi], w))
        lst = []
        for bi, items in per.items():
            blk = problem.blocks[bi]
            if blk.cone == "psd":
                r, cc = tri[blk.name]
                lst.append((bi, [(int(r[k]), int(cc[k]), w)
                                 for k, w in items]))
            else:
                lst.append((bi, items))
        row_entries.append(lst)

    status = "feasible"
    message = ""
    it = 0
    for it in range(1, max_iter + 1):
        resid = A @ x - b
        # factor blocks at the current strictly interior point
        S_blocks, ok = {}, True
        for bi, blk in enumerate(problem.blocks):
            off = offs[blk.name]
            seg = x[off:off + blk.nvar]
            if blk.cone == "psd":
                S_blocks[bi] = vech_to_full(seg, blk.size)
            else:
                S_blocks[bi] = seg
        # Schur complement W = A H^{-1} A' assembled column by column
        W = np.empty((m, m))
        z = np.zeros(problem.nvar)
        for i, lst in enumerate(row_entries):
            z[:] = 0.0
            for bi, items in lst:
                blk = problem.blocks[bi]
                off = offs[blk.name]
                if blk.cone == "psd":
                    X = _psd_hinv_sparse(S_blocks[bi], blk.size, items)
                    z[off:off + blk.nvar] = full_to_vech(X)
                else:
                    seg = S_blocks[bi]
                    for k, w in items:
                        z[off + k] = w * seg[k] ** 2
            W[:, i] = A @ z
        W = 0.5 * (W + W.T)
        hc = None
        if t_obj > 0.0:
            hc = np.zeros(problem.nvar)
            for bi, blk in enumerate(problem.blocks):
                off = offs[blk.name]
                seg = c[off:off + blk.nvar]
                if not np.any(seg):
                    continue
                if blk.cone == "psd":
                    r, cc = tri[blk.name]
                    U = np.zeros((blk.size, blk.size))
                    U[r, cc] = seg
                    U = 0.5 * (U + U.T)
                    S = S_blocks[bi]
                    hc[off:off + blk.nvar] = full_to_vech(S @ U @ S)
                else:
                    hc[off:off + blk.nvar] = seg * S_blocks[bi] ** 2
            rhs = 2.0 * (A @ x) - b - t_obj * (A @ hc)
        else:
            rhs = 2.0 * (A @ x) - b
        # the diagonal of W spans many orders of magnitude when the moment
        # body is thin; Jacobi scaling plus iterative refinement keeps the
        # equality residual near machine precision anyway
        dj = 1.0 / np.sqrt(np.maximum(np.diag(W), 1e-300))
        Wj = W * dj[:, None] * dj[None, :]
        try:
            cf = scipy.linalg.cho_factor(Wj + 1e-14 * np.eye(m))
            y = dj * scipy.linalg.cho_solve(cf, dj * rhs)
            for _ in range(3):
                y += dj * scipy.linalg.cho_solve(cf, dj * (rhs - W @ y))
        except np.linalg.LinAlgError:
            y = np.linalg.lstsq(W, rhs, rcond=None)[0]
        # step = x - t H^{-1} c - H^{-1} A' y  (H^{-1} grad-barrier = -x)
        Aty = A.T @ y
        step = np.array(x)
        if hc is not None:
            step -= t_obj * hc
        for bi, blk in enumerate(problem.blocks):
            off = offs[blk.name]
            seg = Aty[off:off + blk.nvar]
            if not np.any(seg):
                continue
            if blk.cone == "psd":
                r, cc = tri[blk.name]
                nz = np.nonzero(seg)[0]
                # dense input: S U S with U carrying seg/(2 - delta_rc)
                U = np.zeros((blk.size, blk.size))
                U[r[nz], cc[nz]] = seg[nz]
                U = 0.5 * (U + U.T)
                S = S_blocks[bi]
                step[off:off + blk.nvar] -= full_to_vech(S @ U @ S)
            else:
                step[off:off + blk.nvar] -= seg * S_blocks[bi] ** 2

        # damped step for self-concordant barriers
        lam2 = 0.0
        for bi, blk in enumerate(problem.blocks):
            off = offs[blk.name]
            d = step[off:off + blk.nvar]
            if blk.cone == "psd":
                D = vech_to_full(d, blk.size)
                Si = np.linalg.inv(S_blocks[bi])
                lam2 += np.sum((Si @ D) * (Si @ D).T)
            else:
                lam2 += float(np.sum((d / S_blocks[bi]) ** 2))
        lam = np.sqrt(max(lam2, 0.0))
        t_damp = 1.0 if lam <= 0.25 else 1.0 / (1.0 + lam)
        # largest step on a geometric grid that stays strictly interior
        t_fb, tt = 0.0, 1.0
        for _ in range(60):
            if _strictly_interior(problem, x + tt * step, offs):
                t_fb = tt
                break
            tt *= 0.7
        if t_fb == 0.0:
            resid_norm = np.max(np.abs(resid)) if resid.size else 0.0
            if resid_norm > tol * (1.0 + np.max(np.abs(b), initial=0.0)):
                status, message = "infeasible", \
                    "no interior step toward the equality constraints"
            break
        feas_scale = tol * (1.0 + np.max(np.abs(b), initial=0.0))
        resid_norm = float(np.max(np.abs(resid))) if m else 0.0
        # damped Newton keeps the iterate well centered while the equality
        # residual contracts by (1 - t); near the boundary longer steps make
        # the Hessian explode, so acceleration is only accepted while the
        # barrier stays sane: while still infeasible a bounded barrier
        # increase is allowed (the target may simply have smaller entries),
        # once feasible the step must achieve the guaranteed decrease
        def merit(pt):
            f = _barrier_value(problem, pt, offs)
            if t_obj > 0.0 and np.isfinite(f):
                f += t_obj * float(c @ pt)
            return f

        t = t_damp
        t_a = min(1.0, 0.9 * t_fb)
        if t_a > t and lam > 0.25:
            fa = merit(x + t_a * step)
            if resid_norm > feas_scale:
                fd = merit(x + t * step)
                if fa <= fd + 0.5 * abs(fd) + 10.0:
                    t = t_a
            else:
                f0 = merit(x)
                if fa <= f0 - 0.1 * t_a * lam2:
                    t = t_a
        while t > 1e-12 and not _strictly_interior(problem, x + t * step,
                                                   offs):
            t *= 0.5
        if t <= 1e-12:
            if resid_norm > feas_scale:
                status, message = "infeasible", \
                    "no interior step toward the equality constraints"
            break
        x = x + t * step
        resid_norm = float(np.max(np.abs(A @ x - b))) if m else 0.0
        if verbose:
            print(f"  center it {it}: resid {resid_norm:.2e} "
                  f"lam {lam:.2e} t {t:.2f} t_obj {t_obj:.2e}")
        if not has_obj:
            if resid_norm <= feas_scale and lam <= 1e-6:
                break
        elif t_obj == 0.0:
            # start the path as soon as the iterate is feasible; the pure
            # center may not even exist when the set is unbounded
            if resid_norm <= feas_scale:
                t_obj = nu / (1.0 + abs(float(c @ x)))
                since_stage = 0
        elif lam <= 0.3:
            # centered for the current weight: tighten or stop (the
            # equality residual sits at its linear-algebra floor by now,
            # so it no longer gates the path)
            scale_o = 1.0 + abs(float(c @ x))
            if nu / t_obj <= gap_tol * scale_o:
                message = f"barrier path gap {nu / t_obj:.2e}"
                path_done = True
                break
            centered = (np.array(x), t_obj)
            t_obj *= bump
            since_stage = 0
        else:
            # near the end of the path the Hessian conditioning shrinks
            # Newton's basin; an aggressive weight increase can land
            # outside it.  First retry from the last centered point with
            # gentler increases, and only once those stall too fall back
            # to that point and stop.
            since_stage += 1
            if since_stage > 40:
                if centered is not None and bump > 2.0:
                    x, t_back = centered
                    x = np.array(x)
                    bump = 2.0
                    t_obj = t_back * bump
                    since_stage = 0
                    continue
                if centered is not None:
                    x, t_back = centered
                    message = ("barrier path stalled; last centered gap "
                               f"{nu / t_back:.2e}")
                else:
                    message = "barrier path stalled before first centering"
                break
        if np.max(np.abs(x)) > 1e10:
            # unbounded feasible set: the center recedes; the iterate is
            # still a valid cone point, so stop and let validation decide
            message = "barrier center diverged (feasible set unbounded)"
            break
    else:
        status = "iteration-limit"

    report = validate_solution(problem, x)
    bscale = 1.0 + np.max(np.abs(b_full), initial=0.0)
    clean = (report.eq_residual <= tol * bscale
             and report.max_cone_violation() <= tol)
    if status in ("feasible", "iteration-limit"):
        if clean:
            status = "optimal" if path_done else "feasible"
        elif status != "iteration-limit":
            status = "inaccurate"
    return ConicSolution(status=status, x=x, objective=float(problem.c @ x),
                         block_values=problem.split(x), report=report,
                         solver="center", iterations=it, message=message)


def _start_point(problem):
    x = np.zeros(problem.nvar)
    for blk in problem.blocks:
        off = problem.block_offset(blk.name)
        if blk.cone == "psd":
            eye = full_to_vech(np.eye(blk.size))
            x[off:off + blk.nvar] = eye
        elif blk.cone == "nonneg":
            x[off:off + blk.size] = 1.0
    return x


def _barrier_value(problem, x, offs):
    total = 0.0
    for blk in problem.blocks:
        off = offs[blk.name]
        seg = x[off:off + blk.nvar]
        if blk.cone == "psd":
            try:
                L = np.linalg.cholesky(vech_to_full(seg, blk.size))
            except np.linalg.LinAlgError:
                return np.inf
            total -= 2.0 * float(np.sum(np.log(np.diag(L))))
        elif blk.cone == "nonneg":
            if seg.size:
                if seg.min() <= 0.0:
                    return np.inf
                total -= float(np.sum(np.log(seg)))
    return total


def _strictly_interior(problem, x, offs):
    for blk in problem.blocks:
        off = offs[blk.name]
        seg = x[off:off + blk.nvar]
        if blk.cone == "psd":
            try:
                np.linalg.cholesky(vech_to_full(seg, blk.size))
            except np.linalg.LinAlgError:
                return False
        elif blk.cone == "nonneg":
            if seg.size and seg.min() <= 0.0:
                return False
    return True


# ---------------------------------------------------------------------------
# cvxopt conelp backend

def _solve_conelp(problem, tol=1e-8, max_iter=200):
    from cvxopt import matrix, solvers, spmatrix

    A_full = problem.matrix()
    b_full = np.asarray(problem.b, dtype=float)
    keep, consistent = _independent_rows(A_full, b_full)
    if not consistent:
        x0 = _start_point(problem)
        return ConicSolution(
            status="infeasible", x=x0, objective=0.0,
            block_values=problem.split(x0),
            report=validate_solution(problem, x0), solver="conelp",
            message="dependent equality rows have inconsistent right-hand sides")
    A = A_full[keep].tocoo()
    b = b_full[keep]

    # cone rows: s = h - G x with s in (nonneg, psd...) and h = 0
    gi, gj, gv = [], [], []
    nl = 0
    row = 0
    for blk in problem.blocks:
        if blk.cone != "nonneg":
            continue
        off = problem.block_offset(blk.name)
        for k in range(blk.size):
            gi.append(row)
            gj.append(off + k)
            gv.append(-1.0)
            row += 1
            nl += 1
    sides = []
    for blk in problem.blocks:
        if blk.cone != "psd":
            continue
        off = problem.block_offset(blk.name)
        s = blk.size
        sides.append(s)
        for r in range(s):
            for c in range(r, s):
                g = off + vech_index(s, r, c)
                gi.append(row + c * s + r)
                gj.append(g)
                gv.append(-1.0)
                if r != c:
                    gi.append(row + r * s + c)
                    gj.append(g)
                    gv.append(-1.0)
        row += s * s
    G = spmatrix(gv, gi, gj, (row, problem.nvar))
    h = matrix(np.zeros(row))
    Acv = spmatrix(A.data.tolist(), A.row.tolist(), A.col.tolist(),
                   (A.shape[0], problem.nvar))
    opts = {"show_progress": False, "maxiters": int(max_iter),
            "abstol": tol, "reltol": tol, "feastol": tol}
    try:
        sol = solvers.conelp(matrix(problem.c), G, h, dims={
            "l": nl, "q": [], "s": sides}, A=Acv, b=matrix(b), options=opts)
    except (ValueError, ArithmeticError) as exc:
        x0 = _start_point(problem)
        return ConicSolution(
            status="inaccurate", x=x0, objective=0.0,
            block_values=problem.split(x0),
            report=validate_solution(problem, x0), solver="conelp",
            message=f"conelp failed: {exc}")

    stat_map = {
        "optimal": "optimal",
        "primal infeasible": "infeasible",
        "dual infeasible": "inaccurate",
        "unknown": "inaccurate",
    }
    status = stat_map.get(sol["status"], "inaccurate")
    if sol["x"] is None or status == "infeasible":
        x = _start_point(problem)
    else:
        x = np.array(sol["x"]).ravel()
    report = validate_solution(problem, x)
    if status == "optimal":
        if report.eq_residual > 10 * tol * (1.0 + np.max(np.abs(b), initial=0.0)) \
                or report.max_cone_violation() > 10 * tol:
            status = "inaccurate"
    return ConicSolution(status=status, x=x, objective=float(problem.c @ x),
                         block_values=problem.split(x), report=report,
                         solver="conelp", iterations=int(sol.get("iterations", 0)),
                         message=sol["status"])


# ---------------------------------------------------------------------------
# HiGHS backend for pure LPs

def _solve_highs(problem, tol=1e-8, max_iter=200):
    from scipy.optimize import linprog

    bounds = []
    for blk in problem.blocks:
        if blk.cone == "psd":
            raise ValueError("HiGHS path only handles free/nonneg blocks")
        lo = 0.0 if blk.cone == "nonneg" else None
        bounds.extend([(lo, None)] * blk.size)
    res = linprog(problem.c, A_eq=problem.matrix(),
                  b_eq=np.asarray(problem.b), bounds=bounds, method="highs")
    status = {0: "optimal", 1: "iteration-limit", 2: "infeasible",
              3: "inaccurate", 4: "inaccurate"}.get(res.status, "inaccurate")
    x = res.x if res.x is not None else np.zeros(problem.nvar)
    report = validate_solution(problem, x)
    return ConicSolution(status=status, x=x,
                         objective=float(problem.c @ x),
                         block_values=problem.split(x), report=report,
                         solver="highs", iterations=int(res.nit),
                         message=res.message or "")


def solve_conic(problem, tol=1e-8, max_iter=200, solver="auto", verbose=False,
                x0=None, gap_tol=None):
    """Solve a ConicProblem; statuses are never silently optimistic.

    solver="auto" picks HiGHS for pure LPs, the analytic-center Newton
    method for feasibility problems with PSD blocks, and cvxopt's conelp
    when an objective is present.  x0 warm-starts the centering solver
    only (it must be strictly interior to be used); gap_tol is the
    relative duality-gap target of its barrier path when an objective is
    set (default max(100 * tol, 1e-6)).
    """
    has_psd = any(blk.cone == "psd" for blk in problem.blocks)
    has_free = any(blk.cone == "free" for blk in problem.blocks)
    has_obj = bool(problem._c) and np.any(problem.c)
    if solver == "auto":
        if not has_psd:
            solver = "highs"
        elif has_obj or has_free:
            solver = "conelp"
        else:
            solver = "center"
    if solver == "highs":
        return _solve_highs(problem, tol=tol, max_iter=max_iter)
    if solver == "conelp":
        return _solve_conelp(problem, tol=tol, max_iter=max_iter)
    if solver == "center":
        return _solve_center(problem, tol=tol, max_iter=max_iter,
                             verbose=verbose, x0=x0, gap_tol=gap_tol)
    raise ValueError(f"unknown solver {solver!r}")


# ---------------------------------------------------------------------------
# interchange formats

def export_problem(problem, fmt, path):
    if fmt == "json":
        _export_json(problem, path)
    elif fmt == "sdpa":
        _export_sdpa(problem, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def import_problem(path):
    text = open(path).read()
    if str(path).endswith(".dat-s") or text.lstrip().startswith(('"', "*")) \
            or not text.lstrip().startswith("{"):
        return _import_sdpa(path)
    return _import_json(path)


def _export_json(problem, path):
    A = problem.matrix().tocoo()
    order = np.lexsort((A.col, A.row))
    doc = {
        "name": problem.name,
        "blocks": [{"name": blk.name, "cone": blk.cone, "size": blk.size}
                   for blk in problem.blocks],
        "rows": list(problem.row_names),
        "b": [float(v) for v in problem.b],
        "c": [float(v) for v in problem.c],
        "A": {
            "row": [int(A.row[k]) for k in order],
            "col": [int(A.col[k]) for k in order],
            "val": [float(A.data[k]) for k in order],
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _import_json(path):
    doc = json.load(open(path))
    p = ConicProblem(name=doc["name"])
    for blk in doc["blocks"]:
        p.add_block(blk["name"], blk["cone"], blk["size"])
    triplets = {}
    for r, cidx, v in zip(doc["A"]["row"], doc["A"]["col"], doc["A"]["val"]):
        triplets.setdefault(r, []).append((cidx, v))
    for i, name in enumerate(doc["rows"]):
        p._rows.append(sorted(triplets.get(i, [])))
        p.b.append(float(doc["b"][i]))
        p.row_names.append(name)
    for g, v in enumerate(doc["c"]):
        if v:
            p._c[g] = float(v)
    return p


def _export_sdpa(problem, path):
    """SDPA sparse (.dat-s): our form is the SDPA dual.

    Variable blocks become the blocks of Y; equality row i becomes
    tr(F_i Y) = b_i, so off-diagonal coefficients are halved in the file.
    The objective min c.x is written through F_0 = -C (same halving).
    Free blocks have no SDPA encoding and are rejected.
    """
    for blk in problem.blocks:
        if blk.cone == "free":
            raise ValueError(
                "SDPA export supports only psd/nonneg blocks; rewrite free "
                "variables as a difference of nonnegative blocks first")
    m = problem.nrow
    lines = [f'"{problem.name}"', f"{m} = mDIM",
             f"{len(problem.blocks)} = nBLOCK"]
    sizes = []
    for blk in problem.blocks:
        sizes.append(str(blk.size if blk.cone == "psd" else -blk.size))
    lines.append("(" + ", ".join(sizes) + ") = bLOCKsTRUCT")
    lines.append(" ".join(_fmt(v) for v in problem.b))

    def emit(matno, vec, out):
        # vec: flat coefficient vector over problem variables
        for bk, blk in enumerate(problem.blocks):
            off = problem.block_offset(blk.name)
            if blk.cone == "psd":
                s = blk.size
                for r in range(s):
                    for cc in range(r, s):
                        v = vec[off + vech_index(s, r, cc)]
                        if v:
                            half = v if r == cc else 0.5 * v
                            out.append(f"{matno} {bk + 1} {r + 1} {cc + 1} "
                                       f"{_fmt(half)}")
            else:
                for k in range(blk.size):
                    v = vec[off + k]
                    if v:
                        out.append(f"{matno} {bk + 1} {k + 1} {k + 1} {_fmt(v)}")

    emit(0, -problem.c, lines)
    A = problem.matrix()
    for i in range(m):
        emit(i + 1, A[i].toarray().ravel(), lines)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v):
    return repr(float(v))


def _import_sdpa(path):
    rows = []
    comment = "problem"
    for line in open(path):
        line = line.strip()
        if not line:
            continue
        if line.startswith(('"', "*")):
            comment = line.strip('"*" ')
            continue
        rows.append(line)
    m = int(rows[0].split()[0])
    nblock = int(rows[1].split()[0])
    struct = rows[2]
    for ch in "(){},=":
        struct = struct.replace(ch, " ")
    sizes = [int(t) for t in struct.split() if _is_int(t)][:nblock]
    bvals = [float(t) for t in rows[3].replace(",", " ").split()]
    p = ConicProblem(name=comment)
    for bk, s in enumerate(sizes):
        cone = "psd" if s > 0 else "nonneg"
        p.add_block(f"block{bk + 1}", cone, abs(s))
    triplets = {}
    cvec = np.zeros(p.nvar)
    for line in rows[4:]:
        matno, bk, i, j, val = line.split()
        matno, bk, i, j = int(matno), int(bk), int(i), int(j)
        val = float(val)
        blk = p.blocks[bk - 1]
        if blk.cone == "psd":
            g = p.var_index(blk.name, i - 1, j - 1)
            coef = val if i == j else 2.0 * val
        else:
            if i != j:
                raise ValueError("diagonal block with off-diagonal entry")
            g = p.var_index(blk.name, i - 1)
            coef = val
        if matno == 0:
            cvec[g] += -coef
        else:
            triplets.setdefault(matno - 1, []).append((g, coef))
    for i in range(m):
        acc = {}
        for g, v in triplets.get(i, []):
            acc[g] = acc.get(g, 0.0) + v
        p._rows.append(sorted(acc.items()))
        p.b.append(bvals[i])
        p.row_names.append(f"row{i}")
    for g, v in enumerate(cvec):
        if v:
            p._c[g] = float(v)
    return p


def _is_int(tok):
    try:
        int(tok)
        return True
    except ValueError:
        return False
