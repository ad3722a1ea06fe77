"""Stationary cluster-moment relaxation.

The equilibrium density of the overdamped Langevin dynamics satisfies
<L* t, rho> = 0 for every smooth test function t, where
L* t = -(1/beta) Lap t + grad t . grad V.  Restricting t to the cluster
basis (products of at most K single-variable basis functions on distinct
coordinates) and expressing every resulting term as moment-matrix entries
turns stationarity into linear equality constraints on a PSD matrix of
cluster moments.

Assembly options beyond the bare constraint set, all of which tighten the
feasible body around the true moment vector:

* tie rows: entries of M that represent the same underlying moment are
  equated through their canonical locator decomposition;
* extended tests: single-dimension test functions beyond the basis range
  whose adjoint image still locates (monomial families only; for the
  trigonometric family the basis tests are already maximal);
* domain localizing blocks: PSD matrices of E[(r^2 - x_i^2) phi phi]
  encoding that the density lives on the domain box (monomial families;
  trigonometric moment bodies are bounded by construction).

Solving with the analytic-center method of the conic module returns the
central point of that body, which is the natural representative of the
log-barrier regularization.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import bases, conic

__all__ = [
    "ClusterBasisIndex",
    "MomentProgram",
    "enumerate_cluster_basis",
    "cluster_term",
    "apply_adjoint",
    "assemble_stationary_moment_program",
    "moment_matrix_of_density",
    "solve_stationary_moments",
    "moment_errors",
    "add_nuclear_norm_regularization",
]

_DROP = 1e-12


@dataclass
class ClusterBasisIndex:
    """Canonical ordering of cluster-basis functions.

    labels[0] = () is the constant; a label is a tuple of (dim, basis
    index) pairs with strictly increasing dims and basis indices in 2..n.
    The symmetric variant keeps a single representative dimension and
    reads entries as orbit averages.
    """

    d: int
    n: int
    K: int
    symmetric: bool
    labels: list
    pos: dict

    @property
    def N(self):
        return len(self.labels)

    def position(self, label):
        if self.symmetric and label:
            dims = {dim for dim, _ in label}
            if len(dims) > 1:
                raise KeyError(f"cross-dimension label {label} has no "
                               "position in the symmetric index")
            label = tuple(sorted((0, j) for _, j in label))
        return self.pos[label]


def enumerate_cluster_basis(d, n, K, symmetric=False):
    if K not in (1, 2):
        raise ValueError("cluster size K must be 1 or 2")
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    labels = [()]
    if symmetric:
        if K != 1:
            raise ValueError("symmetric reduction is implemented for K=1")
        labels += [((0, j),) for j in range(2, n + 1)]
    else:
        labels += [((i, j),) for i in range(d) for j in range(2, n + 1)]
        if K == 2:
            for i1, i2 in itertools.combinations(range(d), 2):
                labels += [((i1, j1), (i2, j2))
                           for j1 in range(2, n + 1)
                           for j2 in range(2, n + 1)]
    pos = {lab: k for k, lab in enumerate(labels)}
    return ClusterBasisIndex(d=d, n=n, K=K, symmetric=symmetric,
                             labels=labels, pos=pos)


def cluster_term(fam, label):
    """The cluster-basis function as an IndexedTerm with coefficient 1."""
    return bases.make_term(1.0, {dim: bases.basis_factor(fam, j)
                                 for dim, j in label})


def _zero_normal_derivative(fam, j):
    """Whether d(phi_j)/dx vanishes at both interval ends.

    On a box whose boundary carries mass, stationarity of <L* t, rho> only
    holds for tests with no boundary flux: t' = 0 at the walls.  With
    omega0 = pi/(b - a) this selects even-harmonic cosines and
    odd-harmonic sines.
    """
    kind, k = bases.basis_factor(fam, j)
    if kind == "pow":
        return k == 0
    if kind == "cos":
        return k % 2 == 0
    return k % 2 == 1


# ---------------------------------------------------------------------------
# adjoint operator on cluster functions

_COEF_DROP = 1e-9


def _grad_v_terms(ep, fam, i):
    """Expansion of dV/dx_i as IndexedTerms (the force fit, not the
    derivative of the potential fit).

    Coefficients below 1e-9 of the leading one are rounding debris of the
    least-squares fit, orders of magnitude below its truncation error, and
    are dropped before they can demand unrepresentable entries.
    """
    out = []
    g = ep.grad_one_body[i]
    scale = max(1.0, float(np.max(np.abs(g))))
    for j, cj in enumerate(g, start=1):
        if abs(cj) > _COEF_DROP * scale:
            out.append(bases.make_term(cj, {i: bases.basis_factor(fam, j)}))
    for key, (Di, Dj) in ep.grad_two_body.items():
        if i not in key:
            continue
        ii, jj = key
        D = Di if i == ii else Dj
        scale = max(1.0, float(np.max(np.abs(D))))
        for a in range(1, fam.n + 1):
            fa = bases.basis_factor(fam, a)
            for b in range(1, fam.n + 1):
                cab = D[a - 1, b - 1]
                if abs(cab) > _COEF_DROP * scale:
                    fb = bases.basis_factor(fam, b)
                    out.append(bases.make_term(cab, {ii: fa, jj: fb}))
    return out


def apply_adjoint(ep, fam, beta, term):
    """L* applied to an IndexedTerm: -(1/beta) Lap t + grad t . grad V."""
    out = []
    for dim in term.dims:
        for u in bases.differentiate_term(term, dim, fam.omega0):
            for v in bases.differentiate_term(u, dim, fam.omega0):
                out.append(bases.IndexedTerm(-v.coef / beta, v.factors))
            for g in _grad_v_terms(ep, fam, dim):
                out.extend(bases.multiply_terms(u, g))
    return bases.collect_terms(out)


# ---------------------------------------------------------------------------
# program assembly

@dataclass
class MomentProgram:
    problem: conic.ConicProblem
    index: ClusterBasisIndex
    fam: bases.BasisFamily
    beta: float
    meta: dict = field(default_factory=dict)


def _locate_accumulate(index, fam, terms, K, bad):
    """Locate a list of terms into {(r, c): coef}; offenders go to bad."""
    row = {}
    for t in terms:
        try:
            entries = bases.moment_locator(fam, t, K)
            for lr, lc, w in entries:
                r = index.position(lr)
                c = index.position(lc)
                if r > c:
                    r, c = c, r
                row[(r, c)] = row.get((r, c), 0.0) + w
        except (bases.UnrepresentableTerm, KeyError):
            bad.append(t)
    return row


def _add_normalized_row(problem, row, name, block="M", extra=()):
    vals = [abs(v) for v in row.values()]
    vals.extend(abs(v) for _, _, v in extra)
    if not vals:
        return None
    scale = max(vals)
    entries = [(block, rc, v) for rc, v in row.items()
               if abs(v) > _DROP * scale]
    entries.extend(e for e in extra if abs(e[2]) > _DROP * scale)
    if not entries:
        return None
    norm = float(np.sqrt(sum(v * v for _, _, v in entries)))
    entries = [(blk, rc, v / norm) for blk, rc, v in entries]
    return problem.add_row(entries, 0.0, name)


def _basis_derivative_at(fam, j, x):
    """d(phi_j)/dx evaluated at a point."""
    total = 0.0
    for c, f in bases.diff_factor(bases.basis_factor(fam, j), fam.omega0):
        total += c * (1.0 if f is None else bases.eval_factor(f, x,
                                                              fam.omega0))
    return total


def _tie_row_dicts(index, fam, K):
    """Entry-consistency tie rows for one moment matrix.

    Yields (suffix, {(r, c): coef}) pairs over the upper triangle of the
    matrix indexed by `index`.  Each product phi_r * phi_c is decomposed
    through the locator; products that leave the basis range on a single
    site keep their first occurrence as the implicit definition of that
    out-of-range moment and every later occurrence is tied back to it.
    The same rows apply to each step matrix of a time-dependent program,
    which is why this is split out from the stationary assembly.
    """
    canon = {}
    for rrow in range(index.N):
        for ccol in range(rrow, index.N):
            t1 = cluster_term(fam, index.labels[rrow])
            t2 = cluster_term(fam, index.labels[ccol])
            prods = bases.multiply_terms(t1, t2)
            row = {(rrow, ccol): 1.0}
            hard = []
            skip = False
            for t in prods:
                try:
                    for lr, lc, w in bases.moment_locator(fam, t, K):
                        r = index.position(lr)
                        c = index.position(lc)
                        if r > c:
                            r, c = c, r
                        row[(r, c)] = row.get((r, c), 0.0) - w
                except (bases.UnrepresentableTerm, KeyError):
                    if len(t.factors) == 1:
                        hard.append(t)
                    else:
                        skip = True
                        break
            if skip or len(hard) > 1:
                continue
            if hard:
                dim, factor = hard[0].factors[0]
                key = (dim,) + factor
                if key not in canon:
                    canon[key] = (row, hard[0].coef)
                    continue
                row0, c0 = canon[key]
                scale = hard[0].coef / c0
                for rc, v in row0.items():
                    row[rc] = row.get(rc, 0.0) - scale * v
            if max(abs(v) for v in row.values()) <= 1e-11:
                continue  # entry is its own canonical form
            yield f"{rrow},{ccol}", row


def assemble_stationary_moment_program(ep, fam, K=1, beta=1.0,
                                       symmetric=False, tie_rows=True,
                                       extended_tests="auto",
                                       domain_localizing="auto",
                                       boundary_tests="auto"):
    """Build the stationary moment relaxation as a ConicProblem.

    One equality row per non-constant cluster function (the stationarity
    of its adjoint image), the normalization M[0,0] = 1, the PSD cone on
    M, and the optional rows/blocks described in the module docstring.
    Unrepresentable terms abort with the complete list.

    boundary_tests: "all" keeps every cluster function as a stationarity
    test; "neumann" keeps only those whose normal derivative vanishes on
    the domain walls.  "flux" also keeps combinations of the remaining
    tests: for the equilibrium <L*t, rho> equals the boundary term
    (1/beta) * (t'(b) rho_i(b) - t'(a) rho_i(a)), so per site the tests
    with flux span a two-dimensional space of wall unknowns, and every
    left-null combination of their rows is exact again.  "auto" picks
    "flux" for the trigonometric family, where the box boundary typically
    carries mass, and "all" for monomials, which target densities that
    decay before the walls.
    """
    if ep.fam != fam:
        raise ValueError("expansion and family disagree")
    index = enumerate_cluster_basis(ep.potential.d, fam.n, K,
                                    symmetric=symmetric)
    problem = conic.ConicProblem("stationary-moment")
    problem.add_block("M", "psd", index.N)
    problem.add_row([("M", (0, 0), 1.0)], 1.0, "norm")

    if extended_tests == "auto":
        extended_tests = fam.kind == "monomial"
    if domain_localizing == "auto":
        domain_localizing = fam.kind == "monomial"
    if domain_localizing and fam.kind != "monomial":
        raise ValueError("domain localizing needs the monomial family; "
                         "trigonometric moment bodies are already bounded")
    if boundary_tests == "auto":
        boundary_tests = "flux" if fam.kind == "trigonometric" else "all"

    bad = []
    meta = {"stat_rows": 0, "ext_rows": 0, "tie_rows": 0, "loc_rows": 0,
            "empty_rows": []}

    # stationarity of every cluster function with admissible boundary flux
    dom_a, dom_b = fam.domain
    site_rows = {}
    for label in index.labels[1:]:
        neumann = all(_zero_normal_derivative(fam, j) for _, j in label)
        if not neumann:
            if boundary_tests == "neumann":
                continue
            if boundary_tests == "flux" and len(label) > 1:
                # a multi-site test's flux integral is a face moment, not
                # a wall scalar; only flux-free tests stay exact
                continue
        terms = apply_adjoint(ep, fam, beta, cluster_term(fam, label))
        row = _locate_accumulate(index, fam, terms, K, bad)
        if bad:
            raise bases.UnrepresentableTerm(
                bad, "stationarity rows contain unlocatable terms: "
                + "; ".join(str(t) for t in bad))
        if boundary_tests == "flux" and not neumann:
            (i, j), = label
            ta = _basis_derivative_at(fam, j, dom_a)
            tb = _basis_derivative_at(fam, j, dom_b)
            site_rows.setdefault(i, []).append((row, (-ta, tb)))
            continue
        name = "stat:" + ",".join(f"{i}.{j}" for i, j in label)
        if _add_normalized_row(problem, row, name) is None:
            meta["empty_rows"].append(name)
        else:
            meta["stat_rows"] += 1

    # combine the flux-carrying rows of each site so the two wall values
    # drop out: the left null space of the flux-coefficient matrix gives
    # the exact surviving combinations
    for i in sorted(site_rows):
        rows_i = site_rows[i]
        phi = np.array([fv for _, fv in rows_i])
        u, s, _ = np.linalg.svd(phi, full_matrices=True)
        rank = int(np.sum(s > 1e-12 * s[0])) if s.size else 0
        for kk in range(rank, len(rows_i)):
            combo = {}
            for ct, (row_t, _) in zip(u[:, kk], rows_i):
                if abs(ct) < 1e-14:
                    continue
                for rc, v in row_t.items():
                    combo[rc] = combo.get(rc, 0.0) + ct * v
            name = f"stat:{i}.flux{kk - rank}"
            if _add_normalized_row(problem, combo, name) is None:
                meta["empty_rows"].append(name)
            else:
                meta["stat_rows"] += 1

    # extended single-dimension tests (monomial): degrees n..2(n-1) while
    # the adjoint image still locates
    if extended_tests:
        dims = [0] if symmetric else range(index.d)
        for i in dims:
            for s in range(fam.n, 2 * (fam.n - 1) + 1):
                t = bases.make_term(1.0, {i: ("pow", s)})
                terms = apply_adjoint(ep, fam, beta, t)
                trial = []
                row = _locate_accumulate(index, fam, terms, K, trial)
                if trial:
                    break
                if _add_normalized_row(problem, row, f"ext:{i}.{s}"):
                    meta["ext_rows"] += 1

    # entry-consistency ties through the canonical locator; these recover
    # the Toeplitz (trig) and Hankel (monomial) structure within sites
    if tie_rows:
        for suffix, row in _tie_row_dicts(index, fam, K):
            if _add_normalized_row(problem, row,
                                   f"tie:{suffix}") is not None:
                meta["tie_rows"] += 1

    # domain localizing blocks per dimension
    if domain_localizing:
        a, b = fam.domain
        c0 = 0.5 * (a + b)
        hw2 = (0.5 * (b - a)) ** 2
        if abs(c0) > 1e-14:
            raise ValueError("localizing blocks assume a centered domain")
        side = fam.n - 1
        dims = [0] if symmetric else range(index.d)
        for i in dims:
            blk = f"loc{i}"
            problem.add_block(blk, "psd", side)
            for pdeg in range(side):
                for qdeg in range(pdeg, side):
                    row = {}
                    s = pdeg + qdeg
                    for w, deg in ((-hw2, s), (1.0, s + 2)):
                        t = bases.make_term(w, {i: ("pow", deg)})
                        for lr, lc, ww in bases.moment_locator(fam, t, K):
                            r = index.position(lr)
                            c = index.position(lc)
                            if r > c:
                                r, c = c, r
                            row[(r, c)] = row.get((r, c), 0.0) + ww
                    entries = [("M", rc, v) for rc, v in row.items()
                               if abs(v) > _DROP]
                    entries.append((blk, (pdeg, qdeg), 1.0))
                    norm = float(np.sqrt(sum(v * v for _, _, v in entries)))
                    problem.add_row([(bn, rc, v / norm)
                                     for bn, rc, v in entries], 0.0,
                                    f"loc{i}:{pdeg},{qdeg}")
                    meta["loc_rows"] += 1

    prog = MomentProgram(problem=problem, index=index, fam=fam, beta=beta,
                         meta=meta)
    return prog


# ---------------------------------------------------------------------------
# solving and evaluation

@dataclass
class MomentSolveResult:
    M: np.ndarray
    status: str
    solution: conic.ConicSolution
    blocks: dict


def solve_stationary_moments(prog, tol=1e-8, max_iter=300, solver="auto",
                             objective="auto", verbose=False):
    """Solve the assembled program; the returned M has M[0,0] = 1 exactly.

    objective picks the point returned from the feasible moment body.
    None asks for the analytic center, which works well when the body is
    small (monomial bases with decaying densities).  "localize" maximizes
    the total fundamental-harmonic mass sum_i E[cos(omega0 x_i)]: with
    mass on the box walls the center is badly delocalized, and this
    selects the concentrated solution branch instead.  "auto" maps to
    "localize" for the trigonometric family and None for monomials.

    Statuses other than feasible/optimal are passed through untouched so
    callers can decide; values are still returned for diagnosis.
    """
    if objective == "auto":
        objective = ("localize" if prog.fam.kind == "trigonometric"
                     else None)
    if objective == "localize":
        cols = [k for k, lab in enumerate(prog.index.labels)
                if len(lab) == 1
                and bases.basis_factor(prog.fam, lab[0][1]) == ("cos", 1)]
        if not cols:
            raise ValueError("no fundamental-harmonic entries to localize")
        if not prog.problem._c:
            prog.problem.set_objective([("M", (0, k), -1.0) for k in cols])
        if solver == "auto":
            solver = "center"
    elif objective is not None:
        raise ValueError(f"unknown objective {objective!r}")
    sol = conic.solve_conic(prog.problem, tol=tol, max_iter=max_iter,
                            solver=solver, verbose=verbose)
    M = np.array(sol.block("M"))
    if sol.status in ("optimal", "feasible") and M[0, 0] > 0:
        M = M / M[0, 0]
    return MomentSolveResult(M=M, status=sol.status, solution=sol,
                             blocks=sol.block_values)


def _entry_expectation(ref, fam, lr, lc):
    per_dim = {}
    for dim, j in tuple(lr) + tuple(lc):
        per_dim.setdefault(dim, []).append(j)
    dims = sorted(per_dim)
    if not dims:
        return 1.0

    def dim_values(i):
        v = np.ones_like(ref.nodes[i])
        for j in per_dim[i]:
            v = v * bases.eval_basis(fam, j, ref.nodes[i])
        return v

    if len(dims) == 1:
        return ref.expect1(dims[0], dim_values(dims[0]))
    if len(dims) == 2:
        i, j = dims
        return ref.expect2(i, j, np.outer(dim_values(i), dim_values(j)))
    if ref.method == "product-quadrature":
        out = 1.0
        for i in dims:
            out *= ref.expect1(i, dim_values(i))
        return out
    raise ValueError("oracle provides marginals for at most two "
                     "dimensions; need a product-form oracle here")


def moment_matrix_of_density(ref, index, fam):
    """Ground-truth moment matrix from oracle marginals by quadrature."""
    N = index.N
    M = np.empty((N, N))
    for r in range(N):
        for c in range(r, N):
            M[r, c] = M[c, r] = _entry_expectation(
                ref, fam, index.labels[r], index.labels[c])
    return M


def moment_errors(M_hat, M_true):
    """(E1, E2): first-moment-vector and full-matrix relative errors."""
    M_hat = np.asarray(M_hat)
    M_true = np.asarray(M_true)
    if M_hat.shape != M_true.shape:
        raise ValueError("index sets differ")
    v_true = M_true[:, 0]
    n1 = np.linalg.norm(v_true)
    n2 = np.linalg.norm(M_true)
    if n1 == 0 or n2 == 0:
        raise ValueError("zero-norm ground truth")
    e1 = float(np.linalg.norm(M_hat[:, 0] - v_true) / n1)
    e2 = float(np.linalg.norm(M_hat - M_true) / n2)
    return e1, e2


# ---------------------------------------------------------------------------
# nuclear-norm regularization

def add_nuclear_norm_regularization(prog, block_pairs, weight):
    """Add epigraph blocks for the nuclear norms of off-diagonal sub-blocks.

    Each (I, I') pair selects the rows with dims I and the columns with
    dims I'; the standard SDP epigraph [[W1, X], [X', W2]] >= 0 with
    objective weight * (tr W1 + tr W2) / 2 bounds ||X||_* from above.
    """
    seen = prog.meta.setdefault("nuclear_blocks", set())
    for bi, (I, Ip) in enumerate(block_pairs):
        I, Ip = tuple(I), tuple(Ip)
        key = (I, Ip) if I <= Ip else (Ip, I)
        if key in seen:
            raise ValueError(f"overlapping nuclear-norm block {key}")
        seen.add(key)
        rows = [k for k, lab in enumerate(prog.index.labels)
                if tuple(d for d, _ in lab) == I]
        cols = [k for k, lab in enumerate(prog.index.labels)
                if tuple(d for d, _ in lab) == Ip]
        if not rows or not cols:
            raise ValueError(f"no labels with dims {I} / {Ip}")
        nr, nc = len(rows), len(cols)
        blk = f"nuc{bi}"
        prog.problem.add_block(blk, "psd", nr + nc)
        for p, rpos in enumerate(rows):
            for q, cpos in enumerate(cols):
                r, c = (rpos, cpos) if rpos <= cpos else (cpos, rpos)
                prog.problem.add_row(
                    [(blk, (p, nr + q), 1.0), ("M", (r, c), -1.0)],
                    0.0, f"nuc{bi}:{p},{q}")
        if weight:
            prog.problem.set_objective(
                [(blk, (k, k), 0.5 * weight) for k in range(nr + nc)])
    return prog
