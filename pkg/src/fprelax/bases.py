"""Single-variable basis families and their exact linear-algebraic maps.

Two families are supported: monomials x^(j-1) and the real trigonometric
span {1, cos(k*w0*x), sin(k*w0*x)}.  The module provides differentiation
and product maps on the term algebra, quadrature rules, and the moment
locator that rewrites a multi-dimensional term as a weighted combination
of moment-matrix entries (products of two cluster-basis functions).

A *factor* is a ("pow", e), ("cos", k) or ("sin", k) tuple acting on one
coordinate.  An IndexedTerm is a coefficient together with at most a few
factors on distinct coordinates; it is the canonical currency in which
differential operators applied to basis functions are expressed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisFamily",
    "IndexedTerm",
    "UnrepresentableTerm",
    "monomial_family",
    "trig_family",
    "basis_factor",
    "factor_basis_index",
    "eval_basis",
    "eval_factor",
    "derivative_map",
    "diff_factor",
    "product_factors",
    "product_map",
    "make_term",
    "collect_terms",
    "multiply_term_factor",
    "multiply_terms",
    "differentiate_term",
    "eval_term",
    "cluster_label_value",
    "moment_locator",
    "quadrature_rule",
]


class UnrepresentableTerm(ValueError):
    """A term cannot be located as moment-matrix entries.

    Carries the offending terms so assembly code can abort with the full
    list instead of reporting them one at a time.
    """

    def __init__(self, terms, message=""):
        self.terms = list(terms)
        detail = "; ".join(str(t) for t in self.terms)
        super().__init__(message or f"unrepresentable term(s): {detail}")


@dataclass(frozen=True)
class BasisFamily:
    """Descriptor of a single-variable basis on an interval.

    kind is "monomial" or "trigonometric".  For the trigonometric family
    n = 2*k_max + 1 and omega0 defaults to pi/(b-a), so the lowest harmonic
    has period twice the domain length.
    """

    kind: str
    n: int
    domain: tuple
    omega0: float = 0.0
    k_max: int = 0


def monomial_family(n, domain):
    if n < 1:
        raise ValueError("basis size must be at least 1")
    a, b = float(domain[0]), float(domain[1])
    return BasisFamily("monomial", int(n), (a, b))


def trig_family(k_max, domain, omega0=None):
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    a, b = float(domain[0]), float(domain[1])
    if omega0 is None:
        omega0 = math.pi / (b - a)
    return BasisFamily("trigonometric", 2 * int(k_max) + 1, (a, b),
                       float(omega0), int(k_max))


# ---------------------------------------------------------------------------
# factors

def _norm_factor(coef, factor):
    """Canonicalize a factor, folding signs/zeros into the coefficient.

    Returns (coef, factor) where factor is None for the constant function.
    """
    kind, k = factor
    if kind == "pow":
        return (coef, None) if k == 0 else (coef, factor)
    if kind == "cos":
        k = abs(k)
        return (coef, None) if k == 0 else (coef, ("cos", k))
    if kind == "sin":
        if k == 0:
            return 0.0, None
        if k < 0:
            return -coef, ("sin", -k)
        return coef, factor
    raise ValueError(f"unknown factor kind {kind!r}")


def eval_factor(factor, x, omega0=0.0):
    kind, k = factor
    if kind == "pow":
        return np.asarray(x) ** k
    w = k * omega0
    if kind == "cos":
        return np.cos(w * np.asarray(x))
    return np.sin(w * np.asarray(x))


def basis_factor(fam, j):
    """Factor of the j-th basis function (1-based)."""
    if not 1 <= j <= fam.n:
        raise IndexError(f"basis index {j} out of range 1..{fam.n}")
    if fam.kind == "monomial":
        return ("pow", j - 1)
    if j == 1:
        return ("cos", 0)
    return ("cos", j // 2) if j % 2 == 0 else ("sin", (j - 1) // 2)


def factor_basis_index(fam, factor):
    """Basis index of a factor, or None when it falls outside the family."""
    kind, k = factor
    if fam.kind == "monomial":
        if kind != "pow":
            return None
        return k + 1 if k <= fam.n - 1 else None
    if kind == "pow":
        return None
    if k == 0:
        return 1 if kind == "cos" else None
    if k > fam.k_max:
        return None
    return 2 * k if kind == "cos" else 2 * k + 1


def eval_basis(fam, j, x):
    return eval_factor(basis_factor(fam, j), x, fam.omega0)


# ---------------------------------------------------------------------------
# derivative and product maps

def diff_factor(factor, omega0=0.0):
    """d/dx of a factor as a list of (coef, factor) pairs (exact)."""
    kind, k = factor
    if kind == "pow":
        return [] if k == 0 else [(float(k), ("pow", k - 1))]
    if k == 0:
        return []
    if kind == "cos":
        return [(-k * omega0, ("sin", k))]
    return [(k * omega0, ("cos", k))]


def derivative_map(fam):
    """Exact derivative of every basis function in the extended term space.

    Returns a dict j -> list of (coef, factor).  Both families are closed:
    monomial degree drops by one, trig swaps cos and sin at the same
    harmonic with factor +-k*omega0.
    """
    return {j: diff_factor(basis_factor(fam, j), fam.omega0)
            for j in range(1, fam.n + 1)}


def product_factors(f1, f2):
    """Exact expansion of the pointwise product of two factors.

    Returns a list of (coef, factor) with factor None for constants.
    Monomials multiply to a single factor; trig products use the
    product-to-sum identities and give at most two terms.
    """
    k1, a = f1
    k2, b = f2
    if k1 == "pow" and k2 == "pow":
        return [_norm_factor(1.0, ("pow", a + b))]
    if k1 == "pow" or k2 == "pow":
        raise ValueError("cannot multiply monomial and trigonometric factors")
    if k1 == "cos" and k2 == "cos":
        raw = [(0.5, ("cos", a - b)), (0.5, ("cos", a + b))]
    elif k1 == "sin" and k2 == "sin":
        raw = [(0.5, ("cos", a - b)), (-0.5, ("cos", a + b))]
    elif k1 == "sin":  # sin(a)cos(b)
        raw = [(0.5, ("sin", a + b)), (0.5, ("sin", a - b))]
    else:  # cos(a)sin(b)
        raw = [(0.5, ("sin", a + b)), (-0.5, ("sin", a - b))]
    out = []
    for c, f in raw:
        c, f = _norm_factor(c, f)
        if c != 0.0:
            out.append((c, f))
    return out


def product_map(fam, j, k):
    """Expansion of phi_j * phi_k as (coef, factor) pairs.

    Constant factors come back as the family's own constant so callers can
    map every piece to a basis index.
    """
    const = ("pow", 0) if fam.kind == "monomial" else ("cos", 0)
    out = []
    for c, f in product_factors(basis_factor(fam, j), basis_factor(fam, k)):
        out.append((c, f if f is not None else const))
    return out


# ---------------------------------------------------------------------------
# indexed terms

@dataclass(frozen=True)
class IndexedTerm:
    """coef times a product of factors on distinct dimensions.

    factors is a tuple of (dim, factor) pairs sorted by dimension; the
    constant factor is never stored.
    """

    coef: float
    factors: tuple

    @property
    def dims(self):
        return tuple(d for d, _ in self.factors)

    def __str__(self):
        if not self.factors:
            return f"{self.coef:g}"
        bits = []
        for d, (kind, k) in self.factors:
            if kind == "pow":
                bits.append(f"x{d}^{k}")
            else:
                bits.append(f"{kind}({k}w*x{d})")
        return f"{self.coef:g}*" + "*".join(bits)


def make_term(coef, factors):
    """Build a canonical IndexedTerm from a dim -> factor mapping."""
    coef = float(coef)
    clean = {}
    for dim, f in factors.items():
        coef, f = _norm_factor(coef, f)
        if coef == 0.0:
            return IndexedTerm(0.0, ())
        if f is not None:
            clean[dim] = f
    return IndexedTerm(coef, tuple(sorted(clean.items())))


def collect_terms(terms, tol=0.0):
    """Merge like terms, dropping coefficients with |coef| <= tol."""
    acc = {}
    for t in terms:
        acc[t.factors] = acc.get(t.factors, 0.0) + t.coef
    return [IndexedTerm(c, f) for f, c in sorted(acc.items()) if abs(c) > tol]


def multiply_term_factor(term, dim, factor, coef=1.0):
    """term * (coef * factor acting on dim) -> list of IndexedTerm."""
    base = dict(term.factors)
    if dim not in base:
        new = dict(base)
        c2, f2 = _norm_factor(term.coef * coef, factor)
        if c2 == 0.0:
            return []
        if f2 is not None:
            new[dim] = f2
        return [IndexedTerm(c2, tuple(sorted(new.items())))]
    out = []
    for c, f in product_factors(base[dim], factor):
        new = dict(base)
        del new[dim]
        if f is not None:
            new[dim] = f
        out.append(IndexedTerm(term.coef * coef * c, tuple(sorted(new.items()))))
    return [t for t in out if t.coef != 0.0]


def multiply_terms(t1, t2):
    """Product of two IndexedTerms as a list of IndexedTerms."""
    out = [IndexedTerm(t1.coef * t2.coef, t1.factors)]
    for dim, f in t2.factors:
        nxt = []
        for t in out:
            nxt.extend(multiply_term_factor(t, dim, f))
        out = nxt
    return out


def differentiate_term(term, dim, omega0=0.0):
    """partial derivative of an IndexedTerm along one dimension."""
    base = dict(term.factors)
    if dim not in base:
        return []
    out = []
    for c, f in diff_factor(base[dim], omega0):
        new = dict(base)
        del new[dim]
        c2, f2 = _norm_factor(term.coef * c, f)
        if c2 == 0.0:
            continue
        if f2 is not None:
            new[dim] = f2
        out.append(IndexedTerm(c2, tuple(sorted(new.items()))))
    return out


def eval_term(fam, term, X):
    """Evaluate a term at points X of shape (..., d)."""
    X = np.asarray(X, dtype=float)
    val = np.full(X.shape[:-1], term.coef)
    for dim, f in term.factors:
        val = val * eval_factor(f, X[..., dim], fam.omega0)
    return val


def cluster_label_value(fam, label, X):
    """Evaluate a cluster-basis function (tuple of (dim, j)) at X (..., d)."""
    X = np.asarray(X, dtype=float)
    val = np.ones(X.shape[:-1])
    for dim, j in label:
        val = val * eval_basis(fam, j, X[..., dim])
    return val


# ---------------------------------------------------------------------------
# moment locator

def _split_factor(fam, factor):
    """Expansion of an out-of-range factor as products of in-range pairs.

    Returns a list of (weight, left factor, right factor) such that
    factor = sum of weight * left * right pointwise, or None when no split
    within the family's range exists.
    """
    kind, k = factor
    if fam.kind == "monomial":
        dmax = fam.n - 1
        if kind != "pow" or k > 2 * dmax:
            return None
        a = min(k, dmax)
        return [(1.0, ("pow", a), ("pow", k - a))]
    if kind == "pow" or k > 2 * fam.k_max:
        return None
    k1 = min(k, fam.k_max)
    k2 = k - k1
    if kind == "cos":
        return [(1.0, ("cos", k1), ("cos", k2)), (-1.0, ("sin", k1), ("sin", k2))]
    return [(1.0, ("sin", k1), ("cos", k2)), (1.0, ("cos", k1), ("sin", k2))]


def moment_locator(fam, term, K=1):
    """Write E[term] as a weighted sum of moment-matrix entries.

    Each entry is a pair of cluster-basis labels (row, col); a label is a
    tuple of (dim, basis index) pairs with at most K factors on distinct
    dimensions, () meaning the constant.  A single-dimension degree c is
    split canonically as (min(c, n-1), c - min(c, n-1)); out-of-range
    harmonics split at k_max via the product-to-sum identities.

    Raises UnrepresentableTerm when the term does not fit, listing it.
    """
    if term.coef == 0.0:
        return []
    whole = []   # (dim, basis index)
    split = []   # (dim, option list)
    for dim, f in term.factors:
        j = factor_basis_index(fam, f)
        if j is not None:
            whole.append((dim, j))
            continue
        opts = _split_factor(fam, f)
        if opts is None:
            raise UnrepresentableTerm([term])
        split.append((dim, opts))
    n_split = len(split)
    if n_split > K or len(whole) > 2 * (K - n_split):
        raise UnrepresentableTerm([term])

    # whole dimensions fill the row side first, then the column side
    cap = K - n_split
    row_base = list(whole[:cap])
    col_base = list(whole[cap:])

    entries = []
    for combo in itertools.product(*[opts for _, opts in split]):
        w = term.coef
        row = list(row_base)
        col = list(col_base)
        for (dim, _), (wt, fl, fr) in zip(split, combo):
            w *= wt
            jl, jr = factor_basis_index(fam, fl), factor_basis_index(fam, fr)
            row.append((dim, jl))
            if jr != 1:  # right side may collapse to the constant
                col.append((dim, jr))
        entries.append((tuple(sorted(row)), tuple(sorted(col)), w))
    return entries


# ---------------------------------------------------------------------------
# quadrature

def quadrature_rule(domain, periodic, order):
    """Nodes and weights on [a, b].

    Gauss-Legendre when non-periodic (exact for degree <= 2*order - 1);
    uniform rectangle/trapezoid nodes on the half-open interval when
    periodic (exact for harmonics below Nyquist).  Weights sum to b - a.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    a, b = float(domain[0]), float(domain[1])
    if periodic:
        dx = (b - a) / order
        nodes = a + dx * np.arange(order)
        weights = np.full(order, dx)
    else:
        t, w = np.polynomial.legendre.leggauss(order)
        nodes = 0.5 * (b - a) * t + 0.5 * (a + b)
        weights = 0.5 * (b - a) * w
    return nodes, weights
