"""Confining potentials with pairwise structure.

A potential is a sum of one-body polynomial terms V_i(x_i) and two-body
polynomial couplings V_ij(x_i, x_j) stored for i < j only.  One-body terms
are kept as low-to-high polynomial coefficient vectors, two-body terms as
small coefficient matrices C with V_ij(u, v) = sum_ab C[a, b] u^a v^b.
That covers the double-well and Ginzburg-Landau models exactly and keeps
evaluation, gradients and serialization closed-form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import bases

__all__ = [
    "PairwisePotential",
    "ExpandedPotential",
    "make_double_well",
    "make_ginzburg_landau",
    "eval_potential",
    "grad_potential",
    "expand_potential",
    "potential_to_json",
    "potential_from_json",
]


@dataclass
class PairwisePotential:
    """d-dimensional potential: sum of one-body and pairwise terms.

    domain is the common per-dimension interval (all models here live on a
    box); two_body keys satisfy 0 <= i < j < d.  symmetry is one of
    "none", "full-symmetric", "cyclic".
    """

    d: int
    domain: tuple
    one_body: list
    two_body: dict
    symmetry: str = "none"
    periodic: bool = False
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if len(self.one_body) != self.d:
            raise ValueError("need one one-body term per dimension")
        for (i, j) in self.two_body:
            if not (0 <= i < j < self.d):
                raise ValueError(f"two-body key ({i},{j}) must satisfy i < j")


def make_double_well(d):
    """V(x) = (x_1^2 - 1)^2 + 12 * sum_{j>=2} x_j^2 on [-2, 2]^d."""
    if d < 1:
        raise ValueError("dimension must be positive")
    one = [np.array([1.0, 0.0, -2.0, 0.0, 1.0])]
    one += [np.array([0.0, 0.0, 12.0]) for _ in range(d - 1)]
    return PairwisePotential(d=d, domain=(-2.0, 2.0), one_body=one,
                             two_body={}, symmetry="none",
                             kind="double_well", params={})


def make_ginzburg_landau(d, lam, h=None):
    """Periodic discretized Ginzburg-Landau ring on [-1.6, 1.6]^d.

    V(U) = sum_i (lam/2) ((U_i - U_{i-1}) / h)^2 + (1/(4 lam)) (1 - U_i^2)^2
    with cyclic neighbors and lattice spacing h = 1/(d+1) by default.  Each
    bond appears once and each site carries one quartic term, so the energy
    is exactly invariant under cyclic shifts.
    """
    if d < 2:
        raise ValueError("the ring needs at least two sites")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if h is None:
        h = 1.0 / (d + 1)
    g = lam / h**2
    # quartic site term plus the quadratic collected from the two adjacent
    # bonds: (1/(4 lam))(1 - u^2)^2 + g u^2
    quart = np.array([1.0 / (4 * lam), 0.0, g - 1.0 / (2 * lam), 0.0,
                      1.0 / (4 * lam)])
    one = [quart.copy() for _ in range(d)]
    cross = np.zeros((2, 2))
    cross[1, 1] = -g
    two = {(i, i + 1): cross.copy() for i in range(d - 1)}
    two[(0, d - 1)] = cross.copy()
    return PairwisePotential(d=d, domain=(-1.6, 1.6), one_body=one,
                             two_body=two, symmetry="cyclic",
                             kind="ginzburg_landau",
                             params={"lam": float(lam), "h": float(h)})


def _two_body_value(C, u, v):
    pu = np.stack([np.asarray(u, dtype=float) ** a for a in range(C.shape[0])], axis=-1)
    pv = np.stack([np.asarray(v, dtype=float) ** b for b in range(C.shape[1])], axis=-1)
    return np.einsum("...a,ab,...b->...", pu, C, pv)


def eval_potential(p, x, strict=False):
    """Evaluate V at points x of shape (d,) or (..., d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.d:
        raise ValueError(f"expected last axis {p.d}, got {x.shape[-1]}")
    a, b = p.domain
    if strict and (np.any(x < a) or np.any(x > b)):
        raise ValueError("point outside the domain box")
    val = np.zeros(x.shape[:-1])
    for i, coeffs in enumerate(p.one_body):
        val = val + np.polynomial.polynomial.polyval(x[..., i], coeffs)
    for (i, j), C in p.two_body.items():
        val = val + _two_body_value(C, x[..., i], x[..., j])
    return val if val.shape else float(val)


def grad_potential(p, x):
    """Analytic gradient of V, shape matching x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i, coeffs in enumerate(p.one_body):
        dc = np.polynomial.polynomial.polyder(coeffs)
        g[..., i] += np.polynomial.polynomial.polyval(x[..., i], dc)
    for (i, j), C in p.two_body.items():
        du = C[1:, :] * np.arange(1, C.shape[0])[:, None]
        dv = C[:, 1:] * np.arange(1, C.shape[1])[None, :]
        g[..., i] += _two_body_value(du, x[..., i], x[..., j])
        g[..., j] += _two_body_value(dv, x[..., i], x[..., j])
    return g


# ---------------------------------------------------------------------------
# basis expansion

@dataclass
class ExpandedPotential:
    """Least-squares expansion of a PairwisePotential in a basis family.

    one_body[i] is a length-n coefficient vector, two_body[(i,j)] an n x n
    matrix; rel_error is the aggregate relative L2 error of the fit over
    the tensor quadrature nodes.
    """

    potential: PairwisePotential
    fam: bases.BasisFamily
    one_body: list
    two_body: dict
    rel_error: float
    # expansions of the force components, fitted directly so that e.g. a
    # bilinear coupling keeps its derivative a pure function of the
    # neighbor coordinate (differentiating the fitted potential instead
    # would smear it across both)
    grad_one_body: list = None
    grad_two_body: dict = None
    grad_rel_error: float = 0.0


def expand_potential(p, fam, n_quad=None):
    """Project each potential term onto span{phi_j} / span{phi_j x phi_k}.

    Uses tensor Gauss-Legendre nodes (trapezoid for periodic domains) with
    at least 4n points per dimension.  The recorded relative error is
    sqrt(sum of squared residuals / sum of squared values) accumulated
    over all terms.
    """
    a, b = fam.domain
    if (a, b) != tuple(p.domain):
        raise ValueError("family domain must match the potential domain")
    n = fam.n
    if n_quad is None:
        n_quad = max(4 * n, 48)
    x, w = bases.quadrature_rule((a, b), p.periodic, n_quad)
    Phi = np.column_stack([bases.eval_basis(fam, j, x) for j in range(1, n + 1)])
    sw = np.sqrt(w)
    Aw = sw[:, None] * Phi

    deg = 1
    for coeffs in p.one_body:
        deg = max(deg, len(coeffs) - 1)
    for C in p.two_body.values():
        deg = max(deg, C.shape[0] - 1, C.shape[1] - 1)

    # One fit per monomial power; every term below is then an exact linear
    # combination of these columns.  Fitting each power once (instead of
    # each assembled term) keeps structural zeros exact: a coupling like
    # u*v expands with no spurious u-dependence in its v-derivative, which
    # matters because such debris terms are unrepresentable downstream.
    # Weighted least squares goes through the design matrix; the
    # half-range trigonometric set is nearly dependent on its interval,
    # and normal equations would square that conditioning.
    P = np.zeros((n, deg + 1))
    powers = x[:, None] ** np.arange(deg + 1)
    exact = []
    for k in range(deg + 1):
        if k == 0:
            P[0, 0] = 1.0
            exact.append(k)
        elif fam.kind == "monomial" and k <= n - 1:
            P[k, k] = 1.0
            exact.append(k)
    fitted = [k for k in range(deg + 1) if k not in exact]
    if fitted:
        sol = np.linalg.lstsq(Aw, sw[:, None] * powers[:, fitted],
                              rcond=None)[0]
        for col, k in enumerate(fitted):
            c = sol[:, col]
            r = powers[:, k] - Phi @ c
            rel = np.sqrt(float(w @ r**2) / max(float(w @ powers[:, k]**2),
                                                1e-300))
            # coefficients far below the fit's own truncation error are
            # rounding debris that would otherwise masquerade as coupling
            thr = max(10.0 * rel, 1e-11) * np.max(np.abs(c))
            P[:, k] = np.where(np.abs(c) > thr, c, 0.0)

    def combo1(coeffs):
        c = P[:, :len(coeffs)] @ np.asarray(coeffs, dtype=float)
        v = np.polynomial.polynomial.polyval(x, coeffs)
        r = v - Phi @ c
        return c, float(w @ r**2), float(w @ v**2)

    def combo2(C):
        M = P[:, :C.shape[0]] @ C @ P[:, :C.shape[1]].T
        V = _two_body_value(C, x[:, None], x[None, :])
        R = V - Phi @ M @ Phi.T
        return M, float(w @ R**2 @ w), float(w @ V**2 @ w)

    err2 = norm2 = 0.0
    one_out = []
    for coeffs in p.one_body:
        c, e2, n2 = combo1(coeffs)
        err2, norm2 = err2 + e2, norm2 + n2
        one_out.append(c)
    two_out = {}
    for key, C in p.two_body.items():
        M, e2, n2 = combo2(C)
        err2, norm2 = err2 + e2, norm2 + n2
        two_out[key] = M
    if norm2 <= 0:
        raise ValueError("zero potential cannot be normalized")

    gerr2 = gnorm2 = 0.0
    gone = []
    for coeffs in p.one_body:
        dc = np.polynomial.polynomial.polyder(coeffs)
        c, e2, n2 = combo1(dc)
        gerr2, gnorm2 = gerr2 + e2, gnorm2 + n2
        gone.append(c)
    gtwo = {}
    for key, C in p.two_body.items():
        du = C[1:, :] * np.arange(1, C.shape[0])[:, None]
        dv = C[:, 1:] * np.arange(1, C.shape[1])[None, :]
        Di, e2i, n2i = combo2(du)
        Dj, e2j, n2j = combo2(dv)
        gerr2, gnorm2 = gerr2 + e2i + e2j, gnorm2 + n2i + n2j
        gtwo[key] = (Di, Dj)
    return ExpandedPotential(potential=p, fam=fam, one_body=one_out,
                             two_body=two_out,
                             rel_error=float(np.sqrt(err2 / norm2)),
                             grad_one_body=gone, grad_two_body=gtwo,
                             grad_rel_error=float(
                                 np.sqrt(gerr2 / gnorm2)) if gnorm2 else 0.0)


# ---------------------------------------------------------------------------
# serialization

def potential_to_json(p):
    doc = {
        "kind": p.kind,
        "d": p.d,
        "domain": list(p.domain),
        "symmetry": p.symmetry,
        "periodic": p.periodic,
        "params": p.params,
        "one_body": [list(map(float, c)) for c in p.one_body],
        "two_body": {f"{i},{j}": [list(map(float, row)) for row in C]
                     for (i, j), C in p.two_body.items()},
    }
    return json.dumps(doc, indent=1)


def potential_from_json(text):
    doc = json.loads(text)
    two = {}
    for key, rows in doc["two_body"].items():
        i, j = key.split(",")
        two[(int(i), int(j))] = np.array(rows, dtype=float)
    return PairwisePotential(
        d=int(doc["d"]),
        domain=tuple(doc["domain"]),
        one_body=[np.array(c, dtype=float) for c in doc["one_body"]],
        two_body=two,
        symmetry=doc["symmetry"],
        periodic=bool(doc["periodic"]),
        kind=doc["kind"],
        params=doc["params"],
    )
