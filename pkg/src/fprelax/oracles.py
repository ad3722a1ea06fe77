"""Independent ground-truth generators.

Everything the relaxations are validated against lives here: separable
product equilibria via quadrature, exact transfer-matrix marginals for
cyclic nearest-neighbor chains, dense tensor-grid equilibria for d <= 3,
a reference finite-difference evolution for 1D time-dependent problems,
and a seeded Euler-Maruyama sampler as a stochastic cross-check.

None of this code shares logic with the relaxation assemblers; the point
is that agreement between the two is evidence, not tautology.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import bases, potentials

__all__ = [
    "ReferenceEquilibrium",
    "product_equilibrium",
    "transfer_matrix_equilibrium",
    "dense_equilibrium",
    "fd_evolve_reference",
    "langevin_sample",
]


@dataclass
class ReferenceEquilibrium:
    """Ground-truth marginals of an equilibrium density.

    nodes/weights/rho1 are per-dimension arrays; pair tables are computed
    lazily through _pair_fn and cached.  rho1 are density values, so
    sum(rho1 * weights) = 1.
    """

    method: str
    d: int
    nodes: dict
    weights: dict
    rho1: dict
    _pair_fn: object = None
    _pair_cache: dict = field(default_factory=dict)

    def pair(self, i, j):
        """Joint density table of (x_i, x_j), i < j, on the node grids."""
        if i >= j:
            raise ValueError("pair marginals are stored for i < j")
        key = (i, j)
        if key not in self._pair_cache:
            if self._pair_fn is None:
                raise KeyError(f"no pair marginal for {key}")
            self._pair_cache[key] = self._pair_fn(i, j)
        return self._pair_cache[key]

    def expect1(self, i, values):
        """Expectation of a function given by its values on nodes[i]."""
        return float(np.sum(self.weights[i] * values * self.rho1[i]))

    def expect2(self, i, j, table):
        """Expectation of a two-variable function tabulated on the grids."""
        w = np.outer(self.weights[i], self.weights[j])
        return float(np.sum(w * table * self.pair(i, j)))


def product_equilibrium(p, beta, n_quad=400):
    """Separable equilibrium: per-dimension density prop. to exp(-beta V_i).

    Gauss-Legendre quadrature keeps one-dimensional moments at machine
    precision; pair marginals are the product tables.
    """
    if p.two_body:
        raise ValueError("potential has two-body terms; equilibrium is "
                         "not a product")
    nodes, weights, rho1 = {}, {}, {}
    for i in range(p.d):
        x, w = bases.quadrature_rule(p.domain, p.periodic, n_quad)
        v = np.polynomial.polynomial.polyval(x, p.one_body[i])
        e = np.exp(-beta * (v - v.min()))
        z = float(w @ e)
        nodes[i], weights[i], rho1[i] = x, w, e / z

    ref = ReferenceEquilibrium(method="product-quadrature", d=p.d,
                               nodes=nodes, weights=weights, rho1=rho1)
    ref._pair_fn = lambda i, j: np.outer(ref.rho1[i], ref.rho1[j])
    return ref


def _ring_bonds(d):
    return [(i, i + 1) for i in range(d - 1)] + [(0, d - 1)]


def transfer_matrix_equilibrium(p, beta, m_nodes=400):
    """Exact marginals of a cyclic nearest-neighbor chain on a uniform grid.

    One-body terms are split half/half onto the two adjacent bonds, giving
    a kernel per bond; marginals come from matrix products around the
    ring.  Each kernel is rescaled by its maximum for overflow safety; the
    scales cancel because every expectation uses all d kernels exactly
    once.
    """
    d = p.d
    allowed = set(_ring_bonds(d))
    extra = set(p.two_body) - allowed
    if extra:
        raise ValueError(f"non-chain couplings present: {sorted(extra)}")
    a, b = p.domain
    x = np.linspace(a, b, m_nodes)
    dx = (b - a) / (m_nodes - 1)

    ones = [np.polynomial.polynomial.polyval(x, c) for c in p.one_body]
    kernels = []
    for s in range(d):
        t = (s + 1) % d
        key = (s, t) if s < t else (t, s)
        C = p.two_body.get(key)
        if C is None:
            V2 = np.zeros((m_nodes, m_nodes))
        elif s < t:
            V2 = potentials._two_body_value(C, x[:, None], x[None, :])
        else:
            # wrap bond stored with site 0 first; transpose into (u_s, u_t)
            V2 = potentials._two_body_value(C, x[:, None], x[None, :]).T
        E = 0.5 * ones[s][:, None] + V2 + 0.5 * ones[t][None, :]
        K = np.exp(-beta * (E - E.min()))
        kernels.append(K / K.max())

    full = kernels[0]
    for s in range(1, d):
        full = full @ kernels[s]
    z = np.trace(full)

    nodes = {i: x for i in range(d)}
    weights = {i: np.full(m_nodes, dx) for i in range(d)}
    rho1 = {}
    for i in range(d):
        M = kernels[i % d]
        for s in range(i + 1, i + d):
            M = M @ kernels[s % d]
        rho1[i] = np.diag(M) / (z * dx)

    def pair_fn(i, j):
        fwd = kernels[i]
        for s in range(i + 1, j):
            fwd = fwd @ kernels[s]
        back = kernels[j % d]
        for s in range(j + 1, i + d):
            back = back @ kernels[s % d]
        return fwd * back.T / (z * dx * dx)

    return ReferenceEquilibrium(method="transfer-matrix", d=d, nodes=nodes,
                                weights=weights, rho1=rho1, _pair_fn=pair_fn)


def dense_equilibrium(p, beta, nodes=None, weights=None, n_nodes=60,
                      gauss=False):
    """Normalized exp(-beta V) on a full tensor grid (d <= 3).

    nodes/weights may be supplied per dimension; by default a uniform grid
    of n_nodes points is used, or Gauss-Legendre nodes when gauss is set
    (useful when spectral accuracy of moments matters).
    """
    d = p.d
    if nodes is None:
        a, b = p.domain
        if gauss:
            x, w = bases.quadrature_rule(p.domain, False, n_nodes)
        else:
            x = np.linspace(a, b, n_nodes)
            w = np.full(n_nodes, (b - a) / (n_nodes - 1))
        nodes = {i: x for i in range(d)}
        weights = {i: w for i in range(d)}
    sizes = [len(nodes[i]) for i in range(d)]
    if int(np.prod(sizes)) > 10**7:
        raise MemoryError("tensor grid larger than 10^7 nodes")

    mesh = np.meshgrid(*[nodes[i] for i in range(d)], indexing="ij")
    X = np.stack(mesh, axis=-1)
    V = potentials.eval_potential(p, X)
    rho = np.exp(-beta * (V - V.min()))
    wtensor = np.ones(rho.shape)
    for i in range(d):
        shape = [1] * d
        shape[i] = sizes[i]
        wtensor = wtensor * weights[i].reshape(shape)
    z = float(np.sum(rho * wtensor))
    rho /= z

    rho1 = {}
    for i in range(d):
        axes = tuple(k for k in range(d) if k != i)
        other = wtensor / weights[i].reshape([sizes[i] if k == i else 1
                                              for k in range(d)])
        rho1[i] = np.sum(rho * other, axis=axes)

    def pair_fn(i, j):
        axes = tuple(k for k in range(d) if k not in (i, j))
        shape = [sizes[k] if k in (i, j) else 1 for k in range(d)]
        keepw = np.ones(rho.shape)
        for k in range(d):
            if k not in (i, j):
                s = [1] * d
                s[k] = sizes[k]
                keepw = keepw * weights[k].reshape(s)
        table = np.sum(rho * keepw, axis=axes)
        return table

    return ReferenceEquilibrium(method="dense-grid", d=d, nodes=dict(nodes),
                                weights=dict(weights), rho1=rho1,
                                _pair_fn=pair_fn)


# ---------------------------------------------------------------------------
# time-dependent 1D reference

def _fp_operator_1d(x, dx, beta, vprime, transport="forward"):
    """Discrete 1D Fokker-Planck generator in divergence form.

    L rho = (1/beta) rho_xx + (rho V')_x with central second differences
    and the stated transport differencing; zero ghost nodes outside.
    Returns a sparse matrix acting on density tables.
    """
    n = len(x)
    vp = vprime(x)
    D = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / dx**2 / beta
    F = sp.diags(vp)  # flux = rho * V'
    if transport == "forward":
        # (Phi_{i+1} - Phi_i) / dx with zero ghost beyond the last node
        T = (sp.diags([1.0], [1], shape=(n, n)) - sp.eye(n)) / dx
    elif transport == "backward":
        T = (sp.eye(n) - sp.diags([1.0], [-1], shape=(n, n))) / dx
    else:  # central
        T = (sp.diags([1.0], [1], shape=(n, n))
             - sp.diags([1.0], [-1], shape=(n, n))) / (2 * dx)
    return (D + T @ F).tocsr()


def fd_evolve_reference(vprime_coeffs, beta, nodes, m, dtau, init,
                        absorbing_index=None, mode="same-stencil",
                        refine=4, transport="forward"):
    """Reference trajectory of the 1D time-dependent Fokker-Planck equation.

    vprime_coeffs: polynomial coefficients (low to high) of V'.
    init: density table on nodes (normalized under dx weights).
    absorbing_index: node index pinned to zero from step 2 on, or None.

    mode "same-stencil" iterates exactly the forward-Euler update the
    relaxation encodes (for stencil-exactness checks); mode "refined"
    solves Crank-Nicolson with central transport on a refine-times finer
    grid and time step, restricted back to the coarse nodes (ground
    truth).  Returns an (m, len(nodes)) array of density tables.
    """
    nodes = np.asarray(nodes, dtype=float)
    dx = nodes[1] - nodes[0]
    vprime = lambda z: np.polynomial.polynomial.polyval(z, vprime_coeffs)

    if mode == "same-stencil":
        L = _fp_operator_1d(nodes, dx, beta, vprime, transport=transport)
        out = np.zeros((m, len(nodes)))
        out[0] = init
        rho = np.array(init)
        for l in range(1, m):
            rho = rho + dtau * (L @ rho)
            if absorbing_index is not None:
                rho[absorbing_index] = 0.0
            out[l] = rho
            if not np.isfinite(rho).all() or np.abs(rho).max() > 1e8:
                raise FloatingPointError("forward-Euler iteration blew up; "
                                         "time step violates stability")
        return out

    if mode != "refined":
        raise ValueError(f"unknown mode {mode!r}")

    nf = refine * (len(nodes) - 1) + 1
    xf = np.linspace(nodes[0], nodes[-1], nf)
    dxf = xf[1] - xf[0]
    dtf = dtau / refine
    # interpolate the initial density, renormalize mass
    rf = np.interp(xf, nodes, init)
    rf /= rf.sum() * dxf
    rf *= init.sum() * dx
    absf = None
    if absorbing_index is not None:
        absf = refine * absorbing_index
    L = _fp_operator_1d(xf, dxf, beta, vprime, transport="central")
    I = sp.eye(nf, format="csr")
    Aimp = (I - 0.5 * dtf * L).tocsc()
    Bexp = (I + 0.5 * dtf * L).tocsr()
    lu = spla.splu(Aimp)
    out = np.zeros((m, len(nodes)))
    sel = slice(0, nf, refine)
    out[0] = rf[sel]
    for l in range(1, m):
        for _ in range(refine):
            rf = lu.solve(Bexp @ rf)
            if absf is not None:
                rf[absf] = 0.0
        out[l] = rf[sel]
        if not np.isfinite(rf).all():
            raise FloatingPointError("Crank-Nicolson solve went non-finite")
    return out


# ---------------------------------------------------------------------------
# stochastic cross-check

def langevin_sample(p, beta, dt=1e-4, n_steps=20000, burn_in=5000, seed=0,
                    n_chains=64):
    """Euler-Maruyama estimate of first and second equilibrium moments.

    Runs an ensemble of chains; standard errors come from the spread of
    per-chain means.  Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    a, b = p.domain
    x = rng.uniform(a / 2, b / 2, size=(n_chains, p.d))
    sig = np.sqrt(2.0 * dt / beta)
    lim = 10.0 * max(abs(a), abs(b))
    s1 = np.zeros((n_chains, p.d))
    s2 = np.zeros((n_chains, p.d))
    kept = 0
    for step in range(n_steps):
        x = x - dt * potentials.grad_potential(p, x) \
            + sig * rng.standard_normal(x.shape)
        if np.abs(x).max() > lim:
            raise FloatingPointError("Langevin trajectory diverged; "
                                     "reduce dt")
        if step >= burn_in:
            s1 += x
            s2 += x * x
            kept += 1
    m1c = s1 / kept
    m2c = s2 / kept
    return {
        "m1": m1c.mean(axis=0),
        "m2": m2c.mean(axis=0),
        "se1": m1c.std(axis=0, ddof=1) / np.sqrt(n_chains),
        "se2": m2c.std(axis=0, ddof=1) / np.sqrt(n_chains),
        "n_chains": n_chains,
        "kept_steps": kept,
    }
