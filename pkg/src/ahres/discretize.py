"""Spectral collocation of an operator pencil on the extended interval.

The trial space is global polynomials sampled at Chebyshev-type nodes; no
boundary rows are imposed.  At regular-singular points the polynomial ansatz
itself selects the analytic solution branch, which is what turns collocation
eigenvalues into resonances.  A metric with a polar cap has coefficients
singular at mu_right, so there the node set is switched to the Radau variant
(cap endpoint carries no node) and each slot row is cleared by the minimal
polynomial multiple of its denominators.
"""

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .opalg import MU, SIGMA
from .extension import OperatorPencil


class BadInterval(ValueError):
    pass


class DomainMismatch(ValueError):
    pass


MIN_NODES = 8


def _polydiff(x):
    """Differentiation matrix of polynomial interpolation at nodes x."""
    x = np.asarray(x, float)
    n = len(x)
    c = np.ones(n)
    for j in range(n):
        for k in range(n):
            if k != j:
                c[j] *= x[j] - x[k]
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = (c[i] / c[j]) / (x[i] - x[j])
    D -= np.diag(D.sum(axis=1))
    return D


def _quad_weights(nodes, a, b):
    """Interpolatory quadrature weights at arbitrary nodes on [a, b].

    Solved in the Chebyshev basis of the mapped interval for stability.
    """
    t = (2 * np.asarray(nodes, float) - (a + b)) / (b - a)
    n = len(t)
    V = np.polynomial.chebyshev.chebvander(t, n - 1)
    m = np.zeros(n)
    for k in range(0, n, 2):
        m[k] = 2.0 / (1.0 - k * k) if k != 1 else 0.0
    w = np.linalg.solve(V.T, m)
    return w * (b - a) / 2


@dataclass(frozen=True)
class SpectralGrid:
    """Collocation nodes, differentiation matrix and quadrature weights."""

    N: int
    a: float
    b: float
    nodes: np.ndarray
    D: np.ndarray
    weights: np.ndarray
    kind: str = 'lobatto'

    def restriction(self, positive=True):
        """Index set of nodes with mu >= 0 (or mu < 0)."""
        if positive:
            return np.where(self.nodes >= -1e-14)[0]
        return np.where(self.nodes < -1e-14)[0]


def chebyshev_grid(N: int, a, b) -> SpectralGrid:
    """Chebyshev-Gauss-Lobatto grid on [a, b], endpoints included."""
    a = float(a)
    b = float(b)
    if not (a < b):
        raise BadInterval('need a < b')
    if N < MIN_NODES:
        raise BadInterval('need at least %d nodes' % MIN_NODES)
    j = np.arange(N)
    t = np.cos(np.pi * j / (N - 1))
    nodes = (a + b) / 2 - (b - a) / 2 * t
    idx = np.argsort(nodes)
    nodes = nodes[idx]
    nodes[0], nodes[-1] = a, b
    D = _polydiff(nodes)
    return SpectralGrid(N=N, a=a, b=b, nodes=nodes, D=D,
                        weights=_quad_weights(nodes, a, b), kind='lobatto')


def radau_grid(N: int, a, b) -> SpectralGrid:
    """Chebyshev-Radau grid: includes a, excludes b (for polar caps)."""
    a = float(a)
    b = float(b)
    if not (a < b):
        raise BadInterval('need a < b')
    if N < MIN_NODES:
        raise BadInterval('need at least %d nodes' % MIN_NODES)
    j = np.arange(N)
    t = np.cos(2 * np.pi * j / (2 * N - 1))
    nodes = a + (b - a) * (1 - t) / 2
    idx = np.argsort(nodes)
    nodes = nodes[idx]
    nodes[0] = a
    D = _polydiff(nodes)
    return SpectralGrid(N=N, a=a, b=b, nodes=nodes, D=D,
                        weights=_quad_weights(nodes, a, b), kind='radau')


# ---------------------------------------------------------------------------
# absorber
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsorberSpec:
    """Complex absorbing operator -i * strength * chi(mu) * (...) supported
    in [mu_left, -delta1]; chi is a C^2 smoothstep, identically 0 for
    mu >= -delta1 and 1 at the far end."""

    mu_left: float
    delta1: float
    strength: float = 1.0
    order: str = 'zeroth'

    def __post_init__(self):
        if not (0 < self.delta1 and -self.delta1 > self.mu_left):
            raise ValueError('need mu_left < -delta1 < 0')
        if self.order not in ('zeroth', 'second'):
            raise ValueError("absorber order must be 'zeroth' or 'second'")
        if self.strength <= 0:
            raise ValueError('absorber strength must be positive')

    def profile(self, mu):
        mu = np.asarray(mu, float)
        z = (-self.delta1 - mu) / (-self.delta1 - self.mu_left)
        z = np.clip(z, 0.0, 1.0)
        return z ** 3 * (10 - 15 * z + 6 * z * z)


@dataclass
class DiscretePencil:
    """Collocated pencil P(sigma) ~ P0 + sigma P1 + sigma^2 P2.

    Rows are cleared by per-slot polynomial multipliers and equilibrated; the
    provenance dict records rank, mode, clearing multipliers, grid kind, and
    the cavity flag for capped-off metrics.
    """

    P0: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    grid: SpectralGrid
    rank: int
    absorber: AbsorberSpec = None
    provenance: dict = field(default_factory=dict)
    row_scale: np.ndarray = None
    row_mult_vals: np.ndarray = None

    def at_sigma(self, s):
        return self.P0 + s * self.P1 + (s * s) * self.P2

    @property
    def size(self):
        return self.P0.shape[0]

    def to_json_dict(self):
        def mat(M):
            return [[[float(z.real), float(z.imag)] for z in row] for row in M]
        return {
            'rank': self.rank, 'N': self.grid.N,
            'interval': [self.grid.a, self.grid.b],
            'grid_kind': self.grid.kind,
            'nodes': [float(x) for x in self.grid.nodes],
            'provenance': {k: v for k, v in self.provenance.items()
                           if isinstance(v, (int, float, str, bool, list))},
            'P0': mat(self.P0), 'P1': mat(self.P1), 'P2': mat(self.P2),
        }


def _cleared_sigma_parts(pencil: OperatorPencil):
    """Per-row cleared coefficient tables, cached on the pencil.

    Returns (multipliers, table) with table[i][j][dmu_order] a dict
    {sigma_power: numpy polynomial coefficients (descending)}.
    """
    cached = getattr(pencil, '_cleared_cache', None)
    if cached is not None:
        return cached
    mults = pencil.row_clear_multipliers()
    r = pencil.rank
    table = []
    for i in range(r):
        row_tab = []
        for j in range(r):
            ent = []
            for c in pencil.mat[i][j].c:
                e = sp.cancel(sp.expand(sp.cancel(sp.together(c)) * mults[i]))
                per_sigma = {}
                if e != 0:
                    pn = sp.Poly(e, SIGMA)
                    for (pw,), co in pn.terms():
                        cp = sp.Poly(sp.expand(co), MU)
                        arr = np.array([complex(sp.N(x)) for x in cp.all_coeffs()],
                                       dtype=complex)
                        per_sigma[pw] = arr
                ent.append(per_sigma)
            row_tab.append(ent)
        table.append(row_tab)
    pencil._cleared_cache = (mults, table)
    return mults, table


def assemble(pencil: OperatorPencil, grid: SpectralGrid,
             absorber: AbsorberSpec = None) -> DiscretePencil:
    """Collocation matrices of the pencil, optionally with a complex absorber.

    For metrics with a polar cap the Radau node family replaces the requested
    Lobatto one (same size and interval): coefficients are singular at the cap
    and that endpoint must not carry a node.  For cavity metrics (no warp
    zero at mu_right) the grid is used as passed and the last node's rows are
    replaced by Dirichlet rows; the result is labeled cavity-conditioned.
    """
    lo = float(pencil.mu_left)
    hi = float(pencil.mu_right)
    if grid.a < lo - 1e-12 or grid.b > hi + 1e-12:
        raise DomainMismatch('grid interval outside the pencil domain')
    polar = pencil.metric.has_polar_cap() and abs(grid.b - hi) < 1e-12
    cavity = not pencil.metric.has_polar_cap()
    if polar and grid.kind != 'radau':
        grid = radau_grid(grid.N, grid.a, grid.b)
    N = grid.N
    r = pencil.rank
    Dmats = [np.eye(N), grid.D, grid.D @ grid.D]
    mults, table = _cleared_sigma_parts(pencil)
    Ps = [np.zeros((r * N, r * N), dtype=complex) for _ in range(3)]
    for i in range(r):
        for j in range(r):
            for order, per_sigma in enumerate(table[i][j]):
                for pw, coeffs in per_sigma.items():
                    vals = np.polyval(coeffs, grid.nodes)
                    Ps[pw][i * N:(i + 1) * N, j * N:(j + 1) * N] += \
                        vals[:, None] * Dmats[order]
    mult_vals = [np.polyval(
        np.array([complex(sp.N(x)) for x in
                  sp.Poly(sp.expand(m), MU).all_coeffs()], dtype=complex),
        grid.nodes) for m in mults]
    if absorber is not None:
        chi = absorber.profile(grid.nodes)
        if absorber.order == 'zeroth':
            base = np.eye(N)
            for i in range(r):
                blk = -1j * absorber.strength * (chi * mult_vals[i])[:, None] * base
                Ps[0][i * N:(i + 1) * N, i * N:(i + 1) * N] += blk
        else:
            ell = pencil.bundle.ell
            op = -Dmats[2] + (1 + ell * ell) * np.eye(N)
            for i in range(r):
                blk = -1j * absorber.strength * (chi * mult_vals[i])[:, None] * op
                Ps[0][i * N:(i + 1) * N, i * N:(i + 1) * N] += blk
    if cavity:
        for i in range(r):
            row = i * N + (N - 1)
            for M in Ps:
                M[row, :] = 0.0
            Ps[0][row, row] = 1.0
    scale = np.maximum(np.abs(Ps[0]).max(axis=1),
                       np.maximum(np.abs(Ps[1]).max(axis=1),
                                  np.abs(Ps[2]).max(axis=1)))
    scale[scale == 0] = 1.0
    for M in Ps:
        M /= scale[:, None]
    prov = {
        'k': pencil.bundle.k, 'ell': pencil.bundle.ell, 'rank': r,
        'route': pencil.route, 'grid_kind': grid.kind,
        'cavity_conditioned': bool(cavity),
        'row_multipliers': [sp.sstr(m) for m in mults],
        'absorber': None if absorber is None else
            {'delta1': absorber.delta1, 'strength': absorber.strength,
             'order': absorber.order},
    }
    return DiscretePencil(P0=Ps[0], P1=Ps[1], P2=Ps[2], grid=grid, rank=r,
                          absorber=absorber, provenance=prov, row_scale=scale,
                          row_mult_vals=np.array(mult_vals))


def direct_apply(pencil: OperatorPencil, sigma, polys, grid: SpectralGrid):
    """Row-cleared pencil applied symbolically to polynomial sections,
    sampled at the grid nodes (for residual checks against the matrices).

    The equilibration scaling is not included; compare against the assembled
    matrices times their recorded row scale, or rescale both sides.
    """
    mults, _ = _cleared_sigma_parts(pencil)
    r = pencil.rank
    out = np.zeros(r * len(grid.nodes), dtype=complex)
    s = sp.sympify(sigma)
    for i in range(r):
        expr = sp.S.Zero
        for j in range(r):
            applied = pencil.mat[i][j].apply_sym(sp.sympify(polys[j]))
            expr += applied
        expr = sp.cancel(sp.together(expr.subs(SIGMA, s) * mults[i]))
        f = sp.lambdify(MU, expr, 'numpy')
        vals = np.asarray(f(grid.nodes), dtype=complex)
        if vals.shape == ():
            vals = np.full(len(grid.nodes), complex(vals))
        out[i * len(grid.nodes):(i + 1) * len(grid.nodes)] = vals
    return out
