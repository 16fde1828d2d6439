"""Resolvent restriction chains, weighted norms and high-energy scans.

The composed operators (codifferential-derivative and its partner) applied to
the spectral-family inverse are realized through the extended pencil: embed
the datum, weight it, extend by zero across the boundary, invert the discrete
pencil, restrict, and apply the weight-conjugated second-order block.  The
conjugated block has regular coefficients across mu = 0, so every step is a
plain collocation operation.
"""

import cmath
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import sympy as sp

from .opalg import MU, SIGMA, II, op_matmul, op_zeros, DiffOp
from .geometry import MetricSpec
from .form_calculus import (ModeBundle, MuPolyOperator, conjugate_by_F_power,
                            d_matrix, delta_matrix, form_slots, laplacian_blocks,
                            slot_labels)
from .extension import (OperatorPencil, build_pencil_ambient, sigma_lambda,
                        _wedge_mix, _weight_constant)
from .discretize import (SpectralGrid, DiscretePencil, assemble, chebyshev_grid,
                         radau_grid)


class NearResonance(RuntimeError):
    pass


class UnsupportedWhich(ValueError):
    pass


class PoleOfVarpi(RuntimeError):
    """lambda sits at a zero of the continued spectral function, where only
    the full resolvent (not the composed chains) develops its pole."""


class SingularInnerBlock(np.linalg.LinAlgError):
    pass


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormSpec:
    """Weighted |sigma|-scaled discrete Sobolev norm data.

    s is the Sobolev order, sigma_scale the |sigma| weighting each derivative
    by 1/|sigma|, weight_exponent the boundary-defining-function power of the
    space, and extra_wedge_weight the stronger weight carried by tangential
    slots in the wedge-conditioned spaces (None for the plain family).
    """

    s: float
    sigma_scale: float = 1.0
    weight_exponent: complex = 0.0
    extra_wedge_weight: complex = None


def interp_matrix(src_nodes, dst_nodes):
    """Barycentric interpolation matrix from one node family to another."""
    src = np.asarray(src_nodes, float)
    dst = np.asarray(dst_nodes, float)
    n = len(src)
    w = np.ones(n)
    for i in range(n):
        for l in range(n):
            if l != i:
                w[i] /= (src[i] - src[l])
    M = np.zeros((len(dst), n))
    for r, x in enumerate(dst):
        dx = x - src
        hit = np.where(np.abs(dx) < 1e-14)[0]
        if len(hit):
            M[r, hit[0]] = 1.0
            continue
        tmp = w / dx
        M[r, :] = tmp / tmp.sum()
    return M


def collocate(op: MuPolyOperator, grid: SpectralGrid, sigma=None):
    """Dense collocation of an operator matrix on a grid; entries rational in
    mu and polynomial in SIGMA (substituted when sigma is given)."""
    r, c = op.shape
    N = grid.N
    Dm = [np.eye(N), grid.D, grid.D @ grid.D]
    out = np.zeros((r * N, c * N), dtype=complex)
    for i in range(r):
        for j in range(c):
            e = op.mat[i][j]
            for o, coeff in enumerate(e.c):
                if coeff == 0:
                    continue
                expr = coeff if sigma is None else coeff.subs(SIGMA, sp.sympify(complex(sigma)))
                f = sp.lambdify(MU, expr, 'numpy')
                vals = np.asarray(f(grid.nodes), dtype=complex)
                if vals.shape == ():
                    vals = np.full(N, complex(vals))
                out[i * N:(i + 1) * N, j * N:(j + 1) * N] += vals[:, None] * Dm[o]
    return out


def sobolev_factors(grid: SpectralGrid, ell: int):
    """Eigen-data of the discrete Laplacian-like quadratic form on the grid,
    symmetric in the quadrature inner product; cached per (grid id, ell)."""
    W = np.maximum(grid.weights, 1e-300)
    Wh = np.sqrt(W)
    A = (grid.D.T * W) @ grid.D / W[:, None] + (1 + ell * ell) * np.eye(grid.N)
    As = (Wh[:, None] * A) / Wh[None, :]
    As = (As + As.T) / 2
    evals, evecs = np.linalg.eigh(As)
    evals = np.maximum(evals, 0.0)
    return Wh, evals, evecs


def sobolev_multiplier(grid: SpectralGrid, ell: int, s: float, sigma_scale: float):
    """Matrix R with ||R u||_2 = || (1 + |sigma|^-2 A)^(s/2) u ||_(L2,w)."""
    Wh, evals, evecs = sobolev_factors(grid, ell)
    lam = (1.0 + evals / max(sigma_scale, 1.0) ** 2) ** (s / 2.0)
    core = (evecs * lam) @ evecs.T
    return core @ (np.eye(grid.N) * Wh[:, None])


# ---------------------------------------------------------------------------
# restriction chains
# ---------------------------------------------------------------------------

@dataclass
class ResolventQuery:
    """One application of a restriction identity.

    rhs holds one callable per slot of the datum (a k-form for 'delta-d' and
    'full', and for the partner chain as well -- the pencil degree shift is
    handled internally); data must vanish near mu = 0.
    """

    k: int
    spectral: object
    rhs: tuple
    which: str = 'delta-d'


SUPPORT_FLOOR = 0.05


def _zero_extension_matrix(xgrid: SpectralGrid, egrid: SpectralGrid,
                           floor=SUPPORT_FLOOR):
    """Extension by zero of data supported in mu >= floor; the hard gate
    keeps the singular boundary weights away from stray tail values."""
    E = interp_matrix(xgrid.nodes, egrid.nodes)
    E[egrid.nodes < floor, :] = 0.0
    return E


def _second_order_block(metric, k, ell, which):
    """The weight-conjugated second-order block and slot bookkeeping.

    delta-d: delta d pi_T J conjugated by F^(i sigma - c1(k));
    d-delta: d delta pi_N J on the (k+1)-pencil bundle.
    Returns (op, pencil_degree, in_slots, out_rank).
    """
    n = metric.n
    if which == 'delta-d':
        kp = k
        _, sd, _ = laplacian_blocks(ModeBundle(n, k, ell), metric)
        sl_k = form_slots(n, k)
        sl_m = form_slots(n, k - 1) if k >= 1 else []
        nk, nm = len(sl_k), len(sl_m)
        comp = op_zeros(nk, nk + nm)
        J = _wedge_mix(sl_k, sl_m, +1)
        for i in range(nk):
            for j in range(nk + nm):
                acc = DiffOp.zero()
                for l in range(nk):
                    acc = acc + sd.mat[i][l] * J[l][j]
                comp[i][j] = acc
        op = MuPolyOperator(comp, domain=None, codomain=slot_labels(sl_k), ell=ell)
        alpha = II * SIGMA - _weight_constant(n, kp)
        return conjugate_by_F_power(op, alpha), kp, (0, nk), nk
    if which == 'd-delta':
        kp = k + 1
        dd, _, _ = laplacian_blocks(ModeBundle(n, k, ell), metric)
        sl_k = form_slots(n, kp)
        sl_m = form_slots(n, k)
        nk, nm = len(sl_k), len(sl_m)
        comp = op_zeros(nm, nk + nm)
        J = _wedge_mix(sl_k, sl_m, +1)
        for i in range(nm):
            for j in range(nk + nm):
                # pi_N J = the Lambda^k part of J; J only mixes into the
                # tangential k-slots, so pi_N J = [0 | I]
                acc = dd.mat[i][j - nk] if j >= nk else DiffOp.zero()
                comp[i][j] = acc
        op = MuPolyOperator(comp, domain=None, codomain=slot_labels(sl_m), ell=ell)
        alpha = II * SIGMA - _weight_constant(n, kp)
        return conjugate_by_F_power(op, alpha), kp, (nk, nk + nm), nm
    raise UnsupportedWhich('which must be delta-d, d-delta or full')


def _embed_weight(metric, kp, which, xgrid, sigma, rank_in, weighted=True):
    """Matrix taking datum slot values to weighted bundle values on the
    x-grid: J^{-1} iota followed by the F^(i sigma - c - 2) weight.

    With weighted=False the boundary weight is dropped (used when it cancels
    against the norm weight of the datum space)."""
    n = metric.n
    sl_k = form_slots(n, kp)
    sl_m = form_slots(n, kp - 1) if kp >= 1 else []
    nk, nm = len(sl_k), len(sl_m)
    N = xgrid.N
    mu = xgrid.nodes
    c = float(_weight_constant(n, kp))
    expo = (1j * complex(sigma) - c) / 2.0 - 1.0
    if weighted:
        with np.errstate(divide='ignore', invalid='ignore'):
            wvals = np.where(mu > 0, mu ** expo, 0.0)
        wvals = np.nan_to_num(wvals, nan=0.0, posinf=0.0, neginf=0.0)
    else:
        wvals = np.ones_like(mu, dtype=complex)
    out = np.zeros(((nk + nm) * N, rank_in * N), dtype=complex)
    if which == 'delta-d':
        # iota_T: datum fills the Lambda^k slots; J^{-1} acts trivially
        for i in range(nk):
            out[i * N:(i + 1) * N, i * N:(i + 1) * N] = np.diag(wvals)
    else:
        # iota_N: datum fills the Lambda^k slots of the normal summand;
        # J^{-1} feeds -1/(2 mu) of its tangential part into the matching
        # normal slot of the Lambda^(k+1) summand
        for j, (tm, dm) in enumerate(sl_m):
            out[(nk + j) * N:(nk + j + 1) * N, j * N:(j + 1) * N] = np.diag(wvals)
            if tm != 'T':
                continue
            for i, (tk, dk) in enumerate(sl_k):
                if tk == 'N' and dk == dm:
                    with np.errstate(divide='ignore', invalid='ignore'):
                        mix = np.where(mu > 0, -wvals / (2 * mu), 0.0)
                    mix = np.nan_to_num(mix, nan=0.0, posinf=0.0, neginf=0.0)
                    out[i * N:(i + 1) * N, j * N:(j + 1) * N] = np.diag(mix)
    return out


def chain_matrix(metric: MetricSpec, k: int, ell: int, sigma, which='delta-d',
                 N_x=64, N_ext=None, dp: DiscretePencil = None,
                 with_outer_weight=True):
    """Dense matrix of the restriction chain on the positive-mu grid.

    With with_outer_weight=False the two cancelling boundary weights are
    dropped analytically (the form used inside norm scans); the raw chain
    output is the honest datum with its F-power restored.
    """
    sigma = complex(sigma)
    N_ext = N_ext or N_x
    op_b, kp, (lo, hi), rank_out = _second_order_block(metric, k, ell, which)
    pencil = build_pencil_ambient(metric, kp, ell)
    if dp is None:
        egrid = chebyshev_grid(N_ext, float(metric.mu_left), float(metric.mu_right))
        dp = assemble(pencil, egrid)
    egrid = dp.grid
    xgrid = radau_grid(N_x, 0.0, float(metric.mu_right))
    rank_b = pencil.rank
    rank_in = rank_out
    # embed + weight on the x-grid; in normed mode both boundary weights
    # cancel against the space weights and are dropped analytically
    EMB = _embed_weight(metric, kp, which, xgrid, sigma, rank_in,
                        weighted=with_outer_weight)
    # extension by zero, slotwise
    E1 = _zero_extension_matrix(xgrid, egrid)
    EXT = np.kron(np.eye(rank_b), E1)
    # pencil solve with the clearing/equilibration row transform
    M = dp.at_sigma(sigma)
    rhs_weight = (dp.row_mult_vals / dp.row_scale.reshape(rank_b, egrid.N))
    lu = sla.lu_factor(M)

    def solve(b):
        return sla.lu_solve(lu, (rhs_weight.reshape(-1) * b))

    # restrict and apply the conjugated second-order block
    R1 = interp_matrix(egrid.nodes, xgrid.nodes)
    RES = np.kron(np.eye(rank_b), R1)
    OPB = collocate(op_b, xgrid, sigma=sigma)
    pre = EMB
    post = OPB @ RES
    cols = pre.shape[1]
    T = np.zeros((rank_out * xgrid.N, cols), dtype=complex)
    for j in range(cols):
        T[:, j] = post @ solve(EXT @ pre[:, j])
    if with_outer_weight:
        c = float(_weight_constant(metric.n, kp))
        beta = (-1j * sigma + c) / 2.0
        with np.errstate(divide='ignore', invalid='ignore'):
            wout = np.where(xgrid.nodes > 0, xgrid.nodes ** beta, 0.0)
        wout = np.nan_to_num(wout, nan=0.0, posinf=0.0, neginf=0.0)
        T = np.kron(np.eye(rank_out), np.diag(wout)) @ T
    return T, xgrid, dp


def _solve_health(dp: DiscretePencil, sigma, rhs, sol):
    M = dp.at_sigma(sigma)
    num = np.linalg.norm(M @ sol - rhs)
    den = np.linalg.norm(rhs)
    if den == 0:
        return 0.0
    return float(num / den)


def resolvent_apply(q: ResolventQuery, dp: DiscretePencil = None,
                    metric: MetricSpec = None, ell: int = 0, N_x: int = 64):
    """Apply a restriction chain to the query datum.

    Returns (xgrid, values) with values stacked slotwise on the positive-mu
    grid.  Raises NearResonance when the pencil solve is untrustworthy at
    this sigma.
    """
    if q.which not in ('delta-d', 'd-delta'):
        raise UnsupportedWhich('resolvent_apply handles delta-d and d-delta')
    sigma = complex(q.spectral.sigma if hasattr(q.spectral, 'sigma') else q.spectral)
    T, xgrid, dp = chain_matrix(metric, q.k, ell, sigma, which=q.which,
                                N_x=N_x, dp=dp)
    rank_in = len(q.rhs)
    f = np.concatenate([np.asarray(g(xgrid.nodes), dtype=complex) for g in q.rhs])
    # health check: re-run the inner solve on this datum and measure residual
    op_b, kp, _, _ = _second_order_block(metric, q.k, ell, q.which)
    pencil = build_pencil_ambient(metric, kp, ell)
    EMB = _embed_weight(metric, kp, q.which, xgrid, sigma, rank_in)
    E1 = _zero_extension_matrix(xgrid, dp.grid)
    EXT = np.kron(np.eye(pencil.rank), E1)
    b = (dp.row_mult_vals / dp.row_scale.reshape(pencil.rank, dp.grid.N)).reshape(-1) \
        * (EXT @ (EMB @ f))
    sol = np.linalg.solve(dp.at_sigma(sigma), b)
    res = _solve_health(dp, sigma, b, sol)
    amplification = np.linalg.norm(sol) * np.linalg.norm(dp.at_sigma(sigma), 2) \
        / max(np.linalg.norm(b), 1e-300)
    if res > 1e-6 or amplification > 1e12:
        raise NearResonance('pencil solve residual %.2e, amplification %.1e'
                            % (res, amplification))
    return xgrid, T @ f


def resolvent_full(q: ResolventQuery, metric: MetricSpec = None, ell: int = 0,
                   N_x: int = 64):
    """Full resolvent application through the two restriction chains.

    (Delta_k - lambda)^{-1} f = (-f + delta-d part + d-delta part)/lambda;
    refuses lambda at zeros of the continued spectral function, where the
    composed chains are regular but the full family has its infinite-rank
    pole.
    """
    spec_pt = q.spectral
    lam = complex(spec_pt.lam if hasattr(spec_pt, 'lam') else spec_pt)
    if abs(lam) < 1e-10:
        raise PoleOfVarpi('lambda = %s sits on the zero locus' % lam)
    sigma = complex(spec_pt.sigma)
    tau = complex(spec_pt.tau)
    xg1, part_sd = resolvent_apply(
        ResolventQuery(k=q.k, spectral=sigma, rhs=q.rhs, which='delta-d'),
        metric=metric, ell=ell, N_x=N_x)
    xg2, part_ds = resolvent_apply(
        ResolventQuery(k=q.k, spectral=tau, rhs=q.rhs, which='d-delta'),
        metric=metric, ell=ell, N_x=N_x)
    # chains realize the composed maps against (-Delta + lambda); the
    # resolvent of (Delta - lambda) flips their sign
    f = np.concatenate([np.asarray(g(xg1.nodes), dtype=complex) for g in q.rhs])
    return xg1, (-f - part_sd - part_ds) / lam


# ---------------------------------------------------------------------------
# block inversion
# ---------------------------------------------------------------------------

def schur_invert(A, B, C, D, which_corner='D'):
    """Inverse of [[A, B], [C, D]] through the Schur complement of the named
    invertible corner."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    D = np.atleast_2d(np.asarray(D, dtype=complex))
    if which_corner == 'A':
        inv = schur_invert(D, C, B, A, which_corner='D')
        n = D.shape[0]
        return np.block([[inv[n:, n:], inv[n:, :n]], [inv[:n, n:], inv[:n, :n]]])
    if which_corner != 'D':
        raise ValueError("which_corner must be 'A' or 'D'")
    try:
        cond = np.linalg.cond(D)
    except np.linalg.LinAlgError:
        raise SingularInnerBlock('inner block not invertible')
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularInnerBlock('inner block condition %.2e' % cond)
    Dinv = np.linalg.inv(D)
    S = A - B @ Dinv @ C
    try:
        Sinv = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        raise SingularInnerBlock('Schur complement singular')
    top = np.hstack([Sinv, -Sinv @ B @ Dinv])
    bot = np.hstack([-Dinv @ C @ Sinv, Dinv + Dinv @ C @ Sinv @ B @ Dinv])
    return np.vstack([top, bot])


# ---------------------------------------------------------------------------
# high-energy scans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StripSpec:
    im_sigma: float = -0.5
    re_start: float = 5.0
    re_stop: float = 40.0
    re_step: float = 5.0

    def sigmas(self):
        out = []
        re = self.re_start
        while re <= self.re_stop + 1e-9:
            out.append(complex(re, self.im_sigma))
            re += self.re_step
        return out

    @classmethod
    def parse(cls, text):
        kw = {}
        for part in text.split(','):
            part = part.strip()
            if not part:
                continue
            key, val = part.split('=')
            if key == 'im':
                kw['im_sigma'] = float(val)
            elif key == 're':
                a, b, c = val.split(':')
                kw.update(re_start=float(a), re_stop=float(b), re_step=float(c))
            else:
                raise ValueError('unknown strip clause %r' % key)
        return cls(**kw)


def operator_norm_power(M, tol=1e-6, max_iter=200, seed=0):
    """Largest singular value of M by power iteration on M* M."""
    rng = np.random.default_rng(seed)
    n = M.shape[1]
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        w = M.conj().T @ (M @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        val = np.sqrt(nrm)
        if abs(val - prev) <= tol * max(val, 1.0):
            return float(val)
        prev = val
    return float(val)


def _wedge_slot_weights(metric, k, xgrid, which):
    """Diagonal slot weights realizing the wedge-conditioned spaces: the
    tangential slots of the datum carry the extra mu^{-1} weight.  The node
    at mu = 0 is excluded from the singular term (data vanish there)."""
    sl = form_slots(metric.n, k)
    mu = xgrid.nodes
    out = []
    for t, _j in sl:
        if t == 'T':
            vals = np.where(mu > 1e-12, 1.0 / np.maximum(mu, 1e-12), 0.0)
            out.append(vals)
        else:
            out.append(np.ones_like(mu))
    return out


def highenergy_scan(metric: MetricSpec, k: int, s: float, strip: StripSpec,
                    ell_max: int, N: int = 64, which='delta-d',
                    power_tol=1e-6, parallel_map=map):
    """Weighted operator norms of a restriction chain along a strip.

    For each sigma the norm is the max over modes ell <= ell_max of the
    discrete (Y^{s+1} -> X^s) norm of the chain; rows carry norm/|sigma| and
    the second-order-normalized column used by the boundedness checks.
    """
    sigmas = strip.sigmas()
    pencil_deg = k if which == 'delta-d' else k + 1

    def norm_at(args):
        sigma, ell = args
        T, xgrid, _dp = chain_matrix(metric, k, ell, sigma, which=which,
                                     N_x=N, N_ext=N, with_outer_weight=False)
        R_x = sobolev_multiplier(xgrid, ell, s, abs(sigma))
        R_y = sobolev_multiplier(xgrid, ell, s + 1.0, abs(sigma))
        rank = T.shape[0] // xgrid.N
        RX = np.kron(np.eye(rank), R_x)
        RYi = np.kron(np.eye(rank), np.linalg.inv(R_y))
        if which == 'd-delta':
            wts = _wedge_slot_weights(metric, k, xgrid, which)
            WX = np.concatenate([1.0 + w for w in wts])
            RX = RX * WX[None, :]
        M = RX @ T @ RYi
        return operator_norm_power(M, tol=power_tol)

    rows = []
    for sigma in sigmas:
        norms = list(parallel_map(norm_at, [(sigma, ell) for ell in range(ell_max + 1)]))
        norm = max(norms)
        rows.append({
            'sigma_re': sigma.real, 'sigma_im': sigma.imag,
            'norm': norm, 'ratio': norm / abs(sigma),
            's': s, 'k': k, 'ell_max': ell_max,
        })
    return rows


SCAN_CSV_COLUMNS = ['sigma_re', 'sigma_im', 'norm', 'ratio', 's', 'k', 'ell_max']


def scan_to_csv(rows, header_comments=()):
    import csv
    import io
    buf = io.StringIO()
    for line in header_comments:
        buf.write('# %s\n' % line)
    w = csv.DictWriter(buf, fieldnames=SCAN_CSV_COLUMNS, lineterminator='\n')
    w.writeheader()
    for r in rows:
        w.writerow({k: ('%.12g' % v if isinstance(v, float) else v)
                    for k, v in r.items()})
    return buf.getvalue()
