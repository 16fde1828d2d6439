"""Exterior calculus on the extended surface and its Lorentzian cone, per Fourier mode.

All operators are reduced on the circle mode e^{i ell theta} and expressed as
matrices of mu-differential operators with exact rational-function entries.
Two coefficient conventions appear: boundary objects carry d_Y -> i*ell and
delta_Y -> -i*ell/w, and cone objects additionally track rho-homogeneity
through the symbol s = rho d/drho.
"""

from dataclasses import dataclass, field

import sympy as sp

from .opalg import (DiffOp, Graded, II, MU, S, op_add, op_apply_sym,
                    op_matmul, op_scale, op_shape, op_subs, op_zeros)
from .geometry import MetricSpec, AmbientMetric, UnsupportedDimension


class DegreeOutOfRange(ValueError):
    pass


class WarpZeroInDomain(ValueError):
    pass


def _lam_rank(j):
    """Rank of Lambda^j(S^1)."""
    return 1 if j in (0, 1) else 0


def form_slots(n, k):
    """Slot list of Lambda^k on X in the (dy, dmu^dy) splitting: (tag, j).

    tag 'T' holds a degree-j boundary form, tag 'N' a dmu wedge degree-j one.
    Only n = 2 is mode-reduced here.
    """
    if n != 2:
        raise UnsupportedDimension('mode reduction implemented for n = 2')
    out = []
    if _lam_rank(k):
        out.append(('T', k))
    if _lam_rank(k - 1):
        out.append(('N', k - 1))
    return out


def slot_labels(slots):
    return tuple('%s-%d' % ('tangential' if t == 'T' else 'normal', j)
                 for t, j in slots)


@dataclass(frozen=True)
class ModeBundle:
    """Per-mode description of Lambda^k + Lambda^(k-1) on the extended surface."""

    n: int
    k: int
    ell: int

    def __post_init__(self):
        if not (0 <= self.k <= self.n + 1):
            raise DegreeOutOfRange('degree %d outside 0..%d' % (self.k, self.n + 1))
        if self.n != 2:
            raise UnsupportedDimension('numerical mode bundles require n = 2')

    @property
    def slots(self):
        return form_slots(self.n, self.k) + form_slots(self.n, self.k - 1)

    @property
    def rank(self):
        return len(self.slots)

    @property
    def component_labels(self):
        return slot_labels(self.slots)


@dataclass
class MuPolyOperator:
    """Matrix of mu-differential operators between slotted mode bundles.

    mat[i][j] is the DiffOp sending slot j of the domain into slot i of the
    codomain; entries are rational in mu (denominators divide a power of the
    warp) and may carry i*ell and sigma parameters resolved at construction.
    """

    mat: list
    domain: tuple
    codomain: tuple
    ell: int = 0

    @property
    def order(self):
        return max((e.order for row in self.mat for e in row), default=-1)

    @property
    def shape(self):
        return op_shape(self.mat)

    def coeff_matrix(self, j):
        r, c = self.shape
        return sp.Matrix(r, c, lambda i, l: self.mat[i][l].coeff(j))

    def compose(self, other):
        if other.domain is not None and self.domain is not None:
            if tuple(other.codomain) != tuple(self.domain):
                raise DegreeOutOfRange('slot mismatch in composition')
        return MuPolyOperator(op_matmul(self.mat, other.mat),
                              domain=other.domain, codomain=self.codomain,
                              ell=self.ell)

    def __add__(self, other):
        return MuPolyOperator(op_add(self.mat, other.mat), self.domain,
                              self.codomain, self.ell)

    def scale(self, f):
        return MuPolyOperator(op_scale(self.mat, f), self.domain,
                              self.codomain, self.ell)

    def apply_sym(self, comps):
        return op_apply_sym(self.mat, comps)

    def is_zero(self):
        return all(all(sp.simplify(c) == 0 for c in e.c)
                   for row in self.mat for e in row)

    def entries(self):
        for i, row in enumerate(self.mat):
            for j, e in enumerate(row):
                yield i, j, e

    def to_json_dict(self):
        """Entries as {num, den} complex coefficient arrays (ascending powers)."""
        r, c = self.shape
        ents = []
        for i in range(r):
            row = []
            for j in range(c):
                coeffs = []
                for o, e in enumerate(self.mat[i][j].c):
                    num, den = sp.fraction(sp.cancel(sp.together(e)))
                    coeffs.append({
                        'dmu_order': o,
                        'num': _poly_pairs(num),
                        'den': _poly_pairs(den),
                    })
                row.append(coeffs)
            ents.append(row)
        return {'domain': list(self.domain or ()), 'codomain': list(self.codomain or ()),
                'ell': self.ell, 'entries': ents}


def _poly_pairs(expr):
    p = sp.Poly(sp.expand(expr), MU)
    out = []
    for c in reversed(p.all_coeffs()):
        cc = sp.nsimplify(c)
        re, im = cc.as_real_imag()
        out.append([float(re), float(im)])
    return out


# ---------------------------------------------------------------------------
# boundary data on S^1 with metric w(mu) dtheta^2
# ---------------------------------------------------------------------------

def dY_factor(ell, j_from):
    """d_Y on mode ell: Lambda^j -> Lambda^(j+1); only 0 -> 1 survives on S^1."""
    return II * ell if j_from == 0 else sp.S.Zero


def deltaY_factor(ell, w, j_from):
    """delta_Y on mode ell: Lambda^j -> Lambda^(j-1); only 1 -> 0 survives."""
    return -II * ell / w if j_from == 1 else sp.S.Zero


def H_factor(w, j):
    """Dual boundary metric on Lambda^j coefficients."""
    if j == 0:
        return sp.S.One
    if j == 1:
        return 1 / w
    return sp.S.Zero


def gamma_factor(w, j):
    """Zeroth-order part -4 H_j^{-1} (det h)^{-1/2} d/dmu[(det h)^{1/2} H_j]."""
    H = H_factor(w, j)
    return sp.cancel(-4 * (sp.diff(w, MU) / (2 * w) + sp.diff(H, MU) / H))


# ---------------------------------------------------------------------------
# exterior derivative / codifferential / Laplacian on the surface
# ---------------------------------------------------------------------------

def _check_degree(n, k):
    if not (0 <= k <= n):
        raise DegreeOutOfRange('form degree %d outside 0..%d' % (k, n))


def d_matrix(bundle: ModeBundle) -> MuPolyOperator:
    """Per-mode exterior derivative Lambda^k -> Lambda^(k+1) on the surface."""
    n, k, ell = bundle.n, bundle.k, bundle.ell
    _check_degree(n, k)
    cols = form_slots(n, k)
    rows = form_slots(n, k + 1) if k + 1 <= n else []
    M = op_zeros(len(rows), len(cols))
    for jc, (tc, dc) in enumerate(cols):
        for ir, (tr, dr) in enumerate(rows):
            if tr == 'T' and tc == 'T':
                M[ir][jc] = DiffOp.mult(dY_factor(ell, dc))
            elif tr == 'N' and tc == 'T':
                M[ir][jc] = DiffOp.ddmu()
            elif tr == 'N' and tc == 'N':
                M[ir][jc] = DiffOp.mult(-dY_factor(ell, dc))
    return MuPolyOperator(M, domain=slot_labels(cols), codomain=slot_labels(rows),
                          ell=ell)


def delta_matrix(bundle: ModeBundle, metric: MetricSpec) -> MuPolyOperator:
    """Per-mode codifferential Lambda^k -> Lambda^(k-1) on the surface."""
    n, k, ell = bundle.n, bundle.k, bundle.ell
    _check_degree(n, k)
    w = metric.warp_poly()
    cols = form_slots(n, k)
    rows = form_slots(n, k - 1) if k - 1 >= 0 else []
    M = op_zeros(len(rows), len(cols))
    for jc, (tc, dc) in enumerate(cols):
        for ir, (tr, dr) in enumerate(rows):
            if tr == 'T' and tc == 'T':
                M[ir][jc] = DiffOp.mult(MU * deltaY_factor(ell, w, dc))
            elif tr == 'T' and tc == 'N':
                g = gamma_factor(w, dc)
                M[ir][jc] = (DiffOp.mult(-4 * MU ** 2) * DiffOp.ddmu()
                             + DiffOp.mult(2 * MU * (n - 2 * k - 1) + MU ** 2 * g))
            elif tr == 'N' and tc == 'N':
                M[ir][jc] = DiffOp.mult(-MU * deltaY_factor(ell, w, dc))
    return MuPolyOperator(M, domain=slot_labels(cols), codomain=slot_labels(rows),
                          ell=ell)


def laplacian_blocks(bundle: ModeBundle, metric: MetricSpec):
    """(d delta, delta d, Laplacian) on Lambda^k, mode ell."""
    n, k, ell = bundle.n, bundle.k, bundle.ell
    _check_degree(n, k)
    cols = form_slots(n, k)
    r = len(cols)
    dd = MuPolyOperator(op_zeros(r, r), slot_labels(cols), slot_labels(cols), ell)
    if k - 1 >= 0 and form_slots(n, k - 1):
        dd = d_matrix(ModeBundle(n, k - 1, ell)).compose(delta_matrix(bundle, metric))
    sd = MuPolyOperator(op_zeros(r, r), slot_labels(cols), slot_labels(cols), ell)
    if k + 1 <= n and form_slots(n, k + 1):
        sd = delta_matrix(ModeBundle(n, k + 1, ell), metric).compose(d_matrix(bundle))
    return dd, sd, dd + sd


def wedge_dmu(n, k):
    """The operator of wedge product with dmu: Lambda^k -> Lambda^(k+1) slots."""
    cols = form_slots(n, k)
    rows = form_slots(n, k + 1) if k + 1 <= n else []
    M = op_zeros(len(rows), len(cols))
    for jc, (tc, dc) in enumerate(cols):
        for ir, (tr, dr) in enumerate(rows):
            if tc == 'T' and tr == 'N' and dr == dc:
                M[ir][jc] = DiffOp.mult(1)
    return MuPolyOperator(M, domain=slot_labels(cols), codomain=slot_labels(rows))


def warp_sqrt_expr(metric: MetricSpec):
    """sqrt(w) as an explicit expression, polynomial when w is a perfect square.

    The branch is chosen positive on (mu_left, mu_right).
    """
    w = metric.warp_poly()
    coeff, factors = sp.factor_list(w)
    root = sp.sqrt(coeff)
    rest = sp.S.One
    for base, exp in factors:
        root *= base ** (exp // 2)
        if exp % 2:
            rest *= base
    root = root * sp.sqrt(rest)
    root = sp.nsimplify(root, rational=False)
    probe = root.subs(MU, 0)
    if sp.re(sp.N(probe)) < 0:
        root = -root
    return sp.simplify(root)


def hodge_star(bundle: ModeBundle, metric: MetricSpec) -> MuPolyOperator:
    """Per-mode Hodge star Lambda^k -> Lambda^(n-k) for n = 2.

    Order-zero operator; coefficients carry sqrt(mu) and sqrt(w) factors from
    the volume form sqrt(w)/(2 mu^(3/2)) dmu^dtheta.
    """
    n, k, ell = bundle.n, bundle.k, bundle.ell
    _check_degree(n, k)
    if n != 2:
        raise UnsupportedDimension('hodge star implemented for n = 2')
    sw = warp_sqrt_expr(metric)
    x = sp.sqrt(MU)
    cols = form_slots(n, k)
    rows = form_slots(n, n - k)
    M = op_zeros(len(rows), len(cols))
    if k == 0:
        M[0][0] = DiffOp.mult(sw / (2 * MU * x))
    elif k == 2:
        M[0][0] = DiffOp.mult(2 * MU * x / sw)
    else:
        # *(a dtheta + b dmu) = (2 x sw b) dtheta - (a / (2 x sw)) dmu
        M[0][1] = DiffOp.mult(2 * x * sw)
        M[1][0] = DiffOp.mult(-1 / (2 * x * sw))
    return MuPolyOperator(M, domain=slot_labels(cols), codomain=slot_labels(rows),
                          ell=ell)


# ---------------------------------------------------------------------------
# ambient (cone) operators, with homogeneity bookkeeping
# ---------------------------------------------------------------------------

def ambient_slots(n, k):
    """Slots of Lambda^k on the cone in the basis dy, dmu^dy, (drho/rho)^dy,
    (drho/rho)^dmu^dy: tags (group, boundary degree)."""
    if n != 2:
        raise UnsupportedDimension('ambient slots mode-reduced for n = 2 only')
    out = []
    for grp, j in ((1, k), (2, k - 1), (3, k - 1), (4, k - 2)):
        if _lam_rank(j):
            out.append((grp, j))
    return out


def ambient_slot_labels(slots):
    names = {1: 'tangential', 2: 'normal', 3: 'rho-tangential', 4: 'rho-normal'}
    return tuple('%s-%d' % (names[g], j) for g, j in slots)


def _check_ambient_degree(n, k):
    if not (0 <= k <= n + 1):
        raise DegreeOutOfRange('ambient degree %d outside 0..%d' % (k, n + 1))


def ambient_d(k: int, ell: int, n: int = 2) -> MuPolyOperator:
    """Cone exterior derivative on degree k, rho-derivatives as the symbol s."""
    _check_ambient_degree(n, k)
    cols = ambient_slots(n, k)
    rows = ambient_slots(n, k + 1) if k + 1 <= n + 1 else []
    M = op_zeros(len(rows), len(cols))
    for jc, (gc, dc) in enumerate(cols):
        for ir, (gr, dr) in enumerate(rows):
            e = None
            if gr == 1 and gc == 1:
                e = DiffOp.mult(dY_factor(ell, dc))
            elif gr == 2 and gc == 1:
                e = DiffOp.ddmu()
            elif gr == 2 and gc == 2:
                e = DiffOp.mult(-dY_factor(ell, dc))
            elif gr == 3 and gc == 1:
                e = DiffOp.mult(S)
            elif gr == 3 and gc == 3:
                e = DiffOp.mult(-dY_factor(ell, dc))
            elif gr == 4 and gc == 2:
                e = DiffOp.mult(S)
            elif gr == 4 and gc == 3:
                e = -1 * DiffOp.ddmu()
            elif gr == 4 and gc == 4:
                e = DiffOp.mult(dY_factor(ell, dc))
            if e is not None:
                M[ir][jc] = e
    return MuPolyOperator(M, domain=ambient_slot_labels(cols),
                          codomain=ambient_slot_labels(rows), ell=ell)


def ambient_gram(k, metric: MetricSpec):
    """Fiber Gram matrix of the dual cone metric on degree-k slots.

    Returned with its rho-weight: the pair (weight, matrix), weight = -2k.
    """
    w = metric.warp_poly()
    slots = ambient_slots(metric.n, k)
    m = len(slots)
    G = sp.zeros(m, m)
    for i, (gi, ji) in enumerate(slots):
        for j, (gj, jj) in enumerate(slots):
            if gi == gj == 1:
                G[i, j] = (-1) ** ji * H_factor(w, ji)
            elif gi == gj == 2:
                G[i, j] = -4 * MU * (-1) ** ji * H_factor(w, ji)
            elif (gi, gj) in ((2, 3), (3, 2)):
                G[i, j] = 2 * (-1) ** ji * H_factor(w, ji)
            elif gi == gj == 4:
                G[i, j] = -4 * (-1) ** ji * H_factor(w, ji)
    return -2 * k, G


def _transpose_entry(e: DiffOp, kappa, n):
    """Formal transpose of an atomic cone-derivative entry against the
    density rho^n sqrt(det h): d/dmu -> -(d/dmu + kappa), s -> -(s + n + 1),
    i*ell -> -i*ell."""
    out = DiffOp.zero()
    if e.order >= 1:
        c1 = e.coeff(1)
        out = out + DiffOp.mult(c1) * (-1 * DiffOp.ddmu() + DiffOp.mult(-kappa))
    c0 = e.coeff(0)
    if c0 != 0:
        p = sp.Poly(c0, S)
        if p.degree() > 1:
            raise ValueError('unexpected s-degree in cone derivative')
        beta = p.coeff_monomial(S) if p.degree() >= 1 else sp.S.Zero
        alpha = p.coeff_monomial(1)
        out = out + DiffOp.mult(alpha.subs(sp.I, -sp.I))
        if beta != 0:
            out = out + DiffOp.mult(-beta.subs(sp.I, -sp.I) * (S + n + 1))
    return out


def ambient_delta(k: int, ell: int, ambient: AmbientMetric) -> MuPolyOperator:
    """Cone codifferential on degree k, assembled as Gram^{-1} d^T Gram.

    The transpose is taken against the cone density; the result is single
    rho-graded of weight -2, returned with weight folded into the meta field.
    """
    metric = ambient.base
    n = metric.n
    _check_ambient_degree(n, k)
    if k == 0:
        cols = ambient_slots(n, 0)
        return MuPolyOperator(op_zeros(0, len(cols)),
                              domain=ambient_slot_labels(cols), codomain=(), ell=ell)
    w = metric.warp_poly()
    kappa = sp.cancel(sp.diff(w, MU) / (2 * w))
    d_low = ambient_d(k - 1, ell, n)
    rows_d, cols_d = d_low.shape
    dT = op_zeros(cols_d, rows_d)
    for i in range(rows_d):
        for j in range(cols_d):
            dT[j][i] = _transpose_entry(d_low.mat[i][j], kappa, n)
    wk, Gk = ambient_gram(k, metric)
    wkm, Gkm = ambient_gram(k - 1, metric)
    term = Graded({-wkm: op_from_scalar(Gkm.inv())}) \
        * Graded({0: dT}) * Graded({wk: op_from_scalar(Gk)})
    weight, M = term.single()
    if weight != -2:
        raise ValueError('cone codifferential has unexpected homogeneity %s' % weight)
    return MuPolyOperator(M, domain=ambient_slot_labels(ambient_slots(n, k)),
                          codomain=ambient_slot_labels(ambient_slots(n, k - 1)),
                          ell=ell)


def op_from_scalar(Mat):
    from .opalg import op_from_scalar_matrix
    return op_from_scalar_matrix(Mat)


def ambient_box(k: int, ell: int, ambient: AmbientMetric):
    """rho^2 times the cone Hodge-d'Alembertian on degree k: a weight-zero
    matrix of operators polynomial in the homogeneity symbol s."""
    metric = ambient.base
    n = metric.n
    _check_ambient_degree(n, k)
    total = None
    if ambient_slots(n, k - 1):
        dlt = ambient_delta(k, ell, ambient)
        dl = ambient_d(k - 1, ell, n)
        part = Graded({0: dl.mat}) * Graded({-2: dlt.mat})
        total = part
    if k + 1 <= n + 1 and ambient_slots(n, k + 1):
        dlt = ambient_delta(k + 1, ell, ambient)
        dk = ambient_d(k, ell, n)
        part = Graded({-2: dlt.mat}) * Graded({0: dk.mat})
        total = part if total is None else total + part
    weight, M = total.single()
    if weight != -2:
        raise ValueError('cone box has unexpected homogeneity %s' % weight)
    # left-multiplying by rho^2 removes the weight without shifting s
    return MuPolyOperator(M, domain=ambient_slot_labels(ambient_slots(n, k)),
                          codomain=ambient_slot_labels(ambient_slots(n, k)),
                          ell=ell)


# ---------------------------------------------------------------------------
# b-structure helpers (divisibility diagnostics)
# ---------------------------------------------------------------------------

def b_coefficients(e: DiffOp):
    """Entry as [c0, c1, c2] with e = c0 + c1 (mu d/dmu) + c2 (mu d/dmu)^2."""
    return e.to_b_form()


def mu_divisible_in_b_form(op: MuPolyOperator):
    """True when every b-form coefficient of every entry carries a factor mu
    (no pole at mu = 0 after dividing by mu)."""
    for i, j, e in op.entries():
        if e.is_zero():
            continue
        for c in b_coefficients(e):
            if c == 0:
                continue
            q = sp.cancel(sp.together(c / MU))
            den = sp.denom(q)
            if sp.Poly(den, MU).eval(0) == 0:
                return False
    return True


def conjugate_by_F_power(op: MuPolyOperator, alpha) -> MuPolyOperator:
    """F^alpha o op o F^{-alpha} with F = sqrt(mu): mu-power conjugation by alpha/2."""
    a = sp.sympify(alpha) / 2
    M = [[e.conj_mu_power(a) for e in row] for row in op.mat]
    return MuPolyOperator(M, domain=op.domain, codomain=op.codomain, ell=op.ell)
