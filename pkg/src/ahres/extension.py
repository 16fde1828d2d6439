"""Construction of the extended operator family across the conformal boundary.

Two independent routes produce the same per-mode pencil P(sigma): the cone
route (Mellin transform of the weighted Hodge-d'Alembertian of the ambient
Lorentzian metric) and the conjugation route (weight- and wedge-conjugation
of the block spectral family built from surface exterior calculus).  Their
exact agreement is the pipeline's structural cross-check.

Conventions: P(sigma) = sum_{j,p} sigma^p A_{j,p}(mu) (d/dmu)^j acting on the
mode bundle of Lambda^k + Lambda^(k-1); coefficients are rational in mu with
denominators dividing a power of the warp, and the model part at mu = 0 is
4 d/dmu mu d/dmu - 4 i sigma d/dmu on every slot.
"""

import cmath
from dataclasses import dataclass

import sympy as sp

from .opalg import (DiffOp, II, MU, S, SIGMA, op_add, op_eye, op_matmul,
                    op_scale, op_shape, op_subs, op_zeros)
from .geometry import MetricSpec, ambient_metric
from .form_calculus import (DegreeOutOfRange, ModeBundle, MuPolyOperator,
                            ambient_box, ambient_slot_labels, ambient_slots,
                            d_matrix, delta_matrix, form_slots, hodge_star,
                            laplacian_blocks, slot_labels)


class NonPolynomialCoefficient(ValueError):
    """A pencil coefficient kept a denominator vanishing at or across mu = 0.

    The construction guarantees smooth coefficients across the boundary, so
    this always signals an assembly bug rather than bad input.
    """


class DegenerateTopCoefficient(ValueError):
    pass


# ---------------------------------------------------------------------------
# spectral parameter bookkeeping
# ---------------------------------------------------------------------------

def thresholds(n, k):
    """The two branch values ((n-2k-1)/2)^2 and ((n-2k+1)/2)^2 of lambda."""
    return ((n - 2 * k - 1) ** 2 / 4.0, (n - 2 * k + 1) ** 2 / 4.0)


@dataclass(frozen=True)
class SpectralParameter:
    """A point of the two-sheet spectral surface.

    sheet is a two-character tag: sign of the branch of
    sqrt(lambda - (n-2k-1)^2/4) giving sigma, then the sign of the companion
    root sqrt(lambda - (n-2k+1)^2/4) (kept as tau).
    """

    n: int
    k: int
    sigma: complex
    sigma_tilde: complex
    lam: complex
    sheet: str
    tau: complex
    branch_point: bool = False


def _branch_sign(value, principal):
    if abs(principal) < 1e-300:
        return '+'
    return '+' if abs(value - principal) <= abs(value + principal) else '-'


def sigma_lambda(n, k, sigma, tau_sheet='+'):
    """SpectralParameter from sigma; lambda = sigma^2 + ((n-2k-1)/2)^2."""
    sigma = complex(sigma)
    c1 = (n - 2 * k - 1) / 2.0
    lam = sigma * sigma + c1 * c1
    t1, t2 = thresholds(n, k)
    s_prin = cmath.sqrt(lam - t1)
    tau_prin = cmath.sqrt(lam - t2)
    tau = tau_prin if tau_sheet == '+' else -tau_prin
    sheet = _branch_sign(sigma, s_prin) + tau_sheet
    bp = abs(lam - t1) < 1e-300 or abs(lam - t2) < 1e-300
    return SpectralParameter(n=n, k=k, sigma=sigma,
                             sigma_tilde=sigma + 1j * (n - 2 * k - 1) / 2.0,
                             lam=lam, sheet=sheet, tau=tau, branch_point=bp)


def lambda_sigma(n, k, lam, sheet):
    """SpectralParameter from lambda and a two-sign sheet tag."""
    lam = complex(lam)
    if len(sheet) != 2 or any(c not in '+-' for c in sheet):
        raise ValueError("sheet must be two signs like '+-'")
    t1, t2 = thresholds(n, k)
    s_prin = cmath.sqrt(lam - t1)
    tau_prin = cmath.sqrt(lam - t2)
    sigma = s_prin if sheet[0] == '+' else -s_prin
    tau = tau_prin if sheet[1] == '+' else -tau_prin
    bp = abs(lam - t1) == 0 or abs(lam - t2) == 0
    return SpectralParameter(n=n, k=k, sigma=sigma,
                             sigma_tilde=sigma + 1j * (n - 2 * k - 1) / 2.0,
                             lam=lam, sheet=sheet, tau=tau, branch_point=bp)


# ---------------------------------------------------------------------------
# the pencil
# ---------------------------------------------------------------------------

@dataclass
class OperatorPencil:
    """Per-mode extended operator family, polynomial in sigma.

    mat[i][j] are DiffOp entries rational in mu and polynomial in the SIGMA
    symbol; domain is the extension interval.
    """

    bundle: ModeBundle
    mat: list
    mu_left: object
    mu_right: object
    metric: MetricSpec
    route: str = 'ambient'

    @property
    def rank(self):
        return len(self.mat)

    def sigma_degree(self):
        deg = 0
        for row in self.mat:
            for e in row:
                for c in e.c:
                    deg = max(deg, sp.Poly(sp.expand(sp.numer(sp.together(c))),
                                           SIGMA).degree())
        return deg

    def A(self, j, p):
        """Coefficient matrix A_{j,p}: sigma^p d/dmu^j part."""
        r = self.rank
        out = sp.zeros(r, r)
        for i in range(r):
            for l in range(r):
                c = self.mat[i][l].coeff(j)
                if c == 0:
                    continue
                num, den = sp.fraction(sp.cancel(sp.together(c)))
                p_num = sp.Poly(sp.expand(num), SIGMA)
                coeff = sp.S.Zero
                for (pw,), co in p_num.terms():
                    if pw == p:
                        coeff += co
                out[i, l] = sp.cancel(coeff / den)
        return out

    def sigma_part(self, p):
        """Matrix of DiffOp holding the sigma^p coefficient of the pencil."""
        r = self.rank
        out = op_zeros(r, r)
        for i in range(r):
            for l in range(r):
                e = self.mat[i][l]
                coeffs = []
                for c in e.c:
                    num, den = sp.fraction(sp.cancel(sp.together(c)))
                    pn = sp.Poly(sp.expand(num), SIGMA)
                    acc = sp.S.Zero
                    for (pw,), co in pn.terms():
                        if pw == p:
                            acc += co
                    coeffs.append(sp.cancel(acc / den))
                out[i][l] = DiffOp(coeffs)
        return out

    def at_sigma(self, sigma_value):
        """Matrix of DiffOp with sigma substituted (exact if rational given)."""
        return op_subs(self.mat, SIGMA, sp.sympify(sigma_value))

    def row_clear_multipliers(self):
        """Per-row minimal polynomial multipliers clearing all denominators."""
        mults = []
        for row in self.mat:
            L = sp.Poly(1, MU)
            for e in row:
                for c in e.c:
                    den = sp.denom(sp.cancel(sp.together(c)))
                    L = sp.lcm(L, sp.Poly(den, MU))
            mults.append(L.as_expr())
        return mults

    def to_json_dict(self):
        ents = []
        for i in range(self.rank):
            row = []
            for j in range(self.rank):
                per_order = []
                for o, c in enumerate(self.mat[i][j].c):
                    per_sigma = []
                    num, den = sp.fraction(sp.cancel(sp.together(c)))
                    pn = sp.Poly(sp.expand(num), SIGMA)
                    for p in range(pn.degree() + 1):
                        coeff = sp.S.Zero
                        for (pw,), co in pn.terms():
                            if pw == p:
                                coeff += co
                        if coeff == 0:
                            continue
                        per_sigma.append({
                            'sigma_power': p,
                            'num': _mu_poly_pairs(coeff),
                            'den': _mu_poly_pairs(den),
                        })
                    per_order.append({'dmu_order': o, 'terms': per_sigma})
                row.append(per_order)
            ents.append(row)
        return {
            'n': self.bundle.n, 'k': self.bundle.k, 'ell': self.bundle.ell,
            'rank': self.rank,
            'component_labels': list(self.bundle.component_labels),
            'mu_left': float(self.mu_left), 'mu_right': float(self.mu_right),
            'route': self.route,
            'entries': ents,
        }


def _mu_poly_pairs(expr):
    p = sp.Poly(sp.expand(expr), MU)
    out = []
    for c in reversed(p.all_coeffs()):
        re, im = sp.sympify(c).as_real_imag()
        out.append([float(re), float(im)])
    return out


def _validate_entries(mat, metric):
    """Reject denominators that vanish at mu = 0 or strictly inside the domain."""
    w = metric.warp_poly()
    for row in mat:
        for e in row:
            for c in e.c:
                den = sp.denom(sp.cancel(sp.together(c)))
                dp = sp.Poly(den, MU)
                if dp.degree() == 0:
                    continue
                if dp.eval(0) == 0:
                    raise NonPolynomialCoefficient(
                        'denominator %s vanishes at mu = 0' % den)
                rem = dp
                # denominators must divide a power of the warp
                wp = sp.Poly(w, MU)
                for _ in range(16):
                    if rem.degree() == 0:
                        break
                    g = sp.gcd(rem, wp)
                    if g.degree() == 0:
                        raise NonPolynomialCoefficient(
                            'denominator %s is not a divisor of a warp power' % den)
                    rem = sp.Poly(sp.cancel(rem.as_expr() / g.as_expr()), MU)
                else:
                    raise NonPolynomialCoefficient('denominator degree too high')


def _weight_constant(n, k):
    return sp.Rational(n - 2 * k - 1, 2)


def build_pencil_ambient(metric: MetricSpec, k: int, ell: int,
                         shifted: bool = True) -> OperatorPencil:
    """Pencil via the cone route: Mellin transform of the weighted
    d'Alembertian, homogeneity symbol s -> i sigma - (n-2k-1)/2.

    With shifted=False the plain Mellin family is returned (s -> i sigma,
    sigma then playing the unshifted dual variable).
    """
    amb = ambient_metric(metric)
    box = ambient_box(k, ell, amb)
    c = _weight_constant(metric.n, k)
    target = II * SIGMA - c if shifted else II * SIGMA
    mat = op_subs(box.mat, S, target)
    mat = [[DiffOp(e.c) for e in row] for row in mat]
    _validate_entries(mat, metric)
    return OperatorPencil(bundle=ModeBundle(metric.n, k, ell), mat=mat,
                          mu_left=metric.mu_left, mu_right=metric.mu_right,
                          metric=metric, route='ambient' if shifted else 'ambient-unshifted')


def _tilde_block(metric: MetricSpec, k: int, ell: int):
    """The conjugation-route block operator on Lambda^k + Lambda^(k-1) slots."""
    n = metric.n
    sl_k = form_slots(n, k)
    sl_m = form_slots(n, k - 1) if k >= 1 else []
    nk, nm = len(sl_k), len(sl_m)
    ntot = nk + nm
    c1 = _weight_constant(n, k)
    c2 = sp.Rational(n - 2 * k + 3, 2)
    T = op_zeros(ntot, ntot)
    _, _, Lk = laplacian_blocks(ModeBundle(n, k, ell), metric)
    for i in range(nk):
        for j in range(nk):
            T[i][j] = -1 * Lk.mat[i][j]
        T[i][i] = T[i][i] + DiffOp.mult(SIGMA ** 2 + c1 ** 2)
    if nm:
        _, _, Lm = laplacian_blocks(ModeBundle(n, k - 1, ell), metric)
        for i in range(nm):
            for j in range(nm):
                T[nk + i][nk + j] = -1 * Lm.mat[i][j]
            T[nk + i][nk + i] = T[nk + i][nk + i] + DiffOp.mult(SIGMA ** 2 + c2 ** 2)
        dkm = d_matrix(ModeBundle(n, k - 1, ell))
        for i in range(nk):
            for j in range(nm):
                T[i][nk + j] = -2 * dkm.mat[i][j]
        dlt = delta_matrix(ModeBundle(n, k, ell), metric)
        for i in range(nm):
            for j in range(nk):
                T[nk + i][j] = 2 * dlt.mat[i][j]
    return T, sl_k, sl_m


def _wedge_mix(sl_k, sl_m, sign):
    """I + sign/(2 mu) * (tangential (k-1)-slot into the matching normal k-slot)."""
    nk, nm = len(sl_k), len(sl_m)
    ntot = nk + nm
    J = op_eye(ntot)
    for j, (tm, dm) in enumerate(sl_m):
        if tm != 'T':
            continue
        for i, (tk, dk) in enumerate(sl_k):
            if tk == 'N' and dk == dm:
                J[i][nk + j] = DiffOp.mult(sp.Rational(sign) / (2 * MU))
    return J


def build_pencil_conjugated(metric: MetricSpec, k: int, ell: int) -> OperatorPencil:
    """Pencil via weight conjugation of the block spectral family.

    P = mu^(a-1) . Jl . T . Jr . mu^(-a) with a = (i sigma - (n-2k-1)/2)/2 and
    the wedge mixers Jl = I + E/(2 mu), Jr = I - E/(2 mu) fixed by
    u_T = v_T + (dF/F) ^ v_N.  A-priori rational coefficients must come out
    regular across mu = 0; anything else raises NonPolynomialCoefficient.
    """
    T, sl_k, sl_m = _tilde_block(metric, k, ell)
    Jl = _wedge_mix(sl_k, sl_m, +1)
    Jr = _wedge_mix(sl_k, sl_m, -1)
    M = op_matmul(op_matmul(Jl, T), Jr)
    a = (II * SIGMA - _weight_constant(metric.n, k)) / 2
    M = [[e.conj_mu_power(a) for e in row] for row in M]
    M = [[DiffOp.mult(1 / MU) * e for e in row] for row in M]
    _validate_entries(M, metric)
    return OperatorPencil(bundle=ModeBundle(metric.n, k, ell), mat=M,
                          mu_left=metric.mu_left, mu_right=metric.mu_right,
                          metric=metric, route='conjugated')


def pencils_equal(P: OperatorPencil, Q: OperatorPencil) -> bool:
    """Exact entrywise equality of two pencils as rational data."""
    if P.rank != Q.rank:
        return False
    for i in range(P.rank):
        for j in range(P.rank):
            d = P.mat[i][j] - Q.mat[i][j]
            for c in d.c:
                if sp.cancel(sp.expand(sp.together(c))) != 0:
                    return False
    return True


# ---------------------------------------------------------------------------
# structure checks
# ---------------------------------------------------------------------------

def model_structure_report(P: OperatorPencil):
    """Check the boundary model 4 d/dmu mu d/dmu - 4 i sigma d/dmu per slot."""
    r = P.rank
    A20 = P.A(2, 0)
    A20_at0 = A20.subs(MU, 0)
    dA20_at0 = sp.diff(A20, MU).subs(MU, 0)
    A11_at0 = P.A(1, 1).subs(MU, 0)
    A10_at0 = P.A(1, 0).subs(MU, 0)
    eye = sp.eye(r)
    checks = {
        'A20_vanishes_at_0': sp.simplify(A20_at0) == sp.zeros(r, r),
        'dA20_is_4I': sp.simplify(dA20_at0 - 4 * eye) == sp.zeros(r, r),
        'A11_is_m4i': sp.simplify(A11_at0 + 4 * II * eye) == sp.zeros(r, r),
        'A10_is_4I': sp.simplify(A10_at0 - 4 * eye) == sp.zeros(r, r),
        'A2p_vanish_p_ge_1': all(
            sp.simplify(P.A(2, p)) == sp.zeros(r, r) for p in (1, 2)),
    }
    return checks


def indicial_roots(P: OperatorPencil, sigma):
    """Multiset of indicial roots of the pencil at mu = 0 for given sigma.

    The leading behavior is governed by d/dmu(A_{2,0})(0) a(a-1) + A_1(0) a;
    for a healthy pencil this is 4 a (a - i sigma) per slot.
    """
    r = P.rank
    top = sp.diff(P.A(2, 0), MU).subs(MU, 0)
    if sp.simplify(top.det()) == 0:
        raise DegenerateTopCoefficient('d/dmu A_{2,0}(0) is singular')
    A1 = (P.A(1, 0) + SIGMA * P.A(1, 1) + SIGMA ** 2 * P.A(1, 2)).subs(MU, 0)
    # indicial matrix: top * a(a-1) + A1 * a = a * (top*(a-1) + A1);
    # roots are 0 (once per slot) plus the a with top*(a-1) + A1 singular,
    # i.e. a = 1 - eig(top^{-1} A1).
    import numpy as np
    s = complex(sigma)
    top_n = np.array([[complex(sp.N(top[i, j])) for j in range(r)]
                      for i in range(r)])
    A1_n = np.array([[complex(sp.N(A1[i, j].subs(SIGMA, sp.sympify(s))))
                      for j in range(r)] for i in range(r)])
    eigs = np.linalg.eigvals(np.linalg.solve(top_n, A1_n))
    roots = [0j] * r + [complex(1 - e) for e in eigs]
    return sorted(roots, key=lambda z: (round(z.real, 9), round(z.imag, 9)))


@dataclass
class SmoothnessEntry:
    slot_row: int
    slot_col: int
    dmu_order: int
    numer_degree: int
    denom_degree: int
    max_abs_coeff: float
    polynomial: bool
    flagged: bool


def smoothness_report(P: OperatorPencil):
    """Per-entry coefficient diagnostics.

    An entry is flagged when its denominator vanishes at mu = 0 or anywhere
    in [mu_left, mu_right); a warp-power denominator vanishing only at the
    polar endpoint is the expected shape and is not flagged.
    """
    out = []
    for i in range(P.rank):
        for j in range(P.rank):
            for o, c in enumerate(P.mat[i][j].c):
                c = sp.cancel(sp.together(c))
                if c == 0:
                    continue
                num, den = sp.fraction(c)
                pnum = sp.Poly(sp.expand(num), MU, SIGMA)
                pden = sp.Poly(sp.expand(den), MU)
                flagged = False
                if pden.degree() > 0:
                    if pden.eval(0) == 0:
                        flagged = True
                    else:
                        lo = sp.Rational(P.mu_left.numerator, P.mu_left.denominator)
                        hi = sp.Rational(P.mu_right.numerator, P.mu_right.denominator)
                        nroots = pden.count_roots(lo, hi)
                        if pden.eval(hi) == 0:
                            nroots -= pden.count_roots(hi, hi)
                        if nroots > 0:
                            flagged = True
                maxc = max(abs(complex(sp.N(co))) for co in pnum.coeffs())
                out.append(SmoothnessEntry(
                    slot_row=i, slot_col=j, dmu_order=o,
                    numer_degree=pnum.degree(MU), denom_degree=pden.degree(),
                    max_abs_coeff=float(maxc),
                    polynomial=pden.degree() == 0,
                    flagged=flagged))
    return out


# ---------------------------------------------------------------------------
# duality intertwiners
# ---------------------------------------------------------------------------

def _conjugate_map(op_mat, k_from, k_to, n, conj_offset):
    """Conjugate a block-level map into pencil variables.

    With a = (i sigma - c(k_from))/2 and b = a + conj_offset, returns
    mu^(a' - a) . mu^b . Jl(k_to) . op . Jr(k_from) . mu^(-b), where
    a' = (i sigma - c(k_to))/2; the i sigma parts cancel in the power
    prefactor, leaving polynomial sigma dependence in the entries.
    """
    slk_to = form_slots(n, k_to)
    slm_to = form_slots(n, k_to - 1) if k_to >= 1 else []
    slk_from = form_slots(n, k_from)
    slm_from = form_slots(n, k_from - 1) if k_from >= 1 else []
    Jl = _wedge_mix(slk_to, slm_to, +1)
    Jr = _wedge_mix(slk_from, slm_from, -1)
    M = op_matmul(op_matmul(Jl, op_mat), Jr)
    c_from = _weight_constant(n, k_from)
    c_to = _weight_constant(n, k_to)
    a = (II * SIGMA - c_from) / 2
    b = a + conj_offset
    shift = sp.cancel((c_from - c_to) / sp.S(2))
    M = [[e.conj_mu_power(b) for e in row] for row in M]
    M = [[DiffOp.mult(MU ** shift) * e for e in row] for row in M]
    return M


def star_intertwining_pair(metric: MetricSpec, k_from: int, ell: int):
    """Explicit maps (Sl, Sr) with Sl . P_{k_from} = P_{n-k_from} . Sr.

    Realizes the degree duality at pencil level through the clean-branch
    embeddings (exterior derivative into the normal summand for k = 0 -> 2
    and the codifferential projection for the reverse).  Both maps have
    regular rational entries and the identity is exact in sigma and mu;
    kernel vectors of P_{k_from} map to kernel vectors of P_{n-k_from}
    through Sr.
    """
    n = metric.n
    k_to = n - k_from
    if n != 2 or (k_from, k_to) not in ((0, 2), (2, 0)):
        raise DegreeOutOfRange('duality pair implemented for k in {0, 2}, n = 2')
    if k_from == 0:
        # block-level: phi -> (0 in Lambda^2 slots, d phi in Lambda^1 slots)
        d0 = d_matrix(ModeBundle(n, 0, ell))
        sl2 = form_slots(n, 2)
        block = op_zeros(len(sl2) + len(form_slots(n, 1)), 1)
        for i in range(d0.shape[0]):
            block[len(sl2) + i][0] = d0.mat[i][0]
    else:
        # block-level: (v_T, v_N) -> delta_1 v_N
        dl = delta_matrix(ModeBundle(n, 1, ell), metric)
        sl2 = form_slots(n, 2)
        block = op_zeros(1, len(sl2) + len(form_slots(n, 1)))
        for j in range(dl.shape[1]):
            block[0][len(sl2) + j] = dl.mat[0][j]
    Sl = _conjugate_map(block, k_from, k_to, n, conj_offset=-1)
    Sr = _conjugate_map(block, k_from, k_to, n, conj_offset=0)
    return Sl, Sr, k_to


def intertwining_defect(metric: MetricSpec, k_from: int, ell: int):
    """Max residual entry of Sl . P_{k_from} - P_{n-k_from} . Sr (exact)."""
    Sl, Sr, k_to = star_intertwining_pair(metric, k_from, ell)
    P_from = build_pencil_ambient(metric, k_from, ell)
    P_to = build_pencil_ambient(metric, k_to, ell)
    left = op_matmul(Sl, P_from.mat)
    right = op_matmul(P_to.mat, Sr)
    worst = sp.S.Zero
    ok = True
    for i in range(len(left)):
        for j in range(len(left[0])):
            d = left[i][j] - right[i][j]
            for c in d.c:
                if sp.cancel(sp.expand(sp.together(c))) != 0:
                    ok = False
                    worst = c
    return ok, worst
