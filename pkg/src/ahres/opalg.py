"""Exact algebra of ordinary differential operators in mu.

Operators are polynomials in d/dmu with coefficients that are sympy
expressions in mu (rational functions, possibly carrying sqrt(mu) factors
for Hodge-star work), the spectral parameter sigma, and the homogeneity
symbol s standing for rho*d/drho.  Everything is exact; no floats enter
at this layer.
"""

import sympy as sp

MU = sp.Symbol('mu')
SIGMA = sp.Symbol('sigma')
S = sp.Symbol('s')      # homogeneity symbol, rho * d/drho
X = sp.Symbol('x')      # x = sqrt(mu), used only for radical-free checks

II = sp.I


def _canc(e):
    return sp.cancel(sp.together(sp.sympify(e)))


class DiffOp:
    """sum_j c_j(mu, sigma, s) * (d/dmu)^j with exact sympy coefficients."""

    __slots__ = ('c',)

    def __init__(self, coeffs):
        c = [_canc(x) for x in coeffs]
        while c and c[-1] == 0:
            c.pop()
        self.c = c

    # -- constructors ------------------------------------------------
    @classmethod
    def zero(cls):
        return cls([])

    @classmethod
    def mult(cls, f):
        return cls([f])

    @classmethod
    def ddmu(cls):
        return cls([0, 1])

    # -- queries -----------------------------------------------------
    @property
    def order(self):
        return len(self.c) - 1 if self.c else -1

    def is_zero(self):
        return not self.c

    def coeff(self, j):
        return self.c[j] if j < len(self.c) else sp.S.Zero

    # -- algebra -----------------------------------------------------
    def __add__(self, o):
        n = max(len(self.c), len(o.c))
        a = self.c + [sp.S.Zero] * (n - len(self.c))
        b = o.c + [sp.S.Zero] * (n - len(o.c))
        return DiffOp([x + y for x, y in zip(a, b)])

    def __sub__(self, o):
        return self + (-1) * o

    def __rmul__(self, scalar):
        return DiffOp([sp.sympify(scalar) * x for x in self.c])

    def __mul__(self, o):
        """Operator composition self after o (Leibniz rule)."""
        if not isinstance(o, DiffOp):
            return DiffOp([x * sp.sympify(o) for x in self.c])
        out = {}
        for i, a in enumerate(self.c):
            if a == 0:
                continue
            for j, b in enumerate(o.c):
                if b == 0:
                    continue
                for m in range(i + 1):
                    co = sp.binomial(i, m) * sp.diff(b, MU, m)
                    if co == 0:
                        continue
                    k = i - m + j
                    out[k] = out.get(k, sp.S.Zero) + a * co
        n = max(out) + 1 if out else 0
        return DiffOp([out.get(k, sp.S.Zero) for k in range(n)])

    def subs(self, *args):
        return DiffOp([sp.sympify(x).subs(*args) for x in self.c])

    def conj_mu_power(self, a):
        """mu^a o self o mu^(-a); replaces d/dmu by d/dmu - a/mu."""
        D = DiffOp([-sp.sympify(a) / MU, 1])
        out = DiffOp.zero()
        pw = DiffOp([1])
        for j, cj in enumerate(self.c):
            if j > 0:
                pw = pw * D
            if cj != 0:
                out = out + DiffOp.mult(cj) * pw
        return out

    def apply_sym(self, f):
        """Apply to a sympy expression in MU."""
        r = sp.S.Zero
        for j, cj in enumerate(self.c):
            r += cj * sp.diff(f, MU, j)
        return r

    def to_b_form(self):
        """Coefficients [b_0, b_1, b_2, ...] with self = sum b_j (mu d/dmu)^j.

        Exact rewriting; only defined for order <= 2, which covers every
        operator in this package.
        """
        if self.order > 2:
            raise ValueError('b-form rewriting implemented for order <= 2')
        c0, c1, c2 = (self.coeff(j) for j in range(3))
        # (mu D)^2 = mu^2 D^2 + mu D  =>  mu^2 D^2 = (mu D)^2 - (mu D)
        b2 = _canc(c2 / MU ** 2)
        b1 = _canc(c1 / MU - b2)
        return [c0, b1, b2]

    def __eq__(self, o):
        if not isinstance(o, DiffOp):
            return NotImplemented
        d = self - o
        return all(sp.simplify(x) == 0 for x in d.c)

    def __hash__(self):
        raise TypeError('DiffOp is not hashable')

    def __repr__(self):
        if not self.c:
            return 'DiffOp<0>'
        parts = ['(%s)*D^%d' % (sp.sstr(c), j) for j, c in enumerate(self.c) if c != 0]
        return 'DiffOp<%s>' % ' + '.join(parts)


# ---------------------------------------------------------------------------
# matrices of DiffOp
# ---------------------------------------------------------------------------

def op_zeros(r, c):
    return [[DiffOp.zero() for _ in range(c)] for _ in range(r)]


def op_eye(r):
    M = op_zeros(r, r)
    for i in range(r):
        M[i][i] = DiffOp.mult(1)
    return M


def op_shape(A):
    return (len(A), len(A[0]) if A else 0)


def op_add(A, B):
    return [[A[i][j] + B[i][j] for j in range(len(A[0]))] for i in range(len(A))]


def op_sub(A, B):
    return [[A[i][j] - B[i][j] for j in range(len(A[0]))] for i in range(len(A))]


def op_scale(A, f):
    return [[f * A[i][j] for j in range(len(A[0]))] for i in range(len(A))]


def op_matmul(A, B):
    rA, cA = op_shape(A)
    rB, cB = op_shape(B)
    if cA != rB:
        raise ValueError('operator matrix shape mismatch: %s x %s' % ((rA, cA), (rB, cB)))
    out = op_zeros(rA, cB)
    for i in range(rA):
        for j in range(cB):
            acc = DiffOp.zero()
            for k in range(cA):
                if not A[i][k].is_zero() and not B[k][j].is_zero():
                    acc = acc + A[i][k] * B[k][j]
            out[i][j] = acc
    return out


def op_subs(A, *args):
    return [[e.subs(*args) for e in row] for row in A]


def op_from_scalar_matrix(M):
    """Matrix of multiplication operators from a sympy Matrix."""
    r, c = M.shape
    out = op_zeros(r, c)
    for i in range(r):
        for j in range(c):
            if M[i, j] != 0:
                out[i][j] = DiffOp.mult(M[i, j])
    return out


def op_is_zero(A):
    return all(e.is_zero() or all(sp.simplify(x) == 0 for x in e.c)
               for row in A for e in row)


def op_apply_sym(A, fs):
    """Apply an operator matrix to a list of sympy expressions."""
    r, c = op_shape(A)
    if len(fs) != c:
        raise ValueError('length mismatch')
    return [sp.expand(sum((A[i][j].apply_sym(fs[j]) for j in range(c)), sp.S.Zero))
            for i in range(r)]


class Graded:
    """rho-graded operator: {weight w: matrix of DiffOp}, entries polynomial in S.

    A term (w, E(s)) acts as u -> rho^w E(rho d/drho) u on sections whose
    coefficients depend on (rho, mu).  Composition shifts the homogeneity
    symbol: (w1, E1) o (w2, E2) = (w1+w2, E1(s+w2) E2(s)).
    """

    def __init__(self, parts):
        self.parts = {w: M for w, M in parts.items() if not op_is_trivial(M)}

    def __mul__(self, o):
        out = {}
        for w1, M1 in self.parts.items():
            for w2, M2 in o.parts.items():
                P = op_matmul(op_subs(M1, S, S + w2), M2)
                w = w1 + w2
                out[w] = op_add(out[w], P) if w in out else P
        return Graded(out)

    def __add__(self, o):
        out = dict(self.parts)
        for w, M in o.parts.items():
            out[w] = op_add(out[w], M) if w in out else M
        return Graded(out)

    def single(self):
        """The unique (weight, matrix) part; raises if not single-graded."""
        if len(self.parts) != 1:
            raise ValueError('operator is not single-graded: weights %s'
                             % sorted(self.parts))
        return next(iter(self.parts.items()))


def op_is_trivial(M):
    return all(e.is_zero() for row in M for e in row)
