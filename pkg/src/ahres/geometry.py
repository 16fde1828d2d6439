"""Warped-product metrics on even asymptotically hyperbolic surfaces.

A metric g = (dx^2 + w(x^2) dtheta^2) / x^2 is stored through the warp
polynomial w in the even coordinate mu = x^2, together with the extension
interval [mu_left, mu_right] across the conformal boundary mu = 0.  The warp
is kept as exact rational coefficients so that evenness and smoothness across
mu = 0 are structural facts, and the same polynomial continues the boundary
metric to mu < 0.
"""

from dataclasses import dataclass
from fractions import Fraction

import sympy as sp

from .opalg import MU

EXACT_HYPERBOLIC = 'exact-hyperbolic'
PERTURBED = 'perturbed'

DEFAULT_MU_LEFT = Fraction(-1, 2)


class GeometryError(ValueError):
    pass


class NonPositiveBoundaryMetric(GeometryError):
    """w(0) <= 0: the conformal boundary metric degenerates."""


class NonSimpleInteriorZero(GeometryError):
    """w vanishes at mu_right with the wrong multiplicity for a polar cap.

    A smooth polar point needs sqrt(w) to vanish simply, i.e. w must have a
    zero of multiplicity exactly two at mu_right.
    """


class InteriorSignChange(GeometryError):
    """w <= 0 somewhere strictly inside (mu_left, mu_right)."""


class UnsupportedDimension(GeometryError):
    """Operation only implemented for two-dimensional X."""


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, sp.Rational):
        return Fraction(int(x.p), int(x.q))
    raise GeometryError('warp coefficients must be rational numbers, got %r' % (x,))


@dataclass(frozen=True)
class MetricSpec:
    """An even asymptotically hyperbolic warped-product metric.

    warp holds the coefficients of w in the monomial basis of mu; mu_left < 0
    is the extension depth across the boundary and mu_right > 0 the interior
    endpoint (the polar value where w vanishes, for capped metrics).
    """

    n: int
    warp: tuple
    mu_left: Fraction
    mu_right: Fraction
    kind: str

    def warp_poly(self):
        """The warp as a sympy polynomial in mu."""
        return sp.Poly([sp.Rational(c.numerator, c.denominator)
                        for c in reversed(self.warp)], MU).as_expr()

    def warp_eval(self, mu):
        acc = Fraction(0)
        for c in reversed(self.warp):
            acc = acc * Fraction(mu) + c
        return acc

    def has_polar_cap(self):
        return self.warp_eval(self.mu_right) == 0

    def to_json_dict(self):
        return {
            'n': self.n,
            'warp': [float(c) for c in self.warp],
            'mu_left': float(self.mu_left),
            'mu_right': float(self.mu_right),
            'kind': self.kind,
        }

    @classmethod
    def from_json_dict(cls, d):
        return make_metric(int(d['n']), [_as_fraction(c) for c in d['warp']],
                           _as_fraction(d['mu_left']), _as_fraction(d['mu_right']),
                           d['kind'])


def warp_exact_hyperbolic(n: int):
    """Warp coefficients of exact hyperbolic space in the normal form
    relative to the round boundary metric: w(mu) = (1 - mu/4)^2."""
    if n < 2:
        raise GeometryError('dimension must be at least 2')
    return [Fraction(1), Fraction(-1, 2), Fraction(1, 16)]


def _warp_as_poly(warp):
    return sp.Poly([sp.Rational(c.numerator, c.denominator) for c in reversed(warp)], MU)


def _count_open_interval_roots(warp, lo, hi):
    """Number of real roots of the warp strictly inside (lo, hi), exactly."""
    p = _warp_as_poly(warp)
    if p.degree() <= 0:
        return 0
    lo_q = sp.Rational(lo.numerator, lo.denominator)
    hi_q = sp.Rational(hi.numerator, hi.denominator)
    n_closed = p.count_roots(lo_q, hi_q)
    if p.eval(lo_q) == 0:
        n_closed -= 1
    if p.eval(hi_q) == 0:
        n_closed -= 1
    return n_closed


def make_metric(n, warp, mu_left, mu_right, kind):
    """Validate and build a MetricSpec.

    Rejects warps whose boundary value is non-positive, warps vanishing
    strictly inside the interval, and polar-cap zeros of the wrong
    multiplicity (a smooth cap needs w ~ (mu_right - mu)^2).
    """
    if n < 2:
        raise GeometryError('dimension must be at least 2')
    if kind not in (EXACT_HYPERBOLIC, PERTURBED):
        raise GeometryError('unknown metric kind %r' % (kind,))
    warp = tuple(_as_fraction(c) for c in warp)
    while len(warp) > 1 and warp[-1] == 0:
        warp = warp[:-1]
    mu_left = _as_fraction(mu_left)
    mu_right = _as_fraction(mu_right)
    if not (mu_left < 0 < mu_right):
        raise GeometryError('need mu_left < 0 < mu_right')
    spec = MetricSpec(n=n, warp=warp, mu_left=mu_left, mu_right=mu_right, kind=kind)
    if spec.warp_eval(0) <= 0:
        raise NonPositiveBoundaryMetric('w(0) = %s <= 0' % spec.warp_eval(0))
    if _count_open_interval_roots(warp, mu_left, mu_right):
        raise InteriorSignChange('warp vanishes strictly inside (mu_left, mu_right)')
    w_right = spec.warp_eval(mu_right)
    if w_right < 0:
        raise InteriorSignChange('warp negative at mu_right')
    if w_right == 0:
        mult = _zero_multiplicity(warp, mu_right)
        if mult != 2:
            raise NonSimpleInteriorZero(
                'warp vanishes to order %d at mu_right; a smooth polar cap '
                'needs order exactly 2' % mult)
    if kind == EXACT_HYPERBOLIC and n == 2:
        if warp != tuple(warp_exact_hyperbolic(n)):
            raise GeometryError('exact-hyperbolic kind requires w = (1 - mu/4)^2')
    return spec


def _zero_multiplicity(warp, at):
    p = sp.Poly([sp.Rational(c.numerator, c.denominator) for c in reversed(warp)], MU)
    a = sp.Rational(at.numerator, at.denominator)
    m = 0
    while p.degree() >= 0 and p.eval(a) == 0:
        p = p.diff()
        m += 1
        if p.degree() < 0:
            break
    return m


# ---------------------------------------------------------------------------
# Gauss curvature oracle
# ---------------------------------------------------------------------------

def gauss_curvature_expr(metric: MetricSpec):
    """Symbolic Gauss curvature of (dx^2 + w(x^2) dtheta^2)/x^2 in mu = x^2.

    In mu the metric is diagonal, g = E dmu^2 + G dtheta^2 with
    E = 1/(4 mu^2), G = w/mu, and for a metric depending on mu only
    K = -(1/(2 sqrt(EG))) d/dmu (G' / sqrt(EG)).
    """
    if metric.n != 2:
        raise UnsupportedDimension('Gauss curvature defined for n = 2 only')
    w = metric.warp_poly()
    E = 1 / (4 * MU ** 2)
    G = w / MU
    sEG = sp.sqrt(E * G)
    K = -sp.diff(sp.diff(G, MU) / sEG, MU) / (2 * sEG)
    return sp.simplify(K)


def curvature_check(metric: MetricSpec, samples):
    """Max over samples of |K(mu) + 1|; empty sample set gives 0."""
    if metric.n != 2:
        raise UnsupportedDimension('curvature check requires n = 2')
    samples = list(samples)
    if not samples:
        return 0.0
    for m in samples:
        if not (0 < m < metric.mu_right):
            raise GeometryError('samples must lie in (0, mu_right)')
    K = gauss_curvature_expr(metric)
    f = sp.lambdify(MU, K + 1, 'mpmath')
    return float(max(abs(f(m)) for m in samples))


# ---------------------------------------------------------------------------
# ambient Lorentzian metric
# ---------------------------------------------------------------------------

RHO = sp.Symbol('rho', positive=True)


@dataclass(frozen=True)
class AmbientMetric:
    """The homogeneous Lorentzian cone metric over the extended surface.

    components/dual are 3x3 sympy matrices in the coordinates
    (rho, mu, theta); density is the metric density expression.
    """

    base: MetricSpec
    components: sp.Matrix
    dual: sp.Matrix
    density: sp.Expr


def ambient_metric(metric: MetricSpec) -> AmbientMetric:
    """Build the ambient cone metric, its dual, and density for n = 2.

    g~ = rho^2 ( mu drho^2/rho^2 + (drho/rho dmu + dmu drho/rho)/2 - w dtheta^2 ),
    with the boundary metric continued across mu = 0 by the same polynomial.
    """
    if metric.n != 2:
        raise UnsupportedDimension('ambient metric assembled for n = 2 only')
    w = metric.warp_poly()
    # coordinate order (rho, mu, theta)
    g = sp.Matrix([
        [MU, RHO / 2, 0],
        [RHO / 2, 0, 0],
        [0, 0, -RHO ** 2 * w],
    ])
    G = sp.Matrix([
        [0, 2 / RHO, 0],
        [2 / RHO, -4 * MU / RHO ** 2, 0],
        [0, 0, -1 / (RHO ** 2 * w)],
    ])
    density = RHO ** metric.n / 2 * sp.sqrt(w)
    return AmbientMetric(base=metric, components=g, dual=G, density=density)
