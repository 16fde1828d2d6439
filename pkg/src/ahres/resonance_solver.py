"""Quadratic-pencil eigenvalue sweeps, refinement and spurious filtering.

Resonances are characteristic values of the collocated pencil.  Raw
candidates come from a companion linearization; each is polished by a
Newton iteration on the smallest singular value and then validated by
matching against a doubled-resolution solve.  Only matched results are
flagged stable.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .geometry import MetricSpec
from .extension import OperatorPencil, build_pencil_ambient, sigma_lambda, thresholds
from .discretize import AbsorberSpec, DiscretePencil, chebyshev_grid, assemble


class SingularLeadingCoefficient(RuntimeError):
    pass


BRANCH_POINT_MARGIN = 1e-3
STABLE_RESIDUAL = 1e-8
STABLE_DISTANCE = 1e-6


@dataclass(frozen=True)
class Window:
    """Search region {|sigma| <= radius, Im sigma >= im_min}.

    The margin keeps resonances sitting exactly on the window boundary from
    flickering in and out between resolutions.
    """

    radius: float = 6.0
    im_min: float = -2.5
    margin: float = 1e-6

    def contains(self, s):
        return (abs(s) <= self.radius + self.margin
                and s.imag >= self.im_min - self.margin)

    def __str__(self):
        return '|sigma|<=%g,im>=%g' % (self.radius, self.im_min)

    @classmethod
    def parse(cls, text):
        radius, im_min = 6.0, -2.5
        for part in text.split(','):
            part = part.strip().lower().replace(' ', '')
            if part.startswith('|sigma|<='):
                radius = float(part[len('|sigma|<='):])
            elif part.startswith('im>='):
                im_min = float(part[len('im>='):])
            elif part:
                raise ValueError('cannot parse window clause %r' % part)
        return cls(radius=radius, im_min=im_min)


@dataclass
class ResonanceResult:
    sigma: complex
    lam: complex
    k: int
    ell: int
    residual: float
    stability: float
    residue_rank: int
    flags: tuple = ()

    @property
    def stable(self):
        return 'stable' in self.flags

    def row(self):
        return {
            'k': self.k, 'ell': self.ell,
            're_sigma': self.sigma.real, 'im_sigma': self.sigma.imag,
            're_lambda': self.lam.real, 'im_lambda': self.lam.imag,
            'residual': self.residual, 'stability': self.stability,
            'residue_rank': self.residue_rank,
            'flags': '+'.join(self.flags),
        }


def _threshold_sigmas(n, k):
    """Images of the two lambda thresholds in the sigma coordinate."""
    t1, t2 = thresholds(n, k)
    out = [0j]
    d = t2 - t1
    r = math.sqrt(abs(d))
    out += [r + 0j, -r + 0j] if d >= 0 else [1j * r, -1j * r]
    return out


def _branch_point_near(n, k, s):
    return any(abs(s - t) < BRANCH_POINT_MARGIN for t in _threshold_sigmas(n, k))


def solve_pencil(dp: DiscretePencil, window: Window):
    """All companion-linearization eigenvalues inside the window (unrefined)."""
    n = dp.size
    if np.abs(dp.P2).max() == 0.0:
        if np.abs(dp.P1).max() == 0.0:
            raise SingularLeadingCoefficient('pencil has no sigma dependence')
        ev = sla.eig(-dp.P0, dp.P1, right=False)
    else:
        A = np.block([[np.zeros((n, n)), np.eye(n)], [-dp.P0, -dp.P1]])
        B = np.block([[np.eye(n), np.zeros((n, n))], [np.zeros((n, n)), dp.P2]])
        ev = sla.eig(A, B, right=False)
    ev = ev[np.isfinite(ev)]
    out = [complex(s) for s in ev if window.contains(complex(s))]
    out.sort(key=lambda s: (-s.imag, s.real))
    return out


def pencil_residual(dp: DiscretePencil, s):
    """Smallest singular value of P(s) over its largest."""
    sv = sla.svdvals(dp.at_sigma(s))
    return float(sv[-1] / sv[0])


def refine(dp: DiscretePencil, sigma0, max_iter=50, step_tol=1e-12,
           trust_radius=None):
    """Newton polish of a candidate along the minimal singular pair.

    Returns (sigma, residual, converged); a failed iteration reports the
    best point seen with converged False rather than raising.
    """
    s = complex(sigma0)
    best = (s, pencil_residual(dp, s))
    converged = False
    for _ in range(max_iter):
        M = dp.at_sigma(s)
        U, sv, Vh = sla.svd(M)
        u = U[:, -1]
        v = Vh[-1, :].conj()
        num = u.conj() @ (M @ v)
        dP = dp.P1 + 2 * s * dp.P2
        den = u.conj() @ (dP @ v)
        if abs(den) == 0.0:
            break
        step = num / den
        s = s - step
        if trust_radius is not None and abs(s - complex(sigma0)) > trust_radius:
            return best[0], best[1], False
        r = float(sv[-1] / sv[0])
        if r < best[1]:
            best = (s, r)
        if abs(step) < step_tol or r < 1e-13:
            converged = True
            break
    res = pencil_residual(dp, s)
    if res < best[1]:
        best = (s, res)
    return best[0], best[1], converged


def filter_spurious(coarse, fine, tol=STABLE_DISTANCE):
    """Greedy nearest-neighbour matching of two resolution runs.

    coarse and fine are lists of ResonanceResult and complex values
    respectively; matched results gain the stable flag with stability set to
    the match distance, unmatched ones are flagged spurious.
    """
    pairs = []
    for i, r in enumerate(coarse):
        for j, s in enumerate(fine):
            pairs.append((abs(r.sigma - s), i, j))
    pairs.sort(key=lambda t: t[0])
    used_c, used_f = set(), set()
    dist = {}
    for d, i, j in pairs:
        if i in used_c or j in used_f:
            continue
        if d >= tol:
            break
        used_c.add(i)
        used_f.add(j)
        dist[i] = d
    out = []
    for i, r in enumerate(coarse):
        flags = [f for f in r.flags if f not in ('stable', 'spurious')]
        if i in dist and r.residual < STABLE_RESIDUAL:
            flags.append('stable')
            r = ResonanceResult(sigma=r.sigma, lam=r.lam, k=r.k, ell=r.ell,
                                residual=r.residual, stability=dist[i],
                                residue_rank=r.residue_rank,
                                flags=tuple(flags))
        else:
            flags.append('spurious')
            r = ResonanceResult(sigma=r.sigma, lam=r.lam, k=r.k, ell=r.ell,
                                residual=r.residual, stability=float('inf'),
                                residue_rank=r.residue_rank,
                                flags=tuple(flags))
        out.append(r)
    return out


def residue_rank(dp: DiscretePencil, sigma_star, rel_tol=1e-8):
    """Near-kernel dimension of P(sigma*): singular values below
    rel_tol times the largest."""
    sv = sla.svdvals(dp.at_sigma(sigma_star))
    return int(np.sum(sv < rel_tol * sv[0]))


@dataclass(frozen=True)
class SweepConfig:
    N: int = 64
    absorber: str = 'none'          # none | zeroth | second
    strength: float = 1.0
    delta1: float = None            # default: depth / 5
    tol: float = STABLE_DISTANCE
    keep_spurious: bool = False


def _make_absorber(metric: MetricSpec, cfg: SweepConfig):
    if cfg.absorber == 'none':
        return None
    delta1 = cfg.delta1 if cfg.delta1 is not None else -float(metric.mu_left) / 5.0
    return AbsorberSpec(mu_left=float(metric.mu_left), delta1=delta1,
                        strength=cfg.strength, order=cfg.absorber)


def sweep_mode(metric: MetricSpec, k: int, ell: int, window: Window,
               cfg: SweepConfig = SweepConfig()):
    """Solve/refine/filter pipeline for one boundary mode."""
    pencil = build_pencil_ambient(metric, k, ell)
    absorber = _make_absorber(metric, cfg)
    g1 = chebyshev_grid(cfg.N, float(metric.mu_left), float(metric.mu_right))
    g2 = chebyshev_grid(2 * cfg.N, float(metric.mu_left), float(metric.mu_right))
    dp1 = assemble(pencil, g1, absorber)
    dp2 = assemble(pencil, g2, absorber)
    cand = solve_pencil(dp1, window)
    # QZ accuracy drifts with the pencil's non-normality, so the reference
    # resolution is polished the same way as the working one before matching
    fine = []
    for s0 in solve_pencil(dp2, window):
        s, res, ok = refine(dp2, s0, trust_radius=0.1)
        fine.append(s if ok or res < STABLE_RESIDUAL else s0)
    coarse = []
    for s0 in cand:
        s, res, ok = refine(dp1, s0, trust_radius=0.1)
        flags = []
        if not ok:
            flags.append('no-convergence')
        if _branch_point_near(metric.n, k, s):
            flags.append('branch-point-near')
        if dp1.provenance.get('cavity_conditioned'):
            flags.append('cavity-conditioned')
        spectral = sigma_lambda(metric.n, k, s)
        rr = residue_rank(dp1, s)
        coarse.append(ResonanceResult(sigma=s, lam=spectral.lam, k=k, ell=ell,
                                      residual=res, stability=float('inf'),
                                      residue_rank=rr, flags=tuple(flags)))
    results = filter_spurious(coarse, fine, cfg.tol)
    if not cfg.keep_spurious:
        results = [r for r in results if r.stable]
    return results


def sweep(metric: MetricSpec, k: int, ell_max: int, window: Window,
          cfg: SweepConfig = SweepConfig(), parallel_map=map):
    """Aggregate per-mode sweeps into a deterministic resonance table."""
    modes = list(range(0, ell_max + 1))
    tables = list(parallel_map(
        lambda ell: sweep_mode(metric, k, ell, window, cfg), modes))
    rows = [r for tab in tables for r in tab]
    rows.sort(key=lambda r: (-r.sigma.imag, r.sigma.real, r.ell))
    return rows


CSV_COLUMNS = ['k', 'ell', 're_sigma', 'im_sigma', 're_lambda', 'im_lambda',
               'residual', 'stability', 'residue_rank', 'flags']


def table_to_csv(rows, header_comments=()):
    buf = io.StringIO()
    for line in header_comments:
        buf.write('# %s\n' % line)
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator='\n')
    writer.writeheader()
    for r in rows:
        d = r.row()
        d = {k: ('%.12g' % v if isinstance(v, float) else v)
             for k, v in d.items()}
        writer.writerow(d)
    return buf.getvalue()


def table_to_json(rows, meta=None):
    return json.dumps({
        'meta': meta or {},
        'resonances': [r.row() for r in rows],
    }, indent=2, sort_keys=True)
