"""Resonances and high-energy resolvent scans for the form Laplacian on even
asymptotically hyperbolic surfaces, computed through the extension of the
spectral family across the conformal boundary."""

__version__ = '0.1.0'

from .geometry import (MetricSpec, AmbientMetric, make_metric,
                       warp_exact_hyperbolic, ambient_metric, curvature_check)
from .form_calculus import (ModeBundle, MuPolyOperator, d_matrix, delta_matrix,
                            laplacian_blocks, hodge_star, ambient_d,
                            ambient_delta)
from .extension import (SpectralParameter, OperatorPencil, sigma_lambda,
                        lambda_sigma, build_pencil_ambient,
                        build_pencil_conjugated, indicial_roots,
                        smoothness_report)
from .discretize import (SpectralGrid, AbsorberSpec, DiscretePencil,
                         chebyshev_grid, assemble)
from .resonance_solver import (ResonanceResult, Window, SweepConfig,
                               solve_pencil, refine, filter_spurious,
                               residue_rank, sweep)
from .resolvent import (NormSpec, ResolventQuery, StripSpec, resolvent_apply,
                        resolvent_full, schur_invert, highenergy_scan)
from .oracle import OracleResonance, gamma_pole_resonances, direct_scan

__all__ = [
    'MetricSpec', 'AmbientMetric', 'make_metric', 'warp_exact_hyperbolic',
    'ambient_metric', 'curvature_check',
    'ModeBundle', 'MuPolyOperator', 'd_matrix', 'delta_matrix',
    'laplacian_blocks', 'hodge_star', 'ambient_d', 'ambient_delta',
    'SpectralParameter', 'OperatorPencil', 'sigma_lambda', 'lambda_sigma',
    'build_pencil_ambient', 'build_pencil_conjugated', 'indicial_roots',
    'smoothness_report',
    'SpectralGrid', 'AbsorberSpec', 'DiscretePencil', 'chebyshev_grid',
    'assemble',
    'ResonanceResult', 'Window', 'SweepConfig', 'solve_pencil', 'refine',
    'filter_spurious', 'residue_rank', 'sweep',
    'NormSpec', 'ResolventQuery', 'StripSpec', 'resolvent_apply',
    'resolvent_full', 'schur_invert', 'highenergy_scan',
    'OracleResonance', 'gamma_pole_resonances', 'direct_scan',
]
