"""
romforge package initialization
"""

from .field_grid import Grid, VelocityField, gradient, laplacian, convect, grad_contract
from .snapshot_io import (
    SnapshotSet, FluctuationSet, split_mean, load_snapshots, save_snapshots,
    load_coefficient_series, save_coefficient_series
)
from .pod_basis import (
    PodBasis, CoarseBasis, compute_pod, truncate, truncation_error,
    projector_apply_coarse, projector_apply_fine, project_reference, load_basis, save_basis
)
from .galerkin_offline import GromCoefficients, build_grom, load_grom, save_grom
from .memory_opt import (
    MemoryKind, MemoryLength, MemoryObjective, OptimizationReport,
    optimize_scalar, optimize_matrix, tune_memory_length
)
from .eapg_offline import (
    EapgCoefficients, ProjectedEapgTerms, build_eapg, load_eapg, save_eapg, load_coefficients
)
from .rom_online import IntegrationScheme, IntegratorConfig, Integrator, integrate, make_rhs
from .apg_reference import apg_rhs_fullspace, FullSpaceApgRhs
from .diagnostics import error_report, flop_table
from .config import RomForgeConfig, resolve_config

__version__ = "1.0.0"

__all__ = [
    # Grid and fields
    'Grid', 'VelocityField', 'gradient', 'laplacian', 'convect', 'grad_contract',

    # Snapshots and bases
    'SnapshotSet', 'FluctuationSet', 'split_mean', 'load_snapshots', 'save_snapshots',
    'load_coefficient_series', 'save_coefficient_series',
    'PodBasis', 'CoarseBasis', 'compute_pod', 'truncate', 'truncation_error',
    'projector_apply_coarse', 'projector_apply_fine', 'project_reference',
    'load_basis', 'save_basis',

    # Reduced models
    'GromCoefficients', 'build_grom', 'load_grom', 'save_grom',
    'EapgCoefficients', 'ProjectedEapgTerms', 'build_eapg', 'load_eapg', 'save_eapg',
    'load_coefficients',
    'MemoryKind', 'MemoryLength', 'MemoryObjective', 'OptimizationReport',
    'optimize_scalar', 'optimize_matrix', 'tune_memory_length',

    # Online phase
    'IntegrationScheme', 'IntegratorConfig', 'Integrator', 'integrate', 'make_rhs',
    'apg_rhs_fullspace', 'FullSpaceApgRhs',

    # Diagnostics and configuration
    'error_report', 'flop_table', 'RomForgeConfig', 'resolve_config',
]
