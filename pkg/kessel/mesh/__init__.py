"""Finite-volume grids and discrete operators"""

from .geometry import (
    Domain,
    DomainKind,
    Grid,
    Field,
    build_grid,
    integrate,
    face_average,
    gradient_sq_over_sq,
    gradient_lr_integral,
    grad_dot_integral,
    laplacian_matrix,
    neumann_laplacian_apply,
    boundary_cells,
)

__all__ = [
    'Domain',
    'DomainKind',
    'Grid',
    'Field',
    'build_grid',
    'integrate',
    'face_average',
    'gradient_sq_over_sq',
    'gradient_lr_integral',
    'grad_dot_integral',
    'laplacian_matrix',
    'neumann_laplacian_apply',
    'boundary_cells',
]
