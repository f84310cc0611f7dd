"""
Grids and discrete operators
Uniform finite-volume grids on intervals, rectangles and radially reduced balls,
with cell quadrature and two-point face operators under zero-flux boundaries.
"""

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.special import gamma

from kessel.utils.logger import get_logger

logger = get_logger(__name__)

MIN_RESOLUTION = 4


class DomainKind(Enum):
    """Supported domain shapes"""
    INTERVAL = "interval"
    RECTANGLE = "rectangle"
    RADIAL_BALL = "radial_ball"


def ball_volume(radius: float, n: int) -> float:
    """Volume ω_n R^n of the n-ball"""
    return float(np.pi ** (n / 2) / gamma(n / 2 + 1) * radius ** n)


def sphere_area(radius: float, n: int) -> float:
    """Surface area n ω_n r^(n-1) of the sphere bounding the n-ball"""
    return float(n * np.pi ** (n / 2) / gamma(n / 2 + 1) * radius ** (n - 1))


@dataclass(frozen=True)
class Domain:
    """Physical domain Ω"""
    kind: DomainKind
    bounds: Tuple[float, ...]
    n: int = 1

    def __post_init__(self):
        if self.kind is DomainKind.INTERVAL:
            a, b = self.bounds
            if not b > a:
                raise ValueError(f"Degenerate interval ({a}, {b})")
        elif self.kind is DomainKind.RECTANGLE:
            ax, bx, ay, by = self.bounds
            if not (bx > ax and by > ay):
                raise ValueError(f"Degenerate rectangle {self.bounds}")
        elif self.kind is DomainKind.RADIAL_BALL:
            (radius,) = self.bounds
            if not radius > 0:
                raise ValueError(f"Ball radius must be positive, got {radius}")
            if self.n < 2:
                raise ValueError(f"Radial ball needs dimension n >= 2, got {self.n}")

    @classmethod
    def interval(cls, a: float, b: float) -> 'Domain':
        return cls(DomainKind.INTERVAL, (float(a), float(b)), 1)

    @classmethod
    def rectangle(cls, ax: float, bx: float, ay: float, by: float) -> 'Domain':
        return cls(DomainKind.RECTANGLE, (float(ax), float(bx), float(ay), float(by)), 2)

    @classmethod
    def radial_ball(cls, radius: float, n: int) -> 'Domain':
        return cls(DomainKind.RADIAL_BALL, (float(radius),), int(n))

    @property
    def measure(self) -> float:
        """|Ω|"""
        if self.kind is DomainKind.INTERVAL:
            a, b = self.bounds
            return b - a
        if self.kind is DomainKind.RECTANGLE:
            ax, bx, ay, by = self.bounds
            return (bx - ax) * (by - ay)
        return ball_volume(self.bounds[0], self.n)

    @property
    def dim(self) -> int:
        """Number of coordinates stored per cell center"""
        return 2 if self.kind is DomainKind.RECTANGLE else 1

    def to_dict(self) -> dict:
        return {'kind': self.kind.value, 'bounds': list(self.bounds), 'n': self.n}

    @classmethod
    def from_dict(cls, data: dict) -> 'Domain':
        return cls(DomainKind(data['kind']), tuple(float(b) for b in data['bounds']), int(data.get('n', 1)))


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Cell-centered uniform grid.

    Interior faces are listed once in `face_cells` as (left, right) pairs with
    left < right; zero-flux boundary faces are listed separately.
    """
    domain: Domain
    shape: Tuple[int, ...]
    cell_centers: np.ndarray
    cell_volumes: np.ndarray
    face_cells: np.ndarray
    face_areas: np.ndarray
    face_distances: np.ndarray
    face_centers: np.ndarray
    face_axes: np.ndarray
    boundary_cells: np.ndarray
    boundary_areas: np.ndarray
    h: float
    spacing: Tuple[float, ...] = field(default=())

    @property
    def n_cells(self) -> int:
        return int(self.cell_volumes.size)

    @property
    def n_faces(self) -> int:
        return int(self.face_areas.size)

    @property
    def measure(self) -> float:
        return self.domain.measure

    @cached_property
    def transmissibility(self) -> np.ndarray:
        """Face area over center distance"""
        return self.face_areas / self.face_distances

    @cached_property
    def face_dual_volumes(self) -> np.ndarray:
        """area × distance, the quadrature weight of a face-based integrand"""
        return self.face_areas * self.face_distances

    @cached_property
    def descriptor_hash(self) -> bytes:
        """20-byte SHA-1 digest identifying domain and resolution"""
        payload = json.dumps({'domain': self.domain.to_dict(), 'shape': list(self.shape)}, sort_keys=True)
        return hashlib.sha1(payload.encode('utf-8')).digest()

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """Symmetric weighted graph Laplacian K with (K f)_i = Σ_faces T (f_i - f_j)"""
        left, right = self.face_cells[:, 0], self.face_cells[:, 1]
        t = self.transmissibility
        n = self.n_cells
        rows = np.concatenate([left, right, left, right])
        cols = np.concatenate([left, right, right, left])
        vals = np.concatenate([t, t, -t, -t])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def face_difference(self, values: np.ndarray) -> np.ndarray:
        """f_right - f_left on each interior face"""
        return values[self.face_cells[:, 1]] - values[self.face_cells[:, 0]]

    def face_divergence(self, flux: np.ndarray) -> np.ndarray:
        """
        Cell-wise net outflow per unit volume for face fluxes oriented left → right.

        Boundary faces contribute nothing.
        """
        out = np.zeros(self.n_cells)
        np.add.at(out, self.face_cells[:, 0], flux)
        np.add.at(out, self.face_cells[:, 1], -flux)
        return out / self.cell_volumes

    def same_as(self, other: 'Grid') -> bool:
        return self.descriptor_hash == other.descriptor_hash


@dataclass(frozen=True, eq=False)
class Field:
    """Cell-averaged grid function"""
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_cells,):
            raise ValueError(
                f"Field has {values.size} values, grid has {self.grid.n_cells} cells"
            )
        object.__setattr__(self, 'values', values)

    @property
    def grid_id(self) -> bytes:
        return self.grid.descriptor_hash

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def with_values(self, values: np.ndarray) -> 'Field':
        return Field(values, self.grid)


def _uniform_edges(a: float, b: float, count: int) -> np.ndarray:
    return np.linspace(a, b, count + 1)


def _build_interval(domain: Domain, nx: int) -> Grid:
    a, b = domain.bounds
    dx = (b - a) / nx
    centers = a + (np.arange(nx) + 0.5) * dx
    idx = np.arange(nx - 1)
    return Grid(
        domain=domain,
        shape=(nx,),
        cell_centers=centers[:, None],
        cell_volumes=np.full(nx, dx),
        face_cells=np.stack([idx, idx + 1], axis=1),
        face_areas=np.ones(nx - 1),
        face_distances=np.full(nx - 1, dx),
        face_centers=(a + (idx + 1) * dx)[:, None],
        face_axes=np.zeros(nx - 1, dtype=int),
        boundary_cells=np.array([0, nx - 1]),
        boundary_areas=np.ones(2),
        h=dx,
        spacing=(dx,),
    )


def _build_rectangle(domain: Domain, nx: int, ny: int) -> Grid:
    ax, bx, ay, by = domain.bounds
    dx, dy = (bx - ax) / nx, (by - ay) / ny
    xc = ax + (np.arange(nx) + 0.5) * dx
    yc = ay + (np.arange(ny) + 0.5) * dy
    # cell (i, j) ↦ i * ny + j
    X, Y = np.meshgrid(xc, yc, indexing='ij')
    centers = np.stack([X.ravel(), Y.ravel()], axis=1)
    index = np.arange(nx * ny).reshape(nx, ny)

    x_left, x_right = index[:-1, :].ravel(), index[1:, :].ravel()
    y_left, y_right = index[:, :-1].ravel(), index[:, 1:].ravel()
    fx_centers = np.stack([(X[:-1, :] + 0.5 * dx).ravel(), Y[:-1, :].ravel()], axis=1)
    fy_centers = np.stack([X[:, :-1].ravel(), (Y[:, :-1] + 0.5 * dy).ravel()], axis=1)

    boundary = np.unique(np.concatenate([index[0, :], index[-1, :], index[:, 0], index[:, -1]]))
    perimeter_faces = []
    for cell in boundary:
        i, j = divmod(int(cell), ny)
        area = 0.0
        area += dy if i == 0 else 0.0
        area += dy if i == nx - 1 else 0.0
        area += dx if j == 0 else 0.0
        area += dx if j == ny - 1 else 0.0
        perimeter_faces.append(area)

    return Grid(
        domain=domain,
        shape=(nx, ny),
        cell_centers=centers,
        cell_volumes=np.full(nx * ny, dx * dy),
        face_cells=np.concatenate([
            np.stack([x_left, x_right], axis=1),
            np.stack([y_left, y_right], axis=1),
        ]),
        face_areas=np.concatenate([np.full(x_left.size, dy), np.full(y_left.size, dx)]),
        face_distances=np.concatenate([np.full(x_left.size, dx), np.full(y_left.size, dy)]),
        face_centers=np.concatenate([fx_centers, fy_centers]),
        face_axes=np.concatenate([np.zeros(x_left.size, dtype=int), np.ones(y_left.size, dtype=int)]),
        boundary_cells=boundary,
        boundary_areas=np.array(perimeter_faces),
        h=float(np.hypot(dx, dy)),
        spacing=(dx, dy),
    )


def _build_radial(domain: Domain, nr: int) -> Grid:
    (radius,) = domain.bounds
    n = domain.n
    dr = radius / nr
    edges = _uniform_edges(0.0, radius, nr)
    centers = 0.5 * (edges[:-1] + edges[1:])
    # exact shell volumes so the cells tile the ball
    volumes = ball_volume(1.0, n) * (edges[1:] ** n - edges[:-1] ** n)
    inner = edges[1:-1]
    idx = np.arange(nr - 1)
    return Grid(
        domain=domain,
        shape=(nr,),
        cell_centers=centers[:, None],
        cell_volumes=volumes,
        face_cells=np.stack([idx, idx + 1], axis=1),
        face_areas=np.array([sphere_area(r, n) for r in inner]),
        face_distances=np.full(nr - 1, dr),
        face_centers=inner[:, None],
        face_axes=np.zeros(nr - 1, dtype=int),
        boundary_cells=np.array([nr - 1]),
        boundary_areas=np.array([sphere_area(radius, n)]),
        h=dr,
        spacing=(dr,),
    )


def build_grid(domain: Domain, resolution: Union[int, Sequence[int]]) -> Grid:
    """
    Build the uniform grid for a domain.

    Args:
        domain: Interval, rectangle or radial ball
        resolution: Cells per axis (int, or (nx, ny) for rectangles)

    Returns:
        Grid whose cell volumes sum to |Ω|
    """
    counts = (resolution,) if np.isscalar(resolution) else tuple(resolution)
    counts = tuple(int(c) for c in counts)
    if any(c < MIN_RESOLUTION for c in counts):
        raise ValueError(f"Resolution must be >= {MIN_RESOLUTION} per axis, got {counts}")

    if domain.kind is DomainKind.INTERVAL:
        grid = _build_interval(domain, counts[0])
    elif domain.kind is DomainKind.RECTANGLE:
        nx, ny = counts if len(counts) == 2 else (counts[0], counts[0])
        grid = _build_rectangle(domain, nx, ny)
    else:
        grid = _build_radial(domain, counts[0])

    logger.debug(f"Built {domain.kind.value} grid: {grid.n_cells} cells, h={grid.h:.4g}, |Ω|={grid.measure:.6g}")
    return grid


def integrate(f: Field) -> float:
    """Σ f_i vol_i"""
    return float(np.dot(f.values, f.grid.cell_volumes))


def face_average(values: np.ndarray, grid: Grid, mode: str = "arithmetic") -> np.ndarray:
    """Face values of a cell quantity: arithmetic, harmonic or geometric mean"""
    left = values[grid.face_cells[:, 0]]
    right = values[grid.face_cells[:, 1]]
    if mode == "arithmetic":
        return 0.5 * (left + right)
    if mode == "harmonic":
        total = left + right
        safe = np.where(total > 0, total, 1.0)
        return np.where(total > 0, 2.0 * left * right / safe, 0.0)
    if mode == "geometric":
        return np.sqrt(left * right)
    raise ValueError(f"Unknown face average: {mode}")


def gradient_sq_over_sq(f: Field, floor: float, mode: str = "arithmetic") -> float:
    """
    Face-based ∫|∇f|²/f².

    Uses two-point gradients and the face value of f selected by `mode`,
    with the denominator clamped at `floor`.
    """
    if floor <= 0:
        raise ValueError(f"floor must be positive, got {floor}")
    values = f.values
    if np.any(values < floor):
        raise ValueError(f"Field falls below floor {floor:g} (min {values.min():g})")
    grid = f.grid
    face_f = np.maximum(face_average(values, grid, mode), floor)
    diff = grid.face_difference(values)
    return float(np.sum(grid.transmissibility * (diff / face_f) ** 2))


def gradient_lr_integral(f: Field, r: float) -> float:
    """Face-based ∫|∇f|^r"""
    grid = f.grid
    slope = np.abs(grid.face_difference(f.values)) / grid.face_distances
    return float(np.sum(grid.face_dual_volumes * slope ** r))


def grad_dot_integral(f: np.ndarray, grid: Grid, normal_derivative: np.ndarray,
                      weight: Optional[np.ndarray] = None) -> float:
    """
    Face-based ∫ w ∇f·∇g where the normal derivative of g at each face is given.

    `weight` holds face values of w (defaults to 1).
    """
    slope = grid.face_difference(f) / grid.face_distances
    w = 1.0 if weight is None else weight
    return float(np.sum(grid.face_dual_volumes * w * slope * normal_derivative))


def laplacian_matrix(grid: Grid) -> sparse.csr_matrix:
    """Sparse Δ_h = -V⁻¹K"""
    return sparse.csr_matrix(-sparse.diags(1.0 / grid.cell_volumes) @ grid.stiffness)


def neumann_laplacian_apply(f: Field) -> Field:
    """Divergence of two-point face fluxes with zero flux through the boundary"""
    grid = f.grid
    return Field(-(grid.stiffness @ f.values) / grid.cell_volumes, grid)


def boundary_cells(grid: Grid) -> np.ndarray:
    """Indices of cells touching ∂Ω"""
    return grid.boundary_cells
