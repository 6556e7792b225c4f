"""Measure Models - Rasterized diffuse measures and discrete measures.

This module provides the geometric containers every other module works on:
an axis-aligned rectangular domain, a diffuse measure sampled as densities at
the centres of a Cartesian grid, and a finite sum of weighted Dirac masses.

Features
--------
- Domain: axis-aligned rectangle with area, perimeter and containment queries
- GridDensity: nonnegative raster of densities, integrated by the midpoint rule
- DiscreteMeasure: pairwise-distinct points with nonnegative masses
- Builders for the uniform density and the Gaussian bump density

Dependencies
------------
- numpy: >=1.24.0 - Raster storage and reductions
- dataclasses: Built-in - Immutable containers

Example
-------
>>> from src.measures.models import Domain, uniform_density, total_mass
>>> g = uniform_density(Domain(0.0, 5.0, 0.0, 5.0), 100, 100, 2.0)
>>> round(total_mass(g), 12)
50.0

Note
----
Rasters are stored with shape ``(ny, nx)``; row 0 holds the cells closest to
``y_min``. All containers are frozen and their arrays are read-only.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as npt

from src.calculators.errors import invalid

FloatArray = npt.NDArray[np.float64]


def _frozen(array: npt.ArrayLike) -> FloatArray:
    """Return a read-only float64 copy of ``array``."""
    out = np.array(array, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle ``[x_min, x_max] × [y_min, y_max]``.

    Attributes
    ----------
    x_min, x_max : float
        Horizontal extent, ``x_min < x_max``
    y_min, y_max : float
        Vertical extent, ``y_min < y_max``
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self) -> None:
        bounds = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(np.isfinite(bounds)):
            raise invalid("domain", bounds, "four finite coordinates")
        if not self.x_min < self.x_max:
            raise invalid("x range", (self.x_min, self.x_max), "x_min < x_max")
        if not self.y_min < self.y_max:
            raise invalid("y range", (self.y_min, self.y_max), "y_min < y_max")

    @property
    def width(self) -> float:
        """Horizontal side length."""
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        """Vertical side length."""
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        """Lebesgue measure of the rectangle."""
        return self.width * self.height

    @property
    def perimeter(self) -> float:
        """Length of the boundary."""
        return 2.0 * (self.width + self.height)

    @property
    def center(self) -> Tuple[float, float]:
        """Midpoint of the rectangle."""
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def contains(self, points: npt.ArrayLike) -> npt.NDArray[np.bool_]:
        """Return a mask of the points lying in the closed rectangle."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return (
            (pts[:, 0] >= self.x_min)
            & (pts[:, 0] <= self.x_max)
            & (pts[:, 1] >= self.y_min)
            & (pts[:, 1] <= self.y_max)
        )

    @classmethod
    def square(cls, side: float, origin: float = 0.0) -> "Domain":
        """Build ``[origin, origin + side]²``."""
        return cls(origin, origin + side, origin, origin + side)


@dataclass(frozen=True)
class GridDensity:
    """Diffuse measure given by densities at the centres of an ``nx × ny`` grid.

    Attributes
    ----------
    domain : Domain
        Rectangle covered by the grid
    nx, ny : int
        Number of cells along x and y
    values : numpy.ndarray
        Densities with shape ``(ny, nx)``, finite and nonnegative

    Properties
    ----------
    cell_area : float
        Area of one grid cell, the midpoint quadrature weight
    cell_width : float
        Larger of the two cell side lengths
    """

    domain: Domain
    nx: int
    ny: int
    values: FloatArray

    def __post_init__(self) -> None:
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise invalid("resolution", (self.nx, self.ny), "at least 1 x 1")
        values = _frozen(self.values)
        if values.shape != (self.ny, self.nx):
            raise invalid(
                "values shape", values.shape, f"(ny, nx) = ({self.ny}, {self.nx})"
            )
        if not np.all(np.isfinite(values)):
            raise invalid("values", "non-finite entries", "finite densities")
        if np.any(values < 0.0):
            raise invalid("values", "negative entries", "nonnegative densities")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, domain: Domain, values: npt.ArrayLike) -> "GridDensity":
        """Build a density from a ``(ny, nx)`` raster, inferring the resolution."""
        raster = np.asarray(values, dtype=np.float64)
        if raster.ndim != 2:
            raise invalid("values", raster.shape, "a two-dimensional raster")
        ny, nx = raster.shape
        return cls(domain=domain, nx=nx, ny=ny, values=raster)

    @property
    def dx(self) -> float:
        """Cell width along x."""
        return self.domain.width / self.nx

    @property
    def dy(self) -> float:
        """Cell height along y."""
        return self.domain.height / self.ny

    @property
    def cell_area(self) -> float:
        """Midpoint quadrature weight of each cell."""
        return self.dx * self.dy

    @property
    def cell_width(self) -> float:
        """Larger cell side length, the raster's spatial resolution."""
        return max(self.dx, self.dy)

    @property
    def shape(self) -> Tuple[int, int]:
        """Raster shape ``(ny, nx)``."""
        return (self.ny, self.nx)

    def cell_centers(self) -> Tuple[FloatArray, FloatArray]:
        """Return the ``(X, Y)`` arrays of cell-centre coordinates, shape ``(ny, nx)``."""
        xs = self.domain.x_min + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.domain.y_min + (np.arange(self.ny) + 0.5) * self.dy
        grid_x, grid_y = np.meshgrid(xs, ys)
        return grid_x, grid_y

    def scaled(self, factor: float) -> "GridDensity":
        """Return the density multiplied by a nonnegative ``factor``."""
        if factor < 0.0:
            raise invalid("factor", factor, "nonnegative")
        return GridDensity(self.domain, self.nx, self.ny, self.values * factor)

    def with_values(self, values: npt.ArrayLike) -> "GridDensity":
        """Return a density on the same grid with different values."""
        return GridDensity(self.domain, self.nx, self.ny, np.asarray(values))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite measure ``Σ m_i δ_{x_i}`` with pairwise-distinct locations.

    Attributes
    ----------
    points : numpy.ndarray
        Locations with shape ``(M, 2)``, inside the closed domain
    masses : numpy.ndarray
        Nonnegative masses with shape ``(M,)``
    domain : Domain
        Rectangle the locations must lie in

    Note
    ----
    Zero masses are accepted because optimal quantizers may carry them;
    transport operations require strictly positive masses themselves.
    """

    points: FloatArray
    masses: FloatArray
    domain: Domain

    def __post_init__(self) -> None:
        points = _frozen(self.points)
        masses = _frozen(self.masses)
        if points.ndim != 2 or points.shape[1] != 2:
            raise invalid("points shape", points.shape, "(M, 2)")
        if masses.shape != (points.shape[0],):
            raise invalid("masses shape", masses.shape, f"({points.shape[0]},)")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(masses))):
            raise invalid("discrete measure", "non-finite entries", "finite")
        if np.any(masses < 0.0):
            raise invalid("masses", masses.min(), "nonnegative")
        if not np.all(self.domain.contains(points)):
            raise invalid("points", "locations outside the domain", "inside Ω")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise invalid("points", "duplicate locations", "pairwise distinct")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "masses", masses)

    @property
    def size(self) -> int:
        """Number of Dirac masses ``M``."""
        return int(self.points.shape[0])

    @property
    def total_mass(self) -> float:
        """``ν(Ω) = Σ m_i``."""
        return float(self.masses.sum())


def total_mass(g: GridDensity) -> float:
    """Integrate a raster density over its domain with the midpoint rule.

    Parameters
    ----------
    g : GridDensity
        Rasterized measure

    Returns
    -------
    float
        ``cell_area · Σ values``, always nonnegative

    Example
    -------
    >>> g = uniform_density(Domain.square(1.0), 16, 16, 1.0)
    >>> total_mass(g)
    1.0
    """
    return float(g.cell_area * g.values.sum())


def uniform_density(domain: Domain, nx: int, ny: int, level: float) -> GridDensity:
    """Build the constant density ``level`` on an ``nx × ny`` grid.

    Parameters
    ----------
    domain : Domain
        Rectangle to rasterize
    nx, ny : int
        Grid resolution, both at least 1
    level : float
        Constant density, nonnegative

    Returns
    -------
    GridDensity
        Raster with every value equal to ``level``

    Raises
    ------
    InvalidArgumentError
        If the resolution is not positive or ``level`` is negative
    """
    if nx < 1 or ny < 1:
        raise invalid("resolution", (nx, ny), "at least 1 x 1")
    if not np.isfinite(level) or level < 0.0:
        raise invalid("level", level, "a finite nonnegative density")
    return GridDensity(domain, nx, ny, np.full((ny, nx), float(level)))


def gaussian_bump_density(domain: Domain, nx: int, ny: int) -> GridDensity:
    """Build ``1 + exp(-|x - c|² / (2σ²))`` with ``c`` the centre and ``σ`` the half-width.

    On ``[-4π, 4π]²`` this is ``1 + exp(-|x|²/(2(4π)²))``, the canonical
    synthetic density for quantization experiments.
    """
    grid = uniform_density(domain, nx, ny, 0.0)
    grid_x, grid_y = grid.cell_centers()
    cx, cy = domain.center
    sigma = 0.5 * domain.width
    radius_sq = (grid_x - cx) ** 2 + (grid_y - cy) ** 2
    return grid.with_values(1.0 + np.exp(-radius_sq / (2.0 * sigma**2)))
