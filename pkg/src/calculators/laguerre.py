"""Generalized Laguerre and Voronoi tessellations of a density raster.

Every grid cell centre ``x`` is assigned to the site minimizing
``c(x, x_i) - w_i`` among the sites with finite cost; cells with infinite cost
to every site form the residual set. The minimum itself, ``φ_w(x)``, is kept
because the dual objective, its gradient and the reconstructed marginal all
read it.

The scan is brute force, ``O(nx · ny · M)``, vectorized over the raster one
site at a time so memory stays proportional to the raster.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Tuple

import numpy as np
import numpy.typing as npt

from src.calculators.entropy_models import EntropyModel
from src.calculators.errors import invalid
from src.measures.models import DiscreteMeasure, GridDensity

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

RESIDUAL: int = 0  # label of residual cells; sites are labelled 1..M


@dataclass(frozen=True)
class Tessellation:
    """Cell labels and ``φ_w`` sampled at the grid cell centres.

    Attributes
    ----------
    labels : numpy.ndarray
        Integer raster ``(ny, nx)`` with values in ``1..M`` or ``RESIDUAL``
    phi : numpy.ndarray
        ``min_i c(x, x_i) - w_i`` per cell, ``+inf`` on the residual set
    weights_used : numpy.ndarray
        The weight vector that generated the tessellation, shape ``(M,)``
    """

    labels: IntArray
    phi: FloatArray
    weights_used: FloatArray

    @property
    def num_sites(self) -> int:
        """Number of sites ``M``."""
        return int(self.weights_used.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        """Raster shape ``(ny, nx)``."""
        return (int(self.labels.shape[0]), int(self.labels.shape[1]))

    def residual_mask(self) -> npt.NDArray[np.bool_]:
        """Boolean raster of the residual cells."""
        return self.labels == RESIDUAL

    def as_export(self) -> IntArray:
        """Label raster for CSV export, residual encoded as 0."""
        return self.labels.copy()


class CellMasses(NamedTuple):
    """Mass of the diffuse measure in each cell and in the residual set."""

    masses: FloatArray
    residual: float


def _site_array(points: npt.ArrayLike) -> FloatArray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise invalid("points shape", pts.shape, "(M, 2)")
    if pts.shape[0] == 0:
        raise invalid("number of sites", 0, "at least 1")
    if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
        raise invalid("points", "duplicate locations", "pairwise distinct")
    return pts


def scan_sites(
    g: GridDensity,
    points: FloatArray,
    score: Callable[[FloatArray], FloatArray],
    weights: FloatArray,
) -> Tuple[IntArray, FloatArray]:
    """Label each grid cell with the site of lowest ``score(d) - w_i``.

    Ties keep the lowest site index; cells whose score is infinite for every
    site keep the ``RESIDUAL`` label and ``+inf``.
    """
    grid_x, grid_y = g.cell_centers()
    best = np.full(g.shape, np.inf)
    labels = np.full(g.shape, RESIDUAL, dtype=np.int64)
    for index, (px, py) in enumerate(points):
        candidate = score(np.hypot(grid_x - px, grid_y - py)) - weights[index]
        better = candidate < best
        best = np.where(better, candidate, best)
        labels[better] = index + 1
    return labels, best


def assign_cells(
    g: GridDensity,
    nu: DiscreteMeasure,
    m: EntropyModel,
    w: npt.ArrayLike,
) -> Tessellation:
    """Compute the generalized Laguerre tessellation ``{C_i(w)}`` and residual set.

    Parameters
    ----------
    g : GridDensity
        Raster whose cell centres are classified
    nu : DiscreteMeasure
        Sites ``x_i`` (masses are not used here)
    m : EntropyModel
        Model providing the cost ``c(x, x_i) = ℓ(d / ε)``
    w : array_like
        Finite weights, shape ``(M,)``

    Returns
    -------
    Tessellation
        Labels, ``φ_w`` and a copy of ``w``

    Raises
    ------
    InvalidArgumentError
        If there are no sites or ``w`` has the wrong shape or non-finite entries
    """
    points = _site_array(nu.points)
    weights = np.array(w, dtype=np.float64).reshape(-1)
    if weights.shape != (points.shape[0],):
        raise invalid("w shape", weights.shape, f"({points.shape[0]},)")
    if not np.all(np.isfinite(weights)):
        raise invalid("w", "non-finite entries", "finite weights")
    labels, phi = scan_sites(
        g, points, lambda d: np.asarray(m.cost(d), dtype=np.float64), weights
    )
    weights.setflags(write=False)
    return Tessellation(labels=labels, phi=phi, weights_used=weights)


def voronoi_assign(g: GridDensity, points: npt.ArrayLike) -> Tessellation:
    """Compute the Voronoi tessellation of the raster; ``phi`` is the nearest distance.

    Example
    -------
    >>> from src.measures.models import Domain, uniform_density
    >>> g = uniform_density(Domain.square(1.0), 4, 4, 1.0)
    >>> voronoi_assign(g, [[0.25, 0.5], [0.75, 0.5]]).labels[0].tolist()
    [1, 1, 2, 2]
    """
    sites = _site_array(points)
    weights = np.zeros(sites.shape[0])
    labels, phi = scan_sites(g, sites, lambda d: d, weights)
    weights.setflags(write=False)
    return Tessellation(labels=labels, phi=phi, weights_used=weights)


def cell_masses(g: GridDensity, t: Tessellation) -> CellMasses:
    """Integrate the raster density over every cell and over the residual set.

    Raises
    ------
    InvalidArgumentError
        If the tessellation was computed on a grid of another shape
    """
    if t.shape != g.shape:
        raise invalid("tessellation shape", t.shape, f"the raster shape {g.shape}")
    sums = np.bincount(
        t.labels.ravel(), weights=g.values.ravel(), minlength=t.num_sites + 1
    )
    masses = g.cell_area * sums[1:]
    return CellMasses(masses=masses, residual=float(g.cell_area * sums[RESIDUAL]))


def extract_slice(
    raster: npt.ArrayLike, g: GridDensity, y: float
) -> Tuple[FloatArray, FloatArray]:
    """Return cell-centre abscissae and the raster row nearest to height ``y``."""
    values = np.asarray(raster, dtype=np.float64)
    if values.shape != g.shape:
        raise invalid("raster shape", values.shape, f"the grid shape {g.shape}")
    row = int(np.clip(np.floor((y - g.domain.y_min) / g.dy), 0, g.ny - 1))
    grid_x, _ = g.cell_centers()
    return grid_x[row].copy(), values[row].copy()
