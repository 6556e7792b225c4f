"""Unbalanced Quantization - Energy, optimal masses and point optimization.

Approximates a raster density ``μ`` by ``M`` Dirac masses under an
entropy-transport model. For fixed locations the optimal masses and the energy
are integrals over the plain Voronoi cells of the sites, so every quantity
below comes from a single nearest-site scan of the raster.

Features
--------
- quant_energy: ``J = Σ_i ∫_{V_i} -F*(-c(x, x_i)) dμ``
- quant_masses: ``m_i = ∫_{V_i} (F*)'(-c(x, x_i)) dμ``
- quant_gradient: ``∂J/∂x_j = ∫_{V_j} r(d/ε) (x_j - x) dμ / ε²``
- lloyd_step: move every site to the ``r``-weighted barycenter of its cell
- solve_quantization: generalized Lloyd iteration or L-BFGS from a seeded start

Dependencies
------------
- numpy: >=1.24.0 - Raster reductions and the seeded sampler
- scipy: >=1.10.0 - L-BFGS-B through ``src.calculators.optimizer``

Example
-------
>>> from src.measures.models import Domain, uniform_density
>>> from src.calculators.entropy_models import EntropyModel
>>> g = uniform_density(Domain.square(1.0), 128, 128, 1.0)
>>> round(quant_energy(g, [[0.5, 0.5]], EntropyModel.parse("w2")), 4)
0.1667

Note
----
Because ``r`` is nonincreasing for every supported model, the Lloyd update
minimizes a quadratic majorant of ``J`` and the energy never increases.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional

import numpy as np
import numpy.typing as npt

from src.calculators.entropy_models import EntropyModel
from src.calculators.errors import invalid
from src.calculators.laguerre import Tessellation, scan_sites, voronoi_assign
from src.calculators.optimizer import minimize_lbfgs, projected_grad_norm
from src.measures.models import GridDensity, total_mass

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

logger = logging.getLogger(__name__)


class QuantizationMethod(str, Enum):
    """Point optimization strategies."""

    LLOYD = "lloyd"
    BFGS = "bfgs"


@dataclass(frozen=True)
class QuantizationOptions:
    """Stopping parameters of :func:`solve_quantization`.

    Attributes
    ----------
    max_iter : int
        Maximum number of Lloyd or L-BFGS iterations
    grad_tol : float
        Stop when ``max|∇J| ≤ grad_tol · μ(Ω)``
    seed : int
        Seed of the density-proportional initialization
    max_evaluations : int, optional
        Budget of energy-and-gradient evaluations
    """

    max_iter: int = 500
    grad_tol: float = 1e-7
    seed: int = 0
    max_evaluations: Optional[int] = None


@dataclass
class QuantizationState:
    """Outcome of a quantization run.

    Attributes
    ----------
    points : numpy.ndarray
        Final site locations, shape ``(M, 2)``
    masses : numpy.ndarray
        Optimal masses for those locations
    energy : float
        ``J`` at the final locations
    grad_norm : float
        ``max|∇J|`` (components blocked by the domain box removed for L-BFGS)
    iterations : int
        Iterations performed
    energy_history : list of float
        Energy of the starting configuration and after every iteration
    evaluations : int
        Energy-and-gradient evaluations consumed
    converged : bool
        Whether the gradient tolerance was met
    method : QuantizationMethod
        Strategy that produced the state
    zero_mass_sites : numpy.ndarray
        Indices of sites whose optimal mass vanishes
    stalled_sites : numpy.ndarray
        Boolean flags of sites without reachable mass at the last evaluation
    """

    points: FloatArray
    masses: FloatArray
    energy: float
    grad_norm: float
    iterations: int
    energy_history: List[float] = field(default_factory=list)
    evaluations: int = 0
    converged: bool = False
    method: QuantizationMethod = QuantizationMethod.LLOYD
    zero_mass_sites: IntArray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64)
    )
    stalled_sites: npt.NDArray[np.bool_] = field(
        default_factory=lambda: np.zeros(0, dtype=bool)
    )


class LloydStep(NamedTuple):
    """Barycenters of one Lloyd update and the sites left in place."""

    points: FloatArray
    stalled: npt.NDArray[np.bool_]


class _Moments(NamedTuple):
    tessellation: Tessellation
    energy: float
    gradient: FloatArray
    denominators: FloatArray
    numerators: FloatArray


def _checked_points(g: GridDensity, points: npt.ArrayLike) -> FloatArray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise invalid("points shape", pts.shape, "(M, 2)")
    if not np.all(g.domain.contains(pts)):
        raise invalid("points", "locations outside the domain", "inside Ω")
    return pts


def _coincident_scan(g: GridDensity, points: FloatArray) -> Tessellation:
    """Nearest-site scan that leaves repeated sites with empty cells."""
    weights = np.zeros(points.shape[0])
    labels, phi = scan_sites(g, points, lambda d: d, weights)
    return Tessellation(labels=labels, phi=phi, weights_used=weights)


def _moments(
    g: GridDensity, points: FloatArray, m: EntropyModel, distinct: bool = True
) -> _Moments:
    """Energy, gradient and the Lloyd sums from one Voronoi scan.

    With ``distinct=False`` coincident sites are allowed: the copy with the
    higher index owns no cell, so its gradient and Lloyd sums vanish.
    """
    t = voronoi_assign(g, points) if distinct else _coincident_scan(g, points)
    scaled = t.phi / m.epsilon
    weighted = np.asarray(m.r_kernel(scaled)) * g.values
    labels = t.labels.ravel()
    size = points.shape[0] + 1
    grid_x, grid_y = g.cell_centers()

    def per_site(values: FloatArray) -> FloatArray:
        return np.bincount(labels, weights=values.ravel(), minlength=size)[1:]

    profile = np.asarray(m.radial_profile(scaled))
    energy = g.cell_area * float(np.sum(profile * g.values))
    den = g.cell_area * per_site(weighted)
    num = g.cell_area * np.column_stack(
        [per_site(weighted * grid_x), per_site(weighted * grid_y)]
    )
    gradient = (points * den[:, None] - num) / m.epsilon**2
    return _Moments(t, energy, gradient, den, num)


def quant_energy(g: GridDensity, points: npt.ArrayLike, m: EntropyModel) -> float:
    """Evaluate the quantization energy ``J(x_1, ..., x_M)``.

    Parameters
    ----------
    g : GridDensity
        Density to quantize
    points : array_like
        Pairwise-distinct sites inside the domain, shape ``(M, 2)``
    m : EntropyModel
        Transport model; the cost is ``ℓ(d / ε)``

    Returns
    -------
    float
        Midpoint quadrature of ``min_i -F*(-c(x, x_i))``, nonnegative

    Raises
    ------
    InvalidArgumentError
        If sites coincide or lie outside the domain
    """
    pts = _checked_points(g, points)
    t = voronoi_assign(g, pts)
    profile = np.asarray(m.radial_profile(t.phi / m.epsilon))
    return g.cell_area * float(np.sum(profile * g.values))


def quant_masses(
    g: GridDensity, points: npt.ArrayLike, m: EntropyModel
) -> FloatArray:
    """Return the optimal masses ``m_i`` for fixed sites; ``μ(V_i)`` for W2."""
    return _cell_masses(g, voronoi_assign(g, _checked_points(g, points)), m)


def _cell_masses(g: GridDensity, t: Tessellation, m: EntropyModel) -> FloatArray:
    cost = np.asarray(m.unit_cost(t.phi / m.epsilon))
    multiplier = np.asarray(m.f_star_prime(-cost))
    sums = np.bincount(
        t.labels.ravel(),
        weights=(multiplier * g.values).ravel(),
        minlength=t.num_sites + 1,
    )
    return g.cell_area * sums[1:]


def quant_gradient(
    g: GridDensity, points: npt.ArrayLike, m: EntropyModel
) -> FloatArray:
    """Return ``∇J`` with respect to the site locations, shape ``(M, 2)``.

    Example
    -------
    >>> from src.measures.models import Domain, uniform_density
    >>> g = uniform_density(Domain.square(1.0), 64, 64, 1.0)
    >>> grad = quant_gradient(g, [[0.5, 0.5]], EntropyModel.parse("w2"))
    >>> bool(np.max(np.abs(grad)) < 1e-12)
    True
    """
    return _moments(g, _checked_points(g, points), m).gradient


def _lloyd_from(points: FloatArray, moments: _Moments) -> LloydStep:
    stalled = moments.denominators <= 0.0
    moved = points.copy()
    active = ~stalled
    moved[active] = moments.numerators[active] / moments.denominators[active, None]
    return LloydStep(points=moved, stalled=stalled)


def lloyd_step(g: GridDensity, points: npt.ArrayLike, m: EntropyModel) -> LloydStep:
    """Move every site to the ``r``-weighted barycenter of its Voronoi cell.

    Sites whose cell carries no ``r``-weighted mass (for WFR: no mass within
    ``επ/2``) stay where they are and are flagged in ``stalled``.
    """
    pts = _checked_points(g, points)
    step = _lloyd_from(pts, _moments(g, pts, m))
    if np.any(step.stalled):
        logger.warning(
            "Lloyd step: %d site(s) without reachable mass left in place",
            int(np.count_nonzero(step.stalled)),
        )
    return step


def initial_points(g: GridDensity, M: int, seed: int = 0) -> FloatArray:
    """Sample ``M`` distinct cell centres with probability proportional to the density.

    Raises
    ------
    InvalidArgumentError
        If ``M < 1`` or ``M`` exceeds the number of cells with positive density
    """
    if M < 1:
        raise invalid("M", M, "at least 1")
    flat = g.values.ravel()
    support = np.flatnonzero(flat > 0.0)
    if M > support.size:
        raise invalid("M", M, f"at most the {support.size} cells with positive density")
    rng = np.random.default_rng(seed)
    weights = flat[support] / flat[support].sum()
    chosen = rng.choice(support, size=M, replace=False, p=weights)
    grid_x, grid_y = g.cell_centers()
    return np.column_stack([grid_x.ravel()[chosen], grid_y.ravel()[chosen]])


def _run_lloyd(
    g: GridDensity,
    start: FloatArray,
    m: EntropyModel,
    opts: QuantizationOptions,
    tol: float,
) -> QuantizationState:
    points = start
    moments = _moments(g, points, m)
    history = [moments.energy]
    evaluations = 1
    iterations = 0
    while iterations < opts.max_iter:
        if float(np.max(np.abs(moments.gradient))) <= tol:
            break
        if opts.max_evaluations is not None and evaluations >= opts.max_evaluations:
            break
        points = _lloyd_from(points, moments).points
        moments = _moments(g, points, m)
        evaluations += 1
        iterations += 1
        history.append(moments.energy)
        logger.debug(
            "Lloyd: iteration %d, energy %.10e, max|grad| %.3e",
            iterations,
            moments.energy,
            float(np.max(np.abs(moments.gradient))),
        )
    grad_norm = float(np.max(np.abs(moments.gradient)))
    stalled = moments.denominators <= 0.0
    if np.any(stalled):
        logger.warning(
            "Lloyd: %d site(s) without reachable mass", int(np.count_nonzero(stalled))
        )
    return QuantizationState(
        points=points,
        masses=np.zeros(points.shape[0]),
        energy=moments.energy,
        grad_norm=grad_norm,
        iterations=iterations,
        energy_history=history,
        evaluations=evaluations,
        converged=grad_norm <= tol,
        method=QuantizationMethod.LLOYD,
        stalled_sites=stalled,
    )


def _run_bfgs(
    g: GridDensity,
    start: FloatArray,
    m: EntropyModel,
    opts: QuantizationOptions,
    tol: float,
) -> QuantizationState:
    domain = g.domain
    box = [(domain.x_min, domain.x_max), (domain.y_min, domain.y_max)]
    bounds = box * start.shape[0]

    def objective(flat: FloatArray) -> tuple[float, FloatArray]:
        moments = _moments(g, flat.reshape(-1, 2), m, distinct=False)
        return moments.energy, moments.gradient.ravel()

    record = minimize_lbfgs(
        objective,
        start.ravel(),
        max_iter=opts.max_iter,
        grad_tol=tol,
        max_evaluations=opts.max_evaluations,
        bounds=bounds,
    )
    points = record.x.reshape(-1, 2)
    final = _moments(g, points, m, distinct=False)
    return QuantizationState(
        points=points,
        masses=np.zeros(points.shape[0]),
        energy=final.energy,
        grad_norm=projected_grad_norm(record.x, final.gradient.ravel(), bounds),
        iterations=record.iterations,
        energy_history=record.history,
        evaluations=record.evaluations,
        converged=record.converged,
        method=QuantizationMethod.BFGS,
        stalled_sites=final.denominators <= 0.0,
    )


def solve_quantization(
    g: GridDensity,
    M: int,
    m: EntropyModel,
    method: str = "lloyd",
    opts: Optional[QuantizationOptions] = None,
    start: Optional[npt.ArrayLike] = None,
) -> QuantizationState:
    """Locally minimize ``J`` over ``M`` sites.

    Parameters
    ----------
    g : GridDensity
        Density to quantize, with positive total mass
    M : int
        Number of sites
    m : EntropyModel
        Transport model
    method : {"lloyd", "bfgs"}
        Generalized Lloyd iteration or L-BFGS constrained to the domain box
    opts : QuantizationOptions, optional
        Stopping parameters and seed
    start : array_like, optional
        Initial sites; sampled with :func:`initial_points` when omitted. L-BFGS
        accepts coincident sites, a repeated site owning no cell

    Returns
    -------
    QuantizationState
        Final sites with their optimal masses and energy trace

    Raises
    ------
    InvalidArgumentError
        If ``μ(Ω) = 0``, the method is unknown, or ``M`` exceeds the number of
        positive-density cells
    """
    opts = opts or QuantizationOptions()
    mu_total = total_mass(g)
    if mu_total <= 0.0:
        raise invalid("total mass", mu_total, "positive to quantize")
    try:
        strategy = QuantizationMethod(method)
    except ValueError as exc:
        raise invalid("method", method, "'lloyd' or 'bfgs'") from exc

    if start is None:
        points = initial_points(g, M, opts.seed)
    else:
        points = _checked_points(g, start)
        if points.shape[0] != M:
            raise invalid("start", points.shape, f"({M}, 2)")
    tol = opts.grad_tol * mu_total

    if strategy is QuantizationMethod.LLOYD:
        state = _run_lloyd(g, points, m, opts, tol)
    else:
        state = _run_bfgs(g, points, m, opts, tol)
    state.masses = _cell_masses(g, _coincident_scan(g, state.points), m)
    state.zero_mass_sites = np.flatnonzero(state.masses <= 0.0)

    logger.info(
        "Quantization (%s, %s, eps=%g, M=%d): energy=%.8g, max|grad|=%.2e, "
        "%d iterations",
        strategy.value,
        m.kind.value,
        m.epsilon,
        M,
        state.energy,
        state.grad_norm,
        state.iterations,
    )
    if state.zero_mass_sites.size:
        logger.warning(
            "Quantization: %d site(s) carry zero mass", state.zero_mass_sites.size
        )
    return state
