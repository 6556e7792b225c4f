"""Asymptotic Quantization - Hexagonal cell problem and optimal point densities.

As the number of sites grows with ``ε_M² M → P``, optimal unbalanced
quantizers crystallize locally into triangular lattices. This module evaluates
the energy density ``B(z)`` of a lattice with ``z`` points per unit area,
tabulates it, and derives the asymptotically optimal point density ``D(x)``
together with its Lagrange multiplier ``λ``.

Features
--------
- cell_b / cell_b_prime: ``B(z)`` and ``B'(z)`` by polar Gauss-Legendre quadrature
  over a regular hexagon of area ``1/z``
- plateau_constants: the density ``Z`` below which ``B'`` is constant and that
  constant slope
- build_cell_table: monotone interpolation of ``B`` and ``B'`` on a log-spaced grid
- invert_b_prime and b_conjugate: ``(B')^{-1}`` and ``B*``
- optimal_density: ``D(x) ∈ ∂B*(λ/m(x))`` with ``∫ D dx = P``
- lattice_bounds and triangular_lattice: crystallization bounds and the
  construction attaining them

Dependencies
------------
- numpy: >=1.24.0 - Gauss-Legendre nodes and raster evaluation
- scipy: >=1.10.0 - ``PchipInterpolator`` for the monotone table, ``brentq``
  for the inverse derivative

Example
-------
>>> from src.calculators.entropy_models import EntropyModel
>>> round(cell_b(EntropyModel.parse("w2"), 1.0), 7)
0.1603751

Note
----
All cell-problem quantities are computed for the model at unit length scale;
a length scale ``ε`` enters only through the argument ``z = ε² M / |Ω|``.
Balanced transport (W2) uses its closed form ``B(z) = (5√3/54) / z``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import numpy.typing as npt
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from src.calculators.entropy_models import EntropyModel
from src.calculators.errors import OutOfRangeError, invalid
from src.measures.models import Domain, GridDensity, total_mass

FloatArray = npt.NDArray[np.float64]

# W2 energy of the unit-area hexagon
HEXAGON_CONSTANT: float = 5.0 * math.sqrt(3.0) / 54.0
QUADRATURE_ORDER: int = 64
SECTOR_HALF_ANGLE: float = math.pi / 6.0
INVERSION_XTOL: float = 1e-12  # on log z
MAX_BISECTIONS: int = 200

logger = logging.getLogger(__name__)

_NODES, _WEIGHTS = leggauss(QUADRATURE_ORDER)


def _gauss_legendre(
    integrand: Callable[[FloatArray], FloatArray], lo: FloatArray, hi: FloatArray
) -> FloatArray:
    """Integrate ``integrand`` over each interval ``[lo_k, hi_k]`` with 64 nodes."""
    half = 0.5 * (hi - lo)
    nodes = half[:, None] * _NODES[None, :] + (0.5 * (hi + lo))[:, None]
    return half * (integrand(nodes) @ _WEIGHTS)


def _piecewise(
    integrand: Callable[[FloatArray], FloatArray],
    lo: FloatArray,
    hi: FloatArray,
    breaks: Tuple[float, ...],
) -> FloatArray:
    """Integrate over ``[lo, hi]`` split at the breakpoints falling inside."""
    edges = [lo] + [np.clip(b, lo, hi) for b in sorted(breaks)] + [hi]
    total = np.zeros_like(lo)
    for start, stop in zip(edges[:-1], edges[1:]):
        total += _gauss_legendre(integrand, start, stop)
    return total


def _apothem(z: float) -> float:
    return 1.0 / math.sqrt(2.0 * math.sqrt(3.0) * z)


def _check_density(z: float) -> float:
    value = float(z)
    if not (math.isfinite(value) and value > 0.0):
        raise invalid("z", z, "a finite positive point density")
    return value


def cell_b(m: EntropyModel, z: float) -> float:
    """Evaluate the cell problem ``B(z)``.

    ``B(z) = z ∫_{H(1/z)} -F*(-ℓ(|x|)) dx`` over the regular hexagon of area
    ``1/z``, computed on the six triangular sectors in polar coordinates.

    Parameters
    ----------
    m : EntropyModel
        Model; its length scale is ignored
    z : float
        Points per unit area, strictly positive

    Returns
    -------
    float
        Energy per unit area, in ``[0, F(0)]`` for unbalanced models

    Raises
    ------
    InvalidArgumentError
        If ``z`` is not positive

    Example
    -------
    >>> round(cell_b(EntropyModel.parse("wfr"), 1e-6), 4)
    1.0
    """
    z = _check_density(z)
    alpha = SECTOR_HALF_ANGLE * _NODES
    reach = _apothem(z) / np.cos(alpha)
    radial = _piecewise(
        lambda r: np.asarray(m.radial_profile(r)) * r,
        np.zeros_like(reach),
        reach,
        m.profile_breakpoints(),
    )
    return float(6.0 * z * SECTOR_HALF_ANGLE * (_WEIGHTS @ radial))


def _edge_average(m: EntropyModel, z: float) -> float:
    """Average of the radial profile over one hexagon edge."""
    apothem = _apothem(z)
    half_side = apothem / math.sqrt(3.0)
    crossings = tuple(
        math.sqrt(radius**2 - apothem**2)
        for radius in m.profile_breakpoints()
        if apothem < radius < math.hypot(apothem, half_side)
    )
    integral = _piecewise(
        lambda t: np.asarray(m.radial_profile(np.hypot(apothem, t))),
        np.array([0.0]),
        np.array([half_side]),
        crossings,
    )
    return float(integral[0]) / half_side


def cell_b_prime(m: EntropyModel, z: float) -> float:
    """Evaluate ``B'(z) = (B(z) - mean of -F*(-ℓ) over ∂H(1/z)) / z``.

    Nonpositive and nondecreasing in ``z``; equal to ``-(5√3/54)/z²`` for W2.
    """
    z = _check_density(z)
    return (cell_b(m, z) - _edge_average(m, z)) / z


def plateau_constants(m: EntropyModel) -> Tuple[float, float]:
    """Return ``(Z, slope)``: ``B'`` equals ``slope`` on ``(0, Z]`` and increases beyond.

    The profile is constant (``F(0)``) beyond the saturation radius ``R``, so
    ``B'`` is constant exactly while the hexagon's inscribed disc contains
    ``B_R(0)``, i.e. for ``z ≤ 1/(2√3 R²)``. There
    ``B(z) = F(0) - z · 2π ∫_0^R (F(0) - h(r)) r dr``.

    Example
    -------
    >>> plateau_constants(EntropyModel.parse("w2"))
    (0.0, -inf)
    >>> round(plateau_constants(EntropyModel.parse("ghk"))[1], 8)
    -3.14159265
    """
    if m.is_balanced:
        return 0.0, -math.inf
    saturation = m.saturation_radius()
    if math.isfinite(saturation):
        z_plateau = 1.0 / (2.0 * math.sqrt(3.0) * saturation**2)
        reach = saturation
    else:
        z_plateau = 0.0
        reach = 2.0 * max(m.profile_breakpoints(), default=6.0)
    f_zero = m.f_zero()
    deficit = _piecewise(
        lambda r: (f_zero - np.asarray(m.radial_profile(r))) * r,
        np.array([0.0]),
        np.array([reach]),
        m.profile_breakpoints(),
    )
    return z_plateau, -2.0 * math.pi * float(deficit[0])


def invert_b_prime(m: EntropyModel, s: float) -> float:
    """Return the unique ``z > Z`` with ``B'(z) = s`` (Brent's method in ``log z``).

    Raises
    ------
    OutOfRangeError
        If ``s`` lies outside ``(slope, 0)``
    """
    z_plateau, slope = plateau_constants(m)
    if not slope < s < 0.0:
        raise OutOfRangeError(
            f"Invalid slope: {s!r}. Must be in ({slope:.6g}, 0) "
            f"for model {m.kind.value}."
        )
    if m.is_balanced:
        return math.sqrt(HEXAGON_CONSTANT / -s)

    lo = z_plateau if z_plateau > 0.0 else 1e-6
    while z_plateau == 0.0 and cell_b_prime(m, lo) >= s and lo > 1e-12:
        lo *= 0.1
    if cell_b_prime(m, lo) >= s:
        logger.debug("B' inversion: slope %.6g resolved at the lower bracket", s)
        return lo
    hi = max(2.0 * lo, 1.0)
    while cell_b_prime(m, hi) < s:
        hi *= 4.0
    root = brentq(
        lambda u: cell_b_prime(m, math.exp(u)) - s,
        math.log(lo),
        math.log(hi),
        xtol=INVERSION_XTOL,
        maxiter=MAX_BISECTIONS,
    )
    return math.exp(root)


@dataclass(frozen=True)
class CellProblemTable:
    """Samples of ``B`` and ``B'`` on a log-spaced grid of point densities.

    Attributes
    ----------
    model : EntropyModel
        Model at unit length scale
    z_samples : numpy.ndarray
        Increasing positive densities
    b_values, b_prime_values : numpy.ndarray
        ``B`` and ``B'`` at ``z_samples``
    z_plateau : float
        ``Z``, the end of the constant-slope region (0 if none)
    slope_plateau : float
        ``lim_{z↘Z} B'(z)``; ``-inf`` for W2
    """

    model: EntropyModel
    z_samples: FloatArray
    b_values: FloatArray
    b_prime_values: FloatArray
    z_plateau: float
    slope_plateau: float
    _b_of_log_z: Optional[PchipInterpolator] = field(
        default=None, repr=False, compare=False
    )
    _bp_of_log_z: Optional[PchipInterpolator] = field(
        default=None, repr=False, compare=False
    )
    _log_z_of_bp: Optional[PchipInterpolator] = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if self.model.is_balanced:
            return
        log_z = np.log(self.z_samples)
        object.__setattr__(self, "_b_of_log_z", PchipInterpolator(log_z, self.b_values))
        object.__setattr__(
            self, "_bp_of_log_z", PchipInterpolator(log_z, self.b_prime_values)
        )
        above = self.z_samples > self.z_plateau * (1.0 + 1e-9)
        slopes = self.b_prime_values[above]
        zs = self.z_samples[above]
        if self.z_plateau > 0.0:
            slopes = np.concatenate([[self.slope_plateau], slopes])
            zs = np.concatenate([[self.z_plateau], zs])
        keep = np.concatenate([[True], np.diff(np.maximum.accumulate(slopes)) > 0.0])
        object.__setattr__(
            self, "_log_z_of_bp", PchipInterpolator(slopes[keep], np.log(zs[keep]))
        )

    @property
    def z_min(self) -> float:
        """Smallest tabulated density."""
        return float(self.z_samples[0])

    @property
    def z_max(self) -> float:
        """Largest tabulated density."""
        return float(self.z_samples[-1])

    def b(self, z: npt.ArrayLike) -> FloatArray:
        """Interpolate ``B``.

        ``B(0) = F(0)``, exact on the plateau and ``(5√3/54)/z`` beyond ``z_max``.
        """
        zs = np.asarray(z, dtype=np.float64)
        if self.model.is_balanced:
            with np.errstate(divide="ignore"):
                return np.where(zs > 0.0, HEXAGON_CONSTANT / zs, math.inf)
        out = np.empty_like(zs)
        low = zs <= max(self.z_plateau, self.z_min)
        high = zs > self.z_max
        middle = ~(low | high)
        out[low] = self.model.f_zero() + self.slope_plateau * zs[low]
        out[high] = HEXAGON_CONSTANT / zs[high]
        assert self._b_of_log_z is not None
        out[middle] = self._b_of_log_z(np.log(zs[middle]))
        return out

    def b_prime(self, z: npt.ArrayLike) -> FloatArray:
        """Interpolate ``B'`` with the same extensions as :meth:`b`."""
        zs = np.asarray(z, dtype=np.float64)
        if self.model.is_balanced:
            return -HEXAGON_CONSTANT / zs**2
        out = np.empty_like(zs)
        low = zs <= max(self.z_plateau, self.z_min)
        high = zs > self.z_max
        middle = ~(low | high)
        out[low] = self.slope_plateau
        out[high] = -HEXAGON_CONSTANT / zs[high] ** 2
        assert self._bp_of_log_z is not None
        out[middle] = self._bp_of_log_z(np.log(zs[middle]))
        return out

    def invert(self, s: npt.ArrayLike) -> FloatArray:
        """Invert ``B'`` on ``(slope, 0)`` for an array of slopes.

        Slopes steeper than the table resolves map to ``z_min``; slopes closer
        to zero than ``B'(z_max)`` use the small-cell limit ``√((5√3/54)/(-s))``.
        """
        slopes = np.asarray(s, dtype=np.float64)
        if np.any(slopes >= 0.0) or np.any(slopes <= self.slope_plateau):
            raise OutOfRangeError(
                f"Invalid slope: outside ({self.slope_plateau:.6g}, 0) for model "
                f"{self.model.kind.value}."
            )
        if self.model.is_balanced:
            return np.sqrt(HEXAGON_CONSTANT / -slopes)
        assert self._log_z_of_bp is not None
        lowest, highest = self._log_z_of_bp.x[0], self._log_z_of_bp.x[-1]
        out = np.empty_like(slopes)
        below = slopes < lowest
        above = slopes > highest
        inside = ~(below | above)
        out[inside] = np.exp(self._log_z_of_bp(slopes[inside]))
        out[above] = np.sqrt(HEXAGON_CONSTANT / -slopes[above])
        out[below] = self.z_min
        if np.any(below):
            logger.warning(
                "B' inversion clamped %d slope(s) below the table range to z=%.3g",
                int(np.count_nonzero(below)),
                self.z_min,
            )
        return out


def build_cell_table(
    m: EntropyModel,
    z_min: float = 1e-4,
    z_max: float = 1e4,
    num_samples: int = 400,
) -> CellProblemTable:
    """Tabulate ``B`` and ``B'`` on ``num_samples`` log-spaced densities.

    Raises
    ------
    InvalidArgumentError
        If the range is empty or has fewer than two samples
    """
    if not (0.0 < z_min < z_max) or num_samples < 2:
        raise invalid(
            "table range", (z_min, z_max, num_samples), "0 < z_min < z_max, n ≥ 2"
        )
    unit = m.at_scale(1.0)
    zs = np.geomspace(z_min, z_max, num_samples)
    z_plateau, slope = plateau_constants(unit)
    if unit.is_balanced:
        b_values = HEXAGON_CONSTANT / zs
        b_prime_values = -HEXAGON_CONSTANT / zs**2
    else:
        b_values = np.array([cell_b(unit, z) for z in zs])
        b_prime_values = np.array([cell_b_prime(unit, z) for z in zs])
    logger.info(
        "Cell problem table (%s): %d samples on [%g, %g], Z=%.6g, slope=%.6g",
        unit.kind.value,
        num_samples,
        z_min,
        z_max,
        z_plateau,
        slope,
    )
    return CellProblemTable(
        model=unit,
        z_samples=zs,
        b_values=b_values,
        b_prime_values=b_prime_values,
        z_plateau=z_plateau,
        slope_plateau=slope,
    )


def b_conjugate(table: CellProblemTable, t: npt.ArrayLike) -> FloatArray:
    """Evaluate ``B*(t) = sup_{z ≥ 0} (t z - B(z))``.

    ``-F(0)`` for ``t ≤ slope``, ``t z* - B(z*)`` with ``B'(z*) = t`` on
    ``(slope, 0)``, ``0`` at ``t = 0`` and ``+inf`` for ``t > 0``.
    """
    ts = np.asarray(t, dtype=np.float64)
    out = np.full_like(ts, math.inf)
    out[ts == 0.0] = 0.0
    flat = ts <= table.slope_plateau
    out[flat] = -table.model.f_zero()
    inner = (ts > table.slope_plateau) & (ts < 0.0)
    if np.any(inner):
        z = table.invert(ts[inner])
        out[inner] = ts[inner] * z - table.b(z)
    return out


@dataclass(frozen=True)
class AsymptoticDensityResult:
    """Asymptotically optimal point density for a given ``P``.

    Attributes
    ----------
    multiplier : float
        Lagrange multiplier ``λ < 0``
    density : GridDensity
        ``D``, points per unit area after ε-normalization
    energy : float
        Limit energy ``∫ B(D(x)) m(x) dx``
    p_target : float
        ``P = ∫ D dx``
    """

    multiplier: float
    density: GridDensity
    energy: float
    p_target: float

    @property
    def zero_fraction(self) -> float:
        """Share of raster cells with zero point density."""
        return float(np.mean(self.density.values == 0.0))


def _balanced_density(g: GridDensity, P: float) -> AsymptoticDensityResult:
    root = np.sqrt(g.values)
    scale = P / (g.cell_area * float(root.sum()))
    density = root * scale
    charged = g.values > 0.0
    energy = HEXAGON_CONSTANT * g.cell_area * float(
        np.sum(g.values[charged] / density[charged])
    )
    multiplier = -HEXAGON_CONSTANT / scale**2
    return AsymptoticDensityResult(multiplier, g.with_values(density), energy, P)


def optimal_density(
    g: GridDensity,
    m: EntropyModel,
    P: float,
    table: Optional[CellProblemTable] = None,
) -> AsymptoticDensityResult:
    """Find ``λ < 0`` and ``D`` with ``D(x) ∈ ∂B*(λ / m(x))`` and ``∫ D dx = P``.

    Parameters
    ----------
    g : GridDensity
        The density ``m(x)`` of the measure to quantize
    m : EntropyModel
        Model (length scale ignored)
    P : float
        Limit of ``ε_M² M``, strictly positive
    table : CellProblemTable, optional
        Precomputed table for ``m``; built with defaults when omitted

    Returns
    -------
    AsymptoticDensityResult
        Multiplier, density raster and limit energy

    Raises
    ------
    OutOfRangeError
        If ``P`` is not positive or cannot be bracketed
    InvalidArgumentError
        If ``g`` has no mass

    Note
    ----
    Where ``λ/m(x)`` equals the plateau slope the density may take any value
    in ``[0, Z]``; the mass constraint fixes that value by interpolating
    between the two sides of the bracket.
    """
    if not (math.isfinite(P) and P > 0.0):
        raise OutOfRangeError(f"Invalid P: {P!r}. Must be a finite positive number.")
    if total_mass(g) <= 0.0:
        raise invalid("total mass", total_mass(g), "positive")
    if m.is_balanced:
        result = _balanced_density(g, P)
        logger.info(
            "Asymptotic density (w2): lambda=%.8g, energy=%.8g",
            result.multiplier,
            result.energy,
        )
        return result

    table = table or build_cell_table(m)
    values = g.values
    charged = values > 0.0
    slope = table.slope_plateau

    def density_at(lam: float) -> FloatArray:
        out = np.zeros(g.shape)
        ratio = np.full(g.shape, -math.inf)
        ratio[charged] = lam / values[charged]
        active = ratio > slope
        if np.any(active):
            out[active] = table.invert(ratio[active])
        return out

    def mass_at(lam: float) -> float:
        return g.cell_area * float(density_at(lam).sum())

    lo = slope * float(values.max())
    hi = 0.5 * lo
    while mass_at(hi) < P:
        hi *= 0.5
        if hi > -1e-12:
            raise OutOfRangeError(
                f"Invalid P: {P!r}. Not attainable with a negative multiplier."
            )
    if not mass_at(lo) <= P:
        raise OutOfRangeError(
            f"Invalid P: {P!r}. Bracket [{lo:.6g}, {hi:.6g}] does not enclose it."
        )

    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if mass_at(mid) < P:
            lo = mid
        else:
            hi = mid

    d_lo, d_hi = density_at(lo), density_at(hi)
    mass_lo = g.cell_area * float(d_lo.sum())
    mass_hi = g.cell_area * float(d_hi.sum())
    theta = 1.0 if mass_hi <= mass_lo else (P - mass_lo) / (mass_hi - mass_lo)
    density = d_lo + theta * (d_hi - d_lo)
    energy = g.cell_area * float(np.sum(table.b(density) * values))

    result = AsymptoticDensityResult(hi, g.with_values(density), energy, P)
    logger.info(
        "Asymptotic density (%s, P=%g): lambda=%.8g, energy=%.8g, "
        "zero density on %.1f%% of cells",
        m.kind.value,
        P,
        hi,
        energy,
        100.0 * result.zero_fraction,
    )
    return result


def lattice_bounds(
    m: EntropyModel,
    omega_area: float,
    M: int,
    eps: float,
    perimeter: Optional[float] = None,
) -> Tuple[float, float]:
    """Return the crystallization bounds ``(lower, upper_extra)`` on the quantization energy.

    ``lower = |Ω| B(ε² M / |Ω|)`` bounds every ``M``-point configuration;
    ``lower + upper_extra`` with
    ``upper_extra = F(0) |∂Ω| √(8|Ω| / (3√3 M))`` is attained by the triangular
    lattice. ``perimeter`` defaults to that of a square of area ``|Ω|``.

    Example
    -------
    >>> lower, extra = lattice_bounds(EntropyModel.parse("w2"), 1.0, 1, 1.0)
    >>> round(lower, 7), extra
    (0.1603751, inf)
    """
    if M < 1:
        raise invalid("M", M, "at least 1")
    if omega_area <= 0.0 or eps <= 0.0:
        raise invalid("area and epsilon", (omega_area, eps), "strictly positive")
    boundary = 4.0 * math.sqrt(omega_area) if perimeter is None else float(perimeter)
    lower = omega_area * cell_b(m, eps**2 * M / omega_area)
    upper_extra = m.f_zero() * boundary * math.sqrt(
        8.0 * omega_area / (3.0 * math.sqrt(3.0) * M)
    )
    return lower, upper_extra


def triangular_lattice(domain: Domain, M: int) -> FloatArray:
    """Place ``M`` distinct points: a triangular lattice plus top-up points.

    The lattice spacing ``√(2|Ω|/(√3 M))`` gives hexagonal Voronoi cells of
    area ``|Ω|/M``; every lattice point whose hexagon fits inside the domain is
    kept, and the remaining points come from a coarse uniform grid.

    Example
    -------
    >>> triangular_lattice(Domain.square(1.0), 1).tolist()
    [[0.25, 0.25]]
    """
    if M < 1:
        raise invalid("M", M, "at least 1")
    spacing = math.sqrt(2.0 * domain.area / (math.sqrt(3.0) * M))
    half_height = spacing / math.sqrt(3.0)
    row_pitch = 0.5 * math.sqrt(3.0) * spacing
    slack = 1e-12 * max(domain.width, domain.height)

    points = []
    row = 0
    y = domain.y_min + half_height
    while y + half_height <= domain.y_max + slack and len(points) < M:
        x = domain.x_min + 0.5 * spacing * (1 + row % 2)
        while x + 0.5 * spacing <= domain.x_max + slack and len(points) < M:
            points.append((x, y))
            x += spacing
        row += 1
        y += row_pitch

    missing = M - len(points)
    if missing:
        per_side = math.ceil(math.sqrt(M)) + 1
        xs = domain.x_min + (np.arange(per_side) + 0.5) * domain.width / per_side
        ys = domain.y_min + (np.arange(per_side) + 0.5) * domain.height / per_side
        lattice = np.array(points).reshape(-1, 2)
        for cy in ys:
            for cx in xs:
                if missing == 0:
                    break
                near = np.isclose(lattice, (cx, cy), rtol=0.0, atol=slack)
                taken = np.any(np.all(near, axis=1))
                if not taken:
                    points.append((float(cx), float(cy)))
                    missing -= 1
    return np.array(points, dtype=np.float64)
