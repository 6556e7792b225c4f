"""Canonical experiment setups.

Reference configurations of discrete measures and densities that the command
line presets and the acceptance tests build on. Site locations are stored
relative to the domain (fractions of width and height), masses relative to
the domain area, so every setup can be placed on any rectangle.
"""

import math
from typing import Dict, Tuple

import numpy as np

from src.calculators.errors import invalid
from src.measures.models import DiscreteMeasure, Domain

# Four sites compared across all transport models
RELATIVE_SITES: Tuple[Tuple[float, float], ...] = (
    (0.375, 0.375),
    (0.75, 0.35),
    (0.65, 0.75),
    (0.25, 0.8),
)
MASS_FRACTIONS: Tuple[float, ...] = (0.38, 0.29, 0.19, 0.14)

# Side length of the square used for the model comparison
COMPARISON_SIDE: float = 5.0

# Relative height of the row used for one-dimensional slices
SLICE_HEIGHT: float = 0.375

# Length scales for the WFR interpolation between Hellinger and W2
HELLINGER_EPSILONS: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.02)
WASSERSTEIN_EPSILONS: Tuple[float, ...] = (2.0, 5.0, 10.0)

# Limits of ε_M² M for the asymptotic point density sequence
ASYMPTOTIC_P_VALUES: Tuple[float, ...] = (2.4, 0.69, 0.28, 0.12, 0.049, 0.013)

# Half-width of the Gaussian bump domain [-4π, 4π]²
BUMP_HALF_WIDTH: float = 4.0 * math.pi


def comparison_domain() -> Domain:
    """Return ``[0, 5]²``."""
    return Domain.square(COMPARISON_SIDE)


def bump_domain() -> Domain:
    """Return ``[-4π, 4π]²``, the domain of the Gaussian bump density."""
    return Domain.square(2.0 * BUMP_HALF_WIDTH, origin=-BUMP_HALF_WIDTH)


def slice_height(domain: Domain) -> float:
    """Return the ordinate of the slice row, ``y_min + 0.375 · height``."""
    return domain.y_min + SLICE_HEIGHT * domain.height


def relative_sites(domain: Domain) -> DiscreteMeasure:
    """Place the four comparison sites on ``domain`` with masses ``|Ω| · fractions``.

    Example
    -------
    >>> nu = relative_sites(comparison_domain())
    >>> nu.points[0].tolist(), round(nu.total_mass, 12)
    ([1.875, 1.875], 25.0)
    """
    rel = np.array(RELATIVE_SITES)
    points = np.column_stack(
        [
            domain.x_min + rel[:, 0] * domain.width,
            domain.y_min + rel[:, 1] * domain.height,
        ]
    )
    masses = domain.area * np.array(MASS_FRACTIONS)
    return DiscreteMeasure(points, masses, domain)


def model_comparison_setup(domain: Domain) -> DiscreteMeasure:
    """Four-site measure compared across W2, GHK, WFR and QR (``[0, 5]²`` by default)."""
    return relative_sites(domain)


def wfr_base_setup(domain: Domain) -> DiscreteMeasure:
    """Four-site measure of the WFR length-scale study, usually on ``[0, 1]²``."""
    return relative_sites(domain)


PRESETS = {
    "model-comparison": model_comparison_setup,
    "wfr-base": wfr_base_setup,
}


def preset_measure(name: str, domain: Domain) -> DiscreteMeasure:
    """Build the discrete measure of a named preset on ``domain``.

    Raises
    ------
    InvalidArgumentError
        If the preset is unknown
    """
    try:
        builder = PRESETS[name]
    except KeyError as exc:
        raise invalid("preset", name, f"one of {', '.join(sorted(PRESETS))}") from exc
    return builder(domain)


def random_measure(domain: Domain, M: int, seed: int) -> DiscreteMeasure:
    """Draw ``M`` uniform sites with masses summing to ``|Ω|``.

    Masses are uniform on ``[0.5, 1.5]`` before normalization so none vanishes.
    """
    if M < 1:
        raise invalid("M", M, "at least 1")
    rng = np.random.default_rng(seed)
    points = np.column_stack(
        [
            rng.uniform(domain.x_min, domain.x_max, M),
            rng.uniform(domain.y_min, domain.y_max, M),
        ]
    )
    raw = rng.uniform(0.5, 1.5, M)
    return DiscreteMeasure(points, domain.area * raw / raw.sum(), domain)


def describe_presets() -> Dict[str, str]:
    """Return preset names with the first line of their builder docstring."""
    return {
        name: (builder.__doc__ or "").strip().splitlines()[0]
        for name, builder in PRESETS.items()
    }
