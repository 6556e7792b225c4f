"""Entropy-transport models - marginal penalties, conjugates and radial costs.

This module provides the catalog of unbalanced transport models used by the
transport solver, the quantizer and the cell problem. Each model couples an
entropy function ``F`` penalizing marginal deviations with a radial cost
``ℓ(d/ε)`` at length scale ``ε``.

Features
--------
- W2: balanced transport, ``F = ι_{1}``, ``F*(z) = z``, ``ℓ(s) = s²``
- GHK: Gaussian Hellinger-Kantorovich, ``F(s) = s log s - s + 1``, ``ℓ(s) = s²``
- WFR: Wasserstein-Fisher-Rao, KL penalty with ``ℓ(s) = -2 log cos s`` up to ``π/2``
- QR: quadratic penalty ``F(s) = (s - 1)²`` with ``ℓ(s) = s²``
- Quantization kernel ``r(s)`` and the radial profile ``-F*(-ℓ(s))``

Dependencies
------------
- numpy: >=1.24.0 - Vectorized evaluation on rasters
- scipy: >=1.10.0 - ``xlogy`` for the ``0 log 0 = 0`` convention

Example
-------
>>> from src.calculators.entropy_models import EntropyModel
>>> model = EntropyModel.parse("qr")
>>> model.f_star(-2.0)
-1.0
>>> model.f_star_prime(-4.0)
0.0

Note
----
Every method accepts scalars or arrays. Scalars come back as ``float``,
arrays as ``numpy.ndarray`` of the same shape.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
import numpy.typing as npt
from scipy.special import xlogy

from src.calculators.errors import invalid

FloatArray = npt.NDArray[np.float64]
Values = Union[float, FloatArray]

BALANCED_TOL: float = 1e-9  # tolerance around s = 1 standing in for ι_{1}
WFR_CLAMP: float = 1e-12  # distance below π/2 where the WFR cost is clamped
HALF_PI: float = 0.5 * math.pi


class ModelKind(str, Enum):
    """Identifiers of the supported models, as written in configuration files."""

    W2 = "w2"
    GHK = "ghk"
    WFR = "wfr"
    QR = "qr"


def _values(x: npt.ArrayLike) -> FloatArray:
    return np.asarray(x, dtype=np.float64)


def _shape_like(result: FloatArray, template: npt.ArrayLike) -> Values:
    if np.ndim(template) == 0:
        return float(result)
    return result


@dataclass(frozen=True)
class EntropyModel:
    """An entropy-transport model at a given length scale.

    Attributes
    ----------
    kind : ModelKind
        Which of the four models
    epsilon : float
        Length scale, strictly positive; the cost is ``ℓ(d / ε)``

    Example
    -------
    >>> m = EntropyModel(ModelKind.WFR, epsilon=1.0)
    >>> round(m.cost(math.pi / 3), 6)
    1.386294
    >>> m.cost(2.0)
    inf
    """

    kind: ModelKind
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise invalid("epsilon", self.epsilon, "a finite positive length scale")

    @classmethod
    def parse(cls, name: str, epsilon: float = 1.0) -> "EntropyModel":
        """Build a model from its configuration string (``"w2"``, ``"ghk"``, ...)."""
        try:
            kind = ModelKind(name.strip().lower())
        except ValueError as exc:
            options = ", ".join(k.value for k in ModelKind)
            raise invalid("model", name, f"one of {options}") from exc
        return cls(kind, float(epsilon))

    def at_scale(self, epsilon: float) -> "EntropyModel":
        """Return the same model with a different length scale."""
        return EntropyModel(self.kind, epsilon)

    @property
    def is_balanced(self) -> bool:
        """Whether the marginal constraint is hard (W2)."""
        return self.kind is ModelKind.W2

    # Marginal penalty and its conjugate

    def f_value(self, s: npt.ArrayLike) -> Values:
        """Evaluate the entropy ``F(s)`` for ``s ≥ 0``.

        Raises
        ------
        InvalidArgumentError
            If any ``s`` is negative
        """
        arr = _values(s)
        if np.any(arr < 0.0):
            raise invalid("s", float(np.min(arr)), "nonnegative")
        if self.kind is ModelKind.W2:
            out = np.where(np.abs(arr - 1.0) <= BALANCED_TOL, 0.0, np.inf)
        elif self.kind is ModelKind.QR:
            out = (arr - 1.0) ** 2
        else:
            out = xlogy(arr, arr) - arr + 1.0
        return _shape_like(out, s)

    def f_zero(self) -> float:
        """Return ``F(0)``: the cost of destroying a unit of mass."""
        return math.inf if self.kind is ModelKind.W2 else 1.0

    def f_star(self, z: npt.ArrayLike) -> Values:
        """Evaluate the conjugate ``F*(z)``; ``z = -inf`` gives ``-F(0)``."""
        arr = _values(z)
        if self.kind is ModelKind.W2:
            out = arr.copy()
        elif self.kind is ModelKind.QR:
            t = np.maximum(arr, -2.0)
            out = 0.25 * t * t + t
        else:
            out = np.expm1(arr)
        return _shape_like(out, z)

    def f_star_prime(self, z: npt.ArrayLike) -> Values:
        """Evaluate ``(F*)'(z)``, the density multiplier of the first marginal."""
        arr = _values(z)
        if self.kind is ModelKind.W2:
            out = np.ones_like(arr)
        elif self.kind is ModelKind.QR:
            out = np.maximum(0.5 * arr + 1.0, 0.0)
        else:
            out = np.exp(arr)
        return _shape_like(out, z)

    # Radial cost

    def unit_cost(self, t: npt.ArrayLike) -> Values:
        """Evaluate ``ℓ(t)`` on an already scaled distance ``t = d / ε``."""
        arr = _values(t)
        if self.kind is ModelKind.WFR:
            clamped = np.minimum(arr, HALF_PI - WFR_CLAMP)
            out = np.where(arr >= HALF_PI, np.inf, -2.0 * np.log(np.cos(clamped)))
        else:
            out = arr * arr
        return _shape_like(out, t)

    def cost(self, s: npt.ArrayLike) -> Values:
        """Evaluate the transport cost ``ℓ(s / ε)`` of a Euclidean distance ``s``."""
        return _shape_like(_values(self.unit_cost(_values(s) / self.epsilon)), s)

    def cutoff_radius(self) -> float:
        """Distance beyond which the cost is infinite (``επ/2`` for WFR)."""
        if self.kind is ModelKind.WFR:
            return self.epsilon * HALF_PI
        return math.inf

    # Quantization quantities, in scaled units

    def radial_profile(self, t: npt.ArrayLike) -> Values:
        """Evaluate ``-F*(-ℓ(t))`` on a scaled distance: the quantization integrand.

        For W2 this is ``t²``, for GHK ``1 - exp(-t²)``, for WFR
        ``sin²(min(t, π/2))`` and for QR ``t² - t⁴/4`` up to ``√2``, then 1.
        """
        arr = _values(t)
        out = -_values(self.f_star(-_values(self.unit_cost(arr))))
        return _shape_like(out, t)

    def r_kernel(self, t: npt.ArrayLike) -> Values:
        """Evaluate the gradient kernel ``r(t) = [-F*∘(-ℓ)]'(t) / t`` on scaled ``t``."""
        arr = _values(t)
        if self.kind is ModelKind.W2:
            out = np.full_like(arr, 2.0)
        elif self.kind is ModelKind.GHK:
            out = 2.0 * np.exp(-arr * arr)
        elif self.kind is ModelKind.QR:
            out = np.maximum(2.0 - arr * arr, 0.0)
        else:
            safe = np.where(arr > 0.0, arr, 1.0)
            inside = np.where(arr > 0.0, np.sin(2.0 * arr) / safe, 2.0)
            out = np.where(arr <= HALF_PI, inside, 0.0)
        return _shape_like(out, t)

    def saturation_radius(self) -> float:
        """Scaled radius from which the radial profile is constant (``F(0)``)."""
        if self.kind is ModelKind.WFR:
            return HALF_PI
        if self.kind is ModelKind.QR:
            return math.sqrt(2.0)
        return math.inf

    def profile_breakpoints(self) -> tuple[float, ...]:
        """Scaled radii where the radial profile changes character, for quadrature."""
        if self.kind is ModelKind.GHK:
            return (6.0,)  # 1 - exp(-t²) equals 1 to double precision beyond
        saturation = self.saturation_radius()
        return (saturation,) if math.isfinite(saturation) else ()

    def describe(self) -> dict[str, object]:
        """Return the configuration representation ``{"kind", "epsilon"}``."""
        return {"kind": self.kind.value, "epsilon": self.epsilon}
