"""CSV and JSON serialization of rasters, measures and run summaries.

Rasters are written row by row (row 0 at ``y_min``) with 17 significant
digits, so a save/load cycle reproduces finite values exactly; ``inf`` is
written literally. A density raster may carry a sidecar ``<name>.json`` with
its domain and resolution.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt

from src.calculators.errors import invalid
from src.measures.models import (
    DiscreteMeasure,
    Domain,
    GridDensity,
    gaussian_bump_density,
    uniform_density,
)

PathLike = Union[str, Path]

RASTER_FORMAT = "%.17g"
MEASURE_HEADER = "x,y,mass"


def save_raster(path: PathLike, raster: npt.ArrayLike) -> None:
    """Write a two-dimensional array as comma-separated rows."""
    values = np.asarray(raster, dtype=np.float64)
    if values.ndim != 2:
        raise invalid("raster", values.shape, "two-dimensional")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(target, values, delimiter=",", fmt=RASTER_FORMAT)


def save_labels(path: PathLike, labels: npt.ArrayLike) -> None:
    """Write an integer label raster (residual cells as 0)."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(target, np.asarray(labels, dtype=np.int64), delimiter=",", fmt="%d")


def load_raster(path: PathLike) -> npt.NDArray[np.float64]:
    """Read a raster written by :func:`save_raster`.

    Raises
    ------
    FileNotFoundError
        If the file does not exist
    InvalidArgumentError
        If the contents are not a rectangular table of numbers
    """
    source = Path(path)
    if not source.is_file():
        raise FileNotFoundError(f"Raster file not found: {source}")
    try:
        return np.loadtxt(source, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        constraint = f"a numeric CSV table ({exc})"
        raise invalid("raster file", str(source), constraint) from exc


def _header_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_density(path: PathLike, g: GridDensity) -> None:
    """Write a density raster and its ``{domain, nx, ny}`` sidecar."""
    target = Path(path)
    save_raster(target, g.values)
    d = g.domain
    header = {"domain": [d.x_min, d.x_max, d.y_min, d.y_max], "nx": g.nx, "ny": g.ny}
    _header_path(target).write_text(json.dumps(header, indent=2), encoding="utf-8")


def load_density_csv(path: PathLike, domain: Optional[Domain] = None) -> GridDensity:
    """Read a density raster; the sidecar's domain takes precedence over ``domain``."""
    source = Path(path)
    values = load_raster(source)
    sidecar = _header_path(source)
    if sidecar.is_file():
        header = json.loads(sidecar.read_text(encoding="utf-8"))
        try:
            domain = Domain(*header["domain"])
            shape = (int(header["ny"]), int(header["nx"]))
        except (KeyError, TypeError) as exc:
            raise invalid(
                "density header", sidecar.name, "a JSON object with domain, nx and ny"
            ) from exc
        if values.shape != shape:
            raise invalid("raster shape", values.shape, str(shape))
    if domain is None:
        raise invalid("domain", None, "given in the config or a sidecar header")
    return GridDensity.from_values(domain, values)


def load_density(
    source: str, domain: Domain, nx: int, ny: int, level: float = 1.0
) -> GridDensity:
    """Build the diffuse measure named by a configuration string.

    Parameters
    ----------
    source : str
        ``"uniform"``, ``"gaussian-bump"`` or ``"csv:<path>"``
    domain : Domain
        Domain of the synthetic densities (and of CSV rasters without sidecar)
    nx, ny : int
        Resolution of the synthetic densities
    level : float
        Value of the uniform density

    Returns
    -------
    GridDensity
        The rasterized measure
    """
    if source == "uniform":
        return uniform_density(domain, nx, ny, level)
    if source == "gaussian-bump":
        return gaussian_bump_density(domain, nx, ny)
    if source.startswith("csv:"):
        return load_density_csv(source[4:], domain)
    raise invalid("density", source, "'uniform', 'gaussian-bump' or 'csv:<path>'")


def save_measure(path: PathLike, nu: DiscreteMeasure) -> None:
    """Write sites and masses with columns ``x, y, mass``."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([nu.points, nu.masses])
    np.savetxt(
        target,
        table,
        delimiter=",",
        fmt=RASTER_FORMAT,
        header=MEASURE_HEADER,
        comments="",
    )


def load_measure(path: PathLike, domain: Domain) -> DiscreteMeasure:
    """Read a measure written by :func:`save_measure` (header row required)."""
    source = Path(path)
    if not source.is_file():
        raise FileNotFoundError(f"Measure file not found: {source}")
    try:
        table = np.loadtxt(source, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except ValueError as exc:
        constraint = f"columns {MEASURE_HEADER} ({exc})"
        raise invalid("measure file", str(source), constraint) from exc
    if table.shape[1] != 3:
        raise invalid("measure columns", table.shape[1], f"3 ({MEASURE_HEADER})")
    return DiscreteMeasure(table[:, :2], table[:, 2], domain)


def save_table(path: PathLike, columns: Mapping[str, Sequence[float]]) -> None:
    """Write named columns of equal length as a CSV with a header row."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([np.asarray(v, dtype=np.float64) for v in columns.values()])
    np.savetxt(
        target,
        data,
        delimiter=",",
        fmt=RASTER_FORMAT,
        header=",".join(columns),
        comments="",
    )


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays to JSON types; non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_json(path: PathLike, payload: Dict[str, Any]) -> None:
    """Write a summary document, indented, with strict JSON number handling."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_plain(payload), indent=2, allow_nan=False)
    target.write_text(text + "\n", encoding="utf-8")
