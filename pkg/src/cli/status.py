"""Command line status - logging setup, exit codes and error documents.

This module gives every command the same outward behaviour: log records on
stderr at a verbosity chosen by ``-v`` flags, a one-line certificate verdict,
and a machine-readable error document when a run fails.

Features
--------
- configure_logging: WARNING by default, INFO with ``-v``, DEBUG with ``-vv``
- exit_code_for: map library exceptions onto process exit codes
- certificate_status: verdict text and status for a gap or marginal defect
- report_error: write ``error.json`` and echo it on stderr

Dependencies
------------
- logging: Built-in - Progress and diagnostics on stderr
- json: Built-in - Error documents

Example
-------
>>> exit_code_for(FileNotFoundError("missing.csv"))
2
>>> certificate_status(2e-6, 1e-4)[1]
'success'
"""

import json
import logging
import sys
from pathlib import Path
from typing import Optional, Tuple

from src.calculators.errors import ConvergenceError, TransportError
from src.storage.files import write_json

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbosity: int = 0) -> None:
    """Send log records to stderr; ``verbosity`` counts ``-v`` flags."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def exit_code_for(error: BaseException) -> int:
    """Return the exit code of a failed run.

    Non-convergence exits with 3; invalid input, missing files, infeasible
    problems and out-of-range parameters exit with 2.
    """
    if isinstance(error, ConvergenceError):
        return EXIT_NOT_CONVERGED
    if isinstance(error, (TransportError, OSError, ValueError)):
        return EXIT_INVALID
    return 1


def certificate_status(defect: float, tolerance: float) -> Tuple[str, str]:
    """Describe an optimality certificate.

    Parameters
    ----------
    defect : float
        Duality gap or marginal defect of the final iterate
    tolerance : float
        Absolute tolerance the defect must meet

    Returns
    -------
    Tuple[str, str]
        ``(message, status)`` with status ``'success'`` or ``'warning'``
    """
    if defect <= tolerance:
        return f"certified: defect {defect:.3e} <= {tolerance:.3e}", "success"
    return f"not certified: defect {defect:.3e} > {tolerance:.3e}", "warning"


def report_error(error: BaseException, output_dir: Optional[Path]) -> int:
    """Write ``{"error", "message", "exit_code"}`` to stderr and ``error.json``.

    Returns
    -------
    int
        The exit code for ``error``
    """
    code = exit_code_for(error)
    document = {"error": type(error).__name__, "message": str(error), "exit_code": code}
    if output_dir is not None:
        try:
            write_json(output_dir / "error.json", document)
        except OSError:
            logging.getLogger(__name__).warning(
                "Could not write error.json to %s", output_dir
            )
    print(json.dumps(document), file=sys.stderr)
    return code
