"""Limited-memory quasi-Newton minimization shared by the transport and quantization solvers."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.optimize import minimize

FloatArray = npt.NDArray[np.float64]
Objective = Callable[[FloatArray], Tuple[float, FloatArray]]

LBFGS_MEMORY: int = 10  # stored correction pairs
RELATIVE_DECREASE_TOL: float = 1e-15  # keep iterating while f still decreases

logger = logging.getLogger(__name__)


@dataclass
class OptimizationRecord:
    """Outcome of a quasi-Newton run.

    Attributes
    ----------
    x : numpy.ndarray
        Final iterate
    fun : float
        Objective value at ``x``
    grad : numpy.ndarray
        Gradient at ``x``
    iterations : int
        Quasi-Newton iterations performed
    evaluations : int
        Objective-and-gradient evaluations consumed
    converged : bool
        Whether ``max|grad| ≤ grad_tol`` was reached
    message : str
        Termination reason reported by the line-search driver
    history : list of float
        Objective value after every iteration, starting with ``f(x0)``
    """

    x: FloatArray
    fun: float
    grad: FloatArray
    iterations: int
    evaluations: int
    converged: bool
    message: str
    history: List[float] = field(default_factory=list)


class _CachedObjective:
    """Count evaluations and remember the latest one for the iteration callback."""

    def __init__(self, objective: Objective):
        self.objective = objective
        self.evaluations = 0
        self.last_x: Optional[FloatArray] = None
        self.last_value = np.inf
        self.last_grad: Optional[FloatArray] = None

    def __call__(self, x: FloatArray) -> Tuple[float, FloatArray]:
        if self.last_x is not None and np.array_equal(x, self.last_x):
            assert self.last_grad is not None
            return self.last_value, self.last_grad
        value, grad = self.objective(np.array(x, dtype=np.float64))
        self.evaluations += 1
        self.last_x = np.array(x, dtype=np.float64)
        self.last_value = float(value)
        self.last_grad = np.asarray(grad, dtype=np.float64)
        return self.last_value, self.last_grad


def projected_grad_norm(
    x: FloatArray,
    grad: FloatArray,
    bounds: Optional[Sequence[Tuple[float, float]]] = None,
) -> float:
    """Return the ∞-norm of the gradient with components blocked by active bounds removed."""
    if grad.size == 0:
        return 0.0
    free = np.array(grad, dtype=np.float64)
    if bounds is not None:
        lower = np.array([b[0] for b in bounds], dtype=np.float64)
        upper = np.array([b[1] for b in bounds], dtype=np.float64)
        free[(x <= lower) & (free > 0.0)] = 0.0
        free[(x >= upper) & (free < 0.0)] = 0.0
    return float(np.max(np.abs(free)))


def minimize_lbfgs(
    objective: Objective,
    x0: npt.ArrayLike,
    *,
    max_iter: int,
    grad_tol: float,
    max_evaluations: Optional[int] = None,
    bounds: Optional[Sequence[Tuple[float, float]]] = None,
) -> OptimizationRecord:
    """Minimize a smooth objective with L-BFGS and a Wolfe line search.

    Parameters
    ----------
    objective : callable
        Maps ``x`` to ``(f(x), ∇f(x))``
    x0 : array_like
        Starting point
    max_iter : int
        Maximum number of quasi-Newton iterations
    grad_tol : float
        Absolute tolerance on the (projected) gradient ∞-norm
    max_evaluations : int, optional
        Budget of objective evaluations, by default unlimited in practice
    bounds : sequence of (float, float), optional
        Box constraints per coordinate

    Returns
    -------
    OptimizationRecord
        Final iterate, value, gradient and bookkeeping
    """
    cached = _CachedObjective(objective)
    start = np.asarray(x0, dtype=np.float64).copy()
    history = [cached(start)[0]]

    def record_iteration(xk: FloatArray) -> None:
        value, grad = cached(xk)
        history.append(value)
        logger.debug(
            "L-BFGS: iteration %d, evaluations %d, value %.6e, max|grad| %.3e",
            len(history) - 1,
            cached.evaluations,
            value,
            float(np.max(np.abs(grad))) if grad.size else 0.0,
        )

    result = minimize(
        cached,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=record_iteration,
        options={
            "maxcor": LBFGS_MEMORY,
            "maxiter": int(max_iter),
            "maxfun": int(max_evaluations) if max_evaluations else 10 * max_iter + 100,
            "gtol": float(grad_tol),
            "ftol": RELATIVE_DECREASE_TOL,
        },
    )
    x_final = np.asarray(result.x, dtype=np.float64)
    value, grad = cached(x_final)
    converged = projected_grad_norm(x_final, grad, bounds) <= grad_tol
    if not converged:
        logger.info(
            "L-BFGS stopped without meeting the gradient tolerance: %s", result.message
        )
    return OptimizationRecord(
        x=x_final,
        fun=value,
        grad=grad,
        iterations=int(result.nit),
        evaluations=cached.evaluations,
        converged=converged,
        message=str(result.message),
        history=history,
    )
