"""Central finite-difference harness for gradient verification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Numeric gradient of a scalar-valued function by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + eps
        f_plus = f(x)
        x.flat[i] = orig - eps
        f_minus = f(x)
        x.flat[i] = orig
        grad.flat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-based relative error, robust near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.linalg.norm(a.ravel())), float(np.linalg.norm(b.ravel())), 1e-12)
    return float(np.linalg.norm((a - b).ravel())) / denom


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.tolerance

    def __str__(self) -> str:
        flag = "ok" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: rel error {self.rel_error:.3e} (tol {self.tolerance:.1e})"


def check_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic: np.ndarray,
    eps: float = 1e-5,
    tolerance: float = 1e-5,
    name: str = "gradient",
) -> GradCheckResult:
    """Compare an analytic gradient against central differences of f at x."""
    numeric = central_difference(f, x, eps=eps)
    return GradCheckResult(name=name, rel_error=relative_error(numeric, analytic), tolerance=tolerance)
