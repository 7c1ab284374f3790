"""[1/1] multivariate rational approximant built from local curvature.

Given a function value, gradient, and Hessian at an expansion point, the
denominator coefficients minimize the Frobenius norm of the symmetrized
coefficient-matching residual in closed form. Taylor baselines of order 1
and 2 share the evaluation interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regress import ApproximationModel


class VanishingGradient(Exception):
    pass


@dataclass(frozen=True)
class PadeModel:
    x0: np.ndarray
    a0: float
    a1: np.ndarray
    b1: np.ndarray
    epsilon: float = 0.1
    gradient_fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": "pade",
            "x0": self.x0.tolist(),
            "a0": self.a0,
            "a1": self.a1.tolist(),
            "b1": self.b1.tolist(),
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class TaylorModel:
    order: int  # 1 or 2
    x0: np.ndarray
    f0: float
    grad: np.ndarray
    hessian: np.ndarray | None = None


def pade11(
    f0: float, grad: np.ndarray, lam: np.ndarray, x0: np.ndarray | None = None
) -> PadeModel:
    """Construct the [1/1] approximant at x0 from (f0, gradient, Hessian).

    The denominator vector solves
        min_b || b g' + g b' + lam ||_F
    in closed form; the numerator then matches value and gradient at x0.
    A vanishing gradient leaves the objective insensitive to b, so b = 0
    is returned with a flag instead of raising.
    """
    grad = np.atleast_1d(np.asarray(grad, dtype=float))
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    n = len(grad)
    if x0 is None:
        x0 = np.zeros(n)
    gnorm2 = float(grad @ grad)
    if gnorm2 <= 1e-24:
        b1 = np.zeros(n)
        fallback = True
    else:
        s = -float(grad @ lam @ grad) / (2.0 * gnorm2)
        b1 = (-(lam @ grad) - s * grad) / gnorm2
        fallback = False
    a1 = grad + f0 * b1
    return PadeModel(
        x0=np.asarray(x0, dtype=float),
        a0=float(f0),
        a1=a1,
        b1=b1,
        gradient_fallback=fallback,
    )


def frobenius_objective(b1: np.ndarray, grad: np.ndarray, lam: np.ndarray) -> float:
    """The matrix-residual norm that pade11 minimizes (oracle hook)."""
    m = np.outer(b1, grad) + np.outer(grad, b1) + lam
    return float(np.linalg.norm(m, "fro"))


def evaluate(model, x: np.ndarray) -> float:
    """Evaluate any approximation model at a point (raw template value)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(model, PadeModel):
        dx = x - model.x0
        return float((model.a0 + model.a1 @ dx) / (1.0 + model.b1 @ dx))
    if isinstance(model, TaylorModel):
        dx = x - model.x0
        val = model.f0 + model.grad @ dx
        if model.order == 2:
            val += 0.5 * dx @ model.hessian @ dx
        return float(val)
    if isinstance(model, ApproximationModel):
        return float(model.predict(x)[0])
    raise TypeError(f"cannot evaluate {type(model).__name__}")


def evaluate_with_domain(model, x: np.ndarray) -> tuple[float, float, bool]:
    """Evaluate a rational model, reporting the raw denominator.

    Returns (value, denominator, in_domain) where in_domain is False when
    the denominator drops below the model's floor.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(model, PadeModel):
        denom = float(1.0 + model.b1 @ (x - model.x0))
    elif isinstance(model, ApproximationModel) and model.kind == "rational":
        denom = float(1.0 + model.b1 @ x)
    else:
        return evaluate(model, x), 1.0, True
    eps = getattr(model, "epsilon", 0.1)
    return evaluate(model, x), denom, denom >= eps


def to_linear_constraint(model, bound: float, sense: str) -> tuple[np.ndarray, float]:
    """Linear inequality equivalent to (rational model) <= or >= bound.

    Valid under a positive denominator. Returns (coeffs, rhs) with the
    meaning coeffs.x <= rhs for sense "<=" and coeffs.x >= rhs for ">=".
    """
    if isinstance(model, PadeModel):
        a0, a1, b1, x0 = model.a0, model.a1, model.b1, model.x0
    elif isinstance(model, ApproximationModel):
        a0, a1, b1 = model.a0, model.a1, model.b1
        x0 = np.zeros(len(a1))
    else:
        raise TypeError(f"cannot linearize {type(model).__name__}")
    coeffs = a1 - bound * b1
    rhs = bound - a0 + float(coeffs @ x0)
    if sense not in ("<=", ">="):
        raise ValueError("sense must be '<=' or '>='")
    return coeffs, rhs
