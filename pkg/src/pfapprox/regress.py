"""Linear programming core and constrained L1 regression fits.

Produces the linear (LA), conservative linear (CLA), rational (RA), and
conservative rational (CRA) coefficient sets. The L1 objectives and the
conservativeness / denominator-floor constraints reduce every fit to a
linear program.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog

LE, EQ, GE = "<=", "==", ">="


class NumericalFailure(Exception):
    pass


class DegenerateSamples(Exception):
    pass


class InfeasibleConservative(Exception):
    pass


@dataclass
class LinearProgram:
    """min c.x subject to rows (coeffs, sense, rhs) and variable bounds."""

    c: np.ndarray
    rows: list[tuple[np.ndarray, str, float]] = field(default_factory=list)
    bounds: list[tuple[float | None, float | None]] | None = None

    def add(self, coeffs, sense: str, rhs: float) -> None:
        self.rows.append((np.asarray(coeffs, dtype=float), sense, rhs))


@dataclass(frozen=True)
class LpResult:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    value: float | None = None


def solve_lp(lp: LinearProgram) -> LpResult:
    """Solve an LP, classifying infeasible and unbounded outcomes."""
    c = np.asarray(lp.c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise NumericalFailure("non-finite objective coefficients")
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for coeffs, sense, rhs in lp.rows:
        if not np.all(np.isfinite(coeffs)) or not np.isfinite(rhs):
            raise NumericalFailure("non-finite constraint data")
        if sense == LE:
            a_ub.append(coeffs)
            b_ub.append(rhs)
        elif sense == GE:
            a_ub.append(-coeffs)
            b_ub.append(-rhs)
        elif sense == EQ:
            a_eq.append(coeffs)
            b_eq.append(rhs)
        else:
            raise ValueError(f"unknown sense {sense!r}")
    bounds = lp.bounds if lp.bounds is not None else [(None, None)] * len(c)
    res = linprog(
        c,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 0:
        return LpResult(status="optimal", x=res.x, value=float(res.fun))
    if res.status == 2:
        return LpResult(status="infeasible")
    if res.status == 3:
        return LpResult(status="unbounded")
    raise NumericalFailure(f"LP solver failed: {res.message}")


class Direction(Enum):
    OVER = "over"
    UNDER = "under"
    NONE = "none"


@dataclass(frozen=True)
class ApproximationModel:
    kind: str  # "linear" | "rational"
    a0: float
    a1: np.ndarray
    b1: np.ndarray
    direction: Direction
    quantity: object = None
    epsilon: float = 0.1
    degenerate: bool = False

    def predict(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(xs)
        num = self.a0 + xs @ self.a1
        if self.kind == "linear":
            return num
        return num / (1.0 + xs @ self.b1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "a0": self.a0,
            "a1": self.a1.tolist(),
            "b1": self.b1.tolist(),
            "direction": self.direction.value,
            "quantity": getattr(self.quantity, "label", lambda: None)(),
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class FitReport:
    mean_abs_err: float
    max_abs_err: float
    iterations: int = 0
    w_delta_history: tuple[float, ...] = ()
    converged: bool = True


def _true_errors(model: ApproximationModel, xs: np.ndarray, beta: np.ndarray):
    err = np.abs(beta - model.predict(xs))
    return float(np.mean(err)), float(np.max(err))


def _design_rank_deficient(xs: np.ndarray) -> bool:
    m, n = xs.shape
    design = np.hstack([np.ones((m, 1)), xs])
    return np.linalg.matrix_rank(design) < n + 1


def _linear_lp(
    xs: np.ndarray,
    beta: np.ndarray,
    direction: Direction,
    weights: np.ndarray | None = None,
) -> LinearProgram:
    """L1 fit of beta by a0 + a1.x with optional one-sided residual signs.

    Variables: [a0, a1 (n), t (M)] with t the split residual magnitudes.
    """
    m, n = xs.shape
    w = np.ones(m) if weights is None else weights
    nv = 1 + n + m
    c = np.zeros(nv)
    c[1 + n:] = w / m
    lp = LinearProgram(c=c, bounds=[(None, None)] * (1 + n) + [(0, None)] * m)
    for i in range(m):
        row = np.zeros(nv)
        row[0] = 1.0
        row[1 : 1 + n] = xs[i]
        row[1 + n + i] = -1.0
        # r_i = a0 + a1.x_i - beta_i;  |r_i| <= t_i
        lp.add(row, LE, beta[i])
        row2 = row.copy()
        row2[1 + n + i] = 1.0
        lp.add(row2, GE, beta[i])
        if direction is not Direction.NONE:
            sign_row = np.zeros(nv)
            sign_row[0] = 1.0
            sign_row[1 : 1 + n] = xs[i]
            lp.add(sign_row, GE if direction is Direction.OVER else LE, beta[i])
    return lp


def _tie_break_l1(lp: LinearProgram, n_coef: int, opt_value: float) -> LpResult:
    """Re-solve with the objective pinned, minimizing the L1 norm of [a0,a1]."""
    nv = len(lp.c) + n_coef  # add |a|-bounding variables
    c = np.zeros(nv)
    c[len(lp.c):] = 1.0
    tie = LinearProgram(
        c=c,
        bounds=(lp.bounds or [(None, None)] * len(lp.c)) + [(0, None)] * n_coef,
    )
    for coeffs, sense, rhs in lp.rows:
        tie.add(np.concatenate([coeffs, np.zeros(n_coef)]), sense, rhs)
    tie.add(np.concatenate([lp.c, np.zeros(n_coef)]), LE, opt_value + 1e-9)
    for j in range(n_coef):
        row = np.zeros(nv)
        row[j] = 1.0
        row[len(lp.c) + j] = -1.0
        tie.add(row, LE, 0.0)
        row2 = np.zeros(nv)
        row2[j] = 1.0
        row2[len(lp.c) + j] = 1.0
        tie.add(row2, GE, 0.0)
    res = solve_lp(tie)
    if res.status != "optimal":
        raise NumericalFailure("tie-break LP failed")
    return LpResult(status="optimal", x=res.x[: len(lp.c)], value=opt_value)


def fit_la(
    xs: np.ndarray, beta: np.ndarray, quantity=None
) -> tuple[ApproximationModel, FitReport]:
    """Unconstrained L1 linear fit (LA)."""
    return fit_cla(xs, beta, Direction.NONE, quantity=quantity)


def fit_cla(
    xs: np.ndarray,
    beta: np.ndarray,
    direction: Direction,
    quantity=None,
) -> tuple[ApproximationModel, FitReport]:
    """Conservative (or plain, direction NONE) L1 linear fit via LP."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    beta = np.asarray(beta, dtype=float)
    m, n = xs.shape
    degenerate = m < n + 1 or _design_rank_deficient(xs)
    lp = _linear_lp(xs, beta, direction)
    res = solve_lp(lp)
    if res.status == "infeasible":
        raise InfeasibleConservative("conservative linear fit is infeasible")
    if res.status != "optimal":
        raise NumericalFailure(f"linear fit LP {res.status}")
    if degenerate:
        res = _tie_break_l1(lp, 1 + n, res.value)
    model = ApproximationModel(
        kind="linear",
        a0=float(res.x[0]),
        a1=res.x[1 : 1 + n].copy(),
        b1=np.zeros(n),
        direction=direction,
        quantity=quantity,
        degenerate=degenerate,
    )
    mean_err, max_err = _true_errors(model, xs, beta)
    return model, FitReport(mean_abs_err=mean_err, max_abs_err=max_err)


def _rational_lp(
    xs: np.ndarray,
    beta: np.ndarray,
    direction: Direction,
    epsilon: float,
    weights: np.ndarray,
) -> LinearProgram:
    """Weighted L1 fit of the tilted rational residual, as an LP.

    Variables: [a0, a1 (n), b1 (n), t (M)]. The residual is
    r_i = a0 + a1.x_i - beta_i (1 + b1.x_i); weights compensate the
    denominator tilt.
    """
    m, n = xs.shape
    nv = 1 + 2 * n + m
    c = np.zeros(nv)
    c[1 + 2 * n:] = weights / m
    lp = LinearProgram(
        c=c, bounds=[(None, None)] * (1 + 2 * n) + [(0, None)] * m
    )
    for i in range(m):
        base = np.zeros(nv)
        base[0] = 1.0
        base[1 : 1 + n] = xs[i]
        base[1 + n : 1 + 2 * n] = -beta[i] * xs[i]
        row = base.copy()
        row[1 + 2 * n + i] = -1.0
        lp.add(row, LE, beta[i])
        row2 = base.copy()
        row2[1 + 2 * n + i] = 1.0
        lp.add(row2, GE, beta[i])
        if direction is not Direction.NONE:
            lp.add(base, GE if direction is Direction.OVER else LE, beta[i])
        # 1 + b1.x_i >= epsilon
        floor_row = np.zeros(nv)
        floor_row[1 + n : 1 + 2 * n] = xs[i]
        lp.add(floor_row, GE, epsilon - 1.0)
    return lp


def fit_rational(
    xs: np.ndarray,
    beta: np.ndarray,
    direction: Direction,
    quantity=None,
    epsilon: float = 0.1,
    w0: np.ndarray | None = None,
    tol: float = 1e-6,
    max_iter: int = 15,
) -> tuple[ApproximationModel, FitReport]:
    """Iteratively reweighted L1 rational fit (RA / CRA).

    Each pass solves the weighted LP, then resets the weights to the
    reciprocal of the fitted denominators; stops once the L1 change in the
    weights drops below tol. The best iterate by true rational residual is
    returned (the linear fit is always a candidate, so the rational model
    never loses to its linear counterpart on the training set).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    beta = np.asarray(beta, dtype=float)
    m, n = xs.shape

    def build_model(x_sol: np.ndarray) -> ApproximationModel:
        return ApproximationModel(
            kind="rational",
            a0=float(x_sol[0]),
            a1=x_sol[1 : 1 + n].copy(),
            b1=x_sol[1 + n : 1 + 2 * n].copy(),
            direction=direction,
            quantity=quantity,
            epsilon=epsilon,
        )

    # linear fit as a rational model with b1 = 0: baseline candidate
    lin_dir = direction
    lin_model, _ = fit_cla(xs, beta, lin_dir, quantity=quantity)
    best = ApproximationModel(
        kind="rational",
        a0=lin_model.a0,
        a1=lin_model.a1,
        b1=np.zeros(n),
        direction=direction,
        quantity=quantity,
        epsilon=epsilon,
    )
    best_err = _true_errors(best, xs, beta)[0]

    w = np.ones(m) if w0 is None else np.asarray(w0, dtype=float)
    if np.any(w <= 0):
        raise ValueError("w0 must be positive")
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        lp = _rational_lp(xs, beta, direction, epsilon, w)
        res = solve_lp(lp)
        if res.status == "infeasible":
            raise InfeasibleConservative("conservative rational fit is infeasible")
        if res.status != "optimal":
            raise NumericalFailure(f"rational fit LP {res.status}")
        model = build_model(res.x)
        err = _true_errors(model, xs, beta)[0]
        if err < best_err:
            best, best_err = model, err
        w_new = 1.0 / (1.0 + xs @ model.b1)
        delta = float(np.sum(np.abs(w_new - w)))
        history.append(delta)
        w = w_new
        if delta <= tol:
            converged = True
            break

    mean_err, max_err = _true_errors(best, xs, beta)
    return best, FitReport(
        mean_abs_err=mean_err,
        max_abs_err=max_err,
        iterations=iterations,
        w_delta_history=tuple(history),
        converged=converged,
    )
