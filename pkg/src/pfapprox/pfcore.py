"""AC power flow: Newton solver and complex-form Jacobian blocks.

The reduced unknown set is theta at PQ and PV buses plus V at PQ buses;
the reference angle and all regulated magnitudes are held fixed. Injection
vectors follow the same ordering: P at PQ and PV buses, then Q at PQ buses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .netmodel import AdmittanceMatrix, BusKind, NetworkCase


class DimensionMismatch(Exception):
    pass


class SingularJacobian(Exception):
    pass


class UnknownQuantity(Exception):
    pass


@dataclass(frozen=True)
class Quantity:
    """A scalar quantity of interest extracted from a power flow solution."""

    kind: str  # bus_voltage | branch_current | gen_reactive | slack_active
    index: int = 0  # bus id or branch position; unused for slack_active

    def label(self) -> str:
        prefix = {
            "bus_voltage": "V",
            "branch_current": "I",
            "gen_reactive": "Qg",
            "slack_active": "Pslack",
        }[self.kind]
        if self.kind == "slack_active":
            return prefix
        return f"{prefix}{self.index}"

    @staticmethod
    def from_label(label: str) -> "Quantity":
        if label == "Pslack":
            return Quantity("slack_active")
        for prefix, kind in (
            ("Qg", "gen_reactive"),
            ("V", "bus_voltage"),
            ("I", "branch_current"),
        ):
            if label.startswith(prefix):
                return Quantity(kind, int(label[len(prefix):]))
        raise UnknownQuantity(label)


class ReducedIndex:
    """Bus position bookkeeping for the reduced power flow system."""

    def __init__(self, case: NetworkCase):
        self.pqpv = [
            i for i, b in enumerate(case.buses) if b.kind is not BusKind.REF
        ]
        self.pq = [i for i, b in enumerate(case.buses) if b.kind is BusKind.PQ]
        self.ref = case.ref_pos()
        self.n_theta = len(self.pqpv)
        self.n_v = len(self.pq)
        self.n = self.n_theta + self.n_v

    def reduce_rows(self, top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
        """Stack [P rows at PQ+PV; Q rows at PQ] x [theta cols; V cols]."""
        return np.block(
            [
                [top[np.ix_(self.pqpv, self.pqpv)], bottom[np.ix_(self.pqpv, self.pq)]],
                [top[np.ix_(self.pq, self.pqpv)], bottom[np.ix_(self.pq, self.pq)]],
            ]
        )


def nominal_injections(case: NetworkCase) -> np.ndarray:
    """Reduced nominal injection vector [P at PQ+PV; Q at PQ], gen minus load."""
    idx = ReducedIndex(case)
    p = np.array([-b.p_load for b in case.buses])
    q = np.array([-b.q_load for b in case.buses])
    for g in case.gens:
        p[case.bus_pos(g.bus)] += g.p_set
    return np.concatenate([p[idx.pqpv], q[idx.pq]])


def flat_state(case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
    """Full-length flat start: V=1 / setpoints at regulated buses, theta=0."""
    v = np.ones(case.n)
    theta = np.zeros(case.n)
    for g in case.gens:
        v[case.bus_pos(g.bus)] = g.v_set
    return v, theta


def _assemble_state(
    case: NetworkCase, idx: ReducedIndex, y_red: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    v, theta = flat_state(case)
    theta[idx.pqpv] = y_red[: idx.n_theta]
    v[idx.pq] = y_red[idx.n_theta:]
    return v, theta


def complex_injections(v: np.ndarray, theta: np.ndarray, ybus: AdmittanceMatrix) -> np.ndarray:
    vc = v * np.exp(1j * theta)
    return vc * np.conj(ybus.y @ vc)


def mismatch(
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    x_spec: np.ndarray,
    y_red: np.ndarray,
) -> np.ndarray:
    """Residual [dP at PQ+PV; dQ at PQ]: specified minus computed injections."""
    idx = ReducedIndex(case)
    if x_spec.shape != (idx.n,) or y_red.shape != (idx.n,):
        raise DimensionMismatch(
            f"expected reduced vectors of length {idx.n}, "
            f"got x {x_spec.shape} and y {y_red.shape}"
        )
    v, theta = _assemble_state(case, idx, y_red)
    s = complex_injections(v, theta, ybus)
    calc = np.concatenate([s.real[idx.pqpv], s.imag[idx.pq]])
    return x_spec - calc


def complex_power_gradients(
    v: np.ndarray, theta: np.ndarray, ybus: AdmittanceMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Full complex blocks dS/dtheta and dS/dV at the given state."""
    if v.shape != theta.shape or v.shape != (ybus.n,):
        raise DimensionMismatch("state vectors must be full bus length")
    u = np.exp(1j * theta)
    vc = v * u
    i_inj = ybus.y @ vc
    ds_dtheta = 1j * np.diag(vc) @ np.conj(np.diag(i_inj) - ybus.y @ np.diag(vc))
    ds_dv = np.diag(u) @ np.conj(np.diag(i_inj)) + np.diag(vc) @ np.conj(
        ybus.y @ np.diag(u)
    )
    return ds_dtheta, ds_dv


def real_jacobian(
    ds_dtheta: np.ndarray, ds_dv: np.ndarray, case: NetworkCase
) -> np.ndarray:
    """Reduced real Jacobian of [P;Q] with respect to [theta;V]."""
    idx = ReducedIndex(case)
    top = np.hstack(
        [
            ds_dtheta.real[np.ix_(idx.pqpv, idx.pqpv)],
            ds_dv.real[np.ix_(idx.pqpv, idx.pq)],
        ]
    )
    bottom = np.hstack(
        [
            ds_dtheta.imag[np.ix_(idx.pq, idx.pqpv)],
            ds_dv.imag[np.ix_(idx.pq, idx.pq)],
        ]
    )
    return np.vstack([top, bottom])


def solve_linear(j: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """LU solve with an explicit small-pivot singularity guard."""
    with warnings.catch_warnings():
        # the pivot check below turns exact singularity into SingularJacobian
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(j, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < 1e-12:
        raise SingularJacobian("pivot below 1e-12 during factorization")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


@dataclass(frozen=True)
class PowerFlowSolution:
    v: np.ndarray
    theta: np.ndarray
    s_inj: np.ndarray
    branch_i: np.ndarray
    converged: bool
    iterations: int
    residual_inf: float


def solve_newton(
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    x_spec: np.ndarray,
    y0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 20,
) -> PowerFlowSolution:
    """Newton power flow. Non-convergence is returned as data, not raised."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    idx = ReducedIndex(case)
    if y0 is None:
        v0, th0 = flat_state(case)
        y = np.concatenate([th0[idx.pqpv], v0[idx.pq]])
    else:
        y = np.array(y0, dtype=float)
    converged = False
    iterations = 0
    for iterations in range(max_iter + 1):
        res = mismatch(case, ybus, x_spec, y)
        if np.max(np.abs(res)) <= tol:
            converged = True
            break
        if iterations == max_iter:
            break
        v, theta = _assemble_state(case, idx, y)
        j = real_jacobian(*complex_power_gradients(v, theta, ybus), case)
        y = y + solve_linear(j, res)

    v, theta = _assemble_state(case, idx, y)
    s = complex_injections(v, theta, ybus)
    res = mismatch(case, ybus, x_spec, y)
    return PowerFlowSolution(
        v=v,
        theta=theta,
        s_inj=s,
        branch_i=branch_currents(v, theta, case),
        converged=converged,
        iterations=iterations,
        residual_inf=float(np.max(np.abs(res))),
    )


def branch_currents(v: np.ndarray, theta: np.ndarray, case: NetworkCase) -> np.ndarray:
    """Per-branch from-end current magnitudes from the pi model, per unit."""
    vc = v * np.exp(1j * theta)
    mags = np.zeros(len(case.branches))
    for li, br in enumerate(case.branches):
        if not br.status:
            continue
        ys = 1.0 / complex(br.r, br.x)
        ysh = 1j * br.b_chg / 2.0
        tap = br.tap * np.exp(1j * br.shift)
        yff = (ys + ysh) / (abs(tap) ** 2)
        yft = -ys / np.conj(tap)
        f = case.bus_pos(br.from_bus)
        t = case.bus_pos(br.to_bus)
        mags[li] = abs(yff * vc[f] + yft * vc[t])
    return mags


def extract_quantity(
    solution: PowerFlowSolution, q: Quantity, case: NetworkCase
) -> float:
    """Read a scalar quantity of interest from a converged solution."""
    if q.kind == "bus_voltage":
        return float(solution.v[case.bus_pos(q.index)])
    if q.kind == "branch_current":
        return float(solution.branch_i[q.index])
    if q.kind == "gen_reactive":
        pos = case.bus_pos(q.index)
        return float(solution.s_inj.imag[pos] + case.buses[pos].q_load)
    if q.kind == "slack_active":
        pos = case.ref_pos()
        return float(solution.s_inj.real[pos] + case.buses[pos].p_load)
    raise UnknownQuantity(q.kind)


def solution_to_dict(solution: PowerFlowSolution, case: NetworkCase) -> dict:
    """JSON-ready bus and branch tables for a power flow solution."""
    return {
        "converged": solution.converged,
        "iterations": solution.iterations,
        "residual_inf": solution.residual_inf,
        "buses": [
            {
                "id": b.id,
                "v": float(solution.v[i]),
                "theta": float(solution.theta[i]),
                "p_inj": float(solution.s_inj.real[i]),
                "q_inj": float(solution.s_inj.imag[i]),
            }
            for i, b in enumerate(case.buses)
        ],
        "branches": [
            {
                "from_bus": br.from_bus,
                "to_bus": br.to_bus,
                "i_from": float(solution.branch_i[li]),
            }
            for li, br in enumerate(case.branches)
        ],
    }
