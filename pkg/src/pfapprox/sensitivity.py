"""First- and second-order sensitivities of the reduced power flow system.

Gamma matrices are the derivatives of the reduced real Jacobian with
respect to each reduced state coordinate; the second-order sensitivity of
a voltage magnitude with respect to the injections is assembled from the
inverse Jacobian and the Gamma stack, then symmetrized.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .netmodel import AdmittanceMatrix, NetworkCase
from .pfcore import (
    PowerFlowSolution,
    Quantity,
    ReducedIndex,
    complex_power_gradients,
    flat_state,
    nominal_injections,
    real_jacobian,
    solve_newton,
)


class EmptyMatrix(Exception):
    pass


class Curvature(Enum):
    CONCAVE = "concave"
    CONVEX = "convex"
    INDEFINITE = "indefinite"


def _block_derivatives_theta(
    k: int, v: np.ndarray, theta: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """d(dS/dtheta)/dtheta_k and d(dS/dV)/dtheta_k in complex form."""
    n = len(v)
    u = np.exp(1j * theta)
    vc = v * u
    i_inj = y @ vc
    ek = np.zeros(n)
    ek[k] = 1.0
    uk = u[k] * ek
    vk = vc[k] * ek
    c = np.diag(i_inj) - y @ np.diag(vc)
    da = -np.diag(vk) @ np.conj(c) + np.diag(vc) @ np.conj(
        np.diag(y @ vk) - y @ np.diag(vk)
    )
    db = 1j * (
        np.diag(uk) @ np.conj(np.diag(i_inj))
        - np.diag(u) @ np.conj(np.diag(y @ vk))
        + np.diag(vk) @ np.conj(y @ np.diag(u))
        - np.diag(vc) @ np.conj(y @ np.diag(uk))
    )
    return da, db


def _block_derivatives_v(
    k: int, v: np.ndarray, theta: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """d(dS/dtheta)/dV_k and d(dS/dV)/dV_k in complex form."""
    n = len(v)
    u = np.exp(1j * theta)
    vc = v * u
    i_inj = y @ vc
    ek = np.zeros(n)
    ek[k] = 1.0
    uk = u[k] * ek
    c = np.diag(i_inj) - y @ np.diag(vc)
    da = 1j * (
        np.diag(uk) @ np.conj(c)
        + np.diag(vc) @ np.conj(np.diag(y @ uk) - y @ np.diag(uk))
    )
    db = np.diag(u) @ np.conj(np.diag(y @ uk)) + np.diag(uk) @ np.conj(
        y @ np.diag(u)
    )
    return da, db


def jacobian_state_derivative(
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    v: np.ndarray,
    theta: np.ndarray,
    coord: int,
) -> np.ndarray:
    """Derivative of the reduced real Jacobian w.r.t. reduced coordinate `coord`."""
    idx = ReducedIndex(case)
    if coord < idx.n_theta:
        k = idx.pqpv[coord]
        da, db = _block_derivatives_theta(k, v, theta, ybus.y)
    else:
        k = idx.pq[coord - idx.n_theta]
        da, db = _block_derivatives_v(k, v, theta, ybus.y)
    return real_jacobian(da, db, case)


@dataclass(frozen=True)
class SensitivityBundle:
    j: np.ndarray  # reduced Jacobian
    gammas: np.ndarray  # (n, n, n): gammas[m] = dJ/dy_m
    first_order: np.ndarray  # J^-1 = grad_x y


def build_bundle(
    case: NetworkCase, ybus: AdmittanceMatrix, solution: PowerFlowSolution
) -> SensitivityBundle:
    """Assemble J, every Gamma, and the first-order sensitivities at a point."""
    idx = ReducedIndex(case)
    v, theta = solution.v, solution.theta
    j = real_jacobian(*complex_power_gradients(v, theta, ybus), case)
    gammas = np.empty((idx.n, idx.n, idx.n))
    for m in range(idx.n):
        gammas[m] = jacobian_state_derivative(case, ybus, v, theta, m)
    return SensitivityBundle(j=j, gammas=gammas, first_order=np.linalg.inv(j))


def voltage_coord(case: NetworkCase, bus_id: int) -> int:
    """Reduced coordinate of a PQ-bus voltage magnitude."""
    idx = ReducedIndex(case)
    pos = case.bus_pos(bus_id)
    if pos not in idx.pq:
        raise ValueError(f"bus {bus_id} is not a PQ bus")
    return idx.n_theta + idx.pq.index(pos)


@dataclass(frozen=True)
class SecondOrderSensitivity:
    target: Quantity
    lam: np.ndarray  # n x n symmetric, pu per pu^2
    asymmetry: float


def second_order(
    bundle: SensitivityBundle, k: int, target: Quantity | None = None
) -> SecondOrderSensitivity:
    """Second-order sensitivity matrix of state coordinate k w.r.t. injections."""
    s = bundle.first_order
    # t[i] = sum_m Gamma_m * dy_m/dx_i
    t = np.einsum("mab,mi->iab", bundle.gammas, s)
    lam = -np.einsum("a,iab,bc->ic", s[k], t, s)
    asym = float(np.max(np.abs(lam - lam.T)))
    if asym > 1e-8:
        raise AssertionError(f"second-order matrix asymmetry {asym:.3e} > 1e-8")
    return SecondOrderSensitivity(
        target=target or Quantity("bus_voltage", -1),
        lam=(lam + lam.T) / 2.0,
        asymmetry=asym,
    )


@dataclass(frozen=True)
class SpectralSummary:
    singular_values: np.ndarray
    dominant_vectors: np.ndarray  # orthonormal columns
    eigen_min: float
    eigen_max: float
    curvature: Curvature


def dominant_subspace(lam: np.ndarray, threshold: float = 0.1) -> SpectralSummary:
    """SVD summary retaining vectors with sigma >= threshold * sigma_max."""
    lam = np.asarray(lam, dtype=float)
    if lam.size == 0:
        raise EmptyMatrix("cannot decompose an empty matrix")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    u, sig, _ = np.linalg.svd(lam)
    keep = sig >= threshold * sig[0]
    eigs = np.linalg.eigvalsh((lam + lam.T) / 2.0)
    emin, emax = float(eigs[0]), float(eigs[-1])
    if emax <= 1e-6:
        curv = Curvature.CONCAVE
    elif emin >= -1e-6:
        curv = Curvature.CONVEX
    else:
        curv = Curvature.INDEFINITE
    return SpectralSummary(
        singular_values=sig,
        dominant_vectors=u[:, keep],
        eigen_min=emin,
        eigen_max=emax,
        curvature=curv,
    )


@dataclass(frozen=True)
class SpanStability:
    singular_values: np.ndarray
    approximate_rank: int
    skipped: int


def approximate_rank(sigmas: np.ndarray, rel: float = 0.01) -> int:
    if len(sigmas) == 0 or sigmas[0] == 0:
        return 0
    return int(np.sum(sigmas >= rel * sigmas[0]))


def span_stability(
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    lower: float,
    upper: float,
    count: int,
    k: int,
    target_coord: int,
    seed: int = 0,
) -> SpanStability:
    """Singular values of the stacked dominant-vector matrix over an operating range."""
    if count < 1 or k < 1:
        raise ValueError("count and k must be >= 1")
    rng = np.random.default_rng(seed)
    nominal = nominal_injections(case)
    lo = np.minimum(lower * nominal, upper * nominal)
    hi = np.maximum(lower * nominal, upper * nominal)
    columns = []
    skipped = 0
    for _ in range(count):
        x = rng.uniform(lo, hi)
        sol = solve_newton(case, ybus, x)
        if not sol.converged:
            skipped += 1
            continue
        bundle = build_bundle(case, ybus, sol)
        so = second_order(bundle, target_coord)
        u, _, _ = np.linalg.svd(so.lam)
        columns.append(u[:, :k])
    if not columns:
        raise EmptyMatrix("no converged samples for span stability")
    m = np.hstack(columns)
    sigmas = np.linalg.svd(m, compute_uv=False)
    return SpanStability(
        singular_values=sigmas,
        approximate_rank=approximate_rank(sigmas),
        skipped=skipped,
    )
