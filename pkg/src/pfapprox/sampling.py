"""Injection sampling over an operating range and violation-driven refinement.

Samplers are pure functions of their inputs and seed. Evaluation solves
one power flow per row and extracts every requested quantity from that
single solution; non-convergent rows are dropped and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .netmodel import AdmittanceMatrix, NetworkCase
from .pfcore import Quantity, extract_quantity, nominal_injections, solve_newton
from .regress import ApproximationModel, Direction


class EmptyBasis(Exception):
    pass


class AllSamplesFailed(Exception):
    pass


class Placement(Enum):
    EXTREME = "extreme"
    CENTRAL = "central"
    MIXED = "mixed"


@dataclass(frozen=True)
class OperatingRange:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("lower must be <= upper")

    def box(self, nominal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = self.lower * nominal
        b = self.upper * nominal
        return np.minimum(a, b), np.maximum(a, b)


@dataclass
class SampleSet:
    xs: np.ndarray  # M x n
    betas: dict[Quantity, np.ndarray]
    skipped: int = 0
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.xs.shape[0]

    def extend(self, other: "SampleSet") -> "SampleSet":
        return SampleSet(
            xs=np.vstack([self.xs, other.xs]),
            betas={
                q: np.concatenate([v, other.betas[q]])
                for q, v in self.betas.items()
            },
            skipped=self.skipped + other.skipped,
            seed=self.seed,
        )

    def select(self, mask: np.ndarray) -> "SampleSet":
        return SampleSet(
            xs=self.xs[mask],
            betas={q: v[mask] for q, v in self.betas.items()},
            skipped=self.skipped,
            seed=self.seed,
        )


@dataclass(frozen=True)
class ImportanceConfig:
    subspace_fraction: float = 0.5
    placement: Placement = Placement.MIXED
    k: int = 3
    step_scale: float = 1.0

    def __post_init__(self):
        if not 0 <= self.subspace_fraction <= 1:
            raise ValueError("subspace_fraction must be in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def draw_uniform(
    nominal: np.ndarray, rng_box: OperatingRange, m: int, seed: int
) -> np.ndarray:
    """Componentwise uniform draws inside the multiplicative box."""
    if m < 1:
        raise ValueError("m must be >= 1")
    lo, hi = rng_box.box(nominal)
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(m, len(nominal)))


def draw_subspace(
    nominal: np.ndarray,
    vectors: np.ndarray,
    rng_box: OperatingRange,
    m: int,
    placement: Placement,
    seed: int,
    step_scale: float = 1.0,
) -> np.ndarray:
    """Samples biased along the sign patterns of the dominant directions.

    For each sample one direction is picked; the deviation heads toward the
    box corner whose sign pattern matches that direction (the point of
    maximal excursion along it inside the box). Extreme placement biases
    per-coordinate magnitudes toward the corner (u^(1/3)), central placement
    toward the nominal point (u^3), u uniform on [0, 1].
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.ndim != 2 or vectors.shape[1] == 0:
        raise EmptyBasis("subspace basis is empty")
    if vectors.shape[0] != len(nominal):
        vectors = vectors.T
    lo, hi = rng_box.box(nominal)
    half = (hi - lo) / 2.0
    rng = np.random.default_rng(seed)
    k = vectors.shape[1]
    n = len(nominal)
    xs = np.empty((m, n))
    for i in range(m):
        j = int(rng.integers(k))
        sign = rng.choice([-1.0, 1.0])
        u = rng.uniform(0.0, 1.0, size=n)
        mode = placement
        if placement is Placement.MIXED:
            mode = Placement.EXTREME if rng.uniform() < 0.5 else Placement.CENTRAL
        mag = u**3 if mode is Placement.CENTRAL else u ** (1.0 / 3.0)
        d = sign * step_scale * mag * half * np.sign(vectors[:, j])
        xs[i] = nominal + d
    return np.clip(xs, lo, hi)


def evaluate_samples(
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    xs: np.ndarray,
    quantities: list[Quantity],
    seed: int | None = None,
    tol: float = 1e-8,
) -> SampleSet:
    """Solve one power flow per row and extract every requested quantity."""
    if not quantities:
        raise ValueError("quantities must be non-empty")
    kept_rows = []
    betas: dict[Quantity, list[float]] = {q: [] for q in quantities}
    skipped = 0
    for x in np.atleast_2d(xs):
        sol = solve_newton(case, ybus, x, tol=tol)
        if not sol.converged:
            skipped += 1
            continue
        kept_rows.append(x)
        for q in quantities:
            betas[q].append(extract_quantity(sol, q, case))
    if not kept_rows:
        raise AllSamplesFailed("no sample converged")
    return SampleSet(
        xs=np.array(kept_rows),
        betas={q: np.array(v) for q, v in betas.items()},
        skipped=skipped,
        seed=seed,
    )


VIOLATION_TOL = 1e-9


def violation_mask(model: ApproximationModel, fresh: SampleSet) -> np.ndarray:
    """Rows of `fresh` strictly on the non-conservative side of the model."""
    beta = fresh.betas[model.quantity]
    pred = model.predict(fresh.xs)
    if model.direction is Direction.OVER:
        return beta > pred + VIOLATION_TOL
    if model.direction is Direction.UNDER:
        return beta < pred - VIOLATION_TOL
    return np.zeros(len(beta), dtype=bool)


def violation_rate(model: ApproximationModel, fresh: SampleSet) -> float:
    """Fraction of fresh samples violating the model's conservativeness."""
    return float(np.mean(violation_mask(model, fresh)))


def iterative_refinement(
    fit: Callable[[SampleSet], ApproximationModel],
    sampler: Callable[[int, int], SampleSet],
    initial: SampleSet,
    rounds: int,
    batch: int,
) -> tuple[ApproximationModel, list[float]]:
    """Alternate fresh sampling and refitting on conservativeness violations.

    `sampler(batch, round_index)` must return an evaluated SampleSet. Each
    round measures the violation rate of the current model on the fresh
    batch, appends violating samples to the training set, and refits.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    training = initial
    model = fit(training)
    history = []
    for r in range(rounds):
        fresh = sampler(batch, r)
        mask = violation_mask(model, fresh)
        history.append(float(np.mean(mask)))
        if mask.any():
            training = training.extend(fresh.select(mask))
            model = fit(training)
    return model, history


def make_mixed_sampler(
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    nominal: np.ndarray,
    rng_box: OperatingRange,
    quantities: list[Quantity],
    config: ImportanceConfig,
    vectors: np.ndarray | None,
    seed: int,
) -> Callable[[int, int], SampleSet]:
    """Sampler mixing uniform draws with dominant-subspace draws.

    With subspace_fraction 0 (or no basis) this degenerates to a uniform
    sampler; fraction 1 draws every sample in the subspace.
    """

    def sampler(batch: int, round_index: int) -> SampleSet:
        sub_seed = seed + 7919 * (round_index + 1)
        n_sub = 0 if vectors is None else int(round(batch * config.subspace_fraction))
        parts = []
        if batch - n_sub > 0:
            parts.append(draw_uniform(nominal, rng_box, batch - n_sub, sub_seed))
        if n_sub > 0:
            parts.append(
                draw_subspace(
                    nominal,
                    vectors,
                    rng_box,
                    n_sub,
                    config.placement,
                    sub_seed + 1,
                    step_scale=config.step_scale,
                )
            )
        xs = np.vstack(parts)
        return evaluate_samples(case, ybus, xs, quantities, seed=sub_seed)

    return sampler
