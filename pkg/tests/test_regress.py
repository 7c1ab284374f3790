import itertools

import numpy as np
import pytest

from pfapprox.pfcore import Quantity
from pfapprox.regress import (
    EQ,
    GE,
    LE,
    ApproximationModel,
    Direction,
    LinearProgram,
    fit_cla,
    fit_la,
    fit_rational,
    solve_lp,
)


def vertex_enumeration_optimum(lp: LinearProgram):
    """Brute-force LP oracle: evaluate c.x at every basic feasible point.

    Treats variable bounds as explicit half-planes, enumerates all n-subsets
    of the combined constraint rows, solves each square system, and keeps the
    best feasible vertex. Only practical for a handful of variables.
    """
    n = len(lp.c)
    rows, senses, rhs = [], [], []
    for row, sense, b in lp.rows:
        rows.append(np.asarray(row, dtype=float))
        senses.append(sense)
        rhs.append(b)
    for i, (lo, hi) in enumerate(lp.bounds):
        e = np.zeros(n)
        e[i] = 1.0
        if lo is not None:
            rows.append(e.copy())
            senses.append(GE)
            rhs.append(lo)
        if hi is not None:
            rows.append(e.copy())
            senses.append(LE)
            rhs.append(hi)
    a = np.array(rows)
    b = np.array(rhs)
    best = None
    for subset in itertools.combinations(range(len(rows)), n):
        sub = a[list(subset)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, b[list(subset)])
        feasible = all(
            (s == LE and r @ x <= bb + 1e-8)
            or (s == GE and r @ x >= bb - 1e-8)
            or (s == EQ and abs(r @ x - bb) <= 1e-8)
            for r, s, bb in zip(a, senses, b)
        )
        if feasible:
            val = float(lp.c @ x)
            if best is None or val < best:
                best = val
    return best


def random_bounded_lp(rng, n):
    lp = LinearProgram(
        c=rng.normal(size=n),
        bounds=[(-5.0, 5.0)] * n,
    )
    for _ in range(rng.integers(1, 2 * n + 1)):
        row = rng.normal(size=n)
        lp.add(row, rng.choice([LE, GE]), float(rng.normal()))
    return lp


def test_lp_agrees_with_vertex_oracle():
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(100):
        n = int(rng.integers(2, 5))
        lp = random_bounded_lp(rng, n)
        oracle = vertex_enumeration_optimum(lp)
        result = solve_lp(lp)
        if oracle is None:
            assert result.status == "infeasible"
            continue
        assert result.status == "optimal"
        assert result.value == pytest.approx(oracle, abs=1e-7)
        checked += 1
    assert checked >= 50


def test_lp_infeasible_classification():
    lp = LinearProgram(c=np.array([1.0]), bounds=[(0.0, 1.0)])
    lp.add(np.array([1.0]), GE, 2.0)
    assert solve_lp(lp).status == "infeasible"


def test_lp_unbounded_classification():
    lp = LinearProgram(c=np.array([-1.0]), bounds=[(0.0, None)])
    assert solve_lp(lp).status == "unbounded"


def _quadratic_samples(m=120, n=3, seed=4, noise=0.0):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1.0, 1.0, size=(m, n))
    beta = 1.0 + xs @ np.array([0.5, -0.3, 0.2][:n]) - 0.4 * np.sum(xs**2, axis=1)
    if noise:
        beta = beta + noise * rng.normal(size=m)
    return xs, beta


def test_la_recovers_exact_linear_data():
    rng = np.random.default_rng(1)
    xs = rng.uniform(-1, 1, size=(80, 3))
    a1 = np.array([2.0, -1.0, 0.5])
    beta = 3.0 + xs @ a1
    model, report = fit_la(xs, beta)
    assert model.a0 == pytest.approx(3.0, abs=1e-8)
    assert np.allclose(model.a1, a1, atol=1e-8)
    assert report.max_abs_err <= 1e-8


def test_cla_directions_hold_on_training_data():
    xs, beta = _quadratic_samples()
    over, _ = fit_cla(xs, beta, Direction.OVER)
    under, _ = fit_cla(xs, beta, Direction.UNDER)
    assert np.all(over.predict(xs) >= beta - 1e-6)
    assert np.all(under.predict(xs) <= beta + 1e-6)
    plain, plain_rep = fit_la(xs, beta)
    over_err = float(np.mean(np.abs(over.predict(xs) - beta)))
    assert over_err >= plain_rep.mean_abs_err - 1e-10


def test_rational_beats_linear_on_curved_data():
    xs, beta = _quadratic_samples()
    _, la_rep = fit_la(xs, beta)
    model, ra_rep = fit_rational(xs, beta, Direction.NONE)
    assert ra_rep.mean_abs_err <= la_rep.mean_abs_err + 1e-8
    assert ra_rep.iterations <= 15
    assert ra_rep.converged


def test_conservative_rational_directions_hold():
    xs, beta = _quadratic_samples()
    for direction in (Direction.OVER, Direction.UNDER):
        model, rep = fit_rational(xs, beta, direction)
        resid = model.predict(xs) - beta
        if direction is Direction.OVER:
            assert resid.min() >= -1e-6
        else:
            assert resid.max() <= 1e-6
        _, lin_rep = fit_cla(xs, beta, direction)
        assert rep.mean_abs_err <= lin_rep.mean_abs_err + 1e-8


def test_rational_denominator_floor():
    xs, beta = _quadratic_samples()
    model, _ = fit_rational(xs, beta, Direction.NONE, epsilon=0.1)
    denom = 1.0 + xs @ model.b1
    assert denom.min() >= 0.1 - 1e-8


def test_degenerate_design_flagged_and_tie_broken():
    # column 2 duplicates column 1, so coefficients are not identified
    rng = np.random.default_rng(9)
    base = rng.uniform(-1, 1, size=(60, 2))
    xs = np.column_stack([base, base[:, 1]])
    beta = 1.0 + base @ np.array([1.0, 2.0])
    model, report = fit_la(xs, beta)
    assert model.degenerate
    assert report.max_abs_err <= 1e-7
    # the L1 tie-break splits the duplicated coefficient consistently
    assert model.a1[1] + model.a1[2] == pytest.approx(2.0, abs=1e-6)


def test_model_serialization_round_trip():
    xs, beta = _quadratic_samples()
    q = Quantity("bus_voltage", 4)
    model, _ = fit_rational(xs, beta, Direction.OVER, quantity=q)
    doc = model.to_dict()
    again = ApproximationModel(
        kind=doc["kind"],
        a0=doc["a0"],
        a1=np.array(doc["a1"]),
        b1=np.array(doc["b1"]),
        direction=Direction(doc["direction"]),
        quantity=Quantity.from_label(doc["quantity"]),
        epsilon=doc["epsilon"],
    )
    assert np.allclose(again.predict(xs), model.predict(xs))
