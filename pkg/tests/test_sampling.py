import numpy as np
import pytest

from pfapprox.pfcore import Quantity, nominal_injections
from pfapprox.regress import Direction, fit_cla
from pfapprox.sampling import (
    AllSamplesFailed,
    EmptyBasis,
    ImportanceConfig,
    OperatingRange,
    Placement,
    SampleSet,
    draw_subspace,
    draw_uniform,
    evaluate_samples,
    iterative_refinement,
    make_mixed_sampler,
    violation_rate,
)


def test_operating_range_box_handles_negative_nominal():
    box = OperatingRange(0.7, 1.3)
    lo, hi = box.box(np.array([2.0, -2.0]))
    assert np.allclose(lo, [1.4, -2.6])
    assert np.allclose(hi, [2.6, -1.4])


def test_uniform_draws_deterministic_and_in_box():
    nominal = np.array([1.0, -0.5, 0.2])
    box = OperatingRange(0.7, 1.3)
    xs1 = draw_uniform(nominal, box, 100, seed=42)
    xs2 = draw_uniform(nominal, box, 100, seed=42)
    assert np.array_equal(xs1, xs2)
    lo, hi = box.box(nominal)
    assert np.all(xs1 >= lo) and np.all(xs1 <= hi)
    assert not np.array_equal(xs1, draw_uniform(nominal, box, 100, seed=43))


def test_subspace_draws_stay_in_box_and_respect_placement():
    nominal = np.full(4, -1.0)
    box = OperatingRange(0.8, 1.2)
    lo, hi = box.box(nominal)
    vectors = np.eye(4)[:, :2]
    extreme = draw_subspace(nominal, vectors, box, 400, Placement.EXTREME, seed=1)
    central = draw_subspace(nominal, vectors, box, 400, Placement.CENTRAL, seed=1)
    for xs in (extreme, central):
        assert np.all(xs >= lo - 1e-12) and np.all(xs <= hi + 1e-12)
    # extreme placement concentrates mass away from the nominal point
    dev_e = np.abs(extreme - nominal).mean()
    dev_c = np.abs(central - nominal).mean()
    assert dev_e > 2 * dev_c


def test_subspace_empty_basis_raises():
    with pytest.raises(EmptyBasis):
        draw_subspace(
            np.zeros(3), np.zeros((3, 0)), OperatingRange(0.9, 1.1), 5,
            Placement.EXTREME, seed=0,
        )


def test_evaluate_samples_drops_unsolvable_points(feeder):
    case, ybus = feeder
    x0 = nominal_injections(case)
    q = Quantity("bus_voltage", 6)
    xs = np.vstack([x0, x0 * 50.0])  # the second point is far outside solvability
    ss = evaluate_samples(case, ybus, xs, [q])
    assert ss.m == 1
    assert ss.skipped == 1


def test_evaluate_samples_all_failed_raises(feeder):
    case, ybus = feeder
    x0 = nominal_injections(case)
    with pytest.raises(AllSamplesFailed):
        evaluate_samples(case, ybus, x0[None, :] * 50.0, [Quantity("bus_voltage", 6)])


def test_violation_rate_sign_conventions():
    xs = np.linspace(-1, 1, 21)[:, None]
    beta = 1.0 - xs[:, 0] ** 2
    q = Quantity("bus_voltage", 2)
    ss = SampleSet(xs=xs, betas={q: beta})
    over = fit_cla(xs[5:16], beta[5:16], Direction.OVER, quantity=q)[0]
    # the over model hugs the parabola's crown, so the flanks dip below it
    assert violation_rate(over, ss) == 0.0
    under = fit_cla(xs[5:16], beta[5:16], Direction.UNDER, quantity=q)[0]
    assert violation_rate(under, ss) > 0.0


def test_iterative_refinement_reduces_violations(feeder):
    case, ybus = feeder
    x0 = nominal_injections(case)
    box = OperatingRange(0.7, 1.3)
    q = Quantity("bus_voltage", 6)
    xs = draw_uniform(x0, box, 200, seed=0)
    initial = evaluate_samples(case, ybus, xs, [q], seed=0)

    def fit(ss):
        return fit_cla(ss.xs, ss.betas[q], Direction.UNDER, quantity=q)[0]

    cfg = ImportanceConfig(subspace_fraction=0.0)
    sampler = make_mixed_sampler(case, ybus, x0, box, [q], cfg, None, seed=5)
    model, history = iterative_refinement(fit, sampler, initial, rounds=3, batch=150)
    assert len(history) == 3
    assert history[-1] <= history[0]


def test_mixed_sampler_deterministic(feeder):
    case, ybus = feeder
    x0 = nominal_injections(case)
    box = OperatingRange(0.7, 1.3)
    q = Quantity("bus_voltage", 6)
    cfg = ImportanceConfig(subspace_fraction=0.5)
    vectors = np.eye(len(x0))[:, :2]
    sampler = make_mixed_sampler(case, ybus, x0, box, [q], cfg, vectors, seed=3)
    a = sampler(40, 0)
    b = sampler(40, 0)
    assert np.array_equal(a.xs, b.xs)
    assert not np.array_equal(a.xs, sampler(40, 1).xs)
