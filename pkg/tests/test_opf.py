import dataclasses

import numpy as np
import pytest

from pfapprox import opf
from pfapprox.netmodel import build_ybus
from pfapprox.opf import (
    MissingModel,
    OpfStructure,
    Variant,
    ac_evaluate,
    build_opf,
    grid_search_reference,
    solve_opf,
    train_approx_set,
)
from pfapprox.pfcore import Quantity


@pytest.fixture(scope="module")
def trained(opf_case):
    case, ybus = opf_case
    return train_approx_set(case, ybus, m=300, seed=2)


def test_structure_variables(opf_case):
    case, _ = opf_case
    st = OpfStructure(case)
    # one free active set point (the non-reference generator) plus two
    # generator-bus voltage set points
    assert st.nz == 3
    lo, hi = st.z_bounds()
    assert lo[0] == pytest.approx(case.gens[1].p_min)
    assert hi[0] == pytest.approx(case.gens[1].p_max)
    assert Quantity("slack_active") in st.quantities()


def test_apply_setpoints_round_trip(opf_case):
    case, _ = opf_case
    st = OpfStructure(case)
    z = np.array([0.8, 1.01, 1.02])
    mod = st.apply_setpoints(z)
    assert mod.gens[1].p_set == pytest.approx(0.8)
    assert {g.v_set for g in mod.gens} == {1.01, 1.02}


def test_non_dc_variant_requires_models(opf_case):
    case, _ = opf_case
    with pytest.raises(MissingModel):
        build_opf(case, Variant.LA, None)


def test_dc_variant_solves_without_models(opf_case):
    case, _ = opf_case
    sol = solve_opf(build_opf(case, Variant.DC, None))
    assert sol.status == "optimal"
    # DC dispatch balances generation against total load (losses excluded)
    st = OpfStructure(case)
    total_load = sum(b.p_load for b in case.buses)
    p_free = sol.setpoints[: len(st.free_gens)].sum()
    assert sol.model_cost is not None
    assert p_free <= total_load


def test_ac_evaluate_reports_true_cost(opf_case):
    case, ybus = opf_case
    st = OpfStructure(case)
    ev = ac_evaluate(case, st.nominal_z())
    assert ev.status == "optimal"
    assert ev.ac_cost > 0
    assert ev.max_v_violation >= 0.0


def test_all_variants_feasible_on_default_limits(opf_case, trained):
    case, ybus = opf_case
    for variant in Variant:
        sol = solve_opf(build_opf(case, variant, trained))
        assert sol.status == "optimal", variant
        ev = ac_evaluate(case, sol.setpoints)
        assert ev.status == "optimal"


def test_conservative_variants_cost_at_least_plain(opf_case, trained):
    case, _ = opf_case
    costs = {}
    for variant in (Variant.LA, Variant.CLA, Variant.RA, Variant.CRA):
        costs[variant] = solve_opf(build_opf(case, variant, trained)).model_cost
    # conservative surrogates can only shrink the feasible set
    assert costs[Variant.CLA] >= costs[Variant.LA] - 1e-6
    assert costs[Variant.CRA] >= costs[Variant.RA] - 1e-6


def test_tangent_cuts_under_approximate_cost(opf_case):
    case, _ = opf_case
    gen = case.gens[0]
    c2, c1, c0 = gen.cost
    cuts = opf._tangent_cuts(gen, 8)
    assert len(cuts) == 8
    for p in np.linspace(gen.p_min, gen.p_max, 40):
        true_cost = c2 * p * p + c1 * p + c0
        assert max(s * p + b for s, b in cuts) <= true_cost + 1e-9


def test_grid_search_reference_feasible(opf_case):
    case, ybus = opf_case
    cost, z = grid_search_reference(case, ybus, resolution=0.01, coarse=5)
    assert np.isfinite(cost)
    ev = ac_evaluate(case, z)
    assert ev.max_v_violation <= 1e-6
    assert ev.ac_cost == pytest.approx(cost)


def test_tight_limits_separate_dc_from_conservative(opf_case, trained):
    base, _ = opf_case
    buses = tuple(dataclasses.replace(b, v_max=1.02) for b in base.buses)
    case = dataclasses.replace(base, buses=buses)
    ybus = build_ybus(case)
    approx = train_approx_set(case, ybus, m=300, seed=2)
    dc = solve_opf(build_opf(case, Variant.DC, None))
    assert ac_evaluate(case, dc.setpoints).max_v_violation > 0
    for variant in (Variant.CLA, Variant.CRA):
        sol = solve_opf(build_opf(case, variant, approx))
        assert ac_evaluate(case, sol.setpoints).max_v_violation <= 1e-9
