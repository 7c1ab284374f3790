import numpy as np
import pytest

from pfapprox.cases import case_text
from pfapprox.netmodel import (
    BusKind,
    DanglingReference,
    MalformedRow,
    MissingSection,
    NoReference,
    ZeroImpedanceBranch,
    build_ybus,
    case_from_json,
    case_to_json,
    parse_matpower,
)

MINIMAL = """
function mpc = case2
mpc.baseMVA = 100;
mpc.bus = [
    1  3  0   0  0 0 1 1.0 0 345 1 1.1 0.9;
    2  1  20  5  0 0 1 1.0 0 345 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 150 -150 1.0 100 1 200 10;
];
mpc.branch = [
    1 2 0.0 0.1 0.0 0 0 0 0 0 1;
];
"""


def test_parse_minimal_case():
    case = parse_matpower(MINIMAL)
    assert case.base_mva == 100.0
    assert [b.kind for b in case.buses] == [BusKind.REF, BusKind.PQ]
    # loads are converted to per unit once at parse time
    assert case.buses[1].p_load == pytest.approx(0.20)
    assert case.buses[1].q_load == pytest.approx(0.05)
    assert case.gens[0].p_max == pytest.approx(2.0)


def test_parse_strips_comments_and_mpc_prefix():
    text = MINIMAL.replace("mpc.bus", "bus % trailing comment\n%full line\nmpc.bus", 1)
    case = parse_matpower(MINIMAL + "% end comment\n")
    assert len(case.buses) == 2


def test_missing_section_raises():
    with pytest.raises(MissingSection):
        parse_matpower("mpc.baseMVA = 100;\nmpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;];")


def test_malformed_row_raises():
    bad = MINIMAL.replace("1 2 0.0 0.1 0.0 0 0 0 0 0 1;", "1 2 0.0;")
    with pytest.raises(MalformedRow):
        parse_matpower(bad)


def test_dangling_branch_reference_raises():
    bad = MINIMAL.replace("1 2 0.0 0.1", "1 9 0.0 0.1")
    with pytest.raises(DanglingReference):
        parse_matpower(bad)


def test_no_reference_bus_raises():
    bad = MINIMAL.replace("1  3  0", "1  1  0")
    with pytest.raises(NoReference):
        parse_matpower(bad)


def test_zero_impedance_branch_raises():
    bad = MINIMAL.replace("1 2 0.0 0.1", "1 2 0.0 0.0")
    with pytest.raises(ZeroImpedanceBranch):
        build_ybus(parse_matpower(bad))


def test_out_of_service_gen_dropped():
    text = MINIMAL.replace(
        "1 0 0 150 -150 1.0 100 1 200 10;",
        "1 0 0 150 -150 1.0 100 1 200 10;\n    2 0 0 50 -50 1.0 100 0 80 10;",
    )
    case = parse_matpower(text)
    assert len(case.gens) == 1


def test_two_bus_ybus_matches_hand_computation(two_bus):
    _, ybus = two_bus
    # series admittance of a lossless x = 0.1 branch is -10j
    expected = np.array([[-10j, 10j], [10j, -10j]])
    assert np.allclose(ybus.y, expected)
    assert np.allclose(ybus.b, expected.imag)
    assert np.allclose(ybus.g, 0.0)


def test_ybus_tap_and_shift():
    text = MINIMAL.replace(
        "1 2 0.0 0.1 0.0 0 0 0 0 0 1;",
        "1 2 0.0 0.1 0.0 0 0 0 1.05 30 1;",
    )
    case = parse_matpower(text)
    y = build_ybus(case).y
    ys = 1.0 / 0.1j
    tap = 1.05 * np.exp(1j * np.deg2rad(30.0))
    assert np.isclose(y[0, 0], ys / 1.05**2)
    assert np.isclose(y[0, 1], -ys / np.conj(tap))
    assert np.isclose(y[1, 0], -ys / tap)
    assert np.isclose(y[1, 1], ys)


def test_ybus_charging_and_shunt():
    text = MINIMAL.replace(
        "2  1  20  5  0 0", "2  1  20  5  5 -10"
    ).replace(
        "1 2 0.0 0.1 0.0", "1 2 0.0 0.1 0.2"
    )
    case = parse_matpower(text)
    y = build_ybus(case).y
    ys = 1.0 / 0.1j
    assert np.isclose(y[0, 0], ys + 0.1j)
    assert np.isclose(y[1, 1], ys + 0.1j + (5 - 10j) / 100.0)


def test_json_round_trip(feeder):
    case, _ = feeder
    again = case_from_json(case_to_json(case))
    assert again == case
    assert case_to_json(again) == case_to_json(case)


def test_gencost_rescaled_to_per_unit():
    case = parse_matpower(case_text("opf3"))
    c2, c1, c0 = case.gens[0].cost
    # quadratic/linear coefficients absorb the MVA base so cost(P_pu) is in $/h
    assert c2 == pytest.approx(0.08 * 100.0**2)
    assert c1 == pytest.approx(15.0 * 100.0)
    assert c0 == pytest.approx(0.0)


def test_nine_bus_fixture_counts():
    case = parse_matpower(case_text("case9"))
    assert len(case.buses) == 9
    assert len(case.branches) == 9
    assert len(case.gens) == 3
