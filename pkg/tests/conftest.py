import numpy as np
import pytest

from pfapprox.cases import case_text
from pfapprox.netmodel import build_ybus, parse_matpower
from pfapprox.pfcore import nominal_injections, solve_newton


@pytest.fixture(scope="session")
def two_bus():
    case = parse_matpower(case_text("case2"))
    return case, build_ybus(case)


@pytest.fixture(scope="session")
def feeder():
    case = parse_matpower(case_text("feeder6"))
    return case, build_ybus(case)


@pytest.fixture(scope="session")
def opf_case():
    case = parse_matpower(case_text("opf3"))
    return case, build_ybus(case)


@pytest.fixture(scope="session")
def feeder_solution(feeder):
    case, ybus = feeder
    sol = solve_newton(case, ybus, nominal_injections(case))
    assert sol.converged
    return sol


def random_operating_point(case, ybus, rng, spread=0.3):
    """Solve the power flow at a random injection inside the +-spread box."""
    x0 = nominal_injections(case)
    lo = np.minimum(x0 * (1 - spread), x0 * (1 + spread))
    hi = np.maximum(x0 * (1 - spread), x0 * (1 + spread))
    x = rng.uniform(lo, hi)
    sol = solve_newton(case, ybus, x)
    return x, sol
