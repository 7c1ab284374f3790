"""Simplified optimal power flow with interchangeable constraint sets.

Variants DC, LA, CLA, RA, and CRA share one LP skeleton: generator active
powers (non-reference) and generator-bus voltage set points are the
decision variables, quadratic costs become tangent-cut under-approximations,
and load-bus voltage, generator reactive, and slack active limits are
enforced through the fitted approximation models. Every solution is
re-evaluated against the true AC power flow.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .netmodel import AdmittanceMatrix, BusKind, NetworkCase, build_ybus
from .pfcore import Quantity, extract_quantity, nominal_injections, solve_newton
from .regress import (
    GE,
    LE,
    EQ,
    ApproximationModel,
    Direction,
    LinearProgram,
    LpResult,
    solve_lp,
)
from . import pade, regress


class MissingModel(Exception):
    pass


class Variant(Enum):
    DC = "dc"
    LA = "la"
    CLA = "cla"
    RA = "ra"
    CRA = "cra"


class ApproxSet:
    """Fitted models keyed by (quantity label, kind, direction)."""

    def __init__(self):
        self._models: dict[tuple[str, str, str], ApproximationModel] = {}

    def add(self, model: ApproximationModel) -> None:
        key = (model.quantity.label(), model.kind, model.direction.value)
        self._models[key] = model

    def get(self, quantity: Quantity, kind: str, direction: Direction) -> ApproximationModel:
        key = (quantity.label(), kind, direction.value)
        if key not in self._models:
            raise MissingModel(f"no {kind}/{direction.value} model for {key[0]}")
        return self._models[key]

    def models(self) -> list[ApproximationModel]:
        return list(self._models.values())


class OpfStructure:
    """Decision-variable bookkeeping shared by all variants.

    z = [P at non-reference generators..., V at generator buses...].
    """

    def __init__(self, case: NetworkCase):
        self.case = case
        ref_bus = case.buses[case.ref_pos()].id
        self.free_gens = [i for i, g in enumerate(case.gens) if g.bus != ref_bus]
        self.ref_gens = [i for i, g in enumerate(case.gens) if g.bus == ref_bus]
        self.gen_buses = sorted({case.bus_pos(g.bus) for g in case.gens})
        self.load_buses = [
            i for i, b in enumerate(case.buses) if b.kind is BusKind.PQ
        ]
        self.nz = len(self.free_gens) + len(self.gen_buses)

    def nominal_z(self) -> np.ndarray:
        case = self.case
        p = [case.gens[i].p_set for i in self.free_gens]
        v = [
            max(g.v_set for g in case.gens_at(pos)) for pos in self.gen_buses
        ]
        return np.array(p + v)

    def z_bounds(
        self, v_box: tuple[float, float] | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        case = self.case
        lo, hi = [], []
        for i in self.free_gens:
            lo.append(case.gens[i].p_min)
            hi.append(case.gens[i].p_max)
        for pos in self.gen_buses:
            bus = case.buses[pos]
            vl, vh = (bus.v_min, bus.v_max) if v_box is None else v_box
            lo.append(vl)
            hi.append(vh)
        return np.array(lo), np.array(hi)

    def apply_setpoints(self, z: np.ndarray) -> NetworkCase:
        """Copy of the case with generator P/V set points taken from z."""
        case = self.case
        gens = list(case.gens)
        for col, gi in enumerate(self.free_gens):
            gens[gi] = dataclasses.replace(gens[gi], p_set=float(z[col]))
        nv = len(self.free_gens)
        vmap = {pos: float(z[nv + j]) for j, pos in enumerate(self.gen_buses)}
        for gi, g in enumerate(gens):
            pos = case.bus_pos(g.bus)
            if pos in vmap:
                gens[gi] = dataclasses.replace(gens[gi], v_set=vmap[pos])
        return dataclasses.replace(case, gens=tuple(gens))

    def quantities(self) -> list[Quantity]:
        """Quantities the OPF approximations must cover."""
        case = self.case
        qs = [Quantity("bus_voltage", case.buses[i].id) for i in self.load_buses]
        qs += [Quantity("gen_reactive", case.buses[pos].id) for pos in self.gen_buses]
        qs.append(Quantity("slack_active"))
        return qs


def _cost_poly(gen) -> tuple[float, float, float]:
    return gen.cost


def _tangent_cuts(gen, k: int) -> list[tuple[float, float]]:
    """(slope, intercept) tangent lines under-approximating the cost curve."""
    c2, c1, c0 = _cost_poly(gen)
    pts = np.linspace(gen.p_min, gen.p_max, k) if k > 1 else np.array([gen.p_min])
    cuts = []
    for p in pts:
        slope = 2 * c2 * p + c1
        cuts.append((slope, c2 * p * p + c1 * p + c0 - slope * p))
    return cuts


@dataclass
class OpfProblem:
    case: NetworkCase
    variant: Variant
    lp: LinearProgram
    structure: OpfStructure
    n_aux: int  # variables beyond z (epigraph, DC angles)
    z_slice: slice
    metadata: dict


@dataclass
class OpfSolution:
    status: str
    setpoints: np.ndarray | None = None  # z vector
    model_cost: float | None = None
    ac_cost: float | None = None
    max_v_violation: float | None = None
    q_violations: float | None = None


def _model_row(nz_total: int, coeffs: np.ndarray) -> np.ndarray:
    row = np.zeros(nz_total)
    row[: len(coeffs)] = coeffs
    return row


def build_opf(
    case: NetworkCase,
    variant: Variant,
    approx_set: ApproxSet | None = None,
    k_segments: int = 8,
    v_box: tuple[float, float] | None = None,
) -> OpfProblem:
    """Assemble the variant's LP over generator set points."""
    if variant is Variant.DC:
        return _build_dc(case, k_segments)
    if approx_set is None:
        raise MissingModel("non-DC variants require an approximation set")
    st = OpfStructure(case)
    nz = st.nz
    n_gens = len(case.gens)
    nv = nz + n_gens  # z plus one epigraph variable per generator
    c = np.zeros(nv)
    c[nz:] = 1.0
    z_lo, z_hi = st.z_bounds(v_box)
    bounds = [(float(a), float(b)) for a, b in zip(z_lo, z_hi)]
    bounds += [(None, None)] * n_gens
    lp = LinearProgram(c=c, bounds=bounds)

    kind = "rational" if variant in (Variant.RA, Variant.CRA) else "linear"
    conservative = variant in (Variant.CLA, Variant.CRA)
    d_hi = Direction.OVER if conservative else Direction.NONE
    d_lo = Direction.UNDER if conservative else Direction.NONE

    def add_limit(q: Quantity, upper: float, lower: float) -> None:
        mu = approx_set.get(q, kind, d_hi)
        ml = approx_set.get(q, kind, d_lo)
        cu, ru = pade.to_linear_constraint(mu, upper, "<=")
        cl, rl = pade.to_linear_constraint(ml, lower, ">=")
        lp.add(_model_row(nv, cu), LE, ru)
        lp.add(_model_row(nv, cl), GE, rl)

    # load-bus voltage limits through the fitted models
    for pos in st.load_buses:
        bus = case.buses[pos]
        add_limit(Quantity("bus_voltage", bus.id), bus.v_max, bus.v_min)

    # aggregate generator reactive limits per generator bus
    for pos in st.gen_buses:
        gens = case.gens_at(pos)
        add_limit(
            Quantity("gen_reactive", case.buses[pos].id),
            sum(g.q_max for g in gens),
            sum(g.q_min for g in gens),
        )

    # slack active power limits; cost sees the linear slack model
    ref_gen = case.gens[st.ref_gens[0]] if st.ref_gens else None
    slack_q = Quantity("slack_active")
    if ref_gen is not None:
        add_limit(slack_q, ref_gen.p_max, ref_gen.p_min)
        slack_lin = approx_set.get(slack_q, "linear", d_hi)

    # cost epigraph: tangent cuts under-approximate each quadratic cost
    for col, gi in enumerate(st.free_gens):
        gen = case.gens[gi]
        for slope, intercept in _tangent_cuts(gen, k_segments):
            row = np.zeros(nv)
            row[col] = -slope
            row[nz + gi] = 1.0
            lp.add(row, GE, intercept)
    for gi in st.ref_gens:
        gen = case.gens[gi]
        for slope, intercept in _tangent_cuts(gen, k_segments):
            # t_ref >= slope * (slack model of z) + intercept
            row = np.zeros(nv)
            row[:nz] = -slope * slack_lin.a1
            row[nz + gi] = 1.0
            lp.add(row, GE, intercept + slope * slack_lin.a0)

    return OpfProblem(
        case=case,
        variant=variant,
        lp=lp,
        structure=st,
        n_aux=n_gens,
        z_slice=slice(0, nz),
        metadata={"kind": kind, "k_segments": k_segments},
    )


def _build_dc(case: NetworkCase, k_segments: int) -> OpfProblem:
    """DC variant: B.theta flow balance, voltage constraints dropped."""
    st = OpfStructure(case)
    n = case.n
    n_gens = len(case.gens)
    # variables: [Pg (all gens), theta (all buses), t (epigraph per gen)]
    nv = n_gens + n + n_gens
    c = np.zeros(nv)
    c[n_gens + n:] = 1.0
    bounds = [(g.p_min, g.p_max) for g in case.gens]
    bounds += [(None, None)] * n
    bounds += [(None, None)] * n_gens
    lp = LinearProgram(c=c, bounds=bounds)

    bdc = np.zeros((n, n))
    for br in case.branches:
        if not br.status:
            continue
        b = 1.0 / br.x
        f, t = case.bus_pos(br.from_bus), case.bus_pos(br.to_bus)
        bdc[f, f] += b
        bdc[t, t] += b
        bdc[f, t] -= b
        bdc[t, f] -= b

    for i in range(n):
        row = np.zeros(nv)
        row[n_gens : n_gens + n] = bdc[i]
        for gi, g in enumerate(case.gens):
            if case.bus_pos(g.bus) == i:
                row[gi] = -1.0
        lp.add(row, EQ, -case.buses[i].p_load)
    ref_row = np.zeros(nv)
    ref_row[n_gens + case.ref_pos()] = 1.0
    lp.add(ref_row, EQ, 0.0)

    for gi, gen in enumerate(case.gens):
        for slope, intercept in _tangent_cuts(gen, k_segments):
            row = np.zeros(nv)
            row[gi] = -slope
            row[n_gens + n + gi] = 1.0
            lp.add(row, GE, intercept)

    return OpfProblem(
        case=case,
        variant=Variant.DC,
        lp=lp,
        structure=st,
        n_aux=n + n_gens,
        z_slice=slice(0, n_gens),
        metadata={"kind": "dc", "k_segments": k_segments},
    )


def solve_opf(problem: OpfProblem) -> OpfSolution:
    """Solve the variant LP and extract generator set points."""
    res: LpResult = solve_lp(problem.lp)
    if res.status != "optimal":
        return OpfSolution(status=res.status)
    st = problem.structure
    if problem.variant is Variant.DC:
        # DC solves all gen P; keep non-ref P, take nominal gen voltages
        pg = res.x[problem.z_slice]
        z = np.concatenate(
            [
                [pg[gi] for gi in st.free_gens],
                [
                    max(g.v_set for g in st.case.gens_at(pos))
                    for pos in st.gen_buses
                ],
            ]
        )
    else:
        z = res.x[problem.z_slice].copy()
    return OpfSolution(status="optimal", setpoints=z, model_cost=float(res.value))


def ac_evaluate(
    case: NetworkCase,
    setpoints: np.ndarray,
    ybus: AdmittanceMatrix | None = None,
) -> OpfSolution:
    """Re-evaluate set points against the true AC power flow.

    Cost uses the true generator outputs, with the slack absorbing the
    mismatch; violations are measured against bus voltage and generator
    reactive limits.
    """
    st = OpfStructure(case)
    solved_case = st.apply_setpoints(setpoints)
    if ybus is None:
        ybus = build_ybus(solved_case)
    sol = solve_newton(solved_case, ybus, nominal_injections(solved_case))
    if not sol.converged:
        return OpfSolution(status="ac_diverged", setpoints=setpoints)

    cost = 0.0
    for gi, g in enumerate(solved_case.gens):
        if gi in st.ref_gens:
            pos = case.ref_pos()
            p = float(sol.s_inj.real[pos] + case.buses[pos].p_load)
            if len(st.ref_gens) > 1:
                p /= len(st.ref_gens)
        else:
            p = g.p_set
        c2, c1, c0 = g.cost
        cost += c2 * p * p + c1 * p + c0

    v_viol = 0.0
    for i, b in enumerate(case.buses):
        v_viol = max(v_viol, sol.v[i] - b.v_max, b.v_min - sol.v[i])
    q_viol = 0.0
    for pos in st.gen_buses:
        gens = case.gens_at(pos)
        q = float(sol.s_inj.imag[pos] + case.buses[pos].q_load)
        q_viol = max(
            q_viol,
            q - sum(g.q_max for g in gens),
            sum(g.q_min for g in gens) - q,
        )
    return OpfSolution(
        status="optimal",
        setpoints=setpoints,
        ac_cost=cost,
        max_v_violation=max(0.0, v_viol),
        q_violations=max(0.0, q_viol),
    )


def train_approx_set(
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    m: int,
    seed: int,
    v_box: tuple[float, float] | None = None,
    epsilon: float = 0.1,
) -> ApproxSet:
    """Fit all linear and rational models over the OPF decision box."""
    st = OpfStructure(case)
    lo, hi = st.z_bounds(v_box)
    rng = np.random.default_rng(seed)
    zs = rng.uniform(lo, hi, size=(m, st.nz))
    quantities = st.quantities()

    rows, betas = [], {q: [] for q in quantities}
    for z in zs:
        solved_case = st.apply_setpoints(z)
        sol = solve_newton(solved_case, ybus, nominal_injections(solved_case))
        if not sol.converged:
            continue
        rows.append(z)
        for q in quantities:
            betas[q].append(extract_quantity(sol, q, solved_case))
    xs = np.array(rows)

    out = ApproxSet()
    for q in quantities:
        beta = np.array(betas[q])
        for direction in (Direction.NONE, Direction.OVER, Direction.UNDER):
            lin, _ = regress.fit_cla(xs, beta, direction, quantity=q)
            out.add(lin)
            rat, _ = regress.fit_rational(
                xs, beta, direction, quantity=q, epsilon=epsilon
            )
            out.add(rat)
    return out


def grid_search_reference(
    case: NetworkCase,
    ybus: AdmittanceMatrix,
    v_box: tuple[float, float] | None = None,
    resolution: float = 0.001,
    coarse: int = 9,
    feas_tol: float = 1e-6,
) -> tuple[float, np.ndarray]:
    """Brute-force minimum AC-feasible cost over the set-point box.

    Coarse-to-fine grid refinement down to the requested resolution; each
    grid point is AC-evaluated and kept only if violation-free.
    """
    st = OpfStructure(case)
    lo, hi = st.z_bounds(v_box)
    best_cost, best_z = np.inf, None
    centers = (lo + hi) / 2.0
    spans = (hi - lo) / 2.0
    while True:
        axes = [
            np.linspace(
                max(lo[d], centers[d] - spans[d]),
                min(hi[d], centers[d] + spans[d]),
                coarse,
            )
            for d in range(st.nz)
        ]
        for z in itertools.product(*axes):
            ev = ac_evaluate(case, np.array(z), ybus)
            if ev.status != "optimal":
                continue
            if ev.max_v_violation > feas_tol or ev.q_violations > feas_tol:
                continue
            if ev.ac_cost < best_cost:
                best_cost, best_z = ev.ac_cost, np.array(z)
        if best_z is None:
            raise RuntimeError("grid search found no feasible point")
        step = float(np.max(spans)) / (coarse - 1)
        if step <= resolution:
            break
        centers = best_z
        spans = spans * (2.0 / (coarse - 1))
    return best_cost, best_z
