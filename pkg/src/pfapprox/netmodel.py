"""Network model: MATPOWER-style case parsing and admittance matrix assembly.

Supports the numeric-matrix subset of MATPOWER case files (baseMVA, bus,
gen, branch, gencost). Everything is converted to per unit on baseMVA and
angles to radians exactly once, at parse time. Parsed cases are immutable
and safe to share across parallel workers.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class CaseError(Exception):
    """Base class for case-file problems."""


class MissingSection(CaseError):
    pass


class MalformedRow(CaseError):
    pass


class DanglingReference(CaseError):
    pass


class NoReference(CaseError):
    pass


class ZeroImpedanceBranch(CaseError):
    pass


class BusKind(Enum):
    PQ = 1
    PV = 2
    REF = 3


@dataclass(frozen=True)
class BusRecord:
    id: int
    kind: BusKind
    p_load: float
    q_load: float
    gs: float
    bs: float
    v_init: float
    theta_init: float
    v_min: float
    v_max: float


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_chg: float
    tap: float = 1.0
    shift: float = 0.0
    status: bool = True


@dataclass(frozen=True)
class GenRecord:
    bus: int
    p_set: float
    v_set: float
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    # cost polynomial (c2, c1, c0); units: currency/hour with P in per unit
    cost: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]
    gens: tuple[GenRecord, ...]
    _index: dict[int, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {b.id: i for i, b in enumerate(self.buses)}
        )

    @property
    def n(self) -> int:
        return len(self.buses)

    def bus_pos(self, bus_id: int) -> int:
        return self._index[bus_id]

    def ref_pos(self) -> int:
        for i, b in enumerate(self.buses):
            if b.kind is BusKind.REF:
                return i
        raise NoReference("case has no reference bus")

    def gens_at(self, pos: int) -> list[GenRecord]:
        bus_id = self.buses[pos].id
        return [g for g in self.gens if g.bus == bus_id]


@dataclass(frozen=True)
class AdmittanceMatrix:
    n: int
    y: np.ndarray  # complex N x N

    @property
    def g(self) -> np.ndarray:
        return self.y.real

    @property
    def b(self) -> np.ndarray:
        return self.y.imag


_MATRIX_RE = re.compile(
    r"(?:mpc\.)?(?P<name>baseMVA|bus|gen|branch|gencost)\s*=\s*"
    r"(?:(?P<scalar>[0-9eE+.\-]+)|\[(?P<body>.*?)\])\s*;",
    re.DOTALL,
)


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_matrix(body: str, name: str) -> list[list[float]]:
    rows = []
    for raw in re.split(r"[;\n]", body):
        raw = raw.strip().rstrip(",")
        if not raw:
            continue
        try:
            rows.append([float(tok) for tok in re.split(r"[,\s]+", raw) if tok])
        except ValueError as exc:
            raise MalformedRow(f"{name}: cannot parse row {raw!r}") from exc
    return rows


_MIN_COLS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}

_KIND_CODES = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.REF}


def parse_matpower(text: str) -> NetworkCase:
    """Parse a MATPOWER-style case text into a per-unit NetworkCase.

    Only the bracketed numeric-matrix sections are interpreted; comments
    and unknown fields are ignored. Raises MissingSection, MalformedRow,
    DanglingReference, or NoReference on invalid input.
    """
    clean = _strip_comments(text)
    sections: dict[str, object] = {}
    for m in _MATRIX_RE.finditer(clean):
        name = m.group("name")
        if m.group("scalar") is not None:
            sections[name] = float(m.group("scalar"))
        else:
            sections[name] = _parse_matrix(m.group("body"), name)

    for required in ("baseMVA", "bus", "gen", "branch"):
        if required not in sections:
            raise MissingSection(f"case text has no {required} section")

    base = float(sections["baseMVA"])
    for name in ("bus", "gen", "branch", "gencost"):
        if name not in sections:
            continue
        for row in sections[name]:
            if len(row) < _MIN_COLS[name]:
                raise MalformedRow(
                    f"{name} row has {len(row)} columns, expected >= {_MIN_COLS[name]}"
                )

    buses = []
    for row in sections["bus"]:
        code = int(row[1])
        if code not in _KIND_CODES:
            raise MalformedRow(f"unknown bus type code {code}")
        buses.append(
            BusRecord(
                id=int(row[0]),
                kind=_KIND_CODES[code],
                p_load=row[2] / base,
                q_load=row[3] / base,
                gs=row[4] / base,
                bs=row[5] / base,
                v_init=row[7],
                theta_init=math.radians(row[8]),
                v_max=row[11],
                v_min=row[12],
            )
        )
    ids = [b.id for b in buses]
    if len(set(ids)) != len(ids):
        raise MalformedRow("duplicate bus ids")
    refs = [b for b in buses if b.kind is BusKind.REF]
    if len(refs) != 1:
        raise NoReference(f"case has {len(refs)} reference buses, need exactly 1")
    known = set(ids)

    costs = sections.get("gencost", [])
    gens = []
    for i, row in enumerate(sections["gen"]):
        bus = int(row[0])
        if bus not in known:
            raise DanglingReference(f"gen references unknown bus {bus}")
        status = row[7] > 0 if len(row) > 7 else True
        if not status:
            continue
        cost = (0.0, 0.0, 0.0)
        if i < len(costs):
            crow = costs[i]
            if int(crow[0]) != 2:
                raise MalformedRow("only polynomial (model 2) gencost supported")
            ncoef = int(crow[3])
            coeffs = list(crow[4 : 4 + ncoef])
            if len(coeffs) != ncoef or ncoef > 3:
                raise MalformedRow("gencost polynomial degree must be <= 2")
            coeffs = [0.0] * (3 - ncoef) + coeffs
            # rescale so cost(P_pu) in currency/hour matches cost(P_MW)
            cost = (coeffs[0] * base * base, coeffs[1] * base, coeffs[2])
        gens.append(
            GenRecord(
                bus=bus,
                p_set=row[1] / base,
                v_set=row[5],
                p_max=row[8] / base,
                p_min=row[9] / base,
                q_max=row[3] / base,
                q_min=row[4] / base,
                cost=cost,
            )
        )

    branches = []
    for row in sections["branch"]:
        f, t = int(row[0]), int(row[1])
        if f not in known or t not in known:
            raise DanglingReference(f"branch {f}-{t} references unknown bus")
        if f == t:
            raise MalformedRow(f"branch {f}-{t} is a self-loop")
        branches.append(
            BranchRecord(
                from_bus=f,
                to_bus=t,
                r=row[2],
                x=row[3],
                b_chg=row[4],
                tap=row[8] if row[8] != 0 else 1.0,
                shift=math.radians(row[9]),
                status=row[10] > 0,
            )
        )

    return NetworkCase(
        base_mva=base,
        buses=tuple(buses),
        branches=tuple(branches),
        gens=tuple(gens),
    )


def build_ybus(case: NetworkCase) -> AdmittanceMatrix:
    """Assemble the complex bus admittance matrix Y = G + jB.

    Series admittance 1/(r+jx), half the charging susceptance at each end,
    off-nominal tap ratio and phase shift applied to the off-diagonals,
    bus shunts added to the diagonals.
    """
    n = case.n
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if not br.status:
            continue
        if br.r == 0.0 and br.x == 0.0:
            raise ZeroImpedanceBranch(
                f"branch {br.from_bus}-{br.to_bus} has r = x = 0"
            )
        ys = 1.0 / complex(br.r, br.x)
        ysh = 1j * br.b_chg / 2.0
        tap = br.tap * np.exp(1j * br.shift)
        f = case.bus_pos(br.from_bus)
        t = case.bus_pos(br.to_bus)
        y[f, f] += (ys + ysh) / (abs(tap) ** 2)
        y[t, t] += ys + ysh
        y[f, t] += -ys / np.conj(tap)
        y[t, f] += -ys / tap
    for i, bus in enumerate(case.buses):
        y[i, i] += complex(bus.gs, bus.bs)
    return AdmittanceMatrix(n=n, y=y)


# --- canonical JSON serialization ------------------------------------------

def case_to_json(case: NetworkCase) -> str:
    """Serialize a NetworkCase to canonical JSON (stable key order)."""
    doc = {
        "base_mva": case.base_mva,
        "buses": [
            {
                "id": b.id,
                "kind": b.kind.name,
                "p_load": b.p_load,
                "q_load": b.q_load,
                "gs": b.gs,
                "bs": b.bs,
                "v_init": b.v_init,
                "theta_init": b.theta_init,
                "v_min": b.v_min,
                "v_max": b.v_max,
            }
            for b in case.buses
        ],
        "branches": [
            {
                "from_bus": br.from_bus,
                "to_bus": br.to_bus,
                "r": br.r,
                "x": br.x,
                "b_chg": br.b_chg,
                "tap": br.tap,
                "shift": br.shift,
                "status": br.status,
            }
            for br in case.branches
        ],
        "gens": [
            {
                "bus": g.bus,
                "p_set": g.p_set,
                "v_set": g.v_set,
                "p_min": g.p_min,
                "p_max": g.p_max,
                "q_min": g.q_min,
                "q_max": g.q_max,
                "cost": list(g.cost),
            }
            for g in case.gens
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def case_from_json(text: str) -> NetworkCase:
    doc = json.loads(text)
    buses = tuple(
        BusRecord(
            id=b["id"],
            kind=BusKind[b["kind"]],
            p_load=b["p_load"],
            q_load=b["q_load"],
            gs=b["gs"],
            bs=b["bs"],
            v_init=b["v_init"],
            theta_init=b["theta_init"],
            v_min=b["v_min"],
            v_max=b["v_max"],
        )
        for b in doc["buses"]
    )
    branches = tuple(BranchRecord(**br) for br in doc["branches"])
    gens = tuple(
        GenRecord(
            bus=g["bus"],
            p_set=g["p_set"],
            v_set=g["v_set"],
            p_min=g["p_min"],
            p_max=g["p_max"],
            q_min=g["q_min"],
            q_max=g["q_max"],
            cost=tuple(g["cost"]),
        )
        for g in doc["gens"]
    )
    return NetworkCase(
        base_mva=doc["base_mva"], buses=buses, branches=branches, gens=gens
    )
