"""Command-line front end wiring the full pipeline.

Subcommands: parse, pf, sens, sample, fit, eval, opf, run. Exit codes:
0 success, 2 validation error, 3 numerical failure. Outputs are CSV for
tables and JSON for models and manifests; reruns with the same config and
seed are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netmodel, opf, pade, regress, sampling, sensitivity
from .netmodel import build_ybus, parse_matpower
from .pfcore import (
    Quantity,
    nominal_injections,
    solution_to_dict,
    solve_newton,
)
from .regress import Direction
from .sampling import ImportanceConfig, OperatingRange, Placement, SampleSet

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class ValidationError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    case_path: str
    seed: int
    output_dir: str
    lower: float = 0.7
    upper: float = 1.3
    sample_count: int = 500
    test_count: int = 500
    quantities: list[str] = field(default_factory=list)
    fit_kinds: list[str] = field(default_factory=lambda: ["linear", "rational"])
    directions: list[str] = field(default_factory=lambda: ["none", "over", "under"])
    importance: bool = False
    subspace_fraction: float = 0.5
    k: int = 3
    placement: str = "mixed"
    step_scale: float = 1.0
    epsilon: float = 0.1
    pf_tol: float = 1e-8
    reweight_tol: float = 1e-6
    svd_threshold: float = 0.1

    def validate(self) -> None:
        if self.sample_count < 1 or self.test_count < 1:
            raise ValidationError("sample counts must be >= 1")
        if self.lower > self.upper:
            raise ValidationError("range lower must be <= upper")
        if not Path(self.case_path).is_file():
            raise ValidationError(f"case file not found: {self.case_path}")
        for kind in self.fit_kinds:
            if kind not in ("linear", "rational"):
                raise ValidationError(f"unknown fit kind {kind!r}")
        for d in self.directions:
            if d not in ("none", "over", "under"):
                raise ValidationError(f"unknown direction {d!r}")
        if self.placement not in ("extreme", "central", "mixed"):
            raise ValidationError(f"unknown placement {self.placement!r}")

    def to_dict(self) -> dict:
        return dict(sorted(self.__dict__.items()))

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]


def _load_case(path: str):
    case = parse_matpower(Path(path).read_text())
    return case, build_ybus(case)


def _default_quantities(case) -> list[Quantity]:
    from .netmodel import BusKind

    return [
        Quantity("bus_voltage", b.id) for b in case.buses if b.kind is BusKind.PQ
    ]


def _parse_quantities(case, labels: list[str]) -> list[Quantity]:
    if not labels:
        return _default_quantities(case)
    return [Quantity.from_label(lbl) for lbl in labels]


def sample_set_to_csv(ss: SampleSet, quantities: list[Quantity]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n = ss.xs.shape[1]
    writer.writerow([f"x{i}" for i in range(n)] + [q.label() for q in quantities])
    for i in range(ss.m):
        writer.writerow(
            [repr(float(v)) for v in ss.xs[i]]
            + [repr(float(ss.betas[q][i])) for q in quantities]
        )
    return buf.getvalue()


def sample_set_from_csv(text: str) -> tuple[SampleSet, list[Quantity]]:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    n = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
    quantities = [Quantity.from_label(h) for h in header[n:]]
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return (
        SampleSet(
            xs=data[:, :n],
            betas={q: data[:, n + j] for j, q in enumerate(quantities)},
        ),
        quantities,
    )


def report_rows(
    models: list[tuple[regress.ApproximationModel, regress.FitReport]],
    test_set: SampleSet,
) -> list[dict]:
    """Per-model test-set error table with reductions vs the linear baseline.

    Rational models are compared against the linear model of the same
    direction; linear rows are the baselines and carry no reduction.
    """
    rows = []
    baselines: dict[tuple[str, str], float] = {}
    entries = []
    for model, _ in models:
        beta = test_set.betas[model.quantity]
        err = np.abs(beta - model.predict(test_set.xs))
        mean_err, max_err = float(np.mean(err)), float(np.max(err))
        key = (model.quantity.label(), model.direction.value)
        if model.kind == "linear":
            baselines[key] = mean_err
        entries.append((model, mean_err, max_err))
    for model, mean_err, max_err in entries:
        key = (model.quantity.label(), model.direction.value)
        reduction = ""
        if model.kind == "rational" and key in baselines and baselines[key] > 0:
            reduction = repr((baselines[key] - mean_err) / baselines[key])
        row = {
            "quantity": model.quantity.label(),
            "kind": model.kind,
            "direction": model.direction.value,
            "mean_abs_err": repr(mean_err),
            "max_abs_err": repr(max_err),
            "pct_reduction": reduction,
            "violation_rate": "",
        }
        if model.direction is not Direction.NONE:
            row["violation_rate"] = repr(sampling.violation_rate(model, test_set))
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def run_pipeline(config: RunConfig) -> dict:
    """Execute parse -> pf -> (sens) -> sample -> fit -> eval and write outputs."""
    config.validate()
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    manifest: dict = {
        "config": config.to_dict(),
        "config_hash": config.digest(),
    }

    def stage(name):
        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, exc_type, exc, tb):
                timings[name] = time.perf_counter() - self.t0
                if exc is not None:
                    _write_manifest()
                    raise StageError(name, exc) from exc

        return _Timer()

    def _write_manifest():
        # timings go to stderr so written outputs stay byte-identical on rerun
        for name, secs in timings.items():
            print(f"stage {name}: {secs:.3f}s", file=sys.stderr)
        (outdir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True)
        )

    with stage("parse"):
        case, ybus = _load_case(config.case_path)
        quantities = _parse_quantities(case, config.quantities)
        nominal = nominal_injections(case)

    with stage("power_flow"):
        nominal_sol = solve_newton(case, ybus, nominal, tol=config.pf_tol)
        if not nominal_sol.converged:
            raise ValidationError("nominal power flow did not converge")

    vectors = None
    if config.importance:
        with stage("sensitivity_svd"):
            bundle = sensitivity.build_bundle(case, ybus, nominal_sol)
            target = next(
                (q for q in quantities if q.kind == "bus_voltage"), None
            )
            if target is not None:
                coord = sensitivity.voltage_coord(case, target.index)
                so = sensitivity.second_order(bundle, coord, target)
                summary = sensitivity.dominant_subspace(
                    so.lam, config.svd_threshold
                )
                vectors = summary.dominant_vectors[:, : config.k]
                manifest["sensitivity"] = {
                    "target": target.label(),
                    "eigen_min": summary.eigen_min,
                    "eigen_max": summary.eigen_max,
                    "curvature": summary.curvature.value,
                }

    box = OperatingRange(config.lower, config.upper)
    with stage("sampling"):
        if vectors is not None and vectors.shape[1] > 0:
            cfg = ImportanceConfig(
                subspace_fraction=config.subspace_fraction,
                placement=Placement(config.placement),
                k=config.k,
                step_scale=config.step_scale,
            )
            sampler = sampling.make_mixed_sampler(
                case, ybus, nominal, box, quantities, cfg, vectors, config.seed
            )
            train = sampler(config.sample_count, 0)
            manifest["sampler"] = {
                "mode": "importance",
                "subspace_fraction": config.subspace_fraction,
                "placement": config.placement,
                "k": config.k,
            }
        else:
            xs = sampling.draw_uniform(nominal, box, config.sample_count, config.seed)
            train = sampling.evaluate_samples(
                case, ybus, xs, quantities, seed=config.seed
            )
            manifest["sampler"] = {"mode": "uniform"}
        xs_test = sampling.draw_uniform(
            nominal, box, config.test_count, config.seed + 1
        )
        test = sampling.evaluate_samples(
            case, ybus, xs_test, quantities, seed=config.seed + 1
        )
        manifest["train_skipped"] = train.skipped
        manifest["test_skipped"] = test.skipped
        (outdir / "samples_train.csv").write_text(
            sample_set_to_csv(train, quantities)
        )
        (outdir / "samples_test.csv").write_text(
            sample_set_to_csv(test, quantities)
        )

    with stage("fit"):
        fitted = []
        for q in quantities:
            beta = train.betas[q]
            for dname in config.directions:
                direction = Direction(dname)
                if "linear" in config.fit_kinds:
                    fitted.append(
                        regress.fit_cla(train.xs, beta, direction, quantity=q)
                    )
                if "rational" in config.fit_kinds:
                    fitted.append(
                        regress.fit_rational(
                            train.xs,
                            beta,
                            direction,
                            quantity=q,
                            epsilon=config.epsilon,
                            tol=config.reweight_tol,
                        )
                    )
        models_doc = [
            dict(model.to_dict(), report={
                "mean_abs_err": rep.mean_abs_err,
                "max_abs_err": rep.max_abs_err,
                "iterations": rep.iterations,
                "converged": rep.converged,
            })
            for model, rep in fitted
        ]
        (outdir / "models.json").write_text(
            json.dumps(models_doc, indent=2, sort_keys=True)
        )

    with stage("evaluate"):
        rows = report_rows(fitted, test)
        (outdir / "report.csv").write_text(rows_to_csv(rows))

    _write_manifest()
    return manifest


# --- subcommand entry points -------------------------------------------------

def _cmd_parse(args) -> int:
    case, _ = _load_case(args.case)
    print(netmodel.case_to_json(case))
    return EXIT_OK


def _cmd_pf(args) -> int:
    case, ybus = _load_case(args.case)
    sol = solve_newton(
        case, ybus, nominal_injections(case), tol=args.tol, max_iter=args.max_iter
    )
    print(json.dumps(solution_to_dict(sol, case), indent=2, sort_keys=True))
    return EXIT_OK if sol.converged else EXIT_NUMERICAL


def _cmd_sens(args) -> int:
    case, ybus = _load_case(args.case)
    sol = solve_newton(case, ybus, nominal_injections(case))
    if not sol.converged:
        print("nominal power flow did not converge", file=sys.stderr)
        return EXIT_NUMERICAL
    bundle = sensitivity.build_bundle(case, ybus, sol)
    coord = sensitivity.voltage_coord(case, args.bus)
    target = Quantity("bus_voltage", args.bus)
    so = sensitivity.second_order(bundle, coord, target)
    summary = sensitivity.dominant_subspace(so.lam, args.threshold)
    print(
        json.dumps(
            {
                "target": target.label(),
                "eigen_min": summary.eigen_min,
                "eigen_max": summary.eigen_max,
                "singular_values": summary.singular_values.tolist(),
                "dominant_vectors": summary.dominant_vectors.tolist(),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_sample(args) -> int:
    case, ybus = _load_case(args.case)
    quantities = _parse_quantities(case, args.quantities)
    nominal = nominal_injections(case)
    box = OperatingRange(args.lower, args.upper)
    xs = sampling.draw_uniform(nominal, box, args.count, args.seed)
    ss = sampling.evaluate_samples(case, ybus, xs, quantities, seed=args.seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "samples.csv").write_text(sample_set_to_csv(ss, quantities))
    (outdir / "samples_manifest.json").write_text(
        json.dumps(
            {
                "seed": args.seed,
                "lower": args.lower,
                "upper": args.upper,
                "requested": args.count,
                "kept": ss.m,
                "skipped": ss.skipped,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_fit(args) -> int:
    ss, quantities = sample_set_from_csv(Path(args.samples).read_text())
    q = Quantity.from_label(args.quantity)
    if q not in ss.betas:
        print(f"quantity {args.quantity} not in sample set", file=sys.stderr)
        return EXIT_VALIDATION
    direction = Direction(args.direction)
    if args.kind == "linear":
        model, rep = regress.fit_cla(ss.xs, ss.betas[q], direction, quantity=q)
    else:
        model, rep = regress.fit_rational(
            ss.xs, ss.betas[q], direction, quantity=q, epsilon=args.epsilon
        )
    print(
        json.dumps(
            dict(
                model.to_dict(),
                report={
                    "mean_abs_err": rep.mean_abs_err,
                    "max_abs_err": rep.max_abs_err,
                    "iterations": rep.iterations,
                    "converged": rep.converged,
                },
            ),
            indent=2,
            sort_keys=True,
        )
    )
    return EXIT_OK


def _cmd_eval(args) -> int:
    test, quantities = sample_set_from_csv(Path(args.samples).read_text())
    docs = json.loads(Path(args.models).read_text())
    fitted = []
    for doc in docs:
        model = regress.ApproximationModel(
            kind=doc["kind"],
            a0=doc["a0"],
            a1=np.array(doc["a1"]),
            b1=np.array(doc["b1"]),
            direction=Direction(doc["direction"]),
            quantity=Quantity.from_label(doc["quantity"]),
            epsilon=doc.get("epsilon", 0.1),
        )
        fitted.append((model, None))
    rows = report_rows(fitted, test)
    print(rows_to_csv(rows), end="")
    return EXIT_OK


def _cmd_opf(args) -> int:
    case, ybus = _load_case(args.case)
    variants = (
        list(opf.Variant)
        if args.variant == "all"
        else [opf.Variant(args.variant)]
    )
    approx_set = None
    if any(v is not opf.Variant.DC for v in variants):
        approx_set = opf.train_approx_set(
            case, ybus, m=args.train_count, seed=args.seed
        )
    results = []
    for variant in variants:
        problem = opf.build_opf(case, variant, approx_set)
        sol = opf.solve_opf(problem)
        if sol.status != "optimal":
            results.append({"variant": variant.value, "status": sol.status})
            continue
        ev = opf.ac_evaluate(case, sol.setpoints)
        results.append(
            {
                "variant": variant.value,
                "status": ev.status,
                "model_cost": sol.model_cost,
                "ac_cost": ev.ac_cost,
                "max_v_violation": ev.max_v_violation,
            }
        )
    costs = [r["ac_cost"] for r in results if r.get("ac_cost") is not None]
    best = min(costs) if costs else None
    for r in results:
        if best and r.get("ac_cost") is not None:
            r["pct_vs_best"] = 100.0 * (r["ac_cost"] - best) / best
    print(json.dumps(results, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        config = RunConfig(**doc)
    else:
        config = RunConfig(
            case_path=args.case,
            seed=args.seed,
            output_dir=args.out,
            lower=args.lower,
            upper=args.upper,
            sample_count=args.count,
            importance=args.importance,
        )
    run_pipeline(config)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfapprox",
        description="Adaptive linear and rational power flow approximations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a case file and print canonical JSON")
    p.add_argument("case")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("pf", help="solve the nominal power flow")
    p.add_argument("case")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=20)
    p.set_defaults(func=_cmd_pf)

    p = sub.add_parser("sens", help="second-order sensitivity summary for a bus")
    p.add_argument("case")
    p.add_argument("--bus", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    p.set_defaults(func=_cmd_sens)

    p = sub.add_parser("sample", help="draw and evaluate injection samples")
    p.add_argument("case")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", "-M", type=int, default=500)
    p.add_argument("--lower", type=float, default=0.7)
    p.add_argument("--upper", type=float, default=1.3)
    p.add_argument("--quantities", nargs="*", default=[])
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fit", help="fit a model to a sample CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--quantity", required=True)
    p.add_argument("--kind", choices=["linear", "rational"], default="linear")
    p.add_argument(
        "--direction", choices=["none", "over", "under"], default="none"
    )
    p.add_argument("--epsilon", type=float, default=0.1)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="evaluate stored models on a sample CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--models", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("opf", help="solve a simplified OPF variant")
    p.add_argument("case")
    p.add_argument(
        "--variant", choices=["dc", "la", "cla", "ra", "cra", "all"], default="all"
    )
    p.add_argument("--train-count", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_opf)

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--case")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--lower", type=float, default=0.7)
    p.add_argument("--upper", type=float, default=1.3)
    p.add_argument("--count", "-M", type=int, default=500)
    p.add_argument("--importance", action="store_true")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run" and not args.config and args.seed is None:
        print("run requires --seed (or a --config file)", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command == "sample" and args.seed is None:
        print("sample requires --seed", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (ValidationError, netmodel.CaseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        cause = exc.cause
        if isinstance(cause, (ValidationError, netmodel.CaseError, ValueError, OSError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # numerical failures from any stage
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
