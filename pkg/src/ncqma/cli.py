"""Command-line entry point: ``ncqma {verify,region,distinguish,constants,optimize}``.

Every command is deterministic given its arguments and seed. JSON reports
go to stdout (and to ``--out DIR`` when given); timing goes to stderr so
that stdout and the written files are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import analysis, csp, figure
from .detectors import DetectorKind, DetectorSpec, distinguish_ensembles_experiment
from .errors import (
    DegenerateConstants,
    DimMismatch,
    Infeasible,
    InvalidThreshold,
    NCQMAError,
    ParseError,
    TooLarge,
)
from .verifier import (
    BipartiteWitness,
    ProtocolParams,
    acceptance_profile,
    build_rigid_witness,
    choose_constants,
    density_accept_prob,
    detector_delta_fn,
    diagnostic_params,
    params_detector,
    planted_rigid_witness,
    protocol_accept_prob,
    protocol_sample,
    quasicheck_accept_prob,
    witness_from_json,
    witness_to_json,
)

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_IO, EXIT_INFEASIBLE, EXIT_CAP = 0, 1, 2, 3, 4, 5
GAP_WARNING = 1e-12
YES_SANITY_TOL = 1e-8
SEED_ENV = "NCV_SEED"
PRESETS = ("proof", "diagnostic")


# -- helpers ------------------------------------------------------------------------


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _fraction(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected a number such as 0.25 or 1/3, got {text!r}") from None


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return _seed(raw)
    except argparse.ArgumentTypeError as exc:
        raise SystemExit(f"{SEED_ENV}: {exc}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _emit(args, name: str, text: str) -> None:
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _resolve_params(preset: str, kind: DetectorKind, kappa: int) -> ProtocolParams:
    # the AnalyticCollision model shares the collision detector's margin
    base = DetectorKind.NON_COLLAPSING if kind is DetectorKind.ANALYTIC_COLLISION else kind
    if preset == "diagnostic":
        return diagnostic_params(kappa, kind=base)
    return choose_constants(kappa, 0.5, 0.75, detector_delta_fn(base, kappa), preset="proof")


def _load_instance(args) -> csp.GapInstance:
    if args.instance is not None:
        text = Path(args.instance).read_text()
        return csp.parse(text)
    seed = args.seed if args.gen_seed is None else args.gen_seed
    if args.gen == "yes":
        return csp.gen_yes_instance(args.N, args.R, args.q, seed, sigma=args.sigma, delta=args.delta)
    return csp.gen_no_instance(args.N, args.R, args.q, args.delta, seed, sigma=args.sigma)


def _empirical(psi, system, params, det, n: int, seed: int, analytic: float) -> dict:
    rng = np.random.default_rng(seed)
    runs = protocol_sample(psi, system, params, det, rng, n)
    mean = float(runs.mean())
    sigma = math.sqrt(max(analytic * (1.0 - analytic), 0.0) / n)
    return {
        "n": n,
        "empirical": mean,
        "sigma": sigma,
        "divergent": abs(mean - analytic) > 4.0 * sigma,
    }


# -- commands ------------------------------------------------------------------------


def cmd_verify(args) -> dict:
    inst = _load_instance(args)
    system = inst.system
    kind = DetectorKind.from_flag(args.detector)
    params = _resolve_params(args.preset, kind, system.kappa)
    det = params_detector(params, kind)
    witnesses: list[tuple[str, BipartiteWitness]] = []
    search = None
    if args.witness is not None:
        obj = json.loads(Path(args.witness).read_text())
        witnesses.append(("file", witness_from_json(obj, system.R, system.kappa)))
    elif inst.label is csp.Label.NO:
        search = analysis.exhaustive_rigid_search(system, params, det)
        witnesses.append(
            ("best_rigid", build_rigid_witness(search.best_sigma, system.R, system.kappa))
        )
    else:
        witnesses.append(("planted_rigid", planted_rigid_witness(inst)))
    reports = []
    for i, (name, psi) in enumerate(witnesses):
        if psi.shape != (system.R, system.kappa):
            raise DimMismatch(f"witness shape {psi.shape} does not match {system.R} x {system.kappa}")
        profile = acceptance_profile(psi, system, params, det)
        analytic = protocol_accept_prob(psi, system, params, det)
        case = analysis.classify_soundness_case(
            profile, params, no_instance=inst.label is csp.Label.NO, witness=psi, system=system
        )
        reports.append(
            {
                "witness": name,
                "profile": profile.to_json(),
                "analytic": analytic,
                "sampled": _empirical(psi, system, params, det, args.samples, args.seed + i, analytic),
                "case": case.case,
                "case_bound": case.bound,
                "case_holds": case.holds,
                "case_checks": case.checks,
            }
        )
    report = {
        "command": "verify",
        "preset": params.preset,
        "seed": args.seed,
        "instance": {"label": inst.label.value, "R": system.R, "kappa": system.kappa,
                     "local_value": csp.local_value(system)},
        "detector": det.to_json(),
        "params": params.to_json(),
        "witnesses": reports,
    }
    if search is not None:
        report["rigid_search"] = {
            "max_value": search.max_value,
            "best_sigma": list(search.best_sigma),
            "enumerated": search.enumerated,
            "measured_gap": params.p_yes - search.max_value,
        }
    _emit(args, "verify.json", dumps(report))
    return report


def _region_scatter(kappa: int, R: int, det: DetectorSpec, count: int, seed: int):
    rng = np.random.default_rng(seed)
    points = []
    families = analysis.WITNESS_FAMILIES
    i = 0
    while len(points) < count:
        psi = analysis.random_witness(R, kappa, rng, families[i % len(families)])
        i += 1
        w_d = density_accept_prob(psi)
        if w_d >= 1.0 / kappa:
            points.append((w_d, quasicheck_accept_prob(psi, det)))
    return points


def cmd_region(args) -> dict:
    kappa = args.kappa
    kind = DetectorKind.from_flag(args.detector)
    k = max(1, round(math.log2(kappa)))
    if kind is DetectorKind.ANALYTIC_COLLISION:
        det = DetectorSpec.analytic(k, args.epsilon, args.margin)
    else:
        det = DetectorSpec(kind, k, args.epsilon, detector_delta_fn(kind, kappa)(args.epsilon), kappa)
    if det.dim != kappa:
        raise DimMismatch(f"kappa={kappa} is not a power of two")
    boundary = analysis.region_boundary(kappa, det.epsilon, det.delta, args.grid)
    scatter = _region_scatter(kappa, args.R, det, args.points, args.seed)
    above = [
        (w_d, w_q)
        for w_d, w_q in scatter
        if not analysis.quadratic_feasible(w_d, w_q, det.epsilon, det.delta, kappa)
    ]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["w_d", "w_q_max"])
    writer.writerows([(repr(w), repr(q)) for w, q in boundary])
    scatter_buf = io.StringIO()
    writer = csv.writer(scatter_buf, lineterminator="\n")
    writer.writerow(["w_d", "w_q"])
    writer.writerows([(repr(w), repr(q)) for w, q in scatter])
    out = Path(args.out if args.out is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "region_boundary.csv").write_text(buf.getvalue())
    (out / "region_scatter.csv").write_text(scatter_buf.getvalue())
    (out / "region.svg").write_text(figure.region_svg(boundary, scatter, kappa))
    report = {
        "command": "region",
        "seed": args.seed,
        "kappa": kappa,
        "detector": det.to_json(),
        "grid": args.grid,
        "points": len(scatter),
        "points_above_boundary": len(above),
        "files": ["region_boundary.csv", "region_scatter.csv", "region.svg"],
    }
    (out / "region.json").write_text(dumps(report))
    return report


def cmd_distinguish(args) -> dict:
    rng = np.random.default_rng(args.seed)
    result = distinguish_ensembles_experiment(args.k, args.samples, rng)
    d = 2**args.k
    sigma = math.sqrt(result["acc_fourier_analytic"] * (1 - result["acc_fourier_analytic"]) / args.samples)
    report = {"command": "distinguish", "seed": args.seed, **result,
              "analytic_gap": 1.0 - result["acc_fourier_analytic"], "sigma": sigma, "dim": d}
    _emit(args, "distinguish.json", dumps(report))
    return report


def cmd_constants(args) -> dict:
    kind = DetectorKind.from_flag(args.detector)
    base = DetectorKind.NON_COLLAPSING if kind is DetectorKind.ANALYTIC_COLLISION else kind
    if args.preset == "diagnostic":
        params = diagnostic_params(args.kappa, args.xi, args.c_yes, kind=base)
    else:
        params = choose_constants(args.kappa, args.xi, args.c_yes, detector_delta_fn(base, args.kappa))
    report = {
        "command": "constants",
        "preset": params.preset,
        "detector": kind.value,
        "params": params.to_json(),
        "checks": params.constraint_checks(),
        "gap": params.gap,
    }
    if params.gap < GAP_WARNING:
        print(
            f"warning: promise gap {params.gap:.3e} is below double-precision resolution of P_YES",
            file=sys.stderr,
        )
    _emit(args, "constants.json", dumps(report))
    return report


def cmd_optimize(args) -> dict:
    inst = _load_instance(args)
    system = inst.system
    if system.R * system.kappa > analysis.MAX_OPT_DIM:
        raise TooLarge(f"R * kappa = {system.R * system.kappa} exceeds {analysis.MAX_OPT_DIM}")
    kind = DetectorKind.from_flag(args.detector)
    params = _resolve_params(args.preset, kind, system.kappa)
    det = params_detector(params, kind)
    objective = analysis.protocol_objective(system, params, det)
    result = analysis.optimize_witness(objective, system.R, system.kappa, args.restarts, args.seed)
    exact = protocol_accept_prob(result.best_state, system, params, det)
    report = {
        "command": "optimize",
        "preset": params.preset,
        "seed": args.seed,
        "instance": {"label": inst.label.value, "R": system.R, "kappa": system.kappa},
        "params": params.to_json(),
        "best_value": exact,
        "p_yes": params.p_yes,
        "excess_over_p_yes": exact - params.p_yes,
        "restarts_used": result.restarts_used,
        "trace": list(result.trace),
    }
    if inst.label is csp.Label.YES:
        report["yes_sanity_ok"] = exact <= params.p_yes + YES_SANITY_TOL
    witness_text = dumps(witness_to_json(result.best_state))
    _emit(args, "optimize.json", dumps(report))
    _emit(args, "witness.json", witness_text)
    return report


# -- parser -------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *, seed_default: int) -> None:
    p.add_argument("--seed", type=_seed, default=seed_default, help=f"RNG seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--out", metavar="DIR", help="directory for written reports")


def _add_instance(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", metavar="PATH", help="instance JSON (otherwise generate one)")
    p.add_argument("--gen", choices=("yes", "no"), default="yes", help="generator used without --instance")
    p.add_argument("--N", type=_positive, default=4)
    p.add_argument("--R", type=_positive, default=6)
    p.add_argument("--q", type=_positive, default=2)
    p.add_argument("--sigma", type=_positive, default=2)
    p.add_argument("--delta", type=_fraction, default=1 / 3)
    p.add_argument("--gen-seed", type=_seed, default=None, help="generator seed (default: --seed)")
    p.add_argument("--detector", choices=("noncollapsing", "nonneg", "analytic"), default="noncollapsing")
    p.add_argument("--preset", choices=PRESETS, default="diagnostic")


def build_parser() -> argparse.ArgumentParser:
    seed_default = _default_seed()
    parser = argparse.ArgumentParser(prog="ncqma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="analytic and sampled protocol acceptance")
    _add_instance(p)
    p.add_argument("--witness", metavar="PATH", help="witness state JSON to replay")
    p.add_argument("--samples", type=_positive, default=100_000)
    _add_common(p, seed_default=seed_default)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("region", help="feasible (Density, QuasiCheck) region as CSV + SVG")
    p.add_argument("--kappa", type=_positive, default=4)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--margin", type=float, default=None, help="detector margin (analytic detector only)")
    p.add_argument("--detector", choices=("noncollapsing", "nonneg", "analytic"), default="noncollapsing")
    p.add_argument("--grid", type=_positive, default=101)
    p.add_argument("--points", type=_positive, default=1000)
    p.add_argument("--R", type=_positive, default=4)
    _add_common(p, seed_default=seed_default)
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("distinguish", help="collision detector on two ensembles with equal density matrix")
    p.add_argument("--k", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--samples", type=int, default=100_000)
    _add_common(p, seed_default=seed_default)
    p.set_defaults(func=cmd_distinguish)

    p = sub.add_parser("constants", help="choose protocol constants and report the gap")
    p.add_argument("--kappa", type=_positive, default=4)
    p.add_argument("--xi", type=_fraction, default=0.5)
    p.add_argument("--c-yes", type=_fraction, default=0.75)
    p.add_argument("--detector", choices=("noncollapsing", "nonneg", "analytic"), default="noncollapsing")
    p.add_argument("--preset", choices=PRESETS, default="proof")
    _add_common(p, seed_default=seed_default)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("optimize", help="search for a witness maximising protocol acceptance")
    _add_instance(p)
    p.set_defaults(gen="no", R=4, q=2)
    p.add_argument("--restarts", type=_positive, default=10)
    _add_common(p, seed_default=seed_default)
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        report = args.func(args)
    except (ParseError, json.JSONDecodeError, DimMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (Infeasible, DegenerateConstants, InvalidThreshold) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (NCQMAError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    sys.stdout.write(dumps(report))
    print(f"duration: {time.perf_counter() - start:.3f}s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
