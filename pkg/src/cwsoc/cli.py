"""Command-line interface: subcommand dispatch, artifact I/O, manifests.

Exit codes: 0 success, 2 validation/usage error, 3 numeric failure
(non-convergence or unusable estimate).  All randomness flows from a single
``--seed`` through ``numpy.random.default_rng``; samplers split it
internally per chain in a fixed order, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import cramer, kernel, limitlaw, measure, model, transforms

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

_PRESETS = {
    "gaussian": measure.gaussian,
    "rademacher": measure.rademacher,
    "three-point": measure.three_point,
    "rho0": measure.rho_zero,
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _load_measure(args) -> measure.Measure1D:
    if getattr(args, "preset", None):
        m = _PRESETS[args.preset]()
    elif getattr(args, "spec", None):
        path = Path(args.spec)
        if not path.exists():
            raise CliError(f"measure spec not found: {path}")
        try:
            m = measure.Measure1D.from_json(path.read_text())
        except measure.MeasureError as exc:
            raise CliError(f"invalid measure spec {path}: {exc}")
    else:
        raise CliError("one of --preset or --spec is required")
    m.validate()
    return m


def _interaction(args) -> model.Interaction:
    kind = getattr(args, "g", "quadratic")
    variant = getattr(args, "variant", "standard")
    m4 = getattr(args, "m4", 0.0)
    try:
        if kind == "quadratic":
            return model.quadratic(variant)
        return model.quartic(m4, variant)
    except model.InteractionError as exc:
        raise CliError(str(exc))


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_manifest(out_dir, config: dict) -> Path:
    """Record config, versions and sha256 digests of every artifact."""
    out_dir = Path(out_dir)
    digests = {}
    for p in sorted(out_dir.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        digests[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    payload = {
        "config": config,
        "config_digest": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "versions": {"python": sys.version.split()[0],
                     "numpy": np.__version__},
        "artifacts": digests,
    }
    path = out_dir / "manifest.json"
    _write_json(path, payload)
    return path


# ---------------------------------------------------------------------------
# subcommands

def _cmd_measure_info(args) -> int:
    m = _load_measure(args)
    ms = measure.moments(m)
    payload = {
        "atoms": [list(a) for a in m.atoms],
        "ac_mass": m.ac_mass,
        "mass_at_zero": ms.mass_at_zero,
        "sigma2": ms.sigma2,
        "mu4": ms.mu4,
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_cramer_check(args) -> int:
    m = _load_measure(args)
    report = cramer.check_condition(
        cramer.CharEvaluator(m), alpha=args.alpha, radius=args.radius,
        grid_step=args.step)
    payload = {
        "alpha": report.alpha,
        "sup_estimate": report.sup_estimate,
        "sup_bound": report.sup_bound,
        "verdict": report.verdict,
        "witness": list(report.witness) if report.witness else None,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _rate_solver(args):
    return transforms.RateFunction(transforms.LogLaplace(_load_measure(args)))


def _cmd_rate_eval(args) -> int:
    r = transforms.cramer_transform(_rate_solver(args), args.x, args.y)
    payload = {
        "x": args.x, "y": args.y, "value": r.value,
        "converged": r.converged, "iterations": r.iterations,
        "argmax": r.argmax.tolist(), "message": r.message,
    }
    print(json.dumps(payload, indent=2))
    if not r.converged and not math.isinf(r.value):
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_rate_grid(args) -> int:
    R = _rate_solver(args)
    xs = np.linspace(args.x_min, args.x_max, args.nx)
    ys = np.linspace(args.y_min, args.y_max, args.ny)
    rows = []
    for x in xs:
        for y in ys:
            r = R.solve([x, y])
            rows.append((float(x), float(y),
                         r.value if r.converged else math.inf,
                         int(r.converged)))
    _write_csv(args.out, ["x", "y", "value", "converged"], rows)
    print(f"wrote {len(rows)} grid points to {args.out}")
    return EXIT_OK


def _cmd_kernel_verify(args) -> int:
    m = _load_measure(args)
    lift = "line" if args.d == 1 else "pair"
    R = transforms.RateFunction(transforms.LogLaplace(m, lift=lift))
    s = kernel.SmoothedDensity(base=m, n=args.n, c=args.c, d=args.d,
                               samples=args.samples, seed=args.seed)
    points = [[float(v) for v in p.split(",")] for p in args.points]
    try:
        rows = kernel.theorem3_comparison(s, R, points)
    except kernel.KernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out_rows = [(",".join(repr(v) for v in r["x"]), args.n, s.c, r["phi"],
                 r["std_error"], r["asymptotic"], r["ratio"]) for r in rows]
    _write_csv(args.out, ["x", "n", "c", "phi", "se", "asymptotic", "ratio"],
               out_rows)
    print(f"wrote {len(rows)} comparisons to {args.out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    m = _load_measure(args)
    tm = model.TiltedModel(rho=m, g=_interaction(args), n=args.n)
    rng = np.random.default_rng(args.seed)
    try:
        if args.method == "enumeration":
            batch = model.enumerate_exact(tm)
        elif args.method == "importance":
            batch = model.sample_importance(tm, args.count, rng)
        else:
            batch = model.sample_metropolis(
                tm, args.count, rng=rng, chains=args.chains)
    except model.ModelError as exc:
        raise CliError(str(exc))
    batch.seed = args.seed
    out = Path(args.out)
    _write_csv(out, ["S", "T", "weight"],
               zip(batch.S.tolist(), batch.T.tolist(), batch.weight.tolist()))
    meta = {"method": batch.method, "n": batch.n, "seed": args.seed,
            "diagnostics": {k: (float(v) if isinstance(v, (int, float, np.floating))
                                else v)
                            for k, v in batch.diagnostics.items()}}
    _write_json(out.with_suffix(".meta.json"), meta)
    print(f"wrote {len(batch.S)} samples to {out}")
    return EXIT_OK


def _read_batch(path) -> model.EmpiricalBatch:
    path = Path(path)
    if not path.exists():
        raise CliError(f"batch file not found: {path}")
    meta_path = path.with_suffix(".meta.json")
    if not meta_path.exists():
        raise CliError(f"batch metadata not found: {meta_path}")
    meta = json.loads(meta_path.read_text())
    S, T, w = [], [], []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            S.append(float(row["S"]))
            T.append(float(row["T"]))
            w.append(float(row["weight"]))
    return model.EmpiricalBatch(
        S=np.array(S), T=np.array(T), weight=np.array(w),
        method=meta["method"], n=meta["n"],
        diagnostics=meta.get("diagnostics", {}), seed=meta.get("seed"))


def _cmd_verify(args) -> int:
    m = _load_measure(args)
    batch = _read_batch(args.batch)
    tm = model.TiltedModel(rho=m, g=_interaction(args), n=batch.n)
    if args.mode == "lln":
        report = limitlaw.verify_lln(tm, batch, tol=args.tol)
    else:
        report = limitlaw.verify_fluctuations(tm, batch, tol_ks=args.tol)
    payload = {
        "test_id": report.test_id, "n": report.n, "method": report.method,
        "passed": report.passed, "ks_distance": report.ks_distance,
        "moment_table": report.moment_table, "tolerances": report.tolerances,
        "cramer_condition": report.cramer_flag, "details": report.details,
    }
    _write_json(args.out, payload)
    if args.mode == "fluct":
        vals, w = model.rescaled_statistic(tm, batch)
        order = np.argsort(vals)
        law = limitlaw.QuarticLaw()
        emp = np.cumsum(w[order])
        _write_csv(Path(args.out).with_suffix(".cdf.csv"),
                   ["s", "empirical_cdf", "limit_cdf"],
                   zip(vals[order].tolist(), emp.tolist(),
                       law.cdf(vals[order]).tolist()))
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_report(args) -> int:
    out_dir = Path(args.dir)
    if not out_dir.is_dir():
        raise CliError(f"not a directory: {out_dir}")
    config = json.loads(Path(args.config).read_text()) if args.config else {}
    path = write_manifest(out_dir, config)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_measure_args(p) -> None:
    p.add_argument("--preset", choices=sorted(_PRESETS))
    p.add_argument("--spec", help="measure spec JSON file")


def _add_interaction_args(p) -> None:
    p.add_argument("--g", choices=["quadratic", "quartic"], default="quadratic")
    p.add_argument("--m4", type=float, default=0.0)
    p.add_argument("--variant", choices=["standard", "star"],
                   default="standard")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cwsoc")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="measure inspection")
    ms = p.add_subparsers(dest="subcommand", required=True)
    pi = ms.add_parser("info")
    _add_measure_args(pi)
    pi.set_defaults(func=_cmd_measure_info)

    p = sub.add_parser("cramer", help="Cramer condition check")
    cs = p.add_subparsers(dest="subcommand", required=True)
    pc = cs.add_parser("check")
    _add_measure_args(pc)
    pc.add_argument("--alpha", type=float, required=True)
    pc.add_argument("--radius", type=float, default=50.0)
    pc.add_argument("--step", type=float, default=0.05)
    pc.add_argument("--out")
    pc.set_defaults(func=_cmd_cramer_check)

    p = sub.add_parser("rate", help="Cramer transform evaluation")
    rs = p.add_subparsers(dest="subcommand", required=True)
    pe = rs.add_parser("eval")
    _add_measure_args(pe)
    pe.add_argument("--x", type=float, required=True)
    pe.add_argument("--y", type=float, required=True)
    pe.set_defaults(func=_cmd_rate_eval)
    pg = rs.add_parser("grid")
    _add_measure_args(pg)
    pg.add_argument("--x-min", type=float, required=True)
    pg.add_argument("--x-max", type=float, required=True)
    pg.add_argument("--y-min", type=float, required=True)
    pg.add_argument("--y-max", type=float, required=True)
    pg.add_argument("--nx", type=int, default=21)
    pg.add_argument("--ny", type=int, default=21)
    pg.add_argument("--out", required=True)
    pg.set_defaults(func=_cmd_rate_grid)

    p = sub.add_parser("kernel", help="smoothed density comparison")
    ks = p.add_subparsers(dest="subcommand", required=True)
    pk = ks.add_parser("verify")
    _add_measure_args(pk)
    pk.add_argument("--n", type=int, required=True)
    pk.add_argument("--c", type=float, default=None)
    pk.add_argument("--d", type=int, choices=[1, 2], default=1)
    pk.add_argument("--samples", type=int, default=10**5)
    pk.add_argument("--seed", type=int, default=0)
    pk.add_argument("--points", nargs="+", required=True,
                    help="comma-separated coordinates, one argument per point")
    pk.add_argument("--out", required=True)
    pk.set_defaults(func=_cmd_kernel_verify)

    p = sub.add_parser("simulate", help="draw a batch from the tilted model")
    _add_measure_args(p)
    _add_interaction_args(p)
    p.add_argument("--method", choices=["enumeration", "importance",
                                        "metropolis"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=10**4)
    p.add_argument("--chains", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="LLN / fluctuation verification")
    vs = p.add_subparsers(dest="mode", required=True)
    for mode, tol in (("lln", 0.05), ("fluct", 0.05)):
        pv = vs.add_parser(mode)
        _add_measure_args(pv)
        _add_interaction_args(pv)
        pv.add_argument("--batch", required=True)
        pv.add_argument("--tol", type=float, default=tol)
        pv.add_argument("--out", required=True)
        pv.set_defaults(func=_cmd_verify, mode=mode)

    p = sub.add_parser("report", help="write reproducibility manifest")
    p.add_argument("--dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_report)
    return ap


def dispatch(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0,) else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (measure.MeasureError, transforms.DomainFault,
            model.ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (kernel.KernelError, limitlaw.LimitLawError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(dispatch())
