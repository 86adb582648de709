"""Command-line front end: fit, simulate, benchmark, stability.

All machine-readable output is JSON with sorted keys; every payload is
validated against a schema shipped with the package before it is written,
so two runs with the same configuration and seed emit byte-identical files
regardless of worker count.  Exit codes: 2 malformed input file, 3 invalid
configuration or inconsistent data, 4 numeric failure.
"""

import argparse
import json
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from .boosting import fit as run_fit
from .data import (
    BoostConfig,
    NumericError,
    ParseError,
    ValidationError,
    load_bundles,
    read_groups_tsv,
)
from .metrics import benchmark, canonical_method, stability
from .simulate import SimDesign, small_example_design, write_simulation
from .tuning import default_lambda_grid, hdbic, select_lambda, LambdaGrid

_PRESETS = {
    "standard": dict(n=200, p=1000, K=20),
    "reduced": dict(n=100, p=400, K=8),
    "table2": dict(n=200, p=1000, K=20),
}

# named designs: coefficient scheme x noise level
_DESIGNS = {
    "S1": ("random", 1.0),
    "S2": ("random", 3.0),
    "S3": ("fixed", 1.0),
    "S4": ("fixed", 3.0),
}

_SMALL_EXAMPLE_SCENARIOS = ("full", "none", "partial_a", "partial_b")

# config-file keys whose argparse destination differs
_KEY_ALIASES = {"lambda": "lam"}


def _workers_default() -> int:
    try:
        return max(1, int(os.environ.get("CDBOOST_WORKERS", "1")))
    except ValueError:
        return 1


def _schema(name: str) -> dict:
    text = resources.files("cdboost.schemas").joinpath(name).read_text()
    return json.loads(text)


def _clean(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit(payload: dict, schema_name: str, path: str | None):
    payload = _clean(payload)
    jsonschema.validate(payload, _schema(schema_name))
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            out[_KEY_ALIASES.get(key, key)] = value.strip()
    return out


def _merge_config(args: argparse.Namespace, argv: list[str]):
    """Apply config-file values for options not given on the command line."""
    if not getattr(args, "config", None):
        return
    overrides = _read_config_file(args.config)
    on_cli = set()
    for tok in argv:
        if tok.startswith("--"):
            key = tok[2:].split("=", 1)[0].replace("-", "_")
            on_cli.add(_KEY_ALIASES.get(key, key))
    for key, raw in overrides.items():
        if key in on_cli:
            continue
        if not hasattr(args, key):
            raise ValidationError(f"{args.config}: unknown config key {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int) and not isinstance(current, bool):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)


def _parse_rho(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"--rho wants three comma-separated values, got {text!r}")
    try:
        rho = tuple(float(x) for x in parts)
    except ValueError:
        raise ValidationError(f"non-numeric --rho value in {text!r}") from None
    return rho


def _parse_lambda_grid(text: str) -> LambdaGrid:
    try:
        values = sorted(float(x) for x in text.split(","))
    except ValueError:
        raise ValidationError(f"non-numeric --grid value in {text!r}") from None
    return LambdaGrid(values=tuple(values))


def _infer_model(args, bundles) -> str:
    if args.model != "auto":
        return args.model
    return "aft" if bundles[0].delta is not None else "lr"


def _design_from_args(args) -> SimDesign:
    base = dict(_PRESETS[args.preset])
    for field in ("n", "p", "K"):
        value = getattr(args, field.lower(), None)
        if value is not None:
            base[field] = value
    rho = _parse_rho(args.rho)
    scheme, sigma2 = _DESIGNS[args.design] if args.design else ("random", 1.0)
    if args.scheme is not None:
        scheme = args.scheme
    if args.sigma2 is not None:
        sigma2 = args.sigma2
    return SimDesign(
        M=3, rho_f=rho[0], rho_p=rho[1], rho_n=rho[2],
        coef_scheme=scheme, sigma2=sigma2,
        model=args.model if args.model != "auto" else "lr",
        seed=args.seed, **base,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args, argv) -> int:
    _merge_config(args, argv)
    bundles, names = load_bundles(args.data, standardize=not args.no_standardize)
    groups = read_groups_tsv(args.groups, names)
    model = _infer_model(args, bundles)
    method = canonical_method(args.method)
    if method == "sboost" and len(bundles) > 1:
        raise ValidationError("sboost takes a single dataset; use sep-sboost")

    auto = args.lam == "auto"
    lam = 0.0 if auto else float(args.lam)
    config = BoostConfig(nu=args.nu, T=args.iters, lam=lam, algorithm=method,
                         model=model, penalty_mode=args.penalty_mode)
    if auto and method == "cd_sboost":
        grid = _parse_lambda_grid(args.grid) if args.grid else default_lambda_grid(bundles)
        lam, result = select_lambda(bundles, groups, config, grid=grid,
                                    workers=args.workers)
    else:
        result = run_fit(bundles, groups, config)

    nz = np.nonzero(result.beta_hat)
    payload = {
        "method": method,
        "model": model,
        "t_hat": result.t_hat,
        "lambda": lam,
        "coefficients": [
            [int(j), int(m), float(result.beta_hat[j, m])] for j, m in zip(*nz)
        ],
        "group_verdicts": [
            {"group": k, "verdict": verdict, "classes": [list(c) for c in part]}
            for k, (verdict, part) in enumerate(
                zip(result.group_verdicts(groups), result.partitions)
            )
        ],
        "objective_trace": [float(v) for v in result.objective_trace],
        "hdbic": hdbic(result, bundles),
    }
    _emit(payload, "fit_result.schema.json", args.output)
    return 0


def cmd_simulate(args, argv) -> int:
    _merge_config(args, argv)
    scenarios = None
    if args.preset == "small-example":
        design = small_example_design(args.seed, args.model)
        scenarios = _SMALL_EXAMPLE_SCENARIOS
    else:
        design = _design_from_args(args)
    paths, groups_path, truth_path = write_simulation(
        args.outdir, design, replicate=args.replicate, scenarios=scenarios
    )
    with open(truth_path) as fh:
        jsonschema.validate(json.load(fh), _schema("simulation_truth.schema.json"))
    for path in [*paths, groups_path, truth_path]:
        print(path)
    return 0


def cmd_benchmark(args, argv) -> int:
    _merge_config(args, argv)
    design = _design_from_args(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ValidationError("no methods given")
    for m in methods:
        canonical_method(m)
    auto = args.lam == "auto"
    config = BoostConfig(nu=args.nu, T=args.iters,
                         lam=0.0 if auto else float(args.lam),
                         algorithm="cd_sboost", model=design.model,
                         penalty_mode=args.penalty_mode)
    report = benchmark(design, methods, args.replicates, config=config,
                       tune=auto, workers=args.workers, verify=not args.no_verify)
    _emit(report.to_json(), "benchmark_report.schema.json", args.output)
    table = report.to_table()
    if args.table:
        with open(args.table, "w") as fh:
            fh.write(table + "\n")
    if args.output:
        print(table)
    return 0


def cmd_stability(args, argv) -> int:
    _merge_config(args, argv)
    bundles, names = load_bundles(args.data, standardize=not args.no_standardize)
    groups = read_groups_tsv(args.groups, names)
    model = _infer_model(args, bundles)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ValidationError("no methods given")
    auto = args.lam == "auto"
    config = BoostConfig(nu=args.nu, T=args.iters,
                         lam=0.0 if auto else float(args.lam),
                         algorithm="cd_sboost", model=model,
                         penalty_mode=args.penalty_mode)
    results = stability(bundles, groups, config, methods,
                        n_splits=args.splits, seed=args.seed,
                        tune=auto, workers=args.workers)
    payload = {
        "model": model,
        "splits": args.splits,
        "seed": args.seed,
        "methods": methods,
        "results": results,
    }
    _emit(payload, "stability_report.schema.json", args.output)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common_fit_flags(sub):
    sub.add_argument("--nu", type=float, default=0.1, help="step size (default 0.1)")
    sub.add_argument("--iters", type=int, default=500, metavar="T",
                     help="boosting iteration cap (default 500)")
    sub.add_argument("--lambda", dest="lam", default="auto",
                     help="commonality penalty weight, or 'auto' for HDBIC grid search")
    sub.add_argument("--penalty-mode", choices=("all_pairs", "ordered"),
                     default="all_pairs", help="dataset pairs counted by the penalty")
    sub.add_argument("--workers", type=int, default=_workers_default(),
                     help="parallel workers (default $CDBOOST_WORKERS or 1)")
    sub.add_argument("--config", help="key=value defaults file; flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdboost",
        description="Sparse boosting across multiple datasets with "
                    "commonality/difference detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one method on CSV datasets")
    p_fit.add_argument("--data", nargs="+", required=True, metavar="CSV",
                       help="one CSV per dataset, shared covariate columns")
    p_fit.add_argument("--groups", required=True, help="TSV: covariate<TAB>group id")
    p_fit.add_argument("--method", default="cd-sboost",
                       help="cd-sboost | int-sboost | sep-sboost | pool-sboost | sboost")
    p_fit.add_argument("--model", choices=("auto", "lr", "aft"), default="auto")
    p_fit.add_argument("--grid", help="comma-separated lambda grid for --lambda auto")
    p_fit.add_argument("--no-standardize", action="store_true",
                       help="skip column standardization on load")
    p_fit.add_argument("--output", help="output JSON path (default stdout)")
    _add_common_fit_flags(p_fit)
    p_fit.set_defaults(handler=cmd_fit)

    p_sim = sub.add_parser("simulate", help="write synthetic dataset files")
    p_sim.add_argument("--preset", default="standard",
                       choices=("standard", "reduced", "small-example", "table2"),
                       help="design preset (default standard: n=200, p=1000, K=20)")
    p_sim.add_argument("--rho", default="0.8,0.2,0",
                       help="scenario proportions full,partial,none")
    p_sim.add_argument("--design", choices=sorted(_DESIGNS),
                       help="named scheme/noise pairing (overridden by "
                            "--scheme/--sigma2)")
    p_sim.add_argument("--scheme", choices=("random", "fixed"))
    p_sim.add_argument("--sigma2", type=float)
    p_sim.add_argument("--model", choices=("lr", "aft"), default="lr")
    p_sim.add_argument("--n", type=int, help="override subjects per dataset")
    p_sim.add_argument("--p", type=int, help="override covariate count")
    p_sim.add_argument("--k", dest="k", type=int, help="override group count")
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--replicate", type=int, default=0)
    p_sim.add_argument("--outdir", required=True)
    p_sim.add_argument("--config", help="key=value defaults file; flags win")
    p_sim.set_defaults(handler=cmd_simulate)

    p_bench = sub.add_parser("benchmark", help="simulate, fit, and score methods")
    p_bench.add_argument("--preset", default="standard",
                         choices=("standard", "reduced", "table2"))
    p_bench.add_argument("--rho", default="0.8,0.2,0")
    p_bench.add_argument("--design", choices=sorted(_DESIGNS),
                         help="named scheme/noise pairing (overridden by "
                              "--scheme/--sigma2)")
    p_bench.add_argument("--scheme", choices=("random", "fixed"))
    p_bench.add_argument("--sigma2", type=float)
    p_bench.add_argument("--model", choices=("lr", "aft"), default="lr")
    p_bench.add_argument("--n", type=int)
    p_bench.add_argument("--p", type=int)
    p_bench.add_argument("--k", dest="k", type=int)
    p_bench.add_argument("--methods", default="cd,int,sep,pool")
    p_bench.add_argument("--replicates", type=int, default=20)
    p_bench.add_argument("--seed", type=int, required=True)
    p_bench.add_argument("--no-verify", action="store_true",
                         help="skip per-iteration partition cross-checks")
    p_bench.add_argument("--table", help="also write the text table here")
    p_bench.add_argument("--output", help="report JSON path (default stdout)")
    _add_common_fit_flags(p_bench)
    p_bench.set_defaults(handler=cmd_benchmark)

    p_stab = sub.add_parser("stability", help="repeated-split selection stability")
    p_stab.add_argument("--data", nargs="+", required=True, metavar="CSV")
    p_stab.add_argument("--groups", required=True)
    p_stab.add_argument("--methods", default="cd")
    p_stab.add_argument("--model", choices=("auto", "lr", "aft"), default="auto")
    p_stab.add_argument("--splits", type=int, default=100)
    p_stab.add_argument("--seed", type=int, default=0)
    p_stab.add_argument("--no-standardize", action="store_true")
    p_stab.add_argument("--output", help="output JSON path (default stdout)")
    _add_common_fit_flags(p_stab)
    p_stab.set_defaults(handler=cmd_stability)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, argv)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
