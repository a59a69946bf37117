"""Command line interface: fit, predict, evaluate, synth, report.

All randomness flows from --seed; outputs are deterministic for a given seed
and configuration (including under --threads > 1).  Every output file starts
with a comment line carrying the tool version, seed, and a hash of the
effective configuration.  Exit codes: 0 success, 1 input error, 2
convergence/numeric error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Dataset,
    SynthSpec,
    SynthTerm,
    generate_synthetic,
    load_csv,
    load_feature_csv,
    normalize,
    write_csv,
)
from .ensemble import load_model, save_model
from .errors import InputError, SubsvrError
from .gcv import GcvVariant, HyperGrid, grid_search
from .kernels import KernelSpec, default_kernel
from .reporting import (
    critical_subspace_rows,
    evaluation_to_dict,
    format_critical_subspaces,
    format_evaluation,
    outer_evaluate,
)
from .search import SearchConfig
from .svr import SvrConfig


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as InputError (exit code 1)."""

    def error(self, message):
        raise InputError(message)


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _banner(seed: int, payload: dict) -> str:
    return f"subsvr {__version__} seed={seed} config={_config_hash(payload)}"


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"input file not found: {path}")
    return p


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _add_model_options(sub):
    sub.add_argument("--seed", type=int, default=0, help="single entropy source for the run")
    sub.add_argument("--subspace-dim", type=int, default=3, help="variables per subspace (k)")
    sub.add_argument("--eta", type=float, default=0.01, help="selection threshold (fraction)")
    sub.add_argument("--tau", type=float, default=0.00001, help="termination threshold (fraction)")
    sub.add_argument("--patience", type=int, default=45,
                     help="consecutive below-tau draws before stopping (1 = stop on first)")
    sub.add_argument("--max-iterations", type=int, default=10000, help="hard cap on draws per search")
    sub.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    sub.add_argument("--epsilon-grid", type=_parse_float_list, default=(0.01, 0.1, 0.5),
                     help="comma-separated tube radii to grid over")
    sub.add_argument("--cost-grid", type=_parse_float_list, default=(1.0, 2.0, 5.0),
                     help="comma-separated cost (C = 1/lambda) levels to grid over")
    sub.add_argument("--gcv-variant", choices=("A1", "A2"), default="A1")
    sub.add_argument("--kernel", choices=("linear", "polynomial", "rbf"), default="polynomial")
    sub.add_argument("--gamma", type=float, default=None, help="kernel scale (default 1/k)")
    sub.add_argument("--degree", type=int, default=2, help="polynomial degree")
    sub.add_argument("--offset", type=float, default=1.0, help="polynomial offset")
    sub.add_argument("--bandwidth", type=float, default=1.0, help="rbf bandwidth")
    sub.add_argument("--kkt-tol", type=float, default=1e-4, help="SVR KKT stopping tolerance")
    sub.add_argument("--max-passes", type=int, default=None,
                     help="SVR pair-update budget in sweeps of n (default 10*n)")
    sub.add_argument("--threads", type=int, default=1, help="worker cap for independent grid cells")


def _add_data_options(sub):
    sub.add_argument("--data", required=True, help="input CSV path")
    sub.add_argument("--no-header", action="store_true", help="CSV has no header row")
    sub.add_argument("--response", default="-1",
                     help="response column name or 0-based index (default: last column)")


def _configs_from_args(args) -> tuple[SearchConfig, SvrConfig, HyperGrid, GcvVariant]:
    search_cfg = SearchConfig(
        subspace_dim=args.subspace_dim,
        selection_threshold=args.eta,
        termination_threshold=args.tau,
        max_iterations=args.max_iterations,
        folds=args.folds,
        seed=args.seed,
        patience=args.patience,
    )
    kernel = KernelSpec(
        family=args.kernel,
        gamma=args.gamma if args.gamma is not None else 1.0 / args.subspace_dim,
        offset=args.offset,
        degree=args.degree,
        bandwidth=args.bandwidth,
    )
    svr_base = SvrConfig(
        epsilon=args.epsilon_grid[0],
        cost=args.cost_grid[0],
        kernel=kernel,
        tolerance=args.kkt_tol,
        max_passes=args.max_passes,
    )
    grid = HyperGrid(epsilons=args.epsilon_grid, costs=args.cost_grid)
    return search_cfg, svr_base, grid, GcvVariant(args.gcv_variant)


def _run_payload(args, command: str) -> dict:
    payload = {"command": command}
    # threads is execution infrastructure: outputs must not depend on it
    skip = {"func", "data", "output_dir", "output", "model", "trace", "evaluation",
            "spec", "truth", "json_output", "verbose", "threads"}
    for key, value in sorted(vars(args).items()):
        if key in skip or callable(value):
            continue
        if isinstance(value, tuple):
            value = list(value)
        payload[key] = value
    return payload


def _write_grid_csv(path: Path, rows: list[dict], banner: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {banner}\n")
        fh.write("epsilon,cost,variant,trace,gcv,n_subspaces,cv_star_final\n")
        for r in rows:
            fh.write(
                f"{r['epsilon']!r},{r['cost']!r},{r['variant']},{r['trace']!r},"
                f"{r['gcv']!r},{r['n_subspaces']},{r['cv_star_final']!r}\n"
            )


def _write_trace_jsonl(path: Path, trace, banner: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {banner}\n")
        for rec in trace.records:
            fh.write(
                json.dumps(
                    {
                        "t": rec.iteration,
                        "indices": list(rec.indices),
                        "cv": rec.cv,
                        "delta_e": rec.delta_e,
                        "decision": rec.decision,
                    },
                    allow_nan=False,
                )
                + "\n"
            )


def _json_safe(obj):
    """Replace non-finite floats (saturated GCV cells) with strings."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, payload: dict, banner: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {banner}\n")
        json.dump(_json_safe(payload), fh, indent=1, allow_nan=False)
        fh.write("\n")


def _read_json(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = "".join(line for line in fh if not line.lstrip().startswith("#"))
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def cmd_fit(args) -> int:
    data_path = _require_file(args.data)
    out = _out_dir(args.output_dir)
    search_cfg, svr_base, grid, variant = _configs_from_args(args)
    banner = _banner(args.seed, _run_payload(args, "fit"))

    raw = load_csv(data_path, has_header=not args.no_header, response_column=args.response)
    learn = normalize(raw)
    result = grid_search(learn, grid, search_cfg, svr_base, variant, threads=args.threads)

    save_model(result.best_model, out / "model.json", header_comment=banner)
    _write_grid_csv(out / "grid.csv", result.table_rows(), banner)
    _write_trace_jsonl(out / "trace.jsonl", result.best.search.trace, banner)
    if args.verbose:
        best = result.best
        print(
            f"fit: {best.n_subspaces} subspaces, epsilon={best.epsilon}, cost={best.cost}, "
            f"gcv={best.gcv:.6g} -> {out}",
            file=sys.stderr,
        )
    return 0


def cmd_predict(args) -> int:
    model_path = _require_file(args.model)
    data_path = _require_file(args.data)
    model = load_model(model_path)
    X = load_feature_csv(
        data_path, model.p, has_header=not args.no_header, response_column=args.response
    )
    preds = model.predict(X)
    banner = _banner(model.seed, _run_payload(args, "predict"))
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {banner}\n")
        if args.decompose:
            names = ["prediction", "baseline"] + [
                "g" + str(j + 1) + "(" + ",".join(model.labels[i] for i in sub.indices) + ")"
                for j, sub in enumerate(model.subspaces)
            ]
            fh.write(",".join(names) + "\n")
            contribs = model._component_matrix(X) if X.shape[0] else np.zeros((0, len(model.subspaces)))
            for i in range(X.shape[0]):
                cells = [repr(float(preds[i])), repr(model.baseline)]
                cells += [repr(float(c)) for c in contribs[i]]
                fh.write(",".join(cells) + "\n")
        else:
            fh.write("prediction\n")
            for v in preds:
                fh.write(repr(float(v)) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    data_path = _require_file(args.data)
    out = _out_dir(args.output_dir)
    search_cfg, svr_base, grid, variant = _configs_from_args(args)
    banner = _banner(args.seed, _run_payload(args, "evaluate"))

    raw = load_csv(data_path, has_header=not args.no_header, response_column=args.response)
    report = outer_evaluate(raw, search_cfg, grid, svr_base, variant, threads=args.threads)

    with open(out / "evaluation.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# {banner}\n")
        fh.write(format_evaluation(report))
    _write_json(out / "evaluation.json", evaluation_to_dict(report), banner)
    if args.verbose:
        print(
            f"evaluate: mean RMSE {report.mean_rmse:.6f} (sd {report.sd_rmse:.6f}) -> {out}",
            file=sys.stderr,
        )
    return 0


def _terms_from_args(args) -> tuple[SynthTerm, ...]:
    terms = []
    for spec in args.term or []:
        parts = spec.split(":")
        if len(parts) not in (3, 4):
            raise InputError(f"bad term {spec!r}; expected kind:indices:coef[:degree]")
        kind, idx_txt, coef_txt = parts[0], parts[1], parts[2]
        try:
            indices = tuple(int(tok) for tok in idx_txt.split(","))
            coef = float(coef_txt)
            degree = int(parts[3]) if len(parts) == 4 else 2
        except ValueError:
            raise InputError(f"bad term {spec!r}; expected kind:indices:coef[:degree]") from None
        terms.append(SynthTerm(kind=kind, indices=indices, coef=coef, degree=degree))
    return tuple(terms)


def cmd_synth(args) -> int:
    if args.spec:
        spec = SynthSpec.from_dict(_read_json(_require_file(args.spec)))
        if args.seed is not None:
            spec = SynthSpec(n=spec.n, p=spec.p, terms=spec.terms, noise_sd=spec.noise_sd, seed=args.seed)
    else:
        if args.n is None or args.p is None:
            raise InputError("synth needs either --spec or both --n and --p")
        spec = SynthSpec(
            n=args.n,
            p=args.p,
            terms=_terms_from_args(args),
            noise_sd=args.noise_sd,
            seed=args.seed if args.seed is not None else 0,
        )
    dataset, truth = generate_synthetic(spec)
    banner = _banner(spec.seed, _run_payload(args, "synth") | {"spec": spec.to_dict()})
    write_csv(args.output, dataset.X, dataset.y, dataset.labels, header_comment=banner)
    if args.truth:
        _write_json(
            Path(args.truth),
            {"spec": spec.to_dict(), "true_subspaces": [sorted(s) for s in truth]},
            banner,
        )
    return 0


def cmd_report(args) -> int:
    model = load_model(_require_file(args.model))
    banner = _banner(model.seed, _run_payload(args, "report"))
    common = None
    if args.evaluation:
        evaluation = _read_json(_require_file(args.evaluation))
        common = set(evaluation.get("common_variable_indices", []))
    out = _out_dir(args.output_dir)

    text = format_critical_subspaces(model, model.labels, common)
    trace_summary = None
    if args.trace:
        lines = [
            json.loads(line)
            for line in _require_file(args.trace).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        ]
        n_acc = sum(1 for rec in lines if rec["decision"] == "accepted")
        trace_summary = {
            "iterations": len(lines),
            "accepted": n_acc,
            "final_cv": lines[-1]["cv"] if lines else None,
        }
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# {banner}\n")
        fh.write("Critical subspaces (acceptance order)\n")
        fh.write(text)
        if trace_summary:
            fh.write(
                f"\nsearch trace: {trace_summary['iterations']} iterations, "
                f"{trace_summary['accepted']} accepted\n"
            )
    payload = {
        "version": 1,
        "subspaces": critical_subspace_rows(model, model.labels, common),
        "baseline": model.baseline,
        "p": model.p,
    }
    if trace_summary:
        payload["trace_summary"] = trace_summary
    _write_json(out / "report.json", payload, banner)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="subsvr", description=__doc__)
    parser.add_argument("--version", action="version", version=f"subsvr {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit a model and write model/grid/trace files")
    _add_data_options(fit)
    fit.add_argument("--output-dir", required=True)
    _add_model_options(fit)
    fit.add_argument("-v", "--verbose", action="store_true")
    fit.set_defaults(func=cmd_fit)

    pred = subs.add_parser("predict", help="predict with a saved model")
    pred.add_argument("--model", required=True)
    _add_data_options(pred)
    pred.add_argument("--output", required=True)
    pred.add_argument("--decompose", action="store_true",
                      help="add per-subspace contribution columns")
    pred.add_argument("-v", "--verbose", action="store_true")
    pred.set_defaults(func=cmd_predict)

    ev = subs.add_parser("evaluate", help="outer-fold evaluation with common-variable report")
    _add_data_options(ev)
    ev.add_argument("--output-dir", required=True)
    _add_model_options(ev)
    ev.add_argument("-v", "--verbose", action="store_true")
    ev.set_defaults(func=cmd_evaluate)

    sy = subs.add_parser("synth", help="generate a synthetic dataset")
    sy.add_argument("--spec", help="JSON spec file (n, p, terms[], noise_sd, seed)")
    sy.add_argument("--n", type=int)
    sy.add_argument("--p", type=int)
    sy.add_argument("--term", action="append",
                    help="kind:indices:coef[:degree], e.g. linear:0:1.0 or product:1,2:2.0")
    sy.add_argument("--noise-sd", type=float, default=0.0)
    sy.add_argument("--seed", type=int, default=None)
    sy.add_argument("--output", required=True)
    sy.add_argument("--truth", help="also write the ground-truth subspaces as JSON")
    sy.add_argument("-v", "--verbose", action="store_true")
    sy.set_defaults(func=cmd_synth)

    rep = subs.add_parser("report", help="critical-subspace report from a model file")
    rep.add_argument("--model", required=True)
    rep.add_argument("--trace", help="search trace JSONL from fit")
    rep.add_argument("--evaluation", help="evaluation.json to mark common variables")
    rep.add_argument("--output-dir", required=True)
    rep.add_argument("-v", "--verbose", action="store_true")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SubsvrError as exc:
        record = {"error": type(exc).__name__, "exit_code": exc.exit_code, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # internal invariant violation
        record = {"error": type(exc).__name__, "exit_code": 3, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
