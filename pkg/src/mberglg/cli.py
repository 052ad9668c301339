"""Command-line surface: fit, residuals, simulate, mc-study, pmf.

All outputs are deterministic given the inputs and ``--seed``: JSON floats
are serialized with 17 significant digits (non-finite values become
``null``) and CSV floats likewise, so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .data import DataFormatError, ModelSpec, load_dataset, write_long_csv
from .distribution import NumericalBreakdownError, joint_log_pmf
from .fit import FitConfig, FitReport, fit_ml
from .glg import GLGParams, glg_sample
from .glmm import GlmmSpec, glmm_fit
from .inference import Dataset
from .montecarlo import MCScenarioConfig, generate_cluster, run_study, summarize_report
from .residuals import CONVENTIONS, quantile_residuals, simulate_envelope

__all__ = ["main"]

MODELS = ("mberglg", "normal-probit", "normal-cloglog")


# ---------------------------------------------------------------------------
# Deterministic serialization
# ---------------------------------------------------------------------------


def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    return format(v, ".17g")


def dumps_json(obj, indent: int = 0) -> str:
    """JSON with 17-significant-digit floats and null for non-finite values."""
    pad = " " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [dumps_json(v, indent + 1) for v in obj]
        return "[" + ", ".join(items) + "]"
    if isinstance(obj, dict):
        items = [f'{json.dumps(str(k))}: {dumps_json(v, indent + 1)}' for k, v in obj.items()]
        inner = ",\n".join(pad + "  " + it for it in items)
        return "{\n" + inner + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def loads_json(text: str) -> dict:
    def fix(value):
        if value is None:
            return math.nan
        return value

    def hook(d):
        return {k: fix(v) if not isinstance(v, (dict, list)) else v for k, v in d.items()}

    return json.loads(text, object_hook=hook)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_fmt_float(v) if isinstance(v, float) else v for v in row]
            )


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _print_fit_table(report: FitReport, out=sys.stdout):
    print(f"model: {report.model}   clusters: {report.n_clusters}   observations: {report.n_obs}", file=out)
    conv = "yes" if report.converged else "NO"
    print(
        f"log-likelihood: {report.loglik:.4f}   AIC: {report.aic:.4f}   "
        f"converged: {conv} ({report.iterations} iterations)",
        file=out,
    )
    print(file=out)
    print(f"{'parameter':<16}{'estimate':>12}{'std. error':>12}{'z':>10}{'p-value':>10}", file=out)
    for name, est, se, z, p in zip(
        report.param_names, report.estimates, report.se, report.wald_z, report.p_values
    ):
        se_s = f"{se:.4f}" if np.isfinite(se) else "-"
        z_s = f"{z:.3f}" if np.isfinite(z) else "-"
        p_s = f"{p:.4f}" if np.isfinite(p) else "-"
        print(f"{name:<16}{est:>12.4f}{se_s:>12}{z_s:>10}{p_s:>10}", file=out)
    se_s = f"{report.lambda_se:.4f}" if np.isfinite(report.lambda_se) else "-"
    print(f"{'lambda':<16}{report.lambda_hat:>12.4f}{se_s:>12}{'-':>10}{'-':>10}", file=out)


def _cmd_fit(args) -> int:
    spec = ModelSpec.from_dict(loads_json(Path(args.spec).read_text()))
    data = load_dataset(args.data, spec)
    if args.model == "mberglg":
        report = fit_ml(data, FitConfig(seed=args.seed))
    else:
        link = args.model.split("-", 1)[1]
        report = glmm_fit(data, GlmmSpec(link=link), FitConfig(gradient_tolerance=1e-5, seed=args.seed))
    report.param_names = spec.design_columns + [report.param_names[-1]]
    report.model_spec = spec.to_dict()
    Path(args.out).write_text(dumps_json(report.to_dict()) + "\n")
    _print_fit_table(report)
    print(f"\nfit report written to {args.out}")
    if not report.converged and not args.allow_nonconverged:
        print("error: fit did not converge (pass --allow-nonconverged to accept)", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def _cmd_residuals(args) -> int:
    report = FitReport.from_dict(loads_json(Path(args.fit).read_text()))
    if report.model != "mberglg":
        print(f"error: quantile residuals require a mberglg fit, got {report.model!r}", file=sys.stderr)
        return 1
    if args.spec is not None:
        spec = ModelSpec.from_dict(loads_json(Path(args.spec).read_text()))
    elif report.model_spec is not None:
        spec = ModelSpec.from_dict(report.model_spec)
    else:
        print("error: fit report carries no model spec; pass --spec", file=sys.stderr)
        return 1
    data = load_dataset(args.data, spec)
    rng = np.random.default_rng(args.seed)
    records = quantile_residuals(report, data, rng, convention=args.convention)
    _write_csv(
        args.out_residuals,
        ["cluster_index", "within_index", "y", "mu_hat", "a", "u_draw", "r_q"],
        [
            (r.cluster_index, r.within_index, r.y, r.mu_hat, r.a, r.u_draw, r.r_q)
            for r in records
        ],
    )
    print(f"residuals written to {args.out_residuals}")
    if args.envelope:
        bands = simulate_envelope(
            report,
            data,
            replicates=args.envelope,
            level=args.level,
            rng=np.random.default_rng(args.seed + 1),
            convention=args.convention,
        )
        observed = sorted(r.r_q for r in records)
        _write_csv(
            args.out_envelope,
            ["position", "observed", "lower", "median", "upper"],
            [
                (b.position, observed[b.position], b.lower, b.median, b.upper)
                for b in bands
            ],
        )
        print(f"envelope written to {args.out_envelope}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_COV_LAWS = ("uniform01", "binary", "standard-normal", "visit-index", "product")


def _draw_sim_covariates(cov_specs, m: int, rng) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {}
    for c in cov_specs:
        law = c.get("law", "uniform01")
        level = c.get("level", "observation")
        name = c["name"]
        if law == "product":
            a, b = c["of"]
            cols[name] = cols[a] * cols[b]
            continue
        if law == "visit-index":
            cols[name] = np.arange(1, m + 1, dtype=float)
            continue
        size = 1 if level == "subject" else m
        if law == "uniform01":
            x = rng.random(size)
        elif law == "binary":
            x = (rng.random(size) < c.get("p", 0.5)).astype(float)
        elif law == "standard-normal":
            x = rng.standard_normal(size)
        else:
            raise ValueError(f"unknown covariate law {law!r} (choose from {_COV_LAWS})")
        cols[name] = np.full(m, x[0]) if level == "subject" else x
    return cols


def _cmd_simulate(args) -> int:
    cfg = loads_json(Path(args.config).read_text())
    n = int(cfg["n_subjects"])
    size_rule = cfg.get("cluster_size", 5)
    beta = np.asarray(cfg["beta"], dtype=float)
    lam = float(cfg["lambda"])
    law = cfg.get("random_effect", "glg")
    cov_specs = cfg.get("covariates", [])
    names = [c["name"] for c in cov_specs]
    if beta.size != 1 + len(names):
        raise ValueError(
            f"beta has {beta.size} entries; expected 1 (intercept) + {len(names)} covariates"
        )
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    glg = GLGParams(0.0, lam, lam) if law == "glg" else None
    subjects, ys, covs = [], [], []
    for i in range(n):
        if isinstance(size_rule, list):
            m = int(rng.integers(size_rule[0], size_rule[1] + 1))
        else:
            m = int(size_rule)
        cols = _draw_sim_covariates(cov_specs, m, rng)
        X = np.column_stack([np.ones(m)] + [cols[nm] for nm in names])
        b = float(glg_sample(glg, rng)) if glg is not None else float(rng.normal(0.0, lam))
        y = generate_cluster(X, beta, b, rng)
        subjects.append(f"s{i + 1:04d}")
        ys.append(y)
        covs.append(np.column_stack([cols[nm] for nm in names]) if names else np.empty((m, 0)))
    write_long_csv(args.out, subjects, ys, names, covs)
    print(f"simulated {n} subjects ({sum(len(y) for y in ys)} rows) -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# mc-study
# ---------------------------------------------------------------------------


def _cmd_mc_study(args) -> int:
    cfg = MCScenarioConfig.from_dict(loads_json(Path(args.config).read_text()))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(n):
        print(f"scenario {cfg.scenario_id}: finished n={n}", flush=True)

    report = run_study(cfg, workers=args.workers, progress=progress)
    (out_dir / "mc_report.csv").write_text(summarize_report(report, "csv"))
    (out_dir / "mc_report.json").write_text(summarize_report(report, "json"))
    print(f"study report written to {out_dir}/mc_report.csv and .json")
    return 0


# ---------------------------------------------------------------------------
# pmf
# ---------------------------------------------------------------------------


def _parse_float_list(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated number list, got {text!r}")


def _cmd_pmf(args) -> int:
    y = np.array([int(v) for v in args.y])
    log_pmf = joint_log_pmf(y, args.mu, args.phi)
    print(
        dumps_json(
            {
                "y": [int(v) for v in y],
                "mu": [float(v) for v in args.mu],
                "phi": float(args.phi),
                "log_pmf": log_pmf,
                "pmf": math.exp(log_pmf),
            }
        )
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mberglg",
        description="Correlated binary regression with a log-gamma random intercept.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="maximum-likelihood fit from a long-format CSV")
    p_fit.add_argument("--data", required=True, help="long-format CSV file")
    p_fit.add_argument("--spec", required=True, help="JSON file naming response/subject/covariate columns")
    p_fit.add_argument("--model", choices=MODELS, default="mberglg")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out", default="fit_report.json", help="where to write the fit-report JSON")
    p_fit.add_argument("--allow-nonconverged", action="store_true")
    p_fit.set_defaults(func=_cmd_fit)

    p_res = sub.add_parser("residuals", help="randomized quantile residuals and envelope")
    p_res.add_argument("--fit", required=True, help="fit-report JSON from `fit`")
    p_res.add_argument("--data", required=True)
    p_res.add_argument("--spec", default=None, help="model-spec JSON (defaults to the one in the fit report)")
    p_res.add_argument("--convention", choices=CONVENTIONS, default="dunn-smyth")
    p_res.add_argument("--envelope", type=int, default=0, metavar="K", help="simulate a K-replicate envelope")
    p_res.add_argument("--level", type=float, default=0.95)
    p_res.add_argument("--seed", type=int, default=0)
    p_res.add_argument("--out-residuals", default="residuals.csv")
    p_res.add_argument("--out-envelope", default="envelope.csv")
    p_res.set_defaults(func=_cmd_residuals)

    p_sim = sub.add_parser("simulate", help="draw a synthetic long-format dataset")
    p_sim.add_argument("--config", required=True, help="JSON generation config")
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.set_defaults(func=_cmd_simulate)

    p_mc = sub.add_parser("mc-study", help="bias/RMSE/coverage study")
    p_mc.add_argument("--config", required=True, help="JSON study config")
    p_mc.add_argument("--out", required=True, help="output directory")
    p_mc.add_argument("--workers", type=int, default=1)
    p_mc.set_defaults(func=_cmd_mc_study)

    p_pmf = sub.add_parser("pmf", help="evaluate the joint pmf of one cluster")
    p_pmf.add_argument("--mu", type=_parse_float_list, required=True)
    p_pmf.add_argument("--phi", type=float, required=True)
    p_pmf.add_argument("--y", type=_parse_float_list, required=True)
    p_pmf.set_defaults(func=_cmd_pmf)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, NumericalBreakdownError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
