"""Data generation under the hierarchical model and the bias/RMSE/coverage engine.

Five study scenarios are supported, differing in the covariate law, the
random-intercept law used for generation (log-gamma or normal, always under
the complementary log-log link), and the model fitted to each replicate:

    1: x ~ U(0,1),  generate glg,    fit mberglg-cloglog
    2: x ~ Bern(p), generate glg,    fit mberglg-cloglog
    3: x ~ U(0,1),  generate normal, fit mberglg-cloglog
    4: x ~ N(0,1),  generate glg,    fit normal-probit
    5: x ~ N(0,1),  generate glg,    fit normal-cloglog

The normal generator draws ``b_i ~ Normal(0, sd=lam)`` (standard-deviation
convention).  Replicates use seeds derived from
``(seed, scenario, n, replicate)`` so reports are identical for any worker
count; non-converged fits are excluded from the aggregates and surface in
``convergence_rate``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fit import FitConfig, FitReport, fit_ml, wald_interval
from .glg import GLGParams, glg_sample
from .glmm import GlmmSpec, glmm_fit
from .inference import ClusterData, Dataset

__all__ = [
    "MCScenarioConfig",
    "MCCell",
    "MCReport",
    "SCENARIO_BINDINGS",
    "generate_cluster",
    "generate_dataset",
    "run_study",
    "summarize_report",
    "parse_summary",
]

COVARIATE_LAWS = ("uniform01", "binary", "standard-normal")
GENERATORS = ("glg", "normal")
FITTERS = ("mberglg-cloglog", "normal-probit", "normal-cloglog")
PARAMETERS = ("beta0", "beta1", "lambda")

#: scenario id -> (covariate_law, generator, fitter)
SCENARIO_BINDINGS = {
    1: ("uniform01", "glg", "mberglg-cloglog"),
    2: ("binary", "glg", "mberglg-cloglog"),
    3: ("uniform01", "normal", "mberglg-cloglog"),
    4: ("standard-normal", "glg", "normal-probit"),
    5: ("standard-normal", "glg", "normal-cloglog"),
}


@dataclass(frozen=True)
class MCScenarioConfig:
    """Declarative description of one simulation study."""

    scenario_id: int
    true_theta: tuple[float, float, float] = (1.0, -1.0, 1.0)  # (beta0, beta1, lam)
    n_grid: tuple[int, ...] = (30, 60, 90, 120, 150)
    replicates: int = 200  # reference studies use 1000; 200 keeps desk runs fast
    cluster_size: int | tuple[int, int] = 5  # fixed m, or inclusive (lo, hi) per cluster
    covariate_law: str = ""
    generator: str = ""
    fitter: str = ""
    binary_p: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.scenario_id not in SCENARIO_BINDINGS:
            raise ValueError(f"scenario_id must be in 1..5, got {self.scenario_id}")
        bound = SCENARIO_BINDINGS[self.scenario_id]
        filled = tuple(v or b for v, b in zip((self.covariate_law, self.generator, self.fitter), bound))
        if filled != bound:
            raise ValueError(
                f"scenario {self.scenario_id} binds (covariate_law, generator, fitter)="
                f"{bound}; got {filled}"
            )
        object.__setattr__(self, "covariate_law", filled[0])
        object.__setattr__(self, "generator", filled[1])
        object.__setattr__(self, "fitter", filled[2])
        if self.replicates < 2:
            raise ValueError("replicates must be >= 2")
        if any(n < 2 for n in self.n_grid):
            raise ValueError("sample sizes must be >= 2")
        if len(self.true_theta) != 3 or self.true_theta[2] <= 0.0:
            raise ValueError("true_theta must be (beta0, beta1, lam) with lam > 0")
        if isinstance(self.cluster_size, tuple):
            lo, hi = self.cluster_size
            if not (1 <= lo <= hi):
                raise ValueError("cluster_size range must satisfy 1 <= lo <= hi")
        elif self.cluster_size < 1:
            raise ValueError("cluster_size must be >= 1")
        if not 0.0 < self.binary_p < 1.0:
            raise ValueError("binary_p must be in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "MCScenarioConfig":
        kwargs = dict(d)
        if "n_grid" in kwargs:
            kwargs["n_grid"] = tuple(int(v) for v in kwargs["n_grid"])
        if "true_theta" in kwargs:
            kwargs["true_theta"] = tuple(float(v) for v in kwargs["true_theta"])
        if isinstance(kwargs.get("cluster_size"), list):
            kwargs["cluster_size"] = tuple(int(v) for v in kwargs["cluster_size"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "true_theta": list(self.true_theta),
            "n_grid": list(self.n_grid),
            "replicates": self.replicates,
            "cluster_size": list(self.cluster_size)
            if isinstance(self.cluster_size, tuple)
            else self.cluster_size,
            "covariate_law": self.covariate_law,
            "generator": self.generator,
            "fitter": self.fitter,
            "binary_p": self.binary_p,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class MCCell:
    """Aggregated metrics for one (scenario, n, parameter) combination."""

    scenario: int
    n: int
    parameter: str
    bias: float
    rmse: float
    coverage95: float
    replicates: int
    convergence_rate: float


@dataclass(eq=False)
class MCReport:
    cells: list[MCCell]

    def cell(self, n: int, parameter: str) -> MCCell:
        for c in self.cells:
            if c.n == n and c.parameter == parameter:
                return c
        raise KeyError(f"no cell for n={n}, parameter={parameter}")

    def __eq__(self, other) -> bool:
        return isinstance(other, MCReport) and self.cells == other.cells


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate_cluster(
    x_rows: np.ndarray, beta: np.ndarray, random_effect: float, rng: np.random.Generator
) -> np.ndarray:
    """Bernoulli draws with success rate ``1 - exp(-exp(x'beta + b))``."""
    eta = np.asarray(x_rows, dtype=float) @ np.asarray(beta, dtype=float) + random_effect
    u = -np.expm1(-np.exp(np.clip(eta, -700.0, 700.0)))
    return (rng.random(u.size) < u).astype(np.int64)


def _draw_covariates(law: str, m: int, binary_p: float, rng: np.random.Generator) -> np.ndarray:
    if law == "uniform01":
        return rng.random(m)
    if law == "binary":
        return (rng.random(m) < binary_p).astype(float)
    if law == "standard-normal":
        return rng.standard_normal(m)
    raise ValueError(f"unknown covariate law {law!r}")


def _cluster_sizes(rule, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(rule, tuple):
        lo, hi = rule
        return rng.integers(lo, hi + 1, size=n)
    return np.full(n, int(rule))


def generate_dataset(
    n: int,
    true_theta: tuple[float, float, float],
    rng: np.random.Generator,
    *,
    covariate_law: str = "uniform01",
    generator: str = "glg",
    cluster_size: int | tuple[int, int] = 5,
    binary_p: float = 0.5,
) -> Dataset:
    """Simulate ``n`` clusters from the hierarchical model with design [1, x]."""
    beta0, beta1, lam = true_theta
    beta = np.array([beta0, beta1])
    if generator == "glg":
        glg = GLGParams(mu=0.0, sigma=lam, lam=lam)
    elif generator != "normal":
        raise ValueError(f"unknown generator {generator!r}")
    sizes = _cluster_sizes(cluster_size, n, rng)
    clusters = []
    for m in sizes:
        x = _draw_covariates(covariate_law, int(m), binary_p, rng)
        X = np.column_stack([np.ones(int(m)), x])
        b = glg_sample(glg, rng) if generator == "glg" else rng.normal(0.0, lam)
        clusters.append(ClusterData(y=generate_cluster(X, beta, float(b), rng), X=X))
    return Dataset(clusters=clusters)


# ---------------------------------------------------------------------------
# Study engine
# ---------------------------------------------------------------------------


def _replicate_seed(seed: int, scenario: int, n: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, scenario, n, rep])))


def _fit_replicate(cfg: MCScenarioConfig, n: int, rep: int):
    """One replicate: (converged, estimates[3], ses[3]) on (beta0, beta1, lambda)."""
    rng = _replicate_seed(cfg.seed, cfg.scenario_id, n, rep)
    data = generate_dataset(
        n,
        cfg.true_theta,
        rng,
        covariate_law=cfg.covariate_law,
        generator=cfg.generator,
        cluster_size=cfg.cluster_size,
        binary_p=cfg.binary_p,
    )
    try:
        if cfg.fitter == "mberglg-cloglog":
            report = fit_ml(data, FitConfig())
        else:
            link = cfg.fitter.split("-", 1)[1]
            report = glmm_fit(data, GlmmSpec(link=link), FitConfig(gradient_tolerance=1e-5))
    except (ValueError, ArithmeticError, np.linalg.LinAlgError):
        return False, (np.nan,) * 3, (np.nan,) * 3
    est = (float(report.beta[0]), float(report.beta[1]), float(report.lambda_hat))
    ses = (float(report.se[0]), float(report.se[1]), float(report.lambda_se))
    return bool(report.converged), est, ses


def _run_cell_block(args):
    cfg_dict, n, reps = args
    cfg = MCScenarioConfig.from_dict(cfg_dict)
    return [_fit_replicate(cfg, n, rep) for rep in reps]


def run_study(cfg: MCScenarioConfig, *, workers: int = 1, progress=None) -> MCReport:
    """Run all replicates on the n-grid and aggregate bias/RMSE/coverage.

    Results are independent of ``workers`` because every replicate derives
    its own seed; aggregation excludes non-converged fits (their frequency
    is reported as ``convergence_rate``).
    """
    truth = {
        "beta0": cfg.true_theta[0],
        "beta1": cfg.true_theta[1],
        "lambda": cfg.true_theta[2],
    }
    cells: list[MCCell] = []
    for n in cfg.n_grid:
        reps = list(range(cfg.replicates))
        if workers > 1:
            blocks = np.array_split(np.array(reps), workers * 4)
            tasks = [(cfg.to_dict(), n, [int(r) for r in b]) for b in blocks if b.size]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = [r for block in pool.map(_run_cell_block, tasks) for r in block]
        else:
            results = [_fit_replicate(cfg, n, rep) for rep in reps]
        ok = [(est, ses) for conv, est, ses in results if conv]
        rate = len(ok) / cfg.replicates
        for j, name in enumerate(PARAMETERS):
            if ok:
                est = np.array([e[j] for e, _ in ok])
                ses = np.array([s[j] for _, s in ok])
                err = est - truth[name]
                bias = float(err.mean())
                rmse = float(np.sqrt((err ** 2).mean()))
                with np.errstate(invalid="ignore"):
                    halves = np.array([wald_interval(0.0, s)[1] for s in ses])
                    covered = np.abs(err) <= halves
                coverage = float(np.mean(np.where(np.isfinite(halves), covered, False)))
            else:
                bias = rmse = coverage = float("nan")
            cells.append(
                MCCell(
                    scenario=cfg.scenario_id,
                    n=int(n),
                    parameter=name,
                    bias=bias,
                    rmse=rmse,
                    coverage95=coverage,
                    replicates=cfg.replicates,
                    convergence_rate=rate,
                )
            )
        if progress is not None:
            progress(n)
    return MCReport(cells=cells)


# ---------------------------------------------------------------------------
# Tidy serialization (long format, re-plottable)
# ---------------------------------------------------------------------------

_SUMMARY_COLUMNS = ("scenario", "n", "parameter", "metric", "value", "replicates", "convergence_rate")
_METRICS = ("bias", "rmse", "coverage95")


def _fmt(v: float) -> str:
    return format(v, ".17g")


def summarize_report(report: MCReport, fmt: str = "csv") -> str:
    """Long-format table (scenario, n, parameter, metric, value, ...)."""
    rows = []
    for c in report.cells:
        for metric in _METRICS:
            rows.append(
                {
                    "scenario": c.scenario,
                    "n": c.n,
                    "parameter": c.parameter,
                    "metric": metric,
                    "value": getattr(c, metric if metric != "coverage95" else "coverage95"),
                    "replicates": c.replicates,
                    "convergence_rate": c.convergence_rate,
                }
            )
    if fmt == "csv":
        lines = [",".join(_SUMMARY_COLUMNS)]
        for r in rows:
            lines.append(
                ",".join(
                    [
                        str(r["scenario"]),
                        str(r["n"]),
                        r["parameter"],
                        r["metric"],
                        _fmt(r["value"]),
                        str(r["replicates"]),
                        _fmt(r["convergence_rate"]),
                    ]
                )
            )
        return "\n".join(lines) + "\n"
    if fmt == "json":
        import json

        return json.dumps(rows, indent=1, default=float) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_summary(text: str, fmt: str = "csv") -> MCReport:
    """Inverse of :func:`summarize_report`."""
    if fmt == "json":
        import json

        rows = json.loads(text)
    elif fmt == "csv":
        lines = [ln for ln in text.strip().splitlines() if ln]
        header = lines[0].split(",")
        if tuple(header) != _SUMMARY_COLUMNS:
            raise ValueError(f"unexpected summary header: {header}")
        rows = []
        for ln in lines[1:]:
            vals = ln.split(",")
            rows.append(dict(zip(_SUMMARY_COLUMNS, vals)))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    grouped: dict[tuple, dict] = {}
    for r in rows:
        key = (int(r["scenario"]), int(r["n"]), r["parameter"])
        entry = grouped.setdefault(
            key,
            {
                "replicates": int(r["replicates"]),
                "convergence_rate": float(r["convergence_rate"]),
            },
        )
        entry[r["metric"]] = float(r["value"])
    cells = [
        MCCell(
            scenario=k[0],
            n=k[1],
            parameter=k[2],
            bias=v["bias"],
            rmse=v["rmse"],
            coverage95=v["coverage95"],
            replicates=v["replicates"],
            convergence_rate=v["convergence_rate"],
        )
        for k, v in grouped.items()
    ]
    return MCReport(cells=cells)
