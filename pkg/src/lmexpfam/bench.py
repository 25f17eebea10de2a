"""Simulation studies, dataset fits and machine-readable reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import aitchison as ait
from . import dirichlet as dir_
from .dataio import read_composition_csv
from .errors import ConfigError, DomainError, InitFailure, LMExpFamError
from .optim import Algorithm, FitOptions

logger = logging.getLogger(__name__)

MODELS = ("Dirichlet", "Aitchison")
ALGORITHMS = ("LMAdaptive", "LMFixed", "NewtonRaphson", "FPI")
INITIALIZERS = ("Moments", "Dishon", "Ronning", "Wicker", "ALN")
CSV_COLUMNS = (
    "model", "algorithm", "initializer", "replicate", "converged",
    "n_iter", "final_loglik", "final_score_norm", "seed",
)


def _default_totals():
    return tuple(range(1000, 5001, 400))


@dataclass(frozen=True)
class BenchConfig:
    """Study configuration.

    The parameter law is ``totals`` / ``half_width`` for the Dirichlet
    (each alpha uniform on ``total/K +- half_width``, one block of
    ``n_replicates`` per total) and ``aitchison_alpha`` / ``aitchison_beta``
    for the Aitchison (every alpha and beta set to the given constant).
    """

    model: str = "Dirichlet"
    algorithms: tuple = ("LMAdaptive", "LMFixed", "NewtonRaphson", "FPI")
    initializers: tuple = ("Moments", "Dishon", "Ronning", "Wicker")
    dimensions: tuple = (100,)
    n_samples: int = 20
    n_replicates: int = 20
    totals: tuple = field(default_factory=_default_totals)
    half_width: float = 2.0
    aitchison_alpha: float = 1.0
    aitchison_beta: float = 1.0
    seed: int = 0
    quad_order: int | None = None
    maxit: int = 1000
    fixed_gamma: float = 1.0
    burn_in: int = 2000
    thin: int = 10
    jobs: int = 1

    def __post_init__(self):
        for name in ("algorithms", "initializers", "dimensions", "totals"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if not self.algorithms or not self.initializers:
            raise ConfigError("algorithm and initializer sets must be nonempty")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}")
        for i in self.initializers:
            if i not in INITIALIZERS:
                raise ConfigError(f"unknown initializer {i!r}")
        if "FPI" in self.algorithms and self.model != "Dirichlet":
            raise ConfigError("FPI is only available for the Dirichlet model")
        if "ALN" in self.initializers and self.model != "Aitchison":
            raise ConfigError("the ALN initializer is only available for the Aitchison model")
        if self.model == "Aitchison" and set(self.initializers) - {"ALN"}:
            raise ConfigError("the Aitchison model only supports the ALN initializer")
        if self.n_samples < 2 or self.n_replicates < 0 or self.maxit < 1:
            raise ConfigError("n_samples >= 2, n_replicates >= 0 and maxit >= 1 required")
        if any(k < 2 for k in self.dimensions):
            raise ConfigError("dimensions must be at least 2")
        if self.model == "Dirichlet":
            for K in self.dimensions:
                for total in self.totals:
                    if total / K - self.half_width <= 0:
                        raise ConfigError(
                            f"total {total} with K={K} allows non-positive parameters"
                        )
        if self.model == "Aitchison" and any(k - 1 > ait.MAX_QUAD_DIM for k in self.dimensions):
            raise ConfigError("Aitchison dimensions are limited to K <= 7")

    def options(self, algorithm):
        return FitOptions(maxit=self.maxit, algorithm=Algorithm(algorithm),
                          fixed_gamma=self.fixed_gamma)


@dataclass
class Record:
    model: str
    algorithm: str
    initializer: str
    replicate: int
    converged: bool
    n_iter: int
    final_loglik: float
    final_score_norm: float
    seed: int
    stop_reason: str
    dimension: int
    level: float | None = None
    runtime: float = 0.0
    estimate: list | None = None


@dataclass
class BenchReport:
    config: dict
    records: list
    skipped: int = 0

    def aggregates(self):
        cells = {}
        for r in self.records:
            cells.setdefault((r.algorithm, r.initializer), []).append(r)
        out = []
        for (alg, init), recs in sorted(cells.items()):
            conv = [r for r in recs if r.converged]
            out.append({
                "algorithm": alg,
                "initializer": init,
                "replicates": len(recs),
                "converged": len(conv),
                "convergence_rate": len(conv) / len(recs),
                "mean_iterations": float(np.mean([r.n_iter for r in conv])) if conv else None,
            })
        return out

    def cell(self, algorithm, initializer=None):
        return [r for r in self.records
                if r.algorithm == algorithm and (initializer is None or r.initializer == initializer)]


# -- single fits ------------------------------------------------------------

def _run_cell(model, stats, start, algorithm, opts, quad_order):
    """Fit one cell; returns ``(FitResult or None, stop_reason)``."""
    try:
        if model == "Dirichlet":
            if algorithm == "FPI":
                res = dir_.fpi_fit(stats, start, opts)
            else:
                res = dir_.fit_dirichlet(stats, start, opts)
        else:
            res = ait.fit_aitchison(stats, start, opts, quad_order)
    except DomainError:
        return None, "LeftDomain"
    except LMExpFamError as exc:
        return None, type(exc).__name__
    return res, res.stop_reason.value


def _cell_record(model, algorithm, initializer, replicate, seed, K, level, fit,
                 keep_estimate=False):
    t0 = time.perf_counter()
    res, reason = fit()
    elapsed = time.perf_counter() - t0
    if res is None:
        return Record(model, algorithm, initializer, replicate, False, 0,
                      float("nan"), float("nan"), seed, reason, K, level, elapsed)
    estimate = None
    if keep_estimate:
        est = res.theta_hat + 1.0 if model == "Dirichlet" else ait.AitchisonParams.from_natural(
            res.theta_hat).packed
        estimate = [float(v) for v in est]
    return Record(model, algorithm, initializer, replicate, bool(res.converged), res.n_iter,
                  float(res.final_loglik), res.final_score_norm, seed, reason, K, level,
                  elapsed, estimate)


def _dirichlet_replicate(cfg, replicate, seed, K, total):
    rng = np.random.default_rng(seed)
    alpha = dir_.draw_alpha_uniform_band(total, K, rng, cfg.half_width)
    y = dir_.sample_dirichlet(alpha, cfg.n_samples, rng)
    stats = dir_.DirichletSuffStats.from_data(y)
    records = []
    for init in cfg.initializers:
        a0 = dir_.INITIALIZERS[init](y)
        for alg in cfg.algorithms:
            opts = cfg.options("LMAdaptive" if alg == "FPI" else alg)
            records.append(_cell_record(
                "Dirichlet", alg, init, replicate, seed, K, float(total),
                lambda: _run_cell("Dirichlet", stats, a0, alg, opts, None),
            ))
    return records


def _aitchison_truth(cfg, K):
    return ait.AitchisonParams(np.full(K, cfg.aitchison_alpha),
                               np.full(K * (K - 1) // 2, cfg.aitchison_beta))


def _aitchison_replicate(cfg, replicate, seed, K, _level):
    params = _aitchison_truth(cfg, K)
    y = ait.sample_aitchison(params, cfg.n_samples, seed, cfg.burn_in, cfg.thin)
    try:
        p0 = ait.init_from_aln(y)
    except InitFailure:
        return None
    stats = ait.AitchisonSuffStats.from_data(y)
    records = []
    for alg in cfg.algorithms:
        records.append(_cell_record(
            "Aitchison", alg, "ALN", replicate, seed, K, None,
            lambda: _run_cell("Aitchison", stats, p0, alg, cfg.options(alg), cfg.quad_order),
        ))
    return records


def _tasks(cfg, levels):
    """``(replicate, seed, K, level)`` tuples with seeds spawned from the master seed."""
    blocks = [(K, lvl) for K in cfg.dimensions for lvl in levels]
    children = np.random.SeedSequence(cfg.seed).spawn(len(blocks) * cfg.n_replicates)
    tasks = []
    for b, (K, lvl) in enumerate(blocks):
        for r in range(cfg.n_replicates):
            idx = b * cfg.n_replicates + r
            tasks.append((idx, int(children[idx].generate_state(1)[0]), K, lvl))
    return tasks


def _run_task(args):
    func, cfg, task = args
    return func(cfg, *task)


def _run_study(cfg, func, levels):
    tasks = _tasks(cfg, levels)
    jobs = [(func, cfg, t) for t in tasks]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_task, jobs))
    else:
        results = [_run_task(j) for j in jobs]
    records = []
    skipped = 0
    for res in results:
        if res is None:
            skipped += 1
        else:
            records.extend(res)
    return BenchReport(config=config_to_dict(cfg), records=records, skipped=skipped)


def run_dirichlet_study(config):
    """One replicate block per (dimension, total); every cell shares the block's data."""
    if config.model != "Dirichlet":
        config = replace(config, model="Dirichlet")
    return _run_study(config, _dirichlet_replicate, config.totals)


def run_aitchison_study(config):
    """Replicates with a non positive definite alr covariance are skipped."""
    if config.model != "Aitchison":
        raise ConfigError("run_aitchison_study needs model='Aitchison'")
    return _run_study(config, _aitchison_replicate, (None,))


def fit_dataset(path, model="Dirichlet", initializer=None, algorithms=None, ref_index=None,
                delimiter=",", header=None, zero_policy="reject", maxit=1000, quad_order=None):
    """Fit every requested algorithm from one starting value on a CSV dataset."""
    y, _ = read_composition_csv(path, delimiter=delimiter, header=header,
                                zero_policy=zero_policy)
    if model == "Dirichlet":
        initializer = initializer or "Wicker"
        algorithms = tuple(algorithms or ("LMAdaptive", "NewtonRaphson"))
        cfg = BenchConfig(model=model, algorithms=algorithms, initializers=(initializer,),
                          dimensions=(y.shape[1],), n_samples=y.shape[0], n_replicates=1,
                          totals=(), maxit=maxit)
        start = dir_.INITIALIZERS[initializer](y)
        stats = dir_.DirichletSuffStats.from_data(y)
    elif model == "Aitchison":
        initializer = initializer or "ALN"
        algorithms = tuple(algorithms or ("LMAdaptive", "NewtonRaphson"))
        cfg = BenchConfig(model=model, algorithms=algorithms, initializers=(initializer,),
                          dimensions=(y.shape[1],), n_samples=y.shape[0], n_replicates=1,
                          maxit=maxit, quad_order=quad_order)
        start = ait.init_from_aln(y, ref_index)
        stats = ait.AitchisonSuffStats.from_data(y)
    else:
        raise ConfigError(f"unknown model {model!r}")
    records = []
    for alg in algorithms:
        opts = cfg.options("LMAdaptive" if alg == "FPI" else alg)
        records.append(_cell_record(
            model, alg, initializer, 0, 0, y.shape[1], None,
            lambda: _run_cell(model, stats, start, alg, opts, quad_order),
            keep_estimate=True,
        ))
    conf = config_to_dict(cfg)
    conf["dataset"] = str(path)
    return BenchReport(config=conf, records=records)


# -- reports ----------------------------------------------------------------

def config_to_dict(cfg):
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _clean(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def record_to_dict(rec, include_timing=False):
    d = {k: _clean(v) for k, v in asdict(rec).items()}
    if not include_timing:
        d.pop("runtime")
    if d["estimate"] is None:
        d.pop("estimate")
    return d


def report_to_json(report, include_timing=False):
    payload = {
        "config": report.config,
        "skipped": report.skipped,
        "records": [record_to_dict(r, include_timing) for r in report.records],
        "aggregates": report.aggregates(),
    }
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_to_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.records:
        d = record_to_dict(r)
        writer.writerow(["" if d[c] is None else repr(d[c]) if isinstance(d[c], float) else d[c]
                         for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_report(report, format="json", path=None, include_timing=False):
    """Write ``report`` as JSON or CSV; returns the text written."""
    if format == "json":
        text = report_to_json(report, include_timing)
    elif format == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def load_report(path):
    with open(path) as fh:
        payload = json.load(fh)
    fnames = {f.name for f in fields(Record)}
    records = []
    for d in payload["records"]:
        d = {k: v for k, v in d.items() if k in fnames}
        for k in ("final_loglik", "final_score_norm"):
            if d.get(k) is None:
                d[k] = float("nan")
        records.append(Record(**d))
    return BenchReport(config=payload["config"], records=records,
                       skipped=payload.get("skipped", 0))


def format_table(report):
    """Plain-text per-cell summary: convergence count, rate and mean iterations."""
    rows = report.aggregates()
    lines = [f"{'algorithm':<14} {'initializer':<12} {'conv':>6} {'n':>5} {'rate':>6} {'mean it':>8}"]
    for a in rows:
        mean = "-" if a["mean_iterations"] is None else f"{a['mean_iterations']:.2f}"
        lines.append(
            f"{a['algorithm']:<14} {a['initializer']:<12} {a['converged']:>6} "
            f"{a['replicates']:>5} {a['convergence_rate']:>6.2f} {mean:>8}"
        )
    return "\n".join(lines) + "\n"
