"""Protocol orchestration: grid search, seed sweeps, paired significance.

The comparison protocol trains every grid point once per label mode with a
fixed search seed, picks the config with the lowest best validation loss,
retrains the winner across seeds, and reports per-mode means with paired
t-tests on the per-seed metric vectors (pairing is by seed index).

The Student-t p-value rests on a self-contained regularized incomplete
beta function evaluated by a modified Lentz continued fraction.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data_model import Dataset, SplitIndices
from .errors import ValidationError
from .trainer import TrainConfig, train

ALPHA = 0.05

# continued-fraction controls
_CF_MAX_ITER = 300
_CF_REL_TOL = 1e-12
_CF_TINY = 1e-300


@dataclass(frozen=True)
class GridSpace:
    """Hyperparameter grid; the default spans 108 configurations."""

    learning_rates: tuple = (1e-3, 1e-4, 1e-5)
    batch_sizes: tuple = (8, 16, 32)
    epoch_caps: tuple = (10, 15, 20)
    weight_decays: tuple = (0.0, 1e-4)
    schedulers: tuple = ("none", "plateau")

    def __post_init__(self):
        for name in ("learning_rates", "batch_sizes", "epoch_caps", "weight_decays", "schedulers"):
            if len(getattr(self, name)) == 0:
                raise ValidationError(f"grid field {name} must be non-empty")

    def __len__(self) -> int:
        return (
            len(self.learning_rates)
            * len(self.batch_sizes)
            * len(self.epoch_caps)
            * len(self.weight_decays)
            * len(self.schedulers)
        )

    def configs(self, base: TrainConfig):
        """Enumerate configs in documented order: lr, batch, epochs, wd, scheduler."""
        for lr, bs, ep, wd, sched in itertools.product(
            self.learning_rates,
            self.batch_sizes,
            self.epoch_caps,
            self.weight_decays,
            self.schedulers,
        ):
            yield replace(
                base,
                learning_rate=lr,
                batch_size=bs,
                max_epochs=ep,
                weight_decay=wd,
                scheduler=sched,
            )


@dataclass(frozen=True)
class GridEntry:
    """Ledger row for one evaluated grid point."""

    config: TrainConfig
    best_val_loss: float
    selected: bool = False


@dataclass(eq=False)
class GridSearchResult:
    best_config: TrainConfig
    entries: list


def _train_job(args):
    dataset, splits, config = args
    return train(dataset, splits, config)


def _run_all(dataset, splits, configs, jobs: int):
    """Train each config; results keep enumeration order regardless of jobs."""
    work = [(dataset, splits, cfg) for cfg in configs]
    if jobs <= 1 or len(work) <= 1:
        return [_train_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_train_job, work))


def grid_search(
    dataset: Dataset,
    splits: SplitIndices,
    space: GridSpace,
    mode: str,
    base: TrainConfig | None = None,
    search_seed: int = 0,
    jobs: int = 1,
) -> GridSearchResult:
    """Exhaustively train the grid for one label mode with a fixed seed.

    Returns the config with minimal best validation loss; ties break by
    enumeration order. Entries record every evaluated point for the
    grid ledger.
    """
    base = base if base is not None else TrainConfig()
    base = replace(base, label_mode=mode, seed=search_seed)
    configs = list(space.configs(base))
    results = _run_all(dataset, splits, configs, jobs)
    best_i = 0
    for i, res in enumerate(results):
        if res.best_val_loss < results[best_i].best_val_loss:
            best_i = i
    entries = [
        GridEntry(config=cfg, best_val_loss=res.best_val_loss, selected=(i == best_i))
        for i, (cfg, res) in enumerate(zip(configs, results))
    ]
    return GridSearchResult(best_config=configs[best_i], entries=entries)


@dataclass(eq=False)
class SeedSweepResult:
    """Aligned per-seed test metrics for one label mode."""

    mode: str
    seeds: tuple
    accuracy: np.ndarray
    mean_kl: np.ndarray
    entropy_correlation: np.ndarray

    @property
    def n_seeds(self) -> int:
        return len(self.seeds)

    def summary(self) -> dict:
        """Means and sample standard deviations of each metric."""
        out = {}
        for name in ("accuracy", "mean_kl", "entropy_correlation"):
            vec = getattr(self, name)
            out[f"{name}_mean"] = float(vec.mean())
            out[f"{name}_std"] = float(vec.std(ddof=1)) if vec.size > 1 else 0.0
        return out


def multi_seed_run(
    dataset: Dataset,
    splits: SplitIndices,
    config: TrainConfig,
    n_seeds: int,
    base_seed: int = 0,
    jobs: int = 1,
    return_results: bool = False,
):
    """Retrain one config with seeds base_seed..base_seed+n_seeds-1."""
    if n_seeds < 2:
        raise ValidationError("n_seeds must be >= 2")
    seeds = tuple(base_seed + i for i in range(n_seeds))
    configs = [replace(config, seed=s) for s in seeds]
    results = _run_all(dataset, splits, configs, jobs)
    for res in results:
        if res.test_summary is None:
            raise ValidationError("multi_seed_run needs a non-empty test split")
    sweep = SeedSweepResult(
        mode=config.label_mode,
        seeds=seeds,
        accuracy=np.array([r.test_summary.accuracy for r in results]),
        mean_kl=np.array([r.test_summary.mean_kl for r in results]),
        entropy_correlation=np.array([r.test_summary.entropy_correlation for r in results]),
    )
    if return_results:
        return sweep, results
    return sweep


# ---------------------------------------------------------------------------
# statistics kernel


def _betacf(a: float, b: float, x: float) -> float:
    """Modified Lentz continued fraction for the incomplete beta."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_REL_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction stalled for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValidationError("betainc requires a > 0 and b > 0")
    if x < 0 or x > 1:
        raise ValidationError("betainc requires x in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided p-value of a Student-t statistic."""
    if dof < 1:
        raise ValidationError("dof must be >= 1")
    if math.isnan(t):
        raise ValidationError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    # P(|T| > t) = I_x(dof/2, 1/2) with x = dof / (dof + t^2)
    x = dof / (dof + t * t)
    return min(1.0, betainc(dof / 2.0, 0.5, x))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    dof: int


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on vectors aligned by seed index.

    All-zero differences return (t=0, p=1); equal nonzero differences have
    zero spread and return t=+/-inf, p=0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("paired_t_test needs two equal-length vectors")
    n = a.size
    if n < 2:
        raise ValidationError("paired_t_test needs n >= 2")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    dof = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, dof=dof)
        return TTestResult(t=math.copysign(math.inf, mean), p=0.0, dof=dof)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, p=student_t_two_sided_p(t, dof), dof=dof)


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class DatasetComparison:
    """Soft-vs-hard comparison row for one dataset."""

    dataset: str
    n_seeds: int
    acc_soft_mean: float
    acc_soft_std: float
    acc_hard_mean: float
    acc_hard_std: float
    kl_soft_mean: float
    kl_soft_std: float
    kl_hard_mean: float
    kl_hard_std: float
    acc_t: float
    acc_p: float
    kl_t: float
    kl_p: float
    corr_soft_mean: float
    corr_hard_mean: float
    corr_pct_delta: float
    kl_pct_improvement: float
    significant: tuple  # subset of ("accuracy", "kl")


@dataclass(eq=False)
class ComparisonReport:
    rows: list
    alpha: float = ALPHA

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "datasets": [
                {
                    "dataset": r.dataset,
                    "n_seeds": r.n_seeds,
                    "soft": {
                        "accuracy_mean": r.acc_soft_mean,
                        "accuracy_std": r.acc_soft_std,
                        "kl_mean": r.kl_soft_mean,
                        "kl_std": r.kl_soft_std,
                        "entropy_correlation_mean": r.corr_soft_mean,
                    },
                    "hard": {
                        "accuracy_mean": r.acc_hard_mean,
                        "accuracy_std": r.acc_hard_std,
                        "kl_mean": r.kl_hard_mean,
                        "kl_std": r.kl_hard_std,
                        "entropy_correlation_mean": r.corr_hard_mean,
                    },
                    "paired_t": {
                        "accuracy": {"t": r.acc_t, "p": r.acc_p},
                        "kl": {"t": r.kl_t, "p": r.kl_p},
                    },
                    "entropy_correlation_pct_delta": r.corr_pct_delta,
                    "kl_pct_improvement": r.kl_pct_improvement,
                    "significant": list(r.significant),
                }
                for r in self.rows
            ],
        }

    def render_text(self) -> str:
        """Aligned human-readable table, one block of two rows per dataset."""
        lines = []
        header = (
            f"{'dataset':<24} {'model':<5} {'accuracy':>16} {'KL':>16} "
            f"{'p(acc)':>9} {'p(KL)':>9} {'corr':>7}  significant"
        )
        lines.append(header)
        lines.append("-" * len(header))
        for r in self.rows:
            sig = ",".join(r.significant) if r.significant else "none"
            lines.append(
                f"{r.dataset:<24} {'hard':<5} "
                f"{100 * r.acc_hard_mean:7.2f} ± {100 * r.acc_hard_std:5.2f} "
                f"{r.kl_hard_mean:8.4f} ± {r.kl_hard_std:5.4f} "
                f"{r.acc_p:9.3g} {r.kl_p:9.3g} {r.corr_hard_mean:7.3f}  {sig}"
            )
            lines.append(
                f"{'':<24} {'soft':<5} "
                f"{100 * r.acc_soft_mean:7.2f} ± {100 * r.acc_soft_std:5.2f} "
                f"{r.kl_soft_mean:8.4f} ± {r.kl_soft_std:5.4f} "
                f"{'':>9} {'':>9} {r.corr_soft_mean:7.3f}  "
                f"(corr {r.corr_pct_delta:+.1f}%, KL {r.kl_pct_improvement:+.1f}%)"
            )
        return "\n".join(lines)


def _pct_delta(new: float, old: float) -> float:
    if old == 0.0:
        return math.nan
    return 100.0 * (new - old) / abs(old)


def build_report(sweeps: dict, alpha: float = ALPHA) -> ComparisonReport:
    """Tables analog: per-dataset means, paired tests, significance flags.

    ``sweeps`` maps dataset name -> {"soft": SeedSweepResult, "hard": SeedSweepResult}.
    """
    rows = []
    for name in sorted(sweeps):
        pair = sweeps[name]
        soft, hard = pair["soft"], pair["hard"]
        if soft.n_seeds != hard.n_seeds:
            raise ValidationError(f"{name}: soft and hard sweeps have different seed counts")
        acc_test = paired_t_test(soft.accuracy, hard.accuracy)
        kl_test = paired_t_test(soft.mean_kl, hard.mean_kl)
        significant = tuple(
            metric
            for metric, test in (("accuracy", acc_test), ("kl", kl_test))
            if test.p < alpha
        )
        s, h = soft.summary(), hard.summary()
        rows.append(
            DatasetComparison(
                dataset=name,
                n_seeds=soft.n_seeds,
                acc_soft_mean=s["accuracy_mean"],
                acc_soft_std=s["accuracy_std"],
                acc_hard_mean=h["accuracy_mean"],
                acc_hard_std=h["accuracy_std"],
                kl_soft_mean=s["mean_kl_mean"],
                kl_soft_std=s["mean_kl_std"],
                kl_hard_mean=h["mean_kl_mean"],
                kl_hard_std=h["mean_kl_std"],
                acc_t=acc_test.t,
                acc_p=acc_test.p,
                kl_t=kl_test.t,
                kl_p=kl_test.p,
                corr_soft_mean=s["entropy_correlation_mean"],
                corr_hard_mean=h["entropy_correlation_mean"],
                corr_pct_delta=_pct_delta(
                    s["entropy_correlation_mean"], h["entropy_correlation_mean"]
                ),
                kl_pct_improvement=_pct_delta(h["mean_kl_mean"], s["mean_kl_mean"])
                if s["mean_kl_mean"] != 0
                else math.nan,
                significant=significant,
            )
        )
    return ComparisonReport(rows=rows, alpha=alpha)


def write_grid_ledger_csv(path, result: GridSearchResult) -> None:
    """One CSV row per evaluated grid config."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "label_mode",
                "learning_rate",
                "batch_size",
                "max_epochs",
                "weight_decay",
                "scheduler",
                "best_val_loss",
                "selected",
            ]
        )
        for e in result.entries:
            cfg = e.config
            writer.writerow(
                [
                    cfg.label_mode,
                    cfg.learning_rate,
                    cfg.batch_size,
                    cfg.max_epochs,
                    cfg.weight_decay,
                    cfg.scheduler,
                    f"{e.best_val_loss:.12g}",
                    int(e.selected),
                ]
            )


def write_seed_metrics_csv(path, sweeps: dict) -> None:
    """Per-seed raw metrics, long format."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "mode", "seed", "accuracy", "mean_kl", "entropy_correlation"])
        for name in sorted(sweeps):
            for mode in ("soft", "hard"):
                sweep = sweeps[name][mode]
                for i, seed in enumerate(sweep.seeds):
                    writer.writerow(
                        [
                            name,
                            mode,
                            seed,
                            f"{sweep.accuracy[i]:.12g}",
                            f"{sweep.mean_kl[i]:.12g}",
                            f"{sweep.entropy_correlation[i]:.12g}",
                        ]
                    )


def write_report_json(path, report: ComparisonReport) -> None:
    Path(path).write_text(json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8")


def run_comparison(
    dataset: Dataset,
    splits: SplitIndices,
    space: GridSpace,
    n_seeds: int = 10,
    base: TrainConfig | None = None,
    search_seed: int = 0,
    base_seed: int = 0,
    jobs: int = 1,
):
    """Full soft-vs-hard protocol on one dataset.

    Returns ``(report, details)`` where details carries the per-mode grid
    results, sweeps and per-seed TrainResults for downstream exports.
    """
    details = {}
    sweeps = {}
    for mode in ("soft", "hard"):
        gs = grid_search(
            dataset, splits, space, mode, base=base, search_seed=search_seed, jobs=jobs
        )
        sweep, results = multi_seed_run(
            dataset, splits, gs.best_config, n_seeds, base_seed=base_seed, jobs=jobs,
            return_results=True,
        )
        details[mode] = {"grid": gs, "sweep": sweep, "results": results}
        sweeps[mode] = sweep
    report = build_report({dataset.name: sweeps})
    return report, details
