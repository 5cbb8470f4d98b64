"""Multi-run benchmark harness: splits, fits, metrics, and report tables.

Each run draws its own split (seed = base_seed + run index), fits the
continued-fraction model and an ordinary least-squares baseline, and scores
both on the held-out rows. Externally produced predictions can join the
comparison through CSV files with columns run_id,row_id,y_true,y_pred; the
external splits must have been generated with the same protocol and seeds,
which is checked by comparing their y_true values against ours.

Everything written here is deterministic for a fixed config and seed except
``timings.csv``, which records wall-clock fit times and lives in its own
file precisely so the other outputs stay byte-for-byte reproducible.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cfr_core import CFracModel, FitConfig, fit
from .data_io import Dataset, SplitPair, load_csv, split_out_of_domain, split_out_of_sample
from .errors import DataError
from .evaluation import (
    MethodSummary,
    PredictionSet,
    RunReport,
    aggregate,
    cohen_kappa,
    count_beyond_training_max,
    kappa_agreement_label,
    mean_relative_error,
    rank_matrix,
    rmse,
    threshold_counts,
)
from .fileio import atomic_write_text, csv_text

SPLINE_METHOD = "spline_cfr"
BASELINE_METHOD = "ols"

# The baseline is the depth-0 special case of the same fitting routine:
# plain least squares on the raw features.
_BASELINE_CONFIG = FitConfig(lam=0.0, knots_per_depth=1, norm=1.0, max_depth=0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything cmd_bench needs to reproduce an experiment."""

    data: str
    target: str = "critical_temp"
    protocol: str = "oos"
    runs: int = 100
    base_seed: int = 0
    quantile: float = 0.9
    out_dir: str = "bench_out"
    fit: FitConfig = field(default_factory=FitConfig)
    predictions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.protocol not in ("oos", "ood"):
            raise ValueError(f"protocol must be 'oos' or 'ood', got {self.protocol!r}")
        if self.runs < 1:
            raise ValueError(f"runs must be at least 1, got {self.runs}")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError(f"quantile must be inside (0, 1), got {self.quantile}")


def load_prediction_file(path: str, method_name: str | None = None) -> dict[int, PredictionSet]:
    """Parse run_id,row_id,y_true,y_pred rows into per-run prediction sets.

    Rows within a run are ordered by row_id. The method name defaults to the
    file name without its extension.
    """
    name = method_name or Path(path).stem
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        expected = ["run_id", "row_id", "y_true", "y_pred"]
        if [h.strip() for h in header] != expected:
            raise DataError(f"{path}: expected header {','.join(expected)}")
        runs: dict[int, list[tuple[int, float, float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path} line {lineno}: expected 4 cells, got {len(row)}")
            try:
                rid = int(row[0])
                row_id = int(row[1])
                y_true = float(row[2])
                y_pred = float(row[3])
            except ValueError as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from exc
            runs.setdefault(rid, []).append((row_id, y_true, y_pred))
    if not runs:
        raise DataError(f"{path}: no data rows")
    out: dict[int, PredictionSet] = {}
    for rid, triples in runs.items():
        triples.sort(key=lambda t: t[0])
        out[rid] = PredictionSet(
            method_name=name,
            y_true=np.array([t[1] for t in triples]),
            y_pred=np.array([t[2] for t in triples]),
            run_id=rid,
        )
    return out


@dataclass(frozen=True, eq=False)
class BenchResult:
    reports: list[RunReport]
    summaries: list[MethodSummary]
    rank_methods: list[str]
    rank_run_ids: list[int]
    ranks: np.ndarray
    kappa_rows: list[tuple[str, str, float, str]]


def _split(ds: Dataset, cfg: ExperimentConfig, seed: int) -> SplitPair:
    if cfg.protocol == "oos":
        return split_out_of_sample(ds, seed)
    return split_out_of_domain(ds, quantile=cfg.quantile, seed=seed)


def _score(
    method: str,
    run_id: int,
    seed: int,
    y_true: np.ndarray,
    y_pred: np.ndarray,
    fit_seconds: float,
    split: SplitPair,
    training_target_max: float | None,
) -> RunReport:
    report = RunReport(
        method_name=method,
        run_id=run_id,
        seed=seed,
        rmse=rmse(y_true, y_pred),
        mean_relative_error=mean_relative_error(y_true, y_pred),
        fit_seconds=fit_seconds,
    )
    if split.protocol == "out_of_domain":
        p, n_neg = threshold_counts(y_pred, split.threshold)
        beyond = None
        if training_target_max is not None:
            beyond = count_beyond_training_max(y_pred, training_target_max)
        report = replace(
            report,
            p_count=p,
            n_count=n_neg,
            beyond_training_max=beyond,
            threshold=split.threshold,
        )
    return report


def run_benchmark(cfg: ExperimentConfig) -> BenchResult:
    ds = load_csv(cfg.data, cfg.target)
    external: dict[str, dict[int, PredictionSet]] = {}
    for path in cfg.predictions:
        sets = load_prediction_file(path)
        name = next(iter(sets.values())).method_name
        if name in external or name in (SPLINE_METHOD, BASELINE_METHOD):
            raise DataError(f"duplicate method name {name!r} among prediction files")
        external[name] = sets

    reports: list[RunReport] = []
    labels: dict[str, list[np.ndarray]] = {}
    for run_id in range(cfg.runs):
        seed = cfg.base_seed + run_id
        try:
            reports.extend(_one_run(cfg, ds, run_id, seed, external, labels))
        except DataError as exc:
            raise DataError(f"run {run_id} (seed {seed}): {exc}") from exc
        except Exception as exc:
            raise RuntimeError(f"run {run_id} (seed {seed}) failed: {exc}") from exc

    summaries = aggregate(reports)
    methods, run_ids, ranks = rank_matrix(reports)
    kappa_rows: list[tuple[str, str, float, str]] = []
    if cfg.protocol == "ood":
        pooled = {m: np.concatenate(chunks) for m, chunks in labels.items()}
        names = list(pooled)
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                k = cohen_kappa(pooled[names[i]], pooled[names[j]])
                kappa_rows.append((names[i], names[j], k, kappa_agreement_label(k)))
    return BenchResult(reports, summaries, methods, run_ids, ranks, kappa_rows)


def _one_run(
    cfg: ExperimentConfig,
    ds: Dataset,
    run_id: int,
    seed: int,
    external: dict[str, dict[int, PredictionSet]],
    labels: dict[str, list[np.ndarray]],
) -> list[RunReport]:
    split = _split(ds, cfg, seed)
    y_test = split.test.target
    out: list[RunReport] = []
    for method, fit_cfg in ((SPLINE_METHOD, cfg.fit), (BASELINE_METHOD, _BASELINE_CONFIG)):
        start = time.perf_counter()
        model = fit(split.train.features, split.train.target, fit_cfg, rng_seed=seed)
        seconds = time.perf_counter() - start
        pred = model.predict(split.test.features)
        out.append(
            _score(
                method, run_id, seed, y_test, pred, seconds, split, model.training_target_max
            )
        )
        if split.protocol == "out_of_domain":
            labels.setdefault(method, []).append(pred >= split.threshold)
    train_max = float(split.train.target.max())
    for name, sets in external.items():
        if run_id not in sets:
            raise DataError(f"prediction file for {name!r} has no rows for this run")
        pset = sets[run_id]
        if pset.y_true.shape[0] != y_test.shape[0] or not np.allclose(
            pset.y_true, y_test, atol=1e-8, rtol=0.0
        ):
            raise DataError(
                f"prediction file for {name!r} disagrees with the split's y_true; "
                "was it generated with the same protocol and seed?"
            )
        out.append(
            _score(name, run_id, seed, pset.y_true, pset.y_pred, 0.0, split, train_max)
        )
        if split.protocol == "out_of_domain":
            labels.setdefault(name, []).append(pset.y_pred >= split.threshold)
    return out


def write_bench_outputs(result: BenchResult, out_dir: str | Path, protocol: str) -> list[Path]:
    """Write the report tables; returns the written paths."""
    out_dir = Path(out_dir)
    written = []

    header = ["method", "run_id", "seed", "rmse", "mean_relative_error"]
    if protocol == "ood":
        header += ["p_count", "n_count", "beyond_training_max", "threshold"]
    rows = []
    for rep in result.reports:
        row = [rep.method_name, rep.run_id, rep.seed, rep.rmse, rep.mean_relative_error]
        if protocol == "ood":
            row += [rep.p_count, rep.n_count, rep.beyond_training_max, rep.threshold]
        rows.append(row)
    path = out_dir / "run_reports.csv"
    atomic_write_text(path, csv_text(header, rows))
    written.append(path)

    path = out_dir / "aggregate.csv"
    atomic_write_text(
        path,
        csv_text(
            ["method", "median_rmse", "std_rmse", "runs"],
            [
                (s.method_name, s.median_rmse, s.std_rmse, s.run_count)
                for s in result.summaries
            ],
        ),
    )
    written.append(path)

    path = out_dir / "rank_matrix.csv"
    atomic_write_text(
        path,
        csv_text(
            ["run_id", *result.rank_methods],
            [
                [rid, *result.ranks[i]]
                for i, rid in enumerate(result.rank_run_ids)
            ],
        ),
    )
    written.append(path)

    if protocol == "ood":
        path = out_dir / "kappa.csv"
        atomic_write_text(
            path,
            csv_text(["rater_1", "rater_2", "kappa", "agreement"], result.kappa_rows),
        )
        written.append(path)

    path = out_dir / "timings.csv"
    atomic_write_text(
        path,
        csv_text(
            ["method", "run_id", "fit_seconds"],
            [(r.method_name, r.run_id, r.fit_seconds) for r in result.reports],
        ),
    )
    written.append(path)
    return written
