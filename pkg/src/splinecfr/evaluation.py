"""Error metrics, agreement statistics, and cross-method comparison tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Aligned true/predicted values for one method on one run."""

    method_name: str
    y_true: np.ndarray
    y_pred: np.ndarray
    run_id: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.y_true.ndim != 1 or self.y_pred.ndim != 1:
            raise ValueError("y_true and y_pred must be 1-D")
        if self.y_true.shape != self.y_pred.shape:
            raise ValueError(
                f"y_true has {self.y_true.shape[0]} entries, y_pred has {self.y_pred.shape[0]}"
            )
        if self.y_true.shape[0] == 0:
            raise ValueError("empty prediction set")
        if not np.isfinite(self.y_true).all() or not np.isfinite(self.y_pred).all():
            raise ValueError(f"{self.method_name}: non-finite values in prediction set")


@dataclass(frozen=True)
class RunReport:
    """Per-run record for one method. The P/N fields and the count of
    predictions beyond the training maximum are only filled for
    out-of-domain runs."""

    method_name: str
    run_id: int
    seed: int
    rmse: float
    mean_relative_error: float
    fit_seconds: float
    p_count: int | None = None
    n_count: int | None = None
    beyond_training_max: int | None = None
    threshold: float | None = None


@dataclass(frozen=True)
class MethodSummary:
    method_name: str
    median_rmse: float
    std_rmse: float
    run_count: int


@dataclass(frozen=True, eq=False)
class TopKTable:
    """The k samples a method is most confident are large, plus summaries."""

    method_name: str
    row_indices: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    mean_true: float
    mean_pred: float
    mean_relative_error: float
    rmse: float


def _paired(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(y_true, dtype=float)
    p = np.asarray(y_pred, dtype=float)
    if t.ndim != 1 or p.ndim != 1 or t.shape != p.shape:
        raise ValueError(f"expected equal-length 1-D vectors, got {t.shape} and {p.shape}")
    if t.shape[0] == 0:
        raise ValueError("empty vectors")
    return t, p


def rmse(y_true, y_pred) -> float:
    t, p = _paired(y_true, y_pred)
    return float(np.sqrt(np.mean((t - p) ** 2)))


def mean_relative_error(y_true, y_pred) -> float:
    """Mean of |true - pred| / |true|; zero true values are rejected."""
    t, p = _paired(y_true, y_pred)
    zeros = np.flatnonzero(t == 0.0)
    if zeros.size:
        raise ValueError(
            f"mean relative error undefined: y_true is zero at index {int(zeros[0])}"
        )
    return float(np.mean(np.abs(t - p) / np.abs(t)))


def threshold_counts(y_pred, threshold: float) -> tuple[int, int]:
    """(count >= threshold, count below); the boundary counts as positive."""
    p = np.asarray(y_pred, dtype=float)
    if p.ndim != 1 or p.shape[0] == 0:
        raise ValueError("y_pred must be a non-empty 1-D vector")
    pos = int(np.count_nonzero(p >= threshold))
    return pos, p.shape[0] - pos


def count_beyond_training_max(y_pred, training_target_max: float) -> int:
    """How many predictions exceed (strictly) the largest training target."""
    p = np.asarray(y_pred, dtype=float)
    if p.ndim != 1:
        raise ValueError("y_pred must be 1-D")
    return int(np.count_nonzero(p > training_target_max))


def cohen_kappa(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two label vectors.

    kappa = (p_o - p_e) / (1 - p_e) with p_o the observed agreement rate and
    p_e the agreement expected from the two marginal label distributions.
    When both raters assign one identical label throughout (p_e = 1) the
    agreement is perfect by construction and kappa is defined as 1.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"expected equal-length 1-D label vectors, got {a.shape} and {b.shape}")
    if a.shape[0] == 0:
        raise ValueError("empty label vectors")
    p_o = float(np.mean(a == b))
    labels = np.unique(np.concatenate([a, b]))
    p_e = float(sum(np.mean(a == lab) * np.mean(b == lab) for lab in labels))
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def kappa_agreement_label(kappa: float) -> str:
    """Conventional verbal band for a kappa value."""
    if kappa < 0.0:
        return "none"
    if kappa <= 0.20:
        return "none-to-slight"
    if kappa <= 0.40:
        return "fair"
    if kappa <= 0.60:
        return "moderate"
    if kappa <= 0.80:
        return "substantial"
    return "almost-perfect"


def top_k_table(predictions: PredictionSet, k: int = 20) -> TopKTable:
    """The k samples with the largest predicted values, plus subset metrics.

    Sorted by predicted value, descending; ties resolve toward the lower
    sample index.
    """
    n = predictions.y_pred.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    order = np.argsort(-predictions.y_pred, kind="stable")[:k]
    t = predictions.y_true[order]
    p = predictions.y_pred[order]
    return TopKTable(
        method_name=predictions.method_name,
        row_indices=order,
        y_true=t,
        y_pred=p,
        mean_true=float(t.mean()),
        mean_pred=float(p.mean()),
        mean_relative_error=mean_relative_error(t, p),
        rmse=rmse(t, p),
    )


def _grouped_rmse(reports: Sequence[RunReport]) -> dict[str, dict[int, float]]:
    """method -> run_id -> rmse, preserving first-appearance method order."""
    if not reports:
        raise ValueError("no run reports")
    by_method: dict[str, dict[int, float]] = {}
    for rep in reports:
        runs = by_method.setdefault(rep.method_name, {})
        if rep.run_id in runs:
            raise ValueError(f"duplicate report for method {rep.method_name!r} run {rep.run_id}")
        runs[rep.run_id] = rep.rmse
    return by_method


def aggregate(reports: Sequence[RunReport]) -> list[MethodSummary]:
    """Median and population standard deviation of RMSE per method."""
    by_method = _grouped_rmse(reports)
    counts = {len(runs) for runs in by_method.values()}
    if len(counts) > 1:
        raise ValueError(f"methods have mismatched run counts: { {m: len(r) for m, r in by_method.items()} }")
    out = []
    for method, runs in by_method.items():
        vals = np.array(list(runs.values()))
        out.append(
            MethodSummary(
                method_name=method,
                median_rmse=float(np.median(vals)),
                std_rmse=float(np.std(vals)),
                run_count=vals.size,
            )
        )
    return out


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Rank 1 = smallest; tied values share the average of their ranks."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0])
    i = 0
    sorted_vals = values[order]
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def rank_matrix(reports: Sequence[RunReport]) -> tuple[list[str], list[int], np.ndarray]:
    """Per-run RMSE ranks across methods.

    Returns (method names, run ids, matrix); matrix[i, j] is the rank of
    method j in run i, rank 1 being the lowest RMSE. Every method must
    report the same runs. Each row sums to M(M+1)/2 for M methods.
    """
    by_method = _grouped_rmse(reports)
    methods = list(by_method)
    run_ids = sorted(by_method[methods[0]])
    for method, runs in by_method.items():
        if sorted(runs) != run_ids:
            raise ValueError(f"method {method!r} reports different runs than {methods[0]!r}")
    matrix = np.empty((len(run_ids), len(methods)))
    for i, rid in enumerate(run_ids):
        row = np.array([by_method[m][rid] for m in methods])
        matrix[i] = _average_ranks(row)
    return methods, run_ids, matrix
