"""CSV ingestion, split protocols, normalization, and synthetic generators.

All randomness flows through ``numpy.random.default_rng`` (the PCG64
generator) seeded explicitly, so every split and every synthetic dataset is
reproducible from its seed alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class Dataset:
    """A fully numeric table: feature matrix, target vector, column names."""

    features: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...]
    target_name: str

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got ndim={self.features.ndim}")
        if self.target.ndim != 1:
            raise ValueError(f"target must be 1-D, got ndim={self.target.ndim}")
        if self.features.shape[0] != self.target.shape[0]:
            raise ValueError(
                f"features have {self.features.shape[0]} rows, target has {self.target.shape[0]}"
            )
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError(
                f"{len(self.feature_names)} feature names for {self.features.shape[1]} columns"
            )
        if not np.isfinite(self.features).all() or not np.isfinite(self.target).all():
            raise ValueError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        return replace(self, features=self.features[indices], target=self.target[indices])


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: Dataset
    test: Dataset
    protocol: str
    seed: int
    threshold: float | None = None


def read_numeric_table(path: str) -> tuple[list[str], np.ndarray]:
    """Read a CSV with a header row into column names and a float matrix.

    Every cell must parse as a finite number; failures are reported with the
    line number and column name.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file, expected a header row")
        names = [h.strip() for h in header]
        if len(set(names)) != len(names):
            raise DataError(f"{path}: duplicate column names in header")
        rows: list[tuple[int, list[str]]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue  # tolerate trailing blank lines
            if len(row) != len(names):
                raise DataError(
                    f"{path} line {lineno}: expected {len(names)} cells, got {len(row)}"
                )
            rows.append((lineno, row))
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.empty((len(rows), len(names)))
    for i, (lineno, row) in enumerate(rows):
        try:
            data[i] = [float(cell) for cell in row]
        except ValueError:
            for j, cell in enumerate(row):
                try:
                    float(cell)
                except ValueError:
                    what = "empty cell" if not cell.strip() else f"non-numeric value {cell!r}"
                    raise DataError(
                        f"{path} line {lineno}, column {names[j]!r}: {what}"
                    ) from None
            raise
    if not np.isfinite(data).all():
        i, j = np.argwhere(~np.isfinite(data))[0]
        raise DataError(
            f"{path} line {rows[i][0]}, column {names[j]!r}: non-finite value"
        )
    return names, data


def load_csv(path: str, target_column: str = "critical_temp") -> Dataset:
    """Load a numeric CSV, splitting off ``target_column`` as the target."""
    names, data = read_numeric_table(path)
    if target_column not in names:
        raise DataError(f"{path}: no column named {target_column!r}")
    t = names.index(target_column)
    feature_names = tuple(nm for i, nm in enumerate(names) if i != t)
    feature_cols = [i for i in range(len(names)) if i != t]
    if not feature_cols:
        raise DataError(f"{path}: no feature columns besides the target")
    return Dataset(
        features=data[:, feature_cols],
        target=data[:, t],
        feature_names=feature_names,
        target_name=target_column,
    )


def split_out_of_sample(ds: Dataset, seed: int) -> SplitPair:
    """Shuffle by seed; first two thirds train, the rest test."""
    if ds.n < 3:
        raise ValueError(f"need at least 3 rows to split, got {ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    cut = (2 * ds.n) // 3
    return SplitPair(
        train=ds.take(perm[:cut]),
        test=ds.take(perm[cut:]),
        protocol="out_of_sample",
        seed=seed,
    )


def split_out_of_domain(
    ds: Dataset, quantile: float = 0.9, seed: int = 0, subsample: float = 0.5
) -> SplitPair:
    """Train on low targets, test strictly above them.

    Rows are sorted by target (stable, so ties keep their original order);
    the top ``1 - quantile`` share becomes the test pool and everything
    below it the train pool. Rows tied with the train pool's maximum join
    the train pool so that every test target is strictly above every train
    target. A seed-determined ``subsample`` share of each pool is returned;
    the threshold is the smallest test-pool target.
    """
    if not 0.0 < quantile < 1.0:
        raise ValueError(f"quantile must be inside (0, 1), got {quantile}")
    if not 0.0 < subsample <= 1.0:
        raise ValueError(f"subsample must be inside (0, 1], got {subsample}")
    if np.unique(ds.target).size < 2:
        raise ValueError("target is constant; an out-of-domain split needs distinct values")
    order = np.argsort(ds.target, kind="stable")
    sorted_targets = ds.target[order]
    test_size = int(math.floor((1.0 - quantile) * ds.n + 1e-9))
    cut = ds.n - test_size
    if cut < 1 or test_size < 1:
        raise ValueError(
            f"quantile {quantile} leaves an empty pool for {ds.n} rows"
        )
    # Absorb boundary ties into the train pool: the test pool must sit
    # strictly above every train target.
    boundary = sorted_targets[cut - 1]
    cut = int(np.searchsorted(sorted_targets, boundary, side="right"))
    if cut >= ds.n:
        raise ValueError("no targets strictly above the out-of-domain boundary")
    train_pool = order[:cut]
    test_pool = order[cut:]
    threshold = float(sorted_targets[cut])
    rng = np.random.default_rng(seed)
    n_train = max(1, int(math.floor(len(train_pool) * subsample + 1e-9)))
    n_test = max(1, int(math.floor(len(test_pool) * subsample + 1e-9)))
    train_idx = rng.permutation(train_pool)[:n_train]
    test_idx = rng.permutation(test_pool)[:n_test]
    return SplitPair(
        train=ds.take(train_idx),
        test=ds.take(test_idx),
        protocol="out_of_domain",
        seed=seed,
        threshold=threshold,
    )


def minmax_fit(train: Dataset) -> np.ndarray:
    """Per-feature (min, max) from the training rows, as an (m, 2) array."""
    return np.column_stack([train.features.min(axis=0), train.features.max(axis=0)])


def minmax_apply(params: np.ndarray, ds: Dataset) -> Dataset:
    """Map features through (x - min) / (max - min) without clamping.

    Columns that were constant in training map to zero everywhere. Test
    values outside the training range land outside [0, 1]; that is the
    point of the transform, not an error.
    """
    params = np.asarray(params, dtype=float)
    if params.ndim != 2 or params.shape != (ds.m, 2):
        raise ValueError(f"expected parameter shape {(ds.m, 2)}, got {params.shape}")
    mins = params[:, 0]
    span = params[:, 1] - mins
    ok = span > 0
    scaled = np.where(ok, (ds.features - mins) / np.where(ok, span, 1.0), 0.0)
    return replace(ds, features=scaled)


def _validated_range(x_range: Sequence[float]) -> tuple[float, float]:
    lo, hi = float(x_range[0]), float(x_range[1])
    if not lo < hi:
        raise ValueError(f"x_range must satisfy lo < hi, got ({lo}, {hi})")
    return lo, hi


def _grid_dataset(x: np.ndarray, clean: np.ndarray, noise_sd: float, seed: int) -> Dataset:
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be non-negative, got {noise_sd}")
    noise = np.random.default_rng(seed).normal(0.0, noise_sd, x.shape[0]) if noise_sd > 0 else 0.0
    y = clean + noise
    return Dataset(
        features=x[:, None], target=y, feature_names=("x",), target_name="y"
    )


def gen_gamma(
    n: int, x_range: Sequence[float] = (0.5, 6.0), noise_sd: float = 1.0, seed: int = 0
) -> Dataset:
    """Gamma function on a uniform grid plus Gaussian noise.

    The gamma function has poles at zero and the negative integers; a range
    containing one is rejected.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    lo, hi = _validated_range(x_range)
    if lo <= 0:
        pole = min(0, math.floor(hi))
        if lo <= pole <= hi:
            raise ValueError(
                f"x_range ({lo}, {hi}) contains a pole of the gamma function at {pole}"
            )
    x = np.linspace(lo, hi, n)
    try:
        clean = np.array([math.gamma(v) for v in x])
    except (ValueError, OverflowError) as exc:
        raise ValueError(f"gamma function not finite on ({lo}, {hi}): {exc}") from exc
    return _grid_dataset(x, clean, noise_sd, seed)


def gen_sinc(
    n: int, x_range: Sequence[float] = (-10.0, 10.0), noise_sd: float = 0.1, seed: int = 0
) -> Dataset:
    """sin(x)/x on a uniform grid plus Gaussian noise; value 1 at x = 0."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    lo, hi = _validated_range(x_range)
    x = np.linspace(lo, hi, n)
    clean = np.ones(n)
    nz = x != 0.0
    clean[nz] = np.sin(x[nz]) / x[nz]
    return _grid_dataset(x, clean, noise_sd, seed)
