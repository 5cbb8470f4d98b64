"""Continued-fraction regression with additive penalized-spline layers.

The model is a simple continued fraction

    f(x) = norm * ( g_0(x) - C_0 + 1 / ( g_1(x) - C_1 + 1 / ( ... + 1/g_d(x) )))

where g_0 is linear in the features and every deeper g_i is an additive
cubic-spline model. Layers are fit one depth at a time: after fitting g_i,
its residuals are shifted positive by an offset C_i and inverted to become
the next layer's training target. The deepest layer's offset is dropped at
evaluation time (see ``literal_final_offset`` to keep it).
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ModelFormatError
from .solver import least_squares, penalized_least_squares
from .spline_basis import (
    KNOT_DEDUP_TOL,
    KnotVector,
    build_knot_vector,
    design_matrix,
    penalty_block,
)

MODEL_FORMAT = "spline-cfr-model/1"


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters for :func:`fit`.

    lam: roughness penalty weight shared by all spline blocks.
    knots_per_depth: how many new knot sites each depth may add per variable.
    norm: the target is divided by this before fitting and predictions are
        scaled back up; keeps the inverted residual targets in a tame range.
    max_depth: number of spline layers stacked under the linear layer.
    auto_depth: when True, truncate the fitted model at the depth where
        training error first gets worse.
    offset_epsilon: slack added to each residual offset so inverted targets
        stay strictly positive and bounded by 1/offset_epsilon.
    denom_floor: denominators inside the fraction are pushed away from zero
        to this magnitude (sign preserved) during evaluation.
    literal_final_offset: subtract the deepest layer's offset as well, i.e.
        evaluate the fraction exactly as the fitting recursion wrote it.
    """

    lam: float = 0.5
    knots_per_depth: int = 5
    norm: float = 1000.0
    max_depth: int = 5
    auto_depth: bool = False
    offset_epsilon: float = 1e-3
    denom_floor: float = 1e-6
    literal_final_offset: bool = False

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.knots_per_depth < 1:
            raise ValueError(f"knots_per_depth must be at least 1, got {self.knots_per_depth}")
        if self.norm <= 0:
            raise ValueError(f"norm must be positive, got {self.norm}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be non-negative, got {self.max_depth}")
        if self.offset_epsilon <= 0:
            raise ValueError(f"offset_epsilon must be positive, got {self.offset_epsilon}")
        if self.denom_floor <= 0:
            raise ValueError(f"denom_floor must be positive, got {self.denom_floor}")


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Intercept-first linear model over all feature columns."""

    coefficients: np.ndarray

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return self.coefficients[0] + X @ self.coefficients[1:]


@dataclass(frozen=True, eq=False)
class AdditiveSplineModel:
    """Sum of one cubic-spline term per (non-constant) variable plus intercept.

    ``variable_ids`` are column indices into the full feature matrix;
    ``coefficients`` holds the intercept followed by one block per variable,
    block j having ``bases[j].basis_count`` entries.
    """

    variable_ids: tuple[int, ...]
    bases: tuple[KnotVector, ...]
    coefficients: np.ndarray

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        cols = np.asarray(X, dtype=float)[:, list(self.variable_ids)]
        return design_matrix(cols, self.bases) @ self.coefficients


@dataclass(frozen=True, eq=False)
class DepthLayer:
    model: LinearModel | AdditiveSplineModel
    offset: float


@dataclass(frozen=True, eq=False)
class CFracModel:
    """A fitted continued-fraction regressor.

    ``layers[0]`` is the linear layer; deeper entries are spline layers.
    ``feature_bounds`` records the training min/max of every feature column
    (constant columns included). ``feature_names``/``target_name`` are
    optional metadata used by the CLI to match CSV columns.
    """

    norm: float
    layers: tuple[DepthLayer, ...]
    feature_bounds: np.ndarray
    training_target_max: float
    denom_floor: float = 1e-6
    literal_final_offset: bool = False
    feature_names: tuple[str, ...] | None = None
    target_name: str | None = None

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def feature_count(self) -> int:
        return self.feature_bounds.shape[0]

    def layer_values(self, X: np.ndarray) -> list[np.ndarray]:
        """Evaluate every layer's additive model on X (before folding)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            raise ValueError(
                f"expected a 2-D matrix with {self.feature_count} feature columns, "
                f"got shape {X.shape}"
            )
        return [layer.model.evaluate(X) for layer in self.layers]

    def predict(self, X: np.ndarray) -> np.ndarray:
        values = self.layer_values(X)
        offsets = [layer.offset for layer in self.layers]
        return self.norm * _fold_fraction(
            values, offsets, self.denom_floor, self.literal_final_offset
        )

    def truncated(self, depth: int) -> "CFracModel":
        """The same model cut back to the given depth (0 = linear only)."""
        if not 0 <= depth <= self.depth:
            raise ValueError(f"depth must be in [0, {self.depth}], got {depth}")
        return replace(self, layers=self.layers[: depth + 1])


def _floor_denominator(den: np.ndarray, floor: float) -> np.ndarray:
    """Push |den| below ``floor`` out to +-floor; zero counts as positive."""
    small = np.abs(den) < floor
    if not small.any():
        return den
    sign = np.where(den < 0.0, -1.0, 1.0)
    return np.where(small, sign * floor, den)


def _fold_fraction(
    values: Sequence[np.ndarray],
    offsets: Sequence[float],
    denom_floor: float,
    literal_final_offset: bool,
) -> np.ndarray:
    """Collapse per-layer values into the continued fraction, deepest first."""
    acc = np.array(values[-1], dtype=float, copy=True)
    if literal_final_offset:
        acc -= offsets[-1]
    for g, c in zip(values[-2::-1], offsets[-2::-1]):
        acc = _floor_denominator(acc, denom_floor)
        acc = g - c + 1.0 / acc
    return acc


def select_knots(residuals, k: int) -> list[int]:
    """Pick up to ``k`` sample indices for new knots from a residual vector.

    Samples are visited in order of decreasing |residual| (ties resolved
    toward the lower index). The first is always taken; after that a sample
    is taken only when its residual sign differs from the previously taken
    one, zero counting as positive. The walk stops after k picks.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("residuals must be a non-empty 1-D vector")
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    order = np.argsort(-np.abs(r), kind="stable")
    picked: list[int] = []
    last_sign = 0
    for i in order:
        if len(picked) >= k:
            break
        sign = 1 if r[i] >= 0.0 else -1
        if sign != last_sign:
            picked.append(int(i))
            last_sign = sign
    return picked


def compute_offset(residuals, offset_epsilon: float) -> float:
    """|min residual| plus slack; added before inverting residuals."""
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("residuals must be a non-empty 1-D vector")
    if offset_epsilon <= 0:
        raise ValueError(f"offset_epsilon must be positive, got {offset_epsilon}")
    return abs(float(r.min())) + offset_epsilon


def _insert_knot(knots: list[float], value: float, lo: float, hi: float) -> None:
    """Insert a knot position, skipping boundary hits and near-duplicates."""
    if value - lo <= KNOT_DEDUP_TOL or hi - value <= KNOT_DEDUP_TOL:
        return
    i = bisect.bisect_left(knots, value)
    if i > 0 and value - knots[i - 1] <= KNOT_DEDUP_TOL:
        return
    if i < len(knots) and knots[i] - value <= KNOT_DEDUP_TOL:
        return
    knots.insert(i, value)


def fit(X, y, config: FitConfig | None = None, rng_seed: int = 0) -> CFracModel:
    """Fit a continued-fraction model, one layer per depth.

    The target is scaled by 1/norm, the linear layer is fit by least
    squares, and each further depth fits a penalized additive spline to the
    inverted, offset residuals of the previous layer. Knot sites accumulate
    across depths: every depth keeps all earlier knots and adds up to
    ``knots_per_depth`` new sites chosen from the residuals.

    ``rng_seed`` is accepted for interface symmetry with the split helpers;
    the fitting procedure itself is deterministic.
    """
    del rng_seed  # deterministic procedure; splits carry the randomness
    if config is None:
        config = FitConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got ndim={X.ndim}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(f"y must be 1-D with {X.shape[0]} entries, got shape {y.shape}")
    n, m = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 training rows, got {n}")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    if not np.isfinite(y).all():
        raise ValueError("y contains non-finite values")

    lo = X.min(axis=0)
    hi = X.max(axis=0)
    spline_vars = [j for j in range(m) if hi[j] - lo[j] > KNOT_DEDUP_TOL]

    y0 = y / config.norm
    design0 = np.hstack([np.ones((n, 1)), X])
    linear = LinearModel(least_squares(design0, y0))

    models: list[LinearModel | AdditiveSplineModel] = [linear]
    values = [linear.evaluate(X)]
    offsets: list[float] = []
    resid = y0 - values[0]
    knots: dict[int, list[float]] = {j: [] for j in spline_vars}

    for _depth in range(1, config.max_depth + 1):
        offset = compute_offset(resid, config.offset_epsilon)
        offsets.append(offset)
        target = 1.0 / (resid + offset)
        for p in select_knots(resid, config.knots_per_depth):
            for j in spline_vars:
                _insert_knot(knots[j], float(X[p, j]), lo[j], hi[j])
        bases = tuple(build_knot_vector(knots[j], lo[j], hi[j]) for j in spline_vars)
        design = design_matrix(X[:, spline_vars], bases)
        penalties = [penalty_block(kv.basis_count) for kv in bases]
        beta = penalized_least_squares(design, target, config.lam, penalties)
        layer = AdditiveSplineModel(tuple(spline_vars), bases, beta)
        models.append(layer)
        values.append(design @ beta)
        resid = target - values[-1]
    offsets.append(compute_offset(resid, config.offset_epsilon))

    layers = tuple(DepthLayer(mod, off) for mod, off in zip(models, offsets))
    model = CFracModel(
        norm=config.norm,
        layers=layers,
        feature_bounds=np.column_stack([lo, hi]),
        training_target_max=float(y.max()),
        denom_floor=config.denom_floor,
        literal_final_offset=config.literal_final_offset,
    )

    train_pred = config.norm * _fold_fraction(
        values, offsets, config.denom_floor, config.literal_final_offset
    )
    if not np.isfinite(train_pred).all():
        raise ArithmeticError("training predictions are not finite")

    if config.auto_depth:
        model = _truncate_at_first_worsening(model, values, y)
    return model


def _rmse_from_values(
    model: CFracModel, values: Sequence[np.ndarray], y: np.ndarray
) -> list[float]:
    """Training RMSE of each truncation depth, reusing layer evaluations."""
    offsets = [layer.offset for layer in model.layers]
    out = []
    for d in range(len(values)):
        pred = model.norm * _fold_fraction(
            values[: d + 1], offsets[: d + 1], model.denom_floor, model.literal_final_offset
        )
        out.append(float(np.sqrt(np.mean((y - pred) ** 2))))
    return out


def first_worsening_depth(rmses: Sequence[float]) -> int | None:
    """Smallest d with rmse[d+1] > rmse[d], or None if never worsening."""
    for d in range(len(rmses) - 1):
        if rmses[d + 1] > rmses[d]:
            return d
    return None


def _truncate_at_first_worsening(
    model: CFracModel, values: Sequence[np.ndarray], y: np.ndarray
) -> CFracModel:
    rmses = _rmse_from_values(model, values, y)
    stop = first_worsening_depth(rmses)
    return model if stop is None else model.truncated(stop)


def training_rmse_by_depth(model: CFracModel, X, y) -> list[float]:
    """RMSE of each truncation of ``model`` on (X, y), original target units."""
    y = np.asarray(y, dtype=float)
    return _rmse_from_values(model, model.layer_values(X), y)


def auto_depth_truncate(model: CFracModel, X, y) -> CFracModel:
    """Truncate at the depth where training RMSE first increases.

    Scans depth 0 upward and returns the truncation at the smallest depth d
    whose successor has strictly larger RMSE; the full model when RMSE never
    increases.
    """
    y = np.asarray(y, dtype=float)
    return _truncate_at_first_worsening(model, model.layer_values(X), y)


# ---------------------------------------------------------------------------
# Serialization. Plain JSON: Python renders doubles with shortest round-trip
# decimals, so coefficients survive a save/load cycle bit for bit.
# ---------------------------------------------------------------------------


def _layer_to_doc(layer: DepthLayer) -> dict:
    model = layer.model
    if isinstance(model, LinearModel):
        return {
            "kind": "linear",
            "offset": layer.offset,
            "coefficients": model.coefficients.tolist(),
        }
    return {
        "kind": "additive_spline",
        "offset": layer.offset,
        "coefficients": model.coefficients.tolist(),
        "variables": [
            {"id": vid, "lo": kv.lo, "hi": kv.hi, "interior": list(kv.interior)}
            for vid, kv in zip(model.variable_ids, model.bases)
        ],
    }


def serialize(model: CFracModel) -> str:
    """Render a model as a JSON document (see MODEL_FORMAT)."""
    doc = {
        "format": MODEL_FORMAT,
        "norm": model.norm,
        "denom_floor": model.denom_floor,
        "literal_final_offset": model.literal_final_offset,
        "training_target_max": model.training_target_max,
        "feature_bounds": model.feature_bounds.tolist(),
        "feature_names": list(model.feature_names) if model.feature_names else None,
        "target_name": model.target_name,
        "layers": [_layer_to_doc(layer) for layer in model.layers],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


class _DocReader:
    """Schema walker that names the offending field on failure."""

    def __init__(self, doc, path: str):
        self.doc = doc
        self.path = path

    def child(self, key: str) -> "_DocReader":
        if not isinstance(self.doc, dict):
            raise ModelFormatError(f"{self.path}: expected an object")
        if key not in self.doc:
            raise ModelFormatError(f"{self.path}: missing field {key!r}")
        return _DocReader(self.doc[key], f"{self.path}.{key}")

    def number(self) -> float:
        if not isinstance(self.doc, (int, float)) or isinstance(self.doc, bool):
            raise ModelFormatError(f"{self.path}: expected a number")
        return float(self.doc)

    def integer(self) -> int:
        if not isinstance(self.doc, int) or isinstance(self.doc, bool):
            raise ModelFormatError(f"{self.path}: expected an integer")
        return self.doc

    def boolean(self) -> bool:
        if not isinstance(self.doc, bool):
            raise ModelFormatError(f"{self.path}: expected a boolean")
        return self.doc

    def string(self) -> str:
        if not isinstance(self.doc, str):
            raise ModelFormatError(f"{self.path}: expected a string")
        return self.doc

    def array(self) -> list["_DocReader"]:
        if not isinstance(self.doc, list):
            raise ModelFormatError(f"{self.path}: expected an array")
        return [_DocReader(v, f"{self.path}[{i}]") for i, v in enumerate(self.doc)]

    def numbers(self) -> np.ndarray:
        return np.array([item.number() for item in self.array()], dtype=float)


def _layer_from_doc(reader: _DocReader) -> DepthLayer:
    kind = reader.child("kind").string()
    offset = reader.child("offset").number()
    coefficients = reader.child("coefficients").numbers()
    if kind == "linear":
        return DepthLayer(LinearModel(coefficients), offset)
    if kind == "additive_spline":
        ids = []
        bases = []
        for var in reader.child("variables").array():
            ids.append(var.child("id").integer())
            try:
                kv = build_knot_vector(
                    var.child("interior").numbers(),
                    var.child("lo").number(),
                    var.child("hi").number(),
                )
            except ValueError as exc:
                raise ModelFormatError(f"{var.path}: {exc}") from exc
            bases.append(kv)
        expected = 1 + sum(kv.basis_count for kv in bases)
        if coefficients.shape[0] != expected:
            raise ModelFormatError(
                f"{reader.path}.coefficients: expected {expected} entries, "
                f"got {coefficients.shape[0]}"
            )
        return DepthLayer(AdditiveSplineModel(tuple(ids), tuple(bases), coefficients), offset)
    raise ModelFormatError(f"{reader.path}.kind: unknown layer kind {kind!r}")


def deserialize(text: str) -> CFracModel:
    """Parse a model document; raises ModelFormatError naming the bad field."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"invalid model document: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from exc
    root = _DocReader(doc, "model")
    fmt = root.child("format").string()
    if fmt != MODEL_FORMAT:
        raise ModelFormatError(f"model.format: expected {MODEL_FORMAT!r}, got {fmt!r}")
    bounds_rows = root.child("feature_bounds").array()
    bounds = np.array([[v.number() for v in row.array()] for row in bounds_rows], dtype=float)
    if bounds.size and (bounds.ndim != 2 or bounds.shape[1] != 2):
        raise ModelFormatError("model.feature_bounds: expected rows of [lo, hi]")
    bounds = bounds.reshape(-1, 2)
    names_reader = root.child("feature_names")
    feature_names = (
        None
        if names_reader.doc is None
        else tuple(item.string() for item in names_reader.array())
    )
    target_reader = root.child("target_name")
    target_name = None if target_reader.doc is None else target_reader.string()
    layer_readers = root.child("layers").array()
    if not layer_readers:
        raise ModelFormatError("model.layers: expected at least one layer")
    layers = tuple(_layer_from_doc(r) for r in layer_readers)
    if not isinstance(layers[0].model, LinearModel):
        raise ModelFormatError("model.layers[0]: the first layer must be linear")
    return CFracModel(
        norm=root.child("norm").number(),
        layers=layers,
        feature_bounds=bounds,
        training_target_max=root.child("training_target_max").number(),
        denom_floor=root.child("denom_floor").number(),
        literal_final_offset=root.child("literal_final_offset").boolean(),
        feature_names=feature_names,
        target_name=target_name,
    )
