"""Histogram gradient-boosted trees with logistic loss and RCE early stopping.

One binary model per engagement class. Features are pre-binned into quantile
histograms computed once on the training set; trees grow level-wise with the
second-order gain, leaf values are clamped, and row subsampling is either
uniform or gradient-based (Bernoulli inclusion with probability proportional
to sqrt(g^2 + lambda h^2), rescaled to the configured expected fraction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Sequence

import numpy as np

from ctrboost.features import FEATURE_VERSION
from ctrboost.metrics import MetricError, rce

#: Bin sentinel routing a missing value through the stored default direction.
MISSING_BIN = np.uint16(0xFFFF)


class SamplingMethod(Enum):
    UNIFORM = "uniform"
    GRADIENT_BASED = "gradient_based"


@dataclass(frozen=True)
class TrainParams:
    """Boosting knobs; defaults follow the reference training regime."""

    eta: float = 0.09
    max_depth: int = 5
    rounds: int = 200
    early_stopping_rounds: int = 10
    subsample: float = 0.2
    sampling: SamplingMethod = SamplingMethod.GRADIENT_BASED
    max_delta_step: float = 5.0
    reg_lambda: float = 1.0
    bins: int = 256
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must be in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")


def logistic_grad_hess(margin, label):
    """Gradient and hessian of the logistic loss at a raw margin."""
    p = _sigmoid(np.asarray(margin, dtype=np.float64))
    y = np.asarray(label, dtype=np.float64)
    grad = p - y
    hess = p * (1.0 - p)
    if np.isscalar(margin) or np.ndim(margin) == 0:
        return float(grad), float(hess)
    return grad, hess


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def compute_bin_edges(features: np.ndarray, bins: int) -> list[np.ndarray]:
    """Per-feature interior quantile edges (at most bins - 1 each)."""
    quantiles = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    edges = []
    for f in range(features.shape[1]):
        edges.append(np.unique(np.quantile(features[:, f], quantiles)))
    return edges


def bin_features(features: np.ndarray, edges: Sequence[np.ndarray]) -> np.ndarray:
    """Map raw values to bin indices; bin(x) counts edges <= x, NaN is MISSING."""
    n, f = features.shape
    binned = np.empty((n, f), dtype=np.uint16)
    for j in range(f):
        col = features[:, j]
        binned[:, j] = np.searchsorted(edges[j], col, side="right")
        nan_mask = np.isnan(col)
        if nan_mask.any():
            binned[nan_mask, j] = MISSING_BIN
    return binned


@dataclass
class Tree:
    """Flat-array binary tree; leaves are marked by feature == -1.

    Split semantics: bin(x) <= split_bin goes left, i.e. x < threshold_value.
    Leaf values are the raw clamped Newton steps; the boosting step size is
    applied by the caller.
    """

    feature: np.ndarray
    split_bin: np.ndarray
    threshold_value: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray

    def n_nodes(self) -> int:
        return self.feature.size

    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature < 0]

    def predict_binned(self, binned: np.ndarray) -> np.ndarray:
        node = np.zeros(binned.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            rows = np.nonzero(active)[0]
            node_a = node[rows]
            bins = binned[rows, feat[rows]]
            missing = bins == MISSING_BIN
            go_left = bins <= self.split_bin[node_a]
            go_left = np.where(missing, self.default_left[node_a], go_left)
            node[rows] = np.where(go_left, self.left[node_a], self.right[node_a])
        return self.value[node]

    def to_doc(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "split_bin": self.split_bin.tolist(),
            "threshold_value": self.threshold_value.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "default_left": self.default_left.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Tree":
        return cls(
            feature=np.array(doc["feature"], dtype=np.int64),
            split_bin=np.array(doc["split_bin"], dtype=np.int64),
            threshold_value=np.array(doc["threshold_value"], dtype=np.float64),
            left=np.array(doc["left"], dtype=np.int64),
            right=np.array(doc["right"], dtype=np.int64),
            default_left=np.array(doc["default_left"], dtype=bool),
            value=np.array(doc["value"], dtype=np.float64),
        )


class _TreeBuilder:
    def __init__(self):
        self.feature: list[int] = []
        self.split_bin: list[int] = []
        self.threshold_value: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.default_left: list[bool] = []
        self.value: list[float] = []

    def add_node(self) -> int:
        for attr in ("feature", "split_bin", "left", "right"):
            getattr(self, attr).append(-1)
        self.threshold_value.append(0.0)
        self.default_left.append(True)
        self.value.append(0.0)
        return len(self.feature) - 1

    def finish(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.int64),
            split_bin=np.array(self.split_bin, dtype=np.int64),
            threshold_value=np.array(self.threshold_value, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            default_left=np.array(self.default_left, dtype=bool),
            value=np.array(self.value, dtype=np.float64),
        )


def fit_tree(
    binned: np.ndarray,
    gradients: np.ndarray,
    hessians: np.ndarray,
    rows: np.ndarray,
    edges: Sequence[np.ndarray],
    params: TrainParams,
) -> Tree:
    """Greedy level-wise growth on pre-binned features over the sampled rows.

    Gain ties break toward the lowest feature index, then the lowest bin;
    a node stays a leaf when the best gain is <= 0 or a child would fall
    under min_child_weight. Leaf values clamp at +-max_delta_step.
    """
    rows = np.asarray(rows)
    if rows.size == 0:
        raise ValueError("empty sampled row set")
    n_features = binned.shape[1]
    lam = params.reg_lambda
    builder = _TreeBuilder()
    root = builder.add_node()
    frontier: list[tuple[int, np.ndarray, int]] = [(root, rows, 0)]

    def make_leaf(node: int, g_sum: float, h_sum: float) -> None:
        raw = -g_sum / (h_sum + lam)
        builder.value[node] = float(
            np.clip(raw, -params.max_delta_step, params.max_delta_step)
        )

    while frontier:
        node, node_rows, depth = frontier.pop(0)
        g_node = gradients[node_rows]
        h_node = hessians[node_rows]
        g_sum = float(g_node.sum())
        h_sum = float(h_node.sum())
        if depth >= params.max_depth:
            make_leaf(node, g_sum, h_sum)
            continue

        sub = binned[node_rows]
        best = None  # (gain, feature, bin)
        parent_score = g_sum * g_sum / (h_sum + lam)
        for f in range(n_features):
            n_edges = edges[f].size
            if n_edges == 0:
                continue
            bins_f = sub[:, f].astype(np.int64)
            hist_g = np.bincount(bins_f, weights=g_node, minlength=n_edges + 1)
            hist_h = np.bincount(bins_f, weights=h_node, minlength=n_edges + 1)
            gl = np.cumsum(hist_g[:n_edges])
            hl = np.cumsum(hist_h[:n_edges])
            gr = g_sum - gl
            hr = h_sum - hl
            with np.errstate(invalid="ignore"):
                gain = 0.5 * (
                    gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_score
                )
            valid = (hl >= params.min_child_weight) & (hr >= params.min_child_weight)
            gain = np.where(valid, gain, -np.inf)
            b = int(np.argmax(gain))
            if np.isfinite(gain[b]) and (best is None or gain[b] > best[0]):
                best = (float(gain[b]), f, b)

        if best is None or best[0] <= 0.0:
            make_leaf(node, g_sum, h_sum)
            continue

        _, f, b = best
        bins_f = sub[:, f]
        go_left = bins_f <= b
        left_rows = node_rows[go_left]
        right_rows = node_rows[~go_left]
        hl_sum = float(h_node[go_left].sum())
        hr_sum = h_sum - hl_sum

        left_id = builder.add_node()
        right_id = builder.add_node()
        builder.feature[node] = f
        builder.split_bin[node] = b
        builder.threshold_value[node] = float(edges[f][b])
        builder.left[node] = left_id
        builder.right[node] = right_id
        builder.default_left[node] = hl_sum >= hr_sum
        frontier.append((left_id, left_rows, depth + 1))
        frontier.append((right_id, right_rows, depth + 1))

    return builder.finish()


@dataclass
class GbdtModel:
    """Trained per-class ensemble plus its training trace and bin edges."""

    class_label: str
    params: TrainParams
    bin_edges: list[np.ndarray]
    trees: list[Tree]
    best_iteration: int
    rce_trace: list[float]
    feature_version: str = FEATURE_VERSION
    base_margin: float = 0.0

    def to_json(self) -> str:
        doc = {
            "format_version": 1,
            "class_label": self.class_label,
            "params": {
                **{
                    k: v
                    for k, v in asdict(self.params).items()
                    if k != "sampling"
                },
                "sampling": self.params.sampling.value,
            },
            "base_margin": self.base_margin,
            "bin_edges": [e.tolist() for e in self.bin_edges],
            "trees": [t.to_doc() for t in self.trees],
            "best_iteration": self.best_iteration,
            "rce_trace": self.rce_trace,
            "feature_version": self.feature_version,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        doc = json.loads(text)
        params_doc = dict(doc["params"])
        params_doc["sampling"] = SamplingMethod(params_doc["sampling"])
        return cls(
            class_label=doc["class_label"],
            params=TrainParams(**params_doc),
            bin_edges=[np.array(e, dtype=np.float64) for e in doc["bin_edges"]],
            trees=[Tree.from_doc(t) for t in doc["trees"]],
            best_iteration=int(doc["best_iteration"]),
            rce_trace=[float(v) for v in doc["rce_trace"]],
            feature_version=doc["feature_version"],
            base_margin=float(doc["base_margin"]),
        )


def _sample_rows(
    gradients: np.ndarray,
    hessians: np.ndarray,
    params: TrainParams,
    rng: np.random.Generator,
) -> np.ndarray:
    n = gradients.size
    if params.subsample >= 1.0 and params.sampling is SamplingMethod.UNIFORM:
        return np.arange(n)
    if params.sampling is SamplingMethod.UNIFORM:
        mask = rng.random(n) < params.subsample
    else:
        weight = np.sqrt(
            gradients * gradients + params.reg_lambda * hessians * hessians
        )
        total = weight.sum()
        if total <= 0.0:
            mask = rng.random(n) < params.subsample
        else:
            prob = np.minimum(weight * (params.subsample * n / total), 1.0)
            mask = rng.random(n) < prob
    rows = np.nonzero(mask)[0]
    if rows.size == 0:
        rows = np.arange(n)  # degenerate draw; keep the round well-defined
    return rows


def train(
    train_features: np.ndarray,
    train_labels: np.ndarray,
    valid_features: np.ndarray,
    valid_labels: np.ndarray,
    params: TrainParams = TrainParams(),
    class_label: str = "",
    feature_version: str = FEATURE_VERSION,
) -> GbdtModel:
    """Boost with per-round validation RCE and patience-based early stopping.

    Improvement means strictly beating the best validation RCE seen so far;
    best_iteration is the 1-based round maximizing the trace (0 = no trees,
    constant 0.5 prediction).
    """
    y_train = np.asarray(train_labels, dtype=np.float64)
    y_valid = np.asarray(valid_labels, dtype=bool)
    if y_valid.size == 0 or not (0 < int(y_valid.sum()) < y_valid.size):
        raise MetricError("degenerate validation labels: rce undefined")

    edges = compute_bin_edges(train_features, params.bins)
    binned_train = bin_features(train_features, edges)
    binned_valid = bin_features(valid_features, edges)
    rng = np.random.default_rng(params.seed)

    margins_train = np.zeros(y_train.size)
    margins_valid = np.zeros(y_valid.size)
    trees: list[Tree] = []
    trace: list[float] = []
    best_rce = -np.inf
    stale_rounds = 0

    for _ in range(params.rounds):
        grad, hess = logistic_grad_hess(margins_train, y_train)
        rows = _sample_rows(grad, hess, params, rng)
        tree = fit_tree(binned_train, grad, hess, rows, edges, params)
        trees.append(tree)
        margins_train += params.eta * tree.predict_binned(binned_train)
        margins_valid += params.eta * tree.predict_binned(binned_valid)
        round_rce = rce(_sigmoid(margins_valid), y_valid)
        trace.append(round_rce)
        if round_rce > best_rce:
            best_rce = round_rce
            stale_rounds = 0
        else:
            stale_rounds += 1
            if stale_rounds >= params.early_stopping_rounds:
                break

    best_iteration = int(np.argmax(trace)) + 1 if trace else 0
    return GbdtModel(
        class_label=class_label,
        params=params,
        bin_edges=edges,
        trees=trees,
        best_iteration=best_iteration,
        rce_trace=trace,
        feature_version=feature_version,
    )


def predict(
    model: GbdtModel,
    features: np.ndarray,
    feature_version: str | None = None,
) -> np.ndarray:
    """Probabilities from the ensemble truncated at best_iteration."""
    if feature_version is not None and feature_version != model.feature_version:
        raise ValueError(
            f"feature version mismatch: {feature_version} != {model.feature_version}"
        )
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != len(model.bin_edges):
        raise ValueError(
            f"expected {len(model.bin_edges)} features, got {features.shape[1]}"
        )
    binned = bin_features(features, model.bin_edges)
    margins = np.full(features.shape[0], model.base_margin)
    for tree in model.trees[: model.best_iteration]:
        margins += model.params.eta * tree.predict_binned(binned)
    return _sigmoid(margins)
