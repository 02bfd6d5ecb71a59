"""Deterministic random-forest classifier built on numpy.

CART-style trees with Gini impurity, bagging, and per-node feature
subsampling.  Every tie is broken toward the lowest index (feature,
threshold, class), all randomness comes from seed-derived PCG64
generators, and models serialize to a self-describing JSON format, so
training twice with the same inputs yields byte-identical models.

Prediction is by hard voting: each tree votes its leaf majority class
and the returned probabilities are vote fractions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import RNG_IDENTITY, derive_rng

FORMAT_NAME = "btmeta-forest"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    """Training configuration.

    ``features_per_split=None`` means floor(sqrt(available features)),
    with a minimum of 1.  ``max_depth=None`` grows trees until nodes are
    pure or unsplittable.
    """

    n_trees: int = 10
    max_depth: int | None = None
    features_per_split: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {self.max_depth}")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError(f"features_per_split must be >= 1 or None, got {self.features_per_split}")


@dataclass
class Tree:
    """Flat array representation of one decision tree.

    ``feature[i] == -1`` marks a leaf.  ``counts[i]`` holds the
    training-class histogram of node ``i`` (used for votes and for
    impurity-based importance).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray


@dataclass
class TrainedForest:
    config: ForestConfig
    classes: tuple[str, ...]
    n_features: int
    feature_mask: np.ndarray
    trees: list[Tree]


@dataclass(frozen=True)
class FeatureImportance:
    """Normalized mean impurity decrease per feature.

    ``degenerate`` is set when no split decreased impurity anywhere (for
    example on constant inputs), in which case ``values`` is all-zero.
    """

    values: np.ndarray
    degenerate: bool


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p * p).sum())


class _TreeBuilder:
    def __init__(self, X: np.ndarray, y: np.ndarray, n_classes: int, avail: np.ndarray, k: int, max_depth: int | None, rng: np.random.Generator):
        self.X = X
        self.y = y
        self.n_classes = n_classes
        self.avail = avail
        self.k = k
        self.max_depth = max_depth
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.counts: list[np.ndarray] = []

    def _new_node(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(counts)
        return len(self.feature) - 1

    def _split_feature(self, idx: np.ndarray, f: int) -> tuple[float, float] | None:
        """Best (weighted child impurity, threshold) for one feature, or None."""
        v = self.X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            return None
        ys = self.y[idx][order]
        m = len(idx)
        onehot = np.zeros((m, self.n_classes))
        onehot[np.arange(m), ys] = 1.0
        cum = np.cumsum(onehot, axis=0)
        nl = np.arange(1, m, dtype=np.float64)
        nr = m - nl
        lc = cum[:-1]
        rc = cum[-1] - lc
        gl = 1.0 - ((lc / nl[:, None]) ** 2).sum(axis=1)
        gr = 1.0 - ((rc / nr[:, None]) ** 2).sum(axis=1)
        w = (nl * gl + nr * gr) / m
        w[vs[:-1] == vs[1:]] = np.inf
        i = int(np.argmin(w))
        if not math.isfinite(w[i]):
            return None
        lo, hi = vs[i], vs[i + 1]
        thr = (lo + hi) / 2.0
        if thr >= hi:  # midpoint rounded up to the right value; fall back to the left one
            thr = lo
        return float(w[i]), float(thr)

    def _find_split(self, idx: np.ndarray) -> tuple[int, float] | None:
        cand = np.sort(self.rng.choice(self.avail, size=self.k, replace=False))
        best: tuple[float, int, float] | None = None
        for f in cand:
            res = self._split_feature(idx, int(f))
            if res is None:
                continue
            w, thr = res
            if best is None or w < best[0]:
                best = (w, int(f), thr)
        if best is not None:
            return best[1], best[2]
        # Sampled features were all constant here; scan the remaining ones
        # in index order so a consistent training set still fits exactly.
        cand_set = set(int(f) for f in cand)
        for f in self.avail:
            if int(f) in cand_set:
                continue
            res = self._split_feature(idx, int(f))
            if res is not None:
                return int(f), res[1]
        return None

    def build(self, root_idx: np.ndarray) -> Tree:
        # Explicit stack (left child first) keeps node ids deterministic
        # and avoids recursion limits on degenerate splits.
        stack: list[tuple[np.ndarray, int, int, bool]] = [(root_idx, 0, -1, False)]
        while stack:
            idx, depth, parent, is_left = stack.pop()
            counts = np.bincount(self.y[idx], minlength=self.n_classes).astype(np.float64)
            node = self._new_node(counts)
            if parent >= 0:
                if is_left:
                    self.left[parent] = node
                else:
                    self.right[parent] = node
            pure = int((counts > 0).sum()) <= 1
            at_depth = self.max_depth is not None and depth >= self.max_depth
            if pure or at_depth or len(idx) < 2:
                continue
            found = self._find_split(idx)
            if found is None:
                continue
            f, thr = found
            self.feature[node] = f
            self.threshold[node] = thr
            go_left = self.X[idx, f] <= thr
            stack.append((idx[~go_left], depth + 1, node, False))
            stack.append((idx[go_left], depth + 1, node, True))
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            counts=np.asarray(self.counts, dtype=np.float64),
        )


def _check_matrix(X: np.ndarray, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"model expects {n_features} features, got {X.shape[1]}")
    return X


def train(
    X: np.ndarray,
    y: Sequence[str],
    config: ForestConfig,
    feature_mask: np.ndarray | None = None,
) -> TrainedForest:
    """Fit a forest on rows of ``X`` labeled by ``y``.

    ``feature_mask`` restricts splits to the masked-in columns (the
    matrix keeps its full width).  Classes are ordered sorted-ascending
    and that order defines probability columns.
    """
    X = _check_matrix(X)
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(y) != n:
        raise ValueError(f"{n} rows but {len(y)} labels")
    classes = tuple(sorted(set(str(v) for v in y)))
    class_idx = {c: i for i, c in enumerate(classes)}
    y_idx = np.asarray([class_idx[str(v)] for v in y], dtype=np.int64)

    if feature_mask is None:
        mask = np.ones(d, dtype=bool)
    else:
        mask = np.asarray(feature_mask, dtype=bool)
        if mask.shape != (d,):
            raise ValueError(f"feature mask shape {mask.shape} does not match {d} columns")
    avail = np.flatnonzero(mask)
    if len(avail) == 0:
        raise ValueError("feature mask excludes every feature")
    k = config.features_per_split if config.features_per_split is not None else max(1, int(math.isqrt(len(avail))))
    k = min(k, len(avail))

    trees: list[Tree] = []
    for t in range(config.n_trees):
        rng = derive_rng(config.seed, "tree", t)
        idx = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
        builder = _TreeBuilder(X, y_idx, len(classes), avail, k, config.max_depth, rng)
        trees.append(builder.build(idx))
    return TrainedForest(config=config, classes=classes, n_features=d, feature_mask=mask, trees=trees)


def _apply_tree(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Leaf index reached by every row."""
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        f = tree.feature[node]
        active = np.flatnonzero(f >= 0)
        if len(active) == 0:
            return node
        cur = node[active]
        xv = X[active, tree.feature[cur]]
        go_left = xv <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])


def predict_proba(model: TrainedForest, X: np.ndarray) -> np.ndarray:
    """Vote fractions per class (columns follow ``model.classes``).

    Accepts a single feature row or a matrix; returns a matching 1-D or
    2-D array.
    """
    arr = np.asarray(X, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr.reshape(1, -1)
    arr = _check_matrix(arr, model.n_features)
    probs = np.zeros((len(arr), len(model.classes)))
    for tree in model.trees:
        leaves = _apply_tree(tree, arr)
        votes = np.argmax(tree.counts[leaves], axis=1)
        probs[np.arange(len(arr)), votes] += 1.0
    probs /= len(model.trees)
    return probs[0] if single else probs


def predict(model: TrainedForest, X: np.ndarray) -> list[str]:
    probs = np.atleast_2d(predict_proba(model, X))
    picks = np.argmax(probs, axis=1)
    return [model.classes[i] for i in picks]


def feature_importance(model: TrainedForest) -> FeatureImportance:
    """Mean decrease in Gini impurity, weighted by node sample fraction.

    Raw per-tree vectors are averaged and then normalized to sum to 1.
    """
    total = np.zeros(model.n_features)
    for tree in model.trees:
        imp = np.zeros(model.n_features)
        root_n = tree.counts[0].sum()
        if root_n == 0:
            continue
        for node in range(len(tree.feature)):
            f = tree.feature[node]
            if f < 0:
                continue
            c = tree.counts[node]
            cl = tree.counts[tree.left[node]]
            cr = tree.counts[tree.right[node]]
            n_node = c.sum()
            child = (cl.sum() * _gini(cl) + cr.sum() * _gini(cr)) / n_node
            imp[f] += (n_node / root_n) * (_gini(c) - child)
        total += imp
    total /= len(model.trees)
    s = total.sum()
    if s <= 0:
        return FeatureImportance(values=np.zeros(model.n_features), degenerate=True)
    return FeatureImportance(values=total / s, degenerate=False)


def rfe(
    X: np.ndarray,
    y: Sequence[str],
    config: ForestConfig,
    keep: int,
    step: float = 0.5,
) -> np.ndarray:
    """Recursive feature elimination down to ``keep`` features.

    Each round trains a forest on the surviving features and drops the
    ceil(step * remaining) lowest-importance ones, never crossing
    ``keep``.  Importance ties drop the highest feature index first.
    Returns a boolean mask over the columns of ``X``.
    """
    X = _check_matrix(X)
    d = X.shape[1]
    if not 1 <= keep <= d:
        raise ValueError(f"keep must be in [1, {d}], got {keep}")
    if not 0 < step <= 1:
        raise ValueError(f"step must be in (0, 1], got {step}")
    mask = np.ones(d, dtype=bool)
    while int(mask.sum()) > keep:
        remaining = np.flatnonzero(mask)
        model = train(X, y, config, feature_mask=mask)
        imp = feature_importance(model).values[remaining]
        n_drop = min(math.ceil(step * len(remaining)), len(remaining) - keep)
        order = np.lexsort((-remaining, imp))  # ascending importance, ties: highest index first
        mask[remaining[order[:n_drop]]] = False
    return mask


def to_json(model: TrainedForest) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "rng": RNG_IDENTITY,
        "config": {
            "n_trees": model.config.n_trees,
            "max_depth": model.config.max_depth,
            "features_per_split": model.config.features_per_split,
            "bootstrap": model.config.bootstrap,
            "seed": model.config.seed,
        },
        "classes": list(model.classes),
        "n_features": model.n_features,
        "active_features": [int(i) for i in np.flatnonzero(model.feature_mask)],
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "counts": tree.counts.tolist(),
            }
            for tree in model.trees
        ],
    }
    return json.dumps(doc, separators=(",", ":"))


def save(model: TrainedForest, path: str | Path) -> None:
    Path(path).write_text(to_json(model), encoding="utf-8")


def from_json(text: str) -> TrainedForest:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} file (format={doc.get('format')!r})")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    if doc.get("rng") != RNG_IDENTITY:
        raise ValueError(f"model was built with RNG scheme {doc.get('rng')!r}, expected {RNG_IDENTITY!r}")
    cfg = doc["config"]
    config = ForestConfig(
        n_trees=cfg["n_trees"],
        max_depth=cfg["max_depth"],
        features_per_split=cfg["features_per_split"],
        bootstrap=cfg["bootstrap"],
        seed=cfg["seed"],
    )
    n_features = int(doc["n_features"])
    mask = np.zeros(n_features, dtype=bool)
    mask[np.asarray(doc["active_features"], dtype=np.int64)] = True
    trees = [
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int64),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int64),
            right=np.asarray(t["right"], dtype=np.int64),
            counts=np.asarray(t["counts"], dtype=np.float64),
        )
        for t in doc["trees"]
    ]
    return TrainedForest(
        config=config,
        classes=tuple(doc["classes"]),
        n_features=n_features,
        feature_mask=mask,
        trees=trees,
    )


def load(path: str | Path) -> TrainedForest:
    return from_json(Path(path).read_text(encoding="utf-8"))
