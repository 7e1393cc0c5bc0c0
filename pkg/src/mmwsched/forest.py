"""Random forest over link-combination classes, with the beta fallback rule."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from .scheduling import LinkCombination

FORMAT_MAGIC = b"MMWRF\0"
FORMAT_VERSION = 1


def gini(counts) -> float:
    """Gini impurity 1 - sum_c p_c^2 of a class histogram."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total < 1:
        raise ValueError("gini of an empty histogram")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _prep(X, y, n_classes=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if n_classes is None:
        n_classes = int(y.max()) + 1 if len(y) else 1
    if len(y) and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError("labels out of range")
    return X, y, int(n_classes)


def best_split(X, y, features, n_classes: Optional[int] = None) -> Optional[tuple[int, float, float]]:
    """CART split over ``features`` minimising size-weighted child Gini.

    Thresholds are midpoints between consecutive distinct values; samples
    with ``x[f] <= threshold`` go left. Returns (feature, threshold, gain) or
    None when no split reduces impurity. Ties keep the first candidate in
    feature order, then ascending threshold.
    """
    X, y, n_classes = _prep(X, y, n_classes)
    n = len(y)
    if n < 2:
        return None
    feats = np.ascontiguousarray(features, dtype=np.int64)
    counts = np.bincount(y, minlength=n_classes).astype(np.int64)
    idx = np.arange(n, dtype=np.int64)
    left_c = np.zeros(n_classes, np.int64)
    right_c = np.zeros(n_classes, np.int64)
    f, thr, score = _kernels.split_search(X, y, idx, 0, n, feats, len(feats), counts, n_classes,
                                          np.empty(n), left_c, right_c)
    if f < 0 or not _kernels.reduces_impurity(X, y, idx, 0, n, f, thr, n_classes, left_c, right_c):
        return None
    parent = float((counts * counts).sum()) / n
    gain = max((score - parent) / n, 0.0)
    return int(f), float(thr), gain


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: int = 20
    max_leaf_nodes: Optional[int] = None
    min_samples_split: int = 2
    max_features: Union[int, str, None] = "sqrt"  # "sqrt", an int, or None for all
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("need at least one tree")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features is None:
            return n_features
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        return max(1, min(int(self.max_features), n_features))


@dataclass(eq=False)
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) class histogram per node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):  # children always have larger ids
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.apply(self.feature, self.threshold, self.left, self.right, X)

    def leaf_proba(self) -> np.ndarray:
        c = self.counts.astype(float)
        return c / c.sum(axis=1, keepdims=True)

    def predict_proba(self, X) -> np.ndarray:
        return self.leaf_proba()[self.apply(X)]

    def same_as(self, other: "Tree") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("feature", "threshold", "left", "right", "counts"))


def grow_tree(X, y, params: ForestParams, rng, n_classes: Optional[int] = None) -> Tree:
    """Grow one CART tree on all given samples.

    ``rng`` is a numpy Generator (or seed); one integer is drawn from it to
    seed the per-node feature subsampling.
    """
    X, y, n_classes = _prep(X, y, n_classes)
    if len(y) == 0:
        raise ValueError("cannot grow a tree on zero samples")
    rng = np.random.default_rng(rng)
    seed = int(rng.integers(0, 2**31 - 1))
    max_leaves = params.max_leaf_nodes or 0
    arrays = _kernels.grow(X, y, n_classes, params.max_depth, params.min_samples_split,
                           params.features_per_split(X.shape[1]), max_leaves, seed)
    return Tree(*arrays)


def _tree_job(X, y, params: ForestParams, n_classes: int, t: int) -> Tree:
    rng = np.random.default_rng([params.seed, t])
    if params.bootstrap:
        sample = rng.integers(0, len(y), size=len(y))
        return grow_tree(X[sample], y[sample], params, rng, n_classes)
    return grow_tree(X, y, params, rng, n_classes)


@dataclass(eq=False)
class Forest:
    trees: list[Tree]
    n_features: int
    n_classes: int
    params: ForestParams

    def predict_proba(self, X) -> np.ndarray:
        """Mean of the trees' normalised leaf histograms, shape (n, n_classes)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        total = np.zeros((len(X), self.n_classes))
        for tree in self.trees:
            total += tree.predict_proba(X)
        return total / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)


def train_forest(X, y, params: ForestParams = ForestParams(), n_classes: Optional[int] = None,
                 n_jobs: int = 1) -> Forest:
    """Bagged CART ensemble; tree t uses the RNG stream (seed, t)."""
    X, y, n_classes = _prep(X, y, n_classes)
    if len(y) == 0:
        raise ValueError("empty training set")
    if n_jobs == 1:
        trees = [_tree_job(X, y, params, n_classes, t) for t in range(params.n_trees)]
    else:
        from joblib import Parallel, delayed

        trees = Parallel(n_jobs=n_jobs)(delayed(_tree_job)(X, y, params, n_classes, t)
                                        for t in range(params.n_trees))
    return Forest(list(trees), X.shape[1], n_classes, params)


@dataclass
class PredictionOutput:
    p: np.ndarray  # class probabilities
    z: np.ndarray  # one-hot argmax (ties -> lower class)

    @property
    def index(self) -> int:
        return int(np.argmax(self.z))

    @property
    def confidence(self) -> float:
        return float(self.p.max())


def predict_proba(forest: Forest, x) -> PredictionOutput:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) != forest.n_features:
        raise ValueError(f"expected a vector of {forest.n_features} features")
    p = forest.predict_proba(x[None])[0]
    z = np.zeros_like(p, dtype=np.int8)
    z[np.argmax(p)] = 1
    return PredictionOutput(p, z)


def decide(pred: PredictionOutput, beta: float, all_links: LinkCombination) -> LinkCombination:
    """Trust the forest iff its top probability exceeds beta, else use every link."""
    if pred.confidence > beta:
        return LinkCombination(pred.index, all_links.n_links)
    return all_links


def decide_batch(proba: np.ndarray, beta: float, n_links: int) -> np.ndarray:
    """Vectorised :func:`decide`, returning combination masks."""
    proba = np.asarray(proba)
    return np.where(proba.max(axis=1) > beta, proba.argmax(axis=1), (1 << n_links) - 1)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

_TREE_FIELDS = (("feature", "<i8"), ("threshold", "<f8"), ("left", "<i8"), ("right", "<i8"), ("counts", "<i8"))


def save_forest(forest: Forest, path) -> None:
    """Binary format: magic, u32 version, u32 header length, JSON header, raw arrays.

    The header records dimensions, training parameters and per-tree node
    counts; arrays follow tree by tree in ``_TREE_FIELDS`` order, little endian.
    """
    header = {
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "params": asdict(forest.params),
        "nodes": [t.n_nodes for t in forest.trees],
        "fields": [name for name, _ in _TREE_FIELDS],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(FORMAT_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for t in forest.trees:
            for name, dtype in _TREE_FIELDS:
                fh.write(np.ascontiguousarray(getattr(t, name), dtype=dtype).tobytes())


def load_forest(path) -> Forest:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(FORMAT_MAGIC):
        raise ValueError(f"{path} is not a forest file")
    pos = len(FORMAT_MAGIC)
    version, hlen = struct.unpack_from("<II", data, pos)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported forest format version {version}")
    pos += 8
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    C = header["n_classes"]
    trees = []
    for n in header["nodes"]:
        arrays = {}
        for name, dtype in _TREE_FIELDS:
            count = n * C if name == "counts" else n
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
            pos += arr.nbytes
            arrays[name] = arr.reshape(n, C).astype(np.int64) if name == "counts" else arr.astype(
                np.float64 if name == "threshold" else np.int64)
        trees.append(Tree(**arrays))
    return Forest(trees, header["n_features"], C, ForestParams(**header["params"]))
