"""Isolation-forest anomaly detector, built for deterministic replay.

Each tree recursively partitions a small uniform subsample with random
axis-aligned splits; anomalous points isolate in short paths. The score of
a point is 2^(-E[h]/c(n)) where E[h] is its mean path length over the
forest, n the subsample size, and c(.) the average unsuccessful-search
path length of a binary search tree. Scores are always in (0, 1); higher
means more anomalous.

Determinism contract: a fixed (data, params, seed) triple yields a
bit-identical forest, threshold, and scores. Per-tree seeds are derived
from the forest seed by tree index, so trees could be fit or scored in
parallel without changing any result.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError, SizeError

EULER_GAMMA = 0.5772156649

_MAGIC = b"MELSAFOR"
_VERSION = 1


def average_path_length(m: int) -> float:
    """c(m): expected path length of an unsuccessful BST search over m points.

    Uses the harmonic-number approximation H(j) ~ ln(j) + Euler gamma.
    c(1) = 0 by convention; a singleton leaf adds no residual depth.
    """
    if m <= 1:
        return 0.0
    h = math.log(m - 1) + EULER_GAMMA
    return 2.0 * h - 2.0 * (m - 1) / m


@dataclass
class ForestParams:
    n_trees: int = 20
    subsample_size: int = 50
    contamination: float = 0.1


@dataclass
class IsolationTree:
    """Flat node arrays; internal nodes carry (feature, threshold), leaves
    carry the size of the subsample slice that reached them (feature == -1)."""

    feature: np.ndarray    # int32, -1 for leaves
    threshold: np.ndarray  # float64, NaN for leaves
    left: np.ndarray       # int32 child ids, -1 for leaves
    right: np.ndarray      # int32 child ids, -1 for leaves
    size: np.ndarray       # int32 rows that reached the node

    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class ForestModel:
    trees: list[IsolationTree]
    subsample_size: int
    contamination: float
    threshold: float
    seed: int
    n_features: int


class _TreeBuilder:
    def __init__(self, X: np.ndarray, height_limit: int, rng: np.random.Generator):
        self.X = X
        self.height_limit = height_limit
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.size: list[int] = []

    def build(self, rows: np.ndarray, depth: int) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(math.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(len(rows))
        if depth >= self.height_limit or len(rows) <= 1:
            return node
        sub = self.X[rows]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        splittable = np.nonzero(hi > lo)[0]
        if len(splittable) == 0:
            return node
        # Uniform over features that still vary in this node, so the drawn
        # threshold always lies strictly inside the feature's range.
        f = int(splittable[self.rng.integers(len(splittable))])
        while True:
            thr = lo[f] + self.rng.random() * (hi[f] - lo[f])
            if lo[f] < thr < hi[f]:
                break
        go_left = sub[:, f] < thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(rows[go_left], depth + 1)
        self.right[node] = self.build(rows[~go_left], depth + 1)
        return node

    def tree(self) -> IsolationTree:
        return IsolationTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            size=np.asarray(self.size, dtype=np.int32),
        )


def _check_matrix(X: np.ndarray, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ArgumentError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ArgumentError(
            f"feature arity mismatch: model expects {n_features}, got {X.shape[1]}"
        )
    return X


def fit_forest(X: np.ndarray, params: ForestParams | None = None, seed: int = 0) -> ForestModel:
    """Fit an isolation forest and learn the anomaly-score threshold.

    Each tree is grown on an independent uniform subsample without
    replacement, with height limit ceil(log2(subsample_size)). The
    threshold is the order statistic of the training scores that flags
    ceil(contamination * n) rows (fewer only when ties sit on it), so
    `score > threshold` marks the top contamination fraction.
    """
    params = params or ForestParams()
    X = _check_matrix(X)
    n = X.shape[0]
    if params.n_trees < 1:
        raise ArgumentError(f"n_trees must be >= 1, got {params.n_trees}")
    if params.subsample_size < 2:
        raise ArgumentError(f"subsample_size must be >= 2, got {params.subsample_size}")
    if not (0.0 < params.contamination <= 0.5):
        raise ArgumentError(
            f"contamination must be in (0, 0.5], got {params.contamination}"
        )
    if n < params.subsample_size:
        raise SizeError(
            f"need at least subsample_size={params.subsample_size} rows, got {n}"
        )
    height_limit = math.ceil(math.log2(params.subsample_size))
    seed_seq = np.random.SeedSequence(seed)
    tree_seeds = seed_seq.spawn(params.n_trees)
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(tree_seeds[t])
        rows = rng.choice(n, size=params.subsample_size, replace=False)
        builder = _TreeBuilder(X, height_limit, rng)
        builder.build(rows, 0)
        trees.append(builder.tree())
    model = ForestModel(
        trees=trees,
        subsample_size=params.subsample_size,
        contamination=params.contamination,
        threshold=math.inf,
        seed=seed,
        n_features=X.shape[1],
    )
    scores = score_matrix(model, X)
    n_flag = int(math.ceil(params.contamination * n - 1e-9))
    order = np.sort(scores)
    model.threshold = float(order[n - n_flag - 1])
    return model


def _tree_path_lengths(tree: IsolationTree, X: np.ndarray) -> np.ndarray:
    """Path length of every row of X through one tree, leaf-size adjusted."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    # Frontier propagation: (node, depth, row indices) triples.
    stack = [(0, 0, np.arange(n))]
    while stack:
        node, depth, rows = stack.pop()
        f = tree.feature[node]
        if f < 0:
            out[rows] = depth + average_path_length(int(tree.size[node]))
            continue
        go_left = X[rows, f] < tree.threshold[node]
        stack.append((int(tree.left[node]), depth + 1, rows[go_left]))
        stack.append((int(tree.right[node]), depth + 1, rows[~go_left]))
    return out


def score_matrix(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Anomaly scores in (0, 1) for every row; higher = more anomalous."""
    X = _check_matrix(X, model.n_features)
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    total = np.zeros(X.shape[0], dtype=np.float64)
    for tree in model.trees:
        total += _tree_path_lengths(tree, X)
    mean_path = total / len(model.trees)
    return np.exp2(-mean_path / average_path_length(model.subsample_size))


def anomaly_score(model: ForestModel, x: np.ndarray) -> float:
    """Score a single feature row."""
    return float(score_matrix(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def flag_anomalies(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Boolean mask of rows whose score exceeds the model threshold."""
    return score_matrix(model, X) > model.threshold


def forest_to_bytes(model: ForestModel) -> bytes:
    """Versioned binary layout: magic, header, then flattened node arrays."""
    parts = [
        _MAGIC,
        struct.pack(
            "<IIIdd qI",
            _VERSION,
            len(model.trees),
            model.subsample_size,
            model.contamination,
            model.threshold,
            model.seed,
            model.n_features,
        ),
    ]
    for tree in model.trees:
        parts.append(struct.pack("<I", tree.n_nodes()))
        parts.append(tree.feature.astype("<i4").tobytes())
        parts.append(tree.threshold.astype("<f8").tobytes())
        parts.append(tree.left.astype("<i4").tobytes())
        parts.append(tree.right.astype("<i4").tobytes())
        parts.append(tree.size.astype("<i4").tobytes())
    return b"".join(parts)


def forest_from_bytes(blob: bytes) -> ForestModel:
    if blob[:8] != _MAGIC:
        raise FormatError("not a serialized isolation forest (bad magic)")
    header = struct.Struct("<IIIdd qI")
    version, n_trees, subsample, contamination, threshold, seed, n_features = header.unpack_from(blob, 8)
    if version != _VERSION:
        raise FormatError(f"unsupported forest format version {version}")
    off = 8 + header.size
    trees = []
    for _ in range(n_trees):
        (n_nodes,) = struct.unpack_from("<I", blob, off)
        off += 4

        def take(dtype, width):
            nonlocal off
            arr = np.frombuffer(blob, dtype=dtype, count=n_nodes, offset=off).copy()
            off += width * n_nodes
            return arr

        feature = take("<i4", 4)
        thresholds = take("<f8", 8)
        left = take("<i4", 4)
        right = take("<i4", 4)
        size = take("<i4", 4)
        trees.append(IsolationTree(feature, thresholds, left, right, size))
    return ForestModel(
        trees=trees,
        subsample_size=subsample,
        contamination=contamination,
        threshold=threshold,
        seed=seed,
        n_features=n_features,
    )
