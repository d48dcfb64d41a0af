"""Gradient-boosted regression trees with exact greedy splits.

Least-squares boosting: each shallow tree fits the current residuals by
exhaustive variance-reduction split search over presorted feature values,
and the ensemble adds it with a shrinkage factor. No row or column
subsampling, no histogram binning: a fit is a pure function of
(X, y, params), reproducible bit-for-bit.

Fitting cost is O(n_trees * depth * n_features * n); the presort is done
once per fit and node partitions filter it stably, so no per-node sorting.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import ArgumentError, FormatError, SizeError

_MAGIC = b"MELSAGBR"
_VERSION = 1

# (n_trees, learning_rate) presets; `fast` trades a coarser shrinkage
# schedule for ~6x less compute, with the same n_trees * lr budget.
PROFILES = {
    "full": (9000, 0.0075),
    "fast": (1500, 0.045),
}


@dataclass
class GBRTParams:
    n_trees: int = 9000
    learning_rate: float = 0.0075
    max_depth: int = 3
    min_samples_leaf: int = 5
    seed: int = 0  # reserved for subsampling variants; unused by default

    @classmethod
    def from_profile(cls, profile: str, **overrides) -> "GBRTParams":
        if profile not in PROFILES:
            raise ArgumentError(f"unknown profile {profile!r}; expected {sorted(PROFILES)}")
        n_trees, lr = PROFILES[profile]
        params = cls(n_trees=n_trees, learning_rate=lr)
        for name, value in overrides.items():
            if value is not None:
                setattr(params, name, value)
        return params


@dataclass
class RegressionTree:
    feature: np.ndarray    # int32, -1 for leaves
    threshold: np.ndarray  # float64; rule: x[feature] <= threshold goes left
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64 leaf values (residual units)

    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            f = self.feature[node]
            if f < 0:
                out[rows] = self.value[node]
                continue
            go_left = X[rows, f] <= self.threshold[node]
            stack.append((int(self.left[node]), rows[go_left]))
            stack.append((int(self.right[node]), rows[~go_left]))
        return out


@dataclass
class BoostedEnsemble:
    base_prediction: float
    trees: list[RegressionTree]
    params: GBRTParams
    n_features: int
    train_mse: np.ndarray = field(default_factory=lambda: np.empty(0))  # per-iteration fit MSE

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ArgumentError(
                f"arity mismatch: model expects {self.n_features} features, got {X.shape[1]}"
            )
        out = np.full(X.shape[0], self.base_prediction, dtype=np.float64)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict(X)
        return out

    def predict_one(self, x: np.ndarray) -> float:
        return float(self.predict(np.asarray(x, dtype=np.float64)[None, :])[0])


class _TreeGrower:
    """Grows one tree on the current residuals using presorted row orders."""

    def __init__(self, X: np.ndarray, residual: np.ndarray, params: GBRTParams):
        self.X = X
        self.r = residual
        self.params = params
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.updates = np.zeros(X.shape[0], dtype=np.float64)

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(math.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _best_split(self, sorted_idx: list[np.ndarray]):
        min_leaf = self.params.min_samples_leaf
        m = len(sorted_idx[0])
        best = None  # (score, feature, threshold)
        base_score = None
        for f, idx in enumerate(sorted_idx):
            v = self.X[idx, f]
            pre = np.cumsum(self.r[idx])
            total = pre[-1]
            if base_score is None:
                base_score = total * total / m
            n_left = np.arange(1, m)
            s_left = pre[:-1]
            valid = (n_left >= min_leaf) & (m - n_left >= min_leaf) & (v[1:] > v[:-1])
            if not valid.any():
                continue
            score = np.where(
                valid,
                s_left * s_left / n_left + (total - s_left) ** 2 / (m - n_left),
                -np.inf,
            )
            i = int(np.argmax(score))  # first maximum: lowest split point wins ties
            if best is None or score[i] > best[0]:
                best = (float(score[i]), f, float(v[i]))
        if best is None or best[0] <= base_score:
            return None
        return best[1], best[2]

    def grow(self, sorted_idx: list[np.ndarray], depth: int) -> int:
        node = self._new_node()
        rows = sorted_idx[0]
        if depth >= self.params.max_depth or len(rows) < 2 * self.params.min_samples_leaf:
            return self._make_leaf(node, rows)
        split = self._best_split(sorted_idx)
        if split is None:
            return self._make_leaf(node, rows)
        f, thr = split
        go_left = self.X[:, f] <= thr
        left_idx = [idx[go_left[idx]] for idx in sorted_idx]
        right_idx = [idx[~go_left[idx]] for idx in sorted_idx]
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.grow(left_idx, depth + 1)
        self.right[node] = self.grow(right_idx, depth + 1)
        return node

    def _make_leaf(self, node: int, rows: np.ndarray) -> int:
        val = float(self.r[rows].mean())
        self.value[node] = val
        self.updates[rows] = val
        return node

    def tree(self) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )


def fit_gbrt(X: np.ndarray, y: np.ndarray, params: GBRTParams | None = None) -> BoostedEnsemble:
    """Fit the boosted ensemble to (X, y).

    The base prediction is mean(y); tree t fits the residuals of the
    ensemble after t-1 trees. Training MSE per iteration is recorded on
    the returned model; it is non-increasing by construction (leaf means
    can only shrink the squared residual).
    """
    params = params or GBRTParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ArgumentError(f"X must be 2-D, got shape {X.shape}")
    if y.shape[0] != X.shape[0]:
        raise ArgumentError("X and y length mismatch")
    if not np.all(np.isfinite(y)):
        raise ArgumentError("targets must be finite")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("features must be finite")
    if X.shape[0] < 2 * params.min_samples_leaf:
        raise SizeError(
            f"need at least {2 * params.min_samples_leaf} rows "
            f"(2 * min_samples_leaf), got {X.shape[0]}"
        )
    if params.n_trees < 0 or params.max_depth < 1 or params.min_samples_leaf < 1:
        raise ArgumentError("invalid tree parameters")

    base = float(y.mean())
    F = np.full(X.shape[0], base, dtype=np.float64)
    sorted_idx = [
        np.argsort(X[:, f], kind="stable").astype(np.int64) for f in range(X.shape[1])
    ]
    trees: list[RegressionTree] = []
    mse_path = np.empty(params.n_trees, dtype=np.float64)
    for t in range(params.n_trees):
        grower = _TreeGrower(X, y - F, params)
        grower.grow(sorted_idx, 0)
        trees.append(grower.tree())
        F += params.learning_rate * grower.updates
        diff = y - F
        mse_path[t] = float(diff @ diff) / X.shape[0]
    return BoostedEnsemble(
        base_prediction=base,
        trees=trees,
        params=params,
        n_features=X.shape[1],
        train_mse=mse_path,
    )


@dataclass(frozen=True)
class RegressionMetrics:
    mse: float
    rmse: float
    ae: float
    r2: float


def metrics(y_true: np.ndarray, y_pred: np.ndarray) -> RegressionMetrics:
    """MSE, RMSE (= sqrt(mse)), mean absolute error, and R^2 about mean(y_true)."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise ArgumentError("y_true and y_pred must be equal-length non-empty vectors")
    err = y_true - y_pred
    mse = float(np.mean(err * err))
    ae = float(np.mean(np.abs(err)))
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    sse = float(np.sum(err * err))
    if sst > 0.0:
        r2 = 1.0 - sse / sst
    else:
        r2 = 1.0 if sse == 0.0 else 0.0  # constant targets: only a perfect fit scores
    return RegressionMetrics(mse=mse, rmse=math.sqrt(mse), ae=ae, r2=r2)


@dataclass
class CVResult:
    """Per-fold metrics plus their plain field-wise means."""

    folds: list[RegressionMetrics]
    mse: float
    rmse: float
    ae: float
    r2: float


def kfold_cv(
    X: np.ndarray, y: np.ndarray, k: int, params: GBRTParams, seed: int
) -> CVResult:
    """Shuffled balanced k-fold cross-validation; fold sizes differ by <= 1."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if k < 2:
        raise ArgumentError(f"k must be >= 2, got {k}")
    if k > X.shape[0]:
        raise ArgumentError(f"k={k} exceeds the {X.shape[0]} available rows")
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(X.shape[0]), k)
    results = []
    for held_out in folds:
        mask = np.ones(X.shape[0], dtype=bool)
        mask[held_out] = False
        model = fit_gbrt(X[mask], y[mask], params)
        results.append(metrics(y[held_out], model.predict(X[held_out])))
    return CVResult(
        folds=results,
        mse=float(np.mean([m.mse for m in results])),
        rmse=float(np.mean([m.rmse for m in results])),
        ae=float(np.mean([m.ae for m in results])),
        r2=float(np.mean([m.r2 for m in results])),
    )


@dataclass
class ResidualReport:
    observed: np.ndarray
    predicted: np.ndarray
    residual: np.ndarray       # observed - predicted, input order
    qq_theoretical: np.ndarray  # ascending normal quantiles
    qq_standardized: np.ndarray  # ascending standardized residual quantiles

    def export_residuals(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("observed,predicted,residual\n")
            for o, p, r in zip(self.observed, self.predicted, self.residual):
                fh.write(f"{float(o)!r},{float(p)!r},{float(r)!r}\n")

    def export_qq(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("theoretical_quantile,standardized_residual\n")
            for t, s in zip(self.qq_theoretical, self.qq_standardized):
                fh.write(f"{float(t)!r},{float(s)!r}\n")


def residuals(y_true: np.ndarray, y_pred: np.ndarray) -> ResidualReport:
    """Residuals in input order plus normal Q-Q pairs (Hazen positions)."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise ArgumentError("y_true and y_pred must be equal-length non-empty vectors")
    res = y_true - y_pred
    spread = res.std()
    standardized = (res - res.mean()) / spread if spread > 0 else np.zeros_like(res)
    n = res.size
    nd = NormalDist()
    theoretical = np.array([nd.inv_cdf((i + 0.5) / n) for i in range(n)])
    return ResidualReport(
        observed=y_true,
        predicted=y_pred,
        residual=res,
        qq_theoretical=theoretical,
        qq_standardized=np.sort(standardized),
    )


def gbrt_to_bytes(model: BoostedEnsemble) -> bytes:
    """Versioned binary layout: magic, header, then per-tree node arrays."""
    p = model.params
    parts = [
        _MAGIC,
        struct.pack(
            "<IIIIqddI",
            _VERSION,
            len(model.trees),
            p.max_depth,
            p.min_samples_leaf,
            p.seed,
            p.learning_rate,
            model.base_prediction,
            model.n_features,
        ),
    ]
    for tree in model.trees:
        parts.append(struct.pack("<I", tree.n_nodes()))
        parts.append(tree.feature.astype("<i4").tobytes())
        parts.append(tree.threshold.astype("<f8").tobytes())
        parts.append(tree.left.astype("<i4").tobytes())
        parts.append(tree.right.astype("<i4").tobytes())
        parts.append(tree.value.astype("<f8").tobytes())
    return b"".join(parts)


def gbrt_from_bytes(blob: bytes) -> BoostedEnsemble:
    if blob[:8] != _MAGIC:
        raise FormatError("not a serialized boosted ensemble (bad magic)")
    header = struct.Struct("<IIIIqddI")
    version, n_trees, depth, min_leaf, seed, lr, base, n_features = header.unpack_from(blob, 8)
    if version != _VERSION:
        raise FormatError(f"unsupported ensemble format version {version}")
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

        trees.append(
            RegressionTree(
                feature=take("<i4", 4),
                threshold=take("<f8", 8),
                left=take("<i4", 4),
                right=take("<i4", 4),
                value=take("<f8", 8),
            )
        )
    params = GBRTParams(
        n_trees=n_trees,
        learning_rate=lr,
        max_depth=depth,
        min_samples_leaf=min_leaf,
        seed=seed,
    )
    return BoostedEnsemble(
        base_prediction=base, trees=trees, params=params, n_features=n_features
    )
