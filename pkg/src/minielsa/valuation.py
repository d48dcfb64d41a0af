"""Exact Shapley-value data valuation under a KNN-regression utility.

The game: players are training rows. The utility of a subset S against one
reference point (x, y) is -(prediction - y)^2, where the prediction is the
mean target of the min(k, |S|) subset members nearest to x in scaled
feature space; the empty subset falls back to the global-mean predictor
over the full training set. A row's value is its exact Shapley value in
that game, averaged over all reference points.

Exactness without 2^N enumeration: sort training rows by distance to the
reference. For subsets smaller than k the expected marginal contribution
has a closed form in the finite-population sampling moments of the target
vector. For subsets of size >= k, a row only matters when it displaces the
k-th nearest member; conditioning on the displaced member's sort position
q collapses the sum over subset sizes to the weight k/(q(q-1)), and the
conditional marginal is a quadratic polynomial of the row's target, so one
backward pass of suffix sums over the sorted order yields every row's
value. Total cost per reference point: O(N log N + N + k).

Both the training-time valuation and the streaming candidate valuation
run the same per-reference kernel and aggregate sequentially in reference
order, so a candidate's value is bit-identical to rebuilding the augmented
game from scratch. `shapley_bruteforce` is the independent oracle: the
same game evaluated by definitional subset enumeration, used only in
tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ArgumentError, SizeError

_CHUNK = 64  # reference rows sorted per argsort call


def _as_matrix(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ArgumentError(f"{name} must be a non-empty 2-D matrix, got shape {X.shape}")
    return X


def _sq_dists(ref_chunk: np.ndarray, train_X: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (refs, train). Broadcast subtraction keeps
    the arithmetic identical whether a point is scored alone or in a batch."""
    diff = ref_chunk[:, None, :] - train_X[None, :, :]
    return np.sum(diff * diff, axis=2)


def knn_sorted_indices(train_X: np.ndarray, ref_X: np.ndarray) -> np.ndarray:
    """(refs, train) matrix: training-row indices by ascending distance.

    Ties break toward the lower row index (stable sort over row order).
    """
    train_X = _as_matrix(train_X, "train_X")
    ref_X = _as_matrix(ref_X, "ref_X")
    if train_X.shape[1] != ref_X.shape[1]:
        raise ArgumentError(
            f"arity mismatch: train has {train_X.shape[1]} features, "
            f"refs have {ref_X.shape[1]}"
        )
    out = np.empty((ref_X.shape[0], train_X.shape[0]), dtype=np.int64)
    for start in range(0, ref_X.shape[0], _CHUNK):
        chunk = ref_X[start : start + _CHUNK]
        out[start : start + chunk.shape[0]] = np.argsort(
            _sq_dists(chunk, train_X), axis=1, kind="stable"
        )
    return out


def knn_utility(
    train_X: np.ndarray,
    train_y: np.ndarray,
    subset: np.ndarray,
    ref_x: np.ndarray,
    ref_y: float,
    k: int,
) -> float:
    """Utility of one training subset against one reference point.

    Empty subset: the global-mean predictor over all training targets.
    """
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    train_y = np.asarray(train_y, dtype=np.float64)
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        pred = train_y.mean()
    else:
        train_X = _as_matrix(train_X, "train_X")
        d = np.sum((train_X[subset] - np.asarray(ref_x, dtype=np.float64)) ** 2, axis=1)
        order = np.argsort(d, kind="stable")  # subset is index-sorted, so ties go low-index
        nearest = subset[order[: min(k, subset.size)]]
        pred = train_y[nearest].mean()
    return -float((pred - ref_y) ** 2)


@njit(cache=True)
def _phi_row(t: np.ndarray, y: float, k: int) -> np.ndarray:
    """Shapley value of every position for one reference point.

    t: targets in ascending-distance order. Sequential accumulation
    throughout, so the result depends only on (t, y, k).
    """
    M = t.shape[0]
    phi = np.empty(M)
    T = 0.0
    Q = 0.0
    for i in range(M):
        T += t[i]
        Q += t[i] * t[i]
    ybar = T / M
    if M == 1:
        phi[0] = -((t[0] - y) ** 2) + (ybar - y) ** 2
        return phi

    Mp = M - 1.0
    # Coefficients of the closed-form sum over subset sizes 1..min(k,M)-1.
    S1 = 0.0
    S2 = 0.0
    S3 = 0.0
    smax = k if k < M else M
    for s in range(1, smax):
        inv1 = 1.0 / (s + 1.0)
        S1 += inv1
        S2 += inv1 * inv1
        hyp = s * (Mp - s) / (Mp - 1.0) if Mp > 1.0 else 0.0
        S3 += hyp * (inv1 * inv1 - 1.0 / (s * s))

    # Suffix sums of the displacement terms, one backward pass. s0/s1/s2
    # hold sums over positions strictly after p of w*c0, w*c1, w*c2.
    s0 = np.zeros(M)
    s1 = np.zeros(M)
    s2 = np.zeros(M)
    if M >= k + 1:
        Tpre = np.empty(M)
        run = 0.0
        for i in range(M):
            Tpre[i] = run
            run += t[i]
        kk = float(k)
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for qi in range(M - 1, -1, -1):
            s0[qi] = a0
            s1[qi] = a1
            s2[qi] = a2
            q = qi + 1.0
            if q >= k + 1.0:
                w = kk / (q * (q - 1.0))
                g = (kk - 1.0) / (q - 2.0) if k > 1 else 0.0
                a = t[qi]
                d = (a + g * Tpre[qi]) / kk - y
                c0 = -(a * a) / (kk * kk) + 2.0 * a * d / kk
                c1 = 2.0 * a * (1.0 - g) / (kk * kk) - 2.0 * d / kk
                c2 = (2.0 * g - 1.0) / (kk * kk)
                a0 += w * c0
                a1 += w * c1
                a2 += w * c2

    for p in range(M):
        u = t[p]
        mu = (T - u) / Mp
        var = (Q - u * u) / Mp - mu * mu
        if var < 0.0:
            var = 0.0
        A = u - mu
        dmy = mu - y
        diff0 = -((u - y) ** 2) + (ybar - y) ** 2
        small = (diff0 - 2.0 * dmy * A * S1 - A * A * S2 - var * S3) / M
        phi[p] = small + s0[p] + s1[p] * u + s2[p] * u * u
    return phi


@njit(cache=True)
def _candidate_value_kernel(
    dist_sorted: np.ndarray,
    t_sorted: np.ndarray,
    d_cand: np.ndarray,
    ref_y: np.ndarray,
    t_c: float,
    k: int,
    scratch: np.ndarray,
) -> float:
    """Candidate's own value over all reference points.

    Replays `_phi_row` on the augmented neighbor order of each reference
    point, skipping positions other than the candidate's: every
    accumulator runs over the same numbers in the same order, so the
    result is bit-identical to inserting the candidate and calling
    `_phi_row`, which in turn is bit-identical to rebuilding the game.
    """
    R, N = dist_sorted.shape
    M = N + 1
    kk = float(k)
    acc = 0.0
    for r in range(R):
        y = ref_y[r]
        # side='right': on distance ties the candidate ranks after
        # training rows, matching a stable sort with it appended last.
        pos = np.searchsorted(dist_sorted[r], d_cand[r], side="right")
        trow = t_sorted[r]

        T = 0.0
        Q = 0.0
        run = 0.0
        for i in range(M):
            scratch[i] = run  # augmented exclusive prefix sums
            v = t_c if i == pos else trow[i - 1 if i > pos else i]
            run += v
            T += v
            Q += v * v
        ybar = T / M
        Mp = M - 1.0

        S1 = 0.0
        S2 = 0.0
        S3 = 0.0
        smax = k if k < M else M
        for s in range(1, smax):
            inv1 = 1.0 / (s + 1.0)
            S1 += inv1
            S2 += inv1 * inv1
            hyp = s * (Mp - s) / (Mp - 1.0) if Mp > 1.0 else 0.0
            S3 += hyp * (inv1 * inv1 - 1.0 / (s * s))

        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        if M >= k + 1:
            for qi in range(M - 1, pos, -1):
                q = qi + 1.0
                if q >= k + 1.0:
                    w = kk / (q * (q - 1.0))
                    g = (kk - 1.0) / (q - 2.0) if k > 1 else 0.0
                    a = trow[qi - 1]  # qi > pos, so never the candidate
                    d = (a + g * scratch[qi]) / kk - y
                    c0 = -(a * a) / (kk * kk) + 2.0 * a * d / kk
                    c1 = 2.0 * a * (1.0 - g) / (kk * kk) - 2.0 * d / kk
                    c2 = (2.0 * g - 1.0) / (kk * kk)
                    a0 += w * c0
                    a1 += w * c1
                    a2 += w * c2

        u = t_c
        mu = (T - u) / Mp
        var = (Q - u * u) / Mp - mu * mu
        if var < 0.0:
            var = 0.0
        A = u - mu
        dmy = mu - y
        diff0 = -((u - y) ** 2) + (ybar - y) ** 2
        small = (diff0 - 2.0 * dmy * A * S1 - A * A * S2 - var * S3) / M
        acc += small + a0 + a1 * u + a2 * u * u
    return acc / R


def shapley_exact(
    train_X: np.ndarray,
    train_y: np.ndarray,
    ref_X: np.ndarray,
    ref_y: np.ndarray,
    k: int,
) -> np.ndarray:
    """Exact per-row Shapley values, averaged over the reference points."""
    train_X = _as_matrix(train_X, "train_X")
    ref_X = _as_matrix(ref_X, "ref_X")
    train_y = np.asarray(train_y, dtype=np.float64)
    ref_y = np.atleast_1d(np.asarray(ref_y, dtype=np.float64))
    if train_X.shape[1] != ref_X.shape[1]:
        raise ArgumentError("arity mismatch between train and reference features")
    n = train_X.shape[0]
    if k < 1 or k > n:
        raise ArgumentError(f"k must be in [1, {n}], got {k}")
    if train_y.shape[0] != n or ref_y.shape[0] != ref_X.shape[0]:
        raise ArgumentError("feature/target length mismatch")

    acc = np.zeros(n, dtype=np.float64)
    for start in range(0, ref_X.shape[0], _CHUNK):
        chunk_X = ref_X[start : start + _CHUNK]
        ranking = np.argsort(_sq_dists(chunk_X, train_X), axis=1, kind="stable")
        for i in range(chunk_X.shape[0]):  # fixed reference order
            phi = _phi_row(train_y[ranking[i]], float(ref_y[start + i]), k)
            acc[ranking[i]] += phi
    return acc / ref_X.shape[0]


def aggregate_utilities(
    train_X: np.ndarray,
    train_y: np.ndarray,
    ref_X: np.ndarray,
    ref_y: np.ndarray,
    k: int,
) -> tuple[float, float]:
    """(mean U(full set), mean U(empty set)) over the reference points.

    The efficiency axiom makes shapley values sum to the difference.
    """
    ranking = knn_sorted_indices(train_X, ref_X)
    train_y = np.asarray(train_y, dtype=np.float64)
    ref_y = np.atleast_1d(np.asarray(ref_y, dtype=np.float64))
    preds = train_y[ranking[:, : min(k, ranking.shape[1])]].mean(axis=1)
    u_full = float(np.mean(-((preds - ref_y) ** 2)))
    u_empty = float(np.mean(-((train_y.mean() - ref_y) ** 2)))
    return u_full, u_empty


def shapley_bruteforce(
    train_X: np.ndarray,
    train_y: np.ndarray,
    ref_X: np.ndarray,
    ref_y: np.ndarray,
    k: int,
    min_subset_size: int = 0,
) -> np.ndarray:
    """Definitional Shapley values by full subset enumeration (test oracle).

    `min_subset_size` restricts the enumeration to marginals against
    subsets S with |S| >= min_subset_size (0 = the true Shapley value);
    it exists so tests can verify which subset sizes contribute.
    """
    train_X = _as_matrix(train_X, "train_X")
    ref_X = _as_matrix(ref_X, "ref_X")
    train_y = np.asarray(train_y, dtype=np.float64)
    ref_y = np.atleast_1d(np.asarray(ref_y, dtype=np.float64))
    n = train_X.shape[0]
    if n > 14:
        raise SizeError(f"brute-force oracle is capped at 14 rows, got {n}")
    if k < 1 or k > n:
        raise ArgumentError(f"k must be in [1, {n}], got {k}")

    n_masks = 1 << n
    popcnt = np.array([bin(m).count("1") for m in range(n_masks)], dtype=np.int64)
    fact = [math.factorial(i) for i in range(n + 1)]
    weight_by_size = np.array(
        [fact[s] * fact[n - 1 - s] / fact[n] for s in range(n)], dtype=np.float64
    )
    ybar = train_y.mean()

    acc = np.zeros(n, dtype=np.float64)
    for r in range(ref_X.shape[0]):
        d = np.sum((train_X - ref_X[r]) ** 2, axis=1)
        order = np.argsort(d, kind="stable")
        util = np.empty(n_masks, dtype=np.float64)
        util[0] = -((ybar - ref_y[r]) ** 2)
        for mask in range(1, n_masks):
            total = 0.0
            count = 0
            for idx in order:
                if mask >> idx & 1:
                    total += train_y[idx]
                    count += 1
                    if count == k:
                        break
            util[mask] = -((total / count - ref_y[r]) ** 2)
        masks = np.arange(n_masks)
        for i in range(n):
            wo = masks[(masks >> i) & 1 == 0]
            sizes = popcnt[wo]
            keep = sizes >= min_subset_size
            wo = wo[keep]
            acc[i] += np.sum(
                weight_by_size[sizes[keep]] * (util[wo | (1 << i)] - util[wo])
            )
    return acc / ref_X.shape[0]


@dataclass
class ValuationReport:
    """Per-row values plus the keep decision the pipeline acted on."""

    values: np.ndarray
    k: int
    ref_set_size: int
    keep_mask: np.ndarray
    policy: str
    fraction: float | None = None

    def export(self, path, ids: np.ndarray | None = None) -> None:
        """Delimited text: row id, value, kept flag."""
        ids = ids if ids is not None else np.arange(len(self.values))
        with open(path, "w") as fh:
            fh.write("id,value,kept\n")
            for i, v, kept in zip(ids, self.values, self.keep_mask):
                fh.write(f"{int(i)},{float(v)!r},{int(kept)}\n")


def select_keep(
    values: np.ndarray, policy: str = "top_fraction", fraction: float = 1.0
) -> np.ndarray:
    """Boolean keep mask under the given policy.

    `positive` keeps rows with value > 0. `top_fraction` keeps the
    ceil(f*N) highest-valued rows, ties resolved toward the lower index.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ArgumentError("values must be non-empty")
    if policy == "positive":
        return values > 0.0
    if policy != "top_fraction":
        raise ArgumentError(f"unknown keep policy {policy!r}")
    if not (0.0 < fraction <= 1.0):
        raise ArgumentError(f"fraction must be in (0, 1], got {fraction}")
    n = values.size
    # -1e-9 snaps products like 0.2*5 that should be exact integers.
    n_keep = min(n, int(math.ceil(fraction * n - 1e-9)))
    order = np.argsort(-values, kind="stable")  # stable: lower index wins ties
    mask = np.zeros(n, dtype=bool)
    mask[order[:n_keep]] = True
    return mask


class ValuationContext:
    """Precomputed neighbor structure for streaming candidate valuation.

    Holds, per reference point, the training rows' sorted squared
    distances and sorted targets. A candidate is valued in the augmented
    game (train + candidate) by splicing it into each sorted order at its
    distance rank and re-running the per-reference kernel, which is
    bit-identical to rebuilding the augmented game from scratch.
    """

    def __init__(
        self,
        train_X: np.ndarray,
        train_y: np.ndarray,
        ref_X: np.ndarray,
        ref_y: np.ndarray,
        k: int,
    ):
        self.train_X = _as_matrix(train_X, "train_X")
        self.train_y = np.asarray(train_y, dtype=np.float64)
        self.ref_X = _as_matrix(ref_X, "ref_X")
        self.ref_y = np.atleast_1d(np.asarray(ref_y, dtype=np.float64))
        if self.train_X.shape[1] != self.ref_X.shape[1]:
            raise ArgumentError("arity mismatch between train and reference features")
        if k < 1 or k > self.train_X.shape[0]:
            raise ArgumentError(f"k must be in [1, {self.train_X.shape[0]}], got {k}")
        self.k = k
        R, N = self.ref_X.shape[0], self.train_X.shape[0]
        self.dist_sorted = np.empty((R, N), dtype=np.float64)
        self.t_sorted = np.empty((R, N), dtype=np.float64)
        for start in range(0, R, _CHUNK):
            chunk = self.ref_X[start : start + _CHUNK]
            d = _sq_dists(chunk, self.train_X)
            ranking = np.argsort(d, axis=1, kind="stable")
            rows = slice(start, start + chunk.shape[0])
            self.dist_sorted[rows] = np.take_along_axis(d, ranking, axis=1)
            self.t_sorted[rows] = self.train_y[ranking]

    def value_candidate(self, x: np.ndarray, y: float) -> float:
        """Exact Shapley value of (x, y) in the augmented game."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.train_X.shape[1]:
            raise ArgumentError(
                f"candidate has {x.shape[0]} features, expected {self.train_X.shape[1]}"
            )
        y = float(y)
        diff = self.ref_X - x[None, :]
        d_cand = np.sum(diff * diff, axis=1)
        scratch = np.empty(self.dist_sorted.shape[1] + 1, dtype=np.float64)
        return _candidate_value_kernel(
            self.dist_sorted, self.t_sorted, d_cand, self.ref_y, y, self.k, scratch
        )


def value_candidate(
    cand_x: np.ndarray,
    cand_y: float,
    train_X: np.ndarray,
    train_y: np.ndarray,
    ref_X: np.ndarray,
    ref_y: np.ndarray,
    k: int,
) -> float:
    """One-shot candidate valuation (builds a throwaway context)."""
    ctx = ValuationContext(train_X, train_y, ref_X, ref_y, k)
    return ctx.value_candidate(cand_x, cand_y)
