"""Tree induction and the three forest trainers: FPF, RF, and RSM.

The tree learner is greedy top-down CART: Gini impurity, split candidates at
midpoints of consecutive distinct sorted values, at least one sample per
side. Equal-gain ties resolve to the lowest feature index, then the lowest
threshold, so training is reproducible.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, majority_fraction, project
from .model import (
    NEGATIVE,
    POSITIVE,
    Forest,
    ForestMeta,
    Leaf,
    Split,
    TreeNode,
    map_features,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Partition:
    """Disjoint feature-index sets covering {0..n_features-1}, sizes within 1."""

    sets: tuple[tuple[int, ...], ...]
    n_features: int

    def __post_init__(self):
        union = set()
        total = 0
        for s in self.sets:
            union.update(s)
            total += len(s)
        if total != len(union) or union != set(range(self.n_features)):
            raise ValueError("sets must disjointly cover the full feature set")
        lo, hi = self.n_features // self.k, -(-self.n_features // self.k)
        if any(not lo <= len(s) <= hi for s in self.sets):
            raise ValueError(f"sets must have size {lo} or {hi} (equi-partition)")

    @property
    def k(self) -> int:
        return len(self.sets)


@dataclass(frozen=True)
class TrainConfig:
    """FPF hyper-parameters: defense strength b, rounds, leaf cap, seed."""

    b: int
    rounds: int
    max_leaves: int = 8
    seed: int = 0
    max_retries: int = 100

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("b must be non-negative")
        if self.rounds < 1 or self.max_leaves < 1 or self.max_retries < 1:
            raise ValueError("rounds, max_leaves and max_retries must be positive")


def _majority_label(y) -> int:
    pos = int(np.count_nonzero(y == POSITIVE))
    return POSITIVE if pos > len(y) - pos else NEGATIVE


def _best_split(Xn, yn, feature_ids):
    """Exhaustive Gini split search over the given columns.

    Returns (feature_id, threshold, gain) for the split minimizing the
    summed child impurity, or None when no split strictly improves on the
    parent. Gain is the absolute weighted impurity decrease, comparable
    across nodes of the same tree.
    """
    m = Xn.shape[0]
    if m < 2:
        return None
    pos_total = int(np.count_nonzero(yn == POSITIVE))
    neg_total = m - pos_total
    if pos_total == 0 or neg_total == 0:
        return None

    order = np.argsort(Xn, axis=0, kind="stable")
    sx = np.take_along_axis(Xn, order, axis=0)
    valid = sx[:-1] < sx[1:]
    if not valid.any():
        return None

    # cost(i) = posL*negL/nL + posR*negR/nR, proportional to the weighted
    # Gini impurity of the two children after cutting below sorted row i+1
    cpos = np.cumsum(yn[order] == POSITIVE, axis=0, dtype=np.float64)
    nl = np.arange(1, m, dtype=np.float64)[:, None]
    pl = cpos[:-1]
    pr = pos_total - pl
    nr = m - nl
    cost = pl * (nl - pl) / nl + pr * (nr - pr) / nr
    cost = np.where(valid, cost, np.inf)

    best_cost = cost.min()
    parent_cost = pos_total * neg_total / m
    if not best_cost < parent_cost - 1e-12:
        return None

    best = None
    for i, c in zip(*np.nonzero(cost == best_cost)):
        key = (int(feature_ids[c]), (sx[i, c] + sx[i + 1, c]) / 2.0)
        if best is None or key < best:
            best = key
    feature, threshold = best
    return feature, float(threshold), float(parent_cost - best_cost)


class _BuildNode:
    __slots__ = ("rows", "split", "label", "left", "right", "gain")

    def __init__(self, X, y, rows, feature_ids):
        self.rows = rows
        self.label = _majority_label(y[rows])
        self.left = self.right = None
        found = _best_split(X[rows][:, feature_ids], y[rows], feature_ids)
        if found is None:
            self.split = None
            self.gain = 0.0
        else:
            feature, threshold, gain = found
            self.split = (feature, threshold, X[rows, feature] <= threshold)
            self.gain = gain

    def freeze(self) -> TreeNode:
        if self.left is None:
            return Leaf(self.label)
        return Split(self.split[0], self.split[1], self.left.freeze(), self.right.freeze())


def train_tree(data: Dataset, max_leaves: int) -> TreeNode:
    """Grow a Gini tree best-first until ``max_leaves`` leaves (or purity)."""
    if max_leaves < 1:
        raise ValueError("max_leaves must be positive")
    X, y = data.X, data.y
    feature_ids = np.arange(data.d)
    root = _BuildNode(X, y, np.arange(data.n), feature_ids)
    heap = []
    tick = 0
    if root.split is not None:
        heap.append((-root.gain, tick, root))
    leaves = 1
    while heap and leaves < max_leaves:
        _, _, node = heapq.heappop(heap)
        mask = node.split[2]
        node.left = _BuildNode(X, y, node.rows[mask], feature_ids)
        node.right = _BuildNode(X, y, node.rows[~mask], feature_ids)
        leaves += 1
        for child in (node.left, node.right):
            if child.split is not None:
                tick += 1
                heapq.heappush(heap, (-child.gain, tick, child))
    return root.freeze()


def _grow_sampled(X, y, rows, n_candidates, rng) -> TreeNode:
    """Unbounded recursive growth with a fresh feature sample at every node."""
    d = X.shape[1]
    yn = y[rows]
    pos = int(np.count_nonzero(yn == POSITIVE))
    if pos == 0 or pos == len(rows):
        return Leaf(POSITIVE if pos else NEGATIVE)
    cols = np.sort(rng.choice(d, size=min(n_candidates, d), replace=False))
    found = _best_split(X[rows][:, cols], yn, cols)
    if found is None:
        return Leaf(_majority_label(yn))
    feature, threshold, _ = found
    mask = X[rows, feature] <= threshold
    left = _grow_sampled(X, y, rows[mask], n_candidates, rng)
    right = _grow_sampled(X, y, rows[~mask], n_candidates, rng)
    return Split(feature, threshold, left, right)


def tree_votes(tree: TreeNode, X) -> np.ndarray:
    """Vectorized per-instance predictions of one tree over a matrix."""
    out = np.empty(X.shape[0], dtype=np.int64)

    def fill(node, rows):
        while isinstance(node, Split):
            mask = X[rows, node.feature] <= node.threshold
            fill(node.left, rows[mask])
            node, rows = node.right, rows[~mask]
        out[rows] = node.prediction

    fill(tree, np.arange(X.shape[0]))
    return out


def forest_votes(forest: Forest, X) -> np.ndarray:
    """(n_instances,) majority-vote predictions; ties go to -1."""
    total = np.zeros(X.shape[0], dtype=np.int64)
    for t in forest.trees:
        total += tree_votes(t, X)
    return np.where(total > 0, POSITIVE, NEGATIVE)


def random_partition(n_features: int, k: int, rng) -> Partition:
    """Shuffle the features and deal them round-robin into k balanced sets."""
    if k > n_features:
        raise ValueError(f"cannot partition {n_features} features into {k} sets")
    perm = rng.permutation(n_features)
    return Partition(
        sets=tuple(tuple(sorted(int(f) for f in perm[i::k])) for i in range(k)),
        n_features=n_features,
    )


def overlap_count(partition: Partition, attacked) -> int:
    """Number of partition sets the attacked feature set touches."""
    attacked = set(attacked)
    return sum(1 for s in partition.sets if attacked.intersection(s))


def fpf_train(data: Dataset, cfg: TrainConfig) -> Forest:
    """Feature-partitioned forest: per round, 2b+1 trees on disjoint projections.

    A round is redrawn (fresh random partition) until its majority-vote
    training accuracy beats the majority-class baseline, up to
    ``cfg.max_retries`` attempts; then the best round seen is kept and the
    round index is recorded in the forest metadata.
    """
    k = 2 * cfg.b + 1
    if k > data.d:
        raise ValueError(f"2b+1 = {k} exceeds the {data.d} available features")
    baseline = majority_fraction(data)
    round_seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.rounds)

    all_trees: list[TreeNode] = []
    all_sets: list[tuple[int, ...]] = []
    capped: list[int] = []
    for i, seed in enumerate(round_seeds):
        rng = np.random.default_rng(seed)
        best = None
        for _ in range(cfg.max_retries):
            part = random_partition(data.d, k, rng)
            trees = []
            for P in part.sets:
                proj = project(data, P)
                trees.append(map_features(train_tree(proj, cfg.max_leaves), proj.origin_indices))
            votes = np.zeros(data.n, dtype=np.int64)
            for t in trees:
                votes += tree_votes(t, data.X)
            acc = float(np.mean(np.where(votes > 0, POSITIVE, NEGATIVE) == data.y))
            if best is None or acc > best[0]:
                best = (acc, trees, part)
            if acc > baseline:
                break
        else:
            capped.append(i)
            logger.warning(
                "round %d: accept condition unmet after %d retries "
                "(best training accuracy %.3f <= baseline %.3f); keeping best round",
                i, cfg.max_retries, best[0], baseline,
            )
        _, trees, part = best
        all_trees.extend(trees)
        all_sets.extend(part.sets)

    meta = ForestMeta(
        algorithm="FPF",
        seed=cfg.seed,
        b=cfg.b,
        rounds=cfg.rounds,
        partitions=tuple(all_sets),
        retry_cap_rounds=tuple(capped),
    )
    return Forest(trees=tuple(all_trees), meta=meta)


def n_split_features(d: int) -> int:
    """Per-node candidate count for RF: ceil(sqrt(d))."""
    return math.ceil(math.sqrt(d))


def rf_train(data: Dataset, n_trees: int, seed: int = 0) -> Forest:
    """Random forest baseline: bootstrap rows, unbounded leaves, sqrt-feature
    sampling at every node."""
    if n_trees < 1:
        raise ValueError("n_trees must be positive")
    q = n_split_features(data.d)
    trees = []
    for tree_seed in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(tree_seed)
        rows = rng.integers(0, data.n, size=data.n)
        trees.append(_grow_sampled(data.X, data.y, rows, q, rng))
    return Forest(trees=tuple(trees), meta=ForestMeta(algorithm="RF", seed=seed))


def rsm_train(
    data: Dataset,
    n_trees: int,
    feature_fraction: float,
    max_leaves: int = 8,
    seed: int = 0,
) -> Forest:
    """Random subspace baseline: each tree sees a fresh random feature subset."""
    if not 0.0 < feature_fraction <= 1.0:
        raise ValueError(f"feature_fraction must be in (0,1], got {feature_fraction}")
    q = math.ceil(feature_fraction * data.d)
    trees = []
    for tree_seed in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(tree_seed)
        feats = sorted(int(f) for f in rng.choice(data.d, size=q, replace=False))
        proj = project(data, feats)
        trees.append(map_features(train_tree(proj, max_leaves), proj.origin_indices))
    return Forest(trees=tuple(trees), meta=ForestMeta(algorithm="RSM", seed=seed))
