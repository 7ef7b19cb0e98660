"""Core immutable types: decision trees, forests, prediction and traversal."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

NEGATIVE = -1
POSITIVE = +1
LABELS = (NEGATIVE, POSITIVE)


@dataclass(frozen=True)
class Leaf:
    """Terminal node carrying a binary prediction (-1 or +1)."""

    prediction: int

    def __post_init__(self):
        if self.prediction not in LABELS:
            raise ValueError(f"leaf prediction must be -1 or +1, got {self.prediction!r}")


@dataclass(frozen=True)
class Split:
    """Internal test node: instances with x[feature] <= threshold go left."""

    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"

    def __post_init__(self):
        if self.feature < 0:
            raise ValueError(f"feature index must be non-negative, got {self.feature}")
        if not math.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold!r}")


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class TraversalStep:
    """One comparison on the root-to-leaf path: went_left iff x[feature] <= threshold held."""

    feature: int
    threshold: float
    went_left: bool


@dataclass(frozen=True)
class ForestMeta:
    """Training provenance kept with the model.

    For FPF forests ``partitions`` holds one feature set per tree, in tree
    order (rounds of 2b+1 consecutive disjoint sets). ``retry_cap_rounds``
    lists rounds whose accept-condition retry budget was exhausted.
    """

    algorithm: str
    seed: int | None = None
    b: int | None = None
    rounds: int | None = None
    partitions: tuple[tuple[int, ...], ...] | None = None
    retry_cap_rounds: tuple[int, ...] = ()


@dataclass(frozen=True)
class Forest:
    """Ordered tree ensemble with majority-vote prediction (ties predict -1)."""

    trees: tuple[TreeNode, ...]
    meta: ForestMeta = field(default_factory=lambda: ForestMeta(algorithm="RF"))

    def __post_init__(self):
        if not self.trees:
            raise ValueError("forest must contain at least one tree")
        if self.meta.algorithm == "FPF" and self.meta.partitions is not None:
            _check_fpf_structure(self)

    def __len__(self) -> int:
        return len(self.trees)


def _check_fpf_structure(forest: Forest) -> None:
    meta = forest.meta
    if meta.b is None or meta.rounds is None:
        raise ValueError("FPF forest metadata must record b and rounds")
    k = 2 * meta.b + 1
    if len(forest.trees) != meta.rounds * k:
        raise ValueError(
            f"FPF forest must have rounds*(2b+1) = {meta.rounds * k} trees, "
            f"got {len(forest.trees)}"
        )
    if len(meta.partitions) != len(forest.trees):
        raise ValueError("FPF metadata must carry one feature set per tree")
    universe = set().union(*(set(p) for p in meta.partitions[:k]))
    for r in range(meta.rounds):
        round_sets = [set(p) for p in meta.partitions[r * k:(r + 1) * k]]
        if sum(len(s) for s in round_sets) != len(set().union(*round_sets)):
            raise ValueError(f"round {r}: partition sets are not pairwise disjoint")
        if set().union(*round_sets) != universe:
            raise ValueError(f"round {r}: partition does not cover the full feature set")


def predict_tree(tree: TreeNode, x) -> int:
    """Deterministic traversal of one tree; returns the reached leaf's label."""
    node = tree
    while isinstance(node, Split):
        if node.feature >= len(x):
            raise ValueError(
                f"instance has {len(x)} features but tree tests feature {node.feature}"
            )
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.prediction


def predict_forest(forest: Forest, x) -> int:
    """Majority vote over the forest: +1 iff the vote sum is strictly positive."""
    total = sum(predict_tree(t, x) for t in forest.trees)
    return POSITIVE if total > 0 else NEGATIVE


def traversal_path(tree: TreeNode, x) -> list[TraversalStep]:
    """Ordered root-to-leaf comparisons taken by ``x``; empty for a lone leaf."""
    steps = []
    node = tree
    while isinstance(node, Split):
        if node.feature >= len(x):
            raise ValueError(
                f"instance has {len(x)} features but tree tests feature {node.feature}"
            )
        went_left = x[node.feature] <= node.threshold
        steps.append(TraversalStep(node.feature, node.threshold, went_left))
        node = node.left if went_left else node.right
    return steps


def accuracy(forest: Forest, data) -> float:
    """Fraction of instances whose forest prediction matches their label."""
    if data.n == 0:
        raise ValueError("cannot compute accuracy on an empty dataset")
    hits = sum(
        1 for i in range(data.n) if predict_forest(forest, data.X[i]) == data.y[i]
    )
    return hits / data.n


def iter_nodes(tree: TreeNode) -> Iterator[TreeNode]:
    """Yield every node of the tree, preorder."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Split):
            stack.append(node.right)
            stack.append(node.left)


def tree_features(tree: TreeNode) -> set[int]:
    """Set of feature indices tested anywhere in the tree."""
    return {n.feature for n in iter_nodes(tree) if isinstance(n, Split)}


def map_features(tree: TreeNode, index_map) -> TreeNode:
    """Rewrite node feature indices through ``index_map`` (local -> global)."""
    if isinstance(tree, Leaf):
        return tree
    return Split(
        feature=index_map[tree.feature],
        threshold=tree.threshold,
        left=map_features(tree.left, index_map),
        right=map_features(tree.right, index_map),
    )


# ---------------------------------------------------------------------------
# JSON model format
#
# {"algorithm": str, "b": int|null, "rounds": int|null, "seed": int|null,
#  "partitions": [[int,...],...]|null, "trees": [node,...]}
# node := {"feature": int, "threshold": float, "left": node, "right": node}
#       | {"leaf": -1|+1}
# ---------------------------------------------------------------------------


def _tree_to_obj(node: TreeNode):
    if isinstance(node, Leaf):
        return {"leaf": node.prediction}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _tree_to_obj(node.left),
        "right": _tree_to_obj(node.right),
    }


def _tree_from_obj(obj) -> TreeNode:
    if "leaf" in obj:
        return Leaf(int(obj["leaf"]))
    return Split(
        feature=int(obj["feature"]),
        threshold=float(obj["threshold"]),
        left=_tree_from_obj(obj["left"]),
        right=_tree_from_obj(obj["right"]),
    )


def forest_to_obj(forest: Forest) -> dict:
    meta = forest.meta
    obj = {
        "algorithm": meta.algorithm,
        "b": meta.b,
        "rounds": meta.rounds,
        "seed": meta.seed,
        "partitions": [list(p) for p in meta.partitions] if meta.partitions else None,
        "trees": [_tree_to_obj(t) for t in forest.trees],
    }
    if meta.retry_cap_rounds:
        obj["retry_cap_rounds"] = list(meta.retry_cap_rounds)
    return obj


def forest_from_obj(obj: dict) -> Forest:
    meta = ForestMeta(
        algorithm=obj["algorithm"],
        seed=obj.get("seed"),
        b=obj.get("b"),
        rounds=obj.get("rounds"),
        partitions=tuple(tuple(int(f) for f in p) for p in obj["partitions"])
        if obj.get("partitions")
        else None,
        retry_cap_rounds=tuple(obj.get("retry_cap_rounds", ())),
    )
    return Forest(trees=tuple(_tree_from_obj(t) for t in obj["trees"]), meta=meta)


def save_forest(forest: Forest, path) -> None:
    Path(path).write_text(json.dumps(forest_to_obj(forest)), encoding="utf-8")


def load_forest(path) -> Forest:
    return forest_from_obj(json.loads(Path(path).read_text(encoding="utf-8")))
