"""Set-cover robustness certification: FLB, ELB, and the cascading evaluator.

Per instance, the correctly-predicting trees whose traversal path tests a
feature form that feature's directional cover sets (true outcomes in the
plus set, false outcomes in the minus set). Conservatively, attacking k
features in one direction each can flip at most the union of the chosen
sets; if even that union, plus the trees already wrong, cannot reach the
majority threshold, the instance is certified robust. The fast bound (FLB)
upper-bounds the union by the sum of the k largest per-feature set sizes;
the exhaustive bound (ELB) maximizes the true union over all direction
choices. Both are sound: a certified instance admits no attack, so brute
force only ever needs to run on the uncertified remainder.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

from .attack import ThresholdIndex, _Search, relevant_thresholds
from .model import POSITIVE, Forest, Leaf, Split, predict_tree, traversal_path


class CertStatus(str, Enum):
    WRONG_BEFORE_ATTACK = "WRONG_BEFORE_ATTACK"
    ROBUST_FLB = "ROBUST_FLB"
    ROBUST_ELB = "ROBUST_ELB"
    ROBUST_BF = "ROBUST_BF"
    ATTACKED_BF = "ATTACKED_BF"
    VULNERABLE_BOUND_ONLY = "VULNERABLE_BOUND_ONLY"


class ElbEnumerationError(RuntimeError):
    """Raised when the exhaustive cover enumeration would be too large."""


ELB_CANDIDATE_CAP = 10_000_000

MODES = ("flb", "elb", "bf", "cascade")


@dataclass(frozen=True)
class CoverInstance:
    """Per-instance certification input.

    ``omega`` counts trees wrong before any attack; the directional sets map
    features to the correct trees whose path tests them with a true (plus)
    or false (minus) comparison outcome. A tree testing one feature with
    both outcomes at different depths appears in both sets; selection, not
    construction, enforces that a single attack value cannot use both.
    """

    omega: int
    plus_sets: dict[int, frozenset[int]]
    minus_sets: dict[int, frozenset[int]]
    n_trees: int


def needed_wrong(y: int, n_trees: int) -> int:
    """Minimum number of wrong trees that flips the vote against label y.

    Ties predict -1, so a +1 instance is lost at exactly half the trees
    while a -1 instance needs a strict majority of wrong trees.
    """
    if y == POSITIVE:
        return math.ceil(n_trees / 2)
    return n_trees // 2 + 1


def build_cover(forest: Forest, x, y: int) -> CoverInstance:
    """Directional cover sets of ``x``, built from correct trees only."""
    omega = 0
    plus: dict[int, set[int]] = {}
    minus: dict[int, set[int]] = {}
    for t_id, tree in enumerate(forest.trees):
        if predict_tree(tree, x) != y:
            omega += 1
            continue
        for step in traversal_path(tree, x):
            target = plus if step.went_left else minus
            target.setdefault(step.feature, set()).add(t_id)
    return CoverInstance(
        omega=omega,
        plus_sets={f: frozenset(s) for f, s in plus.items()},
        minus_sets={f: frozenset(s) for f, s in minus.items()},
        n_trees=len(forest.trees),
    )


def flb_cover_bound(ci: CoverInstance, k: int) -> int:
    """Sum of the k largest per-feature cover sizes, one direction per
    feature; an overlap-blind upper bound on the maximum cover."""
    if k <= 0:
        return 0
    best: dict[int, int] = {f: len(s) for f, s in ci.plus_sets.items()}
    for f, s in ci.minus_sets.items():
        best[f] = max(best.get(f, 0), len(s))
    return sum(sorted(best.values(), reverse=True)[:k])


def _direction_options(ci: CoverInstance) -> dict[int, list[frozenset[int]]]:
    options: dict[int, list[frozenset[int]]] = {}
    for f, s in ci.plus_sets.items():
        options.setdefault(f, []).append(s)
    for f, s in ci.minus_sets.items():
        options.setdefault(f, []).append(s)
    return options


def elb_max_cover(ci: CoverInstance, k: int, cap: int = ELB_CANDIDATE_CAP) -> int:
    """Exact maximum number of trees covered by attacking at most k features,
    one direction per chosen feature.

    Refuses (``ElbEnumerationError``) when the enumeration would exceed
    ``cap`` candidate evaluations; callers then fall back to the FLB verdict.
    """
    if k <= 0:
        return 0
    options = _direction_options(ci)
    features = sorted(options)
    size = min(k, len(features))
    if size == 0:
        return 0
    if math.comb(len(features), size) * (2 ** size) > cap:
        raise ElbEnumerationError(
            f"{len(features)} candidate features at k={size} exceed the "
            f"{cap} evaluation cap"
        )
    # adding a feature never shrinks the union, so only maximal-size subsets
    # need checking; tree ids pack into int bitmasks for cheap unions
    masks = {
        f: [sum(1 << t for t in s) for s in options[f]] for f in features
    }
    best = 0
    for combo in itertools.combinations(features, size):
        for choice in itertools.product(*(masks[f] for f in combo)):
            union = 0
            for m in choice:
                union |= m
            count = union.bit_count()
            if count > best:
                best = count
    return best


def is_certified_robust(ci: CoverInstance, y: int, cover_bound: int) -> bool:
    """True when even the bound's worst case leaves the majority intact; a
    sound certificate that no attack within budget flips the prediction."""
    return ci.omega + cover_bound < needed_wrong(y, ci.n_trees)


def flb_accuracy(forest: Forest, data, k: int) -> float:
    """Fraction of instances correct and FLB-certified; a lower bound on the
    accuracy under attack."""
    return cascade_evaluate(forest, data, k, mode="flb").value


def elb_accuracy(forest: Forest, data, k: int) -> float:
    """Fraction of instances correct and ELB-certified (FLB verdict when the
    enumeration refuses); a lower bound on the accuracy under attack."""
    return cascade_evaluate(forest, data, k, mode="elb").value


@dataclass
class InstanceCertification:
    index: int
    status: CertStatus
    flb_cover: int | None = None
    elb_cover: int | None = None
    witness: dict[int, float] | None = None


@dataclass
class CertificationReport:
    """Per-instance statuses plus aggregate figures for one dataset/attacker
    pair. ``value`` is the exact accuracy under attack in bf/cascade modes
    and a certified lower bound in flb/elb modes."""

    mode: str
    k: int
    n_instances: int
    accuracy: float
    value: float
    stage_counts: dict[str, int]
    per_instance: list[InstanceCertification] = field(repr=False)


def cascade_evaluate(forest: Forest, data, k: int, mode: str = "cascade") -> CertificationReport:
    """Assign each instance the verdict of the first deciding stage.

    The cascade runs FLB, then ELB, then brute force; the bound-only modes
    stop after their bound, and bf skips straight to enumeration. Cascade
    accuracy equals brute-force accuracy exactly because certified instances
    are unattackable.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if data.n == 0:
        raise ValueError("cannot certify an empty dataset")

    index = relevant_thresholds(forest)
    stage_counts = {"wrong": 0, "flb": 0, "elb": 0, "bf": 0}
    per_instance = []
    n_correct = 0
    n_safe = 0

    for i in range(data.n):
        x, y = data.X[i], int(data.y[i])
        cert = InstanceCertification(index=i, status=CertStatus.VULNERABLE_BOUND_ONLY)
        search = _Search(forest, x, y, index)
        if not search.correct:
            cert.status = CertStatus.WRONG_BEFORE_ATTACK
            stage_counts["wrong"] += 1
            per_instance.append(cert)
            continue
        n_correct += 1

        decided = False
        if mode in ("flb", "elb", "cascade"):
            ci = build_cover(forest, x, y)
            cert.flb_cover = flb_cover_bound(ci, k)
            if is_certified_robust(ci, y, cert.flb_cover):
                cert.status = CertStatus.ROBUST_FLB
                stage_counts["flb"] += 1
                n_safe += 1
                decided = True
            elif mode in ("elb", "cascade"):
                try:
                    cert.elb_cover = elb_max_cover(ci, k)
                except ElbEnumerationError:
                    pass  # keep the FLB verdict
                else:
                    if is_certified_robust(ci, y, cert.elb_cover):
                        cert.status = CertStatus.ROBUST_ELB
                        stage_counts["elb"] += 1
                        n_safe += 1
                        decided = True

        if not decided and mode in ("bf", "cascade"):
            stage_counts["bf"] += 1
            result = search.run(k) if k > 0 else None
            if result is not None and result.attackable:
                cert.status = CertStatus.ATTACKED_BF
                cert.witness = result.witness
            else:
                cert.status = CertStatus.ROBUST_BF
                n_safe += 1
        per_instance.append(cert)

    return CertificationReport(
        mode=mode,
        k=k,
        n_instances=data.n,
        accuracy=n_correct / data.n,
        value=n_safe / data.n,
        stage_counts=stage_counts,
        per_instance=per_instance,
    )
