"""CART decision trees: Gini for classification, variance for regression.

Growth is greedy and depth-first (left child first).  All randomness —
per-node feature subsampling and, for the extremely-randomized variant,
threshold draws — comes from a single sequential stream in growth order,
so a (data, config, seed) triple pins the tree structure exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import (
    CATEGORICAL,
    CategoricalOutput,
    Dataset,
    Model,
    Output,
    RealOutput,
    Trainer,
    argmax_label,
    model_provenance,
)
from .errors import EmptyNode, TaskMismatch
from .provenance import PFlt, PInt, PObj, PStr, object_provenance
from .rng import Xoshiro256StarStar, to_signed64

EXHAUSTIVE = "exhaustive"
RANDOM_THRESHOLD = "random-threshold"

CART_TRAINER_CLASS = "pvml.CartTrainer"
TREE_MODEL_CLASS = "pvml.TreeModel"


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int
    min_examples_per_leaf: int = 1
    min_impurity_decrease: float = 0.0
    feature_subsampling_fraction: float = 1.0
    split_kind: str = EXHAUSTIVE
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_examples_per_leaf < 1:
            raise ValueError("min_examples_per_leaf must be >= 1")
        if self.min_impurity_decrease < 0:
            raise ValueError("min_impurity_decrease must be >= 0")
        if not 0 < self.feature_subsampling_fraction <= 1:
            raise ValueError("feature_subsampling_fraction must be in (0, 1]")
        if self.split_kind not in (EXHAUSTIVE, RANDOM_THRESHOLD):
            raise ValueError(f"unknown split kind {self.split_kind!r}")


@dataclass(frozen=True)
class LeafNode:
    """Per-label weight totals for classification, weighted mean for regression."""

    n_examples: int
    counts: dict[str, float] | None = None
    mean: float | None = None


@dataclass(frozen=True)
class SplitNode:
    feature_id: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = LeafNode | SplitNode


# ---------------------------------------------------------------------------
# Impurity
# ---------------------------------------------------------------------------

def gini_impurity(class_weights: Mapping[str, float]) -> float:
    """1 - sum of squared class proportions, proportions by weight."""
    total = sum(class_weights[label] for label in sorted(class_weights))
    if total <= 0:
        raise EmptyNode("impurity of a node with no weight")
    acc = 0.0
    for label in sorted(class_weights):
        p = class_weights[label] / total
        acc += p * p
    return 1.0 - acc


def weighted_variance(values: Sequence[float], weights: Sequence[float]) -> float:
    """Weighted population variance of regression targets."""
    total = sum(weights)
    if total <= 0:
        raise EmptyNode("impurity of a node with no weight")
    mean = sum(v * w for v, w in zip(values, weights)) / total
    return sum(w * (v - mean) ** 2 for v, w in zip(values, weights)) / total


@dataclass(frozen=True)
class _Row:
    """One training example flattened for tree growth."""

    values: dict[int, float]  # feature id -> value; absent means 0.0
    target: object  # label string or float
    weight: float


def _node_impurity(rows: Sequence[_Row], task: str) -> float:
    if task == CATEGORICAL:
        weights: dict[str, float] = {}
        for row in rows:
            weights[row.target] = weights.get(row.target, 0.0) + row.weight
        return gini_impurity(weights)
    return weighted_variance([r.target for r in rows], [r.weight for r in rows])


# ---------------------------------------------------------------------------
# Split search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    feature_id: int
    threshold: float
    impurity_decrease: float


def best_split(
    rows: Sequence[_Row],
    candidate_features: Sequence[int],
    cfg: TreeConfig,
    task: str,
    rng: Xoshiro256StarStar | None = None,
) -> Split | None:
    """Best (feature, threshold) by weighted impurity decrease, or None.

    Exhaustive mode tries midpoints between consecutive distinct observed
    values per candidate feature; random-threshold mode draws one uniform
    threshold per candidate from [min, max).  Candidates whose children
    would fall under the leaf minimum are skipped.  Ties break toward the
    smaller feature id, then the smaller threshold.  A pure node never
    splits.
    """
    if cfg.split_kind == RANDOM_THRESHOLD and rng is None:
        raise ValueError("random-threshold splits need a random stream")
    parent = _node_impurity(rows, task)
    if parent == 0.0:
        return None
    total_weight = sum(r.weight for r in rows)

    best: Split | None = None
    for fid in candidate_features:
        values = [row.values.get(fid, 0.0) for row in rows]
        if cfg.split_kind == EXHAUSTIVE:
            distinct = sorted(set(values))
            thresholds = [
                (lo + hi) / 2.0 for lo, hi in zip(distinct, distinct[1:])
            ]
        else:
            u = rng.next_float()
            lo, hi = min(values), max(values)
            thresholds = [lo + u * (hi - lo)]

        for threshold in thresholds:
            left = [row for row, v in zip(rows, values) if v <= threshold]
            right = [row for row, v in zip(rows, values) if v > threshold]
            if len(left) < cfg.min_examples_per_leaf or len(right) < cfg.min_examples_per_leaf:
                continue
            wl = sum(r.weight for r in left)
            wr = sum(r.weight for r in right)
            child = (wl * _node_impurity(left, task) + wr * _node_impurity(right, task)) / total_weight
            decrease = parent - child
            if (
                best is None
                or decrease > best.impurity_decrease
                or (
                    decrease == best.impurity_decrease
                    and (fid, threshold) < (best.feature_id, best.threshold)
                )
            ):
                best = Split(fid, threshold, decrease)

    if best is None or best.impurity_decrease < cfg.min_impurity_decrease:
        return None
    return best


# ---------------------------------------------------------------------------
# Training and the tree model
# ---------------------------------------------------------------------------

class TreeModel(Model):
    model_class = TREE_MODEL_CLASS

    def __init__(self, name, provenance, feature_domain, output_domain, root: TreeNode):
        super().__init__(name, provenance, feature_domain, output_domain)
        self.root = root

    def _predict_intersected(self, example, sparse: Mapping[int, float]) -> tuple[Output, dict[str, float]]:
        node = self.root
        while isinstance(node, SplitNode):
            value = sparse.get(node.feature_id, 0.0)
            node = node.left if value <= node.threshold else node.right
        if node.counts is not None:
            total = sum(node.counts.values())
            scores = {
                label: node.counts.get(label, 0.0) / total
                for label in self.output_domain.labels()
            }
            return CategoricalOutput(argmax_label(scores)), scores
        return RealOutput(node.mean), {}


class CartTrainer(Trainer):
    """Grows a CART tree; handles classification and regression datasets."""

    trainer_class = CART_TRAINER_CLASS

    def __init__(self, cfg: TreeConfig):
        super().__init__(cfg.seed)
        self.cfg = cfg

    def provenance_with_count(self, count: int) -> PObj:
        cfg = self.cfg
        return object_provenance(
            self.trainer_class,
            config={
                "max-depth": PInt(cfg.max_depth),
                "min-examples-per-leaf": PInt(cfg.min_examples_per_leaf),
                "min-impurity-decrease": PFlt(cfg.min_impurity_decrease),
                "feature-subsampling-fraction": PFlt(cfg.feature_subsampling_fraction),
                "split-kind": PStr(cfg.split_kind),
                "seed": PInt(to_signed64(self.seed)),
            },
            instance={"invocation-count": PInt(count)},
        )

    def train_with_count(self, dataset: Dataset, count: int, user_info=None) -> TreeModel:
        task = dataset.task
        if task == CATEGORICAL and not dataset.output_domain.labels():
            raise TaskMismatch("classification dataset has no labels")

        domain = dataset.feature_domain
        rows = []
        for ex in dataset.examples:
            values = {domain.id_of(f.name): f.value for f in ex.features}
            target = ex.output.label if task == CATEGORICAL else ex.output.value
            rows.append(_Row(values, target, ex.weight))

        num_features = len(domain)
        k = math.ceil(self.cfg.feature_subsampling_fraction * num_features)
        rng = Xoshiro256StarStar(self.stream_seed(count))
        cfg = self.cfg

        def make_leaf(node_rows: Sequence[_Row]) -> LeafNode:
            if task == CATEGORICAL:
                counts: dict[str, float] = {}
                for row in node_rows:
                    counts[row.target] = counts.get(row.target, 0.0) + row.weight
                return LeafNode(len(node_rows), counts=counts)
            total = sum(r.weight for r in node_rows)
            mean = sum(r.target * r.weight for r in node_rows) / total
            return LeafNode(len(node_rows), mean=mean)

        def grow(node_rows: Sequence[_Row], depth: int) -> TreeNode:
            if depth >= cfg.max_depth or len(node_rows) < 2 * cfg.min_examples_per_leaf:
                return make_leaf(node_rows)
            if k < num_features:
                candidates = sorted(rng.sample_prefix(num_features, k))
            else:
                candidates = list(range(num_features))  # no draw when taking everything
            split = best_split(node_rows, candidates, cfg, task, rng)
            if split is None:
                return make_leaf(node_rows)
            left_rows = [r for r in node_rows if r.values.get(split.feature_id, 0.0) <= split.threshold]
            right_rows = [r for r in node_rows if r.values.get(split.feature_id, 0.0) > split.threshold]
            left = grow(left_rows, depth + 1)
            right = grow(right_rows, depth + 1)
            return SplitNode(split.feature_id, split.threshold, left, right)

        root = grow(rows, 0)
        prov = model_provenance(
            TREE_MODEL_CLASS,
            trainer_provenance=self.provenance_with_count(count),
            dataset_provenance=dataset.provenance,
            user_info=user_info,
        )
        return TreeModel("cart", prov, domain, dataset.output_domain, root)


def train_cart(dataset: Dataset, cfg: TreeConfig) -> TreeModel:
    """One-shot convenience: a fresh trainer and a single invocation."""
    return CartTrainer(cfg).train(dataset)
