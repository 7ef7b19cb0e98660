"""Experiment orchestration: train model grids, evaluate attack budgets and
bounds, and render result tables as CSV, JSON, or markdown."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attack, certify, datasets, training
from .data import Dataset, SplitSpec, load_csv, split
from .model import Forest, Leaf, Split, accuracy, load_forest, save_forest
from .training import forest_votes, rf_train

logger = logging.getLogger(__name__)

DEFAULT_TEST_FRACTION = 1 / 3
DEFAULT_SEED = 281


def fpf_rounds_for_target(target: int, b: int) -> int:
    """Rounds giving roughly ``target`` trees at defense strength b."""
    return max(1, target // (2 * b + 1))


@dataclass
class ExperimentSpec:
    """One dataset, a grid of models, and the budgets/modes to evaluate.

    ``dataset`` is ``{"builtin": name}`` or ``{"path": csv, "label_column":
    ..., "positive_label": ...}``; ``models`` entries carry an ``algo`` key
    (fpf / rf / rsm) plus that trainer's parameters.
    """

    dataset: dict
    models: list[dict]
    budgets: list[int]
    modes: list[str] = field(default_factory=lambda: ["bf"])
    test_fraction: float = DEFAULT_TEST_FRACTION
    split_seed: int = DEFAULT_SEED
    train_seed: int = DEFAULT_SEED

    def __post_init__(self):
        for mode in self.modes:
            if mode not in ("bf", "elb", "flb"):
                raise ValueError(f"unknown evaluation mode {mode!r}")
        for cfg in self.models:
            if cfg.get("algo") not in ("fpf", "rf", "rsm"):
                raise ValueError(f"unknown algorithm in model spec {cfg!r}")
        if any(k < 0 for k in self.budgets):
            raise ValueError("attack budgets must be non-negative")

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def cell_columns(self) -> list[str]:
        if not self.budgets:
            return ["acc"]
        cols = []
        for k in sorted(self.budgets):
            for mode in self.modes:
                cols.append(f"{mode}@{k}")
        return cols


@dataclass
class ResultTable:
    """Rows keyed by (model, params); cells keyed by column name."""

    columns: list[str]
    rows: list[dict]

    def to_obj(self) -> dict:
        return {
            "columns": list(self.columns),
            "rows": [
                {
                    "model": r["model"],
                    "params": r["params"],
                    "cells": {c: round(r["cells"][c], 3) for c in self.columns},
                }
                for r in self.rows
            ],
        }


def _model_label(cfg: dict) -> tuple[str, str]:
    algo = cfg["algo"]
    if algo == "rf":
        return "rf", f"T={cfg['trees']}"
    if algo == "rsm":
        return "rsm", f"T={cfg['trees']} frac={cfg['feature_fraction']} L={cfg.get('max_leaves', 8)}"
    return "fpf", f"b={cfg['b']} r={cfg['rounds']} L={cfg.get('max_leaves', 8)}"


def train_model(cfg: dict, train: Dataset, seed: int) -> Forest:
    algo = cfg["algo"]
    if algo == "rf":
        return rf_train(train, cfg["trees"], seed=seed)
    if algo == "rsm":
        return training.rsm_train(
            train,
            cfg["trees"],
            feature_fraction=cfg["feature_fraction"],
            max_leaves=cfg.get("max_leaves", 8),
            seed=seed,
        )
    return training.fpf_train(
        train,
        training.TrainConfig(
            b=cfg["b"],
            rounds=cfg["rounds"],
            max_leaves=cfg.get("max_leaves", 8),
            seed=seed,
        ),
    )


def evaluate_cell(model: Forest, test: Dataset, budgets, modes) -> dict[str, float]:
    """Accuracy figures for one trained model: exact values for bf, certified
    lower bounds for elb/flb; k=0 collapses to plain accuracy for any mode."""
    cells: dict[str, float] = {}
    if not budgets:
        cells["acc"] = accuracy_fast(model, test)
        return cells
    for k in sorted(budgets):
        for mode in modes:
            name = f"{mode}@{k}"
            if k == 0:
                cells[name] = accuracy_fast(model, test)
            elif mode == "bf":
                cells[name] = attack.accuracy_under_attack(model, test, attack.AttackBudget(k))
            elif mode == "elb":
                cells[name] = certify.elb_accuracy(model, test, k)
            else:
                cells[name] = certify.flb_accuracy(model, test, k)
    return cells


def accuracy_fast(model: Forest, data: Dataset) -> float:
    return float(np.mean(forest_votes(model, data.X) == data.y))


def _dataset_fingerprint(data: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.X).tobytes())
    h.update(np.ascontiguousarray(data.y).tobytes())
    h.update("\x1f".join(data.feature_names).encode())
    return h.hexdigest()


def load_spec_dataset(ref: dict) -> Dataset:
    if "builtin" in ref:
        return datasets.builtin_dataset(ref["builtin"])
    return load_csv(ref["path"], ref.get("label_column", "label"), ref.get("positive_label", "1"))


def run_experiment(spec: ExperimentSpec, out_dir, use_cache: bool = True) -> ResultTable:
    """Train and evaluate every grid cell, writing table.csv/json/md plus one
    model file per cell; cells are cached by a content hash so interrupted
    runs resume for free."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "models").mkdir(exist_ok=True)
    cache_dir = out_dir / "cache"
    cache_dir.mkdir(exist_ok=True)

    data = load_spec_dataset(spec.dataset)
    train, test = split(data, SplitSpec(spec.test_fraction, spec.split_seed))
    fingerprint = _dataset_fingerprint(data)
    columns = spec.cell_columns()

    rows = []
    for cfg in spec.models:
        label, params = _model_label(cfg)
        key_payload = json.dumps(
            {
                "cell": cfg,
                "dataset": fingerprint,
                "test_fraction": spec.test_fraction,
                "split_seed": spec.split_seed,
                "train_seed": spec.train_seed,
                "budgets": sorted(spec.budgets),
                "modes": list(spec.modes),
            },
            sort_keys=True,
        )
        key = hashlib.sha256(key_payload.encode()).hexdigest()
        cache_file = cache_dir / f"{key}.json"

        cells = None
        if use_cache and cache_file.exists():
            try:
                cached = json.loads(cache_file.read_text(encoding="utf-8"))
                cells = {c: float(cached["cells"][c]) for c in columns}
            except (ValueError, KeyError) as exc:
                logger.warning("cache entry %s unreadable (%s); recomputing", cache_file, exc)
                cells = None
        if cells is None:
            model = train_model(cfg, train, spec.train_seed)
            save_forest(model, out_dir / "models" / f"{label}_{key[:12]}.json")
            cells = evaluate_cell(model, test, spec.budgets, spec.modes)
            cache_file.write_text(json.dumps({"cells": cells}), encoding="utf-8")
        rows.append({"model": label, "params": params, "cells": cells})

    table = ResultTable(columns=columns, rows=rows)
    validate_bound_ordering(table)
    for fmt, name in (("csv", "table.csv"), ("json", "table.json"), ("markdown", "table.md")):
        (out_dir / name).write_text(render_report(table, fmt), encoding="utf-8")
    return table


def validate_bound_ordering(table: ResultTable) -> None:
    """Abort on any row violating flb <= elb <= bf at the same budget; such a
    row means a certifier bug, never valid output."""
    for row in table.rows:
        cells = row["cells"]
        ks = {c.split("@")[1] for c in cells if "@" in c}
        for k in ks:
            flb = cells.get(f"flb@{k}")
            elb = cells.get(f"elb@{k}")
            bf = cells.get(f"bf@{k}")
            chain = [v for v in (flb, elb, bf) if v is not None]
            if any(a > b for a, b in zip(chain, chain[1:])):
                raise RuntimeError(
                    f"bound ordering violated for {row['model']} {row['params']} "
                    f"at k={k}: flb={flb} elb={elb} bf={bf}"
                )


def render_report(table: ResultTable, format: str) -> str:
    """Serialize the table with stable column order and 3-decimal cells."""
    obj = table.to_obj()
    if format == "json":
        return json.dumps(obj, indent=2) + "\n"
    if format == "csv":
        lines = ["model,params," + ",".join(obj["columns"])]
        for row in obj["rows"]:
            cells = ",".join(f"{row['cells'][c]:.3f}" for c in obj["columns"])
            lines.append(f"{row['model']},{row['params']},{cells}")
        return "\n".join(lines) + "\n"
    if format == "markdown":
        header = "| model | params | " + " | ".join(obj["columns"]) + " |"
        rule = "|" + "---|" * (len(obj["columns"]) + 2)
        lines = [header, rule]
        for row in obj["rows"]:
            cells = " | ".join(f"{row['cells'][c]:.3f}" for c in obj["columns"])
            lines.append(f"| {row['model']} | {row['params']} | {cells} |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def parse_markdown_table(text: str) -> ResultTable:
    """Inverse of the markdown renderer, so reports can be round-tripped."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    header = [c.strip() for c in lines[0].strip("|").split("|")]
    columns = header[2:]
    rows = []
    for ln in lines[2:]:
        parts = [c.strip() for c in ln.strip("|").split("|")]
        rows.append(
            {
                "model": parts[0],
                "params": parts[1],
                "cells": {c: float(v) for c, v in zip(columns, parts[2:])},
            }
        )
    return ResultTable(columns=columns, rows=rows)


# ---------------------------------------------------------------------------
# Optional dataset diagnostics
# ---------------------------------------------------------------------------


def gini_importances(forest: Forest, data: Dataset) -> np.ndarray:
    """Per-feature impurity decrease accumulated over the forest, normalized
    to sum to one. Diagnostic only; no training step depends on it."""
    totals = np.zeros(data.d)

    def cost(y) -> float:
        pos = int(np.count_nonzero(y == 1))
        return pos * (len(y) - pos) / len(y) if len(y) else 0.0

    def walk(node, rows):
        if isinstance(node, Leaf) or len(rows) == 0:
            return
        mask = data.X[rows, node.feature] <= node.threshold
        left, right = rows[mask], rows[~mask]
        gain = cost(data.y[rows]) - cost(data.y[left]) - cost(data.y[right])
        totals[node.feature] += max(gain, 0.0)
        walk(node.left, left)
        walk(node.right, right)

    for tree in forest.trees:
        walk(tree, np.arange(data.n))
    s = totals.sum()
    return totals / s if s > 0 else totals


def top_feature_count(data: Dataset, coverage: float = 0.9, n_trees: int = 100, seed: int = 0) -> int:
    """How many features carry ``coverage`` of a random forest's importance."""
    imp = gini_importances(rf_train(data, n_trees, seed=seed), data)
    ranked = np.sort(imp)[::-1]
    cum = np.cumsum(ranked)
    return int(np.searchsorted(cum, coverage * cum[-1]) + 1)
