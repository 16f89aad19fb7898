"""Validation-tuned training and class-wise F1 evaluation."""

from __future__ import annotations

import json
import multiprocessing
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CLASSES, Split
from .models import FAMILIES, family_grid, make_model, xgboost_backing


@dataclass
class TrainResult:
    family: str
    params: dict
    val_macro_f1: float
    backing: str
    model: object = field(repr=False, default=None)


@dataclass
class EvalReport:
    f1: dict[str, dict[str, float]]  # class -> family -> score
    confusion: dict[str, list[list[int]]]  # family -> 10x10 matrix
    chosen: dict[str, dict]  # family -> params (+ val score, backing)
    missing_classes: list[str]

    def table(self) -> str:
        families = [f for f in FAMILIES if f in self.confusion]
        width = max(len(c) for c in CLASSES) + 2
        lines = ["Class-wise F1 (test set)", ""]
        lines.append("".join(["Class".ljust(width)] + [f.ljust(9) for f in families]))
        for cls in CLASSES:
            cells = [f"{self.f1[cls][fam]:.3f}".ljust(9) for fam in families]
            lines.append("".join([cls.ljust(width)] + cells))
        if self.missing_classes:
            lines.append("")
            lines.append(f"warning: classes absent from the test set: {self.missing_classes}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(
            {
                "classes": list(CLASSES),
                "f1": self.f1,
                "confusion": self.confusion,
                "chosen": self.chosen,
                "missing_classes": self.missing_classes,
            },
            indent=2,
            sort_keys=True,
        )


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int = len(CLASSES)) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=int)
    for t, p in zip(y_true, y_pred):
        m[t, p] += 1
    return m


def f1_from_confusion(m: np.ndarray) -> np.ndarray:
    """One-vs-rest F1 per class: 2tp / (2tp + fp + fn); 0 when empty."""
    tp = np.diag(m).astype(float)
    fp = m.sum(axis=0) - tp
    fn = m.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    out = np.zeros(len(tp))
    nz = denom > 0
    out[nz] = 2 * tp[nz] / denom[nz]
    return out


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    m = confusion_matrix(y_true, y_pred)
    present = np.union1d(np.unique(y_true), np.unique(y_pred))
    return float(f1_from_confusion(m)[present].mean())


def train_and_tune(train: Split, val: Split, family: str, seed: int) -> TrainResult:
    """Grid search scored on validation macro-F1, then refit on train only."""
    best_params = None
    best_score = -1.0
    for params in family_grid(family):
        model = make_model(family, params, seed)
        model.fit(train.X, train.y)
        score = macro_f1(val.y, model.predict(val.X))
        if score > best_score:  # ties keep the first (deterministic grid order)
            best_score = score
            best_params = params
    model = make_model(family, best_params, seed)
    model.fit(train.X, train.y)
    backing = xgboost_backing() if family == "XGBoost" else "sklearn"
    return TrainResult(family=family, params=best_params, val_macro_f1=best_score, backing=backing, model=model)


def train_families(
    train: Split,
    val: Split,
    families: tuple[str, ...] = FAMILIES,
    seed: int = 0,
    jobs: int = 1,
) -> dict[str, TrainResult]:
    """Train all requested families, optionally in parallel processes.

    Workers use the spawn context: forking after BLAS threads have started
    in this process can deadlock the children.
    """
    if jobs > 1 and len(families) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(min(jobs, len(families))) as pool:
            results = pool.starmap(
                train_and_tune, [(train, val, family, seed) for family in families]
            )
    else:
        results = [train_and_tune(train, val, family, seed) for family in families]
    return {r.family: r for r in results}


def evaluate(results: dict[str, TrainResult], test: Split) -> EvalReport:
    """Per-class F1 on the held-out test split, one row per class."""
    missing = [CLASSES[i] for i in range(len(CLASSES)) if i not in set(test.y)]
    if missing:
        print(f"warning: MissingClass: {missing} absent from the test split", file=sys.stderr)
    f1: dict[str, dict[str, float]] = {cls: {} for cls in CLASSES}
    confusion: dict[str, list[list[int]]] = {}
    chosen: dict[str, dict] = {}
    for family, result in results.items():
        pred = np.asarray(result.model.predict(test.X))
        m = confusion_matrix(test.y, pred)
        scores = f1_from_confusion(m)
        for i, cls in enumerate(CLASSES):
            f1[cls][family] = float(scores[i])
        confusion[family] = m.tolist()
        chosen[family] = {
            "params": result.params,
            "val_macro_f1": result.val_macro_f1,
            "backing": result.backing,
        }
    return EvalReport(f1=f1, confusion=confusion, chosen=chosen, missing_classes=missing)


def write_reports(report: EvalReport, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.table() + "\n", encoding="utf-8")
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
