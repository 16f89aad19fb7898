"""Dataset loading with manifest-enforced split integrity.

The harness consumes the pipeline's external interfaces only: the three
split CSVs and the split manifest. Nothing is trusted from file layout --
a capture appearing in two splits, or a row whose capture is assigned
elsewhere, aborts hard before any training happens.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

CLASSES = (
    "BENIGN",
    "HEL-F",
    "OMSC",
    "CHUNK-F",
    "PUB-F",
    "COND-REF",
    "BROWSE",
    "READ-EXP",
    "NESTED",
    "TBP",
)

META_COLUMNS = {"capture_id", "window_id", "window_start"}
LABEL_COLUMN = "label"
FEATURE_PREFIXES = ("t_", "gl_")
SPLITS = ("train", "val", "test")


class HarnessError(Exception):
    pass


class LeakageDetected(HarnessError):
    pass


class UnknownColumns(HarnessError):
    pass


@dataclass
class Split:
    name: str
    X: np.ndarray
    y: np.ndarray  # class indices into CLASSES
    capture_ids: list[str]
    feature_names: list[str]


def read_manifest(path: Path) -> dict[str, str]:
    """capture -> split; duplicate capture lines are leakage, full stop."""
    assignment: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        capture_id, split = (part.strip() for part in line.split(","))
        if capture_id in assignment and assignment[capture_id] != split:
            raise LeakageDetected(f"capture {capture_id} assigned to both "
                                  f"{assignment[capture_id]} and {split}")
        assignment[capture_id] = split
    return assignment


def _feature_columns(df: pd.DataFrame, where: str) -> list[str]:
    features = [c for c in df.columns if c.startswith(FEATURE_PREFIXES)]
    unknown = [
        c for c in df.columns
        if c not in META_COLUMNS and c != LABEL_COLUMN and not c.startswith(FEATURE_PREFIXES)
    ]
    if unknown:
        raise UnknownColumns(f"{where}: unexpected columns {unknown}")
    if not features:
        raise HarnessError(f"{where}: no feature columns found")
    if LABEL_COLUMN not in df.columns or "capture_id" not in df.columns:
        raise HarnessError(f"{where}: label or capture_id column missing")
    return features


def load_split(path: Path, feature_order: list[str] | None = None) -> Split:
    """Load one CSV; features are selected by name, never by position."""
    df = pd.read_csv(path)
    features = _feature_columns(df, str(path))
    if feature_order is None:
        feature_order = features
    else:
        missing = set(feature_order) - set(features)
        extra = set(features) - set(feature_order)
        if missing or extra:
            raise HarnessError(
                f"{path}: feature set differs from training "
                f"(missing {sorted(missing)}, extra {sorted(extra)})"
            )
    bad_labels = set(df[LABEL_COLUMN]) - set(CLASSES)
    if bad_labels:
        raise HarnessError(f"{path}: labels outside the class vocabulary: {sorted(bad_labels)}")
    y = df[LABEL_COLUMN].map({c: i for i, c in enumerate(CLASSES)}).to_numpy()
    X = df[feature_order].to_numpy(dtype=float)
    return Split(
        name=Path(path).stem,
        X=X,
        y=y,
        capture_ids=df["capture_id"].tolist(),
        feature_names=list(feature_order),
    )


def load_dataset(data_dir: Path) -> dict[str, Split]:
    """Load train/val/test and verify split integrity against the manifest."""
    data_dir = Path(data_dir)
    assignment = read_manifest(data_dir / "split_manifest.txt")
    splits: dict[str, Split] = {}
    feature_order = None
    for name in SPLITS:
        split = load_split(data_dir / f"{name}.csv", feature_order)
        feature_order = split.feature_names
        splits[name] = split

    capture_sets = {name: set(split.capture_ids) for name, split in splits.items()}
    for i, a in enumerate(SPLITS):
        for b in SPLITS[i + 1 :]:
            shared = capture_sets[a] & capture_sets[b]
            if shared:
                raise LeakageDetected(f"captures in both {a} and {b}: {sorted(shared)[:5]}")
    for name, captures in capture_sets.items():
        for cid in captures:
            if assignment.get(cid) != name:
                raise LeakageDetected(
                    f"capture {cid} appears in {name}.csv but the manifest "
                    f"assigns it to {assignment.get(cid)!r}"
                )
    return splits
