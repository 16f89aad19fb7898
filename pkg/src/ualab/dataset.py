"""Window labeling, CSV dataset emission and the capture-level split.

A window is labeled with the capture's attack class as soon as one
attack-labeled packet falls inside it, otherwise BENIGN; majority voting
would let low-rate attacks lose their own windows to background traffic.
Packet-free windows inside the capture's active span become all-zero
BENIGN rows; windows outside the span are not emitted.

Splits are assigned per capture (never per window) so temporally
correlated windows cannot leak across train/validation/test.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .capture import LabeledEvent
from .flow import FlowWindowStats
from .synth import ALL_LABELS, derive_seed
from .windows import FEATURE_COLUMNS, aggregate, window_index_us, zero_vector

SPLITS = ("train", "val", "test")
CSV_COLUMNS: tuple[str, ...] = ("capture_id", "window_id", "window_start") + FEATURE_COLUMNS + ("label",)


class DatasetError(Exception):
    pass


class TruthGap(DatasetError):
    pass


class InfeasibleStratification(DatasetError):
    pass


@dataclass
class LabeledWindow:
    capture_id: str
    window_id: int
    window_start: float
    values: dict[str, float]
    label: str


def label_windows(
    capture_id: str,
    windows: dict[int, list[FlowWindowStats]],
    events: Sequence[LabeledEvent],
    window_us: int = 5_000_000,
) -> list[LabeledWindow]:
    """Label one capture's window feature vectors from per-packet truth."""
    if not events:
        return []
    origin = events[0].record.ts_us
    attack_labels = {ev.truth.label for ev in events if ev.truth.label != "BENIGN"}
    if len(attack_labels) > 1:
        raise TruthGap(f"{capture_id}: multiple attack classes {sorted(attack_labels)}")
    for label in attack_labels | {"BENIGN"}:
        if label not in ALL_LABELS:
            raise TruthGap(f"{capture_id}: unknown label {label!r}")

    windows_with_attack = set()
    for ev in events:
        if ev.truth.label != "BENIGN":
            windows_with_attack.add(window_index_us(ev.record.ts_us, origin, window_us))

    total_feature_packets = sum(
        s.t_pkt_count for stats in windows.values() for s in stats
    )
    if total_feature_packets != len(events):
        raise TruthGap(
            f"{capture_id}: features cover {total_feature_packets} packets, "
            f"truth covers {len(events)}"
        )

    attack_label = attack_labels.pop() if attack_labels else None
    last_window = window_index_us(events[-1].record.ts_us, origin, window_us)
    rows = []
    for wid in range(last_window + 1):
        stats = windows.get(wid, [])
        start_s = wid * window_us / 1e6
        vec = aggregate(stats, window_id=wid, window_start=start_s) if stats else zero_vector(wid, start_s)
        label = attack_label if (attack_label and wid in windows_with_attack) else "BENIGN"
        rows.append(
            LabeledWindow(
                capture_id=capture_id,
                window_id=wid,
                window_start=start_s,
                values=vec.values,
                label=label,
            )
        )
    return rows


def _format_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if value == int(value) and abs(value) < 1e15:
            return str(int(value))
        return format(value, ".9g")
    return str(value)


def emit_csv(rows: Iterable[LabeledWindow], path: str | Path) -> int:
    """Write labeled windows with a frozen column order; floats use 9
    significant digits and round-trip losslessly at that precision."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            record = [row.capture_id, row.window_id, _format_value(row.window_start)]
            record += [_format_value(row.values[c]) for c in FEATURE_COLUMNS]
            record.append(row.label)
            writer.writerow(record)
            count += 1
    return count


def load_csv(path: str | Path) -> list[LabeledWindow]:
    """Inverse of emit_csv; rejects files with a different column set."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise DatasetError(f"{path}: unexpected column header")
        for line in reader:
            values = dict(zip(CSV_COLUMNS, line))
            rows.append(
                LabeledWindow(
                    capture_id=values["capture_id"],
                    window_id=int(values["window_id"]),
                    window_start=float(values["window_start"]),
                    values={c: float(values[c]) for c in FEATURE_COLUMNS},
                    label=values["label"],
                )
            )
    return rows


@dataclass
class SplitManifest:
    assignment: dict[str, str]  # capture_id -> split name
    seed: int
    counts: dict[str, int]

    def captures(self, split: str) -> list[str]:
        return sorted(cid for cid, s in self.assignment.items() if s == split)

    def check_disjoint(self) -> None:
        # each capture appears exactly once by construction; verify counts
        seen = {}
        for cid, split in self.assignment.items():
            if cid in seen:
                raise DatasetError(f"capture {cid} assigned twice")
            seen[cid] = split


def split_captures(
    scenarios: dict[str, str],
    counts: tuple[int, int, int],
    seed: int,
) -> SplitManifest:
    """Stratified-by-scenario random assignment of captures to splits.

    Every class lands in every non-empty split when it has enough
    captures; class sizes below the number of non-empty splits raise
    InfeasibleStratification.
    """
    total = sum(counts)
    if total != len(scenarios):
        raise DatasetError(f"split counts sum to {total}, corpus has {len(scenarios)}")
    active = [(SPLITS[i], counts[i]) for i in range(3) if counts[i] > 0]
    if not active:
        raise DatasetError("all split counts are zero")
    if len(active) < 3:
        print(f"warning: degenerate split, only {[name for name, _ in active]} populated")

    by_class: dict[str, list[str]] = {}
    for cid in sorted(scenarios):
        by_class.setdefault(scenarios[cid], []).append(cid)
    for cls, members in by_class.items():
        if len(members) < len(active):
            raise InfeasibleStratification(
                f"class {cls} has {len(members)} captures for {len(active)} splits"
            )

    rng = random.Random(derive_seed(seed, "split"))
    remaining = {name: quota for name, quota in active}
    # representation minimum: one capture of each class per active split
    for name, _ in active:
        remaining[name] -= len(by_class)
        if remaining[name] < 0:
            raise InfeasibleStratification(
                f"split {name} holds fewer captures than there are classes"
            )

    assignment: dict[str, str] = {}
    classes = sorted(by_class)
    spare_pool = sum(remaining.values())
    for idx, cls in enumerate(classes):
        members = by_class[cls][:]
        rng.shuffle(members)
        quotas = {name: 1 for name, _ in active}
        spares = len(members) - len(active)
        # apportion the class's spare captures proportionally to the
        # remaining split capacities (largest remainder, deterministic)
        if spares:
            shares = []
            for name, _ in active:
                exact = spares * remaining[name] / spare_pool if spare_pool else 0.0
                shares.append([name, int(exact), exact - int(exact)])
            assigned = sum(s[1] for s in shares)
            shares.sort(key=lambda s: (-s[2], s[0]))
            for s in shares[: spares - assigned]:
                s[1] += 1
            for name, n, _ in shares:
                take = min(n, remaining[name])
                quotas[name] += take
                remaining[name] -= take
            leftover = spares - sum(q - 1 for q in quotas.values())
            if leftover:  # capacity-capped shares: spill deterministically
                for name, _ in active:
                    while leftover and remaining[name] > 0:
                        quotas[name] += 1
                        remaining[name] -= 1
                        leftover -= 1
        spare_pool = sum(remaining.values())
        pos = 0
        for name, _ in active:
            for _ in range(quotas[name]):
                assignment[members[pos]] = name
                pos += 1

    manifest = SplitManifest(
        assignment=assignment,
        seed=seed,
        counts={name: sum(1 for s in assignment.values() if s == name) for name, _ in active},
    )
    for name, quota in active:
        if manifest.counts.get(name, 0) != quota:
            raise DatasetError(
                f"apportionment bug: split {name} got {manifest.counts.get(name)} of {quota}"
            )
    manifest.check_disjoint()
    return manifest


def write_manifest(manifest: SplitManifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={manifest.seed}\n")
        for cid in sorted(manifest.assignment):
            fh.write(f"{cid},{manifest.assignment[cid]}\n")


def read_manifest(path: str | Path) -> dict[str, str]:
    assignment = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cid, split = line.split(",")
            assignment[cid] = split
    return assignment
