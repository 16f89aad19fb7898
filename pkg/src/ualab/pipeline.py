"""End-to-end pipeline stages over a corpus directory.

Layout under the output directory:

    corpus_manifest.csv          capture inventory (id, scenario, param, ...)
    events/<capture_id>.jsonl    labeled event streams (ground truth)
    pcap/<capture_id>.pcap       interoperable captures
    features/<capture_id>.csv    unlabeled window features
    labeled/<capture_id>.csv     labeled window rows
    split_manifest.txt           capture -> split assignment
    train.csv / val.csv / test.csv
    diagnostics.txt              per-capture extraction diagnostics

Stages are deterministic and composable: running synth/extract/label/split
separately equals one combined run.
"""

from __future__ import annotations

import csv
import multiprocessing
import os
from dataclasses import dataclass
from pathlib import Path

from . import capture as capio
from . import dataset as ds
from .flow import extract_flow_windows
from .synth import CorpusSpec, PAPER_GRID, Scenario, generate_capture, plan_corpus
from .windows import FEATURE_COLUMNS, aggregate, zero_vector


@dataclass(frozen=True)
class CorpusPaths:
    root: Path

    @property
    def manifest(self) -> Path:
        return self.root / "corpus_manifest.csv"

    @property
    def split_manifest(self) -> Path:
        return self.root / "split_manifest.txt"

    def events(self, capture_id: str) -> Path:
        return self.root / "events" / f"{capture_id}.jsonl"

    def pcap(self, capture_id: str) -> Path:
        return self.root / "pcap" / f"{capture_id}.pcap"

    def features(self, capture_id: str) -> Path:
        return self.root / "features" / f"{capture_id}.csv"

    def labeled(self, capture_id: str) -> Path:
        return self.root / "labeled" / f"{capture_id}.csv"

    def split_csv(self, split: str) -> Path:
        return self.root / f"{split}.csv"


def _jobs(jobs: int | None) -> int:
    if jobs is not None and jobs > 0:
        return jobs
    return os.cpu_count() or 1


def _run_parallel(fn, items, jobs):
    n = min(_jobs(jobs), max(len(items), 1))
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with multiprocessing.Pool(n) as pool:
        return pool.map(fn, items)


# --- synth stage ---------------------------------------------------------------

_SYNTH_CTX: dict = {}


def _synth_one(plan) -> dict:
    paths: CorpusPaths = _SYNTH_CTX["paths"]
    spec: CorpusSpec = _SYNTH_CTX["spec"]
    scale: float = _SYNTH_CTX["scale"]
    events = generate_capture(plan, spec, scale)
    capio.write_events(
        paths.events(plan.capture_id),
        plan.capture_id,
        events,
        payload_encoding=_SYNTH_CTX["payload_encoding"],
    )
    capio.write_capture(paths.pcap(plan.capture_id), (ev.record for ev in events))
    return {
        "capture_id": plan.capture_id,
        "scenario": plan.scenario.label,
        "param": "" if plan.param is None else str(plan.param),
        "duration_s": plan.capture_duration_s * scale,
        "seed": plan.seed,
        "events": str(paths.events(plan.capture_id).relative_to(paths.root)),
        "pcap": str(paths.pcap(plan.capture_id).relative_to(paths.root)),
        "packets": len(events),
    }


def synth_corpus(
    spec: CorpusSpec,
    seed: int,
    scale: float,
    out: Path,
    jobs: int | None = None,
    payload_encoding: str = "hex",
) -> list[dict]:
    paths = CorpusPaths(out)
    (out / "events").mkdir(parents=True, exist_ok=True)
    (out / "pcap").mkdir(parents=True, exist_ok=True)
    plans = plan_corpus(spec, seed)
    _SYNTH_CTX.update(paths=paths, spec=spec, scale=scale, payload_encoding=payload_encoding)
    rows = _run_parallel(_synth_one, plans, jobs)
    rows.sort(key=lambda r: r["capture_id"])
    with open(paths.manifest, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["capture_id", "scenario", "param", "duration_s", "seed", "events", "pcap", "packets"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return rows


def read_corpus_manifest(out: Path) -> list[dict]:
    paths = CorpusPaths(out)
    with open(paths.manifest, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# --- extract stage -------------------------------------------------------------


def extract_capture_events(events_path: Path):
    """Window features and diagnostics for one event-stream capture."""
    events = list(capio.read_events(events_path))
    windows, diags, _ = extract_flow_windows(ev.record for ev in events)
    return events, windows, diags


def window_vectors(windows, window_us: int = 5_000_000):
    vectors = []
    for wid in sorted(windows):
        start_s = wid * window_us / 1e6
        stats = windows[wid]
        vec = aggregate(stats, window_id=wid, window_start=start_s) if stats else zero_vector(wid, start_s)
        vectors.append(vec)
    return vectors


def write_feature_csv(vectors, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("window_id", "window_start") + FEATURE_COLUMNS)
        for vec in vectors:
            row = [vec.window_id, ds._format_value(vec.window_start)]
            row += [ds._format_value(vec.values[c]) for c in FEATURE_COLUMNS]
            writer.writerow(row)


_STAGE_CTX: dict = {}


def _extract_one(entry: dict) -> tuple[str, str]:
    paths: CorpusPaths = _STAGE_CTX["paths"]
    cid = entry["capture_id"]
    events, windows, diags = extract_capture_events(paths.events(cid))
    write_feature_csv(window_vectors(windows), paths.features(cid))
    diag_line = (
        f"{cid}: packets={len(events)} windows={len(windows)} "
        f"unmatched_responses={diags.unmatched_responses} "
        f"expired_pending={diags.expired_pending} "
        f"duplicate_request_ids={diags.duplicate_request_ids} "
        f"evicted_flows={diags.evicted_flows} malformed_frames={diags.malformed_frames} "
        f"dropped_segments={diags.dropped_segments}"
    )
    return cid, diag_line


def extract_corpus(out: Path, jobs: int | None = None) -> list[str]:
    paths = CorpusPaths(out)
    (out / "features").mkdir(parents=True, exist_ok=True)
    entries = read_corpus_manifest(out)
    _STAGE_CTX.update(paths=paths)
    results = _run_parallel(_extract_one, entries, jobs)
    results.sort(key=lambda r: r[0])
    lines = [line for _, line in results]
    (out / "diagnostics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return lines


def _label_one(entry: dict) -> tuple[str, int]:
    paths: CorpusPaths = _STAGE_CTX["paths"]
    cid = entry["capture_id"]
    events, windows, _ = extract_capture_events(paths.events(cid))
    rows = ds.label_windows(cid, windows, events)
    ds.emit_csv(rows, paths.labeled(cid))
    return cid, len(rows)


def label_corpus(out: Path, jobs: int | None = None) -> dict[str, int]:
    paths = CorpusPaths(out)
    (out / "labeled").mkdir(parents=True, exist_ok=True)
    entries = read_corpus_manifest(out)
    _STAGE_CTX.update(paths=paths)
    results = _run_parallel(_label_one, entries, jobs)
    return dict(sorted(results))


# --- split and final emission ----------------------------------------------------


def split_corpus(out: Path, counts: tuple[int, int, int], seed: int) -> ds.SplitManifest:
    entries = read_corpus_manifest(out)
    scenarios = {e["capture_id"]: e["scenario"] for e in entries}
    manifest = ds.split_captures(scenarios, counts, seed)
    ds.write_manifest(manifest, CorpusPaths(out).split_manifest)
    return manifest


def emit_split_datasets(out: Path) -> dict[str, int]:
    """Concatenate per-capture labeled rows into train/val/test CSVs."""
    paths = CorpusPaths(out)
    assignment = ds.read_manifest(paths.split_manifest)
    counts = {}
    for split in ds.SPLITS:
        captures = sorted(cid for cid, s in assignment.items() if s == split)
        rows = []
        for cid in captures:
            rows.extend(ds.load_csv(paths.labeled(cid)))
        counts[split] = ds.emit_csv(rows, paths.split_csv(split))
    return counts


def run_dataset(
    spec: CorpusSpec,
    seed: int,
    scale: float,
    out: Path,
    counts: tuple[int, int, int] | None = None,
    jobs: int | None = None,
    payload_encoding: str = "hex",
) -> dict[str, int]:
    """synth + extract + label + split + emit, i.e. the full pipeline."""
    out.mkdir(parents=True, exist_ok=True)
    manifest_rows = synth_corpus(spec, seed, scale, out, jobs, payload_encoding)
    extract_corpus(out, jobs)
    label_corpus(out, jobs)
    if counts is None:
        n = len(manifest_rows)
        test = max(round(n * 20 / 91), 1)
        val = max(round(n * 10 / 91), 1)
        counts = (n - val - test, val, test)
    split_corpus(out, counts, seed)
    return emit_split_datasets(out)


def load_spec(name_or_path: str) -> CorpusSpec:
    """Builtin `paper-grid` or a scenario spec file (key-value blocks)."""
    if name_or_path == "paper-grid":
        return PAPER_GRID
    import configparser

    parser = configparser.ConfigParser()
    read = parser.read(name_or_path)
    if not read:
        raise FileNotFoundError(name_or_path)
    spec = CorpusSpec(attacks={})
    if parser.has_section("corpus"):
        sec = parser["corpus"]
        spec.benign_count = sec.getint("benign_count", spec.benign_count)
        spec.benign_duration_s = sec.getfloat("benign_duration_s", spec.benign_duration_s)
        if "attack_durations_s" in sec:
            spec.attack_durations_s = tuple(
                float(v.strip()) for v in sec["attack_durations_s"].split(",")
            )
        spec.warmup_s = sec.getfloat("warmup_s", spec.warmup_s)
        spec.recovery_s = sec.getfloat("recovery_s", spec.recovery_s)
    for section in parser.sections():
        if not section.startswith("attack."):
            continue
        label = section.split(".", 1)[1]
        scenario = Scenario(label)
        params = tuple(int(v.strip()) for v in parser[section]["params"].split(","))
        spec.attacks[scenario] = params
    spec.validate()
    return spec
