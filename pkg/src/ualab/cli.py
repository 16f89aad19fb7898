"""Command-line entry point orchestrating the pipeline stages."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import capture as capio
from . import dataset as ds
from . import pipeline
from .flow import extract_flow_windows
from .synth import InvalidConfig, InvalidSpec, OffsetOutOfRange

EXIT_BAD_ARGS = 2
EXIT_DATA_ERROR = 3
EXIT_INTERNAL = 4

DATA_ERRORS = (
    capio.CaptureError,
    ds.DatasetError,
    InvalidConfig,
    InvalidSpec,
    OffsetOutOfRange,
    FileNotFoundError,
    OSError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ualab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", type=Path, default=Path("runs/out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="pipeline seed (or $PIPELINE_SEED)")
        p.add_argument("--jobs", type=int, default=None, help="parallel capture workers (default: cores)")

    p = sub.add_parser("synth", help="build the capture corpus")
    common(p)
    p.add_argument("--spec", default="paper-grid", help="scenario spec file or 'paper-grid'")
    p.add_argument("--scale", type=float, default=1.0, help="duration scale factor in (0, 1]")
    p.add_argument("--payload-enc", choices=("hex", "b64"), default="hex",
                   help="payload encoding in event files")

    p = sub.add_parser("extract", help="captures -> window features")
    common(p)
    p.add_argument("--in", dest="input", type=Path, default=None,
                   help="single capture (.pcap or .jsonl) instead of the corpus")

    p = sub.add_parser("label", help="attach window labels from ground truth")
    common(p)

    p = sub.add_parser("split", help="assign captures to train/val/test")
    common(p)
    p.add_argument("--counts", default=None, help="train,val,test capture counts")

    p = sub.add_parser("dataset", help="synth + extract + label + split + emit")
    common(p)
    p.add_argument("--spec", default="paper-grid")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--counts", default=None)
    p.add_argument("--payload-enc", choices=("hex", "b64"), default="hex",
                   help="payload encoding in event files")

    p = sub.add_parser("diag", help="print per-capture extraction diagnostics")
    common(p)
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PIPELINE_SEED")
    if env is not None:
        return int(env)
    return 0


def _counts(args, n_captures: int) -> tuple[int, int, int]:
    if args.counts:
        parts = tuple(int(v) for v in args.counts.split(","))
        if len(parts) != 3:
            raise ds.DatasetError("--counts needs train,val,test")
        return parts
    test = max(round(n_captures * 20 / 91), 1)
    val = max(round(n_captures * 10 / 91), 1)
    return (n_captures - val - test, val, test)


def _extract_single(path: Path, out: Path) -> None:
    if path.suffix == ".pcap":
        records = list(capio.read_capture(path))
    else:
        records = [ev.record for ev in capio.read_events(path)]
    windows, diags, _ = extract_flow_windows(iter(records))
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{path.stem}.features.csv"
    pipeline.write_feature_csv(pipeline.window_vectors(windows), target)
    print(f"wrote {target} ({len(records)} packets, {len(windows)} windows)")


def run(args) -> int:
    seed = _seed(args)
    if args.command == "synth":
        spec = pipeline.load_spec(args.spec)
        rows = pipeline.synth_corpus(spec, seed, args.scale, args.out, args.jobs, args.payload_enc)
        print(f"wrote {len(rows)} captures under {args.out}")
    elif args.command == "extract":
        if args.input is not None:
            _extract_single(args.input, args.out)
        else:
            lines = pipeline.extract_corpus(args.out, args.jobs)
            print(f"extracted {len(lines)} captures")
    elif args.command == "label":
        counts = pipeline.label_corpus(args.out, args.jobs)
        print(f"labeled {sum(counts.values())} windows in {len(counts)} captures")
    elif args.command == "split":
        entries = pipeline.read_corpus_manifest(args.out)
        manifest = pipeline.split_corpus(args.out, _counts(args, len(entries)), seed)
        print(f"split: {manifest.counts}")
    elif args.command == "dataset":
        spec = pipeline.load_spec(args.spec)
        counts_arg = _counts(args, 0) if args.counts else None
        written = pipeline.run_dataset(
            spec, seed, args.scale, args.out, counts_arg, args.jobs, args.payload_enc
        )
        print(f"dataset rows: {written}")
    elif args.command == "diag":
        diag_path = args.out / "diagnostics.txt"
        if not diag_path.exists():
            pipeline.extract_corpus(args.out, args.jobs)
        sys.stdout.write(diag_path.read_text(encoding="utf-8"))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except DATA_ERRORS as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    except Exception as exc:  # invariant violation or bug
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
