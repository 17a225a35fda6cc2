"""Command-line front end: one job per invocation.

Exit codes: 0 success, 2 usage, 3 extraction/data failure.
"""

import argparse
import logging
import sys

from .errors import ExtractError
from .extract import ExtractionJob, run_extraction
from .registry import MODEL_TABLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parrot-extract",
        description="Pool frozen-encoder hidden states into a PFV file.")
    parser.add_argument("--model", required=True,
                        help="model id (see --list-models)")
    parser.add_argument("--audio-dir", required=True,
                        help="directory the manifest paths are relative to")
    parser.add_argument("--manifest", required=True,
                        help="CSV: utterance_id,relative_path,label_name")
    parser.add_argument("--out", required=True, help="output PFV path")
    parser.add_argument("--sample-rate", type=int, default=16000,
                        help="resample target in Hz (default 16000)")
    parser.add_argument("--on-error", choices=("abort", "skip"),
                        default="abort",
                        help="what to do with undecodable audio")
    return parser


def list_models() -> str:
    lines = [f"{spec.model_id:<22} dim {spec.dim:<6} {spec.checkpoint}"
             for spec in sorted(MODEL_TABLE.values(),
                                key=lambda s: s.model_id)]
    return "\n".join(lines)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--list-models" in argv:
        print(list_models())
        return 0
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(message)s")
    job = ExtractionJob(model_id=args.model, audio_dir=args.audio_dir,
                        manifest=args.manifest, out=args.out,
                        sample_rate=args.sample_rate)
    try:
        result = run_extraction(job, on_error=args.on_error)
    except (ExtractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {result.written} rows to {args.out} "
          f"({len(result.skipped)} skipped)")
    return 0


def console_main() -> None:
    raise SystemExit(main())
