"""Command-line entry point: argument parsing, exit codes and error records."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..cohort import ManifestError
from .commands import COMMANDS, run_command
from .config import from_mapping, load_config, thread_count
from .errors import CliError, ConfigError, DataError
from .fixtures import write_synthetic_cohort

log = logging.getLogger("maskpipe")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maskpipe", description="Segmentation post-processing and evaluation pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="flat TOML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=["original", "cropped", "ar_corrected"])
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--manifest", type=Path)
        p.add_argument("--predictions", type=Path, help="directory holding snapshots.csv")
        p.add_argument("--resolutions", type=_int_list, help="e.g. 64,128,256")
        p.add_argument("--synthetic-snapshots", type=int)
        p.add_argument("--rank-by", choices=["tta", "plain"])
        if name == "split":
            p.add_argument("--in-place", action="store_true", help="rewrite the input manifest with the split")

    p = sub.add_parser("replay", help="re-run a command from its provenance file")
    p.add_argument("provenance", type=Path)
    p.add_argument("--out", type=Path, help="write to this directory instead of the recorded one")

    p = sub.add_parser("fixtures", help="write a seeded synthetic cohort")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--side", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    return parser


_OVERRIDE_KEYS = ("seed", "mode", "out", "manifest", "predictions", "resolutions", "synthetic_snapshots", "rank_by")


def _dispatch(args) -> None:
    if args.command == "fixtures":
        try:
            manifest = write_synthetic_cohort(args.out, args.count, args.side, args.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        print(manifest)
        return
    if args.command == "replay":
        try:
            record = json.loads(Path(args.provenance).read_text(encoding="utf-8"))
            command, values, opts = record["command"], dict(record["config"]), record.get("options", {})
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"unreadable provenance file {args.provenance}: {exc}") from None
        if command not in COMMANDS:
            raise ConfigError(f"provenance names unknown command {command!r}")
        if args.out is not None:
            values["out"] = str(args.out.resolve())
        cfg = from_mapping(values)
    else:
        command = args.command
        overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS}
        cfg = load_config(args.config, overrides)
        opts = {"in_place": True} if getattr(args, "in_place", False) else {}
    prov = run_command(command, cfg, thread_count(), opts)
    print(prov)


def _classify(exc: BaseException) -> CliError:
    """Nearest CLI error in the cause chain; unknown failures are internal."""
    seen = exc
    while seen is not None:
        if isinstance(seen, CliError):
            return seen
        if isinstance(seen, (ManifestError, FileNotFoundError)):
            return DataError(str(seen))
        seen = seen.__cause__
    return CliError(f"{type(exc).__name__}: {exc}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail(exc, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _dispatch(args)
    except KeyboardInterrupt:
        return _fail(CliError("interrupted"), args.command)
    except Exception as exc:
        err = _classify(exc)
        if err.exit_code == 4:
            log.debug("internal error", exc_info=exc)
        return _fail(err, args.command)
    return 0


def _fail(err: CliError, command: str | None) -> int:
    record = {"status": "error", "kind": err.kind, "exit_code": err.exit_code, "command": command, "message": str(err)}
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    return err.exit_code
