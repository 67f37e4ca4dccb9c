"""Command line entry point: ``botcorpus <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from . import enrich, language, report
from .config import validate_config
from .errors import BotCorpusError, ConfigError
from .manifest import DatasetManifest
from .pipeline import STAGES, Pipeline, read_json

log = logging.getLogger("botcorpus")

REVIEW_KINDS = ("language", "services")


def _stages(text: str | None) -> list[str] | None:
    if not text:
        return None
    return [s.strip() for s in text.split(",") if s.strip()]


def cmd_run(args: argparse.Namespace) -> int:
    pipe = Pipeline(validate_config(args.config))
    result = pipe.run(_stages(args.stages), resume=args.resume)
    print(f"executed: {', '.join(result.executed) or '-'}")
    if result.skipped:
        print(f"skipped (up to date): {', '.join(result.skipped)}")
    for line in pipe.summary():
        print(line)
    for stage, err in result.failed.items():
        print(f"FAILED {stage}: {err}", file=sys.stderr)
    return result.exit_status


def cmd_status(args: argparse.Namespace) -> int:
    for line in Pipeline(validate_config(args.config)).summary():
        print(line)
    return 0


def _review_target(cfg, kind: str) -> Path:
    return cfg.language_review_file if kind == "language" else cfg.service_review_file


def cmd_export_review(args: argparse.Namespace) -> int:
    """Write a fresh review sheet from the stage checkpoint."""
    cfg = validate_config(args.config)
    out = Path(args.out) if args.out else _review_target(cfg, args.kind)
    if args.kind == "language":
        anns = read_json(cfg.checkpoint_dir / "languages.json")["annotations"].values()
        n = language.export_language_review([language.LanguageAnnotation.from_dict(a) for a in anns], out)
    else:
        reports = [enrich.ServiceReport.from_dict(r) for r in read_json(cfg.checkpoint_dir / "enrich.json")["services"].values()]
        enrich.export_service_review(reports, out)
        n = len(reports)
    print(f"wrote {n} units to {out}")
    return 0


def cmd_import_review(args: argparse.Namespace) -> int:
    """Install a completed review sheet; the owning stage reruns on the next resume."""
    cfg = validate_config(args.config)
    target = _review_target(cfg, args.kind)
    src = Path(args.file)
    if not src.is_file():
        raise ConfigError(f"review file not found: {src}")
    target.parent.mkdir(parents=True, exist_ok=True)
    if src.resolve() != target.resolve():
        shutil.copyfile(src, target)
    pipe = Pipeline(cfg)
    pipe.state.invalidate_from("language" if args.kind == "language" else "enrich")
    pipe.state.save()
    print(f"installed {target}; run with --resume to apply it")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    """Statistics for any manifest, e.g. a published dataset converted to this schema."""
    manifest = DatasetManifest.load(args.manifest)
    cutoff = None
    if args.config:
        cutoff = validate_config(args.config).report.rasa3_release
    stats = report.compute_stats(manifest, cutoff or report.RASA3_RELEASE)
    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    out = Path(args.out or ".")
    for path in report.emit_outputs(stats, out, formats):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="botcorpus", description="Rasa chatbot corpus pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run pipeline stages")
    r.add_argument("--config", required=True)
    r.add_argument("--stages", help=f"comma-separated subset of: {','.join(STAGES)}")
    r.add_argument("--resume", action="store_true", help="skip stages that are done and up to date")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("status", help="show per-stage status")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_status)

    e = sub.add_parser("export-review", help="write a review sheet")
    e.add_argument("kind", choices=REVIEW_KINDS)
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_export_review)

    i = sub.add_parser("import-review", help="install a completed review sheet")
    i.add_argument("kind", choices=REVIEW_KINDS)
    i.add_argument("file")
    i.add_argument("--config", required=True)
    i.set_defaults(func=cmd_import_review)

    rep = sub.add_parser("report", help="statistics and plots for a manifest")
    rep.add_argument("manifest")
    rep.add_argument("--out")
    rep.add_argument("--config")
    rep.add_argument("--formats", default="csv,json,svg")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BotCorpusError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
