"""Domain-file detection and chatbot / non-chatbot repository classification."""

from __future__ import annotations

import csv
import enum
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import yaml

log = logging.getLogger(__name__)

YAML_SUFFIXES = (".yml", ".yaml")
MAX_FILE_BYTES = 5 * 1024 * 1024
# Files never mentioning the key are not domain candidates at all.
_INTENTS_TOKEN = re.compile(r"\bintents\b")
YamlLoader = getattr(yaml, "CSafeLoader", yaml.SafeLoader)


class CandidateStatus(str, enum.Enum):
    VALID = "Valid"
    SYNTACTICALLY_INVALID = "SyntacticallyInvalid"
    MISCLASSIFIED = "Misclassified"


class Verdict(str, enum.Enum):
    CHATBOT = "ChatbotRepo"
    NON_CHATBOT = "NonChatbotRepo"


@dataclass(frozen=True)
class DomainCandidate:
    repo: str
    rel_path: str
    status: CandidateStatus


def is_yaml_file(name: str) -> bool:
    return name.lower().endswith(YAML_SUFFIXES)


def iter_yaml_files(tree_root: Path) -> Iterable[Path]:
    for dirpath, dirnames, filenames in os.walk(tree_root):
        dirnames.sort()
        for fn in sorted(filenames):
            if is_yaml_file(fn):
                yield Path(dirpath) / fn


def _judge(text: str) -> CandidateStatus:
    try:
        docs = list(yaml.load_all(text, Loader=YamlLoader))
    except (yaml.YAMLError, ValueError, TypeError, RecursionError):
        # the last three come from pathological but "valid" YAML (huge anchors, bad tags)
        return CandidateStatus.SYNTACTICALLY_INVALID
    for doc in docs:
        if isinstance(doc, dict) and "intents" in doc:
            return CandidateStatus.VALID
    return CandidateStatus.MISCLASSIFIED


def find_domain_candidates(tree_root: str | Path, repo: str = "") -> list[DomainCandidate]:
    """Examine every YAML file under ``tree_root`` that mentions ``intents``.

    A file is Valid when any of its YAML documents is a mapping with a
    top-level ``intents`` key, SyntacticallyInvalid when it does not parse,
    and Misclassified otherwise (the word only occurs nested or in text).
    Unreadable and oversized files are skipped with a warning.
    """
    root = Path(tree_root)
    if not root.is_dir():
        raise FileNotFoundError(root)
    out = []
    for path in iter_yaml_files(root):
        rel = path.relative_to(root).as_posix()
        try:
            if path.stat().st_size > MAX_FILE_BYTES:
                log.warning("%s: skipping %s (larger than 5 MiB)", repo, rel)
                continue
            raw = path.read_bytes()
        except OSError as exc:
            log.warning("%s: unreadable %s: %s", repo, rel, exc)
            continue
        text = raw.decode("utf-8", errors="replace")
        if not _INTENTS_TOKEN.search(text):
            continue
        out.append(DomainCandidate(repo, rel, _judge(text)))
    out.sort(key=lambda c: c.rel_path)
    return out


def classify_repo(candidates: Iterable[DomainCandidate]) -> Verdict:
    if any(c.status is CandidateStatus.VALID for c in candidates):
        return Verdict.CHATBOT
    return Verdict.NON_CHATBOT


def write_classification_csv(path: Path, rows: dict[str, list[DomainCandidate]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["repo", "n_valid", "n_invalid", "n_misclassified", "verdict"])
        for repo_id in sorted(rows):
            cands = rows[repo_id]
            counts = {s: sum(c.status is s for c in cands) for s in CandidateStatus}
            w.writerow([
                repo_id,
                counts[CandidateStatus.VALID],
                counts[CandidateStatus.SYNTACTICALLY_INVALID],
                counts[CandidateStatus.MISCLASSIFIED],
                classify_repo(cands).value,
            ])
