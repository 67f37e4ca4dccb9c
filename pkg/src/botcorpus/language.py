"""Training / response language annotation with a pluggable detector and manual review."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

import yaml

from .domain import DomainModel, YamlLoader
from .errors import DetectorUnavailable, MalformedRow, NoTrainingData, TransportError, UnknownUnitId
from .extract import ChatbotUnit, _walk_unit
from .http import Transport

log = logging.getLogger(__name__)

DEFAULT_INTENTS = ("nlu_fallback", "out_of_scope", "restart", "back", "session_start")
API_KEY_ENV = "DETECTLANGUAGE_API_KEY"
DETECT_URL = "https://ws.detectlanguage.com/0.2/detect"
_LANG_CODE = re.compile(r"^[a-z]{2,3}(-[A-Za-z]{2,4})?$")
_ENTITY_MARKUP = re.compile(r"\[([^\]]+)\](?:\([^)]*\)|\{[^}]*\})")
_MD_INTENT = re.compile(r"^##\s*intent\s*:\s*(\S+)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class LanguageAnnotation:
    unit_id: str
    training_langs: frozenset[str] = frozenset()
    response_langs: frozenset[str] = frozenset()
    overall: frozenset[str] = frozenset()
    needs_review: bool = False
    reviewed: bool = False
    discard: bool = False

    @classmethod
    def detected(cls, unit_id: str, training: Iterable[str], response: Iterable[str],
                 discard: bool = False) -> "LanguageAnnotation":
        t, r = frozenset(training), frozenset(response)
        overall = t | r
        return cls(unit_id, t, r, overall, needs_review=len(overall) > 1, discard=discard)

    def to_dict(self) -> dict[str, Any]:
        return {
            "unit_id": self.unit_id,
            "training_langs": sorted(self.training_langs),
            "response_langs": sorted(self.response_langs),
            "overall": sorted(self.overall),
            "needs_review": self.needs_review,
            "reviewed": self.reviewed,
            "discard": self.discard,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LanguageAnnotation":
        return cls(
            unit_id=d["unit_id"],
            training_langs=frozenset(d["training_langs"]),
            response_langs=frozenset(d["response_langs"]),
            overall=frozenset(d["overall"]),
            needs_review=bool(d["needs_review"]),
            reviewed=bool(d["reviewed"]),
            discard=bool(d.get("discard", False)),
        )


def unit_seed(base_seed: int, unit_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{unit_id}".encode()).hexdigest()
    return int(digest[:12], 16)


# --- training data discovery ---------------------------------------------------

def strip_entity_markup(text: str) -> str:
    return _ENTITY_MARKUP.sub(r"\1", text).strip()


def _examples_block(value: Any) -> list[str]:
    if isinstance(value, list):
        return [str(v) for v in value if isinstance(v, (str, int, float))]
    if not isinstance(value, str):
        return []
    out = []
    for line in value.splitlines():
        s = line.strip()
        if s.startswith("- "):
            out.append(s[2:])
    return out


def _yaml_nlu(text: str) -> dict[str, list[str]]:
    found: dict[str, list[str]] = {}
    try:
        docs = list(yaml.load_all(text, Loader=YamlLoader))
    except (yaml.YAMLError, ValueError):
        return found
    for doc in docs:
        if not isinstance(doc, dict) or not isinstance(doc.get("nlu"), list):
            continue
        for block in doc["nlu"]:
            if isinstance(block, dict) and isinstance(block.get("intent"), str):
                found.setdefault(block["intent"], []).extend(_examples_block(block.get("examples")))
    return found


def _markdown_nlu(text: str) -> dict[str, list[str]]:
    found: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        m = _MD_INTENT.match(line.strip())
        if m:
            current = m.group(1)
            found.setdefault(current, [])
        elif line.strip().startswith("##"):
            current = None
        elif current and line.strip().startswith("- "):
            found[current].append(line.strip()[2:])
    return found


def _json_nlu(text: str) -> dict[str, list[str]]:
    try:
        data = json.loads(text)
    except ValueError:
        return {}
    found: dict[str, list[str]] = {}
    examples = ((data or {}).get("rasa_nlu_data") or {}).get("common_examples") if isinstance(data, dict) else None
    for ex in examples or []:
        if isinstance(ex, dict) and isinstance(ex.get("intent"), str) and isinstance(ex.get("text"), str):
            found.setdefault(ex["intent"], []).append(ex["text"])
    return found


def collect_training_examples(
    tree_root: str | Path, unit: ChatbotUnit, nested_folders: Iterable[str] = ()
) -> dict[str, list[str]]:
    """Map intent name to its example phrases across the unit's NLU files.

    Recognized sources: YAML files with a top-level ``nlu`` list, Markdown
    files with ``## intent:<name>`` headers and Rasa 1.x JSON training data.
    """
    root = Path(tree_root)
    merged: dict[str, list[str]] = {}
    for rel in _walk_unit(root, unit.folder, nested_folders):
        low = rel.lower()
        if low.endswith((".yml", ".yaml")):
            parser = _yaml_nlu
        elif low.endswith(".md"):
            parser = _markdown_nlu
        elif low.endswith(".json"):
            parser = _json_nlu
        else:
            continue
        try:
            text = (root / rel).read_text(encoding="utf-8", errors="replace")
        except OSError:
            continue
        if parser is _yaml_nlu and "nlu" not in text:
            continue
        for intent, phrases in parser(text).items():
            bucket = merged.setdefault(intent, [])
            bucket.extend(strip_entity_markup(p) for p in phrases if strip_entity_markup(p))
    return merged


def _pick_two(rng: random.Random, names: Sequence[str]) -> list[str]:
    pool = sorted(names)
    return sorted(rng.sample(pool, min(2, len(pool))))


def sample_training_phrases(
    examples: dict[str, list[str]], seed: int, default_intents: Iterable[str] = DEFAULT_INTENTS
) -> list[str]:
    """Phrases of two non-default intents drawn with a seeded generator.

    ``examples`` comes from :func:`collect_training_examples`.
    """
    deny = set(default_intents)
    eligible = [i for i, ph in examples.items() if ph and i not in deny]
    if not eligible:
        raise NoTrainingData("no non-default intent carries example phrases")
    picks = _pick_two(random.Random(seed), eligible)
    return [p for i in picks for p in examples[i]]


def sample_response_texts(model: DomainModel, seed: int) -> list[str]:
    eligible = [k for k, texts in model.responses.items() if texts]
    if not eligible:
        return []
    picks = _pick_two(random.Random(seed), eligible)
    return [t for k in picks for t in model.responses[k]]


# --- detection -------------------------------------------------------------------

class DetectorClient(Protocol):
    batch_size: int

    def detect_batch(self, texts: Sequence[str]) -> list[set[str]]: ...


@dataclass
class DetectLanguageClient:
    """Client for a detectlanguage.com-compatible batch endpoint."""

    transport: Transport
    api_key: str | None = None
    url: str = DETECT_URL
    batch_size: int = 50

    @classmethod
    def from_env(cls, transport: Transport, **kwargs: Any) -> "DetectLanguageClient":
        return cls(transport, api_key=os.environ.get(API_KEY_ENV), **kwargs)

    def detect_batch(self, texts: Sequence[str]) -> list[set[str]]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self.transport.request("POST", self.url, json_body={"q": list(texts)}, headers=headers)
        except TransportError as exc:
            raise DetectorUnavailable(str(exc)) from exc
        if not resp.ok:
            raise DetectorUnavailable(f"detector answered HTTP {resp.status}")
        detections = ((resp.body or {}).get("data") or {}).get("detections")
        if not isinstance(detections, list) or len(detections) != len(texts):
            raise DetectorUnavailable("detector response does not match the request batch")
        out = []
        for cands in detections:
            reliable = {c["language"] for c in cands if c.get("isReliable")}
            if not reliable and cands:
                reliable = {cands[0]["language"]}
            out.append(reliable)
        return out


def detect_languages(texts: Sequence[str], client: DetectorClient) -> set[str]:
    unique = list(dict.fromkeys(t for t in texts if t.strip()))
    langs: set[str] = set()
    size = max(1, client.batch_size)
    for start in range(0, len(unique), size):
        for found in client.detect_batch(unique[start:start + size]):
            langs |= found
    return langs


# --- review ----------------------------------------------------------------------

REVIEW_HEADER = ("unit_id", "proposed_langs", "corrected_langs")


def _langs(cell: str, row: int) -> frozenset[str]:
    codes = frozenset(cell.split())
    bad = [c for c in codes if not _LANG_CODE.match(c)]
    if bad:
        raise MalformedRow(row, f"invalid language codes {bad}")
    return codes


def export_language_review(annotations: Iterable[LanguageAnnotation], review_file: Path) -> int:
    rows = sorted((a for a in annotations if a.needs_review), key=lambda a: a.unit_id)
    review_file.parent.mkdir(parents=True, exist_ok=True)
    with open(review_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REVIEW_HEADER)
        for a in rows:
            w.writerow([a.unit_id, " ".join(sorted(a.overall)), ""])
    return len(rows)


def read_language_review(
    review_file: Path, known: Iterable[str]
) -> dict[str, tuple[frozenset[str], int]]:
    """Corrections keyed by unit id, each with the CSV row it came from."""
    known = set(known)
    corrections: dict[str, tuple[frozenset[str], int]] = {}
    with open(review_file, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != REVIEW_HEADER:
            raise MalformedRow(1, f"expected header {','.join(REVIEW_HEADER)}")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(REVIEW_HEADER):
                raise MalformedRow(rowno, f"expected {len(REVIEW_HEADER)} columns, got {len(row)}")
            uid = row[0].strip()
            if uid not in known:
                raise UnknownUnitId(uid, rowno)
            corrected = row[2].strip()
            if corrected:
                corrections[uid] = (_langs(corrected, rowno), rowno)
    return corrections


def apply_review(annotations: list[LanguageAnnotation], review_file: str | Path) -> list[LanguageAnnotation]:
    """Apply (or request) the manual language review.

    Without a review file, the multi-language units are exported to it and
    the annotations are returned unchanged.  With one, each row carrying a
    correction replaces ``overall``; a reviewer may only drop detected
    languages, never add new ones.
    """
    review_file = Path(review_file)
    if not review_file.exists():
        n = export_language_review(annotations, review_file)
        log.info("exported %d units for language review to %s", n, review_file)
        return list(annotations)
    by_id = {a.unit_id: a for a in annotations}
    corrections = read_language_review(review_file, by_id)
    out = []
    for a in annotations:
        if a.unit_id not in corrections:
            out.append(a)
            continue
        fix, rowno = corrections[a.unit_id]
        if not fix <= (a.training_langs | a.response_langs):
            raise MalformedRow(rowno, f"review adds undetected languages {sorted(fix - a.overall)}")
        out.append(replace(a, overall=fix, reviewed=True))
    return out
