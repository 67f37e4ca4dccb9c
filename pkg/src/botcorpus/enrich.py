"""External-service and topic extraction through a sampled LLM protocol.

Every service extraction issues ``samples`` identical extraction requests and
then exactly one merge request that sees the analyzed text and all sampled
answers.  The merge step is what harmonizes aliases of one service into a
single name.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import os
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any, Iterable, Mapping, Protocol, Sequence

from .errors import (
    EmptyResponse,
    LlmUnavailable,
    MalformedRow,
    TransportError,
    UnknownUnitId,
    UnparseableResponse,
)
from .http import Transport

log = logging.getLogger(__name__)

API_KEY_ENV = "OPENAI_API_KEY"
CHAT_URL = "https://api.openai.com/v1/chat/completions"


class SourceKind(str, enum.Enum):
    ACTION_CODE = "ActionCode"
    README = "Readme"

    @property
    def label(self) -> str:
        return "backend action code" if self is SourceKind.ACTION_CODE else "README file"


@dataclass(frozen=True)
class LlmConfig:
    temperature: float = 1.0
    top_p: float = 0.15
    samples: int = 10
    model_name: str = "gpt-4o"

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


class LlmClient(Protocol):
    def complete(self, prompt: str, cfg: LlmConfig, tag: str | None = None) -> str: ...


@dataclass
class OpenAIChatClient:
    """Chat-completions client; ``tag`` only addresses replay fixtures."""

    transport: Transport
    api_key: str | None = None
    url: str = CHAT_URL

    @classmethod
    def from_env(cls, transport: Transport, **kwargs: Any) -> "OpenAIChatClient":
        return cls(transport, api_key=os.environ.get(API_KEY_ENV), **kwargs)

    def complete(self, prompt: str, cfg: LlmConfig, tag: str | None = None) -> str:
        body = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self.transport.request("POST", self.url, json_body=body, headers=headers, tag=tag)
        except TransportError as exc:
            raise LlmUnavailable(str(exc)) from exc
        if not resp.ok:
            raise LlmUnavailable(f"LLM endpoint answered HTTP {resp.status}")
        try:
            return resp.body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise LlmUnavailable("malformed completion payload") from exc


# --- prompts ---------------------------------------------------------------------

def _template(name: str) -> Template:
    return Template(resources.files("botcorpus").joinpath("data/prompts", name).read_text(encoding="utf-8"))


def load_categories(path: str | Path | None = None) -> list[str]:
    if path is None:
        text = resources.files("botcorpus").joinpath("data/play_categories.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


def render_extraction_prompt(kind: SourceKind, text: str) -> str:
    return _template("extract_services.txt").substitute(kind_label=kind.label, text=text)


def render_merge_prompt(kind: SourceKind, text: str, samples: Sequence[Sequence[str]]) -> str:
    lines = [f"Answer {i}: {json.dumps(list(s), ensure_ascii=False)}" for i, s in enumerate(samples, 1)]
    return _template("merge_services.txt").substitute(
        kind_label=kind.label, text=text, samples="\n".join(lines), n_samples=len(samples)
    )


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_service_list(reply: str) -> list[str] | None:
    """Parse an LLM answer into service names; ``None`` when it is not a list."""
    text = reply.strip()
    m = _FENCE.search(text)
    if m:
        text = m.group(1).strip()
    if text.lower() in ("", "none", "[]", "n/a"):
        return []
    try:
        data = json.loads(text)
    except ValueError:
        m = re.search(r"\[.*\]", text, re.DOTALL)
        data = None
        if m:
            try:
                data = json.loads(m.group())
            except ValueError:
                data = None
        if data is None:
            bullets = [ln.strip()[2:].strip() for ln in text.splitlines() if ln.strip().startswith(("- ", "* "))]
            return bullets or None
    if not isinstance(data, list):
        return None
    out = []
    for item in data:
        if isinstance(item, str) and item.strip():
            out.append(item.strip())
        elif isinstance(item, dict) and isinstance(item.get("name"), str):
            out.append(item["name"].strip())
    return list(dict.fromkeys(out))


def extract_services(
    text: str, kind: SourceKind, client: LlmClient, cfg: LlmConfig, tag_prefix: str = ""
) -> set[str]:
    if not text.strip():
        raise ValueError("nothing to analyze")
    prompt = render_extraction_prompt(kind, text)
    samples: list[list[str]] = []
    for i in range(cfg.samples):
        parsed = parse_service_list(client.complete(prompt, cfg, tag=f"{tag_prefix}extract-{i}"))
        if parsed is None:
            log.warning("sample %d unparseable; counted as empty", i)
            parsed = []
        samples.append(parsed)
    merge = render_merge_prompt(kind, text, samples)
    merged = parse_service_list(client.complete(merge, cfg, tag=f"{tag_prefix}merge"))
    if merged is None:
        merged = parse_service_list(client.complete(merge, cfg, tag=f"{tag_prefix}merge-retry"))
    if merged is None:
        raise UnparseableResponse("merge answer is not a service list, even after one retry")
    return set(merged)


# --- prompt configuration evaluation ------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    f_score: float
    cfg: LlmConfig | None = None


def _norm(name: str) -> str:
    return " ".join(name.casefold().split())


def set_metrics(predicted: Iterable[str], truth: Iterable[str]) -> tuple[float, float, float]:
    """Precision, recall and F1 of a predicted service set.

    Empty predictions have precision 1 (nothing wrong was said); an empty
    ground truth has recall 1 (nothing could be missed).
    """
    p_set = {_norm(x) for x in predicted}
    t_set = {_norm(x) for x in truth}
    hit = len(p_set & t_set)
    precision = hit / len(p_set) if p_set else 1.0
    recall = hit / len(t_set) if t_set else 1.0
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f


def evaluate_prompt_config(
    ground_truth: Mapping[str, Iterable[str]],
    sources: Mapping[str, Sequence[tuple[SourceKind, str]]],
    cfg: LlmConfig,
    repetitions: int,
    client: LlmClient,
) -> EvalResult:
    """Average per-unit precision/recall/F1 over units and repetitions.

    ``sources`` lists, per unit, the texts to analyze; a unit's prediction is
    the union over its texts.
    """
    if not ground_truth:
        raise ValueError("ground truth is empty")
    scores = []
    for rep in range(repetitions):
        for uid in sorted(ground_truth):
            predicted: set[str] = set()
            for idx, (kind, text) in enumerate(sources.get(uid, ())):
                predicted |= extract_services(text, kind, client, cfg, tag_prefix=f"rep{rep}/src{idx}/")
            scores.append(set_metrics(predicted, ground_truth[uid]))
    n = len(scores)
    return EvalResult(
        precision=sum(s[0] for s in scores) / n,
        recall=sum(s[1] for s in scores) / n,
        f_score=sum(s[2] for s in scores) / n,
        cfg=cfg,
    )


def grid_search(
    ground_truth: Mapping[str, Iterable[str]],
    sources: Mapping[str, Sequence[tuple[SourceKind, str]]],
    client: LlmClient,
    temperatures: Sequence[float] = (0, 0.25, 0.5, 1, 1.5, 2),
    top_ps: Sequence[float] = (0.01, 0.15, 0.5, 1),
    repetitions: int = 5,
    base: LlmConfig = LlmConfig(),
) -> list[EvalResult]:
    """Evaluate every (temperature, top_p) pair; best F-score first."""
    results = [
        evaluate_prompt_config(ground_truth, sources, replace(base, temperature=t, top_p=p), repetitions, client)
        for t in temperatures
        for p in top_ps
    ]
    return sorted(results, key=lambda r: (-r.f_score, -r.precision, r.cfg.temperature, r.cfg.top_p))


# --- service review -----------------------------------------------------------------

class ReviewAction(str, enum.Enum):
    KEEP = "keep"
    REMOVE = "remove"
    DISCONTINUED = "discontinued"


@dataclass(frozen=True)
class ServiceReport:
    unit_id: str
    from_code: frozenset[str] = frozenset()
    from_readme: frozenset[str] = frozenset()
    final: frozenset[str] = frozenset()
    discontinued: frozenset[str] = frozenset()
    review_applied: bool = False
    depends_on_discontinued: bool = False
    needs_manual_review: bool = False

    @classmethod
    def extracted(cls, unit_id: str, from_code: Iterable[str], from_readme: Iterable[str],
                  needs_manual_review: bool = False) -> "ServiceReport":
        c, r = frozenset(from_code), frozenset(from_readme)
        return cls(unit_id, c, r, c | r, needs_manual_review=needs_manual_review)

    @property
    def raw_names(self) -> frozenset[str]:
        return self.from_code | self.from_readme

    def to_dict(self) -> dict[str, Any]:
        return {
            "unit_id": self.unit_id,
            "from_code": sorted(self.from_code),
            "from_readme": sorted(self.from_readme),
            "final": sorted(self.final),
            "discontinued": sorted(self.discontinued),
            "review_applied": self.review_applied,
            "depends_on_discontinued": self.depends_on_discontinued,
            "needs_manual_review": self.needs_manual_review,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ServiceReport":
        return cls(
            unit_id=d["unit_id"],
            from_code=frozenset(d["from_code"]),
            from_readme=frozenset(d["from_readme"]),
            final=frozenset(d["final"]),
            discontinued=frozenset(d["discontinued"]),
            review_applied=bool(d["review_applied"]),
            depends_on_discontinued=bool(d.get("depends_on_discontinued", False)),
            needs_manual_review=bool(d.get("needs_manual_review", False)),
        )


SERVICE_REVIEW_HEADER = ("unit_id", "raw_name", "canonical_name", "action")


@dataclass
class ServiceReview:
    rows: dict[str, dict[str, tuple[str, ReviewAction]]] = field(default_factory=dict)
    aliases: dict[str, str] = field(default_factory=dict)

    def canonical(self, name: str) -> str:
        seen = set()
        while name in self.aliases and name not in seen and self.aliases[name] != name:
            seen.add(name)
            name = self.aliases[name]
        return name


def export_service_review(reports: Iterable[ServiceReport], review_file: Path) -> None:
    review_file.parent.mkdir(parents=True, exist_ok=True)
    with open(review_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERVICE_REVIEW_HEADER)
        for r in sorted(reports, key=lambda r: r.unit_id):
            for raw in sorted(r.raw_names):
                w.writerow([r.unit_id, raw, raw, ReviewAction.KEEP.value])


def read_service_review(review_file: Path, known: Iterable[str]) -> ServiceReview:
    known = set(known)
    review = ServiceReview()
    with open(review_file, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SERVICE_REVIEW_HEADER:
            raise MalformedRow(1, f"expected header {','.join(SERVICE_REVIEW_HEADER)}")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SERVICE_REVIEW_HEADER):
                raise MalformedRow(rowno, f"expected {len(SERVICE_REVIEW_HEADER)} columns, got {len(row)}")
            uid, raw, canonical, action = (c.strip() for c in row)
            if uid not in known:
                raise UnknownUnitId(uid, rowno)
            if not raw or not canonical:
                raise MalformedRow(rowno, "raw_name and canonical_name are required")
            try:
                act = ReviewAction(action)
            except ValueError:
                raise MalformedRow(rowno, f"unknown action {action!r}") from None
            review.rows.setdefault(uid, {})[raw] = (canonical, act)
            if raw != canonical:
                review.aliases[raw] = canonical
    return review


def apply_service_review(
    reports: list[ServiceReport], review_file: str | Path, aliases_file: str | Path | None = None
) -> list[ServiceReport]:
    """Apply (or request) the manual service review.

    Rows rename services (the alias table is shared by all units), remove
    invalid ones and mark discontinued ones.  A unit depends on discontinued
    services when it has services and every one of them is discontinued;
    discontinued names are listed separately and dropped from ``final``.
    """
    review_file = Path(review_file)
    if not review_file.exists():
        export_service_review(reports, review_file)
        log.info("exported %d units for service review to %s", len(reports), review_file)
        return list(reports)
    review = read_service_review(review_file, (r.unit_id for r in reports))
    if aliases_file is not None:
        Path(aliases_file).write_text(
            json.dumps(dict(sorted(review.aliases.items())), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    out = []
    for r in reports:
        rows = review.rows.get(r.unit_id, {})
        kept: set[str] = set()
        dead: set[str] = set()
        for raw in sorted(r.raw_names | set(rows)):
            canonical, act = rows.get(raw, (review.canonical(raw), ReviewAction.KEEP))
            canonical = review.canonical(canonical)
            if act is ReviewAction.KEEP:
                kept.add(canonical)
            elif act is ReviewAction.DISCONTINUED:
                dead.add(canonical)
        before = kept | dead
        depends = bool(dead) and before <= dead
        out.append(replace(
            r,
            final=frozenset(before - dead),
            discontinued=frozenset(dead),
            review_applied=True,
            depends_on_discontinued=depends,
        ))
    return out


# --- topics ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TopicResult:
    topic: str | None
    novel: bool = False
    needs_manual_review: bool = False


@dataclass(frozen=True)
class TopicInput:
    repo_name: str
    description: str
    readmes: Sequence[str]
    intents: Sequence[str]
    entities: Sequence[str]
    slots: Sequence[str]
    actions: Sequence[str]


def render_topic_prompt(unit: TopicInput, categories: Sequence[str]) -> str:
    return _template("topic.txt").substitute(
        repo_name=unit.repo_name,
        description=unit.description or "(none)",
        intents=", ".join(unit.intents) or "(none)",
        entities=", ".join(unit.entities) or "(none)",
        slots=", ".join(unit.slots) or "(none)",
        actions=", ".join(unit.actions) or "(none)",
        readmes="\n\n".join(unit.readmes) or "(none)",
        categories="\n".join(categories),
    )


def _clean_topic(reply: str) -> str:
    text = reply.strip().splitlines()[0] if reply.strip() else ""
    if ":" in text and text.split(":", 1)[0].strip().lower() in ("category", "topic"):
        text = text.split(":", 1)[1]
    return text.strip().strip("\"'`*").rstrip(".").strip()


def extract_topic(unit: TopicInput, categories: Sequence[str], client: LlmClient, cfg: LlmConfig) -> TopicResult:
    prompt = render_topic_prompt(unit, categories)
    topic = _clean_topic(client.complete(prompt, cfg, tag="topic"))
    if not topic:
        topic = _clean_topic(client.complete(prompt, cfg, tag="topic-retry"))
    if not topic:
        raise EmptyResponse("topic answer empty, even after one retry")
    by_fold = {c.casefold(): c for c in categories}
    if topic.casefold() in by_fold:
        return TopicResult(by_fold[topic.casefold()], novel=False)
    return TopicResult(topic, novel=True)
