"""Stage orchestration with file checkpoints and resumable state.

Every stage reads its inputs from the checkpoint files of earlier stages and
writes its own as plain JSON/CSV, so a run can stop after any stage, be
inspected or hand-edited, and resume.  ``state.json`` records each stage's
status, counts and a fingerprint of the settings (and review files) it ran
with; a changed fingerprint makes the stage and everything after it stale.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path, PurePosixPath
from typing import Any, Callable, Iterable, Sequence, TypeVar

from . import classify, curate, dedup, domain, enrich, extract, harvest, language, report
from .config import PipelineConfig, validate_config
from .errors import (
    BotCorpusError,
    ConfigError,
    DetectorUnavailable,
    EmptyResponse,
    FetchFailed,
    LlmUnavailable,
    NoTrainingData,
    NotFound,
    SemanticError,
    StageFailed,
    UnparseableResponse,
)
from .http import LiveTransport, ReplayTransport, Transport
from .manifest import DatasetManifest

log = logging.getLogger(__name__)

STAGES = ("harvest", "classify", "extract", "domain", "language", "dedup", "curate", "enrich", "report")
TOFU_NAME = "TOFU-R"
BRASATO_NAME = "BRASATO"
STATE_FILE = "state.json"

T = TypeVar("T")
R = TypeVar("R")


class Status(str, enum.Enum):
    PENDING = "Pending"
    DONE = "Done"
    FAILED = "Failed"


# --- small file helpers ---------------------------------------------------------

def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: Path, obj: Any) -> None:
    """Atomic write: a crash never leaves a half-written checkpoint behind."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(_dump(obj))
    os.replace(tmp, path)


def read_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def _file_digest(path: Path | None) -> str | None:
    if path is None or not path.is_file():
        return None
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _pmap(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    """Ordered parallel map; the first exception (in input order) propagates."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- state -------------------------------------------------------------------------

@dataclass
class StageRecord:
    status: Status = Status.PENDING
    fingerprint: str | None = None
    counts: dict[str, int] = field(default_factory=dict)
    error: str | None = None


@dataclass
class PipelineState:
    checkpoint_dir: Path
    stages: dict[str, StageRecord] = field(default_factory=lambda: {s: StageRecord() for s in STAGES})

    @property
    def path(self) -> Path:
        return self.checkpoint_dir / STATE_FILE

    @property
    def stage_status(self) -> dict[str, Status]:
        return {s: r.status for s, r in self.stages.items()}

    @classmethod
    def load(cls, checkpoint_dir: Path) -> "PipelineState":
        state = cls(checkpoint_dir)
        if state.path.is_file():
            for name, rec in read_json(state.path).get("stages", {}).items():
                if name in state.stages:
                    state.stages[name] = StageRecord(
                        Status(rec["status"]), rec.get("fingerprint"), dict(rec.get("counts") or {}), rec.get("error")
                    )
        return state

    def save(self) -> None:
        write_json(self.path, {"stages": {
            s: {"status": r.status.value, "fingerprint": r.fingerprint, "counts": r.counts, "error": r.error}
            for s, r in self.stages.items()
        }})

    def invalidate_from(self, stage: str) -> None:
        for s in STAGES[STAGES.index(stage):]:
            self.stages[s] = StageRecord()


def stage_inputs(cfg: PipelineConfig, stage: str) -> dict[str, Any]:
    """The settings a stage's output depends on (parallelism never matters)."""
    if stage == "harvest":
        return {"harvest": cfg.section("harvest")}
    if stage == "language":
        lang = cfg.section("language")
        lang.pop("review_file")
        return {"language": lang, "review": _file_digest(cfg.language_review_file)}
    if stage == "dedup":
        return {"dedup": cfg.section("dedup")}
    if stage == "enrich":
        return {
            "llm": cfg.section("llm"),
            "categories": _file_digest(cfg.enrich.categories_file),
            "review": _file_digest(cfg.service_review_file),
        }
    if stage == "report":
        return {"report": cfg.section("report")}
    return {}


def fingerprints(cfg: PipelineConfig) -> dict[str, str]:
    """Chained fingerprints: a stage's value covers its own inputs and every upstream one."""
    out: dict[str, str] = {}
    prev = ""
    for stage in STAGES:
        blob = json.dumps({"stage": stage, "prev": prev, "inputs": stage_inputs(cfg, stage)}, sort_keys=True)
        prev = out[stage] = hashlib.sha256(blob.encode()).hexdigest()[:16]
    return out


# --- stage context ---------------------------------------------------------------

class Context:
    """Paths, clients and checkpoint I/O shared by the stage functions."""

    def __init__(self, cfg: PipelineConfig, transport: Transport | None = None) -> None:
        self.cfg = cfg
        self.ckpt = cfg.checkpoint_dir
        self._transport = transport

    @property
    def replay(self) -> bool:
        return self.cfg.mode == "replay"

    @property
    def transport(self) -> Transport:
        if self._transport is None:
            self._transport = ReplayTransport(self.cfg.fixtures) if self.replay else LiveTransport()
        return self._transport

    def github(self) -> harvest.GitHubClient:
        # a fresh client per task; clients are not shared across threads
        kwargs: dict[str, Any] = {"api_url": self.cfg.harvest.api_url}
        if self.replay:
            kwargs["sleep"] = lambda _s: None
        return harvest.GitHubClient.from_env(self.transport, live=not self.replay, **kwargs)

    def detector(self) -> language.DetectLanguageClient:
        return language.DetectLanguageClient.from_env(self.transport, batch_size=self.cfg.language.batch_size)

    def llm(self) -> enrich.OpenAIChatClient:
        return enrich.OpenAIChatClient.from_env(self.transport)

    def llm_config(self) -> enrich.LlmConfig:
        s = self.cfg.llm
        return enrich.LlmConfig(temperature=s.temperature, top_p=s.top_p, samples=s.samples, model_name=s.model_name)

    def path(self, name: str) -> Path:
        return self.ckpt / name

    def load(self, name: str) -> Any:
        return read_json(self.path(name))

    def save(self, name: str, obj: Any) -> None:
        write_json(self.path(name), obj)

    # checkpoint views used by several stages

    def repos(self) -> dict[str, harvest.RepoRecord]:
        recs = (harvest.RepoRecord.from_dict(d) for d in self.load("harvest.json")["repos"])
        return {r.id: r for r in recs}

    def tree(self, repo: harvest.RepoRecord) -> Path:
        return harvest.tree_path(repo, self.cfg.cache_dir)

    def units(self) -> dict[str, extract.ChatbotUnit]:
        return {d["id"]: extract.ChatbotUnit.from_dict(d) for d in self.load("units.json")}

    def models(self) -> dict[str, domain.DomainModel]:
        return {uid: domain.DomainModel.from_dict(d["model"]) for uid, d in self.load("domains.json")["models"].items()}

    def annotations(self) -> dict[str, language.LanguageAnnotation]:
        return {
            uid: language.LanguageAnnotation.from_dict(d)
            for uid, d in self.load("languages.json")["annotations"].items()
        }


def _nested_folders(unit: extract.ChatbotUnit, siblings: Iterable[extract.ChatbotUnit]) -> list[str]:
    return sorted(s.folder for s in siblings if s.repo == unit.repo and s.folder != unit.folder)


def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8", errors="replace")


def _relative_to_folder(rel: str, folder: str) -> str:
    if folder == extract.ROOT_FOLDER:
        return rel
    return PurePosixPath(rel).relative_to(folder).as_posix()


# --- stages ----------------------------------------------------------------------

def stage_harvest(ctx: Context) -> dict[str, int]:
    h = ctx.cfg.harvest
    query = harvest.HarvestQuery(tuple(h.keywords), h.snapshot_date, h.page_size, h.qualifiers)
    found = harvest.search_repositories(query, ctx.github())
    dropped: dict[str, str] = {}

    def pin(rec: harvest.RepoRecord) -> harvest.RepoRecord | None:
        try:
            return harvest.pin_head_commit(rec, ctx.github(), h.snapshot_date)
        except NotFound as exc:
            log.warning("dropping %s: %s", rec.id, exc)
            return None

    pinned = _pmap(pin, found, ctx.cfg.parallelism.fetch)
    for rec, res in zip(found, pinned):
        if res is None:
            dropped[rec.id] = "deleted"
    kept = [r for r in pinned if r is not None]

    def fetch(rec: harvest.RepoRecord) -> str | None:
        try:
            harvest.fetch_tree(rec, ctx.cfg.cache_dir, ctx.github())
        except FetchFailed as exc:
            log.warning("dropping %s: %s", rec.id, exc)
            return f"fetch failed: {exc}"
        return None

    nonempty = [r for r in kept if not r.empty]
    for rec, err in zip(nonempty, _pmap(fetch, nonempty, ctx.cfg.parallelism.fetch)):
        if err is not None:
            dropped[rec.id] = err
    repos = [r for r in kept if r.id not in dropped]
    ctx.save("harvest.json", {"repos": [r.to_dict() for r in repos], "dropped": dict(sorted(dropped.items()))})
    return {
        "searched": len(found),
        "deleted": sum(v == "deleted" for v in dropped.values()),
        "fetch_failed": sum(v != "deleted" for v in dropped.values()),
        "empty": sum(r.empty for r in repos),
        "fetched": sum(not r.empty for r in repos),
    }


def stage_classify(ctx: Context) -> dict[str, int]:
    repos = [r for r in ctx.repos().values() if not r.empty]

    def run(rec: harvest.RepoRecord) -> list[classify.DomainCandidate]:
        return classify.find_domain_candidates(ctx.tree(rec), rec.id)

    found = dict(zip((r.id for r in repos), _pmap(run, repos, ctx.cfg.parallelism.units)))
    classify.write_classification_csv(ctx.path("classification.csv"), found)
    out = {
        rid: {
            "verdict": classify.classify_repo(cands).value,
            "candidates": [{"path": c.rel_path, "status": c.status.value} for c in cands],
        }
        for rid, cands in sorted(found.items())
    }
    ctx.save("classify.json", out)
    statuses = [c["status"] for v in out.values() for c in v["candidates"]]
    return {
        "repos": len(out),
        "chatbot_repos": sum(v["verdict"] == classify.Verdict.CHATBOT.value for v in out.values()),
        "valid_files": statuses.count(classify.CandidateStatus.VALID.value),
        "invalid_files": statuses.count(classify.CandidateStatus.SYNTACTICALLY_INVALID.value),
        "misclassified_files": statuses.count(classify.CandidateStatus.MISCLASSIFIED.value),
    }


def stage_extract(ctx: Context) -> dict[str, int]:
    repos = ctx.repos()
    verdicts = ctx.load("classify.json")
    units: list[extract.ChatbotUnit] = []
    for rid, v in sorted(verdicts.items()):
        valid = [c["path"] for c in v["candidates"] if c["status"] == classify.CandidateStatus.VALID.value]
        if not valid:
            continue
        parts = extract.partition_into_units(rid, valid)
        tree = ctx.tree(repos[rid])
        units.extend(extract.attach_support_files(u, tree, _nested_folders(u, parts)) for u in parts)
    ctx.save("units.json", [u.to_dict() for u in units])
    return {
        "units": len(units),
        "split_repos": sum(1 for rid in {u.repo for u in units} if sum(u.repo == rid for u in units) > 1),
        "action_files": sum(len(u.action_files) for u in units),
    }


def _parse_unit(ctx: Context, unit: extract.ChatbotUnit, repo: harvest.RepoRecord) -> tuple[dict | None, str | None]:
    tree = ctx.tree(repo)
    try:
        models = [domain.parse_domain(tree / f) for f in unit.domain_files]
    except SemanticError as exc:
        return None, f"semantic error: {exc}"
    verdict = domain.reconcile(models)
    if verdict.kind is domain.ReconcileKind.CONFLICT:
        return None, "conflicting domain files"
    model = verdict.merged
    if model.version is None:
        folders = list(dict.fromkeys([unit.folder, extract.ROOT_FOLDER]))
        pin = domain.find_rasa_pin(tree, folders)
        if pin is not None:
            model = replace(model, version=pin, version_source="requirements")
    return {"model": model.to_dict(), "reconcile": verdict.kind.value}, None


def stage_domain(ctx: Context) -> dict[str, int]:
    repos = ctx.repos()
    units = list(ctx.units().values())
    results = _pmap(lambda u: _parse_unit(ctx, u, repos[u.repo]), units, ctx.cfg.parallelism.units)
    models, discarded = {}, {}
    for unit, (rec, reason) in zip(units, results):
        if rec is None:
            discarded[unit.id] = reason
        else:
            models[unit.id] = rec
    ctx.save("domains.json", {"models": models, "discarded": discarded})
    return {
        "parsed": len(models),
        "semantic_error": sum(r.startswith("semantic") for r in discarded.values()),
        "conflict": sum(r.startswith("conflicting") for r in discarded.values()),
        "merged": sum(m["reconcile"] == domain.ReconcileKind.DISJOINT_MERGED.value for m in models.values()),
        "version_from_requirements": sum(m["model"].get("version_source") == "requirements" for m in models.values()),
    }


def stage_language(ctx: Context) -> dict[str, int]:
    cfg = ctx.cfg.language
    repos, units, models = ctx.repos(), ctx.units(), ctx.models()
    partial_path = ctx.path("languages.partial.json")
    done: dict[str, dict] = read_json(partial_path) if partial_path.is_file() else {}
    todo = [uid for uid in sorted(models) if uid not in done]
    detector = ctx.detector()

    def annotate(uid: str) -> language.LanguageAnnotation:
        unit = units[uid]
        examples = language.collect_training_examples(
            ctx.tree(repos[unit.repo]), unit, _nested_folders(unit, units.values())
        )
        seed = language.unit_seed(cfg.seed, uid)
        try:
            phrases = language.sample_training_phrases(examples, seed, cfg.default_intents)
        except NoTrainingData:
            phrases = []
        responses = language.sample_response_texts(models[uid], seed)
        if not phrases and not responses:
            return language.LanguageAnnotation.detected(uid, (), (), discard=True)
        return language.LanguageAnnotation.detected(
            uid, language.detect_languages(phrases, detector), language.detect_languages(responses, detector)
        )

    failure: BaseException | None = None
    with ThreadPoolExecutor(max_workers=ctx.cfg.parallelism.detect) as pool:
        futures = {pool.submit(annotate, uid): uid for uid in todo}
        for fut in as_completed(futures):
            try:
                done[futures[fut]] = fut.result().to_dict()
            except DetectorUnavailable as exc:
                failure = failure or exc
    if failure is not None:
        write_json(partial_path, dict(sorted(done.items())))
        raise failure
    annotations = [language.LanguageAnnotation.from_dict(done[uid]) for uid in sorted(done)]
    annotations = language.apply_review(annotations, ctx.cfg.language_review_file)
    ctx.save("languages.json", {"annotations": {a.unit_id: a.to_dict() for a in annotations}})
    partial_path.unlink(missing_ok=True)
    return {
        "annotated": len(annotations),
        "no_text": sum(a.discard for a in annotations),
        "multi_language_detected": sum(a.needs_review for a in annotations),
        "reviewed": sum(a.reviewed for a in annotations),
        "corrected": sum(a.reviewed and a.overall != a.training_langs | a.response_langs for a in annotations),
    }


def _action_sources(ctx: Context, unit: extract.ChatbotUnit, repo: harvest.RepoRecord) -> dict[str, str]:
    tree = ctx.tree(repo)
    return {_relative_to_folder(f, unit.folder): _read_text(tree / f) for f in unit.action_files}


def stage_dedup(ctx: Context) -> dict[str, int]:
    repos, units, models, anns = ctx.repos(), ctx.units(), ctx.models(), ctx.annotations()
    alive = sorted(uid for uid, a in anns.items() if not a.discard)
    candidates = [
        dedup.DedupCandidate(
            uid,
            dedup.ConversationalSignature.of(models[uid], anns[uid].overall),
            _action_sources(ctx, units[uid], repos[units[uid].repo]),
        )
        for uid in alive
    ]
    groups = dedup.group_copies(candidates, threshold=ctx.cfg.dedup.threshold)
    facts = {}
    for uid in alive:
        repo = repos[units[uid].repo]
        facts[uid] = dedup.KeeperFacts(models[uid].version, repo.stars, repo.forks, repo.created_at)
    out_groups, removed = [], set()
    for g in groups:
        keeper = dedup.select_keeper(g, facts)
        removed.update(m for m in g.members if m != keeper)
        out_groups.append({
            "id": g.id, "members": list(g.members), "keeper": keeper,
            "min_similarity": round(g.min_similarity, 6),
        })
    keepers = [uid for uid in alive if uid not in removed]
    ctx.save("dedup.json", {"groups": out_groups, "keepers": keepers})
    return {"groups": len(groups), "removed": len(removed), "distinct": len(keepers)}


def stage_curate(ctx: Context) -> dict[str, int]:
    repos, units, models, anns = ctx.repos(), ctx.units(), ctx.models(), ctx.annotations()
    inputs = []
    for uid in ctx.load("dedup.json")["keepers"]:
        unit = units[uid]
        repo = repos[unit.repo]
        inputs.append(curate.CurationInput(
            uid, models[uid], anns[uid].overall, repo.stars,
            tuple(_action_sources(ctx, unit, repo).values()),
        ))
    verdicts, counts = curate.apply_selection(inputs)
    curate.write_selection_csv(ctx.path("selection.csv"), verdicts)
    ctx.save("selection.json", {"verdicts": [curate.verdict_to_dict(v) for v in verdicts], "stage_counts": counts})
    return {"units": len(verdicts), **counts}


def _extract_unit_services(ctx: Context, unit: extract.ChatbotUnit, repo: harvest.RepoRecord) -> enrich.ServiceReport:
    tree = ctx.tree(repo)
    client, cfg = ctx.llm(), ctx.llm_config()
    flagged = False
    found: dict[enrich.SourceKind, set[str]] = {enrich.SourceKind.ACTION_CODE: set(), enrich.SourceKind.README: set()}
    sources = [(enrich.SourceKind.ACTION_CODE, f) for f in unit.action_files]
    sources += [(enrich.SourceKind.README, f) for f in unit.readme_files]
    for kind, rel in sources:
        text = _read_text(tree / rel)
        if not text.strip():
            continue
        try:
            found[kind] |= enrich.extract_services(text, kind, client, cfg)
        except UnparseableResponse as exc:
            log.warning("%s: %s: %s; flagged for manual review", unit.id, rel, exc)
            flagged = True
    return enrich.ServiceReport.extracted(
        unit.id, found[enrich.SourceKind.ACTION_CODE], found[enrich.SourceKind.README], needs_manual_review=flagged
    )


def _topic_input(unit: extract.ChatbotUnit, repo: harvest.RepoRecord, model: domain.DomainModel, tree: Path) -> enrich.TopicInput:
    return enrich.TopicInput(
        repo_name=repo.name,
        description=repo.description,
        readmes=[_read_text(tree / f) for f in unit.readme_files],
        intents=sorted(model.intents),
        entities=sorted(model.entities),
        slots=sorted(model.slots),
        actions=sorted(model.actions),
    )


def stage_enrich(ctx: Context) -> dict[str, int]:
    repos, units, models = ctx.repos(), ctx.units(), ctx.models()
    selection = [curate.verdict_from_dict(d) for d in ctx.load("selection.json")["verdicts"]]
    selected = [v.unit_id for v in selection if v.passed]
    partial_path = ctx.path("enrich.partial.json")
    partial = read_json(partial_path) if partial_path.is_file() else {"services": {}, "topics": {}}

    def checkpoint_and_raise(exc: BaseException) -> None:
        write_json(partial_path, partial)
        raise exc

    failure: BaseException | None = None
    todo = [uid for uid in selected if uid not in partial["services"]]
    with ThreadPoolExecutor(max_workers=ctx.cfg.parallelism.llm) as pool:
        futures = {pool.submit(_extract_unit_services, ctx, units[uid], repos[units[uid].repo]): uid for uid in todo}
        for fut in as_completed(futures):
            try:
                partial["services"][futures[fut]] = fut.result().to_dict()
            except LlmUnavailable as exc:
                failure = failure or exc
    if failure is not None:
        checkpoint_and_raise(failure)

    reports = [enrich.ServiceReport.from_dict(partial["services"][uid]) for uid in selected]
    reports = enrich.apply_service_review(reports, ctx.cfg.service_review_file, ctx.cfg.aliases_file)
    dead_units = [r.unit_id for r in reports if r.depends_on_discontinued]
    verdicts, counts = curate.fold_discontinued(selection, dead_units)
    final = [v.unit_id for v in verdicts if v.passed]

    categories = enrich.load_categories(ctx.cfg.enrich.categories_file)
    client, cfg = ctx.llm(), ctx.llm_config()
    for uid in final:
        if uid in partial["topics"]:
            continue
        unit = units[uid]
        repo = repos[unit.repo]
        try:
            res = enrich.extract_topic(_topic_input(unit, repo, models[uid], ctx.tree(repo)), categories, client, cfg)
        except EmptyResponse:
            res = enrich.TopicResult(None, needs_manual_review=True)
        except LlmUnavailable as exc:
            checkpoint_and_raise(exc)
        partial["topics"][uid] = {"name": res.topic, "novel": res.novel, "needs_manual_review": res.needs_manual_review}

    ctx.save("enrich.json", {
        "services": {r.unit_id: r.to_dict() for r in reports},
        "topics": {uid: partial["topics"][uid] for uid in final},
        "verdicts": [curate.verdict_to_dict(v) for v in verdicts],
        "stage_counts": counts,
    })
    partial_path.unlink(missing_ok=True)
    return {
        "analyzed": len(reports),
        "discontinued": len(dead_units),
        "selected": len(final),
        "needs_manual_review": sum(r.needs_manual_review for r in reports),
    }


def _unit_record(
    ctx: Context,
    unit: extract.ChatbotUnit,
    repo: harvest.RepoRecord,
    dom: dict,
    ann: language.LanguageAnnotation,
    group: dict | None,
    verdict: dict | None,
    services: dict | None,
    topic: dict | None,
) -> dict[str, Any]:
    model = domain.DomainModel.from_dict(dom["model"])
    return {
        "id": unit.id,
        "repo": unit.repo,
        "folder": unit.folder,
        "snapshot_sha": repo.snapshot_sha,
        "stars": repo.stars,
        "forks": repo.forks,
        "created_at": repo.created_at,
        "last_commit_at": repo.last_commit_at,
        "description": repo.description,
        "domain_files": list(unit.domain_files),
        "action_files": list(unit.action_files),
        "readme_files": list(unit.readme_files),
        "reconcile": dom["reconcile"],
        "intents": sorted(model.intents),
        "entities": sorted(model.entities),
        "slots": dict(sorted(model.slots.items())),
        "actions": sorted(model.actions),
        "custom_actions": sorted(model.custom_actions),
        "response_actions": sorted(model.response_actions),
        "version": model.version,
        "version_source": model.version_source,
        "languages": {
            "training": sorted(ann.training_langs),
            "response": sorted(ann.response_langs),
            "overall": sorted(ann.overall),
            "reviewed": ann.reviewed,
        },
        "duplicates": None if group is None else {
            "group": group["id"], "removed": [m for m in group["members"] if m != unit.id],
        },
        "selection": verdict,
        "services": None if services is None else {
            k: services[k] for k in ("from_code", "from_readme", "final", "discontinued")
        },
        "topic": None if topic is None else {"name": topic["name"], "novel": topic["novel"]},
    }


def build_manifests(ctx: Context, counts: dict[str, dict[str, int]]) -> tuple[DatasetManifest, DatasetManifest]:
    repos, units, anns = ctx.repos(), ctx.units(), ctx.annotations()
    doms = ctx.load("domains.json")["models"]
    dd = ctx.load("dedup.json")
    groups = {g["keeper"]: g for g in dd["groups"]}
    enr = ctx.load("enrich.json")
    verdicts = {v["unit_id"]: v for v in enr["verdicts"]}
    records = {}
    for uid in dd["keepers"]:
        unit = units[uid]
        records[uid] = _unit_record(
            ctx, unit, repos[unit.repo], doms[uid], anns[uid], groups.get(uid),
            verdicts.get(uid), enr["services"].get(uid), enr["topics"].get(uid),
        )
    snapshot = ctx.cfg.harvest.snapshot_date.isoformat()
    flat = {f"{s}.{k}": v for s in STAGES for k, v in counts.get(s, {}).items()}
    tofu_counts = {k: v for k, v in flat.items() if not k.startswith(("curate.", "enrich."))}
    tofu = DatasetManifest(TOFU_NAME, snapshot, list(records.values()), tofu_counts)
    brasato = DatasetManifest(
        BRASATO_NAME, snapshot, [records[uid] for uid in enr["topics"]], dict(enr["stage_counts"]),
    )
    return tofu, brasato


def manifest_filename(name: str) -> str:
    return f"{name.lower()}.manifest.json"


def stage_report(ctx: Context, counts: dict[str, dict[str, int]]) -> dict[str, int]:
    out = ctx.cfg.out_dir
    written = 0
    for m in build_manifests(ctx, counts):
        m.write(out / manifest_filename(m.dataset_name))
        if not m.units:
            log.warning("%s is empty; no statistics written", m.dataset_name)
            continue
        stats = report.compute_stats(m, ctx.cfg.report.rasa3_release)
        written += len(report.emit_outputs(stats, out / m.dataset_name.lower(), ctx.cfg.report.formats))
    return {"files": written}


STAGE_FUNCS: dict[str, Callable[..., dict[str, int]]] = {
    "harvest": stage_harvest,
    "classify": stage_classify,
    "extract": stage_extract,
    "domain": stage_domain,
    "language": stage_language,
    "dedup": stage_dedup,
    "curate": stage_curate,
    "enrich": stage_enrich,
}


# --- orchestration ---------------------------------------------------------------

@dataclass
class RunReport:
    executed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def exit_status(self) -> int:
        return 1 if self.failed else 0


class Pipeline:
    def __init__(self, cfg: PipelineConfig, transport: Transport | None = None) -> None:
        self.cfg = cfg
        self.ctx = Context(cfg, transport)
        cfg.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        self.state = PipelineState.load(cfg.checkpoint_dir)

    def fresh(self, stage: str) -> bool:
        rec = self.state.stages[stage]
        return rec.status is Status.DONE and rec.fingerprint == fingerprints(self.cfg)[stage]

    def _check_dag(self, requested: Sequence[str]) -> None:
        unknown = [s for s in requested if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stages {unknown}; expected some of {list(STAGES)}", "stages")
        for s in requested:
            for pred in STAGES[:STAGES.index(s)]:
                if pred not in requested and not self.fresh(pred):
                    raise ConfigError(
                        f"stage {s!r} needs {pred!r}, which is {self.state.stages[pred].status.value}"
                        f"{'' if self.state.stages[pred].status is not Status.DONE else ' but stale'}",
                        "stages",
                    )

    def run(self, stages: Sequence[str] | None = None, resume: bool = False) -> RunReport:
        asked = list(STAGES if stages is None else stages)
        self._check_dag(asked)
        requested = [s for s in STAGES if s in asked]
        result = RunReport()
        for stage in requested:
            if resume and self.fresh(stage):
                result.skipped.append(stage)
                continue
            self.state.invalidate_from(stage)
            self.state.save()
            log.info("running stage %s", stage)
            try:
                if stage == "report":
                    counts = stage_report(self.ctx, {s: r.counts for s, r in self.state.stages.items()})
                else:
                    counts = STAGE_FUNCS[stage](self.ctx)
            except (BotCorpusError, OSError, ValueError, KeyError) as exc:
                err = StageFailed(stage, exc)
                log.error("%s", err)
                self.state.stages[stage] = StageRecord(Status.FAILED, error=f"{type(exc).__name__}: {exc}")
                self.state.save()
                result.failed[stage] = str(err)
                break
            self.state.stages[stage] = StageRecord(Status.DONE, fingerprints(self.cfg)[stage], counts)
            self.state.save()
            result.executed.append(stage)
        return result

    def summary(self) -> list[str]:
        lines = []
        fps = fingerprints(self.cfg)
        for s in STAGES:
            rec = self.state.stages[s]
            status = rec.status.value
            if rec.status is Status.DONE and rec.fingerprint != fps[s]:
                status += " (stale)"
            detail = rec.error or ", ".join(f"{k}={v}" for k, v in sorted(rec.counts.items()))
            lines.append(f"{s:<9} {status:<15} {detail}")
        return lines


def run(stages: Sequence[str] | None, config: str | Path, resume: bool = False) -> int:
    """Run ``stages`` (all when None) from the config file; returns an exit status."""
    pipe = Pipeline(validate_config(config))
    result = pipe.run(stages, resume=resume)
    for stage, err in result.failed.items():
        log.error("%s", err)
    return result.exit_status
