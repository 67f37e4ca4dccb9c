"""Rasa domain parsing and reconciliation of multi-file domains."""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import yaml

from .errors import SemanticError

YamlLoader = getattr(yaml, "CSafeLoader", yaml.SafeLoader)

SLOT_TYPES = frozenset({"text", "bool", "categorical", "float", "list", "any"})
# Rasa 1.x/2.x vocabulary, removed in 3.0 but legal in older domains.
LEGACY_SLOT_TYPES = frozenset({"unfeaturized"})
_CUSTOM_SLOT_TYPE = re.compile(r"^[A-Za-z_][\w]*(\.[A-Za-z_][\w]*)+$")
RESPONSE_KEYS = ("responses", "templates")  # "templates" is the Rasa 1.x spelling


@dataclass(frozen=True)
class DomainModel:
    intents: frozenset[str] = frozenset()
    entities: frozenset[str] = frozenset()
    slots: dict[str, str] = field(default_factory=dict)
    actions: frozenset[str] = frozenset()
    responses: dict[str, tuple[str, ...]] = field(default_factory=dict)
    version: str | None = None
    version_source: str | None = None

    @property
    def response_actions(self) -> frozenset[str]:
        return frozenset(a for a in self.actions if a.startswith("utter_") or a in self.responses)

    @property
    def custom_actions(self) -> frozenset[str]:
        return self.actions - self.response_actions

    def parameters(self) -> tuple:
        """The four families that decide equality and disjointness."""
        return (self.intents, self.entities, tuple(sorted(self.slots.items())), self.actions)

    def to_dict(self) -> dict[str, Any]:
        return {
            "intents": sorted(self.intents),
            "entities": sorted(self.entities),
            "slots": dict(sorted(self.slots.items())),
            "actions": sorted(self.actions),
            "custom_actions": sorted(self.custom_actions),
            "response_actions": sorted(self.response_actions),
            "responses": {k: list(v) for k, v in sorted(self.responses.items())},
            "version": self.version,
            "version_source": self.version_source,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DomainModel":
        return cls(
            intents=frozenset(d.get("intents") or ()),
            entities=frozenset(d.get("entities") or ()),
            slots=dict(d.get("slots") or {}),
            actions=frozenset(d.get("actions") or ()),
            responses={k: tuple(v) for k, v in (d.get("responses") or {}).items()},
            version=d.get("version"),
            version_source=d.get("version_source"),
        )


# --- versions ----------------------------------------------------------------

def parse_version(text: str | None) -> tuple[int, ...] | None:
    """Numeric dotted components, trailing zeros dropped; ``None`` if unparsable."""
    if text is None:
        return None
    parts = []
    for chunk in str(text).strip().lstrip("vV").split("."):
        m = re.match(r"\d+", chunk)
        if not m:
            break
        parts.append(int(m.group()))
    if not parts:
        return None
    while len(parts) > 1 and parts[-1] == 0:
        parts.pop()
    return tuple(parts)


def version_major(text: str | None) -> int | None:
    v = parse_version(text)
    return v[0] if v else None


def version_sort_key(text: str | None) -> tuple[int, tuple[int, ...], str]:
    """Absent or unparsable versions sort below every real version."""
    v = parse_version(text)
    return (0, (), "") if v is None else (1, v, str(text))


_PIN_PATTERNS = (
    re.compile(r"""^\s*["']?rasa(?:\[[^\]]*\])?\s*(?:===?|~=|>=)\s*["']?v?(\d+(?:\.\d+)*)""",
               re.IGNORECASE | re.MULTILINE),
    # poetry: rasa = "^3.1" / rasa = {version = "3.1"}
    re.compile(r"""^\s*rasa\s*=\s*(?:\{[^}]*version\s*=\s*)?["'][\^~>=]*(\d+(?:\.\d+)*)""",
               re.IGNORECASE | re.MULTILINE),
)
_PIN_FILES = re.compile(r"^(requirements.*\.txt|setup\.py|pyproject\.toml|pipfile|environment\.ya?ml)$",
                        re.IGNORECASE)


def find_rasa_pin(tree_root: str | Path, folders: Sequence[str] = (".",)) -> str | None:
    """Look for a pinned ``rasa`` dependency in packaging metadata.

    Folders are searched in the given order (non-recursively); the first pin
    found wins.
    """
    root = Path(tree_root)
    for folder in folders:
        base = root if folder in (".", "") else root / folder
        if not base.is_dir():
            continue
        for p in sorted(base.iterdir()):
            if not (p.is_file() and _PIN_FILES.match(p.name)):
                continue
            text = p.read_text(encoding="utf-8", errors="replace")
            for pat in _PIN_PATTERNS:
                m = pat.search(text)
                if m:
                    return m.group(1)
    return None


# --- parsing -----------------------------------------------------------------

def _names(value: Any, family: str) -> list[str]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise SemanticError(f"{family} must be a list, got {type(value).__name__}")
    out = []
    for item in value:
        if isinstance(item, str):
            out.append(item)
        elif isinstance(item, dict) and len(item) == 1 and isinstance(next(iter(item)), str):
            out.append(next(iter(item)))
        else:
            raise SemanticError(f"{family} entry {item!r} is neither a name nor a single-key mapping")
    return out


def _slot_type(name: str, spec: Any) -> str:
    if not isinstance(spec, dict):
        raise SemanticError(f"slot {name!r} must be a mapping")
    stype = spec.get("type")
    if not isinstance(stype, str):
        raise SemanticError(f"slot {name!r} has no type")
    low = stype.strip().lower()
    if low in SLOT_TYPES or low in LEGACY_SLOT_TYPES:
        return low
    if _CUSTOM_SLOT_TYPE.match(stype.strip()):
        return stype.strip()
    raise SemanticError(f"slot {name!r} has unknown type {stype!r}")


def _slots(value: Any) -> dict[str, str]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise SemanticError(f"slots must be a mapping, got {type(value).__name__}")
    return {str(name): _slot_type(str(name), spec) for name, spec in value.items()}


def _responses(value: Any) -> dict[str, list[str]]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise SemanticError("responses must be a mapping")
    out: dict[str, list[str]] = {}
    for name, variants in value.items():
        if variants is None:
            variants = []
        if not isinstance(variants, list):
            raise SemanticError(f"response {name!r} must be a list of variants")
        texts = []
        for v in variants:
            if isinstance(v, str):
                texts.append(v)
            elif isinstance(v, dict):
                if isinstance(v.get("text"), str):
                    texts.append(v["text"])
            else:
                raise SemanticError(f"response {name!r} has a malformed variant")
        out[str(name)] = texts
    return out


def model_from_mapping(doc: dict[str, Any]) -> DomainModel:
    responses: dict[str, list[str]] = {}
    for key in RESPONSE_KEYS:
        responses.update(_responses(doc.get(key)))
    actions = set(_names(doc.get("actions"), "actions")) | set(responses)
    version = doc.get("version")
    return DomainModel(
        intents=frozenset(_names(doc.get("intents"), "intents")),
        entities=frozenset(_names(doc.get("entities"), "entities")),
        slots=_slots(doc.get("slots")),
        actions=frozenset(actions),
        responses={k: tuple(v) for k, v in responses.items()},
        version=None if version is None else str(version),
        version_source=None if version is None else "domain",
    )


def parse_domain(file: str | Path) -> DomainModel:
    """Parse one domain file.

    Multi-document files are folded into one model; the documents are parts of
    the same declaration, not separate chatbots.
    """
    text = Path(file).read_text(encoding="utf-8", errors="replace")
    try:
        docs = [d for d in yaml.load_all(text, Loader=YamlLoader) if isinstance(d, dict)]
    except yaml.YAMLError as exc:
        raise SemanticError(f"{file}: not parseable: {exc}") from exc
    if not docs:
        raise SemanticError(f"{file}: no mapping document")
    models = [model_from_mapping(d) for d in docs]
    if len(models) == 1:
        return models[0]
    return _union(models)


# --- reconciliation ------------------------------------------------------------

class ReconcileKind(str, enum.Enum):
    SINGLE = "Single"
    IDENTICAL = "Identical"
    DISJOINT_MERGED = "DisjointMerged"
    CONFLICT = "Conflict"


@dataclass(frozen=True)
class ReconcileVerdict:
    kind: ReconcileKind
    merged: DomainModel | None = None

    def __post_init__(self) -> None:
        if (self.merged is None) != (self.kind is ReconcileKind.CONFLICT):
            raise ValueError("merged must be present exactly for non-conflict verdicts")


def _highest_version(models: Iterable[DomainModel]) -> tuple[str | None, str | None]:
    best = max(models, key=lambda m: version_sort_key(m.version))
    return best.version, best.version_source


def _union(models: Sequence[DomainModel]) -> DomainModel:
    responses: dict[str, tuple[str, ...]] = {}
    for m in models:
        for k, v in m.responses.items():
            merged = list(responses.get(k, ()))
            merged.extend(t for t in v if t not in merged)
            responses[k] = tuple(merged)
    slots: dict[str, str] = {}
    for m in models:
        slots.update(m.slots)
    version, source = _highest_version(models)
    return DomainModel(
        intents=frozenset().union(*(m.intents for m in models)),
        entities=frozenset().union(*(m.entities for m in models)),
        slots=dict(sorted(slots.items())),
        actions=frozenset().union(*(m.actions for m in models)),
        responses={k: tuple(sorted(v)) for k, v in sorted(responses.items())},
        version=version,
        version_source=source,
    )


def _disjoint(a: DomainModel, b: DomainModel) -> bool:
    return (
        a.intents.isdisjoint(b.intents)
        and a.entities.isdisjoint(b.entities)
        and set(a.slots).isdisjoint(b.slots)
        and a.actions.isdisjoint(b.actions)
    )


def reconcile(models: Sequence[DomainModel]) -> ReconcileVerdict:
    if not models:
        raise ValueError("reconcile needs at least one model")
    if len(models) == 1:
        return ReconcileVerdict(ReconcileKind.SINGLE, models[0])
    first = models[0].parameters()
    if all(m.parameters() == first for m in models[1:]):
        return ReconcileVerdict(ReconcileKind.IDENTICAL, _union(models))
    if all(_disjoint(a, b) for a, b in itertools.combinations(models, 2)):
        return ReconcileVerdict(ReconcileKind.DISJOINT_MERGED, _union(models))
    return ReconcileVerdict(ReconcileKind.CONFLICT)
