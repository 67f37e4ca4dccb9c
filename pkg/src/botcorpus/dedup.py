"""Copy detection: conversational-signature buckets plus action-code similarity."""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Sequence

from .domain import DomainModel, version_sort_key


@dataclass(frozen=True, order=True)
class ConversationalSignature:
    intents: tuple[str, ...]
    entities: tuple[str, ...]
    slots: tuple[tuple[str, str], ...]
    actions: tuple[str, ...]
    languages: tuple[str, ...]

    @classmethod
    def of(cls, model: DomainModel, languages: Iterable[str]) -> "ConversationalSignature":
        return cls(
            intents=tuple(sorted(model.intents)),
            entities=tuple(sorted(model.entities)),
            slots=tuple(sorted(model.slots.items())),
            actions=tuple(sorted(model.actions)),
            languages=tuple(sorted(set(languages))),
        )


@dataclass(frozen=True)
class DedupCandidate:
    """What dedup needs to know about one unit.

    ``action_sources`` maps each action file's path, relative to the unit
    folder, to its raw text.
    """

    id: str
    signature: ConversationalSignature
    action_sources: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class DuplicateGroup:
    members: tuple[str, ...]
    keeper: str | None = None
    min_similarity: float = 1.0
    id: str = ""

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise ValueError("a duplicate group has at least two members")
        if self.keeper is not None and self.keeper not in self.members:
            raise ValueError(f"keeper {self.keeper!r} is not a member")


# --- Ratcliff/Obershelp ------------------------------------------------------------

def _longest_match(a: str, index: Mapping[str, list[int]], alo: int, ahi: int, blo: int, bhi: int):
    """Longest common block in a[alo:ahi] x b[blo:bhi].

    Ties go to the block starting earliest in ``a``, then earliest in ``b``.
    """
    besti, bestj, bestsize = alo, blo, 0
    run: dict[int, int] = {}
    for i in range(alo, ahi):
        nxt: dict[int, int] = {}
        for j in index.get(a[i], ()):
            if j < blo:
                continue
            if j >= bhi:
                break
            k = run.get(j - 1, 0) + 1
            nxt[j] = k
            if k > bestsize:
                besti, bestj, bestsize = i - k + 1, j - k + 1, k
        run = nxt
    return besti, bestj, bestsize


def matching_characters(a: str, b: str) -> int:
    """Total size of the Ratcliff/Obershelp matching blocks of ``a`` and ``b``."""
    if a == b:
        return len(a)
    index: dict[str, list[int]] = defaultdict(list)
    for j, ch in enumerate(b):
        index[ch].append(j)
    total = 0
    todo = [(0, len(a), 0, len(b))]
    while todo:
        alo, ahi, blo, bhi = todo.pop()
        i, j, k = _longest_match(a, index, alo, ahi, blo, bhi)
        if not k:
            continue
        total += k
        if alo < i and blo < j:
            todo.append((alo, i, blo, j))
        if i + k < ahi and j + k < bhi:
            todo.append((i + k, ahi, j + k, bhi))
    return total


def sequence_ratio(a: str, b: str) -> float:
    """2*M/T over characters; 1.0 for two empty strings."""
    t = len(a) + len(b)
    return 1.0 if t == 0 else 2.0 * matching_characters(a, b) / t


def action_code_similarity(a: DedupCandidate, b: DedupCandidate) -> float:
    """Length-weighted mean per-file ratio over identically named action files.

    Units whose action file names differ score 0; two units without action
    files score 1.  Each file pair is compared in sorted order because the
    matcher itself is not symmetric.
    """
    if set(a.action_sources) != set(b.action_sources):
        return 0.0
    if not a.action_sources:
        return 1.0
    matched = total = 0
    for name in sorted(a.action_sources):
        x, y = sorted((a.action_sources[name], b.action_sources[name]))
        matched += 2 * matching_characters(x, y)
        total += len(x) + len(y)
    return 1.0 if total == 0 else matched / total


# --- grouping --------------------------------------------------------------------

def _components(ids: Sequence[str], edges: Iterable[tuple[str, str]]) -> list[list[str]]:
    parent = {u: u for u in ids}

    def find(u: str) -> str:
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    comps: dict[str, list[str]] = defaultdict(list)
    for u in ids:
        comps[find(u)].append(u)
    return [sorted(c) for c in comps.values()]


def group_copies(
    units: Sequence[DedupCandidate],
    threshold: float = 0.95,
    similarity: Callable[[DedupCandidate, DedupCandidate], float] = action_code_similarity,
) -> list[DuplicateGroup]:
    """Transitive closure of the copy relation within each signature bucket.

    Two units are copies when their signatures are equal and their
    action-code similarity reaches ``threshold``.  Groups come back without
    keepers, ordered by their first member.
    """
    buckets: dict[ConversationalSignature, list[DedupCandidate]] = defaultdict(list)
    for u in units:
        buckets[u.signature].append(u)
    groups = []
    for members in buckets.values():
        if len(members) < 2:
            continue
        members = sorted(members, key=lambda u: u.id)
        sims = {
            (x.id, y.id): similarity(x, y) for x, y in itertools.combinations(members, 2)
        }
        edges = [pair for pair, s in sims.items() if s >= threshold]
        for comp in _components([m.id for m in members], edges):
            if len(comp) < 2:
                continue
            low = min(sims[p] for p in itertools.combinations(comp, 2))
            groups.append(DuplicateGroup(members=tuple(comp), min_similarity=low))
    groups.sort(key=lambda g: g.members)
    return [
        DuplicateGroup(g.members, g.keeper, g.min_similarity, id=f"dup-{n:04d}")
        for n, g in enumerate(groups, start=1)
    ]


# --- keeper ----------------------------------------------------------------------

@dataclass(frozen=True)
class KeeperFacts:
    version: str | None
    stars: int
    forks: int
    created_at: str | None


def _timestamp(text: str | None) -> float | None:
    if not text:
        return None
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def keeper_rank(facts: KeeperFacts) -> tuple:
    """Larger is better: newest version, then popularity, then earliest creation."""
    present, version, _ = version_sort_key(facts.version)
    ts = _timestamp(facts.created_at)
    return ((present, version), facts.stars + facts.forks, float("-inf") if ts is None else -ts)


def select_keeper(group: DuplicateGroup | Sequence[str], records: Mapping[str, KeeperFacts]) -> str:
    members = group.members if isinstance(group, DuplicateGroup) else tuple(group)
    if not members:
        raise ValueError("empty group")
    best = max(keeper_rank(records[m]) for m in members)
    return min(m for m in members if keeper_rank(records[m]) == best)
