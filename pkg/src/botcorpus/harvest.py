"""Candidate repository acquisition from a GitHub-style v3 REST API."""

from __future__ import annotations

import io
import logging
import os
import shutil
import tarfile
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from datetime import date
from pathlib import Path, PurePosixPath
from typing import Any, Callable, Iterable

from .errors import (
    AuthMissing,
    ChecksumMismatch,
    FetchFailed,
    NotFound,
    RateLimited,
    TransportError,
)
from .http import HttpResponse, Transport

log = logging.getLogger(__name__)

TOKEN_ENV = "GITHUB_TOKEN"
DEFAULT_API = "https://api.github.com"
# The search endpoint never returns more than this many results per query.
SEARCH_RESULT_CAP = 1000
BACKOFF_DELAYS = (1.0, 4.0, 16.0)


class TruncatedResults(UserWarning):
    """The host capped a search; the returned list is partial."""


@dataclass(frozen=True)
class RepoRecord:
    owner: str
    name: str
    stars: int = 0
    forks: int = 0
    created_at: str = ""
    description: str = ""
    topics: tuple[str, ...] = ()
    default_branch: str = "main"
    snapshot_sha: str | None = None
    last_commit_at: str | None = None
    empty: bool = False

    def __post_init__(self) -> None:
        if self.stars < 0 or self.forks < 0:
            raise ValueError(f"{self.id}: negative stars/forks")
        if self.empty and self.snapshot_sha is not None:
            raise ValueError(f"{self.id}: empty repository cannot carry a snapshot sha")

    @property
    def id(self) -> str:
        return f"{self.owner}/{self.name}"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["topics"] = list(self.topics)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RepoRecord":
        d = dict(d)
        d["topics"] = tuple(d.get("topics") or ())
        return cls(**d)


@dataclass(frozen=True)
class HarvestQuery:
    keywords: tuple[str, ...]
    snapshot_date: date
    page_size: int = 100
    qualifiers: str = ""

    def __post_init__(self) -> None:
        if not self.keywords:
            raise ValueError("keywords must be non-empty")
        if not 1 <= self.page_size <= 100:
            raise ValueError("page_size must be in [1, 100]")

    @property
    def q(self) -> str:
        parts = list(self.keywords)
        if self.qualifiers:
            parts.append(self.qualifiers)
        return " ".join(parts)


@dataclass
class GitHubClient:
    """Minimal REST client: search, commits, tarball download.

    Rate-limited responses (HTTP 429, or 403 with an exhausted quota header)
    are retried after each delay in ``backoff``; ``sleep`` is injectable so
    replay runs and tests do not wait.
    """

    transport: Transport
    token: str | None = None
    api_url: str = DEFAULT_API
    sleep: Callable[[float], None] = time.sleep
    backoff: tuple[float, ...] = BACKOFF_DELAYS
    retried: int = field(default=0, init=False)

    @classmethod
    def from_env(cls, transport: Transport, *, live: bool, **kwargs: Any) -> "GitHubClient":
        token = os.environ.get(TOKEN_ENV)
        if live and not token:
            raise AuthMissing(f"{TOKEN_ENV} must be set for live harvesting")
        return cls(transport, token=token, **kwargs)

    def _headers(self) -> dict[str, str]:
        h = {"Accept": "application/vnd.github+json"}
        if self.token:
            h["Authorization"] = f"Bearer {self.token}"
        return h

    @staticmethod
    def _is_rate_limited(resp: HttpResponse) -> bool:
        if resp.status == 429:
            return True
        return resp.status == 403 and resp.header("X-RateLimit-Remaining") == "0"

    def get(self, path: str, params: dict[str, Any] | None = None) -> HttpResponse:
        url = f"{self.api_url}{path}"
        for attempt in range(len(self.backoff) + 1):
            resp = self.transport.request("GET", url, params=params, headers=self._headers())
            if not self._is_rate_limited(resp):
                return resp
            if attempt == len(self.backoff):
                break
            delay = self.backoff[attempt]
            log.warning("rate limited on %s; retrying in %.0fs", path, delay)
            self.retried += 1
            self.sleep(delay)
        raise RateLimited(f"GET {path}: still rate limited after {len(self.backoff)} retries")


def _record_from_item(item: dict[str, Any]) -> RepoRecord:
    return RepoRecord(
        owner=item["owner"]["login"],
        name=item["name"],
        stars=int(item.get("stargazers_count") or 0),
        forks=int(item.get("forks_count") or 0),
        created_at=item.get("created_at") or "",
        description=item.get("description") or "",
        topics=tuple(item.get("topics") or ()),
        default_branch=item.get("default_branch") or "main",
    )


def search_repositories(query: HarvestQuery, api: GitHubClient) -> list[RepoRecord]:
    """Exhaustively page through repository search results.

    Records are deduplicated by ``(owner, name)`` (first occurrence wins, which
    keeps popularity figures from the earliest page) and returned sorted by
    owner, then name.
    """
    seen: dict[tuple[str, str], RepoRecord] = {}
    total_items = 0
    page = 1
    while True:
        resp = api.get(
            "/search/repositories",
            {"q": query.q, "per_page": query.page_size, "page": page},
        )
        if not resp.ok:
            raise TransportError(f"search page {page}: HTTP {resp.status}")
        body = resp.body or {}
        items = body.get("items") or []
        total = int(body.get("total_count") or 0)
        if page == 1 and (total > SEARCH_RESULT_CAP or body.get("incomplete_results")):
            warnings.warn(
                f"search reported {total} results; the host caps at {SEARCH_RESULT_CAP}",
                TruncatedResults,
                stacklevel=2,
            )
        for item in items:
            total_items += 1
            rec = _record_from_item(item)
            seen.setdefault((rec.owner, rec.name), rec)
        if len(items) < query.page_size or page * query.page_size >= min(total, SEARCH_RESULT_CAP):
            break
        page += 1
    log.info("search: %d items over %d pages, %d unique", total_items, page, len(seen))
    return [seen[k] for k in sorted(seen)]


def pin_head_commit(
    repo: RepoRecord, api: GitHubClient, snapshot_date: date | None = None
) -> RepoRecord:
    params: dict[str, Any] = {"sha": repo.default_branch, "per_page": 1}
    if snapshot_date is not None:
        params["until"] = f"{snapshot_date.isoformat()}T23:59:59Z"
    resp = api.get(f"/repos/{repo.owner}/{repo.name}/commits", params)
    if resp.status == 404:
        raise NotFound(f"{repo.id} no longer exists")
    # 409: "Git Repository is empty."
    if resp.status == 409 or (resp.ok and not resp.body):
        return replace(repo, snapshot_sha=None, last_commit_at=None, empty=True)
    if not resp.ok:
        raise TransportError(f"commits for {repo.id}: HTTP {resp.status}")
    head = resp.body[0]
    committed = ((head.get("commit") or {}).get("committer") or {}).get("date")
    return replace(repo, snapshot_sha=head["sha"], last_commit_at=committed, empty=False)


def tree_path(repo: RepoRecord, cache_dir: str | Path) -> Path:
    if not repo.snapshot_sha:
        raise ValueError(f"{repo.id}: no snapshot sha (empty or unpinned repository)")
    return Path(cache_dir) / repo.owner / repo.name / repo.snapshot_sha


def _safe_members(tar: tarfile.TarFile, sha: str, repo_id: str) -> Iterable[tuple[tarfile.TarInfo, PurePosixPath]]:
    roots = set()
    for member in tar.getmembers():
        parts = PurePosixPath(member.name).parts
        if not parts:
            continue
        roots.add(parts[0])
        rel = PurePosixPath(*parts[1:]) if len(parts) > 1 else None
        if rel is None or not (member.isfile() or member.isdir()):
            continue
        if rel.is_absolute() or ".." in rel.parts:
            raise FetchFailed(f"{repo_id}: archive member escapes root: {member.name}")
        yield member, rel
    if len(roots) != 1 or not next(iter(roots)).endswith(sha[:7]):
        raise ChecksumMismatch(f"{repo_id}: archive root {sorted(roots)} does not match {sha[:7]}")


def fetch_tree(repo: RepoRecord, cache_dir: str | Path, api: GitHubClient, retries: int = 2) -> Path:
    """Materialize the source tree at ``repo.snapshot_sha`` under the cache.

    Idempotent: when the target directory is already complete no request is
    issued.
    """
    target = tree_path(repo, cache_dir)
    if (target / ".complete").exists():
        return target
    resp = None
    for attempt in range(retries + 1):
        try:
            resp = api.get(f"/repos/{repo.owner}/{repo.name}/tarball/{repo.snapshot_sha}")
        except TransportError as exc:
            log.warning("fetch %s attempt %d: %s", repo.id, attempt + 1, exc)
            resp = None
            continue
        if resp.ok:
            break
        log.warning("fetch %s attempt %d: HTTP %d", repo.id, attempt + 1, resp.status)
    if resp is None or not resp.ok or not isinstance(resp.body, (bytes, bytearray)):
        raise FetchFailed(f"{repo.id}: could not download archive for {repo.snapshot_sha}")

    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".fetch-", dir=target.parent))
    try:
        with tarfile.open(fileobj=io.BytesIO(bytes(resp.body)), mode="r:*") as tar:
            members = list(_safe_members(tar, repo.snapshot_sha, repo.id))
            for member, rel in members:
                dest = staging / rel
                if member.isdir():
                    dest.mkdir(parents=True, exist_ok=True)
                    continue
                dest.parent.mkdir(parents=True, exist_ok=True)
                src = tar.extractfile(member)
                assert src is not None
                dest.write_bytes(src.read())
        (staging / ".complete").write_text(repo.snapshot_sha + "\n")
        if target.exists():
            shutil.rmtree(target)
        staging.rename(target)
    except tarfile.TarError as exc:
        raise FetchFailed(f"{repo.id}: corrupt archive: {exc}") from exc
    finally:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)
    return target
