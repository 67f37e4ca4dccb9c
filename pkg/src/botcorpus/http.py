"""HTTP transports with a shared interface for live, replay and recording use.

Replay fixtures are plain JSON files, one per recorded request, named after a
digest of the canonicalized request (method, URL with sorted query string,
canonical JSON body and an optional replay tag).  The tag never goes over the
wire; it lets callers that send byte-identical requests on purpose (repeated
LLM sampling) address each response individually.

Fixture layout::

    {
      "request":  {"method": "GET", "url": "...", "body": null, "tag": null},
      "response": {"status": 200, "headers": {...}, "json": ...}
    }

``response`` may instead be ``responses`` (a list served in order, the last
entry repeating), which is how rate-limit retries are recorded.  A response
carries exactly one of ``json``, ``text`` or ``base64``.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol
from urllib.parse import parse_qsl, urlencode, urlsplit, urlunsplit

from .errors import FixtureMissing, TransportError

log = logging.getLogger(__name__)


@dataclass
class HttpResponse:
    status: int
    body: Any = None
    headers: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300

    def header(self, name: str, default: str | None = None) -> str | None:
        lowered = name.lower()
        for key, value in self.headers.items():
            if key.lower() == lowered:
                return value
        return default


class Transport(Protocol):
    calls: list[tuple[str, str]]

    def request(
        self,
        method: str,
        url: str,
        *,
        params: Mapping[str, Any] | None = None,
        json_body: Any = None,
        headers: Mapping[str, str] | None = None,
        tag: str | None = None,
    ) -> HttpResponse: ...


def canonical_url(url: str, params: Mapping[str, Any] | None = None) -> str:
    parts = urlsplit(url)
    query = parse_qsl(parts.query, keep_blank_values=True)
    if params:
        query.extend((k, str(v)) for k, v in params.items() if v is not None)
    query.sort()
    return urlunsplit((parts.scheme, parts.netloc.lower(), parts.path, urlencode(query), ""))


def request_key(
    method: str,
    url: str,
    params: Mapping[str, Any] | None = None,
    json_body: Any = None,
    tag: str | None = None,
) -> tuple[str, dict[str, Any]]:
    """Return ``(digest, description)`` identifying a request for replay."""
    desc = {
        "method": method.upper(),
        "url": canonical_url(url, params),
        "body": json_body,
        "tag": tag,
    }
    blob = json.dumps(desc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:32], desc


def encode_response(resp: HttpResponse) -> dict[str, Any]:
    out: dict[str, Any] = {"status": resp.status, "headers": dict(sorted(resp.headers.items()))}
    if isinstance(resp.body, (bytes, bytearray)):
        out["base64"] = base64.b64encode(bytes(resp.body)).decode("ascii")
    elif isinstance(resp.body, str):
        out["text"] = resp.body
    else:
        out["json"] = resp.body
    return out


def decode_response(data: Mapping[str, Any]) -> HttpResponse:
    if "base64" in data:
        body: Any = base64.b64decode(data["base64"])
    elif "text" in data:
        body = data["text"]
    else:
        body = data.get("json")
    return HttpResponse(status=int(data["status"]), body=body, headers=dict(data.get("headers") or {}))


class LiveTransport:
    """Thin wrapper over a :class:`requests.Session`."""

    def __init__(self, timeout: float = 60.0, session: Any = None) -> None:
        import requests

        self._session = session or requests.Session()
        self._timeout = timeout
        self.calls: list[tuple[str, str]] = []

    def request(self, method, url, *, params=None, json_body=None, headers=None, tag=None):
        import requests

        self.calls.append((method.upper(), canonical_url(url, params)))
        try:
            r = self._session.request(
                method, url, params=params, json=json_body, headers=dict(headers or {}),
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"{method} {url}: {exc}") from exc
        ctype = r.headers.get("Content-Type", "")
        if "json" in ctype:
            try:
                body: Any = r.json()
            except ValueError:
                body = r.text
        elif ctype.startswith("text/"):
            body = r.text
        else:
            body = r.content
        return HttpResponse(status=r.status_code, body=body, headers=dict(r.headers))


class ReplayTransport:
    """Serves recorded responses from a fixture directory; never touches the network."""

    def __init__(self, fixture_dir: str | Path) -> None:
        self.fixture_dir = Path(fixture_dir)
        self.calls: list[tuple[str, str]] = []
        self._served: dict[str, int] = {}
        self._lock = threading.Lock()

    def request(self, method, url, *, params=None, json_body=None, headers=None, tag=None):
        key, desc = request_key(method, url, params, json_body, tag)
        path = self.fixture_dir / f"{key}.json"
        with self._lock:
            self.calls.append((desc["method"], desc["url"]))
            if not path.is_file():
                raise FixtureMissing(key, desc["method"], desc["url"])
            data = json.loads(path.read_text(encoding="utf-8"))
            if "responses" in data:
                seq = data["responses"]
                idx = self._served.get(key, 0)
                self._served[key] = idx + 1
                return decode_response(seq[min(idx, len(seq) - 1)])
            return decode_response(data["response"])


class RecordingTransport:
    """Forwards to an inner transport and writes every exchange as a fixture."""

    def __init__(self, inner: Transport, fixture_dir: str | Path) -> None:
        self.inner = inner
        self.fixture_dir = Path(fixture_dir)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)
        self.calls: list[tuple[str, str]] = []
        self._seen: dict[str, list[dict[str, Any]]] = {}
        self._lock = threading.Lock()

    def request(self, method, url, *, params=None, json_body=None, headers=None, tag=None):
        key, desc = request_key(method, url, params, json_body, tag)
        resp = self.inner.request(
            method, url, params=params, json_body=json_body, headers=headers, tag=tag
        )
        with self._lock:
            self.calls.append((desc["method"], desc["url"]))
            recorded = self._seen.setdefault(key, [])
            recorded.append(encode_response(resp))
            doc: dict[str, Any] = {"request": desc}
            if len(recorded) == 1:
                doc["response"] = recorded[0]
            else:
                doc["responses"] = recorded
            path = self.fixture_dir / f"{key}.json"
            path.write_text(
                json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
        return resp


Handler = Callable[[str, str, dict[str, str], Any], HttpResponse]


class HandlerTransport:
    """Routes requests to an in-process handler; used for fakes and recording."""

    def __init__(self, handler: Handler) -> None:
        self.handler = handler
        self.calls: list[tuple[str, str]] = []

    def request(self, method, url, *, params=None, json_body=None, headers=None, tag=None):
        full = canonical_url(url, params)
        self.calls.append((method.upper(), full))
        query = dict(parse_qsl(urlsplit(full).query, keep_blank_values=True))
        return self.handler(method.upper(), full, query, json_body)
