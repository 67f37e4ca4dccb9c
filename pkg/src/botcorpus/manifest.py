"""Dataset manifest: the pipeline's durable, versioned JSON output.

Schema (``manifest_version`` 1)::

    {
      "manifest_version": 1,
      "dataset_name": "TOFU-R" | "BRASATO" | ...,
      "snapshot_date": "YYYY-MM-DD",
      "stage_counts": {"<counter>": int, ...},
      "units": [                              # sorted by id, ids unique
        {
          "id": "owner/name:folder",
          "repo": "owner/name", "folder": "chatbots/a" | ".",
          "snapshot_sha": str, "stars": int, "forks": int,
          "created_at": iso8601, "last_commit_at": iso8601 | null,
          "description": str,
          "domain_files": [...], "action_files": [...], "readme_files": [...],
          "reconcile": "Single" | "Identical" | "DisjointMerged",
          "intents": [...], "entities": [...], "slots": {name: type},
          "actions": [...], "custom_actions": [...], "response_actions": [...],
          "version": str | null, "version_source": "domain" | "requirements" | null,
          "languages": {"training": [...], "response": [...], "overall": [...], "reviewed": bool},
          "duplicates": {"group": str, "removed": [...]} | null,
          "selection": {"stage_flags": {...}, "passed": bool, "failed_stage": str | null} | null,
          "services": {"from_code": [...], "from_readme": [...], "final": [...],
                       "discontinued": [...]} | null,
          "topic": {"name": str, "novel": bool} | null
        }
      ]
    }

Only ``id``, the parameter lists, ``version``, ``languages.overall``,
``stars`` and ``last_commit_at`` are needed by the report; the other fields
are optional when converting foreign data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

MANIFEST_VERSION = 1


@dataclass
class DatasetManifest:
    dataset_name: str
    snapshot_date: str
    units: list[dict[str, Any]] = field(default_factory=list)
    stage_counts: dict[str, int] = field(default_factory=dict)
    manifest_version: int = MANIFEST_VERSION

    def __post_init__(self) -> None:
        ids = [u["id"] for u in self.units]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate unit ids in manifest: {dupes[:5]}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "manifest_version": self.manifest_version,
            "dataset_name": self.dataset_name,
            "snapshot_date": self.snapshot_date,
            "stage_counts": self.stage_counts,
            "units": sorted(self.units, key=lambda u: u["id"]),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DatasetManifest":
        version = d.get("manifest_version")
        if version != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest_version {version!r}")
        return cls(
            dataset_name=d["dataset_name"],
            snapshot_date=d["snapshot_date"],
            units=list(d.get("units") or []),
            stage_counts=dict(d.get("stage_counts") or {}),
            manifest_version=version,
        )

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
