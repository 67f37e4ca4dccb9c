"""Splitting chatbot repositories into chatbot units by domain-file folder."""

from __future__ import annotations

import os
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, replace
from pathlib import Path, PurePosixPath
from typing import Any, Iterable

ROOT_FOLDER = "."
_ACTION_FILENAME = re.compile(r"^actions.*\.py$", re.IGNORECASE)
_ACTION_SUBCLASS = re.compile(
    r"^\s*class\s+\w+\s*\(\s*(?:[\w.]+\.)?"
    r"(?:Action|FormAction|FormValidationAction|ValidationAction)\s*[,)]",
    re.MULTILINE,
)
# Vendored environments ship rasa_sdk itself; its Action classes are not the bot's.
SKIP_DIRS = frozenset({".git", "node_modules", "venv", ".venv", "env", "site-packages", "__pycache__"})


@dataclass(frozen=True)
class ChatbotUnit:
    id: str
    repo: str
    folder: str
    domain_files: tuple[str, ...]
    action_files: tuple[str, ...] = ()
    readme_files: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k in ("domain_files", "action_files", "readme_files"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ChatbotUnit":
        return cls(
            id=d["id"],
            repo=d["repo"],
            folder=d["folder"],
            domain_files=tuple(d["domain_files"]),
            action_files=tuple(d.get("action_files") or ()),
            readme_files=tuple(d.get("readme_files") or ()),
        )


def unit_id(repo: str, folder: str) -> str:
    return f"{repo}:{folder}"


def chatbot_folder(domain_path: str) -> str:
    parent = PurePosixPath(domain_path).parent.as_posix()
    return parent if parent not in ("", ".") else ROOT_FOLDER


def partition_into_units(repo: str, valid_domains: Iterable[str]) -> list[ChatbotUnit]:
    """Group domain files by the directory that directly contains them.

    >>> [u.folder for u in partition_into_units("o/r", ["chatbots/a/domain1.yml",
    ...     "chatbots/a/domain2.yml", "chatbots/b/domain1.yml"])]
    ['chatbots/a', 'chatbots/b']
    """
    groups: dict[str, set[str]] = defaultdict(set)
    for path in valid_domains:
        groups[chatbot_folder(path)].add(path)
    if not groups:
        raise ValueError(f"{repo}: no valid domain files to partition")
    return [
        ChatbotUnit(id=unit_id(repo, folder), repo=repo, folder=folder,
                    domain_files=tuple(sorted(files)))
        for folder, files in sorted(groups.items())
    ]


def _within(rel: str, folder: str) -> bool:
    return folder == ROOT_FOLDER or rel == folder or rel.startswith(folder + "/")


def _walk_unit(tree_root: Path, folder: str, nested: Iterable[str]) -> Iterable[str]:
    """Yield repo-relative posix paths of files in ``folder`` minus nested unit folders."""
    nested = [n for n in nested if n != folder and _within(n, folder)]
    base = tree_root if folder == ROOT_FOLDER else tree_root / folder
    if not base.is_dir():
        return
    for dirpath, dirnames, filenames in os.walk(base):
        rel_dir = Path(dirpath).relative_to(tree_root).as_posix()
        kept = []
        for d in sorted(dirnames):
            child = d if rel_dir == "." else f"{rel_dir}/{d}"
            if d in SKIP_DIRS or any(_within(child, n) for n in nested):
                continue
            kept.append(d)
        dirnames[:] = kept
        for fn in sorted(filenames):
            yield fn if rel_dir == "." else f"{rel_dir}/{fn}"


def is_action_file(path: Path) -> bool:
    if path.suffix != ".py":
        return False
    if _ACTION_FILENAME.match(path.name):
        return True
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError:
        return False
    return bool(_ACTION_SUBCLASS.search(text))


def _is_readme(name: str) -> bool:
    return PurePosixPath(name).stem.lower() == "readme"


def attach_support_files(
    unit: ChatbotUnit, tree_root: str | Path, nested_folders: Iterable[str] = ()
) -> ChatbotUnit:
    """Attach backend action files and README files to ``unit``.

    ``nested_folders`` lists the folders of the repository's other units; their
    subtrees belong to those units and are not scanned.  READMEs come root
    first, then those inside the unit folder in path order.
    """
    root = Path(tree_root)
    files = list(_walk_unit(root, unit.folder, nested_folders))
    actions = tuple(sorted(f for f in files if is_action_file(root / f)))
    root_readmes = sorted(p.name for p in root.iterdir() if p.is_file() and _is_readme(p.name))
    folder_readmes = [f for f in files if _is_readme(f) and f not in root_readmes]
    return replace(unit, action_files=actions, readme_files=tuple(root_readmes + folder_readmes))
