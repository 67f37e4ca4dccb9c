"""Descriptive statistics over a dataset manifest, written as CSV, JSON and SVG."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from datetime import date, datetime
from pathlib import Path
from typing import Any, Iterable, Sequence

from .domain import version_major
from .errors import EmptyManifest
from .manifest import DatasetManifest

RASA3_RELEASE = date(2021, 12, 1)
VERSION_CATEGORIES = ("3.x", "2.x", "1.x", "<3.0", "Undefined")
DIALOGUE_PARAMETERS = ("intents", "entities", "slots")
FORMATS = frozenset({"csv", "json", "svg"})


def quantile(values: Sequence[float], q: float) -> float:
    """Linear interpolation between order statistics (h = (n - 1) * q)."""
    if not values:
        raise ValueError("quantile of an empty list")
    if not 0 <= q <= 1:
        raise ValueError("q must be in [0, 1]")
    xs = sorted(values)
    h = (len(xs) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def summarize(values: Sequence[float]) -> dict[str, float]:
    return {
        "n": len(values),
        "min": min(values),
        "q1": quantile(values, 0.25),
        "median": quantile(values, 0.5),
        "q3": quantile(values, 0.75),
        "max": max(values),
    }


def _units(manifest: DatasetManifest) -> list[dict[str, Any]]:
    if not manifest.units:
        raise EmptyManifest(f"{manifest.dataset_name}: manifest has no units")
    return sorted(manifest.units, key=lambda u: u["id"])


def _count(unit: dict[str, Any], key: str) -> int:
    value = unit.get(key)
    return len(value) if value is not None else 0


# --- dialogue ---------------------------------------------------------------------

def dialogue_stats(manifest: DatasetManifest) -> dict[str, dict[str, Any]]:
    units = _units(manifest)
    out = {}
    for param in DIALOGUE_PARAMETERS:
        values = sorted(_count(u, param) for u in units)
        out[param] = {**summarize(values), "values": values}
    return out


# --- utility ----------------------------------------------------------------------

def _day(text: str | None) -> date | None:
    if not text:
        return None
    return datetime.fromisoformat(text.replace("Z", "+00:00")).date()


def version_category(unit: dict[str, Any], rasa3_release: date = RASA3_RELEASE) -> str:
    """Bucket a unit by Rasa major version.

    Units without a version go to "<3.0" when their last update predates the
    Rasa 3 release (they cannot target it) and to "Undefined" otherwise.
    """
    major = version_major(unit.get("version"))
    if major is not None:
        if major >= 3:
            return "3.x"
        if major in (1, 2):
            return f"{major}.x"
        return "<3.0"
    last = _day(unit.get("last_commit_at"))
    if last is not None and last < rasa3_release:
        return "<3.0"
    return "Undefined"


def _overall(unit: dict[str, Any]) -> list[str]:
    return list((unit.get("languages") or {}).get("overall") or [])


def utility_tables(manifest: DatasetManifest, rasa3_release: date = RASA3_RELEASE) -> dict[str, Any]:
    units = _units(manifest)
    lang_counts = Counter(len(_overall(u)) for u in units)
    by_code = Counter(code for u in units for code in _overall(u))
    versions = Counter(version_category(u, rasa3_release) for u in units)
    stars = Counter(int(u.get("stars") or 0) for u in units)
    topics = Counter((u.get("topic") or {}).get("name") for u in units if u.get("topic"))
    return {
        "language_counts": dict(sorted(lang_counts.items())),
        "languages_by_code": dict(sorted(by_code.items(), key=lambda kv: (-kv[1], kv[0]))),
        "versions": {c: versions.get(c, 0) for c in VERSION_CATEGORIES},
        "stars": dict(sorted(stars.items())),
        "topics": dict(sorted(topics.items(), key=lambda kv: (-kv[1], kv[0]))),
    }


# --- functional -------------------------------------------------------------------

def _services(unit: dict[str, Any]) -> list[str] | None:
    svc = unit.get("services")
    if svc is None:
        return None
    return list(svc.get("final") or [])


def functional_stats(manifest: DatasetManifest) -> dict[str, Any]:
    units = _units(manifest)
    actions = [_count(u, "actions") for u in units]
    custom = [_count(u, "custom_actions") for u in units]
    share = [c / a if a else 0.0 for a, c in zip(actions, custom)]
    with_services = [s for s in (_services(u) for u in units) if s is not None]
    per_unit = [len(s) for s in with_services]
    service_freq = Counter(name for s in with_services for name in set(s))
    return {
        "actions": {**summarize(actions), "values": sorted(actions)},
        "custom_actions": {**summarize(custom), "values": sorted(custom)},
        "custom_share": {
            "no_actions": sum(a == 0 for a in actions),
            "no_custom_actions": sum(a > 0 and c == 0 for a, c in zip(actions, custom)),
            "values": sorted(round(x, 6) for x in share),
        },
        "service_histogram": dict(sorted(Counter(per_unit).items())),
        "service_summary": {
            "units_analyzed": len(per_unit),
            "units_with_services": sum(n > 0 for n in per_unit),
            "units_without_services": sum(n == 0 for n in per_unit),
            "max_services": max(per_unit, default=0),
            "total_services": sum(per_unit),
            "distinct_services": len(service_freq),
        },
        "top_services": [
            {"service": name, "units": n}
            for name, n in sorted(service_freq.items(), key=lambda kv: (-kv[1], kv[0]))
        ],
    }


def compute_stats(manifest: DatasetManifest, rasa3_release: date = RASA3_RELEASE) -> dict[str, Any]:
    return {
        "dataset": manifest.dataset_name,
        "units": len(_units(manifest)),
        "dialogue": dialogue_stats(manifest),
        "utility": utility_tables(manifest, rasa3_release),
        "functional": functional_stats(manifest),
    }


# --- output -----------------------------------------------------------------------

def _tables(stats: dict[str, Any]) -> dict[str, tuple[list[str], list[list[Any]]]]:
    dia, util, fun = stats["dialogue"], stats["utility"], stats["functional"]
    summary_cols = ["n", "min", "q1", "median", "q3", "max"]
    return {
        "dialogue": (["parameter", *summary_cols], [[p, *(dia[p][c] for c in summary_cols)] for p in DIALOGUE_PARAMETERS]),
        "language_counts": (["languages", "chatbots"], [[k, v] for k, v in util["language_counts"].items()]),
        "languages_by_code": (["language", "chatbots"], [[k, v] for k, v in util["languages_by_code"].items()]),
        "versions": (["version", "chatbots"], [[k, v] for k, v in util["versions"].items()]),
        "stars": (["stars", "chatbots"], [[k, v] for k, v in util["stars"].items()]),
        "topics": (["topic", "chatbots"], [[k, v] for k, v in util["topics"].items()]),
        "actions": (["parameter", *summary_cols], [[p, *(fun[p][c] for c in summary_cols)] for p in ("actions", "custom_actions")]),
        "service_histogram": (["services", "chatbots"], [[k, v] for k, v in fun["service_histogram"].items()]),
        "service_summary": (["metric", "value"], [[k, v] for k, v in fun["service_summary"].items()]),
        "top_services": (["service", "chatbots"], [[r["service"], r["units"]] for r in fun["top_services"]]),
    }


def _fmt(v: Any) -> Any:
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if isinstance(v, float):
        return round(v, 6)
    return v


def _write_csv(path: Path, header: list[str], rows: list[list[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_fmt(c) for c in r] for r in rows])


def _write_json(path: Path, header: list[str], rows: list[list[Any]]) -> None:
    records = [dict(zip(header, (_fmt(c) for c in r))) for r in rows]
    path.write_text(json.dumps(records, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "botcorpus"
    plt.rcParams["svg.fonttype"] = "path"
    return plt


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None}, bbox_inches="tight")


def _boxplot(path: Path, title: str, series: dict[str, list[float]]) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = list(series)
    ax.boxplot([series[k] or [0] for k in labels], whis=1.5)
    ax.set_xticks(range(1, len(labels) + 1), labels)
    ax.set_yscale("symlog", linthresh=1)
    ax.set_title(title)
    _save(fig, path)
    plt.close(fig)


def _bars(path: Path, title: str, xlabel: str, data: dict[Any, int]) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(max(4, 0.45 * len(data) + 2), 4))
    keys = [str(k) for k in data]
    ax.bar(range(len(keys)), list(data.values()), color="#4c72b0")
    ax.set_xticks(range(len(keys)), keys, rotation=45 if len(keys) > 8 else 0, ha="right" if len(keys) > 8 else "center")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("chatbots")
    ax.set_title(title)
    _save(fig, path)
    plt.close(fig)


def _histogram(path: Path, title: str, values: list[float]) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=[i / 10 for i in range(11)], color="#55a868", edgecolor="black")
    ax.set_xlabel("share of custom actions")
    ax.set_ylabel("chatbots")
    ax.set_title(title)
    _save(fig, path)
    plt.close(fig)


def emit_outputs(stats: dict[str, Any], out_dir: str | Path, formats: Iterable[str]) -> list[Path]:
    """Write one file per table (csv/json) and per figure (svg); returns sorted paths."""
    formats = set(formats)
    unknown = formats - FORMATS
    if unknown:
        raise ValueError(f"unknown formats {sorted(unknown)}")
    if not formats:
        return []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name, (header, rows) in _tables(stats).items():
        if "csv" in formats:
            _write_csv(out / f"{name}.csv", header, rows)
            written.append(out / f"{name}.csv")
        if "json" in formats:
            _write_json(out / f"{name}.json", header, rows)
            written.append(out / f"{name}.json")
    if "svg" in formats:
        ds = stats["dataset"]
        dia, util, fun = stats["dialogue"], stats["utility"], stats["functional"]
        figures = {
            "dialogue_boxplot.svg": lambda p: _boxplot(p, f"Dialogue parameters ({ds})", {k: dia[k]["values"] for k in DIALOGUE_PARAMETERS}),
            "actions_boxplot.svg": lambda p: _boxplot(p, f"Actions per chatbot ({ds})", {k: fun[k]["values"] for k in ("actions", "custom_actions")}),
            "custom_share_hist.svg": lambda p: _histogram(p, f"Custom-action share ({ds})", fun["custom_share"]["values"]),
            "services_hist.svg": lambda p: _bars(p, f"Chatbots by service count ({ds})", "external services", fun["service_histogram"]),
            "languages_bar.svg": lambda p: _bars(p, f"Languages ({ds})", "language", util["languages_by_code"]),
            "versions_bar.svg": lambda p: _bars(p, f"Rasa versions ({ds})", "version", util["versions"]),
            "stars_hist.svg": lambda p: _bars(p, f"GitHub stars ({ds})", "stars", util["stars"]),
            "topics_bar.svg": lambda p: _bars(p, f"Topics ({ds})", "topic", util["topics"]),
        }
        for fname, draw in figures.items():
            draw(out / fname)
            written.append(out / fname)
    return sorted(written)
