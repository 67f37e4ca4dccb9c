"""Curated-selection filters: dialogue, functional and utility criteria."""

from __future__ import annotations

import csv
import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .domain import DomainModel, version_major


class Stage(str, enum.Enum):
    DIALOGUE = "Dialogue"
    FUNCTIONAL = "Functional"
    ENGLISH = "English"
    VERSION = "Version"
    STARS = "Stars"
    DISCONTINUED_SERVICE = "DiscontinuedService"


FILTER_ORDER = (Stage.DIALOGUE, Stage.FUNCTIONAL, Stage.ENGLISH, Stage.VERSION, Stage.STARS)
ALL_STAGES = FILTER_ORDER + (Stage.DISCONTINUED_SERVICE,)
MIN_MAJOR_VERSION = 3


@dataclass(frozen=True)
class SelectionVerdict:
    unit_id: str
    stage_flags: dict[Stage, bool] = field(default_factory=dict)

    @property
    def failed_stage(self) -> Stage | None:
        for stage in ALL_STAGES:
            if stage in self.stage_flags and not self.stage_flags[stage]:
                return stage
        return None

    @property
    def passed(self) -> bool:
        return self.failed_stage is None

    def with_flag(self, stage: Stage, value: bool) -> "SelectionVerdict":
        flags = dict(self.stage_flags)
        flags[stage] = value
        return SelectionVerdict(self.unit_id, flags)


@dataclass(frozen=True)
class CurationInput:
    """One deduplicated unit with everything the filters read."""

    unit_id: str
    model: DomainModel
    overall_languages: frozenset[str]
    stars: int
    backend_sources: Sequence[str] = ()


def dialogue_filter(model: DomainModel) -> bool:
    return len(model.intents) >= 1 and (len(model.entities) >= 1 or len(model.slots) >= 1)


def _registered(name: str, sources: Iterable[str]) -> bool:
    pattern = re.compile(r"""(['"])""" + re.escape(name) + r"\1")
    return any(pattern.search(text) for text in sources)


def functional_filter(model: DomainModel, backend_sources: Sequence[str]) -> bool:
    """At least one declared custom action is registered in a backend file.

    Registration is detected statically: the action name must occur as a
    quoted string literal (what ``Action.name()`` returns).
    """
    return any(_registered(a, backend_sources) for a in sorted(model.custom_actions))


def utility_filters(overall_languages: Iterable[str], model: DomainModel, stars: int) -> dict[Stage, bool]:
    major = version_major(model.version)
    return {
        Stage.ENGLISH: "en" in set(overall_languages),
        Stage.VERSION: major is not None and major >= MIN_MAJOR_VERSION,
        Stage.STARS: stars >= 1,
    }


def evaluate(unit: CurationInput) -> SelectionVerdict:
    flags = {
        Stage.DIALOGUE: dialogue_filter(unit.model),
        Stage.FUNCTIONAL: functional_filter(unit.model, unit.backend_sources),
    }
    flags.update(utility_filters(unit.overall_languages, unit.model, unit.stars))
    return SelectionVerdict(unit.unit_id, flags)


def survivor_counts(verdicts: Sequence[SelectionVerdict], stages: Sequence[Stage] = FILTER_ORDER) -> dict[str, int]:
    """Units still selected after each stage, applying stages cumulatively."""
    counts: dict[str, int] = {}
    alive = list(verdicts)
    for stage in stages:
        alive = [v for v in alive if v.stage_flags.get(stage, True)]
        counts[stage.value] = len(alive)
    return counts


def apply_selection(units: Sequence[CurationInput]) -> tuple[list[SelectionVerdict], dict[str, int]]:
    verdicts = sorted((evaluate(u) for u in units), key=lambda v: v.unit_id)
    return verdicts, survivor_counts(verdicts)


def fold_discontinued(
    verdicts: Sequence[SelectionVerdict], discontinued_units: Iterable[str]
) -> tuple[list[SelectionVerdict], dict[str, int]]:
    """Add the discontinued-service flag computed by enrich to passing units."""
    flagged = set(discontinued_units)
    out = [
        v.with_flag(Stage.DISCONTINUED_SERVICE, v.unit_id not in flagged) if v.passed else v
        for v in verdicts
    ]
    return out, survivor_counts(out, ALL_STAGES)


def write_selection_csv(path: Path, verdicts: Sequence[SelectionVerdict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", *(s.value for s in ALL_STAGES), "passed", "failed_stage"])
        for v in verdicts:
            cells = ["" if s not in v.stage_flags else str(v.stage_flags[s]).lower() for s in ALL_STAGES]
            w.writerow([v.unit_id, *cells, str(v.passed).lower(), v.failed_stage.value if v.failed_stage else ""])


def verdict_to_dict(v: SelectionVerdict) -> dict:
    return {
        "unit_id": v.unit_id,
        "stage_flags": {s.value: v.stage_flags[s] for s in ALL_STAGES if s in v.stage_flags},
        "passed": v.passed,
        "failed_stage": v.failed_stage.value if v.failed_stage else None,
    }


def verdict_from_dict(d: Mapping) -> SelectionVerdict:
    return SelectionVerdict(d["unit_id"], {Stage(k): bool(v) for k, v in d["stage_flags"].items()})
