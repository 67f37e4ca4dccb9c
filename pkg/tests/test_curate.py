import dataclasses
import random

from hypothesis import given, settings, strategies as st

from botcorpus.curate import (
    ALL_STAGES,
    FILTER_ORDER,
    CurationInput,
    SelectionVerdict,
    Stage,
    apply_selection,
    dialogue_filter,
    evaluate,
    fold_discontinued,
    functional_filter,
    utility_filters,
    verdict_from_dict,
    verdict_to_dict,
    write_selection_csv,
)
from botcorpus.domain import DomainModel, parse_version

BACKEND = 'class Go(Action):\n    def name(self):\n        return "action_go"\n'


def model(intents=("greet",), entities=("city",), slots=None, actions=("action_go", "utter_hi"), version="3.1"):
    return DomainModel(frozenset(intents), frozenset(entities), dict(slots or {}), frozenset(actions), version=version)


def good(uid, **kw):
    fields = dict(unit_id=uid, model=model(), overall_languages=frozenset({"en"}), stars=3, backend_sources=(BACKEND,))
    fields.update(kw)
    return CurationInput(**fields)


def test_dialogue_examples():
    assert dialogue_filter(model(entities=(), slots={"s": "text"}))
    assert not dialogue_filter(model(intents=()))
    assert not dialogue_filter(model(entities=()))


def test_functional_examples():
    assert functional_filter(model(), [BACKEND])
    assert not functional_filter(model(), [])
    assert not functional_filter(model(actions=("utter_hi",)), [BACKEND])
    # the name has to be a string literal, not a substring of another name
    assert not functional_filter(model(), ['return "action_go_home"'])


def test_utility_examples():
    assert utility_filters({"en", "vi"}, model(version="3.1"), 4) == {Stage.ENGLISH: True, Stage.VERSION: True, Stage.STARS: True}
    assert utility_filters({"en"}, model(version="2.8"), 4)[Stage.VERSION] is False
    assert utility_filters({"en"}, model(version=None), 4)[Stage.VERSION] is False
    assert utility_filters({"it"}, model(), 0) == {Stage.ENGLISH: False, Stage.VERSION: True, Stage.STARS: False}


def test_each_stage_removes_one():
    units = [good(f"u{k}") for k in range(5)] + [
        good("x-dialogue", model=model(intents=())),
        good("x-functional", backend_sources=()),
        good("x-english", overall_languages=frozenset({"de"})),
        good("x-version", model=model(version="2.8")),
        good("x-stars", stars=0),
    ]
    random.Random(1).shuffle(units)
    verdicts, counts = apply_selection(units)
    assert list(counts.values()) == [9, 8, 7, 6, 5]
    assert list(counts) == [s.value for s in FILTER_ORDER]
    failed = {v.unit_id: v.failed_stage for v in verdicts}
    assert failed["x-stars"] is Stage.STARS and failed["u0"] is None
    assert [v.unit_id for v in verdicts] == sorted(failed)


def test_first_failure_wins():
    v = evaluate(good("u", model=model(intents=()), stars=0))
    assert v.failed_stage is Stage.DIALOGUE and not v.passed


def test_discontinued_folding(tmp_path):
    verdicts, _ = apply_selection([good("a"), good("b"), good("c", stars=0)])
    out, counts = fold_discontinued(verdicts, {"b", "c"})
    assert [v.failed_stage for v in out] == [None, Stage.DISCONTINUED_SERVICE, Stage.STARS]
    assert counts == {"Dialogue": 3, "Functional": 3, "English": 3, "Version": 3, "Stars": 2, "DiscontinuedService": 1}
    assert [verdict_from_dict(verdict_to_dict(v)) for v in out] == out
    write_selection_csv(tmp_path / "s.csv", out)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "unit_id,Dialogue,Functional,English,Version,Stars,DiscontinuedService,passed,failed_stage"
    assert lines[2] == "b,true,true,true,true,true,false,false,DiscontinuedService"
    assert lines[3] == "c,true,true,true,true,false,,false,Stars"


# --- monotonicity --------------------------------------------------------------------

names = st.frozensets(st.sampled_from(["a", "b", "c"]), max_size=2)
versions = st.sampled_from([None, "1.10.2", "2.8", "3.0", "3.1", "3.6.2"])


@st.composite
def units(draw):
    actions = draw(st.frozensets(st.sampled_from(["action_a", "action_b", "utter_x"]), max_size=3))
    backend = draw(st.lists(st.sampled_from(['"action_a"', "'action_b'", "action_a", "pass"]), max_size=2))
    return CurationInput(
        unit_id="u",
        model=DomainModel(draw(names), draw(names), {s: "text" for s in draw(names)}, actions, version=draw(versions)),
        overall_languages=draw(st.frozensets(st.sampled_from(["en", "it"]), max_size=2)),
        stars=draw(st.integers(0, 3)),
        backend_sources=tuple(backend),
    )


def bump(version):
    v = parse_version(version)
    if v is None:
        return "1.0"
    return f"{v[0] + 1}.0" if len(v) == 1 else f"{v[0]}.{v[1] + 1}"


def mutate(u, how, rnd):
    m = u.model
    if how == "intent":
        m = dataclasses.replace(m, intents=m.intents | {"new_intent"})
    elif how == "entity":
        m = dataclasses.replace(m, entities=m.entities | {"new_entity"})
    elif how == "slot":
        m = dataclasses.replace(m, slots={**m.slots, "new_slot": "text"})
    elif how == "custom_action":
        m = dataclasses.replace(m, actions=m.actions | {rnd.choice(["action_new", "action_a", "action_b"])})
    elif how == "star":
        return dataclasses.replace(u, stars=u.stars + 1)
    elif how == "version":
        m = dataclasses.replace(m, version=bump(m.version))
    return dataclasses.replace(u, model=m)


@settings(max_examples=1000, deadline=None)
@given(units(), st.lists(st.sampled_from(["intent", "entity", "slot", "custom_action", "star", "version"]),
                         min_size=1, max_size=3), st.randoms())
def test_filters_are_monotone(unit, mutations, rnd):
    before = evaluate(unit)
    after = unit
    for how in mutations:
        after = mutate(after, how, rnd)
    after = evaluate(after)
    for stage, ok in before.stage_flags.items():
        if ok:
            assert after.stage_flags[stage], (stage, mutations)


@settings(max_examples=200, deadline=None)
@given(st.lists(units(), max_size=8), st.randoms())
def test_counts_non_increasing_and_order_free(us, rnd):
    us = [dataclasses.replace(u, unit_id=f"u{k}") for k, u in enumerate(us)]
    verdicts, counts = apply_selection(us)
    values = list(counts.values())
    assert all(a >= b for a, b in zip(values, values[1:]))
    shuffled = us[:]
    rnd.shuffle(shuffled)
    assert apply_selection(shuffled) == (verdicts, counts)
    for v in verdicts:
        assert v.passed == (v.failed_stage is None) == all(v.stage_flags.values())


def test_verdict_without_flags_passes():
    assert SelectionVerdict("u").passed
    assert len(ALL_STAGES) == 6
