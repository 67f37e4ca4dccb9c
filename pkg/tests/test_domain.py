import itertools
import textwrap

import pytest
from hypothesis import given, settings, strategies as st

from botcorpus.domain import (
    DomainModel,
    ReconcileKind,
    ReconcileVerdict,
    find_rasa_pin,
    parse_domain,
    parse_version,
    reconcile,
    version_major,
    version_sort_key,
)
from botcorpus.errors import SemanticError

PIZZA = """\
version: "3.1"
intents:
  - greet
  - order_pizza:
      use_entities: true
entities:
  - pizzaType
slots:
  pizzaType:
    type: text
    mappings:
      - type: from_entity
        entity: pizzaType
actions:
  - action_place_order
responses:
  utter_greet:
    - text: Hi! Which pizza?
    - text: Hello there
"""


def domain(tmp_path, text, name="domain.yml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def test_pizza_domain(tmp_path):
    m = parse_domain(domain(tmp_path, PIZZA))
    assert m.intents == {"greet", "order_pizza"}
    assert m.entities == {"pizzaType"}
    assert m.slots == {"pizzaType": "text"}
    assert m.actions == {"action_place_order", "utter_greet"}
    assert m.custom_actions == {"action_place_order"}
    assert m.response_actions == {"utter_greet"}
    assert m.responses == {"utter_greet": ("Hi! Which pizza?", "Hello there")}
    assert (m.version, m.version_source) == ("3.1", "domain")
    assert parse_domain(domain(tmp_path, PIZZA)) == m
    assert DomainModel.from_dict(m.to_dict()) == m


def test_empty_intents_is_legal(tmp_path):
    m = parse_domain(domain(tmp_path, "intents: []\n"))
    assert m.intents == frozenset() and m.version is None


def test_legacy_templates_key(tmp_path):
    m = parse_domain(domain(tmp_path, "intents: [a]\ntemplates:\n  utter_a:\n    - text: hey\n"))
    assert m.response_actions == {"utter_a"}


@pytest.mark.parametrize("text", [
    "intents: [a]\nslots:\n  - s\n",
    "intents: [a]\nslots:\n  s:\n    type: number\n",
    "intents: [a]\nslots:\n  s: {}\n",
    "intents:\n  - [a, b]\n",
    "intents:\n  - {a: 1, b: 2}\n",
    "intents: greet\n",
    "intents: [a]\nresponses:\n  utter_a: hello\n",
])
def test_semantic_errors(tmp_path, text):
    with pytest.raises(SemanticError):
        parse_domain(domain(tmp_path, text))


def test_custom_and_legacy_slot_types(tmp_path):
    m = parse_domain(domain(tmp_path, "intents: [a]\nslots:\n  x: {type: my.pkg.Slot}\n  y: {type: unfeaturized}\n"))
    assert m.slots == {"x": "my.pkg.Slot", "y": "unfeaturized"}


def M(intents=(), entities=(), slots=None, actions=(), version=None):
    return DomainModel(frozenset(intents), frozenset(entities), dict(slots or {}), frozenset(actions),
                       version=version, version_source=None if version is None else "domain")


def test_reconcile_examples():
    single = M(["a"])
    assert reconcile([single]) == ReconcileVerdict(ReconcileKind.SINGLE, single)
    ident = reconcile([M(["a", "b"], version="2.0"), M(["b", "a"], version="3.0")])
    assert ident.kind is ReconcileKind.IDENTICAL and ident.merged.version == "3.0"
    merged = reconcile([M(["A", "B"]), M(["C"], ["E"])])
    assert merged.kind is ReconcileKind.DISJOINT_MERGED
    assert merged.merged.intents == {"A", "B", "C"} and merged.merged.entities == {"E"}
    assert reconcile([M(["A", "B"]), M(["B", "C"])]) == ReconcileVerdict(ReconcileKind.CONFLICT)
    # sharing a name in any one family is enough for a conflict
    assert reconcile([M(["A"], slots={"s": "text"}), M(["B"], slots={"s": "text"})]).kind is ReconcileKind.CONFLICT
    with pytest.raises(ValueError):
        reconcile([])
    with pytest.raises(ValueError):
        ReconcileVerdict(ReconcileKind.CONFLICT, single)


names = st.frozensets(st.sampled_from("abcdefgh"), max_size=4)
models = st.builds(
    lambda i, e, s, a, v: M(i, [x.upper() for x in e], {x + "_s": "text" for x in s}, ["utter_" + x for x in a], v),
    names, names, names, names, st.sampled_from([None, "1.0", "2.8.1", "3.1", "3.10"]),
)


@settings(max_examples=300, deadline=None)
@given(st.lists(models, min_size=1, max_size=4), st.randoms())
def test_reconcile_properties(ms, rnd):
    verdict = reconcile(ms)
    shuffled = ms[:]
    rnd.shuffle(shuffled)
    assert reconcile(shuffled).kind is verdict.kind
    if verdict.merged is not None:
        assert reconcile(shuffled).merged.parameters() == verdict.merged.parameters()
    if verdict.kind is ReconcileKind.DISJOINT_MERGED:
        m = verdict.merged
        assert len(m.intents) == sum(len(x.intents) for x in ms)
        assert len(m.entities) == sum(len(x.entities) for x in ms)
        assert len(m.slots) == sum(len(x.slots) for x in ms)
        assert len(m.actions) == sum(len(x.actions) for x in ms)
    for m in ms:
        assert len(m.actions) == len(m.custom_actions) + len(m.response_actions)


def test_version_parsing():
    assert parse_version("3.1.0") == (3, 1)
    assert parse_version("v2.8.21") == (2, 8, 21)
    assert parse_version("3.0a1") == (3,)
    assert parse_version("latest") is None
    assert version_major("3.10") == 3 and version_major(None) is None
    ordered = [None, "1.10.2", "2.8", "3.1", "3.10"]
    assert sorted(reversed(ordered), key=version_sort_key) == ordered
    assert version_sort_key("3.1") == version_sort_key("3.1") and version_sort_key("3.1") < version_sort_key("3.2")


@pytest.mark.parametrize("name,text,want", [
    ("requirements.txt", "numpy\nrasa==3.6.2\n", "3.6.2"),
    ("requirements-dev.txt", "rasa[full]>=2.8\n", "2.8"),
    ("pyproject.toml", '[tool.poetry.dependencies]\nrasa = "^3.1"\n', "3.1"),
    ("setup.py", "install_requires=['rasa~=1.10']", None),
    ("requirements.txt", "rasa-sdk==3.0\n", None),
])
def test_rasa_pin(tmp_path, name, text, want):
    (tmp_path / name).write_text(text)
    assert find_rasa_pin(tmp_path) == want


def test_rasa_pin_folder_order(tmp_path):
    (tmp_path / "bot").mkdir()
    (tmp_path / "bot" / "requirements.txt").write_text("rasa==3.2\n")
    (tmp_path / "requirements.txt").write_text("rasa==2.0\n")
    assert find_rasa_pin(tmp_path, ["bot", "."]) == "3.2"
    assert find_rasa_pin(tmp_path, ["missing"]) is None
