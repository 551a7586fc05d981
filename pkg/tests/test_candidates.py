import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factprobe.candidates import (
    Distractor,
    assemble_candidate_set,
    distractor_key,
    sample_distractors,
)
from factprobe.corpus import Corpus, Entity, Fact, Relation
from factprobe.errors import EmptyPool, NoDistractorsRemain

from oracle_distractors import oracle_sample


def _corpus(entity_ids, language="aa", label=None):
    label = label or (lambda eid: f"{eid}-label")
    entities = {
        eid: Entity(id=eid, labels={language: label(eid), "en": f"{eid}-en"})
        for eid in entity_ids
    }
    entities["SUBJ"] = Entity(id="SUBJ", labels={language: "subj"})
    relations = {
        "P1": Relation(
            id="P1",
            english_template="[X] r [Y] .",
            templates={language: "[X] r [Y] ."},
            object_final={language: True},
        )
    }
    facts = {}
    return Corpus(entities=entities, relations=relations, facts=facts)


def _fact(object_id, relation_id="P1", language="aa"):
    return Fact(
        id="f1", subject_id="SUBJ", relation_id=relation_id,
        object_id=object_id, language=language,
    )


def test_sample_matches_frozen_oracle_case():
    # Frozen with tests/oracle_distractors.py before the implementation:
    # oracle_sample("s1", "P1", "aa", ["e1", "e3"], 2) == ["e3", "e1"]
    corpus = _corpus(["e1", "e2", "e3"])
    picked = sample_distractors(
        corpus, ["e1", "e2", "e3"], _fact("e2"), ["e2-label"], k=2, salt="s1"
    )
    assert [d.entity_id for d in picked] == ["e3", "e1"]


def test_sample_matches_oracle_dynamic():
    ids = [f"entity{i:03d}" for i in range(40)]
    corpus = _corpus(ids)
    fact = _fact("entity000")
    picked = sample_distractors(corpus, ids, fact, ["entity000-label"], k=10,
                                salt="dyn")
    eligible = [e for e in ids if e != "entity000"]
    assert [d.entity_id for d in picked] == oracle_sample("dyn", "P1", "aa",
                                                          eligible, 10)


def test_sample_returns_all_when_pool_small():
    ids = [f"e{i}" for i in range(19)]
    corpus = _corpus(ids)
    picked = sample_distractors(corpus, ids, _fact("e0"), ["e0-label"], k=50,
                                salt="s")
    assert len(picked) == 18


def test_sample_is_deterministic():
    ids = [f"e{i}" for i in range(30)]
    corpus = _corpus(ids)
    a = sample_distractors(corpus, ids, _fact("e0"), ["e0-label"], 5, "s")
    b = sample_distractors(corpus, ids, _fact("e0"), ["e0-label"], 5, "s")
    assert a == b


@given(seed=st.integers(min_value=0, max_value=10_000))
@settings(max_examples=50, deadline=None)
def test_sample_pool_permutation_invariance(seed):
    ids = [f"e{i}" for i in range(25)]
    corpus = _corpus(ids)
    shuffled = ids[:]
    random.Random(seed).shuffle(shuffled)
    base = sample_distractors(corpus, ids, _fact("e0"), ["e0-label"], 7, "s")
    other = sample_distractors(corpus, shuffled, _fact("e0"), ["e0-label"], 7, "s")
    assert base == other


def test_salt_changes_sample_not_size():
    ids = [f"e{i}" for i in range(40)]
    corpus = _corpus(ids)
    a = sample_distractors(corpus, ids, _fact("e0"), ["e0-label"], 10, "salt-a")
    b = sample_distractors(corpus, ids, _fact("e0"), ["e0-label"], 10, "salt-b")
    assert len(a) == len(b) == 10
    assert [d.entity_id for d in a] != [d.entity_id for d in b]


def test_own_object_never_sampled():
    ids = [f"e{i}" for i in range(10)]
    corpus = _corpus(ids)
    picked = sample_distractors(corpus, ids, _fact("e3"), ["e3-label"], 50, "s")
    assert "e3" not in {d.entity_id for d in picked}


def test_label_collision_with_correct_form_excluded():
    ids = ["e1", "e2", "e3"]
    corpus = _corpus(ids)
    picked = sample_distractors(
        corpus, ids, _fact("e1"), ["e1-label", "e2-label"], 50, "s"
    )
    assert {d.entity_id for d in picked} == {"e3"}


def test_entity_without_target_label_skipped():
    corpus = _corpus(["e1", "e2"])
    corpus.entities["e9"] = Entity(id="e9", labels={"en": "only-english"})
    picked = sample_distractors(
        corpus, ["e1", "e2", "e9"], _fact("e1"), ["e1-label"], 50, "s"
    )
    assert {d.entity_id for d in picked} == {"e2"}


def test_empty_pool_raises():
    corpus = _corpus(["e1"])
    with pytest.raises(EmptyPool):
        sample_distractors(corpus, ["e1"], _fact("e1"), ["e1-label"], 5, "s")


def test_distractor_key_shape():
    key = distractor_key("s", "P1", "aa", "e1")
    assert len(key) == 64
    assert key == key.lower()


def test_assemble_drops_correct_form_collisions():
    candidate_set, dropped = assemble_candidate_set(
        "f1", "prompt ", ["Praha", "Praze"],
        [Distractor("d1", "Praha"), Distractor("d2", "Brno")], "s",
    )
    assert [d.form for d in candidate_set.distractors] == ["Brno"]
    assert [d.form for d in dropped] == ["Praha"]


def test_assemble_cardinality():
    distractors = [Distractor(f"d{i}", f"form{i}") for i in range(50)]
    candidate_set, dropped = assemble_candidate_set(
        "f1", "prompt ", ["c1", "c2"], distractors, "s"
    )
    assert candidate_set.size == 52
    assert dropped == []


def test_assemble_keeps_duplicate_distractor_labels():
    # Two distinct entities sharing a surface form both stay.
    candidate_set, _ = assemble_candidate_set(
        "f1", "prompt ", ["correct"],
        [Distractor("d1", "twin"), Distractor("d2", "twin")], "s",
    )
    assert [d.entity_id for d in candidate_set.distractors] == ["d1", "d2"]


def test_assemble_requires_surviving_distractor():
    with pytest.raises(NoDistractorsRemain):
        assemble_candidate_set(
            "f1", "prompt ", ["same"], [Distractor("d1", "same")], "s"
        )
