"""Per-fact candidate sets: correct forms plus typed, hash-sampled distractors.

Distractor sampling is a pure function of (pool, fact, correct forms, k,
salt): every eligible entity id is keyed by a SHA-256 digest and the k
smallest keys win. Reruns, machine changes and pool permutations cannot
change the sample; changing the salt almost surely does.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .corpus import Corpus, Fact
from .errors import EmptyPool, NoDistractorsRemain

# Delimiter of the canonical hash string; ids and salts must simply not be
# interpreted, so any fixed delimiter works as long as it never changes.
HASH_DELIMITER = "‖"  # DOUBLE VERTICAL LINE


@dataclass(frozen=True)
class Distractor:
    entity_id: str
    form: str


@dataclass(frozen=True)
class CandidateSet:
    fact_id: str
    prompt: str
    correct_forms: tuple[str, ...]
    distractors: tuple[Distractor, ...]
    salt: str

    @property
    def size(self) -> int:
        return len(self.correct_forms) + len(self.distractors)


def distractor_key(salt: str, relation_id: str, language: str, entity_id: str) -> str:
    """Lowercase hex SHA-256 over the delimiter-joined canonical string."""
    canonical = HASH_DELIMITER.join((salt, relation_id, language, entity_id))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def sample_distractors(
    corpus: Corpus,
    object_pool,
    fact: Fact,
    correct_forms,
    k: int,
    salt: str,
) -> list[Distractor]:
    """Pick up to k distractors from the relation's object pool.

    Eligible are all pool entities except the fact's own object, entities
    without a default label in the fact's language, and entities whose
    default label byte-equals a correct form. When fewer than k are
    eligible, all of them are returned.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    correct = set(correct_forms)
    keyed: list[tuple[str, str, str]] = []
    for entity_id in object_pool:
        if entity_id == fact.object_id:
            continue
        entity = corpus.entities[entity_id]
        label = entity.label(fact.language)
        if label is None or label in correct:
            continue
        key = distractor_key(salt, fact.relation_id, fact.language, entity_id)
        keyed.append((key, entity_id, label))
    if not keyed:
        raise EmptyPool(
            f"no eligible distractors for fact {fact.id!r}",
            relation_id=fact.relation_id,
            language=fact.language,
        )
    keyed.sort()
    return [Distractor(entity_id, label) for _, entity_id, label in keyed[:k]]


def assemble_candidate_set(
    fact_id: str,
    prompt: str,
    correct_forms,
    distractors,
    salt: str,
) -> tuple[CandidateSet, list[Distractor]]:
    """Build the final candidate set, dropping form collisions.

    A distractor whose surface form byte-equals any correct form would be
    scored as wrong despite being right, so it is dropped; the dropped
    list is returned for the audit file. Distinct entities sharing a
    surface form among themselves are both kept.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    correct = list(correct_forms)
    if not correct:
        raise ValueError("correct_forms must be non-empty")
    correct_set = set(correct)
    kept: list[Distractor] = []
    dropped: list[Distractor] = []
    for distractor in distractors:
        (dropped if distractor.form in correct_set else kept).append(distractor)
    if not kept:
        raise NoDistractorsRemain(
            f"all distractors collide with correct forms for fact {fact_id!r}"
        )
    return (
        CandidateSet(
            fact_id=fact_id,
            prompt=prompt,
            correct_forms=tuple(correct),
            distractors=tuple(kept),
            salt=salt,
        ),
        dropped,
    )
