"""Locate the (possibly inflected) object form in a verbalization and split
it into a prompt prefix and the object surface form.

Matching is tool-free by default: an exact whole-word pass first, then a
stem pass that aligns label words to consecutive sentence words under a
common-prefix rule. A lemmatizer can be plugged in by name for languages
where stem matching is too blunt.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping

from .corpus import (
    PLACEHOLDER_OBJECT,
    PLACEHOLDER_SUBJECT,
    Corpus,
    Entity,
    Fact,
    is_punctuation_or_space,
)
from .errors import MissingLabel, NoAcceptedSplits

# Hyphens are not word characters, so hyphenated names split like whitespace.
_WORD_RE = re.compile(r"\w+", re.UNICODE)

# Registry of pluggable lemmatizers: name -> callable(word) -> lemma.
_LEMMATIZERS: dict[str, Callable[[str], str]] = {}


def register_lemmatizer(name: str, fn: Callable[[str], str]) -> None:
    _LEMMATIZERS[name] = fn


def get_lemmatizer(name: str) -> Callable[[str], str] | None:
    return _LEMMATIZERS.get(name)


class MatchVia(str, enum.Enum):
    EXACT = "EXACT"
    STEM = "STEM"
    LEMMA = "LEMMA"


REJECT_OBJECT_NOT_FOUND = "OBJECT_NOT_FOUND"
REJECT_NOT_SENTENCE_FINAL = "NOT_SENTENCE_FINAL"


@dataclass(frozen=True)
class MatchConfig:
    """Knobs for the stem matcher.

    ``min_prefix_ratio`` is the fraction of each label word that must match
    as a common prefix, ``min_prefix_chars`` an absolute floor (capped at
    the label word length so exact matches of short words always pass), and
    ``max_suffix_delta`` bounds how long either word's tail beyond the
    common prefix may be.
    """

    min_prefix_ratio: float = 0.6
    min_prefix_chars: int = 3
    max_suffix_delta: int = 4
    lemmatizer: str | None = None

    def __post_init__(self):
        if not (0 < self.min_prefix_ratio <= 1):
            raise ValueError("min_prefix_ratio must be in (0, 1]")
        if self.min_prefix_chars < 1:
            raise ValueError("min_prefix_chars must be >= 1")
        if self.max_suffix_delta < 0:
            raise ValueError("max_suffix_delta must be >= 0")


@dataclass(frozen=True)
class ObjectMatch:
    span: tuple[int, int]
    form: str
    matched_via: MatchVia
    confidence: float  # min per-word prefix ratio; 1.0 for EXACT and LEMMA


@dataclass(frozen=True)
class SplitResult:
    prompt_prefix: str
    object_form: str
    span: tuple[int, int]
    matched_via: MatchVia
    confidence: float = 1.0


@dataclass(frozen=True)
class Rejection:
    reason: str
    detail: str = ""


def _tokenize(text: str) -> list[tuple[int, int, str]]:
    return [(m.start(), m.end(), m.group()) for m in _WORD_RE.finditer(text)]


def _common_prefix_len(a: str, b: str) -> int:
    n = min(len(a), len(b))
    i = 0
    while i < n and a[i] == b[i]:
        i += 1
    return i


def _stem_word_ratio(label_word: str, sentence_word: str, config: MatchConfig) -> float | None:
    """Prefix ratio if the word pair passes the stem rule, else None."""
    prefix = _common_prefix_len(label_word, sentence_word)
    need = min(
        len(label_word),
        max(config.min_prefix_chars, math.ceil(config.min_prefix_ratio * len(label_word))),
    )
    if prefix < need:
        return None
    if max(len(label_word) - prefix, len(sentence_word) - prefix) > config.max_suffix_delta:
        return None
    return prefix / len(label_word)


def match_object_form(
    sentence: str, labels: list[str], config: MatchConfig | None = None
) -> ObjectMatch | None:
    """Find the rightmost occurrence of any candidate label in the sentence.

    An EXACT whole-word match of any label wins over any STEM match; a
    configured lemmatizer is a last resort. Returns None when nothing
    matches (absence is a value, not an error).
    """
    if not labels:
        raise ValueError("labels must be non-empty")
    config = config or MatchConfig()
    tokens = _tokenize(sentence)

    label_words = []
    for label in labels:
        words = [w for _, _, w in _tokenize(label)]
        label_words.append(words)

    def windows(n_words: int):
        for start in range(len(tokens) - n_words + 1):
            yield start

    best: tuple[tuple[int, int], int, float] | None = None  # (span, -label_idx, conf)

    def consider(span: tuple[int, int], label_idx: int, conf: float):
        nonlocal best
        key = (span, -label_idx, conf)
        if best is None or key[0] > best[0] or (key[0] == best[0] and key[1] > best[1]):
            best = key

    # Pass 1: exact whole-word matches.
    for idx, words in enumerate(label_words):
        if not words:
            continue
        for start in windows(len(words)):
            window = tokens[start : start + len(words)]
            if all(w == t[2] for w, t in zip(words, window)):
                consider((window[0][0], window[-1][1]), idx, 1.0)
    if best is not None:
        span = best[0]
        return ObjectMatch(span, sentence[span[0] : span[1]], MatchVia.EXACT, 1.0)

    # Pass 2: stem matches.
    for idx, words in enumerate(label_words):
        if not words:
            continue
        for start in windows(len(words)):
            window = tokens[start : start + len(words)]
            ratios = []
            for w, t in zip(words, window):
                ratio = _stem_word_ratio(w, t[2], config)
                if ratio is None:
                    break
                ratios.append(ratio)
            else:
                consider((window[0][0], window[-1][1]), idx, min(ratios))
    if best is not None:
        span, _, conf = best
        return ObjectMatch(span, sentence[span[0] : span[1]], MatchVia.STEM, conf)

    # Pass 3: lemma equality, when a lemmatizer is configured.
    lemmatize = get_lemmatizer(config.lemmatizer) if config.lemmatizer else None
    if lemmatize is not None:
        for idx, words in enumerate(label_words):
            if not words:
                continue
            lemmas = [lemmatize(w) for w in words]
            for start in windows(len(words)):
                window = tokens[start : start + len(words)]
                if all(lm == lemmatize(t[2]) for lm, t in zip(lemmas, window)):
                    consider((window[0][0], window[-1][1]), idx, 1.0)
        if best is not None:
            span = best[0]
            return ObjectMatch(span, sentence[span[0] : span[1]], MatchVia.LEMMA, 1.0)

    return None


def _finalize_split(sentence: str, match: ObjectMatch) -> SplitResult | Rejection:
    start, end = match.span
    prompt = sentence[:start]
    tail = sentence[end:]
    if not is_punctuation_or_space(tail):
        return Rejection(REJECT_NOT_SENTENCE_FINAL, detail=f"tail={tail!r}")
    if not prompt.strip():
        # A sentence-initial object leaves nothing to prompt with.
        return Rejection(REJECT_NOT_SENTENCE_FINAL, detail="empty prompt prefix")
    return SplitResult(
        prompt_prefix=prompt,
        object_form=match.form,
        span=match.span,
        matched_via=match.matched_via,
        confidence=match.confidence,
    )


def split_template_sentence(
    sentence: str, template: str, subject_label: str, object_label: str
) -> SplitResult | Rejection:
    """Positional split of a template-filled sentence at the [Y] location."""
    ix = template.index(PLACEHOLDER_SUBJECT)
    iy = template.index(PLACEHOLDER_OBJECT)
    start = iy
    if ix < iy:
        start += len(subject_label) - len(PLACEHOLDER_SUBJECT)
    end = start + len(object_label)
    if sentence[start:end] != object_label:
        raise ValueError("sentence does not correspond to template and labels")
    return _finalize_split(
        sentence, ObjectMatch((start, end), object_label, MatchVia.EXACT, 1.0)
    )


def split_verbalization(
    verbalization,
    object_entity: Entity,
    corpus: Corpus,
    config: MatchConfig | None = None,
    english_label: bool = True,
) -> SplitResult | Rejection:
    """Split one verbalization into prompt prefix and object form.

    TEMPLATE verbalizations split positionally at the [Y] placeholder
    (the template, subject and object labels ride in the provenance).
    MT/LLM verbalizations are searched for the default target label, the
    target aliases, and the English label. The split is accepted only if
    the text after the match is punctuation/whitespace.
    """
    from .verbalize import VerbalizationSource  # local import, avoids cycle

    sentence = verbalization.sentence
    if not sentence:
        raise ValueError("verbalization sentence is empty")
    if verbalization.source == VerbalizationSource.TEMPLATE:
        prov = verbalization.provenance
        return split_template_sentence(
            sentence, prov["template"], prov["subject_label"], prov["object_label"]
        )

    fact = corpus.facts.get(verbalization.fact_id)
    language = (
        fact.language if fact is not None
        else verbalization.provenance.get("target_language", "")
    )
    labels: list[str] = []
    default = object_entity.label(language)
    if default:
        labels.append(default)
    labels.extend(object_entity.alias_list(language))
    if english_label:
        en = object_entity.label("en")
        if en and en not in labels:
            labels.append(en)
    if not labels:
        raise MissingLabel(
            f"entity {object_entity.id!r} has no usable labels for {language!r}"
        )
    match = match_object_form(sentence, labels, config)
    if match is None:
        return Rejection(REJECT_OBJECT_NOT_FOUND)
    return _finalize_split(sentence, match)


def collect_correct_forms(
    corpus: Corpus,
    fact: Fact,
    splits_by_source: Mapping,
    include_aliases: bool = False,
    include_english: bool = False,
) -> list[str]:
    """Deduplicated ordered pool of correct object surface forms.

    Order: default target label, then the matched form of each accepted
    split in source order (TEMPLATE, MT, LLM), then aliases sorted, then
    the English label; byte-equal duplicates keep the first occurrence.
    """
    from .verbalize import VerbalizationSource

    entity = corpus.entities[fact.object_id]
    accepted = {
        source: result
        for source, result in splits_by_source.items()
        if isinstance(result, SplitResult)
    }
    if not accepted:
        raise NoAcceptedSplits(f"no accepted splits for fact {fact.id!r}")
    default = entity.label(fact.language)
    if default is None:
        raise MissingLabel(
            f"entity {entity.id!r} has no default label for {fact.language!r}"
        )
    ordered = [default]
    for source in VerbalizationSource:
        result = accepted.get(source)
        if result is not None:
            ordered.append(result.object_form)
    if include_aliases:
        # Aliases join uninflected; UTF-8 byte order equals code-point order.
        ordered.extend(sorted(entity.alias_list(fact.language)))
    if include_english:
        en = entity.label("en")
        if en is not None:
            ordered.append(en)
    seen: set[str] = set()
    pool = []
    for form in ordered:
        if form not in seen:
            seen.add(form)
            pool.append(form)
    return pool
