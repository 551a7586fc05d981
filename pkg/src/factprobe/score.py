"""Scorer backends and candidate ranking.

A backend scores continuations of a prompt and reports (log-probability,
token count) per continuation. Ranking is pure: candidates sort by
descending score with a byte-order tie-break on the surface form, so the
result is independent of input order and of any positive affine transform
of the scores.
"""

from __future__ import annotations

import json
import math
import socket
from dataclasses import dataclass
from typing import Iterable, Protocol

from .candidates import CandidateSet
from .errors import BackendError, FormNotPresent, NonFiniteScore

PROTOCOL_VERSION = 1

NORMALIZATION_SUM = "SUM"
NORMALIZATION_MEAN = "MEAN"


class ScorerBackend(Protocol):
    def score_batch(
        self, prompt: str, continuations: list[str]
    ) -> list[tuple[float, int]]:
        """Log-probability sum and token count for each continuation."""


@dataclass(frozen=True)
class ScoredCandidate:
    form: str
    entity_id: str | None  # None marks a correct form
    score: float
    token_count: int = 1


@dataclass(frozen=True)
class RankedCandidate:
    form: str
    entity_id: str | None
    score: float
    rank: int
    correct: bool


@dataclass(frozen=True)
class RankedResult:
    fact_id: str
    candidates: tuple[RankedCandidate, ...]
    best_correct_rank: int
    best_correct_form: str
    hits: dict[int, bool]


def join_continuation(prompt: str, form: str, no_space: bool = False) -> str:
    """Continuation text under the pinned joining rule: exactly one space
    between prompt and form unless the prompt already ends in whitespace
    (or the language writes without word spacing)."""
    if no_space or not prompt or prompt[-1].isspace():
        return form
    return " " + form


def score_candidates(
    scorer: ScorerBackend,
    candidate_set: CandidateSet,
    normalization: str = NORMALIZATION_SUM,
    no_space: bool = False,
) -> list[ScoredCandidate]:
    """Score every candidate continuation of the prompt."""
    if normalization not in (NORMALIZATION_SUM, NORMALIZATION_MEAN):
        raise ValueError(f"unknown normalization {normalization!r}")
    items: list[tuple[str, str | None]] = [
        (form, None) for form in candidate_set.correct_forms
    ]
    items.extend((d.form, d.entity_id) for d in candidate_set.distractors)
    if not items:
        raise ValueError("candidate set is empty")
    continuations = [
        join_continuation(candidate_set.prompt, form, no_space) for form, _ in items
    ]
    try:
        results = scorer.score_batch(candidate_set.prompt, continuations)
    except BackendError:
        raise
    except Exception as exc:
        raise BackendError(
            f"scorer failed: {exc}", fact_id=candidate_set.fact_id
        ) from exc
    if len(results) != len(items):
        raise BackendError(
            f"scorer returned {len(results)} results for {len(items)} continuations",
            fact_id=candidate_set.fact_id,
        )
    scored = []
    for (form, entity_id), (logprob, token_count) in zip(items, results):
        score = float(logprob)
        if normalization == NORMALIZATION_MEAN:
            if token_count < 1:
                raise BackendError(
                    f"token count {token_count} < 1 for form {form!r}",
                    fact_id=candidate_set.fact_id,
                )
            score /= token_count
        scored.append(
            ScoredCandidate(form=form, entity_id=entity_id, score=score,
                            token_count=int(token_count))
        )
    return scored


def rank_candidates(
    scored: Iterable,
    correct_forms,
    n_values=(1, 2, 3, 4, 5),
    fact_id: str = "",
) -> RankedResult:
    """Rank scored candidates: descending score, byte-order tie-break.

    Accepts ScoredCandidate items or plain (form, score) pairs.
    Correctness is decided by byte-equality against ``correct_forms``;
    assembly guarantees no distractor shares a correct form.
    """
    correct_set = set(correct_forms)
    normalized: list[ScoredCandidate] = []
    for item in scored:
        if isinstance(item, ScoredCandidate):
            normalized.append(item)
        else:
            form, score = item
            normalized.append(ScoredCandidate(form=form, entity_id=None, score=score))
    if not normalized:
        raise ValueError("nothing to rank")
    for cand in normalized:
        if not math.isfinite(cand.score):
            raise NonFiniteScore(
                f"score for form {cand.form!r} is not finite", fact_id=fact_id
            )

    def sort_key(cand: ScoredCandidate):
        # UTF-8 byte order; correct-before-distractor and entity id only
        # break ties between byte-identical forms (duplicate labels).
        return (
            -cand.score,
            cand.form.encode("utf-8"),
            0 if cand.form in correct_set else 1,
            cand.entity_id or "",
        )

    ordered = sorted(normalized, key=sort_key)
    ranked = tuple(
        RankedCandidate(
            form=c.form,
            entity_id=c.entity_id,
            score=c.score,
            rank=i + 1,
            correct=c.form in correct_set,
        )
        for i, c in enumerate(ordered)
    )
    correct_ranked = [c for c in ranked if c.correct]
    if not correct_ranked:
        raise ValueError("no correct form present among candidates")
    best = min(correct_ranked, key=lambda c: c.rank)
    hits = {int(n): best.rank <= int(n) for n in n_values}
    return RankedResult(
        fact_id=fact_id,
        candidates=ranked,
        best_correct_rank=best.rank,
        best_correct_form=best.form,
        hits=hits,
    )


def rank_of_form(result: RankedResult, form: str) -> int:
    """Rank of a surface form (the best rank, if duplicated)."""
    ranks = [c.rank for c in result.candidates if c.form == form]
    if not ranks:
        raise FormNotPresent(f"form {form!r} not present in ranked result")
    return min(ranks)


def default_token_count(text: str) -> int:
    """Whitespace token count with a floor of 1; used by fixture backends."""
    return max(1, len(text.split()))


class CallableScorer:
    """Backend wrapping a plain ``fn(prompt, continuation) -> logprob``."""

    def __init__(self, fn, token_counter=default_token_count):
        self._fn = fn
        self._count = token_counter

    def score_batch(self, prompt, continuations):
        return [(self._fn(prompt, c), self._count(c)) for c in continuations]


class TableScorer:
    """Pass-through fixture backend: explicit (prompt, continuation) table."""

    def __init__(self, table: dict[tuple[str, str], tuple[float, int]]):
        self._table = dict(table)

    def score_batch(self, prompt, continuations):
        results = []
        for continuation in continuations:
            entry = self._table.get((prompt, continuation))
            if entry is None:
                raise BackendError(
                    f"no fixture score for continuation {continuation!r}"
                )
            results.append(entry)
        return results


class OracleScorer:
    """Synthetic backend that knows the correct forms per prompt.

    mode='perfect' puts every correct form strictly on top;
    mode='adversarial' puts every correct form strictly at the bottom.
    Continuations arrive with the joining space applied, so a single
    leading space is stripped before the membership test.
    """

    def __init__(self, correct_by_prompt: dict[str, frozenset[str]], mode: str = "perfect"):
        if mode not in ("perfect", "adversarial"):
            raise ValueError(f"unknown oracle mode {mode!r}")
        self._correct = correct_by_prompt
        self.mode = mode

    def score_batch(self, prompt, continuations):
        correct = self._correct.get(prompt, frozenset())
        results = []
        for continuation in continuations:
            form = continuation[1:] if continuation.startswith(" ") else continuation
            is_correct = form in correct
            if self.mode == "perfect":
                score = 0.0 if is_correct else -1.0
            else:
                score = -1.0 if is_correct else 0.0
            results.append((score, default_token_count(continuation)))
        return results


class ProtocolScorerClient:
    """Client for the line-delimited JSON score protocol.

    One request line: ``{"version": 1, "prompt": ..., "continuations":
    [...]}``; one response line: ``{"version": 1, "results": [[logprob,
    token_count], ...]}``. UTF-8, newline-terminated. The connection is
    opened eagerly so an unreachable backend fails fast.
    """

    def __init__(self, host: str, port: int, timeout: float = 60.0):
        self.host = host
        self.port = port
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BackendError(
                f"cannot reach scorer backend at {host}:{port}: {exc}"
            ) from exc
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")
        self._writer = self._sock.makefile("w", encoding="utf-8", newline="\n")

    def score_batch(self, prompt, continuations):
        request = {
            "version": PROTOCOL_VERSION,
            "prompt": prompt,
            "continuations": list(continuations),
        }
        try:
            self._writer.write(json.dumps(request, ensure_ascii=False) + "\n")
            self._writer.flush()
            line = self._reader.readline()
        except OSError as exc:
            raise BackendError(f"scorer connection failed: {exc}") from exc
        if not line:
            raise BackendError("scorer closed the connection")
        response = json.loads(line)
        if response.get("version") != PROTOCOL_VERSION:
            raise BackendError(
                f"unsupported protocol version {response.get('version')!r}"
            )
        results = response.get("results")
        if not isinstance(results, list) or len(results) != len(continuations):
            raise BackendError("malformed scorer response")
        return [(float(lp), int(tc)) for lp, tc in results]

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass
