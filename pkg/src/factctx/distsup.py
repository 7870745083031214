"""Noisy relevance labels from an entity-linked corpus.

The corpus arrives pre-linked as JSONL: one document per line with a
``main_entity`` and a list of sentences, each carrying its entity mentions
in appearance order (raw text optional). For a query fact r<s,t> we look at
the documents of s, keep segments around sentences that mention t, collect
the other entities mentioned in those anchor sentences, and mark a
candidate fact relevant when it is the single fact connecting a pair of
collected entities. Pairs connected by several facts are ambiguous and
yield no labels.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .enumerator import CandidateSet
from .errors import DataError
from .facts import Fact
from .kg import KnowledgeGraph, get_facts

logger = logging.getLogger(__name__)

MAX_CONTEXT_ENTITIES = 20


@dataclass(frozen=True)
class Sentence:
    mentions: tuple[int, ...]
    text: str | None = None


@dataclass(frozen=True)
class LinkedDocument:
    main_entity: int
    sentences: tuple[Sentence, ...]


@dataclass
class Corpus:
    by_entity: dict[int, list[LinkedDocument]]
    dropped_mentions: int = 0

    def documents_of(self, e: int) -> list[LinkedDocument]:
        return self.by_entity.get(e, [])

    def __len__(self) -> int:
        return sum(len(docs) for docs in self.by_entity.values())


@dataclass(frozen=True)
class Segment:
    """A sentence mentioning the query object plus its immediate neighbors."""

    anchor: int
    lo: int
    hi: int  # inclusive

    def sentence_indices(self) -> range:
        return range(self.lo, self.hi + 1)


@dataclass(frozen=True)
class LabeledPair:
    query: Fact
    candidate: Fact
    label: int


@dataclass(frozen=True)
class Witness:
    doc_index: int
    anchor: int
    pair: tuple[int, int]


def load_corpus(source: str | Path, kg: KnowledgeGraph) -> Corpus:
    """Read a JSONL corpus, resolving mentions against the graph's symbols.

    Unresolvable mentions are dropped (counted in ``dropped_mentions``); an
    unresolvable main entity or a structurally malformed record is an error
    with its line number.
    """
    by_entity: dict[int, list[LinkedDocument]] = {}
    dropped = 0
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {source}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        try:
            record = json.loads(raw)
            main = record["main_entity"]
            raw_sentences = record["sentences"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{source}:{lineno}: malformed document record: {exc}") from exc
        main_id = kg.entity_id(main)
        if main_id is None:
            raise DataError(f"{source}:{lineno}: unknown main_entity {main!r}")
        sentences = []
        for sent in raw_sentences:
            mentions = []
            for m in sent.get("mentions", []):
                e = kg.entity_id(m)
                if e is None:
                    dropped += 1
                    logger.warning("%s:%d: dropping unresolvable mention %r", source, lineno, m)
                    continue
                mentions.append(e)
            sentences.append(Sentence(tuple(mentions), sent.get("text")))
        by_entity.setdefault(main_id, []).append(
            LinkedDocument(main_id, tuple(sentences))
        )
    return Corpus(by_entity=by_entity, dropped_mentions=dropped)


def extract_segments(f_q: Fact, doc: LinkedDocument) -> list[Segment]:
    """Segments around every sentence that mentions the query object.

    Each segment spans the anchor sentence plus one sentence before and one
    after, clipped at document bounds; one segment per anchor sentence.
    """
    if doc.main_entity != f_q.subject:
        raise DataError("document main entity does not match query subject")
    t = f_q.terminal
    n = len(doc.sentences)
    segments = []
    for i, sent in enumerate(doc.sentences):
        if t in sent.mentions:
            segments.append(Segment(anchor=i, lo=max(0, i - 1), hi=min(n - 1, i + 1)))
    return segments


def _context_entities(f_q: Fact, docs: list[LinkedDocument]) -> list[tuple[int, int, int]]:
    """(entity, doc index, anchor index) for entities co-mentioned with t.

    First appearance order across documents, excluding the query endpoints,
    truncated to MAX_CONTEXT_ENTITIES.
    """
    s, t = f_q.subject, f_q.terminal
    out: list[tuple[int, int, int]] = []
    seen: set[int] = set()
    for doc_idx, doc in enumerate(docs):
        for seg in extract_segments(f_q, doc):
            for e in doc.sentences[seg.anchor].mentions:
                if e in (s, t) or e in seen:
                    continue
                seen.add(e)
                out.append((e, doc_idx, seg.anchor))
                if len(out) >= MAX_CONTEXT_ENTITIES:
                    return out
    return out


def label_pairs(
    f_q: Fact,
    candidates: CandidateSet,
    corpus: Corpus,
    kg: KnowledgeGraph,
    collect_witnesses: bool = False,
) -> tuple[list[LabeledPair], dict[Fact, list[Witness]] | None]:
    """Binary relevance labels for every candidate of a query fact.

    A candidate goes positive when some pair of context entities (the
    collected co-mentions plus the query endpoints) is connected by exactly
    that fact and nothing else in the whole graph; pairs with several
    connecting facts are ambiguous and label nothing. Labels are monotone:
    once positive, a fact stays positive. With ``collect_witnesses`` the
    supporting (document, anchor sentence, entity pair) triples are returned
    per positive fact.
    """
    docs = corpus.documents_of(f_q.subject)
    context = _context_entities(f_q, docs)
    anchors_of: dict[int, tuple[int, int]] = {e: (d, a) for e, d, a in context}
    pool = [f_q.subject, f_q.terminal] + [e for e, _, _ in context]

    candidate_set = set(candidates.candidates)
    positives: set[Fact] = set()
    witnesses: dict[Fact, list[Witness]] = {}
    for e1 in pool:
        for e2 in pool:
            facts = get_facts(e1, e2, kg)
            if len(facts) != 1:
                continue  # nothing connects, or the mention is ambiguous
            fact = facts[0]
            if fact not in candidate_set:
                continue
            positives.add(fact)
            if collect_witnesses:
                witnesses.setdefault(fact, []).append(
                    Witness(*_witness_location(e1, e2, f_q, docs, anchors_of), pair=(e1, e2))
                )

    labeled = [
        LabeledPair(f_q, c, 1 if c in positives else 0) for c in candidates.candidates
    ]
    return labeled, (witnesses if collect_witnesses else None)


def _witness_location(e1, e2, f_q, docs, anchors_of) -> tuple[int, int]:
    """First anchor sentence that exhibits the pair.

    The query subject is implicit in its own documents and the query object
    is present in every anchor by construction, so the location is the first
    anchor mentioning both non-endpoint members, falling back to the later
    member's first anchor.
    """
    endpoints = {f_q.subject, f_q.terminal}
    members = [e for e in (e1, e2) if e not in endpoints]
    for doc_idx, doc in enumerate(docs):
        for seg in extract_segments(f_q, doc):
            mentions = set(doc.sentences[seg.anchor].mentions)
            if all(m in mentions for m in members):
                return doc_idx, seg.anchor
    for e in reversed(members):
        if e in anchors_of:
            return anchors_of[e]
    return 0, -1  # endpoint-only pair with no anchor (e.g. empty corpus edge)
