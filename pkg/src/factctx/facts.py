"""Fact and relationship value types.

A fact is a path of one or two triples. One-triple facts must end in a
non-CVT object (the subject may be a CVT node, which makes the fact an
attribute of some two-triple fact). Two-triple facts run between non-CVT
endpoints through a CVT mediator.

Canonical identity: triples rendered as ``s>p>o`` and joined with ``|``,
using source strings. This string is what appears in qrels and run files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import AmbiguousFactError, DataError, NotFoundError

if TYPE_CHECKING:
    from .kg import KnowledgeGraph

SPEC_PRED_SEP = "/"


@dataclass(frozen=True, order=True)
class Triple:
    subject: int
    predicate: int
    object: int


@dataclass(frozen=True)
class Fact:
    """A 1- or 2-triple path with a stable canonical id.

    ``cvt_entity`` is the fact's CVT node if it has one: the mediator of a
    2-triple fact, or the subject of a 1-triple attribute fact. None
    otherwise.
    """

    triples: tuple[Triple, ...]
    canonical_id: str
    cvt_entity: int | None

    def __lt__(self, other: "Fact") -> bool:
        return self.canonical_id < other.canonical_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Fact) and self.canonical_id == other.canonical_id

    def __hash__(self) -> int:
        return hash(self.canonical_id)

    @property
    def subject(self) -> int:
        return self.triples[0].subject

    @property
    def terminal(self) -> int:
        return self.triples[-1].object

    def entities(self) -> tuple[int, ...]:
        """All entities on the path, in path order, without repeats."""
        seen: list[int] = []
        for t in self.triples:
            for e in (t.subject, t.object):
                if e not in seen:
                    seen.append(e)
        return tuple(seen)

    def predicates(self) -> tuple[int, ...]:
        return tuple(t.predicate for t in self.triples)

    @property
    def has_cvt(self) -> bool:
        return self.cvt_entity is not None


@dataclass(frozen=True)
class RelationshipSignature:
    """The predicate chain shared by all facts of a relationship."""

    predicates: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.predicates)


def make_fact(kg: "KnowledgeGraph", triples) -> Fact:
    """Validate a triple path and build a Fact with its canonical id."""
    triples = tuple(triples)
    if len(triples) not in (1, 2):
        raise DataError(f"a fact has 1 or 2 triples, got {len(triples)}")
    if len(triples) == 1:
        t = triples[0]
        if kg.is_cvt(t.object):
            raise DataError(
                f"1-triple fact must have a non-CVT object: {kg.entity_str(t.object)}"
            )
        cvt = t.subject if kg.is_cvt(t.subject) else None
    else:
        t0, t1 = triples
        if t0.object != t1.subject:
            raise DataError("2-triple fact is not path-connected")
        if not kg.is_cvt(t0.object):
            raise DataError(
                f"2-triple fact mediator must be CVT: {kg.entity_str(t0.object)}"
            )
        if kg.is_cvt(t0.subject) or kg.is_cvt(t1.object):
            raise DataError("2-triple fact endpoints must be non-CVT")
        cvt = t0.object
    return Fact(triples, canonical_fact_id(kg, triples), cvt)


def canonical_fact_id(kg: "KnowledgeGraph", triples) -> str:
    return "|".join(
        f"{kg.entity_str(t.subject)}>{kg.predicate_str(t.predicate)}>{kg.entity_str(t.object)}"
        for t in triples
    )


def signature_of(fact: Fact) -> RelationshipSignature:
    """The relationship label of a fact: its predicate chain in path order."""
    return RelationshipSignature(fact.predicates())


def signature_str(kg: "KnowledgeGraph", sig: RelationshipSignature) -> str:
    return SPEC_PRED_SEP.join(kg.predicate_str(p) for p in sig.predicates)


def signature_from_canonical_id(canonical_id: str) -> tuple[str, ...]:
    """Extract the predicate-string chain from a canonical fact id.

    Works without a graph; used for per-relationship grouping of qrels.
    """
    preds = []
    for part in canonical_id.split("|"):
        fields = part.split(">")
        if len(fields) != 3:
            raise DataError(f"malformed canonical fact id: {canonical_id!r}")
        preds.append(fields[1])
    return tuple(preds)


def is_attribute_of(f1: Fact, f2: Fact) -> bool:
    """True iff f1 is a 1-triple fact anchored at f2's CVT mediator."""
    if len(f1.triples) != 1 or len(f2.triples) != 2:
        return False
    if f1.cvt_entity is None:
        return False
    return f1.triples[0].subject == f2.triples[0].object


def shares_cvt(f1: Fact, f2: Fact) -> bool:
    """Attribute relation in either direction."""
    return is_attribute_of(f1, f2) or is_attribute_of(f2, f1)


def parse_fact(spec: str, kg: "KnowledgeGraph") -> Fact:
    """Resolve a fact spec ``s \\t p1[/p2] \\t t`` against the graph.

    For two-predicate chains the CVT midpoint must be unique; otherwise an
    AmbiguousFactError carrying every matching fact is raised.
    """
    fields = spec.rstrip("\n").split("\t")
    if len(fields) != 3:
        raise DataError(f"fact spec needs 3 tab-separated fields, got {len(fields)}: {spec!r}")
    s_str, chain, t_str = (f.strip() for f in fields)
    preds = chain.split(SPEC_PRED_SEP)
    if len(preds) not in (1, 2):
        raise DataError(f"predicate chain must have 1 or 2 predicates: {chain!r}")
    s = kg.entity_id(s_str)
    t = kg.entity_id(t_str)
    if s is None:
        raise NotFoundError(f"unknown entity: {s_str!r}")
    if t is None:
        raise NotFoundError(f"unknown entity: {t_str!r}")
    pred_ids = []
    for p in preds:
        pid = kg.predicate_id(p)
        if pid is None:
            raise NotFoundError(f"unknown predicate: {p!r}")
        pred_ids.append(pid)

    if len(pred_ids) == 1:
        p = pred_ids[0]
        if not kg.has_triple(s, p, t):
            raise NotFoundError(f"no triple matching spec: {spec!r}")
        if kg.is_cvt(t):
            raise NotFoundError(f"triple exists but object is CVT, not a fact: {spec!r}")
        return make_fact(kg, [Triple(s, p, t)])

    p1, p2 = pred_ids
    matches = []
    for p, m in kg.out_neighbors(s):
        if p != p1 or not kg.is_cvt(m):
            continue
        for q, o in kg.out_neighbors(m):
            if q == p2 and o == t:
                matches.append(make_fact(kg, [Triple(s, p1, m), Triple(m, p2, t)]))
    matches = sorted(set(matches))
    if not matches:
        raise NotFoundError(f"no CVT-mediated path matching spec: {spec!r}")
    if len(matches) > 1:
        ids = ", ".join(f.canonical_id for f in matches)
        raise AmbiguousFactError(
            f"spec {spec!r} matches {len(matches)} CVT midpoints: {ids}", matches
        )
    return matches[0]


def fact_to_spec(kg: "KnowledgeGraph", fact: Fact) -> str:
    """Render a fact in the spec grammar accepted by parse_fact."""
    preds = SPEC_PRED_SEP.join(kg.predicate_str(p) for p in fact.predicates())
    return f"{kg.entity_str(fact.subject)}\t{preds}\t{kg.entity_str(fact.terminal)}"


def fact_from_canonical_id(kg: "KnowledgeGraph", canonical_id: str) -> Fact:
    """Reconstruct a Fact from its canonical id, validating against the graph."""
    triples = []
    for part in canonical_id.split("|"):
        fields = part.split(">")
        if len(fields) != 3:
            raise DataError(f"malformed canonical fact id: {canonical_id!r}")
        s = kg.entity_id(fields[0])
        p = kg.predicate_id(fields[1])
        o = kg.entity_id(fields[2])
        if s is None or p is None or o is None:
            raise NotFoundError(f"canonical id references unknown symbols: {canonical_id!r}")
        if not kg.has_triple(s, p, o):
            raise NotFoundError(f"canonical id references missing triple: {part!r}")
        triples.append(Triple(s, p, o))
    return make_fact(kg, triples)
