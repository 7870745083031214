"""Candidate-fact enumeration and connection-path extraction.

Candidate enumeration walks the 2-hop neighborhood of both query-fact
endpoints: facts between an endpoint and each of its neighbors, then
(unless the neighbor is a class/type node, which would fan out to the whole
entity population) facts between that neighbor and *its* neighbors. CVT
mediators do not consume a hop because a CVT-mediated connection counts as
a single fact.

Connection paths feed the path encoder: every simple path of at most two
fact-steps from a query endpoint to any entity of a candidate fact, where a
fact-step is a direct edge or a CVT-mediated edge pair. Each traversed edge
records whether it was walked against its stored direction.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NotFoundError
from .facts import Fact
from .kg import KnowledgeGraph, get_facts


@dataclass(frozen=True)
class CandidateSet:
    query: Fact
    candidates: tuple[Fact, ...]

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class PathStep:
    predicate: int
    inverse: bool
    entity: int  # entity reached by this step


@dataclass(frozen=True)
class ConnectionPath:
    """Alternating entity/predicate walk from a query endpoint.

    ``origin`` is 0 when the path starts at the query subject, 1 when it
    starts at the query terminal. A zero-step path means the query endpoint
    itself belongs to the candidate fact.
    """

    origin: int
    start: int
    steps: tuple[PathStep, ...]

    def entities(self) -> tuple[int, ...]:
        return (self.start,) + tuple(s.entity for s in self.steps)

    @property
    def end(self) -> int:
        return self.steps[-1].entity if self.steps else self.start

    def canonical_str(self, kg: KnowledgeGraph) -> str:
        parts = [kg.entity_str(self.start)]
        for s in self.steps:
            p = kg.predicate_str(s.predicate)
            parts.append(f"<{p}-" if s.inverse else f"-{p}>")
            parts.append(kg.entity_str(s.entity))
        return " ".join(parts)


def enumerate_candidates(query: Fact, kg: KnowledgeGraph) -> CandidateSet:
    """All candidate facts in the 2-hop neighborhood of the query endpoints.

    The query fact itself is excluded; output is deduplicated and sorted by
    canonical id, so it does not depend on adjacency insertion order.
    """
    for e in (query.subject, query.terminal):
        kg._require_entity(e)
    found: set[Fact] = set()
    for e in (query.subject, query.terminal):
        for n in kg.neighbor_entities(e):
            found.update(get_facts(e, n, kg))
            if kg.is_class_node(n):
                continue
            for _, n2 in kg.out_index[n]:
                found.update(get_facts(n, n2, kg))
            for _, n2 in kg.in_index[n]:
                found.update(get_facts(n2, n, kg))
    found.discard(query)
    return CandidateSet(query=query, candidates=tuple(sorted(found)))


MAX_PATHS_PER_SIDE = 64


def connection_paths(
    query: Fact,
    candidate: Fact,
    kg: KnowledgeGraph,
    max_paths: int = MAX_PATHS_PER_SIDE,
) -> tuple[list[ConnectionPath], list[ConnectionPath]]:
    """Paths of at most two fact-steps from each query endpoint to the candidate.

    Returns (paths from query subject, paths from query terminal). Paths are
    simple (no repeated entity), may end at any entity of the candidate fact
    including its CVT node, and are truncated to the ``max_paths``
    lexicographically smallest canonical strings per side.
    """
    targets = set(candidate.entities())
    sides = []
    for origin, start in enumerate((query.subject, query.terminal)):
        paths = _paths_from(start, origin, targets, kg)
        paths.sort(key=lambda p: p.canonical_str(kg))
        sides.append(paths[:max_paths])
    return sides[0], sides[1]


def _paths_from(start: int, origin: int, targets: set[int], kg: KnowledgeGraph) -> list[ConnectionPath]:
    results: list[ConnectionPath] = []
    if start in targets:
        results.append(ConnectionPath(origin, start, ()))

    # DFS over (entity, hops used, steps so far). An edge costs a hop unless
    # its source is a CVT node: leaving a CVT completes the fact-step that
    # entering it began, and a path that stops on a CVT has already paid for
    # the edge that entered it.
    def visit(entity: int, hops: int, steps: tuple[PathStep, ...], seen: frozenset[int]) -> None:
        for pred, nxt, inverse in _edges(kg, entity):
            if nxt in seen:
                continue
            cost = 0 if kg.is_cvt(entity) else 1
            nh = hops + cost
            if nh > 2:
                continue
            nsteps = steps + (PathStep(pred, inverse, nxt),)
            if nxt in targets:
                results.append(ConnectionPath(origin, start, nsteps))
            visit(nxt, nh, nsteps, seen | {nxt})

    visit(start, 0, (), frozenset((start,)))
    return results


def _edges(kg: KnowledgeGraph, e: int):
    for p, o in kg.out_index[e]:
        yield p, o, False
    for p, s in kg.in_index[e]:
        yield p, s, True


def path_hops(path: ConnectionPath, kg: KnowledgeGraph) -> int:
    """Fact-steps consumed by a path (edges leaving a non-CVT node)."""
    hops = 0
    cur = path.start
    for step in path.steps:
        if not kg.is_cvt(cur):
            hops += 1
        cur = step.entity
    return hops
