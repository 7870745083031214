"""Immutable knowledge-graph store.

Loads triples, entity types, and CVT membership from TSV sources, interns
all symbols to dense integer ids in first-appearance order, and precomputes
the adjacency indices and global statistics every downstream feature reads.
The graph is frozen after construction and safe for concurrent readers.

File formats:
  triples TSV   ``subject \\t predicate \\t object``   (one triple per line)
  types TSV     ``entity \\t type``
  cvt list      one entity id per line
  class list    one entity id per line (optional; class nodes are also
                inferred from objects of the reserved predicate ``type``)
  rev-map TSV   ``predicate \\t reversed_predicate``   (optional; drops a
                triple whose exact reverse under the map appeared earlier)

Lines starting with ``#`` are ignored in all tabular inputs.
"""

from __future__ import annotations

import io
import json
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, NotFoundError
from .facts import Fact, Triple, make_fact

TYPE_PREDICATE = "type"
UNK_TYPE_ID = 0
UNK_TYPE_STR = "UNK"
SNAPSHOT_MAGIC = b"FCTX1"

_RESERVED_CHARS = ("\t", "\n", ">", "|")


def _check_symbol(s: str, what: str, lineno: int, path: str) -> str:
    if not s:
        raise DataError(f"{path}:{lineno}: empty {what}")
    for ch in _RESERVED_CHARS:
        if ch in s:
            raise DataError(
                f"{path}:{lineno}: {what} {s!r} contains reserved character {ch!r}"
            )
    return s


class SymbolTable:
    """Bijective string <-> dense-id interning in first-appearance order."""

    def __init__(self, initial: tuple[str, ...] = ()):
        self._strs: list[str] = []
        self._ids: dict[str, int] = {}
        for s in initial:
            self.intern(s)

    def intern(self, s: str) -> int:
        i = self._ids.get(s)
        if i is None:
            i = len(self._strs)
            self._strs.append(s)
            self._ids[s] = i
        return i

    def get(self, s: str) -> int | None:
        return self._ids.get(s)

    def str_of(self, i: int) -> str:
        return self._strs[i]

    def __len__(self) -> int:
        return len(self._strs)

    def __iter__(self):
        return iter(self._strs)


@dataclass
class GraphStats:
    """Global counts over the triple set, precomputed at load time."""

    num_triples: int
    triples_pred: list[int]            # per predicate id
    triples_subj: list[int]            # per entity id
    triples_obj: list[int]             # per entity id
    triples_ent: list[int]             # per entity id, self-loops counted once
    pred_subj: dict[tuple[int, int], int]   # (entity, predicate) -> count as subject
    pred_obj: dict[tuple[int, int], int]    # (entity, predicate) -> count as object
    pred_entities: list[frozenset[int]]     # per predicate id: UniqEnt(TriplesPred(p))


@dataclass
class KnowledgeGraph:
    entities: SymbolTable
    predicates: SymbolTable
    types: SymbolTable
    triples: tuple[Triple, ...]
    cvt_flags: list[bool]
    class_flags: list[bool]
    type_map: list[tuple[int, ...]]          # per entity: type ids, file order
    out_index: list[list[tuple[int, int]]]   # per entity: sorted (pred, object)
    in_index: list[list[tuple[int, int]]]    # per entity: sorted (pred, subject)
    stats: GraphStats
    type_freq: list[int] = field(default_factory=list)  # per type id, over type_map
    _triple_set: set[tuple[int, int, int]] = field(default_factory=set)

    # -- symbol access -------------------------------------------------------

    def entity_id(self, s: str) -> int | None:
        return self.entities.get(s)

    def predicate_id(self, s: str) -> int | None:
        return self.predicates.get(s)

    def type_id(self, s: str) -> int | None:
        return self.types.get(s)

    def entity_str(self, e: int) -> str:
        return self.entities.str_of(e)

    def predicate_str(self, p: int) -> str:
        return self.predicates.str_of(p)

    def type_str(self, z: int) -> str:
        return self.types.str_of(z)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_predicates(self) -> int:
        return len(self.predicates)

    @property
    def num_types(self) -> int:
        return len(self.types)

    # -- structure access ----------------------------------------------------

    def is_cvt(self, e: int) -> bool:
        return self.cvt_flags[e]

    def is_class_node(self, e: int) -> bool:
        return self.class_flags[e]

    def has_triple(self, s: int, p: int, o: int) -> bool:
        return (s, p, o) in self._triple_set

    def out_neighbors(self, e: int) -> list[tuple[int, int]]:
        return self.out_index[e]

    def in_neighbors(self, e: int) -> list[tuple[int, int]]:
        return self.in_index[e]

    def neighbor_entities(self, e: int) -> list[int]:
        """Distinct adjacent entities over both edge directions, ascending."""
        seen = {n for _, n in self.out_index[e]}
        seen.update(n for _, n in self.in_index[e])
        return sorted(seen)

    def types_of(self, e: int) -> tuple[int, ...]:
        """Full (untruncated) type set of an entity, in type-file order."""
        return self.type_map[e]

    def _require_entity(self, e: int) -> None:
        if not 0 <= e < self.num_entities:
            raise NotFoundError(f"unknown entity id: {e}")


def load_graph(
    triples_source: str | Path,
    types_source: str | Path | None = None,
    cvt_source: str | Path | None = None,
    class_source: str | Path | None = None,
    rev_map_source: str | Path | None = None,
) -> KnowledgeGraph:
    """Build a fully indexed graph from tabular sources.

    Id assignment is deterministic: symbols are interned in file order,
    triples file first, then types, CVT list, and class list. Duplicate
    triple lines are stored once. An entity that is both CVT-listed and
    used as a class node is a hard error.
    """
    entities = SymbolTable()
    predicates = SymbolTable()
    types = SymbolTable(initial=(UNK_TYPE_STR,))

    rev_map: dict[int, int] = {}
    if rev_map_source is not None:
        for lineno, fields in _tsv_lines(rev_map_source, 2):
            p = predicates.intern(_check_symbol(fields[0], "predicate", lineno, str(rev_map_source)))
            q = predicates.intern(_check_symbol(fields[1], "predicate", lineno, str(rev_map_source)))
            rev_map[p] = q
            rev_map[q] = p

    triples: list[Triple] = []
    triple_set: set[tuple[int, int, int]] = set()
    src = str(triples_source)
    for lineno, fields in _tsv_lines(triples_source, 3):
        s = entities.intern(_check_symbol(fields[0], "entity", lineno, src))
        p = predicates.intern(_check_symbol(fields[1], "predicate", lineno, src))
        o = entities.intern(_check_symbol(fields[2], "entity", lineno, src))
        key = (s, p, o)
        if key in triple_set:
            continue
        if rev_map and (o, rev_map.get(p, -1), s) in triple_set:
            continue  # equivalent reversed triple already stored
        triple_set.add(key)
        triples.append(Triple(s, p, o))

    type_assertions: list[tuple[int, int]] = []
    if types_source is not None:
        src = str(types_source)
        for lineno, fields in _tsv_lines(types_source, 2):
            e = entities.intern(_check_symbol(fields[0], "entity", lineno, src))
            z = types.intern(_check_symbol(fields[1], "type", lineno, src))
            type_assertions.append((e, z))

    cvt_ids: set[int] = set()
    if cvt_source is not None:
        for lineno, fields in _tsv_lines(cvt_source, 1):
            cvt_ids.add(entities.intern(_check_symbol(fields[0], "entity", lineno, str(cvt_source))))

    class_ids: set[int] = set()
    type_pred = predicates.get(TYPE_PREDICATE)
    if type_pred is not None:
        class_ids.update(t.object for t in triples if t.predicate == type_pred)
    if class_source is not None:
        for lineno, fields in _tsv_lines(class_source, 1):
            class_ids.add(entities.intern(_check_symbol(fields[0], "entity", lineno, str(class_source))))

    overlap = sorted(cvt_ids & class_ids)
    if overlap:
        names = ", ".join(entities.str_of(e) for e in overlap[:5])
        raise DataError(f"entities are both CVT-listed and used as a class: {names}")

    return _build(entities, predicates, types, triples, triple_set, type_assertions, cvt_ids, class_ids)


def _tsv_lines(source: str | Path, n_fields: int):
    """Yield (line number, fields) for each non-comment, non-blank line."""
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {source}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != n_fields:
            raise DataError(
                f"{source}:{lineno}: expected {n_fields} tab-separated fields, got {len(fields)}"
            )
        yield lineno, fields


def _build(entities, predicates, types, triples, triple_set, type_assertions, cvt_ids, class_ids) -> KnowledgeGraph:
    n_ent = len(entities)
    n_pred = len(predicates)
    n_typ = len(types)

    cvt_flags = [False] * n_ent
    for e in cvt_ids:
        cvt_flags[e] = True
    class_flags = [False] * n_ent
    for e in class_ids:
        class_flags[e] = True

    seen_types: list[list[int]] = [[] for _ in range(n_ent)]
    for e, z in type_assertions:
        if z not in seen_types[e]:
            seen_types[e].append(z)
    type_map = [tuple(zs) for zs in seen_types]

    type_freq = [0] * n_typ
    for zs in type_map:
        for z in zs:
            type_freq[z] += 1

    out_index: list[list[tuple[int, int]]] = [[] for _ in range(n_ent)]
    in_index: list[list[tuple[int, int]]] = [[] for _ in range(n_ent)]
    triples_pred = [0] * n_pred
    triples_subj = [0] * n_ent
    triples_obj = [0] * n_ent
    triples_ent = [0] * n_ent
    pred_subj: dict[tuple[int, int], int] = {}
    pred_obj: dict[tuple[int, int], int] = {}
    pred_ent: list[set[int]] = [set() for _ in range(n_pred)]

    for t in triples:
        out_index[t.subject].append((t.predicate, t.object))
        in_index[t.object].append((t.predicate, t.subject))
        triples_pred[t.predicate] += 1
        triples_subj[t.subject] += 1
        triples_obj[t.object] += 1
        triples_ent[t.subject] += 1
        if t.object != t.subject:
            triples_ent[t.object] += 1
        pred_subj[(t.subject, t.predicate)] = pred_subj.get((t.subject, t.predicate), 0) + 1
        pred_obj[(t.object, t.predicate)] = pred_obj.get((t.object, t.predicate), 0) + 1
        pred_ent[t.predicate].add(t.subject)
        pred_ent[t.predicate].add(t.object)

    for lst in out_index:
        lst.sort()
    for lst in in_index:
        lst.sort()

    stats = GraphStats(
        num_triples=len(triples),
        triples_pred=triples_pred,
        triples_subj=triples_subj,
        triples_obj=triples_obj,
        triples_ent=triples_ent,
        pred_subj=pred_subj,
        pred_obj=pred_obj,
        pred_entities=[frozenset(s) for s in pred_ent],
    )
    return KnowledgeGraph(
        entities=entities,
        predicates=predicates,
        types=types,
        triples=tuple(triples),
        cvt_flags=cvt_flags,
        class_flags=class_flags,
        type_map=type_map,
        out_index=out_index,
        in_index=in_index,
        stats=stats,
        type_freq=type_freq,
        _triple_set=triple_set,
    )


def graph_stats(kg: KnowledgeGraph) -> GraphStats:
    return kg.stats


# -- fact-level queries -------------------------------------------------------


def get_facts(e1: int, e2: int, kg: KnowledgeGraph) -> list[Fact]:
    """All facts connecting two entities, in canonical-id order.

    Covers 1-triple facts in either direction (non-CVT object required) and
    2-triple facts through any CVT mediator between non-CVT endpoints. The
    result is identical regardless of argument order.
    """
    kg._require_entity(e1)
    kg._require_entity(e2)
    found: set[Fact] = set()
    pairs = ((e1, e2),) if e1 == e2 else ((e1, e2), (e2, e1))
    for a, b in pairs:
        if not kg.is_cvt(b):
            for p, o in kg.out_index[a]:
                if o == b:
                    found.add(make_fact(kg, [Triple(a, p, b)]))
        if not kg.is_cvt(a) and not kg.is_cvt(b):
            for p1, m in kg.out_index[a]:
                if not kg.is_cvt(m):
                    continue
                for p2, o in kg.out_index[m]:
                    if o == b:
                        found.add(make_fact(kg, [Triple(a, p1, m), Triple(m, p2, b)]))
    return sorted(found)


def shortest_path_length(e1: int, e2: int, cap: int, kg: KnowledgeGraph) -> int:
    """Undirected BFS hop count, with cap+1 as the beyond-cap sentinel.

    CVT entities count as ordinary nodes here; this distance feeds the
    entity-distance feature, not fact enumeration.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    kg._require_entity(e1)
    kg._require_entity(e2)
    if e1 == e2:
        return 0
    sentinel = cap + 1
    dist = {e1: 0}
    queue = deque([e1])
    while queue:
        u = queue.popleft()
        d = dist[u]
        if d >= cap:
            continue
        for _, v in kg.out_index[u]:
            if v not in dist:
                if v == e2:
                    return d + 1
                dist[v] = d + 1
                queue.append(v)
        for _, v in kg.in_index[u]:
            if v not in dist:
                if v == e2:
                    return d + 1
                dist[v] = d + 1
                queue.append(v)
    return sentinel


def entity_types(e: int, kg: KnowledgeGraph, limit: int = 7) -> list[int]:
    """Up to ``limit`` types of an entity, most globally frequent first.

    Ties break by ascending type id. Untyped entities get the reserved UNK
    type so the encoder always has at least one token component.
    """
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    kg._require_entity(e)
    zs = kg.type_map[e]
    if not zs:
        return [UNK_TYPE_ID]
    ranked = sorted(zs, key=lambda z: (-kg.type_freq[z], z))
    return ranked[:limit]


# -- binary snapshot ----------------------------------------------------------


def save_snapshot(kg: KnowledgeGraph, path: str | Path, meta: dict | None = None) -> None:
    """Write a versioned binary snapshot (header FCTX1, little-endian)."""
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    _write_blob(buf, json.dumps(meta or {}, sort_keys=True).encode("utf-8"))
    for table in (kg.entities, kg.predicates, kg.types):
        buf.write(struct.pack("<I", len(table)))
        for s in table:
            _write_blob(buf, s.encode("utf-8"))
    buf.write(struct.pack("<I", kg.num_entities))
    buf.write(bytes(1 if f else 0 for f in kg.cvt_flags))
    buf.write(bytes(1 if f else 0 for f in kg.class_flags))
    buf.write(struct.pack("<I", len(kg.triples)))
    for t in kg.triples:
        buf.write(struct.pack("<III", t.subject, t.predicate, t.object))
    typed = [(e, zs) for e, zs in enumerate(kg.type_map) if zs]
    buf.write(struct.pack("<I", len(typed)))
    for e, zs in typed:
        buf.write(struct.pack("<II", e, len(zs)))
        buf.write(struct.pack(f"<{len(zs)}I", *zs))
    Path(path).write_bytes(buf.getvalue())


def load_snapshot(path: str | Path) -> tuple[KnowledgeGraph, dict]:
    """Load a snapshot and rebuild indices and stats deterministically."""
    data = Path(path).read_bytes()
    if data[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        raise DataError(f"{path}: not a FCTX1 snapshot")
    view = io.BytesIO(data[len(SNAPSHOT_MAGIC):])
    meta = json.loads(_read_blob(view).decode("utf-8"))
    tables = []
    for _ in range(3):
        (count,) = struct.unpack("<I", view.read(4))
        tables.append(SymbolTable(tuple(_read_blob(view).decode("utf-8") for _ in range(count))))
    entities, predicates, types = tables
    (n_ent,) = struct.unpack("<I", view.read(4))
    cvt_ids = {e for e, b in enumerate(view.read(n_ent)) if b}
    class_ids = {e for e, b in enumerate(view.read(n_ent)) if b}
    (n_tr,) = struct.unpack("<I", view.read(4))
    triples = []
    triple_set = set()
    for _ in range(n_tr):
        s, p, o = struct.unpack("<III", view.read(12))
        triples.append(Triple(s, p, o))
        triple_set.add((s, p, o))
    type_assertions = []
    (n_typed,) = struct.unpack("<I", view.read(4))
    for _ in range(n_typed):
        e, k = struct.unpack("<II", view.read(8))
        zs = struct.unpack(f"<{k}I", view.read(4 * k))
        type_assertions.extend((e, z) for z in zs)
    kg = _build(entities, predicates, types, triples, triple_set, type_assertions, cvt_ids, class_ids)
    return kg, meta


def _write_blob(buf, b: bytes) -> None:
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


def _read_blob(view) -> bytes:
    (n,) = struct.unpack("<I", view.read(4))
    return view.read(n)
