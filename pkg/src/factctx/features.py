"""Hand-crafted features for (query fact, candidate fact) pairs.

Three groups: importance (frequency and informativeness statistics of each
fact on its own), relevance (similarity and proximity between the two
facts), and miscellaneous flags plus a one-hot of the query relationship.
Variable-cardinality families (per-predicate, per-entity, per-pair values)
are aggregated to min/max/avg so every pair yields the same fixed-length
vector under a shared schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import NotFoundError
from .facts import Fact, shares_cvt, signature_of
from .kg import KnowledgeGraph, shortest_path_length

LOG_EPS = 1e-12


def pred_freq(p: int, kg: KnowledgeGraph) -> float:
    """Share of the graph's triples carrying predicate p."""
    if not 0 <= p < kg.num_predicates or kg.stats.triples_pred[p] == 0:
        raise NotFoundError(f"predicate does not occur in graph: {p}")
    return kg.stats.triples_pred[p] / kg.stats.num_triples


def ent_freq(e: int, kg: KnowledgeGraph) -> float:
    """Share of the graph's triples touching entity e."""
    kg._require_entity(e)
    if kg.stats.triples_ent[e] == 0:
        raise NotFoundError(f"entity does not occur in any triple: {kg.entity_str(e)}")
    return kg.stats.triples_ent[e] / kg.stats.num_triples


def _itf(p: int, kg: KnowledgeGraph) -> float:
    n = kg.stats.triples_pred[p]
    if n == 0:
        return 0.0
    return math.log(kg.stats.num_triples / n)


def path_informativeness(fact: Fact, kg: KnowledgeGraph) -> float:
    """TF-IDF-style weight of a fact's predicates relative to its entities.

    Per triple, the outgoing predicate share of the subject and the incoming
    predicate share of the object are each scaled by the predicate's inverse
    triple frequency (natural log); the fact value averages both terms over
    all triples. Shares with an empty denominator contribute 0.
    """
    total = 0.0
    for t in fact.triples:
        itf = _itf(t.predicate, kg)
        n_out = kg.stats.triples_subj[t.subject]
        pf_out = (
            kg.stats.pred_subj.get((t.subject, t.predicate), 0) / n_out if n_out else 0.0
        )
        n_in = kg.stats.triples_obj[t.object]
        pf_in = (
            kg.stats.pred_obj.get((t.object, t.predicate), 0) / n_in if n_in else 0.0
        )
        total += pf_out * itf + pf_in * itf
    return total / (2 * len(fact.triples))


def _jaccard(a: frozenset | set, b: frozenset | set) -> float:
    if not a and not b:
        return 0.0
    inter = len(a & b)
    if inter == 0:
        return 0.0
    return inter / len(a | b)


def ent_type_sim(e1: int, e2: int, kg: KnowledgeGraph) -> float:
    """Jaccard similarity of the full (untruncated) type sets."""
    return _jaccard(set(kg.types_of(e1)), set(kg.types_of(e2)))


def pred_coocc_sim(p1: int, p2: int, kg: KnowledgeGraph) -> float:
    """Jaccard similarity of the entity populations of two predicates."""
    return _jaccard(kg.stats.pred_entities[p1], kg.stats.pred_entities[p2])


def set_pred_jaccard(f_q: Fact, f_c: Fact) -> float:
    """Jaccard similarity of the two facts' predicate sets."""
    return _jaccard(set(f_q.predicates()), set(f_c.predicates()))


@dataclass
class FeatureConfig:
    """Per-run feature configuration.

    ``onehot_vocab`` maps predicate-string chains of training relationships
    to one-hot slots; query signatures outside it encode as an all-zero
    block. ``date_types`` holds type strings whose carriers count as dates.
    """

    distance_cap: int = 6
    use_log: bool = True
    onehot_vocab: dict[tuple[str, ...], int] = field(default_factory=dict)
    date_types: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {
            "distance_cap": self.distance_cap,
            "use_log": self.use_log,
            "onehot_vocab": ["/".join(sig) for sig, _ in sorted(self.onehot_vocab.items(), key=lambda kv: kv[1])],
            "date_types": sorted(self.date_types),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        vocab = {tuple(chain.split("/")): i for i, chain in enumerate(d.get("onehot_vocab", []))}
        return cls(
            distance_cap=int(d.get("distance_cap", 6)),
            use_log=bool(d.get("use_log", True)),
            onehot_vocab=vocab,
            date_types=frozenset(d.get("date_types", ())),
        )

    def schema(self) -> list[str]:
        names = []
        for fact_tag in ("q", "c"):
            names += [f"pred_freq_{fact_tag}_{m}" for m in ("min", "max", "avg")]
        for fact_tag in ("q", "c"):
            names += [f"ent_freq_{fact_tag}_{m}" for m in ("min", "max", "avg")]
        names += ["informativeness_q", "informativeness_c"]
        names += [f"type_sim_{m}" for m in ("min", "max", "avg")]
        names += [f"ent_dist_{m}" for m in ("min", "max", "avg")]
        names += [f"pred_coocc_{m}" for m in ("min", "max", "avg")]
        names += ["set_pred_jaccard", "shared_cvt"]
        names += ["has_cvt_q", "has_cvt_c", "is_date_q", "is_date_c"]
        names += [f"sig_onehot_{i}" for i in range(len(self.onehot_vocab))]
        return names


def build_onehot_vocab(kg: KnowledgeGraph, query_facts) -> dict[tuple[str, ...], int]:
    """One-hot slot assignment from the signatures of the training queries."""
    chains = sorted(
        {tuple(kg.predicate_str(p) for p in signature_of(f).predicates) for f in query_facts}
    )
    return {chain: i for i, chain in enumerate(chains)}


def entity_distance(e1: int, e2: int, kg: KnowledgeGraph, cfg: FeatureConfig) -> float:
    return float(shortest_path_length(e1, e2, cfg.distance_cap, kg))


def _minmaxavg(values: list[float]) -> tuple[float, float, float]:
    return min(values), max(values), sum(values) / len(values)


def _is_date_fact(fact: Fact, kg: KnowledgeGraph, date_type_ids: frozenset[int]) -> float:
    for e in fact.entities():
        if any(z in date_type_ids for z in kg.types_of(e)):
            return 1.0
    return 0.0


def build_feature_vector(
    f_q: Fact, f_c: Fact, kg: KnowledgeGraph, cfg: FeatureConfig
) -> list[float]:
    """The full fixed-length feature vector for one pair.

    Order follows ``FeatureConfig.schema()``. With ``use_log`` the frequency
    families are transformed as ln(x + eps) to keep tiny shares of huge
    graphs out of the underflow range; similarity and distance features stay
    linear.
    """
    values: list[float] = []

    def freq(x: float) -> float:
        return math.log(x + LOG_EPS) if cfg.use_log else x

    for fact in (f_q, f_c):
        values.extend(freq(v) for v in _minmaxavg([pred_freq(p, kg) for p in fact.predicates()]))
    for fact in (f_q, f_c):
        values.extend(freq(v) for v in _minmaxavg([ent_freq(e, kg) for e in fact.entities()]))
    values.append(path_informativeness(f_q, kg))
    values.append(path_informativeness(f_c, kg))

    ent_pairs = [(a, b) for a in f_q.entities() for b in f_c.entities()]
    values.extend(_minmaxavg([ent_type_sim(a, b, kg) for a, b in ent_pairs]))
    values.extend(_minmaxavg([entity_distance(a, b, kg, cfg) for a, b in ent_pairs]))
    pred_pairs = [(p, q) for p in f_q.predicates() for q in f_c.predicates()]
    values.extend(_minmaxavg([pred_coocc_sim(p, q, kg) for p, q in pred_pairs]))
    values.append(set_pred_jaccard(f_q, f_c))
    values.append(1.0 if shares_cvt(f_q, f_c) else 0.0)

    values.append(1.0 if f_q.has_cvt else 0.0)
    values.append(1.0 if f_c.has_cvt else 0.0)
    date_ids = frozenset(
        z for z in (kg.type_id(s) for s in cfg.date_types) if z is not None
    )
    values.append(_is_date_fact(f_q, kg, date_ids))
    values.append(_is_date_fact(f_c, kg, date_ids))

    onehot = [0.0] * len(cfg.onehot_vocab)
    chain = tuple(kg.predicate_str(p) for p in f_q.predicates())
    slot = cfg.onehot_vocab.get(chain)
    if slot is not None:
        onehot[slot] = 1.0
    values.extend(onehot)
    return values
