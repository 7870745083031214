"""Candidate scoring: heuristic baselines and the trainable neural ranker.

Baselines score a pair from single feature families; the neural ranker is
trained per-query with a pairwise squared-error loss over batches of all
positive candidates plus k sampled negatives, optimized by Adam, with the
best epoch selected by validation NDCG@5.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .enumerator import CandidateSet, connection_paths
from .errors import DataError
from .evaluator import LabeledDataset, ndcg_at_k
from .facts import Fact, fact_from_canonical_id
from .features import (
    FeatureConfig,
    build_feature_vector,
    ent_type_sim,
    path_informativeness,
    pred_coocc_sim,
)
from .kg import KnowledgeGraph

logger = logging.getLogger(__name__)

BASELINES = ("fi", "aps", "aes")
MODEL_MAGIC = b"FCTXM1"


def baseline_score(variant: str, f_q: Fact, f_c: Fact, kg: KnowledgeGraph) -> float:
    """FI: candidate informativeness (query-independent). APS / AES: mean
    predicate co-occurrence / mean entity type similarity over all pairs."""
    v = variant.lower()
    if v == "fi":
        return path_informativeness(f_c, kg)
    if v == "aps":
        pairs = [(p, q) for p in f_q.predicates() for q in f_c.predicates()]
        return sum(pred_coocc_sim(p, q, kg) for p, q in pairs) / len(pairs)
    if v == "aes":
        pairs = [(a, b) for a in f_q.entities() for b in f_c.entities()]
        return sum(ent_type_sim(a, b, kg) for a, b in pairs) / len(pairs)
    raise DataError(f"unknown baseline variant: {variant!r}")


@dataclass(frozen=True)
class ScoredList:
    query_id: str
    entries: tuple[tuple[str, float], ...]  # (fact id, score), best first

    def ranked_ids(self) -> list[str]:
        return [fid for fid, _ in self.entries]


def _sort_scored(scores: dict[str, float]) -> tuple[tuple[str, float], ...]:
    return tuple(sorted(scores.items(), key=lambda kv: (-kv[1], kv[0])))


@dataclass
class NeuralScorer:
    """A trained model plus the configs needed to score new pairs."""

    params: nn.ModelParams
    train_cfg: nn.TrainingConfig
    feature_cfg: FeatureConfig

    def compile_pair(self, f_q: Fact, f_c: Fact, kg: KnowledgeGraph) -> nn.CompiledPair:
        a_s, a_t = connection_paths(f_q, f_c, kg, self.train_cfg.max_paths)
        lim = self.train_cfg.type_limit
        return nn.CompiledPair(
            fact_id=f_c.canonical_id,
            features=np.asarray(build_feature_vector(f_q, f_c, kg, self.feature_cfg)),
            s_paths=tuple(nn.compile_connection_path(p, kg, lim) for p in a_s),
            t_paths=tuple(nn.compile_connection_path(p, kg, lim) for p in a_t),
        )

    def score_pairs(self, query_tokens, pairs: list[nn.CompiledPair]) -> np.ndarray:
        preds, _ = nn.forward_batch(pairs, query_tokens, self.params)
        return preds

    def forward(self, f_q: Fact, f_c: Fact, kg: KnowledgeGraph) -> float:
        """Score a single pair in (0, 1), inference mode."""
        query_tokens = nn.compile_fact_path(f_q, kg, self.train_cfg.type_limit)
        return float(self.score_pairs(query_tokens, [self.compile_pair(f_q, f_c, kg)])[0])


def rank(
    f_q: Fact,
    candidates: CandidateSet,
    scorer: str | NeuralScorer,
    kg: KnowledgeGraph,
) -> ScoredList:
    """Score every candidate and sort descending, ties by ascending id."""
    if not candidates.candidates:
        raise DataError(f"no candidates to rank for {f_q.canonical_id}")
    if isinstance(scorer, str):
        scores = {
            c.canonical_id: baseline_score(scorer, f_q, c, kg)
            for c in candidates.candidates
        }
    else:
        query_tokens = nn.compile_fact_path(f_q, kg, scorer.train_cfg.type_limit)
        pairs = [scorer.compile_pair(f_q, c, kg) for c in candidates.candidates]
        preds = scorer.score_pairs(query_tokens, pairs)
        scores = {p.fact_id: float(v) for p, v in zip(pairs, preds)}
    return ScoredList(query_id=f_q.canonical_id, entries=_sort_scored(scores))


# -- training ---------------------------------------------------------------------


@dataclass
class _QueryData:
    query_id: str
    query_tokens: nn.TokenSeq
    pairs: list[nn.CompiledPair]
    positives: list[int]
    negatives: list[int]


def _compile_dataset(
    ds: LabeledDataset, kg: KnowledgeGraph, tcfg: nn.TrainingConfig, fcfg: FeatureConfig
) -> list[_QueryData]:
    out = []
    for query_id in sorted(ds.entries):
        f_q = fact_from_canonical_id(kg, query_id)
        query_tokens = nn.compile_fact_path(f_q, kg, tcfg.type_limit)
        pairs = []
        for fact_id, grade in ds.entries[query_id]:
            f_c = fact_from_canonical_id(kg, fact_id)
            a_s, a_t = connection_paths(f_q, f_c, kg, tcfg.max_paths)
            pairs.append(nn.CompiledPair(
                fact_id=fact_id,
                features=np.asarray(build_feature_vector(f_q, f_c, kg, fcfg)),
                s_paths=tuple(nn.compile_connection_path(p, kg, tcfg.type_limit) for p in a_s),
                t_paths=tuple(nn.compile_connection_path(p, kg, tcfg.type_limit) for p in a_t),
                label=1 if grade >= 1 else 0,
            ))
        positives = [i for i, p in enumerate(pairs) if p.label == 1]
        negatives = [i for i, p in enumerate(pairs) if p.label == 0]
        out.append(_QueryData(query_id, query_tokens, pairs, positives, negatives))
    return out


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    valid_ndcg5: float


def train(
    train_set: LabeledDataset,
    valid_set: LabeledDataset,
    kg: KnowledgeGraph,
    tcfg: nn.TrainingConfig,
    fcfg: FeatureConfig,
) -> tuple[NeuralScorer, list[EpochStats]]:
    """Train the neural ranker; returns the best-validation model and history.

    One batch per training query per epoch: all its positives plus
    ``k_negatives`` negatives sampled without replacement (all of them when
    fewer exist). Queries without a positive are skipped with a warning.
    Sampling, dropout, and initialization all derive from tcfg.seed, so a
    fixed seed reproduces the run bit for bit.
    """
    queries = _compile_dataset(train_set, kg, tcfg, fcfg)
    usable = [q for q in queries if q.positives]
    for q in queries:
        if not q.positives:
            logger.warning("skipping query with no positive labels: %s", q.query_id)
    if not usable:
        raise DataError("no training query has a positive label")
    valid_queries = _compile_dataset(valid_set, kg, tcfg, fcfg)

    n_features = len(usable[0].pairs[0].features)
    params = nn.init_params(tcfg, kg.num_types, kg.num_predicates, n_features)
    params.validate(n_features)
    opt = nn.Adam(learning_rate=tcfg.learning_rate)

    best = params.copy()
    best_ndcg = -1.0
    best_epoch = -1
    history: list[EpochStats] = []
    for epoch in range(tcfg.max_epochs):
        losses = []
        for qidx, q in enumerate(usable):
            sample_rng = np.random.default_rng([tcfg.seed, epoch, qidx])
            if len(q.negatives) > tcfg.k_negatives:
                chosen = sample_rng.choice(
                    len(q.negatives), size=tcfg.k_negatives, replace=False
                )
                negs = [q.negatives[i] for i in sorted(chosen)]
            else:
                negs = q.negatives
            batch = [q.pairs[i] for i in q.positives + negs]
            dropout_rng = np.random.default_rng([tcfg.seed, epoch, qidx, 1])
            loss, grads = nn.objective(
                batch, q.query_tokens, params,
                l2_mlp=tcfg.l2_mlp,
                dropout_rate=tcfg.rnn_dropout,
                dropout_rng=dropout_rng,
            )
            opt.step(params, grads)
            losses.append(loss)
        ndcg5 = _validation_ndcg5(valid_queries, valid_set, params, tcfg, fcfg)
        history.append(EpochStats(epoch, float(np.mean(losses)), ndcg5))
        logger.info("epoch %d: loss %.6f, valid NDCG@5 %.4f", epoch, history[-1].mean_loss, ndcg5)
        if ndcg5 > best_ndcg:
            best_ndcg = ndcg5
            best = params.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= tcfg.patience:
            break
    return NeuralScorer(best, tcfg, fcfg), history


def _validation_ndcg5(valid_queries, valid_set: LabeledDataset, params, tcfg, fcfg) -> float:
    if not valid_queries:
        return 0.0
    values = []
    for q in valid_queries:
        preds, _ = nn.forward_batch(q.pairs, q.query_tokens, params)
        scores = {p.fact_id: float(v) for p, v in zip(q.pairs, preds)}
        ranked = [fid for fid, _ in _sort_scored(scores)]
        grades = dict(valid_set.entries[q.query_id])
        values.append(ndcg_at_k(ranked, grades, 5))
    return float(np.mean(values))


# -- model file ---------------------------------------------------------------------


def save_model(path: str | Path, scorer: NeuralScorer, meta: dict | None = None) -> None:
    """Versioned binary model file: FCTXM1 header, config echo, float64 tensors."""
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    blob = json.dumps(
        {
            "training": scorer.train_cfg.to_dict(),
            "features": scorer.feature_cfg.to_dict(),
            "meta": meta or {},
        },
        sort_keys=True,
    ).encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    tensors = scorer.params.named_tensors()
    buf.write(struct.pack("<I", len(tensors)))
    for name, t in tensors:
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", t.ndim))
        buf.write(struct.pack(f"<{t.ndim}I", *t.shape))
        buf.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_model(path: str | Path) -> tuple[NeuralScorer, dict]:
    data = Path(path).read_bytes()
    if data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise DataError(f"{path}: not a FCTXM1 model file")
    view = io.BytesIO(data[len(MODEL_MAGIC):])
    (blen,) = struct.unpack("<I", view.read(4))
    blob = json.loads(view.read(blen).decode("utf-8"))
    (count,) = struct.unpack("<I", view.read(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", view.read(2))
        name = view.read(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<B", view.read(1))
        shape = struct.unpack(f"<{ndim}I", view.read(4 * ndim))
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(view.read(8 * size), dtype="<f8").reshape(shape).copy()
        tensors[name] = arr
    n_mlp = sum(1 for name in tensors if name.startswith("mlp_w"))
    params = nn.ModelParams(
        w_type=tensors["w_type"],
        w_pred=tensors["w_pred"],
        w_pred_inv=tensors["w_pred_inv"],
        w_xh=tensors["w_xh"],
        w_hh=tensors["w_hh"],
        mlp_weights=[tensors[f"mlp_w{i}"] for i in range(n_mlp)],
        mlp_biases=[tensors[f"mlp_b{i}"] for i in range(n_mlp)],
    )
    scorer = NeuralScorer(
        params=params,
        train_cfg=nn.TrainingConfig.from_dict(blob["training"]),
        feature_cfg=FeatureConfig.from_dict(blob["features"]),
    )
    return scorer, blob.get("meta", {})
