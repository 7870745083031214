"""Dataset splitting, ranking metrics, and significance testing.

Metrics follow the usual IR conventions: exponential-gain NDCG normalized
by the ideal ordering of all judged facts, AP and MRR over labels binarized
at grade >= 1, macro averages over queries, and a per-relationship
breakdown keyed by the query fact's predicate chain. Facts missing from
the judgments count as grade 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .facts import signature_from_canonical_id

RELEVANT_GRADE = 1  # "somewhat relevant" and above binarize to relevant


@dataclass
class LabeledDataset:
    """Graded judgments per query: query_id -> [(fact_id, grade)]."""

    entries: dict[str, list[tuple[str, int]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, query_id: str, fact_id: str, grade: int) -> None:
        bucket = self.entries.setdefault(query_id, [])
        for fid, _ in bucket:
            if fid == fact_id:
                raise DataError(f"duplicate judgment for {query_id!r} / {fact_id!r}")
        bucket.append((fact_id, grade))

    def grades_of(self, query_id: str) -> dict[str, int]:
        return dict(self.entries[query_id])

    def signature_of(self, query_id: str) -> str:
        return "/".join(signature_from_canonical_id(query_id))


def split_dataset(
    ds: LabeledDataset,
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 13,
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Per-relationship random split into train / validation / test.

    Validation and test sizes are floored per relationship; the remainder
    goes to training, so 10 queries under (0.7, 0.1, 0.2) split as 7/1/2.
    """
    if not ds.entries:
        raise DataError("cannot split an empty dataset")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1: {ratios}")
    groups: dict[str, list[str]] = {}
    for query_id in sorted(ds.entries):
        groups.setdefault(ds.signature_of(query_id), []).append(query_id)

    parts = (LabeledDataset(), LabeledDataset(), LabeledDataset())
    for sig in sorted(groups):
        qids = groups[sig]
        rng = np.random.default_rng([seed, len(sig)] + [ord(c) for c in sig])
        order = [qids[i] for i in rng.permutation(len(qids))]
        n = len(order)
        n_valid = math.floor(ratios[1] * n)
        n_test = math.floor(ratios[2] * n)
        n_train = n - n_valid - n_test
        slices = (order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:])
        for part, qid_slice in zip(parts, slices):
            for qid in qid_slice:
                part.entries[qid] = list(ds.entries[qid])
    return parts


# -- per-query metrics ---------------------------------------------------------


def ndcg_at_k(ranked_ids: list[str], grades: dict[str, int], k: int) -> float:
    """Exponential-gain NDCG: gain (2^g - 1), discount log2(rank + 1)."""
    if k < 1:
        raise DataError(f"k must be >= 1: {k}")
    dcg = 0.0
    for i, fid in enumerate(ranked_ids[:k]):
        g = grades.get(fid, 0)
        if g > 0:
            dcg += (2.0 ** g - 1.0) / math.log2(i + 2)
    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = sum(
        (2.0 ** g - 1.0) / math.log2(i + 2) for i, g in enumerate(ideal) if g > 0
    )
    return dcg / idcg if idcg > 0 else 0.0


def average_precision(ranked_ids: list[str], grades: dict[str, int]) -> float:
    relevant = {fid for fid, g in grades.items() if g >= RELEVANT_GRADE}
    if not relevant:
        return 0.0
    hits = 0
    total = 0.0
    for i, fid in enumerate(ranked_ids):
        if fid in relevant:
            hits += 1
            total += hits / (i + 1)
    return total / len(relevant)


def mrr(ranked_ids: list[str], grades: dict[str, int]) -> float:
    for i, fid in enumerate(ranked_ids):
        if grades.get(fid, 0) >= RELEVANT_GRADE:
            return 1.0 / (i + 1)
    return 0.0


# -- significance ---------------------------------------------------------------


def paired_t_test(a: list[float], b: list[float]) -> tuple[float, float]:
    """Paired two-tailed t-test over per-query values.

    Zero-variance differences degenerate: identical samples give (0, 1), a
    constant nonzero shift gives (signed inf, 0).
    """
    if len(a) != len(b):
        raise DataError(f"paired t-test needs equal lengths: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise DataError("paired t-test needs at least 2 observations")
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    dof = n - 1
    p = _reg_inc_beta(dof / 2.0, 0.5, dof / (dof + t * t))
    return t, p


def _reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) via Lentz continued fraction."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 3e-15) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


# -- aggregate report -------------------------------------------------------------


@dataclass
class MetricReport:
    per_query: dict[str, dict[str, float]]          # metric -> query_id -> value
    macro: dict[str, float]                          # metric -> mean
    per_relationship: dict[str, dict[str, float]]    # metric -> signature -> mean

    def metric_names(self) -> list[str]:
        return list(self.macro.keys())


def evaluate_run(
    run: dict[str, list[str]],
    qrels: LabeledDataset,
    cutoffs: tuple[int, ...] = (5, 10),
) -> MetricReport:
    """Per-query, macro, and per-relationship metrics for a ranked run."""
    missing = sorted(qid for qid in run if qid not in qrels.entries)
    if missing:
        raise DataError(f"run queries missing from qrels: {', '.join(missing)}")
    if not run:
        raise DataError("empty run")
    metric_names = ["MAP"] + [f"NDCG@{k}" for k in cutoffs] + ["MRR"]
    per_query: dict[str, dict[str, float]] = {m: {} for m in metric_names}
    for qid in sorted(run):
        ranked = run[qid]
        grades = qrels.grades_of(qid)
        per_query["MAP"][qid] = average_precision(ranked, grades)
        for k in cutoffs:
            per_query[f"NDCG@{k}"][qid] = ndcg_at_k(ranked, grades, k)
        per_query["MRR"][qid] = mrr(ranked, grades)

    macro = {m: float(np.mean(list(vals.values()))) for m, vals in per_query.items()}

    rel_values: dict[str, dict[str, list[float]]] = {m: {} for m in metric_names}
    for m in metric_names:
        for qid, v in per_query[m].items():
            rel_values[m].setdefault(qrels.signature_of(qid), []).append(v)
    per_relationship = {
        m: {sig: float(np.mean(vs)) for sig, vs in sorted(groups.items())}
        for m, groups in rel_values.items()
    }
    return MetricReport(per_query=per_query, macro=macro, per_relationship=per_relationship)


def render_report_tsv(report: MetricReport) -> str:
    lines = ["section\tkey\t" + "\t".join(report.metric_names())]
    lines.append(
        "macro\tall\t" + "\t".join(f"{report.macro[m]:.6f}" for m in report.metric_names())
    )
    sigs = sorted(next(iter(report.per_relationship.values())).keys()) if report.per_relationship else []
    for sig in sigs:
        lines.append(
            f"relationship\t{sig}\t"
            + "\t".join(f"{report.per_relationship[m][sig]:.6f}" for m in report.metric_names())
        )
    for qid in sorted(next(iter(report.per_query.values())).keys()):
        lines.append(
            f"query\t{qid}\t"
            + "\t".join(f"{report.per_query[m][qid]:.6f}" for m in report.metric_names())
        )
    return "\n".join(lines) + "\n"


def render_report_table(report: MetricReport) -> str:
    names = report.metric_names()
    key_width = max(
        [len("(macro)")]
        + [len(s) for m in report.per_relationship.values() for s in m]
    ) if report.per_relationship else len("(macro)")
    header = " ".join([" " * key_width] + [f"{m:>10}" for m in names])
    rows = [header]
    rows.append(" ".join([f"{'(macro)':<{key_width}}"] + [f"{report.macro[m]:>10.4f}" for m in names]))
    sigs = sorted(next(iter(report.per_relationship.values())).keys()) if report.per_relationship else []
    for sig in sigs:
        rows.append(
            " ".join([f"{sig:<{key_width}}"] + [f"{report.per_relationship[m][sig]:>10.4f}" for m in names])
        )
    return "\n".join(rows)
