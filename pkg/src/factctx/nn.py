"""Neural scoring network with hand-derived reverse-mode gradients.

Architecture: the query fact and every connection path between the query
and candidate facts are token sequences (entities as the element-wise sum
of their top type embeddings, predicates as forward or inverse embedding
rows) encoded by one shared tanh RNN from a zero initial state. Path
encodings are summed per side into v_as and v_at, concatenated with the
query encoding v_q and the hand-crafted feature vector, and scored by an
MLP with ReLU hidden layers and a sigmoid output.

The architecture is small and fixed, so the backward pass is written by
hand and checked against central finite differences instead of pulling in
an autodiff engine. All tensors are float64.

Token compilation lives here too: paths become tuples of
``("t", type_ids)`` entity tokens and ``("p", pid)`` / ``("i", pid)``
predicate tokens, so training can precompute them once per pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .enumerator import ConnectionPath
from .errors import DataError
from .facts import Fact
from .kg import KnowledgeGraph, entity_types

DEFAULT_TYPE_LIMIT = 7

Token = tuple  # ("t", (type ids...)) | ("p", pred id) | ("i", pred id)
TokenSeq = tuple


@dataclass
class TrainingConfig:
    """Hyperparameters of the trainable ranker and its optimizer."""

    k_negatives: int = 10
    learning_rate: float = 0.01
    d_z: int = 64
    d_p: int = 64
    rnn_size: int = 64
    rnn_dropout: float = 0.0
    alpha: int = 1
    beta: int = 50
    l2_mlp: float = 0.0
    max_epochs: int = 30
    patience: int = 5
    seed: int = 13
    max_paths: int = 64
    type_limit: int = DEFAULT_TYPE_LIMIT

    def __post_init__(self):
        if self.d_z != self.d_p:
            raise DataError(
                f"entity-type and predicate embeddings must share one width "
                f"(single RNN input matrix): d_z={self.d_z}, d_p={self.d_p}"
            )
        if not 0.0 <= self.rnn_dropout < 1.0:
            raise DataError(f"dropout must be in [0, 1): {self.rnn_dropout}")
        for name in ("k_negatives", "learning_rate", "d_z", "rnn_size", "beta",
                     "max_epochs", "patience", "max_paths", "type_limit"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if self.alpha < 0 or self.l2_mlp < 0:
            raise DataError("alpha and l2_mlp must be non-negative")

    def to_dict(self) -> dict:
        return {
            "k_negatives": self.k_negatives,
            "learning_rate": self.learning_rate,
            "d_z": self.d_z,
            "d_p": self.d_p,
            "rnn_size": self.rnn_size,
            "rnn_dropout": self.rnn_dropout,
            "alpha": self.alpha,
            "beta": self.beta,
            "l2_mlp": self.l2_mlp,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "max_paths": self.max_paths,
            "type_limit": self.type_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)


@dataclass
class ModelParams:
    """Every trainable tensor of the network."""

    w_type: np.ndarray      # (n_types, d)
    w_pred: np.ndarray      # (n_preds, d)
    w_pred_inv: np.ndarray  # (n_preds, d)
    w_xh: np.ndarray        # (h, d)
    w_hh: np.ndarray        # (h, h)
    mlp_weights: list[np.ndarray]  # hidden layers then the scalar output layer
    mlp_biases: list[np.ndarray]

    @property
    def rnn_size(self) -> int:
        return self.w_hh.shape[0]

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        named = [
            ("w_type", self.w_type),
            ("w_pred", self.w_pred),
            ("w_pred_inv", self.w_pred_inv),
            ("w_xh", self.w_xh),
            ("w_hh", self.w_hh),
        ]
        for i, (w, b) in enumerate(zip(self.mlp_weights, self.mlp_biases)):
            named.append((f"mlp_w{i}", w))
            named.append((f"mlp_b{i}", b))
        return named

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.w_type.copy(), self.w_pred.copy(), self.w_pred_inv.copy(),
            self.w_xh.copy(), self.w_hh.copy(),
            [w.copy() for w in self.mlp_weights],
            [b.copy() for b in self.mlp_biases],
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            np.zeros_like(self.w_type), np.zeros_like(self.w_pred),
            np.zeros_like(self.w_pred_inv), np.zeros_like(self.w_xh),
            np.zeros_like(self.w_hh),
            [np.zeros_like(w) for w in self.mlp_weights],
            [np.zeros_like(b) for b in self.mlp_biases],
        )

    def validate(self, n_features: int) -> None:
        d = self.w_type.shape[1]
        h = self.rnn_size
        if self.w_pred.shape[1] != d or self.w_pred_inv.shape[1] != d:
            raise DataError("embedding widths disagree")
        if self.w_xh.shape != (h, d) or self.w_hh.shape != (h, h):
            raise DataError("RNN matrix shapes disagree")
        expect = 3 * h + n_features
        for w, b in zip(self.mlp_weights, self.mlp_biases):
            if w.shape[1] != expect or b.shape != (w.shape[0],):
                raise DataError(
                    f"MLP layer expects input width {expect}, got {w.shape}"
                )
            expect = w.shape[0]
        if expect != 1:
            raise DataError("MLP output layer must be scalar")
        for name, t in self.named_tensors():
            if not np.all(np.isfinite(t)):
                raise DataError(f"non-finite entries in {name}")


def init_params(
    cfg: TrainingConfig, n_types: int, n_preds: int, n_features: int
) -> ModelParams:
    """Uniform(-0.1, 0.1) initialization of every tensor from cfg.seed."""
    rng = np.random.default_rng(cfg.seed)

    def u(*shape):
        return rng.uniform(-0.1, 0.1, size=shape)

    d, h = cfg.d_z, cfg.rnn_size
    widths = [3 * h + n_features] + [cfg.beta] * cfg.alpha + [1]
    return ModelParams(
        w_type=u(n_types, d),
        w_pred=u(n_preds, d),
        w_pred_inv=u(n_preds, d),
        w_xh=u(h, d),
        w_hh=u(h, h),
        mlp_weights=[u(widths[i + 1], widths[i]) for i in range(len(widths) - 1)],
        mlp_biases=[u(widths[i + 1]) for i in range(len(widths) - 1)],
    )


# -- token compilation ---------------------------------------------------------


def entity_token(e: int, kg: KnowledgeGraph, type_limit: int = DEFAULT_TYPE_LIMIT) -> Token:
    return ("t", tuple(entity_types(e, kg, type_limit)))


def compile_connection_path(
    path: ConnectionPath, kg: KnowledgeGraph, type_limit: int = DEFAULT_TYPE_LIMIT
) -> TokenSeq:
    tokens = [entity_token(path.start, kg, type_limit)]
    for step in path.steps:
        tokens.append(("i" if step.inverse else "p", step.predicate))
        tokens.append(entity_token(step.entity, kg, type_limit))
    return tuple(tokens)


def compile_fact_path(fact: Fact, kg: KnowledgeGraph, type_limit: int = DEFAULT_TYPE_LIMIT) -> TokenSeq:
    """A fact viewed as one forward path for the query encoder."""
    tokens = [entity_token(fact.triples[0].subject, kg, type_limit)]
    for t in fact.triples:
        tokens.append(("p", t.predicate))
        tokens.append(entity_token(t.object, kg, type_limit))
    return tuple(tokens)


def token_embedding(token: Token, params: ModelParams) -> np.ndarray:
    kind, ids = token
    if kind == "t":
        return params.w_type[list(ids)].sum(axis=0)
    if kind == "p":
        return params.w_pred[ids]
    return params.w_pred_inv[ids]


def encode_path(path: ConnectionPath, params: ModelParams, kg: KnowledgeGraph,
                type_limit: int = DEFAULT_TYPE_LIMIT) -> np.ndarray:
    """Final RNN state over a single connection path (inference helper)."""
    return encode_tokens(compile_connection_path(path, kg, type_limit), params)


def encode_tokens(tokens: TokenSeq, params: ModelParams) -> np.ndarray:
    h = np.zeros(params.rnn_size)
    for tok in tokens:
        x = token_embedding(tok, params)
        h = np.tanh(params.w_hh @ h + params.w_xh @ x)
    return h


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- batched forward / backward -------------------------------------------------


@dataclass
class CompiledPair:
    """Everything the network needs about one (query, candidate) pair."""

    fact_id: str
    features: np.ndarray
    s_paths: tuple[TokenSeq, ...]
    t_paths: tuple[TokenSeq, ...]
    label: int = 0


@dataclass
class ForwardCache:
    paths: list[TokenSeq]
    groups: list[tuple[int, list[int]]]            # (length, path indices)
    group_states: list[list[np.ndarray]]           # per group: H_0..H_L  (n, h)
    group_inputs: list[list[np.ndarray]]           # per group: X_1..X_L  (n, d)
    enc: np.ndarray                                # (P, h) after dropout
    path_masks: np.ndarray | None                  # (P, h) inverted-dropout scale
    s_index: list[list[int]]
    t_index: list[list[int]]
    z: np.ndarray                                  # (n, 3h + F)
    hidden_pre: list[np.ndarray]
    hidden_act: list[np.ndarray]
    hidden_masks: list[np.ndarray | None]
    out_pre: np.ndarray
    u: np.ndarray


def forward_batch(
    batch: list[CompiledPair],
    query_tokens: TokenSeq,
    params: ModelParams,
    dropout_rate: float = 0.0,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Scores in (0,1) for every pair of one query's batch.

    Dropout fires only when both a positive rate and an RNG are supplied,
    i.e. in training mode.
    """
    if not batch:
        raise DataError("empty batch")
    h_size = params.rnn_size

    paths: list[TokenSeq] = []
    index_of: dict[TokenSeq, int] = {}

    def intern_path(tokens: TokenSeq) -> int:
        i = index_of.get(tokens)
        if i is None:
            i = len(paths)
            index_of[tokens] = i
            paths.append(tokens)
        return i

    q_idx = intern_path(query_tokens)
    s_index = [[intern_path(t) for t in pair.s_paths] for pair in batch]
    t_index = [[intern_path(t) for t in pair.t_paths] for pair in batch]

    by_len: dict[int, list[int]] = {}
    for i, p in enumerate(paths):
        by_len.setdefault(len(p), []).append(i)
    groups = sorted(by_len.items())

    enc = np.zeros((len(paths), h_size))
    group_states: list[list[np.ndarray]] = []
    group_inputs: list[list[np.ndarray]] = []
    for length, members in groups:
        n = len(members)
        states = [np.zeros((n, h_size))]
        inputs = []
        hcur = states[0]
        for t in range(length):
            x = np.stack([token_embedding(paths[i][t], params) for i in members])
            hcur = np.tanh(hcur @ params.w_hh.T + x @ params.w_xh.T)
            inputs.append(x)
            states.append(hcur)
        enc[members] = hcur
        group_states.append(states)
        group_inputs.append(inputs)

    use_dropout = dropout_rate > 0.0 and dropout_rng is not None
    path_masks = None
    if use_dropout:
        keep = 1.0 - dropout_rate
        path_masks = (dropout_rng.random(enc.shape) < keep) / keep
        enc = enc * path_masks

    n = len(batch)
    v_q = enc[q_idx]
    v_as = np.zeros((n, h_size))
    v_at = np.zeros((n, h_size))
    for i in range(n):
        if s_index[i]:
            v_as[i] = enc[s_index[i]].sum(axis=0)
        if t_index[i]:
            v_at[i] = enc[t_index[i]].sum(axis=0)
    feats = np.stack([pair.features for pair in batch])
    z = np.concatenate([np.tile(v_q, (n, 1)), v_as, v_at, feats], axis=1)

    hidden_pre, hidden_act, hidden_masks = [], [], []
    a = z
    for w, b in zip(params.mlp_weights[:-1], params.mlp_biases[:-1]):
        pre = a @ w.T + b
        act = np.maximum(pre, 0.0)
        mask = None
        if use_dropout:
            keep = 1.0 - dropout_rate
            mask = (dropout_rng.random(act.shape) < keep) / keep
            act = act * mask
        hidden_pre.append(pre)
        hidden_act.append(act)
        hidden_masks.append(mask)
        a = act
    out_pre = (a @ params.mlp_weights[-1].T + params.mlp_biases[-1]).reshape(-1)
    u = _sigmoid(out_pre)

    cache = ForwardCache(
        paths=paths, groups=groups, group_states=group_states,
        group_inputs=group_inputs, enc=enc, path_masks=path_masks,
        s_index=s_index, t_index=t_index, z=z,
        hidden_pre=hidden_pre, hidden_act=hidden_act, hidden_masks=hidden_masks,
        out_pre=out_pre, u=u,
    )
    return u, cache


def backward_batch(
    du: np.ndarray, cache: ForwardCache, params: ModelParams
) -> ModelParams:
    """Gradients of a scalar objective given d(objective)/d(u)."""
    grads = params.zeros_like()
    h_size = params.rnn_size
    n = du.shape[0]

    dout_pre = du * cache.u * (1.0 - cache.u)  # (n,)
    a_prev = cache.hidden_act[-1] if cache.hidden_act else cache.z
    grads.mlp_weights[-1] += dout_pre[None, :] @ a_prev
    grads.mlp_biases[-1] += np.array([dout_pre.sum()])
    da = np.outer(dout_pre, params.mlp_weights[-1][0])
    for li in range(len(cache.hidden_pre) - 1, -1, -1):
        if cache.hidden_masks[li] is not None:
            da = da * cache.hidden_masks[li]
        dpre = da * (cache.hidden_pre[li] > 0.0)
        a_prev = cache.hidden_act[li - 1] if li > 0 else cache.z
        grads.mlp_weights[li] += dpre.T @ a_prev
        grads.mlp_biases[li] += dpre.sum(axis=0)
        da = dpre @ params.mlp_weights[li]

    dz = da
    dv_q = dz[:, :h_size].sum(axis=0)
    dv_as = dz[:, h_size:2 * h_size]
    dv_at = dz[:, 2 * h_size:3 * h_size]

    denc = np.zeros_like(cache.enc)
    denc[0] += dv_q  # query path is always interned first
    for i in range(n):
        for j in cache.s_index[i]:
            denc[j] += dv_as[i]
        for j in cache.t_index[i]:
            denc[j] += dv_at[i]
    if cache.path_masks is not None:
        denc = denc * cache.path_masks

    for (length, members), states, inputs in zip(
        cache.groups, cache.group_states, cache.group_inputs
    ):
        dh = denc[members]
        for t in range(length - 1, -1, -1):
            hcur = states[t + 1]
            dpre = dh * (1.0 - hcur * hcur)
            grads.w_hh += dpre.T @ states[t]
            grads.w_xh += dpre.T @ inputs[t]
            dx = dpre @ params.w_xh
            dh = dpre @ params.w_hh
            for row, pi in enumerate(members):
                kind, ids = cache.paths[pi][t]
                if kind == "t":
                    grads.w_type[list(ids)] += dx[row]
                elif kind == "p":
                    grads.w_pred[ids] += dx[row]
                else:
                    grads.w_pred_inv[ids] += dx[row]
    return grads


# -- loss -----------------------------------------------------------------------


def batch_loss(labels: np.ndarray, preds: np.ndarray) -> float:
    """Mean squared error of pairwise label gaps vs pairwise score gaps.

    Averages over all ordered pairs of the batch with itself; self-pairs
    contribute zero. Adding a constant to every prediction leaves the loss
    unchanged because only differences enter.
    """
    labels = np.asarray(labels, dtype=float)
    preds = np.asarray(preds, dtype=float)
    if labels.size == 0:
        raise DataError("empty batch")
    e = (labels[:, None] - labels[None, :]) - (preds[:, None] - preds[None, :])
    return float(np.mean(e * e))


def batch_loss_grad(labels: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """d(batch_loss)/d(preds)."""
    labels = np.asarray(labels, dtype=float)
    preds = np.asarray(preds, dtype=float)
    n = labels.shape[0]
    e = (labels[:, None] - labels[None, :]) - (preds[:, None] - preds[None, :])
    return -4.0 / (n * n) * e.sum(axis=1)


def objective(
    batch: list[CompiledPair],
    query_tokens: TokenSeq,
    params: ModelParams,
    l2_mlp: float = 0.0,
    dropout_rate: float = 0.0,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[float, ModelParams]:
    """Training objective (pairwise loss + L2 on MLP weights) and its gradients."""
    labels = np.array([p.label for p in batch], dtype=float)
    preds, cache = forward_batch(batch, query_tokens, params, dropout_rate, dropout_rng)
    loss = batch_loss(labels, preds)
    grads = backward_batch(batch_loss_grad(labels, preds), cache, params)
    if l2_mlp > 0.0:
        for w, gw in zip(params.mlp_weights, grads.mlp_weights):
            loss += l2_mlp * float(np.sum(w * w))
            gw += 2.0 * l2_mlp * w
    return loss, grads


# -- optimizer --------------------------------------------------------------------


@dataclass
class Adam:
    """Standard Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8)."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: ModelParams | None = None
    v: ModelParams | None = None

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        if self.m is None:
            self.m = params.zeros_like()
            self.v = params.zeros_like()
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for (_, p), (_, g), (_, m), (_, v) in zip(
            params.named_tensors(), grads.named_tensors(),
            self.m.named_tensors(), self.v.named_tensors(),
        ):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
