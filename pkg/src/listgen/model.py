"""A small query-conditioned autoregressive docid scorer, trained with numpy.

Architecture: hashed query-token embeddings go through one tanh layer to
give encoder states; their masked mean initializes a single-layer tanh RNN
decoder that attends (additively) over the encoder states at every step and
projects ``[state; context]`` onto the 12 docid-side tokens.

The forward pass is batched over (query, docid) sequences and keeps a cache
so that :meth:`ScorerModel.backward` can push a gradient w.r.t. the per-step
log-distributions back to every parameter.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .docids import BOS, DOCID_VOCAB_SIZE, EOS, docid_tokens, tokenize

UNK = 0


class ModelError(ValueError):
    pass


class Vocabulary:
    """Hashes words into ``size`` query-side buckets; bucket 0 is UNK."""

    def __init__(self, size: int = 4096, seed: int = 0):
        if size < 2:
            raise ModelError("vocabulary needs at least two buckets")
        self.size = size
        self.seed = seed

    def word_id(self, word: str) -> int:
        h = zlib.crc32(word.encode("utf-8"), self.seed & 0xFFFFFFFF)
        return 1 + h % (self.size - 1)

    def encode(self, text: str, max_tokens: Optional[int] = None) -> np.ndarray:
        words = tokenize(text)
        if max_tokens is not None:
            words = words[:max_tokens]
        if not words:
            return np.array([UNK], dtype=np.int64)
        return np.array([self.word_id(w) for w in words], dtype=np.int64)


# name -> shape builder; order fixes checkpoint layout
def _param_shapes(vocab_size: int, e: int, h: int) -> Dict[str, Tuple[int, ...]]:
    v = DOCID_VOCAB_SIZE
    return {
        "query_embed": (vocab_size, e),
        "enc_w": (e, h),
        "enc_b": (h,),
        "init_w": (h, h),
        "init_b": (h,),
        "dec_embed": (v, e),
        "att_key": (h, h),
        "att_query": (h, h),
        "att_v": (h,),
        "rnn_x": (e, h),
        "rnn_s": (h, h),
        "rnn_c": (h, h),
        "rnn_b": (h,),
        "out_s": (h, v),
        "out_c": (h, v),
        "out_b": (v,),
    }


def _f32(a: np.ndarray) -> np.ndarray:
    # Parameters always hold float32-representable values so checkpoints are exact.
    return a.astype(np.float32).astype(np.float64)


@dataclass
class SequenceBatch:
    """Teacher-forced (query, target) sequences; targets end with EOS."""

    queries: List[np.ndarray]
    targets: List[List[int]]

    def __len__(self):
        return len(self.targets)

    @classmethod
    def from_docids(cls, queries, docids: Sequence[str]) -> "SequenceBatch":
        return cls(list(queries), [docid_tokens(d) for d in docids])


@dataclass
class ForwardResult:
    logp: np.ndarray  # (B, T, V) log-distributions
    targets: np.ndarray  # (B, T) target ids, 0 on padding
    mask: np.ndarray  # (B, T) 1.0 on real steps
    cache: dict = field(repr=False, default_factory=dict)

    def token_logps(self) -> np.ndarray:
        b, t = self.targets.shape
        picked = self.logp[np.arange(b)[:, None], np.arange(t)[None, :], self.targets]
        return picked * self.mask

    def lengths(self) -> np.ndarray:
        return self.mask.sum(1)


class ScorerModel:
    """Parameters plus forward/backward passes of the docid scorer."""

    def __init__(self, embed_dim: int = 32, hidden_dim: int = 64, vocab_size: int = 4096,
                 vocab_seed: int = 0, seed: int = 0, zero_output: bool = False):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.vocab = Vocabulary(vocab_size, vocab_seed)
        self.seed = seed
        self.step_count = 0
        rng = np.random.default_rng(seed)
        self.params: Dict[str, np.ndarray] = {}
        for name, shape in _param_shapes(vocab_size, embed_dim, hidden_dim).items():
            if name.endswith("_b"):
                p = np.zeros(shape)
            elif name in ("query_embed", "dec_embed"):
                p = rng.normal(0.0, 0.1, shape)
            else:
                p = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
            self.params[name] = _f32(p)
        if zero_output:
            for name in ("out_s", "out_c", "out_b"):
                self.params[name][...] = 0.0

    # -- helpers -----------------------------------------------------------

    def copy(self) -> "ScorerModel":
        other = object.__new__(ScorerModel)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def encode_text(self, text: str, max_tokens: Optional[int] = None) -> np.ndarray:
        return self.vocab.encode(text, max_tokens)

    def _check_query(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.int64)
        if q.ndim != 1 or len(q) == 0:
            raise ModelError("query tokens must be a non-empty 1-d sequence")
        if q.min() < 0 or q.max() >= self.vocab.size:
            raise ModelError("query token id out of range")
        return q

    # -- encoder -----------------------------------------------------------

    def _encode(self, queries: Sequence[np.ndarray]):
        p = self.params
        qs = [self._check_query(q) for q in queries]
        b, lq = len(qs), max(len(q) for q in qs)
        tok = np.zeros((b, lq), dtype=np.int64)
        qmask = np.zeros((b, lq))
        for i, q in enumerate(qs):
            tok[i, : len(q)] = q
            qmask[i, : len(q)] = 1.0
        emb = p["query_embed"][tok]
        h = np.tanh(emb @ p["enc_w"] + p["enc_b"]) * qmask[:, :, None]
        count = qmask.sum(1, keepdims=True)
        pooled = h.sum(1) / count
        s0 = np.tanh(pooled @ p["init_w"] + p["init_b"])
        keys = h @ p["att_key"]
        return dict(tok=tok, qmask=qmask, emb=emb, h=h, count=count, pooled=pooled, s0=s0, keys=keys)

    def _step(self, enc, s_prev: np.ndarray, inp: np.ndarray):
        """One decoder step for a batch aligned with ``enc``."""
        p = self.params
        x = p["dec_embed"][inp]
        u = np.tanh(enc["keys"] + (s_prev @ p["att_query"])[:, None, :])
        scores = u @ p["att_v"]
        scores = np.where(enc["qmask"] > 0, scores, -np.inf)
        scores = scores - scores.max(1, keepdims=True)
        a = np.exp(scores)
        a /= a.sum(1, keepdims=True)
        ctx = np.einsum("bl,blh->bh", a, enc["h"])
        s = np.tanh(x @ p["rnn_x"] + s_prev @ p["rnn_s"] + ctx @ p["rnn_c"] + p["rnn_b"])
        logits = s @ p["out_s"] + ctx @ p["out_c"] + p["out_b"]
        m = logits.max(1, keepdims=True)
        logp = logits - (m + np.log(np.exp(logits - m).sum(1, keepdims=True)))
        return logp, s, dict(x=x, u=u, a=a, ctx=ctx, s=s, s_prev=s_prev, inp=inp)

    # -- batched teacher forcing --------------------------------------------

    def forward(self, batch: SequenceBatch) -> ForwardResult:
        if len(batch) == 0:
            raise ModelError("empty batch")
        for tgt in batch.targets:
            if not tgt or any(not 0 <= t <= EOS for t in tgt):
                raise ModelError("docid token id out of range")
        enc = self._encode(batch.queries)
        b, tmax = len(batch), max(len(t) for t in batch.targets)
        targets = np.zeros((b, tmax), dtype=np.int64)
        inputs = np.full((b, tmax), BOS, dtype=np.int64)
        mask = np.zeros((b, tmax))
        for i, tgt in enumerate(batch.targets):
            targets[i, : len(tgt)] = tgt
            inputs[i, 1 : len(tgt)] = tgt[:-1]
            mask[i, : len(tgt)] = 1.0
        s = enc["s0"]
        logps, steps = [], []
        for t in range(tmax):
            logp, s, c = self._step(enc, s, inputs[:, t])
            logps.append(logp)
            steps.append(c)
        logp = np.stack(logps, 1)
        return ForwardResult(logp, targets, mask, dict(enc=enc, steps=steps))

    def backward(self, fwd: ForwardResult, dlogp: np.ndarray) -> Dict[str, np.ndarray]:
        """Gradients of every parameter given d(loss)/d(log-distributions)."""
        p = self.params
        g = {k: np.zeros_like(v) for k, v in p.items()}
        enc, steps = fwd.cache["enc"], fwd.cache["steps"]
        h = enc["h"]
        dh = np.zeros_like(h)
        dkeys = np.zeros_like(enc["keys"])
        ds_next = np.zeros_like(enc["s0"])
        dlogp = dlogp * fwd.mask[:, :, None]
        for t in reversed(range(len(steps))):
            c = steps[t]
            gl = dlogp[:, t]
            prob = np.exp(fwd.logp[:, t])
            dlogits = gl - prob * gl.sum(1, keepdims=True)
            g["out_s"] += c["s"].T @ dlogits
            g["out_c"] += c["ctx"].T @ dlogits
            g["out_b"] += dlogits.sum(0)
            ds = dlogits @ p["out_s"].T + ds_next
            dctx = dlogits @ p["out_c"].T
            dz = ds * (1.0 - c["s"] ** 2)
            g["rnn_x"] += c["x"].T @ dz
            g["rnn_s"] += c["s_prev"].T @ dz
            g["rnn_c"] += c["ctx"].T @ dz
            g["rnn_b"] += dz.sum(0)
            np.add.at(g["dec_embed"], c["inp"], dz @ p["rnn_x"].T)
            ds_prev = dz @ p["rnn_s"].T
            dctx += dz @ p["rnn_c"].T
            a = c["a"]
            da = np.einsum("bh,blh->bl", dctx, h)
            dh += a[:, :, None] * dctx[:, None, :]
            de = a * (da - (a * da).sum(1, keepdims=True))
            g["att_v"] += np.einsum("bl,blh->h", de, c["u"])
            dpre = de[:, :, None] * p["att_v"] * (1.0 - c["u"] ** 2)
            dkeys += dpre
            dq = dpre.sum(1)
            g["att_query"] += c["s_prev"].T @ dq
            ds_prev += dq @ p["att_query"].T
            ds_next = ds_prev
        dz0 = ds_next * (1.0 - enc["s0"] ** 2)
        g["init_w"] += enc["pooled"].T @ dz0
        g["init_b"] += dz0.sum(0)
        dpooled = dz0 @ p["init_w"].T
        qmask = enc["qmask"]
        dh += (dpooled / enc["count"])[:, None, :] * qmask[:, :, None]
        g["att_key"] += np.einsum("blh,blk->hk", h, dkeys)
        dh += dkeys @ p["att_key"].T
        dpre_h = dh * (1.0 - h**2) * qmask[:, :, None]
        g["enc_w"] += np.einsum("ble,blh->eh", enc["emb"], dpre_h)
        g["enc_b"] += dpre_h.sum((0, 1))
        np.add.at(g["query_embed"], enc["tok"].ravel(), (dpre_h @ p["enc_w"].T).reshape(-1, self.embed_dim))
        return g

    # -- incremental decoding ------------------------------------------------

    def start(self, query_tokens: np.ndarray):
        """Encoder state and initial decoder state for one query."""
        enc = self._encode([query_tokens])
        return enc, enc["s0"][0]

    def next_logprobs(self, enc, states: np.ndarray, prev_tokens: np.ndarray):
        """Advance ``len(states)`` hypotheses of one query by one step."""
        n = len(states)
        tiled = {k: np.repeat(enc[k], n, axis=0) for k in ("h", "keys", "qmask")}
        logp, s, _ = self._step(tiled, states, np.asarray(prev_tokens, dtype=np.int64))
        return logp, s

    # -- checkpoints ---------------------------------------------------------

    def save(self, directory) -> None:
        """Write ``manifest.txt`` plus one little-endian float32 file per parameter."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        lines = [
            f"embed_dim = {self.embed_dim}",
            f"hidden_dim = {self.hidden_dim}",
            f"vocab_size = {self.vocab.size}",
            f"vocab_seed = {self.vocab.seed}",
            f"seed = {self.seed}",
            f"step_count = {self.step_count}",
            "params = " + ",".join(self.params),
        ]
        (d / "manifest.txt").write_text("\n".join(lines) + "\n")
        for name, arr in self.params.items():
            (d / f"{name}.f32").write_bytes(arr.astype("<f4").tobytes())

    @classmethod
    def load(cls, directory) -> "ScorerModel":
        d = Path(directory)
        manifest = d / "manifest.txt"
        if not manifest.exists():
            raise ModelError(f"no checkpoint at {d}")
        meta = {}
        for line in manifest.read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k.strip()] = v.strip()
        model = cls(int(meta["embed_dim"]), int(meta["hidden_dim"]), int(meta["vocab_size"]),
                    int(meta["vocab_seed"]), int(meta["seed"]))
        model.step_count = int(meta["step_count"])
        for name, shape in _param_shapes(model.vocab.size, model.embed_dim, model.hidden_dim).items():
            raw = np.frombuffer((d / f"{name}.f32").read_bytes(), dtype="<f4")
            if raw.size != int(np.prod(shape)):
                raise ModelError(f"parameter {name} has wrong size in {d}")
            model.params[name] = raw.astype(np.float64).reshape(shape)
        return model


# ---------------------------------------------------------------------------
# Functional surface
# ---------------------------------------------------------------------------


def token_logprobs(model: ScorerModel, query_tokens, prefix: Sequence[int]) -> np.ndarray:
    """Log-distribution over the 12 docid tokens after ``prefix`` (which starts with BOS)."""
    prefix = list(prefix)
    if not prefix or prefix[0] != BOS:
        raise ModelError("prefix must start with BOS")
    if any(not 0 <= t < DOCID_VOCAB_SIZE for t in prefix):
        raise ModelError("docid token id out of range")
    enc, s = model.start(query_tokens)
    s = s[None, :]
    for tok in prefix:
        logp, s = model.next_logprobs(enc, s, np.array([tok]))
    return logp[0]


def sequence_logprob(model: ScorerModel, query_tokens, docid: str) -> float:
    """Teacher-forced log P(docid | query), EOS step included."""
    fwd = model.forward(SequenceBatch.from_docids([query_tokens], [docid]))
    return float(fwd.token_logps().sum())


@dataclass
class AdamConfig:
    base_lr: float = 1e-3
    total_steps: int = 1000
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def lr(self, step_index: int) -> float:
        warmup = max(1, int(round(self.warmup_fraction * self.total_steps)))
        if step_index < warmup:
            return self.base_lr * (step_index + 1) / warmup
        return self.base_lr


class AdamState:
    def __init__(self, model: ScorerModel):
        self.m = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in model.params.items()}


def optimizer_step(model: ScorerModel, grads: Dict[str, np.ndarray], step_index: int,
                   config: AdamConfig, state: AdamState) -> ScorerModel:
    """Decoupled-weight-decay Adam update with a linear warm-up; mutates and returns ``model``."""
    for k, gk in grads.items():
        if not np.all(np.isfinite(gk)):
            raise ModelError(f"non-finite gradient for {k}")
    lr = config.lr(step_index)
    t = step_index + 1
    c1 = 1.0 - config.beta1**t
    c2 = 1.0 - config.beta2**t
    for k, p in model.params.items():
        gk = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= config.beta1
        m += (1.0 - config.beta1) * gk
        v *= config.beta2
        v += (1.0 - config.beta2) * gk * gk
        update = (m / c1) / (np.sqrt(v / c2) + config.eps)
        new = p - lr * update
        if config.weight_decay:
            new -= lr * config.weight_decay * p
        model.params[k] = _f32(new)
    model.step_count += 1
    return model


# ---------------------------------------------------------------------------
# Differentiable objectives over teacher-forced sequences
# ---------------------------------------------------------------------------


class Objective:
    """A scalar loss that depends on the model only through sequence log-probs.

    Subclasses list the (query, target) sequences they need and map the
    resulting log-distributions to ``(value, d value / d logp)``. Objectives
    compose with ``+`` and scalar ``*``; a composite runs a single batched
    forward pass for all of its terms.
    """

    def sequences(self) -> Tuple[List[np.ndarray], List[List[int]]]:
        raise NotImplementedError

    def value_and_grad(self, view: ForwardResult) -> Tuple[float, np.ndarray]:
        raise NotImplementedError

    def __add__(self, other: "Objective") -> "Objective":
        return SumObjective([self, other])

    def __mul__(self, c: float) -> "Objective":
        return SumObjective([self], [float(c)])

    __rmul__ = __mul__


class SumObjective(Objective):
    def __init__(self, terms: Sequence[Objective], coefs: Optional[Sequence[float]] = None):
        self.terms: List[Objective] = []
        self.coefs: List[float] = []
        coefs = [1.0] * len(terms) if coefs is None else list(coefs)
        for term, c in zip(terms, coefs):
            if isinstance(term, SumObjective):
                self.terms += term.terms
                self.coefs += [c * ci for ci in term.coefs]
            else:
                self.terms.append(term)
                self.coefs.append(c)
        self._spans = []

    def sequences(self):
        queries, targets = [], []
        self._spans = []
        for term in self.terms:
            q, t = term.sequences()
            self._spans.append((len(targets), len(targets) + len(t)))
            queries += q
            targets += t
        return queries, targets

    def value_and_grad(self, view):
        total = 0.0
        grad = np.zeros_like(view.logp)
        for term, c, (a, b) in zip(self.terms, self.coefs, self._spans):
            if a == b:
                v, _ = term.value_and_grad(None)
            else:
                sub = ForwardResult(view.logp[a:b], view.targets[a:b], view.mask[a:b])
                v, gsub = term.value_and_grad(sub)
                grad[a:b] += c * gsub
            total += c * v
        return total, grad


def evaluate(model: ScorerModel, objective: Objective, with_grad: bool = False):
    """Value of ``objective`` (and its parameter gradients when asked)."""
    queries, targets = objective.sequences()
    if not targets:
        value, _ = objective.value_and_grad(None)
        if not with_grad:
            return value
        return value, {k: np.zeros_like(v) for k, v in model.params.items()}
    fwd = model.forward(SequenceBatch(queries, targets))
    value, dlogp = objective.value_and_grad(fwd)
    if not with_grad:
        return float(value)
    if not np.isfinite(value):
        raise ModelError("non-finite loss")
    return float(value), model.backward(fwd, dlogp)


def parameter_gradients(model: ScorerModel, objective: Objective) -> Dict[str, np.ndarray]:
    return evaluate(model, objective, with_grad=True)[1]
