"""Skip-gram with negative sampling over walk corpora.

Two matrices are learned: `vectors` (input representations, the exported
embedding) and `context_vectors` (output representations). Each observed
(input, context) pair is discriminated against a handful of noise vertices
drawn from the corpus frequency distribution raised to the 3/4 power, via
plain SGD on the per-pair logistic surrogate.

The hot loop is a numba kernel; it owns a small splitmix64 stream so the
deterministic mode is bit-reproducible and needs no giant pre-drawn
random buffers.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from ._io import atomic_text_writer
from .walks import WalkCorpus

logger = logging.getLogger(__name__)

MAX_NEGATIVE_RESAMPLES = 8
SIGMOID_CLAMP = 30.0
FINAL_LR_FRACTION = 1e-4


@dataclass
class SgnsConfig:
    dim: int = 32
    window_radius: int = 5  # positions each side; up to 2*radius context users
    negatives_per_pair: int = 5
    initial_lr: float = 0.025
    epochs: int = 5
    power: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.negatives_per_pair < 1:
            raise ValueError("negatives_per_pair must be >= 1")
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.power != 0.75:
            raise ValueError("noise power is fixed at 0.75")


@dataclass
class EmbeddingModel:
    vectors: np.ndarray  # (V, dim) input representations; rows are the embedding
    context_vectors: np.ndarray  # (V, dim) output representations
    ids: list[str]
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def vocab_size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def init_model(
    vocab_size: int, dim: int, ids: list[str], seed: int, dtype=np.float32
) -> EmbeddingModel:
    """Input vectors ~ U(-0.5/dim, 0.5/dim) per coordinate, output vectors zero."""
    if vocab_size < 1:
        raise ValueError("empty vocabulary")
    if len(ids) != vocab_size:
        raise ValueError("ids length must equal vocab_size")
    rng = np.random.default_rng(seed)
    vectors = ((rng.random((vocab_size, dim)) - 0.5) / dim).astype(dtype)
    context = np.zeros((vocab_size, dim), dtype=dtype)
    return EmbeddingModel(vectors=vectors, context_vectors=context, ids=list(ids))


# ---------------------------------------------------------------------------
# noise distribution + alias table
# ---------------------------------------------------------------------------


@dataclass
class NoiseDistribution:
    """Unigram^power noise distribution with an O(1) alias-table sampler."""

    probs: np.ndarray  # float64, sums to 1
    accept: np.ndarray  # per-bucket acceptance threshold
    alias: np.ndarray  # fallback bucket when rejected

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k = rng.integers(0, len(self.accept), size=size)
        u = rng.random(size)
        return np.where(u < self.accept[k], k, self.alias[k])


def _build_alias(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(probs)
    accept = np.ones(n, dtype=np.float64)
    alias = np.arange(n, dtype=np.int64)
    scaled = probs * n
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        accept[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        if scaled[g] < 1.0:
            small.append(g)
        else:
            large.append(g)
    # leftovers are exactly 1 up to rounding; keep accept=1, alias=self
    return accept, alias


def noise_from_counts(counts: np.ndarray, power: float = 0.75) -> NoiseDistribution:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or len(counts) == 0:
        raise ValueError("counts must be a non-empty 1-d array")
    weights = np.where(counts > 0, counts, 0.0) ** power
    total = weights.sum()
    if total <= 0:
        raise ValueError("all counts are zero")
    probs = weights / total
    accept, alias = _build_alias(probs)
    return NoiseDistribution(probs=probs, accept=accept, alias=alias)


def build_noise_distribution(corpus: WalkCorpus, power: float = 0.75) -> NoiseDistribution:
    """probs[v] = count(v)^power / sum_u count(u)^power over the walk corpus."""
    if corpus.token_count() == 0:
        raise ValueError("corpus is empty")
    counts = np.zeros(corpus.vocab_size, dtype=np.int64)
    for walk in corpus.walks:
        counts += np.bincount(walk, minlength=corpus.vocab_size)
    return noise_from_counts(counts, power)


# ---------------------------------------------------------------------------
# pair extraction
# ---------------------------------------------------------------------------


def extract_pairs(walk, window_radius: int) -> list[tuple[int, int]]:
    """Slide the context window: (walk[i], walk[j]) for all j != i within radius.

    Deterministic order: i ascending, then j ascending.
    """
    seq = [int(v) for v in walk]
    n = len(seq)
    pairs: list[tuple[int, int]] = []
    for i in range(n):
        for j in range(max(0, i - window_radius), min(n - 1, i + window_radius) + 1):
            if j != i:
                pairs.append((seq[i], seq[j]))
    return pairs


def _pairs_in_walk(length: int, radius: int) -> int:
    if length <= radius + 1:
        return length * (length - 1)
    return 2 * (radius * length - radius * (radius + 1) // 2)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

_U64_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_U64_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_30 = np.uint64(30)
_U64_27 = np.uint64(27)
_U64_31 = np.uint64(31)
_U64_11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _next_u64(state):
    # splitmix64: wrapping uint64 arithmetic
    state[0] = state[0] + _U64_GAMMA
    z = state[0]
    z = (z ^ (z >> _U64_30)) * _U64_MIX1
    z = (z ^ (z >> _U64_27)) * _U64_MIX2
    return z ^ (z >> _U64_31)


@njit(cache=True, inline="always")
def _alias_draw(state, accept, alias):
    k = np.int64(_next_u64(state) % np.uint64(len(accept)))
    u = np.float64(_next_u64(state) >> _U64_11) * _INV_2_53
    if u < accept[k]:
        return k
    return alias[k]


@njit(cache=True)
def _update_pair(vec_in, vec_out, inp, pos, negs, n_negs, lr, grad_buf):
    """One SGD step for (inp, pos) against n_negs noise vertices, in place.

    Output rows are visited positive-first then negatives; the input-row
    gradient is accumulated from the pre-update output rows. Returns the
    pair's surrogate loss evaluated at the pre-update parameters.
    """
    dim = vec_in.shape[1]
    for d in range(dim):
        grad_buf[d] = 0.0
    loss = 0.0
    for s in range(n_negs + 1):
        if s == 0:
            j = pos
            target = 1.0
        else:
            j = negs[s - 1]
            target = 0.0
        score = 0.0
        for d in range(dim):
            score += np.float64(vec_out[j, d]) * np.float64(vec_in[inp, d])
        if score > SIGMOID_CLAMP:
            score = SIGMOID_CLAMP
        elif score < -SIGMOID_CLAMP:
            score = -SIGMOID_CLAMP
        sig = 1.0 / (1.0 + math.exp(-score))
        if s == 0:
            loss += math.log1p(math.exp(-score))
        else:
            loss += math.log1p(math.exp(score))
        coef = lr * (sig - target)
        for d in range(dim):
            grad_buf[d] += coef * np.float64(vec_out[j, d])
            vec_out[j, d] -= coef * np.float64(vec_in[inp, d])
    for d in range(dim):
        vec_in[inp, d] -= grad_buf[d]
    return loss


@njit(cache=True, nogil=True)
def _train_shard(
    vec_in,
    vec_out,
    tokens,
    walk_offsets,
    walk_lo,
    walk_hi,
    radius,
    n_neg,
    accept,
    alias,
    lr0,
    total_pairs,
    t_start,
    t_stride,
    rng_state,
):
    """One epoch pass over walks [walk_lo, walk_hi). Returns (loss_sum, n_pairs).

    The learning rate decays linearly with the pair counter t (advancing by
    t_stride per pair) from lr0 down to lr0 * FINAL_LR_FRACTION at t ==
    total_pairs.
    """
    dim = vec_in.shape[1]
    grad_buf = np.zeros(dim, dtype=np.float64)
    negs = np.empty(n_neg, dtype=np.int64)
    min_lr = lr0 * FINAL_LR_FRACTION
    loss_sum = 0.0
    n_pairs = 0
    t = t_start
    for w in range(walk_lo, walk_hi):
        lo = walk_offsets[w]
        length = walk_offsets[w + 1] - lo
        for i in range(length):
            inp = np.int64(tokens[lo + i])
            j_min = i - radius if i - radius > 0 else 0
            j_max = i + radius if i + radius < length - 1 else length - 1
            for jj in range(j_min, j_max + 1):
                if jj == i:
                    continue
                pos = np.int64(tokens[lo + jj])
                m = 0
                for _ in range(n_neg):
                    for _attempt in range(MAX_NEGATIVE_RESAMPLES):
                        cand = _alias_draw(rng_state, accept, alias)
                        if cand != pos and cand != inp:
                            negs[m] = cand
                            m += 1
                            break
                lr = lr0 * (1.0 - (1.0 - FINAL_LR_FRACTION) * (t / total_pairs))
                if lr < min_lr:
                    lr = min_lr
                loss_sum += _update_pair(vec_in, vec_out, inp, pos, negs, m, lr, grad_buf)
                t += t_stride
                n_pairs += 1
    return loss_sum, n_pairs


# ---------------------------------------------------------------------------
# public training API
# ---------------------------------------------------------------------------


def sgns_pair_update(
    model: EmbeddingModel, input: int, positive: int, negatives, lr: float
) -> float:
    """Apply the per-pair SGD update in place; returns the pair's surrogate loss."""
    negs = np.asarray(negatives, dtype=np.int64)
    grad_buf = np.zeros(model.dim, dtype=np.float64)
    return float(
        _update_pair(
            model.vectors,
            model.context_vectors,
            np.int64(input),
            np.int64(positive),
            negs,
            len(negs),
            float(lr),
            grad_buf,
        )
    )


def _flatten(corpus: WalkCorpus) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.zeros(len(corpus.walks) + 1, dtype=np.int64)
    np.cumsum([len(w) for w in corpus.walks], out=offsets[1:])
    if offsets[-1] == 0:
        return np.empty(0, dtype=np.int32), offsets
    tokens = np.concatenate([np.asarray(w, dtype=np.int32) for w in corpus.walks])
    return tokens, offsets


def _shard_rng_state(seed: int, shard: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(shard,))
    return ss.generate_state(1, np.uint64)


def train(corpus: WalkCorpus, cfg: SgnsConfig, threads: int = 1) -> EmbeddingModel:
    """Train an embedding over all window pairs of the corpus for cfg.epochs.

    threads == 1 is the deterministic mode: a single pass in corpus order,
    bit-identical across runs for a fixed seed. threads > 1 runs lock-free
    on disjoint walk shards (lost updates tolerated, result not
    bit-reproducible); it only pays off once the matrices outgrow cache,
    so small-vocabulary runs are better off single-threaded. Mean per-pair
    surrogate loss is recorded per epoch in model.epoch_losses.
    """
    if corpus.vocab_size == 0:
        raise ValueError("empty vocabulary")
    model = init_model(corpus.vocab_size, cfg.dim, corpus.ids, cfg.seed)
    if cfg.epochs == 0:
        return model

    noise = build_noise_distribution(corpus, cfg.power)
    tokens, walk_offsets = _flatten(corpus)
    n_walks = len(corpus.walks)
    pairs_per_epoch = sum(_pairs_in_walk(len(w), cfg.window_radius) for w in corpus.walks)
    if pairs_per_epoch == 0:
        logger.info("corpus yields no context pairs; nothing to train")
        return model
    total_pairs = float(pairs_per_epoch * cfg.epochs)

    if threads <= 1:
        state = _shard_rng_state(cfg.seed, 0)
        done = 0
        for epoch in range(cfg.epochs):
            loss_sum, n_pairs = _train_shard(
                model.vectors,
                model.context_vectors,
                tokens,
                walk_offsets,
                0,
                n_walks,
                cfg.window_radius,
                cfg.negatives_per_pair,
                noise.accept,
                noise.alias,
                cfg.initial_lr,
                total_pairs,
                float(done),
                1.0,
                state,
            )
            done += n_pairs
            model.epoch_losses.append(loss_sum / n_pairs)
            logger.info("epoch %d/%d mean pair loss %.6f", epoch + 1, cfg.epochs, model.epoch_losses[-1])
        return model

    bounds = np.linspace(0, n_walks, threads + 1).astype(np.int64)
    states = [_shard_rng_state(cfg.seed, k) for k in range(threads)]
    for epoch in range(cfg.epochs):
        results: list[tuple[float, int] | None] = [None] * threads
        epoch_base = float(epoch * pairs_per_epoch)

        def run(k: int) -> None:
            results[k] = _train_shard(
                model.vectors,
                model.context_vectors,
                tokens,
                walk_offsets,
                int(bounds[k]),
                int(bounds[k + 1]),
                cfg.window_radius,
                cfg.negatives_per_pair,
                noise.accept,
                noise.alias,
                cfg.initial_lr,
                total_pairs,
                epoch_base + k,
                float(threads),
                states[k],
            )

        workers = [threading.Thread(target=run, args=(k,)) for k in range(threads)]
        for t in workers:
            t.start()
        for t in workers:
            t.join()
        loss_sum = sum(r[0] for r in results if r)
        n_pairs = sum(r[1] for r in results if r)
        model.epoch_losses.append(loss_sum / max(n_pairs, 1))
        logger.info("epoch %d/%d mean pair loss %.6f", epoch + 1, cfg.epochs, model.epoch_losses[-1])
    return model


# ---------------------------------------------------------------------------
# vector file format (shared by embeddings and external feature matrices)
# ---------------------------------------------------------------------------


def save_vectors(ids: list[str], matrix: np.ndarray, path: str | Path) -> None:
    """Text format: header "<count> <dim>", then "<id> <f1> ... <fdim>" per row."""
    if len(ids) != matrix.shape[0]:
        raise ValueError("ids length must match matrix rows")
    with atomic_text_writer(path) as fh:
        fh.write(f"{len(ids)} {matrix.shape[1]}\n")
        for name, row in zip(ids, matrix):
            fh.write(name)
            for x in row:
                fh.write(f" {x}")
            fh.write("\n")


def load_vectors(path: str | Path, dtype=np.float32) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad header, expected '<count> <dim>'")
        count, dim = int(header[0]), int(header[1])
        ids: list[str] = []
        matrix = np.empty((count, dim), dtype=dtype)
        for r in range(count):
            fields = fh.readline().split()
            if len(fields) != dim + 1:
                raise ValueError(f"{path}: row {r} has {len(fields) - 1} values, expected {dim}")
            ids.append(fields[0])
            matrix[r] = np.asarray(fields[1:], dtype=dtype)
    return ids, matrix


def export_embedding(model: EmbeddingModel, path: str | Path) -> None:
    """Write the input vectors (the embedding proper) in the text format."""
    save_vectors(model.ids, model.vectors, path)
