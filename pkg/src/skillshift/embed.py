"""Skip-gram skill embeddings with negative sampling, using each posting as one context bag.

The SGD inner loop is compiled with numba. With ``workers == 1`` training is
deterministic given the seed; with more workers the weight matrices are
updated lock-free (Hogwild style) and results depend on scheduling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .corpus import JobPosting, SkillVocabulary
from .errors import ConfigError, DomainError, NotFound

NOISE_TABLE_SIZE = 1_000_000


@dataclass(frozen=True)
class TrainingConfig:
    dim: int = 200
    epochs: int = 5
    negatives: int = 5
    alpha_start: float = 0.025
    alpha_end: float = 0.0001
    noise_exponent: float = 0.75
    subsample: float = 1e-4
    max_pairs_per_posting: int = 200
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        # epochs == 0 is allowed and returns the initialization
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.negatives < 1:
            raise ConfigError("negatives must be >= 1")
        if not (self.alpha_start > 0 and self.alpha_end > 0):
            raise ConfigError("learning rates must be positive")
        if self.subsample < 0:
            raise ConfigError("subsample must be >= 0")
        if self.max_pairs_per_posting < 1:
            raise ConfigError("max_pairs_per_posting must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def digest(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k != "workers"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainingPairs:
    targets: np.ndarray
    contexts: np.ndarray
    vocabulary: SkillVocabulary

    def __len__(self):
        return len(self.targets)


def keep_probabilities(counts, threshold: float) -> np.ndarray:
    """Frequent-item subsampling keep probability, ``(sqrt(f/t) + 1) * t / f``, capped at 1."""
    counts = np.asarray(counts, dtype=float)
    if threshold <= 0:
        return np.ones_like(counts)
    f = counts / counts.sum()
    return np.minimum(1.0, (np.sqrt(f / threshold) + 1.0) * threshold / f)


def build_training_pairs(postings: list[JobPosting], vocabulary: SkillVocabulary,
                         config: TrainingConfig) -> TrainingPairs:
    """All ordered (target, context) pairs of distinct skills within each posting.

    Postings with more than ``max_pairs_per_posting`` pairs are downsampled
    uniformly without replacement. Skills are first subsampled by frequency
    when ``config.subsample > 0``.
    """
    rng = np.random.default_rng(config.seed)
    keep = keep_probabilities(vocabulary.counts, config.subsample)
    cap = config.max_pairs_per_posting
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    targets, contexts = [], []
    for p in postings:
        ids = np.fromiter((vocabulary.id(s) for s in p.skills), dtype=np.int64, count=len(p.skills))
        if config.subsample > 0:
            ids = ids[rng.random(len(ids)) < keep[ids]]
        m = len(ids)
        if m < 2:
            continue
        if m not in cache:
            a, b = np.nonzero(~np.eye(m, dtype=bool))
            cache[m] = (a, b)
        a, b = cache[m]
        if len(a) > cap:
            pick = np.sort(rng.choice(len(a), size=cap, replace=False))
            a, b = a[pick], b[pick]
        targets.append(ids[a])
        contexts.append(ids[b])
    if targets:
        t = np.concatenate(targets).astype(np.int32)
        c = np.concatenate(contexts).astype(np.int32)
    else:
        t = c = np.empty(0, dtype=np.int32)
    return TrainingPairs(t, c, vocabulary)


def noise_table(counts, exponent: float = 0.75, size: int = NOISE_TABLE_SIZE) -> np.ndarray:
    probs = np.asarray(counts, dtype=float) ** exponent
    cdf = np.cumsum(probs / probs.sum())
    cdf[-1] = 1.0
    return np.searchsorted(cdf, (np.arange(size) + 0.5) / size).astype(np.int32)


@numba.njit(cache=True, inline="always")
def _sigmoid(x):
    if x > 30.0:
        return 1.0
    if x < -30.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(-x))


@numba.njit(cache=True)
def _sgd_range(w_in, w_out, targets, contexts, order, start, stop, table, k_neg,
               alpha_start, alpha_end, done, total, rnd):
    dim = w_in.shape[1]
    grad = np.empty(dim)
    n_table = np.uint64(table.shape[0])
    for idx in range(start, stop):
        p = order[idx]
        t = targets[p]
        c = contexts[p]
        alpha = alpha_start - (alpha_start - alpha_end) * (done + idx) / total
        for d in range(dim):
            grad[d] = 0.0
        for j in range(k_neg + 1):
            if j == 0:
                o = c
                label = 1.0
            else:
                rnd = rnd * np.uint64(25214903917) + np.uint64(11)
                o = table[(rnd >> np.uint64(16)) % n_table]
                if o == c:
                    continue
                label = 0.0
            f = 0.0
            for d in range(dim):
                f += w_in[t, d] * w_out[o, d]
            g = (label - _sigmoid(f)) * alpha
            for d in range(dim):
                grad[d] += g * w_out[o, d]
                w_out[o, d] += g * w_in[t, d]
        for d in range(dim):
            w_in[t, d] += grad[d]
    return rnd


@numba.njit(cache=True, parallel=True)
def _sgd_parallel(w_in, w_out, targets, contexts, order, table, k_neg,
                  alpha_start, alpha_end, done, total, seeds):
    n_workers = seeds.shape[0]
    n = order.shape[0]
    chunk = (n + n_workers - 1) // n_workers
    for w in numba.prange(n_workers):
        lo = w * chunk
        hi = min(n, lo + chunk)
        if lo < hi:
            _sgd_range(w_in, w_out, targets, contexts, order, lo, hi, table, k_neg,
                       alpha_start, alpha_end, done, total, seeds[w])


@numba.njit(cache=True)
def _loss(w_in, w_out, targets, contexts, negatives):
    total = 0.0
    for p in range(targets.shape[0]):
        t = targets[p]
        f = np.dot(w_in[t], w_out[contexts[p]])
        total -= np.log(max(_sigmoid(f), 1e-300))
        for j in range(negatives.shape[1]):
            f = np.dot(w_in[t], w_out[negatives[p, j]])
            total -= np.log(max(_sigmoid(-f), 1e-300))
    return total / max(1, targets.shape[0])


def negative_sampling_loss(w_in, w_out, pairs: TrainingPairs, negatives: np.ndarray) -> float:
    """Mean of ``-log s(u_t.v_c) - sum_j log s(-u_t.v_nj)`` over ``pairs`` with fixed noise draws."""
    return float(_loss(np.asarray(w_in, dtype=float), np.asarray(w_out, dtype=float),
                       pairs.targets, pairs.contexts, negatives))


@dataclass
class EmbeddingMatrix:
    vocabulary: SkillVocabulary
    vectors: np.ndarray  # float32, one row per vocabulary skill
    seed: int = 0
    config_hash: str = ""
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.shape[0] != len(self.vocabulary):
            raise ValueError("one row per vocabulary skill required")
        self._unit = None

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, skill):
        return skill in self.vocabulary

    def vector(self, skill: str) -> np.ndarray:
        return self.vectors[self.vocabulary.id(skill)].astype(float)

    def matrix(self, skills) -> np.ndarray:
        return self.vectors[[self.vocabulary.id(s) for s in skills]].astype(float)

    def unit_vectors(self) -> np.ndarray:
        if self._unit is None:
            v = self.vectors.astype(float)
            norms = np.linalg.norm(v, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            self._unit = v / norms
        return self._unit

    def nearest_skills(self, skill: str, n: int = 10) -> list[tuple[str, float]]:
        if n < 1:
            raise ValueError("n must be >= 1")
        i = self.vocabulary.id(skill)
        unit = self.unit_vectors()
        if not np.any(unit[i]):
            raise DomainError(f"zero vector for {skill!r}")
        return rank_by_cosine(unit, unit[i], self.vocabulary.skills, n, exclude=i)

    def save(self, prefix) -> None:
        prefix = str(prefix)
        header = {"dim": self.dim, "vocab_size": len(self.vocabulary), "seed": self.seed,
                  "config_hash": self.config_hash, "dtype": "<f4",
                  "counts": list(map(int, self.vocabulary.counts))}
        Path(prefix + ".header.json").write_text(json.dumps(header, indent=1) + "\n")
        Path(prefix + ".f32").write_bytes(self.vectors.astype("<f4").tobytes())
        Path(prefix + ".vocab.txt").write_text("".join(s + "\n" for s in self.vocabulary.skills),
                                               encoding="utf-8")

    @classmethod
    def load(cls, prefix) -> "EmbeddingMatrix":
        prefix = str(prefix)
        header = json.loads(Path(prefix + ".header.json").read_text())
        skills = Path(prefix + ".vocab.txt").read_text(encoding="utf-8").splitlines()
        vectors = np.frombuffer(Path(prefix + ".f32").read_bytes(), dtype="<f4")
        vectors = vectors.reshape(header["vocab_size"], header["dim"])
        vocab = SkillVocabulary.from_list(skills, header.get("counts"))
        return cls(vocab, vectors, header["seed"], header["config_hash"])

    def export_text(self, path) -> None:
        """word2vec text format; spaces inside skill names become underscores."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.vocabulary)} {self.dim}\n")
            for skill, row in zip(self.vocabulary.skills, self.vectors):
                fh.write(skill.replace(" ", "_") + " " + " ".join(f"{x:.6g}" for x in row) + "\n")


def rank_by_cosine(unit: np.ndarray, query: np.ndarray, names, n: int, exclude=None):
    qn = np.linalg.norm(query)
    sims = unit @ (query / qn)
    idx = np.arange(len(names))
    if exclude is not None:
        idx = idx[idx != exclude]
    order = sorted(idx, key=lambda i: (-sims[i], names[i]))[:n]
    return [(names[i], float(sims[i])) for i in order]


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DomainError("cosine similarity of a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def train_skipgram(pairs: TrainingPairs, config: TrainingConfig,
                   validation: TrainingPairs | None = None) -> EmbeddingMatrix:
    """Fit input/output skill vectors by SGD on the negative-sampling objective.

    If ``validation`` is given, the mean loss on it (with noise draws fixed
    once) is recorded before training and after every epoch in
    ``EmbeddingMatrix.history``.
    """
    vocab = pairs.vocabulary
    V, dim = len(vocab), config.dim
    if V < config.negatives + 1:
        raise ConfigError(f"vocabulary of {V} skills is smaller than negatives + 1")
    if len(pairs) == 0 and config.epochs > 0:
        raise ConfigError("no training pairs")
    rng = np.random.default_rng(config.seed)
    w_in = (rng.random((V, dim)) - 0.5) / dim
    w_out = np.zeros((V, dim))
    table = noise_table(vocab.counts, config.noise_exponent)

    history = []
    if validation is not None:
        vrng = np.random.default_rng(config.seed + 1)
        val_neg = table[vrng.integers(0, len(table), size=(len(validation), config.negatives))]

        def record():
            history.append(float(_loss(w_in, w_out, validation.targets, validation.contexts, val_neg)))
        record()

    n = len(pairs)
    total = float(max(1, n * config.epochs))
    rnd = np.uint64(config.seed * 2654435761 + 1) & np.uint64(0xFFFFFFFFFFFF)
    if config.workers > 1:
        numba.set_num_threads(min(config.workers, numba.config.NUMBA_NUM_THREADS))
    for epoch in range(config.epochs):
        order = rng.permutation(n).astype(np.int64)
        done = float(epoch * n)
        if config.workers == 1:
            rnd = np.uint64(_sgd_range(w_in, w_out, pairs.targets, pairs.contexts, order, 0, n, table,
                                       config.negatives, config.alpha_start, config.alpha_end,
                                       done, total, rnd))
        else:
            seeds = rng.integers(1, 2**48, size=config.workers).astype(np.uint64)
            _sgd_parallel(w_in, w_out, pairs.targets, pairs.contexts, order, table,
                          config.negatives, config.alpha_start, config.alpha_end, done, total, seeds)
        if validation is not None:
            record()
    return EmbeddingMatrix(vocab, w_in, config.seed, config.digest(), history)


def train_embeddings(postings: list[JobPosting], config: TrainingConfig,
                     vocabulary: SkillVocabulary | None = None) -> EmbeddingMatrix:
    vocabulary = vocabulary or SkillVocabulary.from_postings(postings)
    return train_skipgram(build_training_pairs(postings, vocabulary, config), config)
