"""Skip-gram word embeddings trained on region texts, plus per-region
text feature vectors (mean of in-vocabulary word vectors)."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .ingest import Corpus

NUM_TOKEN = "<num>"
EMBEDDINGS_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, collapse digit runs."""
    tokens = _TOKEN_RE.findall(text.lower())
    return [NUM_TOKEN if t.isdigit() else t for t in tokens]


@dataclass
class Vocabulary:
    tokens: list[str]
    frequencies: list[int]
    token_to_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.token_to_index:
            self.token_to_index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index


@dataclass
class WordEmbeddings:
    vocabulary: Vocabulary
    input_matrix: np.ndarray   # |V| x d, float32
    output_matrix: np.ndarray  # |V| x d, float32
    dim: int


@dataclass
class Word2VecConfig:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_count: int = 2
    seed: int = 0


def build_vocabulary(corpus: Corpus, min_count: int) -> Vocabulary:
    """Tokens occurring >= min_count times, indexed by descending frequency
    with lexicographic tie-break."""
    if min_count < 1:
        raise ValueError("min_count must be at least 1")
    counts: dict[str, int] = {}
    for doc in corpus.documents:
        for region in doc.regions:
            for token in tokenize(region.text):
                counts[token] = counts.get(token, 0) + 1
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    if not kept:
        raise ValueError(
            f"empty vocabulary: no token occurs at least {min_count} times")
    return Vocabulary(tokens=kept, frequencies=[counts[t] for t in kept])


def sgns_pair_loss_and_grads(center_vec: np.ndarray, context_vec: np.ndarray,
                             negative_vecs: np.ndarray):
    """Loss and analytic gradients for one (center, context) pair with
    negative samples. Shapes: (d,), (d,), (k, d). Dtype follows the inputs,
    so tests can run this at float64."""
    pos_score = center_vec @ context_vec
    neg_scores = negative_vecs @ center_vec
    loss = -_log_sigmoid(pos_score) - np.sum(_log_sigmoid(-neg_scores))
    g_pos = _sigmoid(pos_score) - 1.0
    g_neg = _sigmoid(neg_scores)
    grad_center = g_pos * context_vec + g_neg @ negative_vecs
    grad_context = g_pos * center_vec
    grad_negatives = g_neg[:, None] * center_vec[None, :]
    return loss, grad_center, grad_context, grad_negatives


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _log_sigmoid(x):
    # numerically stable log(sigmoid(x))
    return np.where(x >= 0, -np.log1p(np.exp(-x)), x - np.log1p(np.exp(x)))


def _corpus_sentences(corpus: Corpus, vocab: Vocabulary) -> list[np.ndarray]:
    """One sentence per region; windows never span regions."""
    sentences = []
    for doc in corpus.documents:
        for region in doc.regions:
            ids = [vocab.token_to_index[t] for t in tokenize(region.text)
                   if t in vocab.token_to_index]
            if len(ids) >= 2:
                sentences.append(np.asarray(ids, dtype=np.int64))
    return sentences


def train_word2vec(corpus: Corpus, config: Word2VecConfig = Word2VecConfig()
                   ) -> WordEmbeddings:
    """Skip-gram with negative sampling over region-text sentences.

    Single-threaded and deterministic per seed. Negatives are drawn from
    the unigram distribution raised to 3/4. Updates are applied one
    sentence at a time (all pairs of a sentence batched together); the
    learning rate decays linearly over the run.
    """
    if config.dim < 2:
        raise ValueError("dim must be at least 2")
    if config.window < 1:
        raise ValueError("window must be at least 1")
    if config.negatives < 1:
        raise ValueError("negatives must be at least 1")
    if config.epochs < 1:
        raise ValueError("epochs must be at least 1")

    vocab = build_vocabulary(corpus, config.min_count)
    d = config.dim
    rng = np.random.default_rng(config.seed)
    input_matrix = rng.uniform(-0.5 / d, 0.5 / d,
                               size=(len(vocab), d)).astype(np.float32)
    output_matrix = np.zeros((len(vocab), d), dtype=np.float32)

    noise = np.asarray(vocab.frequencies, dtype=np.float64) ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    sentences = _corpus_sentences(corpus, vocab)
    total_sentences = max(1, config.epochs * len(sentences))
    processed = 0
    for _ in range(config.epochs):
        for sent in sentences:
            alpha = config.learning_rate * max(
                1.0 - processed / total_sentences, 1e-4)
            processed += 1
            length = len(sent)
            spans = rng.integers(1, config.window + 1, size=length)
            centers, contexts = [], []
            for i in range(length):
                lo = max(0, i - spans[i])
                hi = min(length, i + spans[i] + 1)
                for j in range(lo, hi):
                    if j != i:
                        centers.append(sent[i])
                        contexts.append(sent[j])
            if not centers:
                continue
            c_idx = np.asarray(centers)
            o_idx = np.asarray(contexts)
            neg_idx = np.searchsorted(
                noise_cdf, rng.random((len(c_idx), config.negatives)))

            v = input_matrix[c_idx]
            u_pos = output_matrix[o_idx]
            u_neg = output_matrix[neg_idx]
            g_pos = (_sigmoid(np.sum(v * u_pos, axis=1)) - 1.0).astype(np.float32)
            g_neg = _sigmoid(np.einsum("nd,nkd->nk", v, u_neg)).astype(np.float32)

            grad_v = g_pos[:, None] * u_pos + np.einsum("nk,nkd->nd", g_neg, u_neg)
            grad_u_pos = g_pos[:, None] * v
            grad_u_neg = g_neg[:, :, None] * v[:, None, :]

            np.add.at(input_matrix, c_idx, (-alpha * grad_v).astype(np.float32))
            np.add.at(output_matrix, o_idx,
                      (-alpha * grad_u_pos).astype(np.float32))
            np.add.at(output_matrix, neg_idx.ravel(),
                      (-alpha * grad_u_neg.reshape(-1, d)).astype(np.float32))

    if not (np.isfinite(input_matrix).all() and np.isfinite(output_matrix).all()):
        raise FloatingPointError("embedding training diverged")
    return WordEmbeddings(vocabulary=vocab, input_matrix=input_matrix,
                          output_matrix=output_matrix, dim=d)


def embed_region_text(text: str, embeddings: WordEmbeddings) -> np.ndarray:
    """Mean input vector of in-vocabulary tokens; zeros if none."""
    vocab = embeddings.vocabulary
    ids = [vocab.token_to_index[t] for t in tokenize(text)
           if t in vocab.token_to_index]
    if not ids:
        return np.zeros(embeddings.dim, dtype=np.float32)
    return embeddings.input_matrix[ids].mean(axis=0, dtype=np.float64).astype(
        np.float32)


def save_embeddings(embeddings: WordEmbeddings, path) -> None:
    header = {"version": EMBEDDINGS_VERSION, "dim": embeddings.dim,
              "vocab_size": len(embeddings.vocabulary)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
        fh.write(json.dumps(embeddings.vocabulary.tokens,
                            separators=(",", ":")).encode() + b"\n")
        fh.write(json.dumps(embeddings.vocabulary.frequencies,
                            separators=(",", ":")).encode() + b"\n")
        fh.write(np.ascontiguousarray(embeddings.input_matrix,
                                      dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(embeddings.output_matrix,
                                      dtype="<f4").tobytes())


def load_embeddings(path) -> WordEmbeddings:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header.get("version") != EMBEDDINGS_VERSION:
            raise ValueError(
                f"unsupported embeddings version {header.get('version')!r}")
        tokens = json.loads(fh.readline())
        frequencies = json.loads(fh.readline())
        dim, size = header["dim"], header["vocab_size"]
        raw = fh.read()
    expected = 2 * size * dim * 4
    if len(raw) != expected:
        raise ValueError(f"corrupt embeddings file: expected {expected} "
                         f"matrix bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f4")
    input_matrix = flat[: size * dim].reshape(size, dim).copy()
    output_matrix = flat[size * dim:].reshape(size, dim).copy()
    return WordEmbeddings(
        vocabulary=Vocabulary(tokens=tokens, frequencies=frequencies),
        input_matrix=input_matrix, output_matrix=output_matrix, dim=dim)
