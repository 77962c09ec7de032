"""Toy language models: a count-based n-gram teacher/student pair.

The teacher is an add-lambda n-gram model trained on a fixed-seed
Zipf-Markov synthetic source; it generates (optionally watermarked)
corpora.  The student is the same model class trained on a mixture of
watermarked and clean documents, standing in for a fine-tuned suspect.
Backoff is "stupid": the longest context with observed counts wins, down
to the unigram level.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .schemes import AK, KGW, MPAC, GreenlistCache, WatermarkConfig, mpac_embed_bias


@dataclass(frozen=True)
class SamplingConfig:
    """Decoding knobs; defaults mirror the generation setup used throughout."""

    temperature: float = 0.8
    nucleus_p: float = 0.95
    max_tokens: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0.0 < self.nucleus_p <= 1.0:
            raise ValueError("nucleus_p must be in (0, 1]")


@dataclass(frozen=True)
class MixSpec:
    """Watermarked fraction rho of the training set, supervision degree d."""

    rho: float
    d: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if not 0.0 <= self.d <= 1.0:
            raise ValueError("d must be in [0, 1]")


class NGramModel:
    """Add-lambda n-gram model with stupid backoff.

    ``order`` is the context length: an order-n model conditions on up to n
    previous tokens.  Counts are kept for every context length from 0 to
    ``order`` so that unseen long contexts back off gracefully.
    """

    def __init__(self, order: int, vocab_size: int, smoothing_lambda: float = 0.01):
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing_lambda < 0:
            raise ValueError("smoothing lambda must be >= 0")
        self.order = order
        self.vocab_size = vocab_size
        self.smoothing_lambda = smoothing_lambda
        # counts[L][context_tuple] -> {token: count}
        self.counts: list[dict] = [dict() for _ in range(order + 1)]
        self._dist_cache: dict = {}

    def update(self, corpus) -> None:
        """Accumulate counts from an iterable of token-id documents."""
        n_docs = 0
        for tokens in corpus:
            n_docs += 1
            toks = list(tokens)
            for i, tok in enumerate(toks):
                if tok < 0 or tok >= self.vocab_size:
                    raise ValueError(f"token id {tok} out of vocabulary")
                for length in range(min(i, self.order) + 1):
                    ctx = tuple(toks[i - length : i])
                    bucket = self.counts[length].setdefault(ctx, {})
                    bucket[tok] = bucket.get(tok, 0) + 1
        if n_docs == 0:
            raise ValueError("empty corpus")
        self._dist_cache.clear()

    def _lookup(self, context):
        """Longest-suffix context bucket, or None if nothing was trained."""
        ctx = tuple(context[-self.order :]) if self.order else ()
        for length in range(len(ctx), -1, -1):
            bucket = self.counts[length].get(ctx[len(ctx) - length :])
            if bucket:
                return bucket
        return None

    def next_distribution(self, context) -> np.ndarray:
        """Smoothed next-token probabilities given the trailing context."""
        bucket = self._lookup(context)
        lam = self.smoothing_lambda
        v = self.vocab_size
        if bucket is None:
            return np.full(v, 1.0 / v)
        key = id(bucket)
        cached = self._dist_cache.get(key)
        if cached is None:
            p = np.full(v, lam, dtype=np.float64)
            idx = np.fromiter(bucket.keys(), dtype=np.intp, count=len(bucket))
            cnt = np.fromiter(bucket.values(), dtype=np.float64, count=len(bucket))
            p[idx] += cnt
            p /= cnt.sum() + lam * v
            self._dist_cache[key] = p
            cached = p
        return cached

    def next_greedy(self, context) -> int:
        """Most likely next token (ties toward the lowest id)."""
        bucket = self._lookup(context)
        if bucket is None:
            return 0
        best_tok, best_cnt = None, -1
        for tok, cnt in bucket.items():
            if cnt > best_cnt or (cnt == best_cnt and tok < best_tok):
                best_tok, best_cnt = tok, cnt
        return best_tok

    def log_loss(self, tokens) -> float:
        """Total negative log-probability of a document."""
        toks = list(tokens)
        total = 0.0
        for i, tok in enumerate(toks):
            p = self.next_distribution(toks[max(0, i - self.order) : i])
            total -= float(np.log(max(p[tok], 1e-300)))
        return total

    def perplexity(self, tokens) -> float:
        toks = list(tokens)
        if not toks:
            raise ValueError("empty document")
        return float(np.exp(self.log_loss(toks) / len(toks)))


def train_ngram(corpus, order: int, smoothing_lambda: float = 0.01,
                vocab_size: int = 256) -> NGramModel:
    """Train a fresh model; call ``model.update`` again for continued training."""
    model = NGramModel(order, vocab_size, smoothing_lambda)
    model.update(corpus)
    return model


class TextSampler:
    """Autoregressive sampler with per-context memoized decoding tables.

    The temperature-shaped, nucleus-sorted distribution of a context never
    changes for a fixed model, so it is computed once per context and
    reused across documents.
    """

    def __init__(self, model: NGramModel, sampling: SamplingConfig,
                 wm: WatermarkConfig | None = None,
                 tables: dict | None = None):
        self.model = model
        self.sampling = sampling
        self.wm = wm
        # base tables may be shared across samplers for the same
        # (model, temperature, nucleus_p); the caller guarantees that
        self._tables: dict = {} if tables is None else tables
        # biased decode tables are deterministic per (context, window)
        self._wm_tables: dict = {}
        self._green = GreenlistCache(wm) if wm is not None and wm.scheme == KGW else None
        if wm is not None and wm.scheme == AK and wm.temperature is not None:
            # AK strength knob: temperature applied to logits before softmax
            self.temperature = wm.temperature
        else:
            self.temperature = sampling.temperature
        if tables is not None and self.temperature != sampling.temperature:
            # shared tables were built for a different effective temperature
            self._tables = {}

    def _table(self, context):
        ctx = tuple(context[-self.model.order :])
        entry = self._tables.get(ctx)
        if entry is None:
            p = self.model.next_distribution(ctx)
            logits = np.log(np.maximum(p, 1e-300)) / self.temperature
            logits -= logits.max()
            q = np.exp(logits)
            q /= q.sum()
            order_desc = np.argsort(-q, kind="stable")
            q_desc = q[order_desc]
            cum = np.cumsum(q_desc)
            keep = int(np.searchsorted(cum, self.sampling.nucleus_p) + 1)
            keep = min(keep, len(q_desc))
            idx = order_desc[:keep]
            kept = q_desc[:keep]
            kept = kept / kept.sum()
            entry = (idx, np.log(kept), np.cumsum(kept))
            self._tables[ctx] = entry
        return entry

    def next_token(self, context, rng: np.random.Generator) -> int:
        idx, log_kept, cum = self._table(context)
        wm = self.wm
        window = None
        if wm is not None and len(context) >= wm.k:
            window = tuple(context[-wm.k :])
        if wm is None or window is None:
            if len(idx) == 1:
                return int(idx[0])
            j = int(np.searchsorted(cum, rng.random(), side="right"))
            return int(idx[min(j, len(idx) - 1)])
        ctx = tuple(context[-self.model.order :])
        cache_key = (ctx, window)
        entry = self._wm_tables.get(cache_key)
        if entry is None:
            entry = self._wm_entry(idx, log_kept, window)
            self._wm_tables[cache_key] = entry
        if wm.scheme == AK:  # deterministic choice cached directly
            return entry
        bcum = entry
        u = rng.random() * bcum[-1]
        j = int(np.searchsorted(bcum, u, side="right"))
        return int(idx[min(j, len(idx) - 1)])

    def _wm_entry(self, idx, log_kept, window):
        wm = self.wm
        if wm.scheme == KGW:
            seed = wm.seed(window)
            biased = log_kept + wm.delta * self._green.mask(seed)[idx]
            return np.cumsum(np.exp(biased - biased.max()))
        if wm.scheme == MPAC:
            full = np.full(self.model.vocab_size, -np.inf)
            full[idx] = log_kept
            biased = mpac_embed_bias(np.where(np.isfinite(full), full, -1e30),
                                     window, wm)
            biased[~np.isfinite(full)] = -np.inf
            sub = biased[idx]
            return np.cumsum(np.exp(sub - sub.max()))
        # AK: argmax of R ** (1/p) over the kept set
        from .hashing import rvalue_batch

        seed = wm.seed(window)
        r = rvalue_batch(np.full(len(idx), seed, dtype=np.uint64), idx)
        p = np.exp(log_kept - log_kept.max())
        p /= p.sum()
        cost = -np.log(np.maximum(r, 1e-300)) / p
        return int(idx[np.argmin(cost)])

    def generate(self, prompt, max_tokens: int, rng: np.random.Generator) -> list[int]:
        """Continuation of ``prompt`` (prompt tokens not included)."""
        context = list(prompt)
        out = []
        for _ in range(max_tokens):
            tok = self.next_token(context, rng)
            context.append(tok)
            out.append(tok)
        return out


def generate(model: NGramModel, prompt, sampling: SamplingConfig,
             wm: WatermarkConfig | None = None) -> list[int]:
    """One-shot generation; reuse a :class:`TextSampler` for whole corpora."""
    if sampling.max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    sampler = TextSampler(model, sampling, wm)
    rng = np.random.default_rng(sampling.seed)
    return sampler.generate(prompt, sampling.max_tokens, rng)


def zipf_markov_corpus(vocab_size: int, n_docs: int, doc_len: int, seed: int,
                       zipf_a: float = 1.15) -> list[list[int]]:
    """Fixed-seed synthetic source: a Markov chain with Zipf transitions.

    Each token's successor distribution is a Zipf profile over a
    token-specific permutation of the vocabulary, which keeps the entropy
    of the source controllable via ``zipf_a``.
    """
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
    profile = 1.0 / ranks**zipf_a
    profile /= profile.sum()
    cum = np.empty((vocab_size, vocab_size))
    succ = np.empty((vocab_size, vocab_size), dtype=np.intp)
    for v in range(vocab_size):
        perm = rng.permutation(vocab_size)
        succ[v] = perm
        cum[v] = np.cumsum(profile)
    docs = []
    for _ in range(n_docs):
        tok = int(rng.integers(vocab_size))
        doc = [tok]
        u = rng.random(doc_len - 1)
        for i in range(doc_len - 1):
            j = int(np.searchsorted(cum[tok], u[i]))
            tok = int(succ[tok][min(j, vocab_size - 1)])
            doc.append(tok)
        docs.append(doc)
    return docs


def make_teacher(vocab_size: int = 256, seed: int = 7, order: int = 2,
                 smoothing_lambda: float = 0.05, source_tokens: int = 400_000,
                 zipf_a: float = 1.15) -> NGramModel:
    """Teacher model trained on the synthetic source."""
    doc_len = 1000
    n_docs = max(1, source_tokens // doc_len)
    corpus = zipf_markov_corpus(vocab_size, n_docs, doc_len, seed, zipf_a)
    return train_ngram(corpus, order, smoothing_lambda, vocab_size)


def generate_corpus(model: NGramModel, n_docs: int, doc_len: int,
                    sampling: SamplingConfig, wm: WatermarkConfig | None = None,
                    prompt_len: int = 3, wm_flag: bool | None = None,
                    tables: dict | None = None) -> list[dict]:
    """Documents sampled from the model, each a dict with ``tokens``/``wm``.

    Every document starts from a short random prompt (included in the
    document) so that full watermark windows exist from early positions.
    """
    sampler = TextSampler(model, sampling, wm, tables=tables)
    rng = np.random.default_rng(sampling.seed)
    flag = (wm is not None) if wm_flag is None else wm_flag
    docs = []
    for _ in range(n_docs):
        prompt = [int(t) for t in rng.integers(model.vocab_size, size=prompt_len)]
        body = sampler.generate(prompt, doc_len - prompt_len, rng)
        docs.append({"tokens": prompt + body, "wm": flag})
    return docs


def mix_dataset(wm_corpus: list[dict], clean_corpus: list[dict],
                spec: MixSpec) -> tuple[list[dict], list[dict]]:
    """Training mixture D and the supervised detection corpus D~A.

    D takes ``round(rho * |D|)`` watermarked documents and fills the rest
    with clean ones; D~A contains those watermarked training documents
    diluted to degree d with fresh watermarked decoys.
    """
    total = len(clean_corpus)
    n_wm = round(spec.rho * total)
    if n_wm > len(wm_corpus):
        raise ValueError("not enough watermarked documents for requested rho")
    d_train = wm_corpus[:n_wm] + clean_corpus[: total - n_wm]
    if spec.d > 0 and n_wm > 0:
        target = round(n_wm / spec.d)
        n_decoys = target - n_wm
        if n_wm + n_decoys > len(wm_corpus):
            raise ValueError("not enough watermarked documents for requested d")
        supervised = wm_corpus[: n_wm + n_decoys]
    else:
        supervised = []
    return d_train, supervised


# ---------------------------------------------------------------------------
# corpus and checkpoint files

def save_corpus(docs: list[dict], path) -> None:
    """JSONL, one document per line: tokens, optional text / wm tag."""
    with open(path, "w") as f:
        for doc in docs:
            f.write(json.dumps(doc, separators=(",", ":")) + "\n")


def load_corpus(path) -> list[dict]:
    docs = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                docs.append(json.loads(line))
    return docs


_MODEL_MAGIC = b"RSM1"


def save_model(model: NGramModel, path) -> None:
    """Versioned binary checkpoint with sorted context/count records."""
    with open(path, "wb") as f:
        f.write(_MODEL_MAGIC)
        f.write(struct.pack("<BdI", model.order, model.smoothing_lambda,
                            model.vocab_size))
        for length in range(model.order + 1):
            bucket_map = model.counts[length]
            f.write(struct.pack("<BQ", length, len(bucket_map)))
            for ctx in sorted(bucket_map):
                entries = sorted(bucket_map[ctx].items())
                f.write(struct.pack(f"<{length}I", *ctx))
                f.write(struct.pack("<I", len(entries)))
                for tok, cnt in entries:
                    f.write(struct.pack("<IQ", tok, cnt))


def load_model(path) -> NGramModel:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MODEL_MAGIC:
            raise ValueError(f"not a model checkpoint: bad magic {magic!r}")
        order, lam, vocab = struct.unpack("<BdI", f.read(13))
        model = NGramModel(order, vocab, lam)
        for _ in range(order + 1):
            length, n_ctx = struct.unpack("<BQ", f.read(9))
            table = model.counts[length]
            for _ in range(n_ctx):
                ctx = struct.unpack(f"<{length}I", f.read(4 * length))
                (n_entries,) = struct.unpack("<I", f.read(4))
                bucket = {}
                for _ in range(n_entries):
                    tok, cnt = struct.unpack("<IQ", f.read(12))
                    bucket[tok] = cnt
                table[ctx] = bucket
    return model
