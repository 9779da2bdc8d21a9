"""Similarity and topic primitives plus the three-level preservation check.

The default provider is a deterministic TF-IDF cosine over content lemmas.
An external embedding service can be configured instead; when it fails the
provider degrades to the lexical one and records a diagnostic.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import logging
import math
import re
import time
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Protocol, Sequence

from .document import BlockKind, Diagnostic, DocumentTree, units
from .errors import MappingIncomplete, ProviderError
from .text import content_lemmas, strip_markup, tokenize

log = logging.getLogger(__name__)

DEFAULT_TOPIC_COUNT = 16


@dataclass(frozen=True)
class IdfTable:
    """Reference document frequencies; smoothed IDF as in scikit-learn."""

    doc_freq: Mapping[str, int] = field(default_factory=dict)
    doc_count: int = 0

    def idf(self, lemma: str) -> float:
        return math.log((1 + self.doc_count) / (1 + self.doc_freq.get(lemma, 0))) + 1.0

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> IdfTable:
        df: Counter[str] = Counter()
        n = 0
        for text in texts:
            df.update(set(content_lemmas(tokenize(text))))
            n += 1
        return cls(dict(sorted(df.items())), n)


@lru_cache(maxsize=65536)
def _norm_plain(text: str) -> str:
    return re.sub(r"\s+", " ", strip_markup(text)).strip().lower()


class SimilarityProvider(Protocol):
    kind: str

    def sentence_sim(self, a: str, b: str) -> float: ...


class LexicalProvider:
    """TF-IDF weighted bag-of-lemmas cosine, in [0, 1]."""

    kind = "lexical_default"

    def __init__(self, idf: IdfTable | None = None):
        self.idf = idf or IdfTable()
        self._cache: dict[str, tuple[dict[str, float], float]] = {}

    def vector(self, text: str) -> tuple[dict[str, float], float]:
        hit = self._cache.get(text)
        if hit is not None:
            return hit
        tokens = tokenize(text)
        bag = Counter(content_lemmas(tokens))
        if not bag:
            # stopword-only text: fall back to raw tokens so it is not "empty"
            bag = Counter(tokens)
        vec = {t: c * self.idf.idf(t) for t, c in bag.items()}
        norm = math.sqrt(sum(v * v for v in vec.values()))
        self._cache[text] = (vec, norm)
        return vec, norm

    def sentence_sim(self, a: str, b: str) -> float:
        if _norm_plain(a) == _norm_plain(b):
            return 1.0
        va, na = self.vector(a)
        vb, nb = self.vector(b)
        if na == 0.0 and nb == 0.0:
            return 1.0
        if na == 0.0 or nb == 0.0:
            return 0.0
        if len(va) > len(vb):
            va, vb = vb, va
        dot = sum(w * vb.get(t, 0.0) for t, w in va.items())
        return min(1.0, dot / (na * nb))


class ExternalEmbeddingProvider:
    """Cosine over vectors from an HTTP embedding service.

    Request body ``{"texts": [...], "model": ...}``; response
    ``{"vectors": [[...], ...]}``. Vectors are cached by text hash. Calls are
    retried with exponential backoff; after the last failure the lexical
    provider answers instead (or :class:`ProviderError` is raised when
    ``fallback`` is off).
    """

    kind = "external_embedding"

    def __init__(
        self,
        endpoint: str,
        model: str = "",
        timeout: float = 10.0,
        retries: int = 3,
        backoff: float = 0.1,
        fallback: bool = True,
        lexical: LexicalProvider | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.fallback = fallback
        self.lexical = lexical or LexicalProvider()
        self.diagnostics: list[Diagnostic] = []
        self._vectors: dict[str, list[float]] = {}
        self._failed = False

    @staticmethod
    def _key(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def _post(self, texts: list[str]) -> list[list[float]]:
        payload = json.dumps({"texts": texts, "model": self.model}).encode("utf-8")
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(
                self.endpoint, data=payload, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    vectors = json.loads(resp.read().decode("utf-8"))["vectors"]
                if len(vectors) != len(texts):
                    raise ValueError("vector count does not match text count")
                return [[float(x) for x in v] for v in vectors]
            except (urllib.error.URLError, OSError, ValueError, KeyError, TypeError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        raise ProviderError(f"embedding endpoint {self.endpoint} failed: {last}")

    def embed(self, texts: Sequence[str]) -> list[list[float]] | None:
        missing = [t for t in dict.fromkeys(texts) if self._key(t) not in self._vectors]
        if missing and not self._failed:
            try:
                for text, vec in zip(missing, self._post(missing)):
                    self._vectors[self._key(text)] = vec
            except ProviderError as exc:
                if not self.fallback:
                    raise
                self._failed = True
                self.diagnostics.append(Diagnostic("provider-fallback", str(exc), self.endpoint))
                log.warning("falling back to lexical similarity: %s", exc)
        if self._failed:
            return None
        return [self._vectors[self._key(t)] for t in texts]

    def sentence_sim(self, a: str, b: str) -> float:
        if _norm_plain(a) == _norm_plain(b):
            return 1.0
        vecs = self.embed([a, b])
        if vecs is None:
            return self.lexical.sentence_sim(a, b)
        va, vb = vecs
        na = math.sqrt(sum(x * x for x in va))
        nb = math.sqrt(sum(x * x for x in vb))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return max(-1.0, min(1.0, sum(x * y for x, y in zip(va, vb)) / (na * nb)))


def make_provider(config: Mapping | None = None, idf: IdfTable | None = None) -> SimilarityProvider:
    """Build a provider from ``{"kind": "lexical"|"external", ...}``."""
    config = dict(config or {})
    lexical = LexicalProvider(idf)
    if config.get("kind", "lexical") in ("lexical", "lexical_default"):
        return lexical
    return ExternalEmbeddingProvider(
        endpoint=config["endpoint"],
        model=config.get("model", ""),
        timeout=float(config.get("timeout", 10.0)),
        retries=int(config.get("retries", 3)),
        backoff=float(config.get("backoff", 0.1)),
        fallback=bool(config.get("fallback", True)),
        lexical=lexical,
    )


# ---------------------------------------------------------------------------
# topic model


@lru_cache(maxsize=65536)
def _bucket(lemma: str, topic_count: int) -> int:
    digest = hashlib.blake2b(lemma.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % topic_count


@lru_cache(maxsize=8192)
def _bucket_counts(text: str, topic_count: int) -> tuple[int, ...]:
    out = [0] * topic_count
    for lemma in content_lemmas(tokenize(text)):
        out[_bucket(lemma, topic_count)] += 1
    return tuple(out)


@dataclass(frozen=True)
class TopicModel:
    """Lemmas hashed into ``topic_count`` buckets; a stand-in for LDA topics."""

    topic_count: int = DEFAULT_TOPIC_COUNT

    def bucket(self, lemma: str) -> int:
        return _bucket(lemma, self.topic_count)

    def counts(self, text: str) -> list[int]:
        return list(_bucket_counts(text, self.topic_count))

    def distribution(self, text: str, smoothing: float | None = None) -> list[float]:
        """Bucket distribution; ``smoothing`` is added to every bucket count.

        Without smoothing an empty text yields all zeros.
        """
        counts = self.counts(text)
        add = 0.0 if smoothing is None else smoothing
        total = sum(counts) + add * self.topic_count
        if total == 0:
            return [0.0] * self.topic_count
        return [(c + add) / total for c in counts]


def js_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence in bits, hence bounded by 1."""
    total = 0.0
    for a, b in zip(p, q):
        m = 0.5 * (a + b)
        if a > 0:
            total += 0.5 * a * math.log2(a / m)
        if b > 0:
            total += 0.5 * b * math.log2(b / m)
    return min(1.0, max(0.0, total))


def document_text(tree: DocumentTree) -> str:
    parts = [b.plain_text for b in tree.preamble]
    for sec in tree.iter_sections():
        parts.append(sec.heading_text)
        parts.extend(b.plain_text for b in sec.blocks)
    return " ".join(parts)


def doc_topic_divergence(a: DocumentTree, b: DocumentTree, topics: TopicModel | None = None) -> float:
    topics = topics or TopicModel()
    smooth = 1.0 / topics.topic_count
    pa = topics.distribution(document_text(a), smooth)
    pb = topics.distribution(document_text(b), smooth)
    return js_divergence(pa, pb)


# ---------------------------------------------------------------------------
# chain coherence and preservation


def paragraph_chain_coherence(paragraphs: Sequence[str], provider: SimilarityProvider | None = None) -> float:
    """Mean similarity of adjacent paragraphs; 1.0 for fewer than two."""
    provider = provider or LexicalProvider()
    if len(paragraphs) < 2:
        return 1.0
    sims = [provider.sentence_sim(a, b) for a, b in zip(paragraphs, paragraphs[1:])]
    return math.fsum(sims) / len(sims)


def paragraph_texts(tree: DocumentTree) -> list[str]:
    """Prose-bearing blocks in document order (code blocks are skipped)."""
    return [b.plain_text for b in tree.iter_blocks() if b.kind is not BlockKind.CODE]


@dataclass(frozen=True)
class Thresholds:
    sentence: float = 0.95
    paragraph: float = 0.70
    document: float = 0.15


@dataclass(frozen=True)
class PreservationVerdict:
    sentence_min_sim: float
    paragraph_chain_mean: float
    js_divergence: float
    passed_levels: frozenset[str]
    overall: bool
    paragraph_chain_original: float = 1.0

    def to_dict(self) -> dict:
        return {
            "sentence_min_sim": self.sentence_min_sim,
            "paragraph_chain_mean": self.paragraph_chain_mean,
            "paragraph_chain_original": self.paragraph_chain_original,
            "js_divergence": self.js_divergence,
            "passed_levels": sorted(self.passed_levels),
            "overall": self.overall,
        }


Mapping_ = Sequence[Sequence[int]]


def identity_mapping(tree: DocumentTree) -> list[tuple[int, ...]]:
    return [(i,) for i in range(len(units(tree)))]


def align_units(original: DocumentTree, transformed: DocumentTree) -> list[tuple[int, ...]]:
    """Provenance of each transformed unit, by position in the body token stream.

    Valid only for edits that keep the body token sequence unchanged (all
    optimizer edits do); raises ``ValueError`` otherwise.
    """
    o_units = units(original)
    t_units = units(transformed)
    o_tokens = [t for u in o_units for t in u.tokens]
    t_tokens = [t for u in t_units for t in u.tokens]
    if o_tokens != t_tokens:
        raise ValueError("body token streams differ; positional alignment is undefined")
    starts, ends = [], []
    pos = 0
    for u in o_units:
        starts.append(pos)
        pos += len(u.tokens)
        ends.append(pos)
    mapping: list[tuple[int, ...]] = []
    pos = 0
    for u in t_units:
        lo, hi = pos, pos + len(u.tokens)
        pos = hi
        if not o_units:
            mapping.append(())
            continue
        # first original unit ending after lo
        k = min(bisect.bisect_right(ends, lo), len(o_units) - 1)
        if hi == lo:
            mapping.append((k,))
            continue
        src = []
        j = k
        while j < len(o_units) and starts[j] < hi:
            if ends[j] > lo and ends[j] > starts[j]:
                src.append(j)
            j += 1
        mapping.append(tuple(src))
    return mapping


def _groups(mapping: Mapping_, n_orig: int) -> list[tuple[list[int], list[int]]]:
    parent = list(range(len(mapping) + n_orig))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t, srcs in enumerate(mapping):
        for s in srcs:
            ra, rb = find(t), find(len(mapping) + s)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    comps: dict[int, tuple[list[int], list[int]]] = {}
    for t in range(len(mapping)):
        comps.setdefault(find(t), ([], []))[0].append(t)
    for s in range(n_orig):
        root = find(len(mapping) + s)
        if root in comps:
            comps[root][1].append(s)
    return [comps[k] for k in sorted(comps)]


def check_preservation(
    original: DocumentTree,
    transformed: DocumentTree,
    mapping: Mapping_ | None = None,
    *,
    provider: SimilarityProvider | None = None,
    thresholds: Thresholds | None = None,
    topics: TopicModel | None = None,
) -> PreservationVerdict:
    """Sentence, paragraph and document level semantic preservation.

    ``mapping[j]`` lists the original unit indices transformed unit ``j``
    came from. Split and merged units are compared as concatenations of
    their connected group. The paragraph level passes when the transformed
    chain coherence exceeds the threshold or does not fall below the
    original's own chain coherence. Without a provider, the lexical one
    weighted by the bundled reference IDF is used, as the optimizer does.
    """
    if provider is None:
        from .data import reference_stats

        provider = LexicalProvider(reference_stats().idf)
    thresholds = thresholds or Thresholds()
    o_units = units(original)
    t_units = units(transformed)
    if mapping is None:
        if len(o_units) != len(t_units):
            raise MappingIncomplete("no mapping given and unit counts differ")
        mapping = [(i,) for i in range(len(t_units))]
    if len(mapping) != len(t_units):
        raise MappingIncomplete(f"mapping covers {len(mapping)} of {len(t_units)} units")
    for j, srcs in enumerate(mapping):
        if not srcs:
            raise MappingIncomplete(f"transformed unit {j} has no provenance")
        if any(s < 0 or s >= len(o_units) for s in srcs):
            raise MappingIncomplete(f"transformed unit {j} maps outside the original")

    sims = []
    for t_idx, o_idx in _groups(mapping, len(o_units)):
        a = " ".join(t_units[i].text for i in t_idx)
        b = " ".join(o_units[i].text for i in o_idx)
        sims.append(provider.sentence_sim(a, b))
    sent_min = min(sims) if sims else 1.0

    chain_t = paragraph_chain_coherence(paragraph_texts(transformed), provider)
    chain_o = paragraph_chain_coherence(paragraph_texts(original), provider)
    js = doc_topic_divergence(original, transformed, topics)

    passed = set()
    if sent_min > thresholds.sentence:
        passed.add("sentence")
    if chain_t > thresholds.paragraph or chain_t >= chain_o - 1e-12:
        passed.add("paragraph")
    if js < thresholds.document:
        passed.add("document")
    return PreservationVerdict(sent_min, chain_t, js, frozenset(passed), len(passed) == 3, chain_o)
