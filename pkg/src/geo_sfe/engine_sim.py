"""A deterministic desk-scale stand-in for three generative-engine paradigms.

Nothing here talks to a real engine. Each paradigm retrieves from a corpus
with TF-IDF cosine, multiplies relevance by the architecture's predicted
citation probability, and assembles a cited response of at most 12
sentences. Visibility metrics are then computed from the citations.

STS   rank documents once by relevance x P_STS; the top three documents
      contribute 5, 4 and 3 of their most query-similar sentences.
IR    three rounds; each round expands the query with the top terms of the
      sections that the previous round's cited sections link to, and adds
      relevance x P_IR to a running score.
ISG   rank block-level chunks independently by query similarity, damped
      when the chunk merely repeats the rest of its document, times P_ISG;
      the top six chunks give two sentences each, interleaved.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .citation import ARCHITECTURES, ArchitectureProfile, default_profiles, predict
from .document import BlockKind, DocumentTree
from .errors import EmptyCorpus, EmptyQuerySet
from .features import CorpusStats, compute_stats, extract_all, normalize
from .semantic import IdfTable, LexicalProvider, document_text
from .text import STOPWORDS, is_content, lemmatize, tokenize

PARADIGMS = ARCHITECTURES
MAX_SENTENCES = 12
STS_SHARES = (5, 4, 3)
IR_ROUNDS = 3
IR_EXPANSION_TERMS = 3
ISG_CHUNKS = 6
ISG_SENTENCES_PER_CHUNK = 2
VIS_WEIGHTS = (0.4, 0.3, 0.3)

# question words and light verbs that never head a sub-query
_QUERY_FILLER = frozenset(
    "how what why when where which who does do did is are can should affect affects influence "
    "use using make get best way ways".split()
)


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    sub_queries: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"query {self.id!r} has empty text")

    def parts(self) -> tuple[str, ...]:
        return self.sub_queries if self.sub_queries is not None else decompose(self.text)

    @classmethod
    def from_dict(cls, data: Mapping) -> Query:
        subs = data.get("sub_queries")
        return cls(str(data["id"]), str(data["text"]), tuple(subs) if subs is not None else None)


def decompose(text: str) -> tuple[str, ...]:
    """Noun-phrase-ish chunks: maximal runs of content words between stopwords."""
    phrases, run = [], []
    for tok in tokenize(text):
        low = tok.lower()
        if low in STOPWORDS or low in _QUERY_FILLER or not is_content(tok):
            if run:
                phrases.append(" ".join(run))
            run = []
        else:
            run.append(low)
    if run:
        phrases.append(" ".join(run))
    return tuple(dict.fromkeys(phrases)) or (text.strip(),)


@dataclass(frozen=True)
class ResponseSentence:
    text: str
    citations: frozenset[str]

    def to_dict(self) -> dict:
        return {"text": self.text, "citations": sorted(self.citations)}


@dataclass(frozen=True)
class SimResponse:
    query_id: str
    engine: str
    sentences: tuple[ResponseSentence, ...]

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "engine": self.engine, "sentences": [s.to_dict() for s in self.sentences]}


@dataclass(frozen=True)
class SourceVis:
    coverage: float
    position: float
    influence: float
    vis: float
    citation_rate: float
    citation_depth: float
    first_position: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class VisReport:
    """Per-source visibility plus corpus means.

    ``citation_rate`` and ``visibility`` are means over sources;
    ``citation_depth`` and ``first_position`` are means over the sources
    cited at least once.
    """

    sources: dict[str, SourceVis]
    citation_rate: float
    visibility: float
    citation_depth: float
    first_position: float | None

    def to_dict(self) -> dict:
        return {
            "sources": {k: v.to_dict() for k, v in self.sources.items()},
            "citation_rate": self.citation_rate,
            "visibility": self.visibility,
            "citation_depth": self.citation_depth,
            "first_position": self.first_position,
        }


# ---------------------------------------------------------------------------
# per-document artifacts


Vector = tuple[dict, float]


def _cos(a: Vector, b: Vector) -> float:
    va, na = a
    vb, nb = b
    if na == 0.0 or nb == 0.0:
        return 0.0
    if len(va) > len(vb):
        va, vb = vb, va
    return min(1.0, sum(w * vb.get(t, 0.0) for t, w in va.items()) / (na * nb))


@dataclass
class _Unit:
    text: str
    vec: Vector
    section: int
    chunk: int


@dataclass
class _Doc:
    id: str
    vec: Vector
    units: list[_Unit]
    chunk_vecs: list[Vector]
    chunk_independence: list[float]
    section_links: list[tuple[int, ...]]
    section_terms: list[tuple[str, ...]]
    probability: dict[str, float]
    ranked: dict[str, tuple[int, ...]] = field(default_factory=dict)
    relevance: dict[str, float] = field(default_factory=dict)
    chunk_scores: dict[Query, tuple[float, ...]] = field(default_factory=dict)


def _top_terms(text: str, idf: IdfTable, k: int) -> tuple[str, ...]:
    tf: Counter[str] = Counter()
    first: dict[str, int] = {}
    for tok in tokenize(text):
        if is_content(tok) and not tok[0].isdigit():
            lem = lemmatize(tok)
            tf[lem] += 1
            first.setdefault(lem, len(first))
    return tuple(sorted(tf, key=lambda w: (-tf[w] * idf.idf(w), first[w]))[:k])


class EngineSimulator:
    """Caches per-document artifacts so corpora can be re-mixed cheaply.

    The vocabulary weighting is fixed when the simulator is built, normally
    from the baseline corpus, so swapping an optimized document in does not
    shift everybody else's scores.
    """

    def __init__(self, idf: IdfTable, stats: CorpusStats,
                 profiles: Mapping[str, ArchitectureProfile] | None = None):
        self.idf = idf
        self.stats = stats
        self.profiles = dict(profiles or default_profiles())
        self.provider = LexicalProvider(idf)
        self._docs: dict[tuple[str, str], _Doc] = {}

    @classmethod
    def for_corpus(cls, trees: Sequence[DocumentTree], stats: CorpusStats | None = None,
                   profiles: Mapping[str, ArchitectureProfile] | None = None) -> EngineSimulator:
        """Vocabulary weights from ``trees``; feature statistics from ``stats`` or the trees themselves."""
        if not trees:
            raise EmptyCorpus("corpus is empty")
        idf = IdfTable.from_texts(document_text(t) for t in trees)
        if stats is None:
            if len(trees) >= 2:
                seed = CorpusStats((0.0,) * 15, (0.0,) * 15, 0, idf)
                stats = compute_stats([extract_all(t, stats=seed) for t in trees], idf)
            else:
                stats = CorpusStats((0.0,) * 15, (0.0,) * 15, 0, idf)
        return cls(idf, stats, profiles)

    def vector(self, text: str) -> Vector:
        return self.provider.vector(text)

    def artifacts(self, tree: DocumentTree, doc_id: str) -> _Doc:
        from .document import serialize

        key = (doc_id, serialize(tree))
        hit = self._docs.get(key)
        if hit is not None:
            return hit
        sections = list(tree.iter_sections())
        anchors = {s.anchor: i for i, s in enumerate(sections) if s.anchor}
        owners: list[tuple[int, object]] = [(-1, b) for b in tree.preamble]
        for i, s in enumerate(sections):
            owners.extend((i, b) for b in s.blocks)
        units, chunk_texts = [], []
        for sec_index, block in owners:
            if block.kind is BlockKind.CODE:
                continue
            chunk = len(chunk_texts)
            chunk_texts.append(block.plain_text)
            for u in block.units:
                if u.tokens:
                    units.append(_Unit(u.text, self.vector(u.text), sec_index, chunk))
        chunk_vecs = [self.vector(t) for t in chunk_texts]
        independence = []
        for k, text in enumerate(chunk_texts):
            rest = " ".join(chunk_texts[:k] + chunk_texts[k + 1 :])
            independence.append(1.0 - _cos(chunk_vecs[k], self.vector(rest)) if rest else 1.0)
        links = []
        for s in sections:
            targets = []
            for b in s.blocks:
                if b.kind is BlockKind.CODE:
                    continue
                for u in b.units:
                    for span in u.spans:
                        if span.is_internal_link and span.link_target in anchors:
                            targets.append(anchors[span.link_target])
            links.append(tuple(dict.fromkeys(targets)))
        terms = [_top_terms(s.own_text(), self.idf, IR_EXPANSION_TERMS) for s in sections]
        norm = normalize(extract_all(tree, stats=self.stats, provider=self.provider), self.stats)
        probability = {a: predict(norm, self.profiles[a]) for a in ARCHITECTURES}
        doc = _Doc(doc_id, self.vector(document_text(tree)), units, chunk_vecs, independence, links, terms,
                   probability)
        self._docs[key] = doc
        return doc

    # -- paradigms -----------------------------------------------------------

    def _ranked(self, doc: _Doc, qtext: str) -> tuple[int, ...]:
        hit = doc.ranked.get(qtext)
        if hit is None:
            qvec = self.vector(qtext)
            sims = [_cos(qvec, u.vec) for u in doc.units]
            hit = doc.ranked[qtext] = tuple(sorted(range(len(sims)), key=lambda k: (-sims[k], k)))
        return hit

    def _relevance(self, doc: _Doc, qtext: str) -> float:
        hit = doc.relevance.get(qtext)
        if hit is None:
            hit = doc.relevance[qtext] = _cos(self.vector(qtext), doc.vec)
        return hit

    def _sentences_from(self, doc: _Doc, qtext: str, count: int) -> list[ResponseSentence]:
        return [ResponseSentence(doc.units[k].text, frozenset({doc.id})) for k in self._ranked(doc, qtext)[:count]]

    def _sts(self, docs: Sequence[_Doc], query: Query) -> list[ResponseSentence]:
        scores = [self._relevance(d, query.text) * d.probability["STS"] for d in docs]
        # documents sharing no vocabulary with the query are never cited
        order = sorted((i for i in range(len(docs)) if scores[i] > 0), key=lambda i: (-scores[i], i))
        out: list[ResponseSentence] = []
        for i, share in zip(order, STS_SHARES):
            out.extend(self._sentences_from(docs[i], query.text, share))
        return out[:MAX_SENTENCES]

    def _ir(self, docs: Sequence[_Doc], query: Query) -> list[ResponseSentence]:
        terms: list[str] = []
        total = [0.0] * len(docs)
        qtext = query.text
        order: list[int] = []
        for _ in range(IR_ROUNDS):
            qtext = " ".join([query.text, *terms])
            for i, d in enumerate(docs):
                total[i] += self._relevance(d, qtext) * d.probability["IR"]
            order = sorted((i for i in range(len(docs)) if total[i] > 0), key=lambda i: (-total[i], i))
            harvested: list[str] = []
            for i in order[: len(STS_SHARES)]:
                d = docs[i]
                cited = sorted({d.units[k].section for k in self._ranked(d, qtext)[:1]} - {-1})
                for s in cited:
                    for target in d.section_links[s]:
                        harvested.extend(d.section_terms[target])
            new = [t for t in dict.fromkeys(harvested) if t not in terms]
            if not new:
                break
            terms.extend(new)
        out: list[ResponseSentence] = []
        for i, share in zip(order, STS_SHARES):
            out.extend(self._sentences_from(docs[i], qtext, share))
        return out[:MAX_SENTENCES]

    def _chunk_scores(self, doc: _Doc, query: Query) -> tuple[float, ...]:
        hit = doc.chunk_scores.get(query)
        if hit is None:
            qvec = self.vector(query.text)
            part_vecs = [self.vector(p) for p in query.parts()]
            out = []
            for k, cvec in enumerate(doc.chunk_vecs):
                sub = max((_cos(p, cvec) for p in part_vecs), default=0.0)
                rel = 0.5 * (_cos(qvec, cvec) + sub)
                out.append(rel * (0.5 + 0.5 * doc.chunk_independence[k]))
            hit = doc.chunk_scores[query] = tuple(out)
        return hit

    def _isg(self, docs: Sequence[_Doc], query: Query) -> list[ResponseSentence]:
        chunks = [
            (c * d.probability["ISG"], i, k)
            for i, d in enumerate(docs)
            for k, c in enumerate(self._chunk_scores(d, query))
            if c > 0
        ]
        chunks.sort(key=lambda c: (-c[0], c[1], c[2]))
        picked = []
        for _, i, k in chunks[:ISG_CHUNKS]:
            d = docs[i]
            ranked = [j for j in self._ranked(d, query.text) if d.units[j].chunk == k]
            picked.append([ResponseSentence(d.units[j].text, frozenset({d.id}))
                           for j in ranked[:ISG_SENTENCES_PER_CHUNK]])
        out: list[ResponseSentence] = []
        for depth in range(ISG_SENTENCES_PER_CHUNK):
            for sents in picked:
                if depth < len(sents):
                    out.append(sents[depth])
        return out[:MAX_SENTENCES]

    def respond(self, docs: Sequence[_Doc], query: Query, paradigm: str) -> SimResponse:
        engine = {"STS": self._sts, "IR": self._ir, "ISG": self._isg}[paradigm]
        return SimResponse(query.id, paradigm, tuple(engine(docs, query)))

    def simulate(self, corpus: Mapping[str, DocumentTree], queries: Sequence[Query], paradigm: str) -> list[SimResponse]:
        _check_inputs(corpus, queries, paradigm)
        docs = [self.artifacts(tree, doc_id) for doc_id, tree in corpus.items()]
        return [self.respond(docs, q, paradigm) for q in queries]


def _check_inputs(corpus, queries, paradigm) -> None:
    if not corpus:
        raise EmptyCorpus("corpus is empty")
    if not queries:
        raise EmptyQuerySet("no queries")
    if paradigm not in PARADIGMS:
        raise ValueError(f"unknown paradigm {paradigm!r}; expected one of {PARADIGMS}")


def _as_mapping(corpus) -> dict[str, DocumentTree]:
    if isinstance(corpus, Mapping):
        return dict(corpus)
    return {(t.source_id or f"doc{i}"): t for i, t in enumerate(corpus)}


def simulate(corpus: Mapping[str, DocumentTree] | Sequence[DocumentTree], queries: Sequence[Query],
             paradigm: str, profiles: Mapping[str, ArchitectureProfile] | None = None, *,
             stats: CorpusStats | None = None) -> list[SimResponse]:
    """Responses for every query under one paradigm.

    A sequence corpus is keyed by each tree's ``source_id`` (or ``doc<i>``).
    """
    corpus = _as_mapping(corpus)
    _check_inputs(corpus, queries, paradigm)
    sim = EngineSimulator.for_corpus(list(corpus.values()), stats, profiles)
    return sim.simulate(corpus, queries, paradigm)


# ---------------------------------------------------------------------------
# metrics


def score(responses: Sequence[SimResponse], corpus, queries: Sequence[Query] | None = None) -> VisReport:
    """Coverage, position, influence and visibility per source.

    ``corpus`` is a mapping keyed by source id, or a sequence of ids or
    trees. ``queries`` is accepted for symmetry with :func:`simulate`;
    every response already carries its query id.
    """
    if isinstance(corpus, Mapping):
        source_ids = list(corpus)
    else:
        source_ids = [c if isinstance(c, str) else (c.source_id or f"doc{i}") for i, c in enumerate(corpus)]
    n = len(responses)
    acc = {s: {"cov": 0.0, "pos": 0.0, "inf": 0.0, "hits": 0, "depth": 0, "first": 0} for s in source_ids}
    for r in responses:
        sents = r.sentences
        words = [len(tokenize(s.text)) for s in sents]
        total_words = sum(words)
        for s in source_ids:
            idx = [k for k, sent in enumerate(sents) if s in sent.citations]
            if not idx:
                continue
            a = acc[s]
            a["cov"] += len(idx) / len(sents)
            a["pos"] += 1.0 - idx[0] / len(sents)
            a["inf"] += sum(words[k] for k in idx) / total_words if total_words else 0.0
            a["hits"] += 1
            a["depth"] += len(idx)
            a["first"] += idx[0]
    out = {}
    w_c, w_p, w_i = VIS_WEIGHTS
    for s in source_ids:
        a = acc[s]
        c, p, i = (a["cov"] / n, a["pos"] / n, a["inf"] / n) if n else (0.0, 0.0, 0.0)
        out[s] = SourceVis(
            c, p, i, w_c * c + w_p * p + w_i * i,
            a["hits"] / n if n else 0.0,
            a["depth"] / a["hits"] if a["hits"] else 0.0,
            a["first"] / a["hits"] if a["hits"] else None,
        )
    cited = [v for v in out.values() if v.citation_rate > 0]
    firsts = [v.first_position for v in cited if v.first_position is not None]
    k = len(out)
    return VisReport(
        out,
        math.fsum(v.citation_rate for v in out.values()) / k if k else 0.0,
        math.fsum(v.vis for v in out.values()) / k if k else 0.0,
        math.fsum(v.citation_depth for v in cited) / len(cited) if cited else 0.0,
        math.fsum(firsts) / len(firsts) if firsts else None,
    )


# ---------------------------------------------------------------------------
# baseline vs optimized


@dataclass(frozen=True)
class ParadigmComparison:
    paradigm: str
    vs_baseline: float
    vs_optimized: float
    cr_baseline: float
    cr_optimized: float

    @property
    def vs_delta(self) -> float:
        return self.vs_optimized - self.vs_baseline

    @property
    def vs_change(self) -> float | None:
        return self.vs_delta / self.vs_baseline if self.vs_baseline else None

    @property
    def cr_delta(self) -> float:
        return self.cr_optimized - self.cr_baseline

    def to_dict(self) -> dict:
        return {
            "paradigm": self.paradigm,
            "vs_baseline": self.vs_baseline,
            "vs_optimized": self.vs_optimized,
            "vs_delta": self.vs_delta,
            "vs_change": self.vs_change,
            "cr_baseline": self.cr_baseline,
            "cr_optimized": self.cr_optimized,
            "cr_delta": self.cr_delta,
        }


def _swap_scores(sim: EngineSimulator, baseline: dict[str, DocumentTree], variant: dict[str, DocumentTree],
                 queries: Sequence[Query], paradigm: str) -> tuple[float, float]:
    """Mean visibility and citation rate of each variant document competing with baseline peers."""
    ids = list(baseline)
    base_docs = [sim.artifacts(baseline[i], i) for i in ids]
    vis, cr = [], []
    for k, doc_id in enumerate(ids):
        docs = list(base_docs)
        docs[k] = sim.artifacts(variant[doc_id], doc_id)
        report = score([sim.respond(docs, q, paradigm) for q in queries], ids)
        vis.append(report.sources[doc_id].vis)
        cr.append(report.sources[doc_id].citation_rate)
    return math.fsum(vis) / len(vis), math.fsum(cr) / len(cr)


def compare(baseline: Mapping[str, DocumentTree], optimized: Mapping[str, DocumentTree], queries: Sequence[Query],
            paradigms: Sequence[str] = PARADIGMS, *, stats: CorpusStats | None = None,
            profiles: Mapping[str, ArchitectureProfile] | None = None,
            simulator: EngineSimulator | None = None) -> list[ParadigmComparison]:
    """Swap protocol: each document is scored with only itself optimized.

    Baseline numbers come from the same protocol with the baseline document
    in its own slot, so both sides see identical competition.
    """
    baseline, optimized = dict(baseline), dict(optimized)
    if set(baseline) != set(optimized):
        raise ValueError("baseline and optimized corpora must hold the same document ids")
    sim = simulator or EngineSimulator.for_corpus(list(baseline.values()), stats, profiles)
    out = []
    for p in paradigms:
        _check_inputs(baseline, queries, p)
        vb, cb = _swap_scores(sim, baseline, baseline, queries, p)
        vo, co = _swap_scores(sim, baseline, optimized, queries, p)
        out.append(ParadigmComparison(p, vb, vo, cb, co))
    return out


ABLATION_CONFIGS = (
    ("full", frozenset()),
    ("skip-macro", frozenset({"macro"})),
    ("skip-meso", frozenset({"meso"})),
    ("skip-micro", frozenset({"micro"})),
)


@dataclass(frozen=True)
class AblationRow:
    name: str
    vs: dict[str, float]
    cr: dict[str, float]

    @property
    def mean_vs(self) -> float:
        return math.fsum(self.vs.values()) / len(self.vs)

    def to_dict(self) -> dict:
        return {"name": self.name, "vs": dict(self.vs), "cr": dict(self.cr), "mean_vs": self.mean_vs}


@dataclass(frozen=True)
class AblationTable:
    rows: tuple[AblationRow, ...]
    contributions: dict[str, float | None]
    contributions_by_paradigm: dict[str, dict[str, float | None]] = field(default_factory=dict)

    def row(self, name: str) -> AblationRow:
        return next(r for r in self.rows if r.name == name)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "contributions": dict(self.contributions),
            "contributions_by_paradigm": {k: dict(v) for k, v in self.contributions_by_paradigm.items()},
        }


def _contribution(full: float, without: float, base: float) -> float | None:
    denom = full - base
    if abs(denom) < 1e-15:
        return None
    return (full - without) / denom


def ablate(corpus: Mapping[str, DocumentTree], queries: Sequence[Query], config=None, *,
           stats: CorpusStats | None = None, profiles: Mapping[str, ArchitectureProfile] | None = None,
           paradigms: Sequence[str] = PARADIGMS,
           optimize_fn: Callable[[DocumentTree, object], DocumentTree] | None = None) -> AblationTable:
    """Optimize the corpus four ways and attribute the visibility gain to levels.

    Contribution of a level is ``(full - without) / (full - baseline)`` on
    the paradigm-mean visibility; ``None`` when full equals baseline.
    """
    import dataclasses

    from .optimizer import Optimizer

    corpus = dict(corpus)
    if not corpus:
        raise EmptyCorpus("corpus is empty")
    if not queries:
        raise EmptyQuerySet("no queries")
    config = config or Optimizer(None, stats, profiles=profiles).config
    sim = EngineSimulator.for_corpus(list(corpus.values()), stats, profiles)

    def run(skip: frozenset) -> dict[str, DocumentTree]:
        cfg = dataclasses.replace(config, skip_levels=frozenset(config.skip_levels) | skip)
        if optimize_fn is not None:
            return {k: optimize_fn(t, cfg) for k, t in corpus.items()}
        opt = Optimizer(cfg, stats)
        return {k: opt.optimize(t)[0] for k, t in corpus.items()}

    rows = []
    base_vs, base_cr = {}, {}
    for p in paradigms:
        base_vs[p], base_cr[p] = _swap_scores(sim, corpus, corpus, queries, p)
    for name, skip in ABLATION_CONFIGS:
        variant = run(skip)
        vs, cr = {}, {}
        for p in paradigms:
            vs[p], cr[p] = _swap_scores(sim, corpus, variant, queries, p)
        rows.append(AblationRow(name, vs, cr))
    rows.append(AblationRow("baseline", base_vs, base_cr))
    full = rows[0]
    base = rows[-1]
    contrib = {}
    by_paradigm: dict[str, dict[str, float | None]] = {p: {} for p in paradigms}
    for (name, skip), row in zip(ABLATION_CONFIGS[1:], rows[1:4]):
        level = next(iter(skip))
        contrib[level] = _contribution(full.mean_vs, row.mean_vs, base.mean_vs)
        for p in paradigms:
            by_paradigm[p][level] = _contribution(full.vs[p], row.vs[p], base.vs[p])
    return AblationTable(tuple(rows), contrib, by_paradigm)
