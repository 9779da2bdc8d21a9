"""The 15-dimensional structural feature vector and its z-score normalization."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .document import BlockKind, DocumentTree, Emphasis
from .errors import InsufficientCorpus, StatsMismatch
from .semantic import IdfTable, LexicalProvider, SimilarityProvider, TopicModel
from .text import count_syllables, is_content, is_numeric, lemmatize

MACRO = ("d_h", "balance_score", "R", "T_c", "L_d", "R_d")
MESO = ("V_p", "H_c", "F_d", "F_s", "D")
MICRO = ("E_d", "E_p", "K_p", "R_e")
DIMENSIONS = MACRO + MESO + MICRO
LEVELS = {"macro": MACRO, "meso": MESO, "micro": MICRO}

BALANCE_TARGET = 0.3
POSITION_WEIGHTS = {"sentence_initial": 2.0, "section_boundary": 1.5, "standard": 1.0}
STRUCTURED_FAMILY = frozenset({BlockKind.LIST, BlockKind.TABLE, BlockKind.CODE})


@dataclass(frozen=True)
class FeatureVector:
    d_h: float = 0.0
    balance_score: float = 0.0
    R: float = 0.0
    T_c: float = 0.0
    L_d: float = 0.0
    R_d: float = 0.0
    V_p: float = 0.0
    H_c: float = 0.0
    F_d: float = 0.0
    F_s: float = 0.0
    D: float = 0.0
    E_d: float = 0.0
    E_p: float = 0.0
    K_p: float = 0.0
    R_e: float = 0.0
    b_h: dict = field(default_factory=dict, compare=False)

    def as_list(self) -> list[float]:
        return [float(getattr(self, k)) for k in DIMENSIONS]

    def to_dict(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in DIMENSIONS}

    def level(self, name: str) -> list[float]:
        return [float(getattr(self, k)) for k in LEVELS[name]]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> FeatureVector:
        if len(values) != len(DIMENSIONS):
            raise StatsMismatch(f"expected {len(DIMENSIONS)} values, got {len(values)}")
        return cls(**dict(zip(DIMENSIONS, (float(v) for v in values))))

    @classmethod
    def from_dict(cls, data: dict) -> FeatureVector:
        return cls(**{k: float(data[k]) for k in DIMENSIONS})


def _cv(values: Sequence[float]) -> float:
    """Population coefficient of variation; 0 for an empty or zero-mean set."""
    if not values:
        return 0.0
    mean = math.fsum(values) / len(values)
    if mean == 0:
        return 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return math.sqrt(var) / mean


def extract_macro(tree: DocumentTree, provider: SimilarityProvider | None = None) -> dict:
    provider = provider or LexicalProvider()
    sections = list(tree.iter_sections())
    n = len(sections)
    out = {"d_h": 0.0, "balance_score": 0.0, "R": 1.0, "T_c": 0.0, "L_d": 0.0, "R_d": 1.0, "b_h": {}}
    blocks = list(tree.iter_blocks())
    links = sum(b.link_count for b in blocks)
    if blocks:
        out["L_d"] = links / len(blocks)
    if not n:
        return out

    levels = Counter(s.level for s in sections)
    d_h = max(levels)
    out["d_h"] = float(d_h)
    out["b_h"] = {lvl: levels[lvl] / n for lvl in sorted(levels)}
    root = min(levels)
    non_root = range(root + 1, d_h + 1)
    if len(non_root):
        worst = max(abs(levels.get(i, 0) / n - BALANCE_TARGET) for i in non_root)
        out["balance_score"] = min(1.0, max(0.0, 1.0 - worst))

    if n > 1:
        out["R"] = min(1.0, max(0.0, 1.0 - _cv([s.word_count for s in sections])))
        texts = [s.own_text() for s in sections]
        sims = [provider.sentence_sim(a, b) for a, b in zip(texts, texts[1:])]
        out["T_c"] = math.fsum(sims) / len(sims)
        if links:
            per_section = [sum(b.link_count for b in s.blocks) for s in sections]
            out["R_d"] = 1.0 / (1.0 + _cv(per_section))
    return out


def extract_meso(tree: DocumentTree, topics: TopicModel | None = None) -> dict:
    topics = topics or TopicModel()
    blocks = list(tree.iter_blocks())
    paragraphs = [b for b in blocks if b.kind is BlockKind.PARAGRAPH]

    v_p = _cv([b.word_count for b in paragraphs]) if len(paragraphs) >= 2 else 0.0

    entropies = []
    log_k = math.log(topics.topic_count)
    for b in paragraphs:
        counts = topics.counts(b.plain_text)
        total = sum(counts)
        if total:
            h = -math.fsum((c / total) * math.log(c / total) for c in counts if c)
            entropies.append(h / log_k)
    h_c = math.fsum(entropies) / len(entropies) if entropies else 0.0

    f_d = (len(blocks) - len(paragraphs)) / len(blocks) if blocks else 0.0

    same = pairs = 0
    for group in tree.block_groups():
        for a, b in zip(group, group[1:]):
            pairs += 1
            same += (a.kind in STRUCTURED_FAMILY) == (b.kind in STRUCTURED_FAMILY)
    f_s = same / pairs if pairs else 1.0

    tokens = [t for b in blocks for u in b.units for t in u.tokens]
    lemmas = {lemmatize(t) for t in tokens if is_content(t)}
    numerics = sum(1 for t in tokens if is_numeric(t))
    d = (len(lemmas) + numerics) / len(tokens) if tokens else 0.0
    return {"V_p": v_p, "H_c": h_c, "F_d": f_d, "F_s": f_s, "D": d}


def weighted_tokens(tree: DocumentTree) -> list[tuple[str, Emphasis, float]]:
    """Every body token with its emphasis and position weight.

    Weight 2.0 marks a unit's first token, 1.5 any other token of a unit that
    opens or closes its section, 1.0 the rest.
    """
    out = []
    for group in tree.block_groups():
        group_units = [u for b in group for u in b.units]
        last = len(group_units) - 1
        for k, unit in enumerate(group_units):
            edge = k == 0 or k == last
            for t, (tok, emph) in enumerate(unit.token_emphasis()):
                if t == 0:
                    w = POSITION_WEIGHTS["sentence_initial"]
                elif edge:
                    w = POSITION_WEIGHTS["section_boundary"]
                else:
                    w = POSITION_WEIGHTS["standard"]
                out.append((tok, emph, w))
    return out


def derive_keywords(tree: DocumentTree, idf: IdfTable | None = None, k: int = 10) -> list[str]:
    """Top-``k`` TF-IDF content lemmas of the body; ties go to first occurrence."""
    idf = idf or IdfTable()
    tf: Counter[str] = Counter()
    first: dict[str, int] = {}
    for b in tree.iter_blocks():
        for u in b.units:
            for tok in u.tokens:
                if is_content(tok):
                    lem = lemmatize(tok)
                    tf[lem] += 1
                    first.setdefault(lem, len(first))
    ranked = sorted(tf, key=lambda w: (-tf[w] * idf.idf(w), first[w]))
    return ranked[:k]


def extract_micro(tree: DocumentTree, keywords: Iterable[str] | None = None, idf: IdfTable | None = None) -> dict:
    if keywords is None:
        keywords = derive_keywords(tree, idf)
    keyset = {lemmatize(k.lower()) for k in keywords}
    toks = weighted_tokens(tree)
    n = len(toks)
    if not n:
        return {"E_d": 0.0, "E_p": 0.0, "K_p": 0.0, "R_e": 0.0}
    emphasized = [(w) for _, e, w in toks if e is not Emphasis.NONE]
    e_d = len(emphasized) / n
    e_p = math.fsum(emphasized) / n
    kw = [w for t, _, w in toks if lemmatize(t) in keyset]
    k_p = math.fsum(kw) / len(kw) if kw else 0.0
    sentences = sum(1 for b in tree.iter_blocks() for u in b.units if u.tokens)
    syllables = sum(count_syllables(t) for t, _, _ in toks)
    r_e = 206.835 - 1.015 * (n / sentences) - 84.6 * (syllables / n)
    return {"E_d": e_d, "E_p": e_p, "K_p": k_p, "R_e": r_e}


def extract_all(
    tree: DocumentTree,
    keywords: Iterable[str] | None = None,
    *,
    stats: CorpusStats | None = None,
    provider: SimilarityProvider | None = None,
    topics: TopicModel | None = None,
) -> FeatureVector:
    """Raw feature vector: macro, then meso, then micro extractors."""
    idf = stats.idf if stats is not None else None
    provider = provider or LexicalProvider(idf)
    values = extract_macro(tree, provider)
    b_h = values.pop("b_h")
    values.update(extract_meso(tree, topics))
    values.update(extract_micro(tree, keywords, idf))
    return FeatureVector(**values, b_h=b_h)


@dataclass(frozen=True)
class CorpusStats:
    means: tuple[float, ...]
    stds: tuple[float, ...]
    n: int
    idf: IdfTable = field(default_factory=IdfTable)

    @property
    def constant(self) -> tuple[bool, ...]:
        return tuple(s <= 1e-12 * max(1.0, abs(m)) for m, s in zip(self.means, self.stds))

    def to_dict(self) -> dict:
        out = {"means": list(self.means), "stds": list(self.stds), "n": self.n}
        if self.idf.doc_count:
            out["doc_count"] = self.idf.doc_count
            out["doc_freq"] = dict(self.idf.doc_freq)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> CorpusStats:
        idf = IdfTable(dict(data.get("doc_freq", {})), int(data.get("doc_count", 0)))
        return cls(tuple(map(float, data["means"])), tuple(map(float, data["stds"])), int(data["n"]), idf)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> CorpusStats:
        return cls.from_dict(json.loads(Path(path).read_text()))


def compute_stats(corpus: Sequence[FeatureVector], idf: IdfTable | None = None) -> CorpusStats:
    """Per-dimension population mean and standard deviation."""
    if len(corpus) < 2:
        raise InsufficientCorpus(f"need at least 2 vectors, got {len(corpus)}")
    cols = list(zip(*(v.as_list() for v in corpus)))
    means = tuple(math.fsum(c) / len(c) for c in cols)
    stds = tuple(
        math.sqrt(math.fsum((x - m) ** 2 for x in c) / len(c)) for c, m in zip(cols, means)
    )
    return CorpusStats(means, stds, len(corpus), idf or IdfTable())


def normalize(raw: FeatureVector, stats: CorpusStats) -> FeatureVector:
    """z-score each dimension; constant dimensions map to 0."""
    if len(stats.means) != len(DIMENSIONS) or len(stats.stds) != len(DIMENSIONS):
        raise StatsMismatch(f"stats have {len(stats.means)} dimensions, expected {len(DIMENSIONS)}")
    vals = [
        0.0 if const else (x - m) / s
        for x, m, s, const in zip(raw.as_list(), stats.means, stats.stds, stats.constant)
    ]
    return FeatureVector.from_list(vals)


def corpus_stats(trees: Sequence[DocumentTree], keywords: Iterable[str] | None = None) -> CorpusStats:
    """Reference statistics for a corpus: document frequencies, then feature moments."""
    from .semantic import document_text

    idf = IdfTable.from_texts(document_text(t) for t in trees)
    seed = CorpusStats((0.0,) * len(DIMENSIONS), (0.0,) * len(DIMENSIONS), 0, idf)
    kw = list(keywords) if keywords is not None else None
    vectors = [extract_all(t, kw, stats=seed) for t in trees]
    return compute_stats(vectors, idf)
