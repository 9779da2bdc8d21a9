"""Hierarchical structure optimizer: macro, then meso, then micro edits.

Every candidate edit is checked against the *original* document with the
semantic guard before it is kept, so any state the pipeline reaches is a
valid output. Rejected edits stay in the log with ``applied=False``.

Edits never reorder or rewrite body tokens. The one exception is heading
text: merging two sections drops the second heading and splitting one adds
a generated heading, and both are recorded in the log. Because the body
token stream is unchanged, sentence provenance is recovered exactly by
positional alignment (:func:`geo_sfe.semantic.align_units`).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .citation import ArchitectureProfile, TargetProfile, compute_targets, default_profiles, predict_mixed
from .document import (
    Block,
    BlockKind,
    DocumentTree,
    Emphasis,
    InlineSpan,
    Section,
    Sentence,
    _merge_spans,
    finalize,
    render_block,
    render_spans,
    sentence_boundaries,
    serialize,
    slice_spans,
)
from .features import CorpusStats, FeatureVector, derive_keywords, extract_all, normalize
from .semantic import (
    IdfTable,
    LexicalProvider,
    PreservationVerdict,
    SimilarityProvider,
    Thresholds,
    TopicModel,
    align_units,
    check_preservation,
)
from .text import content_lemmas, is_content, lemmatize, token_spans, tokenize

MODES = ("full", "partial", "minimal", "identity")
LEVEL_NAMES = ("macro", "meso", "micro")

# dimensions each level steers toward its target
STEERED = {"macro": ("d_h", "balance_score", "L_d"), "meso": ("F_d",), "micro": ("E_d",)}
# dimensions whose feasibility range defines a successful full optimization
POSTCONDITION = ("d_h", "F_d", "E_d")

_ENUM_CUES = frozenset(
    "first second third fourth fifth next then finally lastly also another additionally one two three".split()
)
_CONNECTIVES = frozenset(
    """however therefore thus hence because although though moreover furthermore consequently
    meanwhile nevertheless nonetheless instead otherwise accordingly but so yet since while whereas""".split()
)
_CONJUNCTION_SPLIT_RE = re.compile(r",\s+(and|but|or|so|yet)\s+", re.IGNORECASE)


@dataclass(frozen=True)
class OptimizationConfig:
    targets: TargetProfile = field(default_factory=compute_targets)
    theta_macro: float = 0.1
    theta_meso: float = 0.1
    theta_micro: float = 0.1
    paragraph_tolerance: float = 50.0
    split_coherence: float = 0.7
    merge_similarity: float = 0.65
    link_similarity: float = 0.7
    rebalance_coherence: float = 0.7
    convert_weights: tuple[float, float, float] = (0.5, 0.3, 0.2)
    importance_weights: tuple[float, float, float] = (0.5, 0.3, 0.2)
    emphasis_weights: Mapping[str, float] = field(
        default_factory=lambda: {"bold": 1.8, "italic": 1.3, "underline": 1.0}
    )
    centrality_edge: float = 0.15
    readability_floor: float = 30.0
    long_sentence_words: int = 40
    max_passes: int = 20
    thresholds: Thresholds = field(default_factory=Thresholds)
    skip_levels: frozenset[str] = frozenset()
    keywords: tuple[str, ...] | None = None

    def __post_init__(self):
        gates = (self.split_coherence, self.merge_similarity, self.link_similarity, self.rebalance_coherence)
        if any(not 0.0 <= g <= 1.0 for g in gates):
            raise ValueError("coherence gates must lie in [0, 1]")
        if abs(sum(self.importance_weights) - 1.0) > 1e-9:
            raise ValueError("importance weights must sum to 1")
        if self.max_passes < 0:
            raise ValueError("max_passes must be non-negative")
        unknown = set(self.skip_levels) - set(LEVEL_NAMES)
        if unknown:
            raise ValueError(f"unknown levels to skip: {sorted(unknown)}")

    def theta(self, level: str) -> float:
        return getattr(self, f"theta_{level}")


@dataclass(frozen=True)
class LogEntry:
    level: str
    edit_kind: str
    location: str
    before_digest: str
    after_digest: str
    verdict: PreservationVerdict | None
    applied: bool
    reason: str = ""
    detail: Mapping = field(default_factory=dict)
    run: str = "full"

    def to_dict(self) -> dict:
        return {
            "run": self.run,
            "level": self.level,
            "edit_kind": self.edit_kind,
            "location": self.location,
            "before_digest": self.before_digest,
            "after_digest": self.after_digest,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "applied": self.applied,
            "reason": self.reason,
            "detail": dict(self.detail),
        }


@dataclass(frozen=True)
class TransformLog:
    entries: tuple[LogEntry, ...]
    final_mode: str
    mapping: tuple[tuple[int, ...], ...]
    p_before: float
    p_after: float
    verdict: PreservationVerdict
    gaps: Mapping[str, float] = field(default_factory=dict)
    candidates: Mapping[str, float] = field(default_factory=dict)
    chosen_run: str = "identity"

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.entries)

    def summary(self) -> dict:
        return {
            "final_mode": self.final_mode,
            "chosen_run": self.chosen_run,
            "P_before": self.p_before,
            "P_after": self.p_after,
            "verdict": self.verdict.to_dict(),
            "gaps": dict(self.gaps),
            "candidates": dict(self.candidates),
            "edits_applied": sum(1 for e in self.entries if e.applied and e.run == self.chosen_run),
            "edits_rejected": sum(1 for e in self.entries if not e.applied and e.run == self.chosen_run),
        }

    def mapping_json(self) -> str:
        return json.dumps({"mapping": [list(m) for m in self.mapping]}) + "\n"


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# ---------------------------------------------------------------------------
# tree addressing

Path = tuple[int, ...]
GroupKey = Path | None  # None addresses the preamble


def section_paths(tree: DocumentTree) -> list[tuple[Path, Section]]:
    out: list[tuple[Path, Section]] = []

    def walk(secs: Sequence[Section], prefix: Path) -> None:
        for i, s in enumerate(secs):
            out.append((prefix + (i,), s))
            walk(s.children, prefix + (i,))

    walk(tree.sections, ())
    return out


def get_section(tree: DocumentTree, path: Path) -> Section:
    secs = tree.sections
    sec = None
    for i in path:
        sec = secs[i]
        secs = sec.children
    assert sec is not None
    return sec


def _replace_children(secs: tuple[Section, ...], path: Path, fn: Callable[[tuple[Section, ...], int], tuple[Section, ...]]):
    """Rebuild ``secs`` applying ``fn(siblings, index)`` at the parent of ``path``."""
    if len(path) == 1:
        return fn(secs, path[0])
    i = path[0]
    sec = secs[i]
    new = dataclasses.replace(sec, children=_replace_children(sec.children, path[1:], fn))
    return secs[:i] + (new,) + secs[i + 1 :]


def replace_section(tree: DocumentTree, path: Path, new: Section | None) -> DocumentTree:
    """Swap the section at ``path`` for ``new`` (or remove it when ``None``)."""

    def fn(siblings, i):
        return siblings[:i] + ((new,) if new is not None else ()) + siblings[i + 1 :]

    return dataclasses.replace(tree, sections=_replace_children(tree.sections, path, fn))


def group_blocks(tree: DocumentTree, key: GroupKey) -> tuple[Block, ...]:
    return tree.preamble if key is None else get_section(tree, key).blocks


def set_blocks(tree: DocumentTree, key: GroupKey, blocks: Sequence[Block]) -> DocumentTree:
    if key is None:
        return dataclasses.replace(tree, preamble=tuple(blocks))
    sec = get_section(tree, key)
    return replace_section(tree, key, dataclasses.replace(sec, blocks=tuple(blocks)))


def block_groups(tree: DocumentTree) -> list[tuple[GroupKey, tuple[Block, ...]]]:
    groups: list[tuple[GroupKey, tuple[Block, ...]]] = []
    if tree.preamble:
        groups.append((None, tree.preamble))
    groups.extend((path, sec.blocks) for path, sec in section_paths(tree))
    return groups


def _where(tree: DocumentTree, key: GroupKey, index: int | None = None) -> str:
    name = "preamble" if key is None else get_section(tree, key).anchor
    return name if index is None else f"{name}#{index}"


def max_depth(tree: DocumentTree) -> int:
    return max((s.level for _, s in section_paths(tree)), default=0)


# ---------------------------------------------------------------------------
# shared scoring helpers


def _tfidf_terms(text: str, idf: IdfTable, k: int) -> list[str]:
    tf: Counter[str] = Counter()
    first: dict[str, int] = {}
    for tok in tokenize(text):
        if is_content(tok):
            lem = lemmatize(tok)
            tf[lem] += 1
            first.setdefault(lem, len(first))
    return sorted(tf, key=lambda w: (-tf[w] * idf.idf(w), first[w]))[:k]


def _section_text(sec: Section) -> str:
    return sec.own_text()


def _variance(values: Sequence[float]) -> float:
    if not values:
        return 0.0
    m = math.fsum(values) / len(values)
    return math.fsum((v - m) ** 2 for v in values) / len(values)


def _restyle(sentence: Sentence, marks: Mapping[int, Emphasis]) -> Sentence:
    """Apply emphasis to the tokens at the given token indices.

    Tokens already emphasized or inside links are left alone.
    """
    text = sentence.text
    cuts: list[tuple[int, int, Emphasis]] = []
    for k, (start, end, _) in enumerate(token_spans(text)):
        if k in marks:
            cuts.append((start, end, marks[k]))
    if not cuts:
        return sentence
    out: list[InlineSpan] = []
    pos = 0
    for span in sentence.spans:
        s0, s1 = pos, pos + len(span.text)
        pos = s1
        if span.emphasis is not Emphasis.NONE or span.is_internal_link:
            out.append(span)
            continue
        cur = s0
        for a, b, emph in cuts:
            if a >= s0 and b <= s1 and a >= cur:
                if a > cur:
                    out.append(InlineSpan(text[cur:a]))
                out.append(InlineSpan(text[a:b], emph))
                cur = b
        if cur < s1:
            out.append(InlineSpan(text[cur:s1]))
    return dataclasses.replace(sentence, spans=_merge_spans(out))


def _link_token(sentence: Sentence, index: int, target: str) -> Sentence:
    text = sentence.text
    start, end, _ = token_spans(text)[index]
    out: list[InlineSpan] = []
    pos = 0
    for span in sentence.spans:
        s0, s1 = pos, pos + len(span.text)
        pos = s1
        if s0 <= start and end <= s1 and span.emphasis is Emphasis.NONE and not span.is_internal_link:
            out.extend(
                [
                    InlineSpan(text[s0:start]),
                    InlineSpan(text[start:end], Emphasis.NONE, True, target),
                    InlineSpan(text[end:s1]),
                ]
            )
        else:
            out.append(span)
    return dataclasses.replace(sentence, spans=_merge_spans(out))


# ---------------------------------------------------------------------------
# the run context: original document, guard, log


class _Run:
    """Mutable state of one pipeline run (local to a single call)."""

    def __init__(self, original: DocumentTree, config: OptimizationConfig, provider: SimilarityProvider,
                 idf: IdfTable, topics: TopicModel, keywords: Sequence[str], name: str):
        self.original = original
        self.config = config
        self.provider = provider
        self.idf = idf
        self.topics = topics
        self.keywords = tuple(keywords)
        self.keyset = frozenset(lemmatize(k) for k in keywords)
        self.name = name
        self.entries: list[LogEntry] = []
        self.rejected: dict[str, int] = {}

    def sim(self, a: str, b: str) -> float:
        return self.provider.sentence_sim(a, b)

    def guard(self, candidate: DocumentTree) -> PreservationVerdict:
        mapping = align_units(self.original, candidate)
        return check_preservation(
            self.original, candidate, mapping,
            provider=self.provider, thresholds=self.config.thresholds, topics=self.topics,
        )

    def attempt(self, level: str, kind: str, location: str, before: DocumentTree, after: DocumentTree,
                before_text: str, after_text: str, detail: Mapping | None = None) -> bool:
        verdict = self.guard(after)
        self.entries.append(
            LogEntry(level, kind, location, digest(before_text), digest(after_text), verdict,
                     verdict.overall, "" if verdict.overall else "semantic check failed",
                     dict(detail or {}), self.name)
        )
        if not verdict.overall:
            self.rejected[level] = self.rejected.get(level, 0) + 1
        return verdict.overall

    def note(self, level: str, kind: str, location: str, reason: str, detail: Mapping | None = None) -> None:
        """Record an edit that was not attempted because a bound or gate forbids it."""
        self.entries.append(LogEntry(level, kind, location, "", "", None, False, reason, dict(detail or {}), self.name))


# ---------------------------------------------------------------------------
# macro level


def _merge_candidates(tree: DocumentTree, depth: int) -> list[tuple[Path, Path, str]]:
    """(keeper, absorbed, relation) pairs involving a section at ``depth``."""
    out = []
    for path, sec in section_paths(tree):
        if sec.level != depth:
            continue
        i = path[-1]
        if i > 0:
            out.append((path[:-1] + (i - 1,), path, "sibling"))
        elif len(path) > 1:
            out.append((path[:-1], path, "parent"))
    return out


def _merge(tree: DocumentTree, keeper: Path, absorbed: Path, relation: str) -> tuple[DocumentTree, list[str]]:
    gone = get_section(tree, absorbed)
    keep = get_section(tree, keeper)
    remap = {gone.anchor: keep.anchor}
    if relation == "parent":
        new_keep = dataclasses.replace(
            keep, blocks=keep.blocks + gone.blocks, children=gone.children + keep.children[1:]
        )
        tree = replace_section(tree, keeper, new_keep)
    else:
        new_keep = dataclasses.replace(keep, blocks=keep.blocks + gone.blocks, children=keep.children + gone.children)
        tree = replace_section(tree, absorbed, None)
        tree = replace_section(tree, keeper, new_keep)
    return finalize(tree, remap), tokenize(gone.heading_text)


def _diversity(sec: Section, sim) -> float:
    texts = [b.plain_text for b in sec.blocks]
    pairs = [(a, b) for i, a in enumerate(texts) for b in texts[i + 1 :]]
    if not pairs:
        return 0.0
    return 1.0 - math.fsum(sim(a, b) for a, b in pairs) / len(pairs)


def _generated_heading(blocks: Sequence[Block], idf: IdfTable) -> str:
    text = " ".join(b.plain_text for b in blocks)
    terms = _tfidf_terms(text, idf, 2)
    surface = {}
    for tok in tokenize(text):
        surface.setdefault(lemmatize(tok), tok)
    words = [surface.get(t, t) for t in terms] or ["continued"]
    return " ".join(w[:1].upper() + w[1:] for w in words)


def _split(tree: DocumentTree, path: Path, at: int, idf: IdfTable) -> tuple[DocumentTree, str]:
    sec = get_section(tree, path)
    heading = _generated_heading(sec.blocks[at:], idf)
    child = Section(heading, sec.level + 1, sec.blocks[at:], ())
    new = dataclasses.replace(sec, blocks=sec.blocks[:at], children=(child,) + sec.children)
    return finalize(replace_section(tree, path, new)), heading


def _section_graph(tree: DocumentTree) -> tuple[list[Section], list[set[int]]]:
    """Undirected graph over sections (node 0 is the document root)."""
    paths = section_paths(tree)
    index = {p: k + 1 for k, (p, _) in enumerate(paths)}
    anchors = {s.anchor: k + 1 for k, (_, s) in enumerate(paths)}
    adj: list[set[int]] = [set() for _ in range(len(paths) + 1)]
    for p, sec in paths:
        me = index[p]
        parent = index[p[:-1]] if len(p) > 1 else 0
        adj[me].add(parent)
        adj[parent].add(me)
        for block in sec.blocks:
            if block.kind is BlockKind.CODE:
                continue
            for u in block.units:
                for span in u.spans:
                    if span.is_internal_link and span.link_target in anchors:
                        other = anchors[span.link_target]
                        if other != me:
                            adj[me].add(other)
                            adj[other].add(me)
    return [s for _, s in paths], adj


def _distances(adj: list[set[int]], src: int) -> list[int]:
    dist = [-1] * len(adj)
    dist[src] = 0
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for w in sorted(adj[v]):
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def average_path_length(tree: DocumentTree) -> float:
    """Mean shortest path between pairs of sections in the section graph."""
    sections, adj = _section_graph(tree)
    total = pairs = 0
    for a in range(1, len(adj)):
        dist = _distances(adj, a)
        for b in range(a + 1, len(adj)):
            if dist[b] > 0:
                total += dist[b]
                pairs += 1
    return total / pairs if pairs else 0.0


def _link_density(tree: DocumentTree) -> tuple[int, int]:
    blocks = list(tree.iter_blocks())
    return sum(b.link_count for b in blocks), len(blocks)


def _macro(run: _Run, tree: DocumentTree) -> DocumentTree:
    cfg = run.config
    targets = cfg.targets
    passes = 0
    if not tree.sections:
        run.note("macro", "noop", "document", "no sections")
        return tree

    # 1. depth: merge (too deep) or split (too shallow) until the rounded target
    goal = max(1, round_half_up(targets.value("d_h")))
    blocked: set[tuple] = set()
    while passes < cfg.max_passes:
        depth = max_depth(tree)
        if depth == goal:
            break
        if depth > goal:
            cands = []
            for keeper, absorbed, rel in _merge_candidates(tree, depth):
                a, b = get_section(tree, keeper), get_section(tree, absorbed)
                key = ("merge", a.anchor, b.anchor, digest(a.own_text() + "\x00" + b.own_text()))
                if key not in blocked:
                    cands.append((run.sim(_section_text(a), _section_text(b)), keeper, absorbed, rel, key))
            if not cands:
                run.note("macro", "merge", "document", "no feasible merge", {"depth": depth, "goal": goal})
                break
            order = sorted(range(len(cands)), key=lambda k: (-cands[k][0], k))
            score, keeper, absorbed, rel, key = cands[order[0]]
            before = get_section(tree, keeper)
            gone = get_section(tree, absorbed)
            after, dropped = _merge(tree, keeper, absorbed, rel)
            passes += 1
            ok = run.attempt(
                "macro", "merge", f"{before.anchor}+{gone.anchor}", tree, after,
                serialize(tree), serialize(after),
                {"similarity": score, "relation": rel, "dropped_heading_tokens": dropped},
            )
            if ok:
                tree = after
            else:
                blocked.add(key)
        else:
            cands = []
            for path, sec in section_paths(tree):
                if sec.level != depth or len(sec.blocks) < 2:
                    continue
                key = ("split", sec.anchor, digest(sec.own_text()))
                if key not in blocked:
                    cands.append((_diversity(sec, run.sim), path, key))
            if not cands:
                run.note("macro", "split", "document", "no feasible split", {"depth": depth, "goal": goal})
                break
            order = sorted(range(len(cands)), key=lambda k: (-cands[k][0], k))
            div, path, key = cands[order[0]]
            sec = get_section(tree, path)
            texts = [b.plain_text for b in sec.blocks]
            gaps = [
                (run.sim(" ".join(texts[:k]), " ".join(texts[k:])), k) for k in range(1, len(texts))
            ]
            _, at = min(gaps)
            after, heading = _split(tree, path, at, run.idf)
            passes += 1
            ok = run.attempt(
                "macro", "split", f"{sec.anchor}@{at}", tree, after,
                render_section(sec), render_section(get_section(after, path)),
                {"diversity": div, "added_heading_tokens": tokenize(heading)},
            )
            if ok:
                tree = after
            else:
                blocked.add(key)

    # 2. rebalance section sizes by whole-block moves between adjacent siblings
    while passes < cfg.max_passes:
        paths = section_paths(tree)
        counts = [s.word_count for _, s in paths]
        base_var = _variance(counts)
        best = None
        for k, (path, a) in enumerate(paths):
            if a.children:
                continue
            nxt = path[:-1] + (path[-1] + 1,)
            j = next((m for m, (p, _) in enumerate(paths) if p == nxt), None)
            if j is None:
                continue
            b = paths[j][1]
            moves = []
            if len(a.blocks) > 1:
                moves.append(("forward", a.blocks[:-1], (a.blocks[-1],) + b.blocks))
            if len(b.blocks) > 1:
                moves.append(("back", a.blocks + (b.blocks[0],), b.blocks[1:]))
            for direction, a_blocks, b_blocks in moves:
                new_counts = list(counts)
                new_counts[k] = sum(x.word_count for x in a_blocks)
                new_counts[j] = sum(x.word_count for x in b_blocks)
                gain = base_var - _variance(new_counts)
                if gain <= 1e-9:
                    continue
                a2 = dataclasses.replace(a, blocks=a_blocks)
                b2 = dataclasses.replace(b, blocks=b_blocks)
                coherence = run.sim(_section_text(a2), _section_text(b2))
                if coherence <= cfg.rebalance_coherence:
                    continue
                key = ("move", a.anchor, b.anchor, direction, digest(a.own_text() + b.own_text()))
                if key in blocked:
                    continue
                if best is None or gain > best[0] + 1e-12:
                    best = (gain, path, nxt, a2, b2, direction, coherence, key)
        if best is None:
            break
        gain, pa, pb, a2, b2, direction, coherence, key = best
        after = finalize(replace_section(replace_section(tree, pa, a2), pb, b2))
        passes += 1
        ok = run.attempt(
            "macro", "rebalance", f"{a2.anchor}->{b2.anchor}" if direction == "forward" else f"{b2.anchor}->{a2.anchor}",
            tree, after, serialize(tree), serialize(after),
            {"variance_reduction": gain, "adjacent_similarity": coherence},
        )
        if ok:
            tree = after
        else:
            blocked.add(key)

    # 3. internal links between similar, distant sections
    lo, hi = targets.bounds("L_d")
    links, blocks = _link_density(tree)
    while passes < cfg.max_passes and blocks and links / blocks < lo:
        if (links + 1) / blocks > hi + 1e-12:
            run.note("macro", "link", "document", "next link would exceed the link-density ceiling")
            break
        sections, adj = _section_graph(tree)
        cands = []
        for a in range(1, len(adj)):
            dist = _distances(adj, a)
            for b in range(a + 1, len(adj)):
                if 0 <= dist[b] <= 2:
                    continue
                s = run.sim(_section_text(sections[a - 1]), _section_text(sections[b - 1]))
                if s > cfg.link_similarity:
                    cands.append((s, a, b))
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        placed = False
        for s, a, b in cands:
            for src, dst in ((a, b), (b, a)):
                after = _insert_link(tree, sections[src - 1], sections[dst - 1], run)
                if after is None:
                    continue
                key = ("link", sections[src - 1].anchor, sections[dst - 1].anchor)
                if key in blocked:
                    continue
                passes += 1
                ok = run.attempt(
                    "macro", "link", f"{sections[src - 1].anchor}->{sections[dst - 1].anchor}",
                    tree, after, render_section(sections[src - 1]),
                    render_section(next(x for x in after.iter_sections() if x.anchor == sections[src - 1].anchor)),
                    {"similarity": s},
                )
                if ok:
                    tree = after
                    placed = True
                else:
                    blocked.add(key)
                break
            if placed or passes >= cfg.max_passes:
                break
        if not placed:
            break
        links, blocks = _link_density(tree)
    return tree


def render_section(sec: Section) -> str:
    head = ("#" * sec.level + " " + sec.heading).rstrip()
    return "\n\n".join([head] + [render_block(b) for b in sec.blocks])


def _insert_link(tree: DocumentTree, src: Section, dst: Section, run: _Run) -> DocumentTree | None:
    """Wrap the first word of ``src`` that names one of ``dst``'s top terms."""
    terms = set(_tfidf_terms(_section_text(dst), run.idf, 5))
    path = next(p for p, s in section_paths(tree) if s.anchor == src.anchor)
    blocks = list(src.blocks)
    for bi, block in enumerate(blocks):
        if block.kind is not BlockKind.PARAGRAPH:
            continue
        for si, sent in enumerate(block.sentences):
            emph = sent.token_emphasis()
            linked = _linked_tokens(sent)
            for ti, (tok, e) in enumerate(emph):
                if e is Emphasis.NONE and ti not in linked and is_content(tok) and lemmatize(tok) in terms:
                    sents = list(block.sentences)
                    sents[si] = _link_token(sent, ti, dst.anchor)
                    blocks[bi] = dataclasses.replace(block, sentences=tuple(sents))
                    return finalize(set_blocks(tree, path, blocks))
    return None


def _linked_tokens(sent: Sentence) -> set[int]:
    out = set()
    pos = 0
    ranges = []
    for span in sent.spans:
        if span.is_internal_link:
            ranges.append((pos, pos + len(span.text)))
        pos += len(span.text)
    for k, (start, _, _) in enumerate(token_spans(sent.text)):
        if any(a <= start < b for a, b in ranges):
            out.add(k)
    return out


# ---------------------------------------------------------------------------
# meso level


def _sentences_text(sents: Sequence[Sentence]) -> str:
    return " ".join(s.text for s in sents)


def chunk_coherence(sents: Sequence[Sentence], sim) -> float:
    """Mean similarity of each sentence to the chunk it belongs to."""
    whole = _sentences_text(sents)
    return math.fsum(sim(s.text, whole) for s in sents) / len(sents) if sents else 1.0


def _group_chain(blocks: Sequence[Block], sim) -> float:
    """Adjacent-block coherence of one section's prose blocks."""
    texts = [b.plain_text for b in blocks if b.kind is not BlockKind.CODE]
    if len(texts) < 2:
        return 1.0
    return math.fsum(sim(a, b) for a, b in zip(texts, texts[1:])) / (len(texts) - 1)


def topic_boundaries(sents: Sequence[Sentence], sim) -> list[tuple[float, int]]:
    """Depth scores of cohesion valleys over two-sentence windows.

    Gap ``g`` sits between sentences ``g-1`` and ``g``. Returns
    ``(depth, g)`` for every gap that is a strict local valley.
    """
    n = len(sents)
    if n < 2:
        return []
    cohesion = {}
    for g in range(1, n):
        left = _sentences_text(sents[max(0, g - 2) : g])
        right = _sentences_text(sents[g : g + 2])
        cohesion[g] = sim(left, right)
    out = []
    for g in range(1, n):
        c = cohesion[g]
        lp = c
        i = g - 1
        while i >= 1 and cohesion[i] >= lp:
            lp = cohesion[i]
            i -= 1
        rp = c
        i = g + 1
        while i <= n - 1 and cohesion[i] >= rp:
            rp = cohesion[i]
            i += 1
        depth = (lp - c) + (rp - c)
        if depth > 1e-12:
            out.append((depth, g))
    return out


def choose_paragraph_split(sents: Sequence[Sentence], min_words: float, sim) -> tuple[int, str] | None:
    """Sentence gap to split a long paragraph at, or ``None``.

    Both halves must keep at least ``min_words`` words. The deepest cohesion
    valley wins; without one, the least similar adjacent sentence pair.
    """
    words = [len(s.tokens) for s in sents]
    total = sum(words)
    prefix = 0
    valid = set()
    for g in range(1, len(sents)):
        prefix += words[g - 1]
        if prefix >= min_words and total - prefix >= min_words:
            valid.add(g)
    if not valid:
        return None
    valleys = [(d, g) for d, g in topic_boundaries(sents, sim) if g in valid]
    if valleys:
        best = max(valleys, key=lambda x: (x[0], -x[1]))
        return best[1], "cohesion-valley"
    pairs = [(sim(sents[g - 1].text, sents[g].text), g) for g in sorted(valid)]
    return min(pairs)[1], "least-cohesive-pair"


def _enumeration_cue(sent: Sentence, leads: Counter) -> bool:
    toks = sent.tokens
    if not toks:
        return False
    first = toks[0]
    return first in _ENUM_CUES or first[0].isdigit() or leads[first] > 1 or ";" in sent.text


def conversion_score(block: Block, weights: Sequence[float]) -> tuple[float, dict]:
    """Convertibility of a paragraph into a list."""
    sents = block.sentences
    leads = Counter(s.tokens[0] for s in sents if s.tokens)
    parse = sum(1 for s in sents if _enumeration_cue(s, leads)) / len(sents)
    tokens = [t for s in sents for t in s.tokens]
    density = 0.0
    if tokens:
        lemmas = {lemmatize(t) for t in tokens if is_content(t)}
        density = (len(lemmas) + sum(1 for t in tokens if t[0].isdigit())) / len(tokens)
    disruption = sum(1 for s in sents if s.tokens and s.tokens[0] in _CONNECTIVES) / len(sents)
    w1, w2, w3 = weights
    score = w1 * parse + w2 * density - w3 * disruption
    return score, {"parseability": parse, "density": density, "disruption": disruption}


def to_list(block: Block) -> Block:
    items = tuple(render_spans(s.spans) for s in block.sentences)
    return Block(BlockKind.LIST, items=items)


def _format_density(tree: DocumentTree) -> tuple[int, int]:
    blocks = list(tree.iter_blocks())
    return sum(1 for b in blocks if b.kind is not BlockKind.PARAGRAPH), len(blocks)


def _meso(run: _Run, tree: DocumentTree) -> DocumentTree:
    cfg = run.config
    targets = cfg.targets
    hi_len = targets.paragraph_length + cfg.paragraph_tolerance
    lo_len = targets.paragraph_length - cfg.paragraph_tolerance
    passes = 0
    blocked: set[str] = set()

    # 1. paragraph lengths
    while passes < cfg.max_passes:
        edit = None
        for key, blocks in block_groups(tree):
            for bi, block in enumerate(blocks):
                if block.kind is not BlockKind.PARAGRAPH:
                    continue
                tag = digest(render_block(block))
                if tag in blocked:
                    continue
                if block.word_count > hi_len:
                    edit = ("split", key, bi, tag)
                    break
                if block.word_count < lo_len:
                    edit = ("merge", key, bi, tag)
                    break
            if edit:
                break
        if edit is None:
            break
        kind, key, bi, tag = edit
        blocks = list(group_blocks(tree, key))
        block = blocks[bi]
        if kind == "split":
            choice = choose_paragraph_split(block.sentences, lo_len, run.sim)
            if choice is None:
                blocked.add(tag)
                run.note("meso", "paragraph-split", _where(tree, key, bi), "no split leaves both halves long enough")
                continue
            g, method = choice
            left, right = block.sentences[:g], block.sentences[g:]
            new_blocks = [Block(BlockKind.PARAGRAPH, sentences=left), Block(BlockKind.PARAGRAPH, sentences=right)]
            split_blocks = blocks[:bi] + new_blocks + blocks[bi + 1 :]
            chain_before = _group_chain(blocks, run.sim)
            chain_after = _group_chain(split_blocks, run.sim)
            if not (chain_after > cfg.split_coherence or chain_after >= chain_before - 1e-12):
                blocked.add(tag)
                run.note("meso", "paragraph-split", _where(tree, key, bi), "split lowers chain coherence",
                         {"chain_before": chain_before, "chain_after": chain_after, "method": method})
                continue
            blocks = split_blocks
            detail = {"gap": g, "method": method, "chain_before": chain_before, "chain_after": chain_after}
        else:
            options = []
            for nb in (bi - 1, bi + 1):
                if 0 <= nb < len(blocks) and blocks[nb].kind is BlockKind.PARAGRAPH:
                    if blocks[nb].word_count + block.word_count <= hi_len:
                        options.append((run.sim(block.plain_text, blocks[nb].plain_text), -nb, nb))
            if not options:
                blocked.add(tag)
                continue
            s, _, nb = max(options)
            if s <= cfg.merge_similarity:
                blocked.add(tag)
                run.note("meso", "paragraph-merge", _where(tree, key, bi), "neighbour not similar enough",
                         {"similarity": s})
                continue
            first, second = sorted((bi, nb))
            merged = Block(BlockKind.PARAGRAPH, sentences=blocks[first].sentences + blocks[second].sentences)
            blocks[first : second + 1] = [merged]
            detail = {"with": nb, "similarity": s}
        after = finalize(set_blocks(tree, key, blocks))
        passes += 1
        region_before = render_block(block)
        region_after = "\n\n".join(render_block(b) for b in blocks[max(0, bi - 1) : bi + 2])
        if run.attempt("meso", f"paragraph-{kind}", _where(tree, key, bi), tree, after,
                       region_before, region_after, detail):
            tree = after
        else:
            blocked.add(tag)

    # 2. format diversity through prose-to-list conversion
    target_fd = targets.value("F_d")
    _, fd_max = targets.bounds("F_d")
    blocked = set()
    while passes < cfg.max_passes:
        structured, total = _format_density(tree)
        if not total or structured / total >= target_fd:
            break
        cands = []
        order = 0
        for key, blocks in block_groups(tree):
            for bi, block in enumerate(blocks):
                if block.kind is BlockKind.PARAGRAPH and len(block.sentences) >= 2:
                    tag = digest(render_block(block))
                    if tag in blocked:
                        continue
                    score, parts = conversion_score(block, cfg.convert_weights)
                    if score > 0:
                        cands.append((-score, order, key, bi, parts, tag))
                    order += 1
        if not cands:
            break
        cands.sort(key=lambda c: (c[0], c[1]))
        neg, _, key, bi, parts, tag = cands[0]
        if (structured + 1) / total > fd_max + 1e-12:
            run.note("meso", "list-conversion", _where(tree, key, bi), "conversion would exceed the format ceiling")
            break
        blocks = list(group_blocks(tree, key))
        block = blocks[bi]
        blocks[bi] = to_list(block)
        after = finalize(set_blocks(tree, key, blocks))
        passes += 1
        if run.attempt("meso", "list-conversion", _where(tree, key, bi), tree, after,
                       render_block(block), render_block(blocks[bi]), {"score": -neg, **parts}):
            tree = after
        else:
            blocked.add(tag)
    return tree


# ---------------------------------------------------------------------------
# micro level


@dataclass(frozen=True)
class _SentenceRef:
    key: GroupKey
    block: int
    sentence: int
    order: int


def _paragraph_sentences(tree: DocumentTree) -> list[tuple[_SentenceRef, Sentence, int, int]]:
    """Paragraph sentences with their index and count within their section."""
    out = []
    order = 0
    for key, blocks in block_groups(tree):
        sents = [
            (bi, si, s)
            for bi, b in enumerate(blocks)
            if b.kind is BlockKind.PARAGRAPH
            for si, s in enumerate(b.sentences)
        ]
        for k, (bi, si, s) in enumerate(sents):
            out.append((_SentenceRef(key, bi, si, order), s, k, len(sents)))
            order += 1
    return out


def importance_scores(tree: DocumentTree, idf: IdfTable, sim, weights: Sequence[float] = (0.5, 0.3, 0.2),
                      edge: float = 0.15) -> list[tuple[_SentenceRef, Sentence, float]]:
    """Sentence importance: TF-IDF mass, degree centrality, position in section."""
    sents = _paragraph_sentences(tree)
    n = len(sents)
    tfidf = [math.fsum(idf.idf(l) for l in content_lemmas(s.tokens) if not l[0].isdigit()) for _, s, _, _ in sents]
    top = max(tfidf, default=0.0)
    degree = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if sim(sents[i][1].text, sents[j][1].text) >= edge:
                degree[i] += 1
                degree[j] += 1
    w1, w2, w3 = weights
    out = []
    for i, (ref, s, k, m) in enumerate(sents):
        t = tfidf[i] / top if top > 0 else 0.0
        c = degree[i] / (n - 1) if n > 1 else 0.0
        p = 1.0 - k / (m - 1) if m > 1 else 1.0
        out.append((ref, s, w1 * t + w2 * c + w3 * p))
    return out


def rank_sentences(tree: DocumentTree, idf: IdfTable, sim, weights=(0.5, 0.3, 0.2), edge=0.15):
    scored = importance_scores(tree, idf, sim, weights, edge)
    return sorted(scored, key=lambda x: (-x[2], x[0].order))


def _emphasis_counts(tree: DocumentTree) -> tuple[int, int]:
    emphasized = total = 0
    for block in tree.iter_blocks():
        for u in block.units:
            for _, e in u.token_emphasis():
                total += 1
                emphasized += e is not Emphasis.NONE
    return emphasized, total


def _marks_for(sent: Sentence, wanted: Callable[[int, str], bool], limit: int) -> dict[int, Emphasis]:
    """Emphasis style for wanted tokens: bold at weight >= 1.5, italic otherwise."""
    boundary = sent.position_class.value == "section_boundary"
    linked = _linked_tokens(sent)
    marks: dict[int, Emphasis] = {}
    for k, (tok, e) in enumerate(sent.token_emphasis()):
        if len(marks) >= limit:
            break
        if e is not Emphasis.NONE or k in linked or not wanted(k, tok):
            continue
        weight = 2.0 if k == 0 else (1.5 if boundary else 1.0)
        marks[k] = Emphasis.BOLD if weight >= 1.5 else Emphasis.ITALIC
    return marks


def _set_sentence(tree: DocumentTree, ref: _SentenceRef, new: Sentence) -> DocumentTree:
    blocks = list(group_blocks(tree, ref.key))
    block = blocks[ref.block]
    sents = list(block.sentences)
    sents[ref.sentence] = new
    blocks[ref.block] = dataclasses.replace(block, sentences=tuple(sents))
    return set_blocks(tree, ref.key, blocks)


def split_long_sentence(sent: Sentence) -> tuple[Sentence, Sentence] | None:
    """Split at ``, and|but|or|so|yet`` nearest the middle, keeping every token.

    The comma becomes a period and the conjunction is capitalized so the
    result re-parses as two sentences.
    """
    text = sent.text
    spans = sent.spans
    mid = len(text) / 2
    options = sorted(_CONJUNCTION_SPLIT_RE.finditer(text), key=lambda m: (abs(m.start() - mid), m.start()))
    for m in options:
        comma = m.start()
        conj = m.start(1)
        # both edits must fall inside unstyled, unlinked spans
        if not _plain_at(spans, comma) or not _plain_at(spans, conj):
            continue
        left = slice_spans(spans, 0, comma)
        right = slice_spans(spans, conj, len(text))
        left = _append_plain(left, ".")
        right = _capitalize_first(right)
        candidate = "".join(s.text for s in left) + " " + "".join(s.text for s in right)
        if len(sentence_boundaries(candidate)) != 2:
            continue
        return Sentence(left), Sentence(right)
    return None


def _plain_at(spans: Sequence[InlineSpan], pos: int) -> bool:
    cur = 0
    for s in spans:
        if cur <= pos < cur + len(s.text):
            return s.emphasis is Emphasis.NONE and not s.is_internal_link
        cur += len(s.text)
    return False


def _append_plain(spans: tuple[InlineSpan, ...], text: str) -> tuple[InlineSpan, ...]:
    return _merge_spans(list(spans) + [InlineSpan(text)])


def _capitalize_first(spans: tuple[InlineSpan, ...]) -> tuple[InlineSpan, ...]:
    first = spans[0]
    return (dataclasses.replace(first, text=first.text[:1].upper() + first.text[1:]),) + spans[1:]


def _flesch(tree: DocumentTree) -> float:
    from .features import extract_micro

    return extract_micro(tree, ())["R_e"]


def _micro(run: _Run, tree: DocumentTree) -> DocumentTree:
    cfg = run.config
    targets = cfg.targets
    e_target = targets.value("E_d")
    e_min, e_max = targets.bounds("E_d")
    passes = 0

    emphasized, total = _emphasis_counts(tree)
    ceiling = math.floor(e_max * total + 1e-9)
    if total and emphasized / total < e_target:
        ranked = rank_sentences(tree, run.idf, run.sim, cfg.importance_weights, cfg.centrality_edge)
        budget = math.floor(e_target * len(ranked) + 1e-9)
        already = sum(1 for _, s, _ in ranked if any(e is not Emphasis.NONE for _, e in s.token_emphasis()))
        todo = max(0, budget - already)

        # phase A: keywords of the top-ranked sentences
        done = 0
        for ref, _, score in ranked:
            # the last pass is kept for the top-up edit
            if done >= todo or passes >= cfg.max_passes - 1:
                break
            sent = _sentence_at(tree, ref)
            if any(e is not Emphasis.NONE for _, e in sent.token_emphasis()):
                continue
            room = ceiling - emphasized
            if room <= 0:
                run.note("micro", "emphasis", _ref_where(tree, ref), "emphasis ceiling reached")
                break
            marks = _marks_for(sent, lambda k, t: is_content(t) and lemmatize(t) in run.keyset, room)
            fallback = False
            if not marks:
                best = _tfidf_terms(sent.text, run.idf, 1)
                marks = _marks_for(sent, lambda k, t: is_content(t) and lemmatize(t) in best, 1)
                fallback = True
            if not marks:
                continue
            after = finalize(_set_sentence(tree, ref, _restyle(sent, marks)))
            passes += 1
            done += 1
            if run.attempt("micro", "emphasis", _ref_where(tree, ref), tree, after, render_spans(sent.spans),
                           render_spans(_sentence_at(after, ref).spans),
                           {"importance": score, "tokens": len(marks), "fallback_term": fallback,
                            "attention": _attention(marks, cfg)}):
                tree = after
                emphasized += len(marks)

        # phase B: top up to the feasible floor, filling already emphasized
        # sentences before touching new ones
        if total and emphasized / total < e_min and passes < cfg.max_passes:
            goal = min(ceiling, math.ceil(e_min * total - 1e-9))
            candidate = tree
            added = 0
            touched = 0
            marked = lambda s: any(e is not Emphasis.NONE for _, e in s.token_emphasis())
            order = sorted(ranked, key=lambda r: not marked(_sentence_at(tree, r[0])))
            for ref, _, _ in order:
                if emphasized + added >= goal:
                    break
                hit = False
                for wanted in (
                    lambda k, t: is_content(t) and lemmatize(t) in run.keyset,
                    lambda k, t: is_content(t),
                ):
                    sent = _sentence_at(candidate, ref)
                    marks = _marks_for(sent, wanted, goal - emphasized - added)
                    if marks:
                        candidate = _set_sentence(candidate, ref, _restyle(sent, marks))
                        added += len(marks)
                        hit = True
                touched += hit
            if added:
                candidate = finalize(candidate)
                passes += 1
                if run.attempt("micro", "emphasis-topup", "document", tree, candidate, serialize(tree),
                               serialize(candidate), {"tokens": added, "sentences": touched}):
                    tree = candidate
                    emphasized += added

    # readability: split very long sentences at coordinating conjunctions
    if _flesch(tree) < cfg.readability_floor:
        blocked: set[int] = set()
        while passes < cfg.max_passes and _flesch(tree) < cfg.readability_floor:
            target_ref = None
            for ref, sent, _, _ in _paragraph_sentences(tree):
                if len(sent.tokens) > cfg.long_sentence_words and ref.order not in blocked:
                    target_ref = (ref, sent)
                    break
            if target_ref is None:
                break
            ref, sent = target_ref
            parts = split_long_sentence(sent)
            if parts is None:
                blocked.add(ref.order)
                continue
            blocks = list(group_blocks(tree, ref.key))
            block = blocks[ref.block]
            sents = list(block.sentences)
            sents[ref.sentence : ref.sentence + 1] = list(parts)
            blocks[ref.block] = dataclasses.replace(block, sentences=tuple(sents))
            after = finalize(set_blocks(tree, ref.key, blocks))
            passes += 1
            if run.attempt("micro", "sentence-split", _ref_where(tree, ref), tree, after,
                           render_spans(sent.spans), " ".join(render_spans(p.spans) for p in parts)):
                tree = after
            else:
                blocked.add(ref.order)
    return tree


def _attention(marks: Mapping[int, Emphasis], cfg: OptimizationConfig) -> float:
    return math.fsum(cfg.emphasis_weights.get(e.value, 1.0) for e in marks.values())


def _sentence_at(tree: DocumentTree, ref: _SentenceRef) -> Sentence:
    return group_blocks(tree, ref.key)[ref.block].sentences[ref.sentence]


def _ref_where(tree: DocumentTree, ref: _SentenceRef) -> str:
    return f"{_where(tree, ref.key, ref.block)}.{ref.sentence}"


# ---------------------------------------------------------------------------
# gaps, scoring and the cascade


def level_gaps(raw: FeatureVector, tree: DocumentTree, config: OptimizationConfig) -> dict[str, float]:
    """Distance of each level's steered features from their feasible range.

    Each dimension contributes its distance outside ``[sf_min, sf_max]``
    divided by the half-width of that range; the meso gap also counts the
    share of paragraphs outside the tolerated length band and the micro gap
    any reading-ease shortfall below the configured floor.
    """
    targets = config.targets
    out = {}
    for level, dims in STEERED.items():
        parts = []
        for dim in dims:
            lo, hi = targets.bounds(dim)
            x = getattr(raw, dim)
            half = (hi - lo) / 2 if math.isfinite(hi - lo) and hi > lo else 1.0
            parts.append(max(0.0, lo - x, x - hi) / half)
        if level == "meso":
            paras = [b for b in tree.iter_blocks() if b.kind is BlockKind.PARAGRAPH]
            lo_len = targets.paragraph_length - config.paragraph_tolerance
            hi_len = targets.paragraph_length + config.paragraph_tolerance
            if paras:
                parts.append(sum(1 for b in paras if not lo_len <= b.word_count <= hi_len) / len(paras))
        if level == "micro" and raw.R_e < config.readability_floor and any(True for _ in tree.iter_blocks()):
            parts.append((config.readability_floor - raw.R_e) / max(config.readability_floor, 1.0))
        out[level] = math.sqrt(math.fsum(p * p for p in parts))
    if not tree.sections:
        out["macro"] = 0.0
    return out


@dataclass(frozen=True)
class _Outcome:
    name: str
    tree: DocumentTree
    text: str
    entries: tuple[LogEntry, ...]
    probability: float
    clean: bool
    contributed: frozenset[str]
    raw: FeatureVector


class Optimizer:
    """Runs the cascade for one configuration; reusable across documents."""

    def __init__(self, config: OptimizationConfig | None = None, stats: CorpusStats | None = None,
                 provider: SimilarityProvider | None = None,
                 profiles: Mapping[str, ArchitectureProfile] | None = None, topics: TopicModel | None = None):
        from .data import reference_stats

        self.stats = stats if stats is not None else reference_stats()
        self.provider = provider or LexicalProvider(self.stats.idf)
        self.profiles = profiles or default_profiles()
        # default targets band the unprincipled dimensions by the reference statistics
        self.config = config or OptimizationConfig(targets=compute_targets(None, self.profiles, self.stats))
        self.topics = topics or TopicModel()

    def score(self, tree: DocumentTree, keywords: Sequence[str]) -> tuple[float, FeatureVector]:
        raw = extract_all(tree, keywords, stats=self.stats, provider=self.provider, topics=self.topics)
        return predict_mixed(normalize(raw, self.stats), self.config.targets, self.profiles), raw

    def _run(self, tree: DocumentTree, levels: Sequence[str], name: str, keywords: Sequence[str],
             gaps: Mapping[str, float]) -> _Outcome:
        run = _Run(tree, self.config, self.provider, self.stats.idf, self.topics, keywords, name)
        cur = tree
        contributed = set()
        steps = {"macro": _macro, "meso": _meso, "micro": _micro}
        for level in LEVEL_NAMES:
            if level not in levels:
                continue
            if gaps[level] <= self.config.theta(level):
                continue
            nxt = steps[level](run, cur)
            if serialize(nxt) != serialize(cur):
                contributed.add(level)
            cur = nxt
        text = serialize(cur)
        p, raw = self.score(cur, keywords)
        in_bounds = all(
            self.config.targets.bounds(d)[0] - 1e-12 <= getattr(raw, d) <= self.config.targets.bounds(d)[1] + 1e-12
            for d in POSTCONDITION
        )
        needed = [lv for lv in levels if gaps[lv] > self.config.theta(lv)]
        clean = in_bounds and not any(run.rejected.get(lv) for lv in needed)
        return _Outcome(name, cur, text, tuple(run.entries), p, clean, frozenset(contributed), raw)

    def optimize(self, tree: DocumentTree) -> tuple[DocumentTree, TransformLog]:
        cfg = self.config
        keywords = list(cfg.keywords) if cfg.keywords is not None else derive_keywords(tree, self.stats.idf)
        p0, raw0 = self.score(tree, keywords)
        gaps = level_gaps(raw0, tree, cfg)
        active = [lv for lv in LEVEL_NAMES if lv not in cfg.skip_levels]
        base_text = serialize(tree)

        outcomes = [self._run(tree, active, "full", keywords, gaps)]
        if not outcomes[0].clean or outcomes[0].probability <= p0:
            for name, levels in (("partial", ("meso", "micro")), ("minimal", ("micro",))):
                levels = [lv for lv in levels if lv in active]
                if levels and levels != active:
                    outcomes.append(self._run(tree, levels, name, keywords, gaps))
        identity = _Outcome("identity", tree, base_text, (), p0, True, frozenset(), raw0)
        outcomes.append(identity)

        best = outcomes[0]
        for o in outcomes[1:]:
            if o.probability > best.probability:
                best = o
        if best.text == base_text:
            best = dataclasses.replace(identity, entries=best.entries, name=best.name)
            mode = "identity"
        elif best.name == "full" and best.clean:
            mode = "full"
        elif best.contributed == frozenset({"micro"}):
            mode = "minimal"
        else:
            mode = "partial"

        out = best.tree if mode != "identity" else tree
        mapping = tuple(align_units(tree, out))
        verdict = check_preservation(tree, out, mapping, provider=self.provider,
                                     thresholds=cfg.thresholds, topics=self.topics)
        entries = tuple(e for o in outcomes for e in o.entries)
        log = TransformLog(
            entries, mode, mapping, p0, best.probability, verdict, gaps,
            {o.name: o.probability for o in outcomes}, best.name,
        )
        return out, log


def optimize(tree: DocumentTree, config: OptimizationConfig | None = None, *, stats: CorpusStats | None = None,
             provider: SimilarityProvider | None = None,
             profiles: Mapping[str, ArchitectureProfile] | None = None) -> tuple[DocumentTree, TransformLog]:
    """Optimize one document; returns the output tree and its transform log."""
    return Optimizer(config, stats, provider, profiles).optimize(tree)


def _level_run(level: str, tree: DocumentTree, config: OptimizationConfig, keywords, stats, provider):
    from .data import reference_stats

    stats = stats if stats is not None else reference_stats()
    provider = provider or LexicalProvider(stats.idf)
    if keywords is None:
        keywords = config.keywords if config.keywords is not None else derive_keywords(tree, stats.idf)
    run = _Run(tree, config, provider, stats.idf, TopicModel(), list(keywords), level)
    out = {"macro": _macro, "meso": _meso, "micro": _micro}[level](run, tree)
    return out, tuple(run.entries)


def optimize_macro(tree: DocumentTree, targets: TargetProfile | None = None, *, config: OptimizationConfig | None = None,
                   stats: CorpusStats | None = None, provider: SimilarityProvider | None = None):
    """Macro edits only (depth, rebalancing, links); returns ``(tree, entries)``."""
    config = _with_targets(config, targets)
    return _level_run("macro", tree, config, None, stats, provider)


def optimize_meso(tree: DocumentTree, targets: TargetProfile | None = None, *, config: OptimizationConfig | None = None,
                  stats: CorpusStats | None = None, provider: SimilarityProvider | None = None):
    """Meso edits only (paragraph lengths, list conversion)."""
    config = _with_targets(config, targets)
    return _level_run("meso", tree, config, None, stats, provider)


def optimize_micro(tree: DocumentTree, targets: TargetProfile | None = None, keywords: Iterable[str] | None = None, *,
                   config: OptimizationConfig | None = None, stats: CorpusStats | None = None,
                   provider: SimilarityProvider | None = None):
    """Micro edits only (emphasis, readability splits)."""
    config = _with_targets(config, targets)
    return _level_run("micro", tree, config, list(keywords) if keywords is not None else None, stats, provider)


def _with_targets(config: OptimizationConfig | None, targets: TargetProfile | None) -> OptimizationConfig:
    config = config or OptimizationConfig()
    return dataclasses.replace(config, targets=targets) if targets is not None else config
