"""Markdown document model: parse into a typed section tree, serialize back.

The dialect is a CommonMark subset: ATX headings, paragraphs, bullet and
ordered lists, pipe tables, fenced code, block quotes, ``**bold**``,
``*italic*``, ``<u>underline</u>`` and internal ``[text](#anchor)`` links.
Serialization emits one canonical form, and parsing that form reproduces
the same tree.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

from .errors import InputTooLarge, MalformedInput
from .text import slugify, strip_markup, token_spans

log = logging.getLogger(__name__)

DEFAULT_MAX_BYTES = 10 * 1024 * 1024


class Emphasis(str, enum.Enum):
    NONE = "none"
    BOLD = "bold"
    ITALIC = "italic"
    UNDERLINE = "underline"


class Position(str, enum.Enum):
    SENTENCE_INITIAL = "sentence_initial"
    SECTION_BOUNDARY = "section_boundary"
    STANDARD = "standard"


class BlockKind(str, enum.Enum):
    PARAGRAPH = "paragraph"
    LIST = "list"
    TABLE = "table"
    CODE = "code"
    QUOTE = "quote"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    location: str = ""

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "location": self.location}


@dataclass(frozen=True)
class InlineSpan:
    text: str
    emphasis: Emphasis = Emphasis.NONE
    is_internal_link: bool = False
    link_target: str | None = None

    def __post_init__(self):
        if self.is_internal_link != (self.link_target is not None):
            raise ValueError("link_target must be set iff is_internal_link")

    def same_style(self, other: InlineSpan) -> bool:
        return (
            self.emphasis == other.emphasis
            and self.is_internal_link == other.is_internal_link
            and self.link_target == other.link_target
        )


@dataclass(frozen=True)
class Sentence:
    """A run of inline spans; ``text`` is the concatenation of span texts.

    ``position_class`` is ``section_boundary`` for the first and last text
    unit of a section and ``standard`` otherwise. The first token of every
    sentence is additionally weighted as sentence-initial by the feature
    extractor.
    """

    spans: tuple[InlineSpan, ...]
    position_class: Position = Position.STANDARD

    @property
    def text(self) -> str:
        return "".join(s.text for s in self.spans)

    @cached_property
    def tokens(self) -> list[str]:
        return [t for _, _, t in token_spans(self.text)]

    def token_emphasis(self) -> list[tuple[str, Emphasis]]:
        """Each token paired with the emphasis of the span it starts in."""
        bounds = []
        pos = 0
        for span in self.spans:
            bounds.append((pos, pos + len(span.text), span.emphasis))
            pos += len(span.text)
        out = []
        k = 0
        for start, _, tok in token_spans(self.text):
            while k < len(bounds) - 1 and start >= bounds[k][1]:
                k += 1
            out.append((tok, bounds[k][2] if bounds else Emphasis.NONE))
        return out

    @property
    def link_count(self) -> int:
        return sum(1 for s in self.spans if s.is_internal_link)


@dataclass(frozen=True)
class Block:
    """One block of body content.

    ``sentences`` is populated for paragraphs, ``items`` for lists, ``rows``
    for tables (first row is the header) and ``text`` for code and quotes.
    List items, table cells and quote text hold canonical inline Markdown.
    """

    kind: BlockKind
    sentences: tuple[Sentence, ...] = ()
    items: tuple[str, ...] = ()
    rows: tuple[tuple[str, ...], ...] = ()
    text: str = ""
    ordered: bool = False
    lang: str = ""

    def __post_init__(self):
        kind = self.kind
        if bool(self.sentences) and kind is not BlockKind.PARAGRAPH:
            raise ValueError("sentences only belong to paragraphs")
        if bool(self.items) and kind is not BlockKind.LIST:
            raise ValueError("items only belong to lists")
        if bool(self.rows) and kind is not BlockKind.TABLE:
            raise ValueError("rows only belong to tables")
        if self.text and kind not in (BlockKind.CODE, BlockKind.QUOTE):
            raise ValueError("text only belongs to code and quote blocks")

    @cached_property
    def units(self) -> tuple[Sentence, ...]:
        """Sentence-like text units, the grain used by features and checks."""
        if self.kind is BlockKind.PARAGRAPH:
            return self.sentences
        if self.kind is BlockKind.LIST:
            return tuple(Sentence(parse_inline(item)) for item in self.items)
        if self.kind is BlockKind.TABLE:
            units = []
            for row in self.rows:
                spans: list[InlineSpan] = []
                for j, cell in enumerate(row):
                    if j:
                        spans.append(InlineSpan(" "))
                    spans.extend(parse_inline(cell))
                units.append(Sentence(_merge_spans(spans)))
            return tuple(units)
        if self.kind is BlockKind.QUOTE:
            return tuple(_split_spans(parse_inline(self.text)))
        return (Sentence((InlineSpan(self.text),)),) if self.text else ()

    @cached_property
    def word_count(self) -> int:
        return sum(len(u.tokens) for u in self.units)

    @property
    def plain_text(self) -> str:
        return " ".join(u.text for u in self.units)

    @property
    def link_count(self) -> int:
        if self.kind is BlockKind.CODE:
            return 0
        return sum(u.link_count for u in self.units)


@dataclass(frozen=True)
class Section:
    heading: str
    level: int
    blocks: tuple[Block, ...] = ()
    children: tuple[Section, ...] = ()
    anchor: str = ""

    @property
    def word_count(self) -> int:
        return sum(b.word_count for b in self.blocks)

    @property
    def heading_text(self) -> str:
        return strip_markup(self.heading)

    def own_text(self) -> str:
        """Heading plus own (not descendant) block text."""
        return " ".join([self.heading_text] + [b.plain_text for b in self.blocks])


@dataclass(frozen=True)
class DocumentTree:
    sections: tuple[Section, ...] = ()
    preamble: tuple[Block, ...] = ()
    source_id: str = ""
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)

    @property
    def title(self) -> str:
        for sec in self.iter_sections():
            if sec.level == 1:
                return sec.heading_text
        return ""

    def iter_sections(self) -> Iterator[Section]:
        """All sections in document order."""
        stack = list(reversed(self.sections))
        while stack:
            sec = stack.pop()
            yield sec
            stack.extend(reversed(sec.children))

    def iter_blocks(self) -> Iterator[Block]:
        yield from self.preamble
        for sec in self.iter_sections():
            yield from sec.blocks

    def block_groups(self) -> list[tuple[Block, ...]]:
        """Body blocks grouped by owning section; the preamble comes first."""
        groups = [self.preamble] if self.preamble else []
        groups.extend(sec.blocks for sec in self.iter_sections())
        return groups

    def with_diagnostics(self, extra: list[Diagnostic]) -> DocumentTree:
        return dataclasses.replace(self, diagnostics=self.diagnostics + tuple(extra))


# ---------------------------------------------------------------------------
# inline parsing

_INLINE_RE = re.compile(
    r"(?P<code>`[^`\n]*`)"
    r"|<u>(?P<u>.+?)</u>"
    r"|\*\*(?P<b>(?=\S).+?(?<=\S))\*\*"
    r"|__(?P<b2>(?=\S).+?(?<=\S))__"
    r"|\*(?P<i>(?=[^\s*])[^*]*?(?<=[^\s*]))\*"
    r"|(?<!\w)_(?P<i2>(?=[^\s_])[^_]*?(?<=[^\s_]))_(?!\w)"
    r"|\[(?P<lt>[^\]]+)\]\(#(?P<la>[^)\s]+)\)"
)


def _merge_spans(spans: list[InlineSpan]) -> tuple[InlineSpan, ...]:
    out: list[InlineSpan] = []
    for span in spans:
        if not span.text:
            continue
        if out and out[-1].same_style(span):
            out[-1] = dataclasses.replace(out[-1], text=out[-1].text + span.text)
        else:
            out.append(span)
    return tuple(out)


def parse_inline(md: str) -> tuple[InlineSpan, ...]:
    """Split inline Markdown into styled spans (nesting is flattened)."""
    spans: list[InlineSpan] = []
    pos = 0
    for m in _INLINE_RE.finditer(md):
        if m.start() > pos:
            spans.append(InlineSpan(md[pos : m.start()]))
        if m.group("code") is not None:
            spans.append(InlineSpan(m.group("code")))
        elif m.group("u") is not None:
            spans.append(InlineSpan(strip_markup(m.group("u")), Emphasis.UNDERLINE))
        elif m.group("b") is not None or m.group("b2") is not None:
            inner = m.group("b") if m.group("b") is not None else m.group("b2")
            spans.append(InlineSpan(strip_markup(inner), Emphasis.BOLD))
        elif m.group("i") is not None or m.group("i2") is not None:
            inner = m.group("i") if m.group("i") is not None else m.group("i2")
            spans.append(InlineSpan(strip_markup(inner), Emphasis.ITALIC))
        else:
            spans.append(
                InlineSpan(strip_markup(m.group("lt")), Emphasis.NONE, True, m.group("la"))
            )
        pos = m.end()
    if pos < len(md):
        spans.append(InlineSpan(md[pos:]))
    return _merge_spans(spans)


def render_spans(spans: tuple[InlineSpan, ...] | list[InlineSpan]) -> str:
    parts = []
    for span in spans:
        text = span.text
        if span.is_internal_link:
            parts.append(f"[{text}](#{span.link_target})")
        elif span.emphasis is Emphasis.BOLD:
            parts.append(f"**{text}**")
        elif span.emphasis is Emphasis.ITALIC:
            parts.append(f"*{text}*")
        elif span.emphasis is Emphasis.UNDERLINE:
            parts.append(f"<u>{text}</u>")
        else:
            parts.append(text)
    return "".join(parts)


def canonical_inline(md: str) -> str:
    return render_spans(parse_inline(md.strip()))


# ---------------------------------------------------------------------------
# sentence splitting

ABBREVIATIONS = frozenset(
    """
    e.g i.e etc vs mr mrs ms dr prof sr jr st no fig figs eq al approx cf
    inc ltd co corp dept est vol pp ca gen gov jan feb mar apr jun jul aug sep
    sept oct nov dec mt ft u.s u.k
    """.split()
)

_TERMINATOR_RE = re.compile(r"[.!?]+[\"'”’)\]]*(?=\s+[\"'“‘(\[]*[A-Z0-9])")
_WORD_BEFORE_RE = re.compile(r"([A-Za-z][A-Za-z.]*)$")


def sentence_boundaries(plain: str) -> list[tuple[int, int]]:
    """Character ranges of sentences in plain text, whitespace trimmed."""
    cuts = []
    for m in _TERMINATOR_RE.finditer(plain):
        if plain[m.start()] == ".":
            before = _WORD_BEFORE_RE.search(plain[: m.start()])
            if before and before.group(1).lower().rstrip(".") in ABBREVIATIONS:
                continue
        cuts.append(m.end())
    ranges = []
    start = 0
    for cut in cuts + [len(plain)]:
        seg = plain[start:cut]
        lead = len(seg) - len(seg.lstrip())
        seg_stripped = seg.strip()
        if seg_stripped:
            ranges.append((start + lead, start + lead + len(seg_stripped)))
        start = cut
    return ranges


def slice_spans(spans: tuple[InlineSpan, ...], start: int, end: int) -> tuple[InlineSpan, ...]:
    """Spans covering ``[start, end)`` of the concatenated span text."""
    out = []
    pos = 0
    for span in spans:
        s0, s1 = pos, pos + len(span.text)
        pos = s1
        lo, hi = max(s0, start), min(s1, end)
        if lo < hi:
            out.append(dataclasses.replace(span, text=span.text[lo - s0 : hi - s0]))
    return _merge_spans(out)


def _split_spans(spans: tuple[InlineSpan, ...]) -> list[Sentence]:
    plain = "".join(s.text for s in spans)
    return [Sentence(_trim(slice_spans(spans, a, b))) for a, b in sentence_boundaries(plain)]


def _trim(spans: tuple[InlineSpan, ...]) -> tuple[InlineSpan, ...]:
    """Move edge whitespace out of styled spans so markers stay valid."""
    out: list[InlineSpan] = []
    for span in spans:
        if span.emphasis is Emphasis.NONE and not span.is_internal_link:
            out.append(span)
            continue
        core = span.text.strip()
        if not core:
            out.append(InlineSpan(span.text))
            continue
        lead = span.text[: len(span.text) - len(span.text.lstrip())]
        tail = span.text[len(span.text.rstrip()) :]
        out.extend([InlineSpan(lead), dataclasses.replace(span, text=core), InlineSpan(tail)])
    return _merge_spans(out)


def sentence_split(block_text: str) -> list[Sentence]:
    """Rule-based sentence splitting of paragraph Markdown.

    A sentence ends at ``.``, ``!`` or ``?`` followed by whitespace and a
    capital letter or digit, unless the period closes a known abbreviation.
    """
    md = " ".join(line.strip() for line in block_text.strip().splitlines())
    return _split_spans(_trim(parse_inline(md)))


# ---------------------------------------------------------------------------
# block parsing

_HEADING_RE = re.compile(r"^ {0,3}(#{1,6})(?:[ \t]+(.*?))?(?:[ \t]+#+)?[ \t]*$")
_FENCE_RE = re.compile(r"^ {0,3}(`{3,}|~{3,})\s*([\w+-]*)")
_BULLET_RE = re.compile(r"^ {0,3}([-*+])[ \t]+(.*)$")
_ORDERED_RE = re.compile(r"^ {0,3}(\d{1,9})[.)][ \t]+(.*)$")
_NESTED_ITEM_RE = re.compile(r"^\s+(?:[-*+]|\d{1,9}[.)])[ \t]+(.*)$")


def _list_marker(line: str) -> str | None:
    """Bullet character or ordered delimiter of a list item line."""
    m = _BULLET_RE.match(line)
    if m:
        return m.group(1)
    m = _ORDERED_RE.match(line)
    return line.lstrip()[len(m.group(1))] if m else None
_HR_RE = re.compile(r"^ {0,3}(?:(?:\*[ \t]*){3,}|(?:-[ \t]*){3,}|(?:_[ \t]*){3,})$")
_TABLE_SEP_RE = re.compile(r"^\s*\|?\s*:?-{1,}:?\s*(\|\s*:?-{1,}:?\s*)*\|?\s*$")


def _is_table_start(lines: list[str], i: int) -> bool:
    return (
        lines[i].lstrip().startswith("|")
        and i + 1 < len(lines)
        and bool(_TABLE_SEP_RE.match(lines[i + 1]))
        and "-" in lines[i + 1]
    )


def _starts_block(lines: list[str], i: int) -> bool:
    line = lines[i]
    return bool(
        _HEADING_RE.match(line)
        or _FENCE_RE.match(line)
        or line.lstrip().startswith(">")
        or _BULLET_RE.match(line)
        or _ORDERED_RE.match(line)
        or _HR_RE.match(line)
        or _is_table_start(lines, i)
    )


def _split_row(line: str) -> tuple[str, ...]:
    body = line.strip()
    if body.startswith("|"):
        body = body[1:]
    if body.endswith("|") and not body.endswith("\\|"):
        body = body[:-1]
    return tuple(canonical_inline(c) for c in re.split(r"(?<!\\)\|", body))


def paragraph(md: str) -> Block:
    return Block(BlockKind.PARAGRAPH, sentences=tuple(sentence_split(md)))


def _scan(lines: list[str], diags: list[Diagnostic]) -> list[tuple]:
    """Turn lines into ('heading', level, text, lineno) and ('block', Block) events."""
    events: list[tuple] = []
    i, n = 0, len(lines)
    while i < n:
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        m = _FENCE_RE.match(line)
        if m:
            fence = m.group(1)
            body = []
            i += 1
            while i < n and not lines[i].strip().startswith(fence[0] * len(fence)):
                body.append(lines[i])
                i += 1
            if i >= n:
                diags.append(Diagnostic("unclosed-fence", "code fence not closed", f"line {i}"))
            i += 1
            events.append(("block", Block(BlockKind.CODE, text="\n".join(body), lang=m.group(2))))
            continue
        m = _HEADING_RE.match(line)
        if m:
            events.append(("heading", len(m.group(1)), canonical_inline(m.group(2) or ""), i + 1))
            i += 1
            continue
        if _HR_RE.match(line):
            diags.append(Diagnostic("dropped-rule", "thematic break ignored", f"line {i + 1}"))
            i += 1
            continue
        if line.lstrip().startswith(">"):
            body = []
            while i < n and lines[i].lstrip().startswith(">"):
                body.append(lines[i].lstrip()[1:].strip())
                i += 1
            text = canonical_inline(" ".join(b for b in body if b))
            if text:
                events.append(("block", Block(BlockKind.QUOTE, text=text)))
            continue
        if _is_table_start(lines, i):
            rows = [_split_row(lines[i])]
            i += 2
            while i < n and lines[i].lstrip().startswith("|"):
                rows.append(_split_row(lines[i]))
                i += 1
            width = max(len(r) for r in rows)
            rows = [r + ("",) * (width - len(r)) for r in rows]
            events.append(("block", Block(BlockKind.TABLE, rows=tuple(rows))))
            continue
        if _BULLET_RE.match(line) or _ORDERED_RE.match(line):
            ordered = bool(_ORDERED_RE.match(line))
            marker = _list_marker(line)
            items: list[str] = []
            while i < n:
                cur = lines[i]
                m = _BULLET_RE.match(cur) or _ORDERED_RE.match(cur)
                if m and _list_marker(cur) != marker:
                    # a different bullet or delimiter starts a new list
                    break
                if m:
                    items.append(m.group(2).strip())
                elif _NESTED_ITEM_RE.match(cur):
                    diags.append(Diagnostic("flattened-list", "nested list item flattened", f"line {i + 1}"))
                    items.append(_NESTED_ITEM_RE.match(cur).group(1).strip())
                elif cur.strip() and not _starts_block(lines, i):
                    items[-1] = (items[-1] + " " + cur.strip()).strip()
                elif not cur.strip():
                    j = i + 1
                    while j < n and not lines[j].strip():
                        j += 1
                    if j < n and _list_marker(lines[j]) == marker:
                        i = j
                        continue
                    break
                else:
                    break
                i += 1
            items = [canonical_inline(it) for it in items]
            events.append(("block", Block(BlockKind.LIST, items=tuple(it for it in items if it), ordered=ordered)))
            continue
        body = [line.strip()]
        i += 1
        while i < n and lines[i].strip() and not _starts_block(lines, i):
            body.append(lines[i].strip())
            i += 1
        block = paragraph(" ".join(body))
        if block.sentences:
            events.append(("block", block))
    return events


@dataclass
class _Draft:
    heading: str
    level: int
    source_level: int
    blocks: list[Block] = field(default_factory=list)
    children: list[_Draft] = field(default_factory=list)

    def freeze(self) -> Section:
        return Section(
            self.heading, self.level, tuple(self.blocks), tuple(c.freeze() for c in self.children)
        )


def parse(markdown_text: str | bytes, source_id: str = "", *, max_bytes: int = DEFAULT_MAX_BYTES) -> DocumentTree:
    """Parse Markdown into a :class:`DocumentTree`.

    Heading-level skips are repaired by re-leveling the heading one below
    its parent; each repair is recorded as a ``heading-skip`` diagnostic.
    """
    if isinstance(markdown_text, bytes):
        if len(markdown_text) > max_bytes:
            raise InputTooLarge(f"input is {len(markdown_text)} bytes, limit {max_bytes}")
        try:
            markdown_text = markdown_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedInput(f"invalid UTF-8: {exc}") from exc
    else:
        try:
            size = len(markdown_text.encode("utf-8"))
        except UnicodeEncodeError as exc:
            raise MalformedInput(f"text is not encodable as UTF-8: {exc}") from exc
        if size > max_bytes:
            raise InputTooLarge(f"input is {size} bytes, limit {max_bytes}")
    if markdown_text.startswith("﻿"):
        markdown_text = markdown_text[1:]
    lines = markdown_text.replace("\r\n", "\n").replace("\r", "\n").expandtabs(4).split("\n")

    diags: list[Diagnostic] = []
    preamble: list[Block] = []
    roots: list[_Draft] = []
    stack: list[_Draft] = []
    for event in _scan(lines, diags):
        if event[0] == "block":
            (stack[-1].blocks if stack else preamble).append(event[1])
            continue
        _, level, text, lineno = event
        while stack and stack[-1].source_level >= level:
            stack.pop()
        eff = level
        if stack and level > stack[-1].level + 1:
            eff = stack[-1].level + 1
            diags.append(
                Diagnostic(
                    "heading-skip",
                    f"h{level} {text!r} re-leveled to h{eff} under h{stack[-1].level}",
                    f"line {lineno}",
                )
            )
        draft = _Draft(text, eff, level)
        (stack[-1].children if stack else roots).append(draft)
        stack.append(draft)
    for d in diags:
        log.debug("%s: %s (%s)", d.code, d.message, d.location)
    tree = DocumentTree(tuple(d.freeze() for d in roots), tuple(preamble), source_id, tuple(diags))
    return finalize(tree)


# ---------------------------------------------------------------------------
# tree maintenance


def _section_boundary_marks(blocks: tuple[Block, ...]) -> list[tuple[Block, list[bool]]]:
    counts = [len(b.units) for b in blocks]
    total = sum(counts)
    marks = []
    k = 0
    for b, c in zip(blocks, counts):
        marks.append((b, [(k + j) in (0, total - 1) for j in range(c)]))
        k += c
    return marks


def _reclass(blocks: tuple[Block, ...]) -> tuple[Block, ...]:
    out = []
    for block, marks in _section_boundary_marks(blocks):
        if block.kind is not BlockKind.PARAGRAPH:
            out.append(block)
            continue
        sents = tuple(
            dataclasses.replace(
                s, position_class=Position.SECTION_BOUNDARY if edge else Position.STANDARD
            )
            for s, edge in zip(block.sentences, marks)
        )
        out.append(block if sents == block.sentences else dataclasses.replace(block, sentences=sents))
    return tuple(out)


def _retarget_block(block: Block, remap: dict[str, str]) -> Block:
    if block.kind is BlockKind.PARAGRAPH:
        changed = False
        sents = []
        for s in block.sentences:
            spans = []
            for span in s.spans:
                if span.is_internal_link and span.link_target in remap:
                    span = dataclasses.replace(span, link_target=remap[span.link_target])
                    changed = True
                spans.append(span)
            sents.append(dataclasses.replace(s, spans=tuple(spans)))
        return dataclasses.replace(block, sentences=tuple(sents)) if changed else block
    if block.kind is BlockKind.LIST:
        items = tuple(render_spans(_retarget_spans(parse_inline(it), remap)) for it in block.items)
        return dataclasses.replace(block, items=items)
    if block.kind is BlockKind.TABLE:
        rows = tuple(
            tuple(render_spans(_retarget_spans(parse_inline(c), remap)) for c in row) for row in block.rows
        )
        return dataclasses.replace(block, rows=rows)
    if block.kind is BlockKind.QUOTE:
        return dataclasses.replace(block, text=render_spans(_retarget_spans(parse_inline(block.text), remap)))
    return block


def _retarget_spans(spans, remap):
    return [
        dataclasses.replace(s, link_target=remap[s.link_target])
        if s.is_internal_link and s.link_target in remap
        else s
        for s in spans
    ]


def finalize(tree: DocumentTree, remap: dict[str, str] | None = None) -> DocumentTree:
    """Recompute unique anchors and sentence position classes.

    Sections keep their previous anchor in ``anchor`` until this runs; links
    pointing at a changed anchor (or at a key of ``remap``) are retargeted.
    """
    seen: dict[str, int] = {}
    changes: dict[str, str] = dict(remap or {})

    def assign(sec: Section) -> str:
        base = slugify(sec.heading_text)
        k = seen.get(base, 0)
        seen[base] = k + 1
        return base if k == 0 else f"{base}-{k}"

    def walk(sec: Section) -> Section:
        anchor = assign(sec)
        if sec.anchor and sec.anchor != anchor and sec.anchor not in changes:
            changes[sec.anchor] = anchor
        children = tuple(walk(c) for c in sec.children)
        return dataclasses.replace(sec, anchor=anchor, children=children)

    sections = tuple(walk(s) for s in tree.sections)
    # chained remaps (a -> b where b itself moved) resolve to the final anchor
    final = {a for a in (s.anchor for s in _iter(sections))}
    for key, val in list(changes.items()):
        hops = 0
        while val not in final and val in changes and hops < 16:
            val = changes[val]
            hops += 1
        changes[key] = val
    changes = {k: v for k, v in changes.items() if k != v}

    def fix(sec: Section) -> Section:
        blocks = tuple(_retarget_block(b, changes) for b in sec.blocks) if changes else sec.blocks
        return dataclasses.replace(
            sec, blocks=_reclass(blocks), children=tuple(fix(c) for c in sec.children)
        )

    preamble = tuple(_retarget_block(b, changes) for b in tree.preamble) if changes else tree.preamble
    return dataclasses.replace(
        tree, sections=tuple(fix(s) for s in sections), preamble=_reclass(preamble)
    )


def _iter(sections: tuple[Section, ...]) -> Iterator[Section]:
    for s in sections:
        yield s
        yield from _iter(s.children)


# ---------------------------------------------------------------------------
# serialization


def render_block(block: Block, alternate: bool = False) -> str:
    """Markdown for one block; ``alternate`` picks the second list marker."""
    if block.kind is BlockKind.PARAGRAPH:
        return " ".join(render_spans(s.spans) for s in block.sentences)
    if block.kind is BlockKind.LIST:
        if block.ordered:
            delim = ")" if alternate else "."
            return "\n".join(f"{k}{delim} {it}" for k, it in enumerate(block.items, 1))
        bullet = "*" if alternate else "-"
        return "\n".join(f"{bullet} {it}" for it in block.items)
    if block.kind is BlockKind.TABLE:
        lines = ["| " + " | ".join(block.rows[0]) + " |"]
        lines.append("| " + " | ".join("---" for _ in block.rows[0]) + " |")
        lines.extend("| " + " | ".join(r) + " |" for r in block.rows[1:])
        return "\n".join(lines)
    if block.kind is BlockKind.CODE:
        return f"```{block.lang}\n{block.text}\n```" if block.text else f"```{block.lang}\n```"
    return f"> {block.text}"


def serialize(tree: DocumentTree) -> str:
    """Canonical Markdown; byte-identical for equal trees."""
    parts = _render_run(tree.preamble)
    for sec in tree.iter_sections():
        parts.append(("#" * sec.level + " " + sec.heading).rstrip())
        parts.extend(_render_run(sec.blocks))
    return "\n\n".join(parts) + "\n" if parts else ""


def _render_run(blocks) -> list[str]:
    # adjacent lists alternate markers so they re-parse as separate lists
    out, alternate, prev_list = [], False, False
    for b in blocks:
        is_list = b.kind is BlockKind.LIST
        alternate = is_list and prev_list and not alternate
        out.append(render_block(b, alternate))
        prev_list = is_list
    return out


def canonicalize(markdown_text: str) -> str:
    return serialize(parse(markdown_text))


def units(tree: DocumentTree) -> list[Sentence]:
    """All body text units in document order."""
    return [u for block in tree.iter_blocks() for u in block.units]


def all_links(tree: DocumentTree) -> list[str]:
    out = []
    for block in tree.iter_blocks():
        if block.kind is BlockKind.CODE:
            continue
        for u in block.units:
            out.extend(s.link_target for s in u.spans if s.is_internal_link)
    return out
