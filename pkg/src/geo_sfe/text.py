"""Shared lexical primitives: tokenizer, lemmatizer, stopwords, syllables, slugs.

Every density and ratio feature in the package counts tokens with
:func:`tokenize`, so the definition lives here and nowhere else.
"""

from __future__ import annotations

import re
from functools import lru_cache

_MARKUP_RE = re.compile(r"</?u>|\*\*|__|\*|(?<!\w)_|_(?!\w)")
_LINK_RE = re.compile(r"\[([^\]]*)\]\([^)]*\)")
TOKEN_RE = re.compile(r"\d+(?:[.,]\d+)*|[^\W\d_]+(?:['’][^\W\d_]+)*")
_NUMERIC_RE = re.compile(r"\d")

STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are aren't as at
    be because been before being below between both but by can can't cannot
    could couldn't did didn't do does doesn't doing don't down during each few
    for from further had hadn't has hasn't have haven't having he her here hers
    herself him himself his how i if in into is isn't it it's its itself just
    let's me more most mustn't my myself no nor not now of off on once only or
    other ought our ours ourselves out over own same shan't she should
    shouldn't so some such than that that's the their theirs them themselves
    then there there's these they this those through to too under until up
    upon very was wasn't we were weren't what when where which while who whom
    why will with won't would wouldn't you your yours yourself yourselves
    may might must shall via per onto within without across along among
    however therefore thus hence moreover furthermore yet still often many much
    one two three first second third next finally lastly another every either
    neither whether though although unless since
    """.split()
)

# Irregular forms the suffix rules below would mangle.
_LEMMA_EXCEPTIONS = {
    "is": "be", "are": "be", "was": "be", "were": "be", "been": "be", "being": "be",
    "has": "have", "had": "have", "having": "have",
    "does": "do", "did": "do", "done": "do",
    "children": "child", "people": "person", "men": "man", "women": "woman",
    "feet": "foot", "teeth": "tooth", "mice": "mouse", "data": "data",
    "news": "news", "analysis": "analysis", "basis": "basis", "series": "series",
    "species": "species", "this": "this", "its": "its", "us": "us",
}


def strip_markup(text: str) -> str:
    """Remove emphasis markers and reduce links to their visible text."""
    return _MARKUP_RE.sub("", _LINK_RE.sub(r"\1", text))


def tokenize(text: str) -> list[str]:
    """Lowercased word and numeral tokens with emphasis markers stripped.

    >>> tokenize("**GEO** rocks, 3.5 times!")
    ['geo', 'rocks', '3.5', 'times']
    """
    return TOKEN_RE.findall(strip_markup(text).lower())


def token_spans(plain: str) -> list[tuple[int, int, str]]:
    """Tokens of already-plain text with their character offsets."""
    return [(m.start(), m.end(), m.group().lower()) for m in TOKEN_RE.finditer(plain)]


def is_numeric(token: str) -> bool:
    return bool(_NUMERIC_RE.match(token))


@lru_cache(maxsize=65536)
def lemmatize(token: str) -> str:
    """Deterministic suffix-stripping lemmatizer for lowercased tokens."""
    if token in _LEMMA_EXCEPTIONS:
        return _LEMMA_EXCEPTIONS[token]
    if is_numeric(token) or len(token) <= 3:
        return token
    word = token.replace("’", "'")
    if word.endswith("'s"):
        word = word[:-2]
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("sses", "shes", "ches", "xes", "zes")):
        return word[:-2]
    if word.endswith("s") and not word.endswith(("ss", "us", "is")):
        return word[:-1]
    return word


def is_content(token: str) -> bool:
    return not is_numeric(token) and token not in STOPWORDS and len(token) > 1


def content_lemmas(tokens: list[str]) -> list[str]:
    """Lemmas of content words plus numerals, in order."""
    out = []
    for tok in tokens:
        if is_numeric(tok):
            out.append(tok)
        elif is_content(tok):
            out.append(lemmatize(tok))
    return out


_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")


def count_syllables(token: str) -> int:
    """Vowel-group syllable count; silent final 'e' dropped; minimum one."""
    if is_numeric(token):
        return 1
    word = token.lower()
    count = len(_VOWEL_GROUP_RE.findall(word))
    if word.endswith("e") and not word.endswith(("le", "ee", "ye")) and count > 1:
        count -= 1
    return max(count, 1)


def slugify(text: str) -> str:
    """GitHub-style heading slug."""
    slug = strip_markup(text).strip().lower()
    slug = re.sub(r"[^\w\- ]", "", slug)
    slug = re.sub(r"\s+", "-", slug)
    return slug or "section"
