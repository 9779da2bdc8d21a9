"""Packaged reference data."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def reference_stats():
    """Corpus statistics of the bundled 30-document reference corpus."""
    from ..features import CorpusStats

    text = resources.files(__package__).joinpath("reference_stats.json").read_text(encoding="utf-8")
    return CorpusStats.from_dict(json.loads(text))
