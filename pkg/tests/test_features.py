from __future__ import annotations

import math
import re
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from geo_sfe.data import reference_stats
from geo_sfe.document import parse
from geo_sfe.errors import InsufficientCorpus, StatsMismatch
from geo_sfe.features import (
    DIMENSIONS,
    CorpusStats,
    FeatureVector,
    compute_stats,
    corpus_stats,
    extract_all,
    extract_macro,
    extract_meso,
    extract_micro,
    normalize,
)

FIXTURES = Path(__file__).parent / "fixtures"
FEATURE_DOCS = sorted((FIXTURES / "features").glob("*.md"))
CORPUS_DOCS = sorted((FIXTURES / "corpus").glob("*.md"))


def _sections(counts: list[int]) -> str:
    """Level-1 sections holding one paragraph of the given word counts."""
    return "\n\n".join(f"# Part {k}\n\n" + "word " * (n - 1) + "end." for k, n in enumerate(counts)) + "\n"


def test_feature_docs_match_oracle():
    assert len(FEATURE_DOCS) == 20
    stats = reference_stats()
    idf = oracle.Idf()
    for path in FEATURE_DOCS:
        text = path.read_text()
        got = extract_all(parse(text), None, stats=stats).to_dict()
        want = oracle.features(text, idf)
        for dim in DIMENSIONS:
            assert got[dim] == pytest.approx(want[dim], abs=1e-9), (path.name, dim)


def test_feature_docs_exercise_every_construct():
    text = "".join(p.read_text() for p in FEATURE_DOCS)
    for marker in ("```", "\n> ", "\n| ", "\n- ", "**", "<u>", "](#"):
        assert marker in text
    assert re.search(r"(?<!\*)\*[^*\s][^*]*\*(?!\*)", text)


# macro


def test_equal_sections_have_full_regularity():
    tree = parse(_sections([100, 100, 100]))
    assert [s.word_count for s in tree.iter_sections()] == [100, 100, 100]
    assert extract_macro(tree)["R"] == 1.0


def test_regularity_uses_population_sigma():
    # sections of 100 and 200 words: 1 - 50/150
    tree = parse(_sections([100, 200]))
    assert extract_macro(tree)["R"] == pytest.approx(1 - 50 / 150, abs=1e-12)


def test_depth_is_max_heading_level():
    tree = parse("# A\n\n## B\n\n## C\n\n### D\n")
    assert extract_macro(tree)["d_h"] == 3


def test_balance_score_against_thirty_percent():
    # levels 1,2,2,3: b_h(2) = 0.5, b_h(3) = 0.25, worst gap 0.2
    tree = parse("# A\n\n## B\n\n## C\n\n### D\n")
    out = extract_macro(tree)
    assert out["b_h"] == {1: 0.25, 2: 0.5, 3: 0.25}
    assert out["balance_score"] == pytest.approx(0.8, abs=1e-12)


def test_empty_tree_macro_defaults():
    out = extract_macro(parse(""))
    assert (out["d_h"], out["R"], out["T_c"], out["L_d"], out["balance_score"]) == (0.0, 1.0, 0.0, 0.0, 0.0)


def test_link_density_and_distribution():
    tree = parse("# A\n\nSee [b](#b). More text.\n\nPlain.\n\n# B\n\nBack to [a](#a) and [a](#a).\n")
    out = extract_macro(tree)
    assert out["L_d"] == pytest.approx(3 / 3)
    # per-section links [1, 2]: CV = 0.5 / 1.5
    assert out["R_d"] == pytest.approx(1 / (1 + (0.5 / 1.5)))


# meso


def test_all_paragraphs_means_zero_format_diversity():
    assert extract_meso(parse("# A\n\nOne.\n\nTwo.\n"))["F_d"] == 0.0


def test_format_smoothness_by_enumeration():
    tree = parse("# A\n\nFirst part.\n\n- item one\n- item two\n\nLast part.\n")
    kinds = [b.kind.value for b in tree.iter_blocks()]
    assert kinds == ["paragraph", "list", "paragraph"]
    same = sum(a == b for a, b in zip(kinds, kinds[1:]))
    assert extract_meso(tree)["F_s"] == same / 2 == 0.0


def test_single_paragraph_has_no_length_variation():
    assert extract_meso(parse("# A\n\nOnly one paragraph here. It has two sentences.\n"))["V_p"] == 0.0


def test_information_density_counts_lemmas_and_numbers():
    # tokens: cats cat run 3 times -> lemmas {cat, run, time}, one numeral, five tokens
    tree = parse("Cats cat run 3 times.\n")
    assert extract_meso(tree)["D"] == pytest.approx((3 + 1) / 5)


# micro


def test_emphasis_density_ratio():
    body = " ".join(["**key**"] * 5 + ["plain"] * 94) + " end."
    out = extract_micro(parse("# A\n\n" + body + "\n"), keywords=[])
    assert out["E_d"] == pytest.approx(0.05)


def test_sentence_initial_keyword_weight():
    out = extract_micro(parse("Solar panels work well.\n"), keywords=["solar"])
    assert out["K_p"] == 2.0


def test_no_emphasis_gives_zero_density_and_placement():
    out = extract_micro(parse("# A\n\nNothing stands out here.\n"), keywords=["stands"])
    assert out["E_d"] == 0.0 and out["E_p"] == 0.0


def test_reading_ease_formula():
    # 2 sentences, 6 words, syllables: the(1) cat(1) sat(1) a(1) dog(1) ran(1)
    out = extract_micro(parse("The cat sat. A dog ran.\n"), keywords=[])
    assert out["R_e"] == pytest.approx(206.835 - 1.015 * 3 - 84.6 * 1.0)


def test_empty_tree_is_defined_vector():
    v = extract_all(parse(""))
    assert v.as_list() == [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def test_identical_documents_identical_vectors():
    text = CORPUS_DOCS[0].read_text()
    assert extract_all(parse(text)) == extract_all(parse(text))


def test_feature_vector_json_keys():
    v = extract_all(parse(CORPUS_DOCS[3].read_text()))
    assert list(v.to_dict()) == list(DIMENSIONS)
    assert FeatureVector.from_dict(v.to_dict()) == v


# statistics and normalization


def test_stats_of_two_identical_vectors_are_constant():
    v = FeatureVector.from_list([float(k) for k in range(15)])
    stats = compute_stats([v, v])
    assert all(stats.constant) and all(s == 0 for s in stats.stds)
    assert normalize(v, stats).as_list() == [0.0] * 15


def test_stats_of_zero_and_two():
    stats = compute_stats([FeatureVector.from_list([0.0] * 15), FeatureVector.from_list([2.0] * 15)])
    assert stats.means == (1.0,) * 15 and stats.stds == (1.0,) * 15


def test_stats_need_two_vectors():
    with pytest.raises(InsufficientCorpus):
        compute_stats([FeatureVector()])


def test_normalize_dimension_mismatch():
    with pytest.raises(StatsMismatch):
        normalize(FeatureVector(), CorpusStats((0.0,) * 14, (1.0,) * 14, 2))


def test_mean_vector_normalizes_to_zero():
    stats = reference_stats()
    assert normalize(FeatureVector.from_list(stats.means), stats).as_list() == [0.0] * 15


def test_five_doc_normalization_matches_direct_arithmetic():
    vecs = [extract_all(parse(p.read_text())).as_list() for p in CORPUS_DOCS[:5]]
    stats = compute_stats([FeatureVector.from_list(v) for v in vecs])
    for d in range(15):
        col = [v[d] for v in vecs]
        mean = sum(col) / 5
        std = math.sqrt(sum((x - mean) ** 2 for x in col) / 5)
        assert stats.means[d] == pytest.approx(mean, abs=1e-12)
        assert stats.stds[d] == pytest.approx(std, abs=1e-12)
        for v in vecs:
            z = normalize(FeatureVector.from_list(v), stats).as_list()[d]
            assert z == pytest.approx(0.0 if std <= 1e-12 * max(1, abs(mean)) else (v[d] - mean) / std, abs=1e-9)


def test_stats_json_round_trip(tmp_path):
    stats = reference_stats()
    stats.save(tmp_path / "s.json")
    assert CorpusStats.load(tmp_path / "s.json") == stats


def test_reference_stats_match_fixture_corpus():
    stats = corpus_stats([parse(p.read_text()) for p in CORPUS_DOCS])
    assert stats.means == pytest.approx(reference_stats().means, abs=1e-12)
    assert stats.idf == reference_stats().idf


# properties

_WORDS = ["river", "stone", "harbor", "market", "bread", "garden", "engine", "signal", "42", "the", "and"]


@st.composite
def _doc(draw):
    parts = ["# Title"]
    for k in range(draw(st.integers(1, 4))):
        parts.append(f"## Part {k}")
        for _ in range(draw(st.integers(1, 3))):
            sents = []
            for _ in range(draw(st.integers(1, 4))):
                ws = draw(st.lists(st.sampled_from(_WORDS), min_size=2, max_size=9))
                if draw(st.booleans()):
                    ws[draw(st.integers(0, len(ws) - 1))] = "**" + ws[-1] + "**"
                sents.append(" ".join(ws).capitalize() + ".")
            if draw(st.booleans()):
                parts.append("- " + "\n- ".join(sents))
            else:
                parts.append(" ".join(sents))
    return "\n\n".join(parts) + "\n"


@settings(max_examples=40, deadline=None)
@given(_doc())
def test_emphasis_removal_only_moves_emphasis_features(text):
    stats = reference_stats()
    with_marks = extract_all(parse(text), stats=stats).to_dict()
    without = extract_all(parse(text.replace("**", "")), stats=stats).to_dict()
    assert without["E_d"] == 0.0 and without["E_p"] == 0.0
    for dim in DIMENSIONS:
        if dim not in ("E_d", "E_p"):
            assert without[dim] == pytest.approx(with_marks[dim], abs=1e-12), dim


@settings(max_examples=40, deadline=None)
@given(_doc())
def test_ratio_features_are_size_invariant(text):
    doubled = text + "\n" + text
    a = extract_all(parse(text)).to_dict()
    b = extract_all(parse(doubled)).to_dict()
    for dim in ("R", "V_p", "F_d", "F_s", "E_d"):
        assert b[dim] == pytest.approx(a[dim], abs=1e-12), dim


@settings(max_examples=40, deadline=None)
@given(_doc())
def test_ranges(text):
    v = extract_all(parse(text))
    for dim in ("balance_score", "R_d", "H_c", "F_d", "F_s", "E_d"):
        assert 0.0 <= getattr(v, dim) <= 1.0
    assert v.R <= 1.0 and v.d_h >= 0 and -1.0 <= v.T_c <= 1.0
