from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from geo_sfe.document import parse
from geo_sfe.engine_sim import (
    PARADIGMS,
    VIS_WEIGHTS,
    EngineSimulator,
    Query,
    ResponseSentence,
    SimResponse,
    ablate,
    compare,
    decompose,
    score,
    simulate,
)
from geo_sfe.errors import EmptyCorpus, EmptyQuerySet
from geo_sfe.text import tokenize

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = sorted((FIXTURES / "corpus").glob("*.md"))
QUERIES = [Query.from_dict(q) for q in json.loads((FIXTURES / "queries.json").read_text())]
GOLDEN = json.loads((FIXTURES / "sts_golden.json").read_text())

_HIVE = """# Hive care

Bees need a dry hive before winter. Beekeepers check honey stores in autumn.

## Pests

Varroa mites weaken the colony. Beekeepers count mites on a sticky board.

## Feeding

Sugar syrup feeds the colony when honey runs short. Feed in the evening.
"""


def _response(*cites, engine="STS", words=None):
    words = words or [4] * len(cites)
    sents = tuple(ResponseSentence(" ".join(["word"] * n) + ".", frozenset(c)) for c, n in zip(cites, words))
    return SimResponse("q", engine, sents)


# simulate


@pytest.mark.parametrize("paradigm", PARADIGMS)
def test_single_document_corpus_has_full_citation_rate(paradigm):
    tree = parse(_HIVE)
    queries = [Query("a", "how do beekeepers handle varroa mites"), Query("b", "winter honey stores")]
    responses = simulate({"hive": tree}, queries, paradigm)
    assert all(r.sentences and all(s.citations == {"hive"} for s in r.sentences) for r in responses)
    assert score(responses, {"hive": tree}).sources["hive"].citation_rate == 1.0


@pytest.mark.parametrize("paradigm", PARADIGMS)
def test_identical_documents_break_ties_by_order(paradigm):
    tree = parse(_HIVE)
    q = [Query("a", "varroa mites in the colony")]
    first = simulate({"x": tree, "y": tree}, q, paradigm)
    assert sorted(first[0].sentences[0].citations) == ["x"]
    swapped = simulate({"y": tree, "x": tree}, q, paradigm)
    assert sorted(swapped[0].sentences[0].citations) == ["y"]
    assert [r.to_dict() for r in first] == [r.to_dict() for r in simulate({"x": tree, "y": tree}, q, paradigm)]


def test_citations_reference_corpus_and_cap_length():
    corpus = {p.stem: parse(p.read_text()) for p in CORPUS[:12]}
    for paradigm in PARADIGMS:
        for r in simulate(corpus, QUERIES[:12], paradigm):
            assert 0 < len(r.sentences) <= 12 and r.engine == paradigm
            assert all(s.citations and s.citations <= set(corpus) for s in r.sentences)


def test_sts_golden_response_set():
    corpus = {name: parse((FIXTURES / "corpus" / f"{name}.md").read_text()) for name in GOLDEN["documents"]}
    queries = [q for q in QUERIES if q.id in GOLDEN["queries"]]
    assert len(corpus) == 6 and len(queries) == 10
    got = [r.to_dict() for r in simulate(corpus, queries, "STS")]
    assert got == GOLDEN["responses"]


def test_golden_scores_match_formula():
    responses = [
        SimResponse(r["query_id"], r["engine"],
                    tuple(ResponseSentence(s["text"], frozenset(s["citations"])) for s in r["sentences"]))
        for r in GOLDEN["responses"]
    ]
    report = score(responses, GOLDEN["documents"])
    n = len(responses)
    for src in GOLDEN["documents"]:
        cov = pos = inf = hits = 0.0
        for r in GOLDEN["responses"]:
            sents = r["sentences"]
            idx = [k for k, s in enumerate(sents) if src in s["citations"]]
            if not idx:
                continue
            lens = [len(tokenize(s["text"])) for s in sents]
            cov += len(idx) / len(sents)
            pos += 1 - idx[0] / len(sents)
            inf += sum(lens[k] for k in idx) / sum(lens)
            hits += 1
        got = report.sources[src]
        assert got.coverage == pytest.approx(cov / n, abs=1e-12)
        assert got.position == pytest.approx(pos / n, abs=1e-12)
        assert got.influence == pytest.approx(inf / n, abs=1e-12)
        assert got.vis == pytest.approx(0.4 * cov / n + 0.3 * pos / n + 0.3 * inf / n, abs=1e-12)
        assert got.citation_rate == pytest.approx(hits / n, abs=1e-12)
    assert report.visibility == pytest.approx(sum(v.vis for v in report.sources.values()) / 6, abs=1e-12)


def test_simulation_is_deterministic():
    corpus = {p.stem: parse(p.read_text()) for p in CORPUS[:10]}
    for paradigm in PARADIGMS:
        a = [r.to_dict() for r in simulate(corpus, QUERIES[:8], paradigm)]
        b = [r.to_dict() for r in simulate(corpus, QUERIES[:8], paradigm)]
        assert a == b


def test_empty_inputs_rejected():
    with pytest.raises(EmptyCorpus):
        simulate({}, QUERIES[:1], "STS")
    with pytest.raises(EmptyQuerySet):
        simulate({"hive": parse(_HIVE)}, [], "STS")
    with pytest.raises(ValueError):
        simulate({"hive": parse(_HIVE)}, QUERIES[:1], "XYZ")
    with pytest.raises(ValueError):
        Query("q", "   ")


def test_query_decomposition():
    assert decompose("how does the queen affect varroa and wax mite") == ("queen", "varroa", "wax mite")
    assert Query("q", "x y", ("a", "b")).parts() == ("a", "b")


# score


def test_source_in_every_sentence_has_full_visibility():
    report = score([_response({"a"}, {"a"}, {"a"}), _response({"a"}, {"a"})], ["a", "b"])
    a, b = report.sources["a"], report.sources["b"]
    assert (a.coverage, a.position, a.influence, a.vis) == (1.0, 1.0, 1.0, 1.0)
    assert b.vis == 0.0 and b.citation_rate == 0.0 and b.first_position is None
    assert report.citation_rate == 0.5 and report.visibility == 0.5


def test_score_arithmetic_by_hand():
    # four sentences of 2, 4, 6, 8 words; b is cited in the second and fourth
    r = _response({"a"}, {"b"}, {"a"}, {"a", "b"}, words=[2, 4, 6, 8])
    report = score([r], ["a", "b"])
    b = report.sources["b"]
    assert b.coverage == 0.5 and b.position == 0.75 and b.influence == pytest.approx(12 / 20)
    assert b.vis == pytest.approx(VIS_WEIGHTS[0] * 0.5 + VIS_WEIGHTS[1] * 0.75 + VIS_WEIGHTS[2] * 0.6)
    assert b.citation_depth == 2 and b.first_position == 1
    assert report.citation_depth == pytest.approx((3 + 2) / 2)
    assert report.first_position == pytest.approx(0.5)


def test_vis_components_bounded_on_corpus():
    corpus = {p.stem: parse(p.read_text()) for p in CORPUS}
    for paradigm in PARADIGMS:
        report = score(simulate(corpus, QUERIES, paradigm), corpus)
        for v in report.sources.values():
            for x in (v.coverage, v.position, v.influence, v.vis, v.citation_rate):
                assert 0.0 <= x <= 1.0
            assert v.vis == pytest.approx(0.4 * v.coverage + 0.3 * v.position + 0.3 * v.influence, abs=1e-12)


# paradigm sensitivity


def test_internal_links_favour_a_document_only_under_ir():
    plain = parse(_HIVE)
    # one link per section keeps link spread (R_d) equal, so only density differs
    linked = parse(_HIVE.replace("Bees need", "[Bees](#feeding) need")
                   .replace("Varroa mites weaken", "[Varroa](#hive-care) mites weaken")
                   .replace("Sugar syrup feeds", "Sugar [syrup](#pests) feeds"))
    sim = EngineSimulator.for_corpus([plain, linked])
    p_plain, p_linked = sim.artifacts(plain, "plain").probability, sim.artifacts(linked, "linked").probability
    assert p_linked["IR"] > p_plain["IR"]
    assert p_linked["STS"] == p_plain["STS"]
    corpus = {"plain": plain, "linked": linked}
    q = [Query("a", "varroa mites and sugar syrup for the colony")]
    assert sorted(simulate(corpus, q, "IR")[0].sentences[0].citations) == ["linked"]
    assert sorted(simulate(corpus, q, "STS")[0].sentences[0].citations) == ["plain"]


def test_compare_with_itself_has_zero_delta():
    corpus = {p.stem: parse(p.read_text()) for p in CORPUS[:6]}
    for row in compare(corpus, corpus, QUERIES[:6]):
        assert row.vs_delta == 0.0 and row.cr_delta == 0.0


def test_compare_requires_matching_ids():
    corpus = {p.stem: parse(p.read_text()) for p in CORPUS[:3]}
    with pytest.raises(ValueError):
        compare(corpus, dict(list(corpus.items())[:2]), QUERIES[:2])


# ablation


def test_ablation_of_identity_optimizer_reports_null_contributions():
    corpus = {p.stem: parse(p.read_text()) for p in CORPUS[:4]}
    table = ablate(corpus, QUERIES[:4], optimize_fn=lambda tree, cfg: tree)
    assert table.contributions == {"macro": None, "meso": None, "micro": None}
    assert all(v is None for p in table.contributions_by_paradigm.values() for v in p.values())
    rows = {r.name: r.mean_vs for r in table.rows}
    assert len(set(rows.values())) == 1


def test_ablation_contribution_formula():
    corpus = {p.stem: parse(p.read_text()) for p in CORPUS[2:6]}
    seen = []

    def fake(tree, cfg):
        seen.append(cfg.skip_levels)
        return tree if cfg.skip_levels else parse(_HIVE.replace("# Hive care", "# " + tree.sections[0].heading))

    table = ablate(corpus, QUERIES[:6], optimize_fn=fake)
    full, base = table.row("full").mean_vs, table.row("baseline").mean_vs
    for level in ("macro", "meso", "micro"):
        without = table.row(f"skip-{level}").mean_vs
        want = None if math.isclose(full, base, abs_tol=1e-15) else (full - without) / (full - base)
        assert table.contributions[level] == (pytest.approx(want) if want is not None else None)
    assert {frozenset(s) for s in seen} == {frozenset(), frozenset({"macro"}), frozenset({"meso"}),
                                            frozenset({"micro"})}
