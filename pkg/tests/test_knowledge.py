"""Knowledge graph, claim validation, chunking, and retrieval tests."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from settlekit.corpus import SourceKind
from settlekit.knowledge import (
    DEFAULT_CHUNK_LEN,
    FunctionalConstraintError,
    KbChunk,
    KnowledgeGraph,
    Triple,
    Verdict,
    VerdictStatus,
    add_triple,
    build_kb_index,
    extract_claims,
    load_kb_index,
    retrieve,
    save_kb_index,
    tokenize,
    validate_claim,
    validate_record,
)
from settlekit.synth import QaRecord, Scenario, Turn

from conftest import make_doc
from oracles import oracle_retrieve


class TestTriple:
    def test_fields_are_normalized(self):
        t = Triple("  GB 50096-2011 ", "属于", " 国家标准\n")
        assert (t.subject, t.predicate, t.object) == ("gb 50096-2011", "属于", "国家标准")

    def test_empty_after_normalization_rejected(self):
        with pytest.raises(ValueError, match="subject empty"):
            Triple("   ", "属于", "x")
        with pytest.raises(ValueError, match="object empty"):
            Triple("x", "属于", " \t ")

    def test_json_round_trip(self):
        t = Triple("海绵城市", "属于", "设计理念")
        assert Triple.from_json(t.to_json()) == t


class TestKnowledgeGraphBuild:
    def test_add_and_idempotent_readd(self):
        kg = KnowledgeGraph()
        t = Triple("海绵城市", "属于", "设计理念")
        add_triple(kg, t)
        assert len(kg) == 1 and t in kg
        add_triple(kg, t)
        assert len(kg) == 1

    def test_functional_second_object_rejected_citing_existing(self):
        kg = KnowledgeGraph(functional_predicates=["属于"])
        kg.add(Triple("海绵城市", "属于", "设计理念"))
        with pytest.raises(FunctionalConstraintError, match="设计理念"):
            kg.add(Triple("海绵城市", "属于", "建筑规范"))
        assert len(kg) == 1

    def test_non_functional_predicate_allows_many_objects(self):
        kg = KnowledgeGraph(functional_predicates=["属于"])
        kg.add(Triple("海绵城市", "包含", "雨水花园"))
        kg.add(Triple("海绵城市", "包含", "透水铺装"))
        assert kg.objects_for("海绵城市", "包含") == {"雨水花园", "透水铺装"}

    def test_functional_readd_same_object_is_fine(self):
        kg = KnowledgeGraph(functional_predicates=["属于"])
        kg.add(Triple("a", "属于", "b"))
        kg.add(Triple("A", "属于", "B"))  # normalizes to the same triple
        assert len(kg) == 1


class TestKnowledgeGraphFile:
    def test_fixture_loads(self, fixtures):
        kg = KnowledgeGraph.from_file(fixtures / "kg.tsv")
        assert len(kg) == 20
        assert kg.functional_predicates == {"属于", "发布年份", "强制程度"}

    def test_save_round_trip(self, fixtures, tmp_path):
        kg = KnowledgeGraph.from_file(fixtures / "kg.tsv")
        path = tmp_path / "kg.tsv"
        kg.save(path)
        again = KnowledgeGraph.from_file(path)
        assert again.triples == kg.triples
        assert again.functional_predicates == kg.functional_predicates

    def test_malformed_line_reports_location(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("只有两个\t字段\n", encoding="utf-8")
        with pytest.raises(ValueError, match="bad.tsv:1"):
            KnowledgeGraph.from_file(path)

    def test_functional_directive_without_predicate(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("!functional\n", encoding="utf-8")
        with pytest.raises(ValueError, match="without a predicate"):
            KnowledgeGraph.from_file(path)

    def test_violating_file_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text(
            "!functional 属于\na\t属于\tb\na\t属于\tc\n", encoding="utf-8"
        )
        with pytest.raises(FunctionalConstraintError):
            KnowledgeGraph.from_file(path)


def load_claim_suite(fixtures):
    rows = []
    for line in (fixtures / "claims.tsv").read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            s, p, o, expected = line.split("\t")
            rows.append((Triple(s, p, o), VerdictStatus(expected)))
    return rows


class TestValidateClaim:
    def test_thirty_claim_suite(self, fixtures):
        kg = KnowledgeGraph.from_file(fixtures / "kg.tsv")
        suite = load_claim_suite(fixtures)
        assert len(suite) == 30
        for claim, expected in suite:
            verdict = validate_claim(kg, claim)
            assert verdict.status is expected, f"{claim}: {verdict.status} != {expected}"

    def test_contradicted_witness_invariants(self, fixtures):
        kg = KnowledgeGraph.from_file(fixtures / "kg.tsv")
        for claim, expected in load_claim_suite(fixtures):
            verdict = validate_claim(kg, claim)
            if expected is VerdictStatus.CONTRADICTED:
                witness = verdict.witness
                assert witness is not None
                assert (witness.subject, witness.predicate) == (claim.subject, claim.predicate)
                assert witness.object != claim.object
                assert claim.predicate in kg.functional_predicates
                assert witness in kg
            else:
                assert verdict.witness is None

    def test_supported_stays_supported_under_insertions(self, fixtures):
        kg = KnowledgeGraph.from_file(fixtures / "kg.tsv")
        originally_supported = sorted(
            kg.triples, key=lambda t: (t.subject, t.predicate, t.object)
        )
        rng = random.Random(13)
        vocab = ["口袋公园", "绿道", "驿站", "街区", "廊道", "样本地块", "设施"]
        added = 0
        while added < 100:
            t = Triple(
                rng.choice(vocab) + str(rng.randrange(40)),
                rng.choice(["属于", "包含", "适用于"]),
                rng.choice(vocab) + str(rng.randrange(40)),
            )
            try:
                kg.add(t)
            except FunctionalConstraintError:
                continue
            added += 1
            for triple in originally_supported:
                assert kg.validate_claim(triple).status is VerdictStatus.SUPPORTED

    def test_verdict_json_round_trip(self):
        kg = KnowledgeGraph(functional_predicates=["属于"])
        kg.add(Triple("a", "属于", "b"))
        contradicted = kg.validate_claim(Triple("a", "属于", "c"))
        assert Verdict.from_json(contradicted.to_json()) == contradicted


class TestExtractClaims:
    def test_chinese_phrasing(self):
        assert extract_claims("海绵城市属于设计理念。") == [
            Triple("海绵城市", "is_a", "设计理念")
        ]

    def test_english_phrasing(self):
        assert extract_claims("Sponge city is a design philosophy.") == [
            Triple("sponge city", "is_a", "design philosophy")
        ]

    def test_multiple_clauses(self):
        text = "海绵城市属于设计理念，韧性城市属于设计理念。其他内容不含断言。"
        assert [c.subject for c in extract_claims(text)] == ["海绵城市", "韧性城市"]

    def test_no_claims(self):
        assert extract_claims("这里只描述了场地情况和设计策略。") == []


class TestValidateRecord:
    def make_record(self, answer):
        return QaRecord(
            id="qa-x",
            scenario=Scenario.parse("design_philosophy/sponge_city"),
            turns=(Turn("居民", "问", answer),),
        )

    def make_kg(self):
        kg = KnowledgeGraph(functional_predicates=["is_a"])
        kg.add(Triple("海绵城市", "is_a", "设计理念"))
        return kg

    def test_supported_fact_not_flagged(self):
        record = validate_record(self.make_kg(), self.make_record("海绵城市属于设计理念。"))
        assert [v.status for v in record.kg_verdicts] == [VerdictStatus.SUPPORTED]
        assert not record.contradicted

    def test_contradiction_flagged(self):
        record = validate_record(self.make_kg(), self.make_record("海绵城市属于建筑规范。"))
        assert [v.status for v in record.kg_verdicts] == [VerdictStatus.CONTRADICTED]
        assert record.contradicted

    def test_no_claims_empty_verdicts(self):
        record = validate_record(self.make_kg(), self.make_record("这里没有任何断言句。"))
        assert record.kg_verdicts == ()
        assert not record.contradicted

    def test_custom_extractor_hook(self):
        extractor = lambda text: [Triple("海绵城市", "is_a", "设计理念")]
        record = validate_record(self.make_kg(), self.make_record("任意文本"), extractor)
        assert [v.status for v in record.kg_verdicts] == [VerdictStatus.SUPPORTED]


class TestTokenize:
    def test_mixed_script(self):
        assert tokenize("海绵城市 LID-2024 方案") == [
            "海", "绵", "城", "市", "lid", "2024", "方", "案",
        ]

    def test_empty(self):
        assert tokenize("   ") == []

    @settings(max_examples=50, deadline=None)
    @given(st.text(alphabet="海绵城市abc012 ", max_size=30))
    def test_tokens_match_oracle(self, text):
        from oracles import oracle_tokens

        assert tokenize(text) == oracle_tokens(text)


def chunk_oracle(sentence_lengths, chunk_len):
    """Greedy packing: sum of lengths plus single-space separators <= chunk_len."""
    groups, current = [], []
    for length in sentence_lengths:
        if current and sum(current) + len(current) + length > chunk_len:
            groups.append(current)
            current = []
        current.append(length)
    if current:
        groups.append(current)
    return [len(g) for g in groups]


class TestBuildKbIndex:
    def test_single_small_doc_single_chunk(self):
        doc = make_doc("第一句。第二句。第三句。", 1)
        chunks = build_kb_index([doc])
        assert len(chunks) == 1
        assert chunks[0].id == f"{doc.id}#0000"
        assert chunks[0].source_doc == doc.id
        assert chunks[0].text == "第一句。 第二句。 第三句。"

    def test_over_length_sentence_is_its_own_chunk(self):
        long_sentence = "超长句" * 40 + "。"
        doc = make_doc(f"开头短句。{long_sentence}结尾短句。", 1)
        chunks = build_kb_index([doc], chunk_len=50)
        texts = [c.text for c in chunks]
        assert long_sentence in texts
        assert len(chunks) == 3

    def test_forty_sentence_doc_matches_greedy_oracle(self):
        rng = random.Random(21)
        sentences = [
            "句" * rng.randrange(10, 60) + "。" for _ in range(40)
        ]
        doc = make_doc("".join(sentences), 1)
        chunks = build_kb_index([doc], chunk_len=200)
        got = [c.text.count("。") for c in chunks]
        assert got == chunk_oracle([len(s) for s in sentences], 200)

    def test_ids_sort_in_document_order(self):
        doc = make_doc("。".join("句" * 30 for _ in range(20)) + "。", 1)
        chunks = build_kb_index([doc], chunk_len=100)
        assert [c.id for c in chunks] == sorted(c.id for c in chunks)
        assert chunks[1].id.endswith("#0001")

    def test_reconstruction_up_to_whitespace(self):
        docs = [
            make_doc("。".join(f"第{i}篇" + "句个字" * n for n in range(1, 12)) + "。", i)
            for i in (1, 2)
        ]
        chunks = build_kb_index(docs, chunk_len=60)
        for doc in docs:
            own = [c.text for c in chunks if c.source_doc == doc.id]
            assert "".join("".join(own).split()) == "".join(doc.clean_text.split())

    def test_term_counts_match_tokenizer(self):
        doc = make_doc("海绵城市 demo 2024。", 1)
        [chunk] = build_kb_index([doc])
        assert chunk.term_counts == {"海": 1, "绵": 1, "城": 1, "市": 1, "demo": 1, "2024": 1}


@pytest.fixture(scope="module")
def kb_index():
    from settlekit.cleanse import dedup_articles

    from conftest import build_dedup_corpus

    docs, _ = dedup_articles(build_dedup_corpus(n=30, seed=17))
    index = build_kb_index(docs, chunk_len=120)
    assert len(index) >= 50
    assert len({c.id for c in index}) == len(index)
    return index


class TestRetrieve:
    def test_only_matching_chunk_wins(self):
        docs = [
            make_doc("这里讨论滨水驳岸的做法。", 1),
            make_doc("这里讨论屋顶绿化的做法。", 2),
            make_doc("与查询完全无关的内容。", 3),
        ]
        index = build_kb_index(docs)
        results = retrieve(index, "屋顶绿化", k=3)
        assert results[0][0] == index[1].id

    def test_no_indexed_terms_empty(self):
        index = build_kb_index([make_doc("只有中文内容。", 1)])
        assert retrieve(index, "zzz", k=3) == []

    def test_zero_score_chunks_dropped(self):
        docs = [make_doc("特例词只在这里出现。", 1), make_doc("别的内容。", 2)]
        index = build_kb_index(docs)
        results = retrieve(index, "特例词", k=5)
        assert [r[0] for r in results] == [index[0].id]

    def test_matches_oracle_on_generated_corpus(self, kb_index):
        queries = [
            "海绵城市", "雨洪管理", "公共空间品质", "校园 策略", "滨水空间设计",
            "stormwater resilience", "strategy block", "生活圈 服务", "历史街区保护", "同上",
        ]
        for query in queries:
            expected = oracle_retrieve(kb_index, query, k=len(kb_index))
            got = retrieve(kb_index, query, k=len(kb_index))
            assert [g[0] for g in got] == [e[0] for e in expected], query
            for (_, got_score), (_, want_score) in zip(got, expected):
                assert got_score == pytest.approx(want_score)

    def test_tie_broken_by_ascending_chunk_id(self):
        counts = {"样": 1, "本": 1}
        index = [
            KbChunk("doc-b#0000", "doc-b", "样本乙", counts),
            KbChunk("doc-a#0000", "doc-a", "样本甲", counts),
        ]
        results = retrieve(index, "样本", k=2)
        assert [r[0] for r in results] == ["doc-a#0000", "doc-b#0000"]
        assert results[0][1] == results[1][1]

    def test_score_increases_with_term_frequency(self):
        index = [
            KbChunk("c#0000", "c", "词", {"词": 1, "垫": 5}),
            KbChunk("c#0001", "c", "词词", {"词": 2, "垫": 5}),
        ]
        results = dict(retrieve(index, "词", k=2))
        assert results["c#0001"] > results["c#0000"]

    def test_k_limits_results(self, kb_index):
        results = retrieve(kb_index, "策略", k=3)
        assert len(results) == 3

    def test_rejects_bad_arguments(self, kb_index):
        with pytest.raises(ValueError, match="k must be >= 1"):
            retrieve(kb_index, "策略", k=0)
        with pytest.raises(ValueError, match="empty query"):
            retrieve(kb_index, "   ", k=3)


class TestKbIndexFile:
    def test_round_trip(self, kb_index, tmp_path):
        path = tmp_path / "index.jsonl"
        save_kb_index(kb_index, path)
        assert load_kb_index(path) == kb_index

    def test_default_chunk_len(self):
        assert DEFAULT_CHUNK_LEN == 400
