import json
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from settlekit.corpus import DocStatus, Document, SourceKind, content_id
from settlekit.evalhsc import CANONICAL_SCHEMA, EvalItem

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def make_doc(
    text: str,
    order: int,
    kind: SourceKind = SourceKind.STANDARD,
    status: DocStatus = DocStatus.FILTERED,
) -> Document:
    return Document(
        id=content_id(kind, text),
        source_kind=kind,
        source_path=f"mem://{order}",
        title=None,
        raw_text=text,
        clean_text=text,
        status=status,
        reject_reason=None,
        ingest_order=order,
    )


def canonical_evalset() -> list[EvalItem]:
    """A full 300-item set matching the canonical schema exactly."""
    items = []
    for cat in CANONICAL_SCHEMA:
        for i in range(cat.question_count):
            items.append(
                EvalItem(
                    id=f"{cat.dimension.value}-{i:03d}",
                    dimension=cat.dimension,
                    subclass=f"{cat.dimension.value}-s{i % cat.subclass_count}",
                    question=f"问题 {cat.dimension.value} {i}",
                )
            )
    return items


def _jitter(rng: random.Random, text: str) -> str:
    """Cosmetic edits that leave the normalized form unchanged."""
    choice = rng.randrange(4)
    if choice == 0:
        return text + "  \n"
    if choice == 1:
        return "\t" + text
    if choice == 2:
        return text.replace(" ", "  ")
    out = []
    for ch in text:
        out.append(ch.upper() if ch.isascii() and ch.isalpha() and rng.random() < 0.5 else ch)
    return "".join(out)


def build_dedup_corpus(n: int = 500, seed: int = 42) -> list[Document]:
    """Generated corpus with planted article and sentence duplicates.

    At least 10% of documents are whole-article copies of earlier ones and
    at least 10% contain sentence copies >= 30 normalized characters, both
    disguised by normalization-invariant jitter.  A short refrain sentence
    (below the length threshold) recurs throughout and must survive dedup.
    """
    rng = random.Random(seed)
    places = ["滨水空间", "后工业场地", "校园", "社区公园", "历史街区", "生活圈"]
    docs: list[Document] = []
    sentence_bank: list[str] = []

    def fresh_sentence(d: int, s: int) -> str:
        place = places[rng.randrange(len(places))]
        body = (
            f"文档{d}第{s}句：设计团队在{place}项目中提出了第{rng.randrange(1000)}号策略，"
            "以改善雨洪管理与公共空间品质。"
        )
        if rng.random() < 0.3:
            body = (
                f"Doc {d} item {s}: strategy {rng.randrange(1000)} improves stormwater "
                f"resilience near the {rng.randrange(100)}th block."
            )
        return body

    # every 8th document is an article duplicate, every 6th borrows a
    # sentence, so both dedup paths are exercised for any n and seed
    for d in range(1, n + 1):
        if docs and d % 8 == 0:
            source = docs[rng.randrange(len(docs))]
            text = _jitter(rng, source.clean_text)
        else:
            sentences = [fresh_sentence(d, s) for s in range(rng.randrange(2, 6))]
            if sentence_bank and d % 6 == 0:
                borrowed = sentence_bank[rng.randrange(len(sentence_bank))]
                sentences.insert(rng.randrange(len(sentences) + 1), _jitter(rng, borrowed))
            if rng.random() < 0.4:
                sentences.append("同上。")
            sentence_bank.extend(s for s in sentences if len(s) >= 30)
            text = " ".join(sentences)
        kind = [SourceKind.STANDARD, SourceKind.BOOK, SourceKind.WEBSITE][d % 3]
        docs.append(make_doc(text, d, kind=kind))
    return docs


def write_pipeline_workspace(root: Path) -> Path:
    """Raw inputs, lexicon, graph, and config for end-to-end runs.

    Uses paths relative to root so runs from different directories stay
    byte-comparable.
    """
    raw = root / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    base = (
        "海绵城市建设应当遵循生态优先的基本原则，统筹自然降水、地表水和地下水的系统性。"
        "城市规划应当尊重场地原有的水文条件，保护河流、湖泊、湿地等天然调蓄空间。"
        "绿色屋顶、透水铺装和下凹式绿地是常见的低影响开发设施，应结合场地条件选用。"
    )
    shared = "雨水花园的设计应当兼顾蓄渗功能与景观效果，并考虑长期维护的便利性。"
    (raw / "std_a.txt").write_text(base + shared, encoding="utf-8")
    (raw / "std_b.txt").write_text(
        "住宅设计规范对居住空间的日照、采光和通风提出了明确要求。"
        + shared
        + "社区公共空间应当满足无障碍通行的要求，方便全龄居民使用。"
        "韧性城市强调基础设施在冲击之下维持基本运转并快速恢复的能力。",
        encoding="utf-8",
    )
    (raw / "std_c.txt").write_text(base + shared, encoding="utf-8")
    (raw / "page.html").write_text(
        "<html><body><h1>滨水空间更新</h1><p>滨水步道的改造应当保持岸线的连续性，"
        "为市民提供亲水活动的场所。</p><table><tr><td>80%</td></tr></table>"
        "<img src='x.jpg'/><p>详见 https://example.com/a 页面。</p></body></html>",
        encoding="utf-8",
    )
    (raw / "empty.txt").write_text("   ", encoding="utf-8")
    (raw / "ad.txt").write_text(
        "本文包含博彩推广内容，点击链接立即注册领取优惠。这是一段足够长的句子用来通过长度阈值检查。",
        encoding="utf-8",
    )
    (root / "lexicon.txt").write_text("# blocked terms\n博彩\n", encoding="utf-8")
    (root / "kg.tsv").write_text(
        "!functional 属于\n海绵城市\t属于\t设计理念\n韧性城市\t属于\t设计理念\n",
        encoding="utf-8",
    )
    config = {
        "paths": {
            "corpus_store": "out/corpus_store.jsonl",
            "lexicon": "lexicon.txt",
            "kg_file": "kg.tsv",
            "kb_source_dir": "raw",
            "output_dir": "out",
        },
        "synth": {"seed": 11, "max_turns": 4},
    }
    path = root / "config.json"
    path.write_text(json.dumps(config, ensure_ascii=False, indent=1), encoding="utf-8")
    return path


@pytest.fixture
def pipeline_workspace(tmp_path: Path) -> Path:
    return write_pipeline_workspace(tmp_path)
