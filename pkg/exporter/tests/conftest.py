import json
import string
import struct

import numpy as np
import pytest

pytest.importorskip("torch")
pytest.importorskip("transformers")

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("export acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance():
    return record_acceptance


WORDS = ["ab", "anna", "maya", "met", "the", "park", "she", "her", "in", "at", "waved"]


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """A tiny randomly initialized encoder saved locally, no downloads.

    The vocabulary has every ascii letter as both a word start and a
    continuation piece, so any word tokenizes without [UNK], plus a few
    whole words and the "ab" piece used by the boundary tests.
    """
    import torch
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
    from transformers import BertConfig, BertModel, BertTokenizerFast

    letters = list(string.ascii_lowercase)
    vocab_list = (
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        + letters
        + ["##" + c for c in letters]
        + list(string.digits)
        + ["##" + d for d in string.digits]
        + [".", ",", "!", "?"]
        + WORDS
    )
    vocab = {w: i for i, w in enumerate(vocab_list)}

    backend = Tokenizer(models.WordPiece(vocab=vocab, unk_token="[UNK]", max_input_chars_per_word=100))
    backend.normalizer = normalizers.BertNormalizer(lowercase=True)
    backend.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    backend.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B:1 [SEP]:1",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = BertTokenizerFast(
        tokenizer_object=backend,
        unk_token="[UNK]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        pad_token="[PAD]",
        mask_token="[MASK]",
    )

    directory = tmp_path_factory.mktemp("tiny-encoder")
    tokenizer.save_pretrained(directory)
    torch.manual_seed(7)
    config = BertConfig(
        vocab_size=len(vocab_list),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(directory)
    return directory


DOC_A = {
    "id": "doc-a",
    "text": "Anna met Maya in the park.\nShe waved at her.",
    "tokens": [
        [0, 4], [5, 8], [9, 13], [14, 16], [17, 20], [21, 25], [25, 26],
        [27, 30], [31, 36], [37, 39], [40, 43], [43, 44],
    ],
    "entities": [[[0, 4], [27, 30]], [[9, 13], [40, 43]]],
}

# no explicit tokens: exercises the fallback splitter on both sides
DOC_B = {
    "id": "doc-b",
    "text": "Maya met Anna at the park.\nAnna waved.",
    "entities": [[[9, 13], [27, 31]]],
}


@pytest.fixture()
def corpus_dir(tmp_path):
    directory = tmp_path / "corpus"
    directory.mkdir()
    for doc in (DOC_A, DOC_B):
        (directory / f"{doc['id']}.json").write_text(json.dumps(doc), encoding="utf-8")
    return directory


@pytest.fixture(scope="session")
def read_store():
    """Struct-level store parser, independent of either package."""

    def _read(path):
        data = path.read_bytes()
        assert data[:4] == b"CHDE", "bad magic"
        version, d_lm = struct.unpack_from("<II", data, 4)
        off = 12
        docs = {}
        while off < len(data):
            (id_len,) = struct.unpack_from("<I", data, off)
            off += 4
            doc_id = data[off : off + id_len].decode("utf-8")
            off += id_len
            (n_par,) = struct.unpack_from("<I", data, off)
            off += 4
            paragraphs = []
            for _ in range(n_par):
                (n_sub,) = struct.unpack_from("<I", data, off)
                off += 4
                align = np.frombuffer(data, dtype="<i4", count=n_sub, offset=off)
                off += 4 * n_sub
                vecs = np.frombuffer(data, dtype="<f4", count=n_sub * d_lm, offset=off)
                off += 4 * n_sub * d_lm
                paragraphs.append((vecs.reshape(n_sub, d_lm), align))
            docs[doc_id] = paragraphs
        assert off == len(data), "trailing bytes"
        return version, d_lm, docs

    return _read
