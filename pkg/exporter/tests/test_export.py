import json
import logging
import random
import string
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from chde_export import CorpusDoc, ExportConfig, ExportError, export_embeddings, load_doc
from chde_export.export import _chunk_plan


def _cfg(model_dir, corpus, out, **kwargs):
    return ExportConfig(model=str(model_dir), corpus=str(corpus), out=str(out), **kwargs)


def _write_doc(tmp_path, record, name="doc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(record), encoding="utf-8")
    return path


def test_exported_store_round_trips(model_dir, corpus_dir, tmp_path, read_store, acceptance):
    """Store passes the resolver's validation, reads back through its
    loader, and records the model hidden size in the header."""
    name = "store round trip"
    try:
        out = tmp_path / "embeddings.chde"
        export_embeddings(_cfg(model_dir, corpus_dir, out))

        version, d_lm, raw = read_store(out)
        assert version == 1
        assert d_lm == 32
        assert sorted(raw) == ["doc-a", "doc-b"]

        proc = subprocess.run(
            [sys.executable, "-m", "discoref.cli", "export-check",
             "--store", str(out), "--corpus", str(corpus_dir)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr + proc.stdout
        assert "store OK: 2 documents, width 32" in proc.stdout

        discoref = pytest.importorskip("discoref")
        store = discoref.load_store(out)
        assert store.d_lm == 32
        for doc in discoref.load_corpus(corpus_dir):
            averaged = discoref.average_subtokens(store, doc)
            assert averaged.shape == (doc.n_tokens, 32)
            assert np.isfinite(averaged).all()
    except BaseException as exc:
        line = f"{name}: FAIL ({exc!r})"
        print(line)
        acceptance(line)
        raise
    line = f"{name}: PASS (export-check OK, resolver reads it back, header width 32)"
    print(line)
    acceptance(line)


def test_export_twice_writes_identical_bytes(model_dir, corpus_dir, tmp_path):
    first = tmp_path / "one.chde"
    second = tmp_path / "two.chde"
    export_embeddings(_cfg(model_dir, corpus_dir, first))
    export_embeddings(_cfg(model_dir, corpus_dir, second))
    assert first.read_bytes() == second.read_bytes()


def test_alignment_structure(model_dir, corpus_dir, tmp_path, read_store):
    out = tmp_path / "store.chde"
    export_embeddings(_cfg(model_dir, corpus_dir, out))
    _, _, docs = read_store(out)

    # doc-a: one subtoken per word in this vocabulary, two paragraphs
    paragraphs = docs["doc-a"]
    assert len(paragraphs) == 2
    assert paragraphs[0][1].tolist() == [0, 1, 2, 3, 4, 5, 6]
    assert paragraphs[1][1].tolist() == [7, 8, 9, 10, 11]
    assert paragraphs[0][0].shape == (7, 32)

    # doc-b used the fallback splitter: 10 tokens across two paragraphs,
    # every token covered, alignment nondecreasing inside a paragraph
    covered = set()
    for vectors, alignment in docs["doc-b"]:
        assert vectors.shape[0] == alignment.shape[0]
        kept = alignment[alignment >= 0]
        assert (np.diff(kept) >= 0).all()
        covered.update(kept.tolist())
    assert covered == set(range(10))


def test_corpus_reader_fallback_and_paragraphs(tmp_path):
    path = _write_doc(tmp_path, {"id": "x", "text": "a b\n\nc d. e"})
    doc = load_doc(path)
    assert doc.spans == [(0, 1), (2, 3), (5, 6), (7, 8), (8, 9), (10, 11)]
    # the empty line owns no token and contributes no paragraph
    assert doc.paragraphs == [(0, 1), (2, 5)]


def test_corpus_reader_rejects_bad_documents(tmp_path):
    with pytest.raises(ExportError, match="missing or non-string"):
        load_doc(_write_doc(tmp_path, {"id": "x"}))
    with pytest.raises(ExportError, match="pairs"):
        load_doc(_write_doc(tmp_path, {"text": "ab", "tokens": [[0]]}, "p.json"))
    with pytest.raises(ExportError, match="out of order or bounds"):
        load_doc(_write_doc(tmp_path, {"text": "ab", "tokens": [[1, 2], [0, 1]]}, "q.json"))
    with pytest.raises(ExportError, match="cannot read"):
        load_doc(tmp_path / "absent.json")


def test_chunk_plan_partitions_positions():
    rng = random.Random(3)
    for _ in range(200):
        window = rng.randint(2, 30)
        overlap = rng.randint(1, window - 1)
        n = rng.randint(1, 120)
        pieces = _chunk_plan(n, window, overlap)
        expected_next = 0
        for start, emit_from, emit_to in pieces:
            assert emit_from == expected_next
            assert start <= emit_from
            assert emit_to - start <= window
            assert emit_from < emit_to
            expected_next = emit_to
        assert expected_next == n
        if len(pieces) > 1:
            for start, emit_from, _ in pieces[1:]:
                assert emit_from - start >= 1  # later chunks carry left context


def test_long_paragraph_is_chunked(model_dir, tmp_path, read_store, caplog):
    letters = [string.ascii_lowercase[i % 26] for i in range(40)]
    record = {"id": "long", "text": " ".join(letters)}
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    _write_doc(corpus, record, "long.json")

    chunked = tmp_path / "chunked.chde"
    with caplog.at_level(logging.WARNING, logger="chde_export"):
        export_embeddings(_cfg(model_dir, corpus, chunked, window=8, overlap=2))
    assert any("chunks" in message for message in caplog.messages)

    whole = tmp_path / "whole.chde"
    export_embeddings(_cfg(model_dir, corpus, whole))

    _, _, chunked_docs = read_store(chunked)
    _, _, whole_docs = read_store(whole)
    (vec_c, align_c), = chunked_docs["long"]
    (vec_w, align_w), = whole_docs["long"]
    assert align_c.tolist() == align_w.tolist() == list(range(40))
    assert vec_c.shape == vec_w.shape == (40, 32)
    assert np.isfinite(vec_c).all()

    proc = subprocess.run(
        [sys.executable, "-m", "discoref.cli", "export-check", "--store", str(chunked), "--corpus", str(corpus)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr + proc.stdout


def test_first_policy_assigns_boundary_crossers_to_first_token(model_dir, tmp_path, read_store):
    # the vocabulary holds "ab", so "abcd" splits as ab ##c ##d and the
    # first piece crosses the token boundary after character 1
    record = {"id": "cross", "text": "abcd", "tokens": [[0, 1], [1, 4]]}
    corpus = _write_doc(tmp_path, record, "cross.json")
    out = tmp_path / "cross.chde"
    export_embeddings(_cfg(model_dir, corpus, out))
    _, _, docs = read_store(out)
    (_, alignment), = docs["cross"]
    assert alignment.tolist() == [0, 1, 1]

    with pytest.raises(ExportError, match="cross a token boundary"):
        export_embeddings(_cfg(model_dir, corpus, tmp_path / "strict.chde", alignment_policy="strict"))


def test_orphan_subtokens_get_minus_one(model_dir, tmp_path, read_store):
    # "x" sits between the two declared tokens, inside the encoded span
    record = {"id": "orphan", "text": "a x b", "tokens": [[0, 1], [4, 5]]}
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    _write_doc(corpus, record, "orphan.json")
    out = tmp_path / "orphan.chde"
    export_embeddings(_cfg(model_dir, corpus, out))
    _, _, docs = read_store(out)
    (_, alignment), = docs["orphan"]
    assert alignment.tolist() == [0, -1, 1]

    # the resolver ignores -1 rows when averaging
    proc = subprocess.run(
        [sys.executable, "-m", "discoref.cli", "export-check", "--store", str(out), "--corpus", str(corpus)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr + proc.stdout

    with pytest.raises(ExportError, match="belong to no token"):
        export_embeddings(_cfg(model_dir, corpus, tmp_path / "strict.chde", alignment_policy="strict"))


def test_config_errors(model_dir, corpus_dir, tmp_path):
    out = tmp_path / "never.chde"
    with pytest.raises(ExportError, match="alignment policy"):
        export_embeddings(_cfg(model_dir, corpus_dir, out, alignment_policy="median"))
    with pytest.raises(ExportError, match="at least 2"):
        export_embeddings(_cfg(model_dir, corpus_dir, out, window=1))
    with pytest.raises(ExportError, match="smaller than the window"):
        export_embeddings(_cfg(model_dir, corpus_dir, out, window=8, overlap=8))
    with pytest.raises(ExportError, match="no such corpus"):
        export_embeddings(_cfg(model_dir, tmp_path / "missing", out))
    with pytest.raises(ExportError, match="cannot load model"):
        export_embeddings(_cfg(tmp_path / "no-model", corpus_dir, out))
    assert not out.exists()


def test_failed_export_leaves_no_output(corpus_dir, tmp_path):
    out_dir = tmp_path / "fresh"
    with pytest.raises(ExportError):
        export_embeddings(ExportConfig(model=str(tmp_path / "no-model"), corpus=str(corpus_dir), out=str(out_dir / "s.chde")))
    assert not out_dir.exists()


def test_cli_exports_and_checks(model_dir, corpus_dir, tmp_path, capsys):
    from chde_export.cli import main

    out = tmp_path / "cli.chde"
    code = main(["--corpus", str(corpus_dir), "--model", str(model_dir), "--out", str(out), "--check"])
    captured = capsys.readouterr()
    assert code == 0
    assert "wrote" in captured.out
    assert out.exists()

    code = main(["--corpus", str(corpus_dir), "--model", str(tmp_path / "nope"), "--out", str(tmp_path / "x.chde")])
    captured = capsys.readouterr()
    assert code == 1
    assert "error: cannot load model" in captured.err
