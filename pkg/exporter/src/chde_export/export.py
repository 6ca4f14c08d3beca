"""Run a pretrained transformer over corpus paragraphs, write a store.

Each paragraph is encoded separately. The final layer's hidden states
are kept for content subtokens together with the index of the corpus
token each subtoken belongs to; special tokens are dropped. Paragraphs
longer than the model window are split into overlapping chunks: every
position keeps the states from the first chunk covering it, later
chunks exist to give their tail fresh left context. Chunked paragraphs
are logged.
"""

from __future__ import annotations

import logging
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CorpusDoc, load_corpus
from .errors import ExportError
from .store import write_store

log = logging.getLogger("chde_export")

POLICIES = ("first", "strict")

# tokenizers use values like 1e30 for "no length limit"
_UNBOUNDED = 100_000


@dataclass
class ExportConfig:
    model: str
    corpus: str
    out: str
    alignment_policy: str = "first"
    window: int | None = None
    overlap: int | None = None

    def validate(self) -> None:
        if self.alignment_policy not in POLICIES:
            raise ExportError(f"unknown alignment policy {self.alignment_policy!r}")
        if self.window is not None and self.window < 2:
            raise ExportError("window must be at least 2 subtokens")


def _load_model(name: str):
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name)
    except Exception as exc:  # the hub raises a zoo of types here
        raise ExportError(f"cannot load model {name!r}: {exc}") from exc
    if not tokenizer.is_fast:
        raise ExportError("a fast tokenizer is required for character offsets")
    model.eval()
    return tokenizer, model


def _content_window(cfg: ExportConfig, tokenizer, model) -> tuple[int, int]:
    """Resolve (window, overlap) in content subtokens, specials excluded."""
    if cfg.window is not None:
        window = cfg.window
    else:
        specials = tokenizer.num_special_tokens_to_add()
        limits = [getattr(model.config, "max_position_embeddings", None)]
        if tokenizer.model_max_length and tokenizer.model_max_length < _UNBOUNDED:
            limits.append(tokenizer.model_max_length)
        limits = [x for x in limits if x]
        if not limits:
            raise ExportError("cannot determine the model window; pass one explicitly")
        window = min(limits) - specials
    if window < 2:
        raise ExportError(f"model window of {window} content subtokens is too small")
    overlap = cfg.overlap if cfg.overlap is not None else max(1, window // 4)
    if not 0 < overlap < window:
        raise ExportError(f"overlap {overlap} must be positive and smaller than the window {window}")
    return window, overlap


def _align(doc: CorpusDoc, offsets, lo: int, hi: int, policy: str, where: str) -> np.ndarray:
    """Global token index per subtoken; -1 when no token owns its first char."""
    starts = [doc.spans[i][0] for i in range(lo, hi + 1)]
    ends = [doc.spans[i][1] for i in range(lo, hi + 1)]
    out = np.empty(len(offsets), dtype=np.int64)
    for k, (a, b) in enumerate(offsets):
        j = bisect_right(starts, a) - 1
        if j >= 0 and a < ends[j]:
            if policy == "strict" and b > ends[j]:
                raise ExportError(f"{where}: subtoken chars [{a}, {b}) cross a token boundary")
            out[k] = lo + j
        elif policy == "strict":
            raise ExportError(f"{where}: subtoken chars [{a}, {b}) belong to no token")
        else:
            out[k] = -1
    return out


def _chunk_plan(n: int, window: int, overlap: int) -> list[tuple[int, int, int]]:
    """(chunk start, emit from, emit to) triples covering positions 0..n-1."""
    pieces = []
    emitted = 0
    start = 0
    while emitted < n:
        start = min(start, max(0, n - window))
        end = min(start + window, n)
        pieces.append((start, emitted, end))
        emitted = end
        start = end - overlap
    return pieces


def _encode_paragraph(tokenizer, model, ids: list[int], window: int, overlap: int, where: str) -> np.ndarray:
    import torch

    d_lm = int(model.config.hidden_size)
    n = len(ids)
    if n == 0:
        return np.zeros((0, d_lm), dtype=np.float32)
    pieces = _chunk_plan(n, window, overlap)
    if len(pieces) > 1:
        log.warning(
            "%s: %d subtokens exceed the %d-subtoken window, encoding %d chunks with overlap %d",
            where, n, window, len(pieces), overlap,
        )
    # wrap each chunk in the tokenizer's sequence delimiters when it has any
    prefix = [tokenizer.cls_token_id] if tokenizer.cls_token_id is not None else []
    suffix = [tokenizer.sep_token_id] if tokenizer.sep_token_id is not None else []
    rows = np.empty((n, d_lm), dtype=np.float32)
    for start, emit_from, emit_to in pieces:
        chunk = list(ids[start : start + window])
        batch = torch.tensor([prefix + chunk + suffix], dtype=torch.long)
        hidden = model(input_ids=batch, attention_mask=torch.ones_like(batch)).last_hidden_state
        states = hidden[0].cpu().numpy().astype(np.float32, copy=False)
        states = states[len(prefix) : len(prefix) + len(chunk)]
        rows[emit_from:emit_to] = states[emit_from - start : emit_to - start]
    return rows


def export_embeddings(cfg: ExportConfig) -> Path:
    """Encode every corpus document and write the store; returns its path."""
    import torch

    cfg.validate()
    docs = load_corpus(Path(cfg.corpus))
    tokenizer, model = _load_model(cfg.model)
    window, overlap = _content_window(cfg, tokenizer, model)
    d_lm = int(model.config.hidden_size)

    payload = []
    with torch.inference_mode():
        for doc in docs:
            paragraphs = []
            for p, (lo, hi) in enumerate(doc.paragraphs):
                where = f"{doc.id} paragraph {p}"
                char_lo = doc.spans[lo][0]
                char_hi = doc.spans[hi][1]
                enc = tokenizer(
                    doc.text[char_lo:char_hi],
                    add_special_tokens=False,
                    return_offsets_mapping=True,
                )
                offsets = [(a + char_lo, b + char_lo) for a, b in enc["offset_mapping"]]
                alignment = _align(doc, offsets, lo, hi, cfg.alignment_policy, where)
                vectors = _encode_paragraph(tokenizer, model, enc["input_ids"], window, overlap, where)
                paragraphs.append((vectors, alignment))
            payload.append((doc.id, paragraphs))
            log.info("%s: %d paragraphs encoded", doc.id, len(paragraphs))
    return write_store(payload, d_lm, cfg.out)
