"""Minimal reader for the corpus interchange format.

Only what the exporter needs: document text, token character spans,
and the grouping of tokens into paragraphs (one per text line).
Documents are JSON objects with "text" and optionally "tokens"; when
explicit spans are absent the documented fallback split applies (word
characters cohere, punctuation splits off).
"""

from __future__ import annotations

import json
import re
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

from .errors import ExportError

TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass
class CorpusDoc:
    id: str
    text: str
    spans: list[tuple[int, int]]
    paragraphs: list[tuple[int, int]]


def _paragraphs(text: str, spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Inclusive token ranges, one per text line that owns a token."""
    newlines = [i for i, ch in enumerate(text) if ch == "\n"]
    bounds: list[tuple[int, int]] = []
    current = -1
    for i, (start, _) in enumerate(spans):
        line = bisect_right(newlines, start)
        if line != current:
            bounds.append((i, i))
            current = line
        else:
            bounds[-1] = (bounds[-1][0], i)
    return bounds


def load_doc(path: Path) -> CorpusDoc:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ExportError(f"{path}: cannot read corpus document: {exc}") from exc
    text = data.get("text") if isinstance(data, dict) else None
    if not isinstance(text, str):
        raise ExportError(f"{path}: missing or non-string 'text'")

    raw = data.get("tokens")
    if raw is None:
        spans = [(m.start(), m.end()) for m in TOKEN_RE.finditer(text)]
    else:
        try:
            spans = [(int(s), int(e)) for s, e in raw]
        except (TypeError, ValueError) as exc:
            raise ExportError(f"{path}: 'tokens' must be [start, end] pairs") from exc
        prev_end = 0
        for i, (s, e) in enumerate(spans):
            if not (0 <= s < e <= len(text)) or s < prev_end:
                raise ExportError(f"{path}: token {i} span ({s}, {e}) out of order or bounds")
            prev_end = e

    doc_id = data.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        doc_id = path.stem
    return CorpusDoc(doc_id, text, spans, _paragraphs(text, spans))


def load_corpus(path: Path) -> list[CorpusDoc]:
    """A directory of *.json documents (sorted by filename) or one file."""
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise ExportError(f"{path}: no *.json documents found")
        return [load_doc(p) for p in files]
    if path.is_file():
        return [load_doc(path)]
    raise ExportError(f"{path}: no such corpus")
