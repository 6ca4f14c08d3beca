"""Document model, corpus loading, and corpus statistics.

A document is plain text plus a tokenization with character offsets,
paragraph boundaries (one paragraph per text line), and gold entity
clusters given as sets of token spans. The on-disk form keeps mentions
as character spans; alignment to tokens happens at load time.
"""

from __future__ import annotations

import json
import logging
import re
import statistics
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, CorpusFormatError

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class Token:
    """One token: its surface string and half-open character span."""

    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True, order=True)
class MentionSpan:
    """Inclusive token-index span [start, end] of one mention."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"bad mention span ({self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class Document:
    """A tokenized document with paragraph bounds and gold clusters.

    ``paragraph_bounds`` holds inclusive token-index ranges, one per
    non-empty text line, in order, covering all tokens. ``clusters``
    is a list of frozensets of :class:`MentionSpan`; singleton clusters
    are allowed. ``dropped_spans`` counts gold character spans that did
    not align with token boundaries at load time; it is diagnostic only
    and excluded from equality.
    """

    id: str
    text: str
    tokens: list[Token]
    paragraph_bounds: list[tuple[int, int]]
    clusters: list[frozenset[MentionSpan]]
    dropped_spans: int = field(default=0, compare=False)

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def span_text(self, span: MentionSpan) -> str:
        return self.text[self.tokens[span.start].char_start : self.tokens[span.end].char_end]

    def char_span(self, span: MentionSpan) -> tuple[int, int]:
        return (self.tokens[span.start].char_start, self.tokens[span.end].char_end)


def split_tokens(text: str) -> list[Token]:
    """Fallback tokenizer: word characters cohere, punctuation splits off."""
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def paragraph_bounds_of(text: str, tokens: list[Token]) -> list[tuple[int, int]]:
    """Group tokens into paragraphs, one paragraph per text line.

    Tokens are assigned to the line containing their first character.
    Lines without tokens contribute no paragraph.
    """
    newlines = [i for i, ch in enumerate(text) if ch == "\n"]
    bounds: list[tuple[int, int]] = []
    current_line = -1
    for i, tok in enumerate(tokens):
        line = bisect_right(newlines, tok.char_start)
        if line != current_line:
            bounds.append((i, i))
            current_line = line
        else:
            bounds[-1] = (bounds[-1][0], i)
    return bounds


def _check_tokens(tokens: list[Token], text: str, where: str) -> None:
    prev_end = 0
    for i, tok in enumerate(tokens):
        if not (0 <= tok.char_start < tok.char_end <= len(text)):
            raise CorpusFormatError(f"{where}: token {i} span ({tok.char_start}, {tok.char_end}) out of bounds")
        if tok.char_start < prev_end:
            raise CorpusFormatError(f"{where}: token {i} overlaps or precedes its predecessor")
        if text[tok.char_start : tok.char_end] != tok.text:
            raise CorpusFormatError(f"{where}: token {i} text does not match its span")
        prev_end = tok.char_end


def document_from_dict(data: dict, doc_id: str, where: str = "document") -> Document:
    """Build a Document from the interchange dict form.

    Expected keys: "text" (required), "tokens" (optional list of
    [start, end) char pairs; the fallback splitter is used when absent),
    "entities" (optional list of clusters, each a list of [start, end)
    char spans). Gold spans that do not land exactly on token boundaries
    are dropped with a logged warning and counted on the result.
    """
    if not isinstance(data, dict):
        raise CorpusFormatError(f"{where}: expected a JSON object")
    text = data.get("text")
    if not isinstance(text, str):
        raise CorpusFormatError(f"{where}: missing or non-string 'text'")

    raw_tokens = data.get("tokens")
    if raw_tokens is None:
        tokens = split_tokens(text)
    else:
        try:
            tokens = [Token(text[s:e], int(s), int(e)) for s, e in raw_tokens]
        except (TypeError, ValueError) as exc:
            raise CorpusFormatError(f"{where}: 'tokens' must be [start, end] integer pairs") from exc
        _check_tokens(tokens, text, where)

    start_index = {tok.char_start: i for i, tok in enumerate(tokens)}
    end_index = {tok.char_end: i for i, tok in enumerate(tokens)}

    clusters: list[frozenset[MentionSpan]] = []
    dropped = 0
    for c, raw_cluster in enumerate(data.get("entities", []) or []):
        members = set()
        for raw_span in raw_cluster:
            try:
                s, e = int(raw_span[0]), int(raw_span[1])
            except (TypeError, ValueError, IndexError) as exc:
                raise CorpusFormatError(f"{where}: entity spans must be [start, end] pairs") from exc
            i = start_index.get(s)
            j = end_index.get(e)
            if i is None or j is None or j < i:
                dropped += 1
                log.warning("%s: cluster %d span (%d, %d) does not align with token boundaries, dropped", where, c, s, e)
                continue
            members.add(MentionSpan(i, j))
        if members:
            clusters.append(frozenset(members))
        elif raw_cluster:
            log.warning("%s: cluster %d lost all spans to misalignment", where, c)

    return Document(
        id=doc_id,
        text=text,
        tokens=tokens,
        paragraph_bounds=paragraph_bounds_of(text, tokens),
        clusters=clusters,
        dropped_spans=dropped,
    )


def load_document(path: str | Path, format: str = "rucoco_json") -> Document:
    """Load one document file. Only the ``rucoco_json`` format is known."""
    if format != "rucoco_json":
        raise ConfigError(f"unknown corpus format {format!r}")
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusFormatError(f"{path}: cannot read: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{path}: invalid JSON at byte {exc.pos}: {exc.msg}") from exc
    doc_id = data.get("id") if isinstance(data, dict) else None
    if not isinstance(doc_id, str) or not doc_id:
        doc_id = path.stem
    return document_from_dict(data, doc_id, where=str(path))


def document_to_dict(doc: Document) -> dict:
    """Interchange dict form of a document; inverse of document_from_dict."""
    clusters = [sorted(doc.char_span(m) for m in cluster) for cluster in doc.clusters]
    clusters.sort()
    return {
        "id": doc.id,
        "text": doc.text,
        "tokens": [[t.char_start, t.char_end] for t in doc.tokens],
        "entities": [[list(span) for span in cluster] for cluster in clusters],
    }


def dump_json(obj, path: str | Path) -> None:
    """Write canonical JSON: sorted keys, two-space indent, UTF-8, newline at end."""
    text = json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def save_document(doc: Document, path: str | Path) -> None:
    dump_json(document_to_dict(doc), path)


def load_corpus(directory: str | Path) -> list[Document]:
    """Load every *.json document under a directory, sorted by filename."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise CorpusFormatError(f"{directory}: no *.json documents found")
    return [load_document(p) for p in paths]


def validate_document(doc: Document) -> list[str]:
    """Return a list of consistency problems; empty means the document is sound."""
    issues: list[str] = []
    prev_end = 0
    for i, tok in enumerate(doc.tokens):
        if not (0 <= tok.char_start < tok.char_end <= len(doc.text)):
            issues.append(f"token {i}: span out of text bounds")
        elif doc.text[tok.char_start : tok.char_end] != tok.text:
            issues.append(f"token {i}: text mismatch")
        if tok.char_start < prev_end:
            issues.append(f"token {i}: overlaps previous token")
        prev_end = max(prev_end, tok.char_end)

    n = len(doc.tokens)
    expected_start = 0
    for p, (a, b) in enumerate(doc.paragraph_bounds):
        if a != expected_start or b < a:
            issues.append(f"paragraph {p}: bounds ({a}, {b}) do not continue the partition")
        expected_start = b + 1
    if doc.paragraph_bounds and expected_start != n:
        issues.append("paragraph bounds do not cover all tokens")
    if not doc.paragraph_bounds and n > 0:
        issues.append("no paragraph bounds despite tokens")

    para_of = {}
    for p, (a, b) in enumerate(doc.paragraph_bounds):
        for t in range(a, b + 1):
            para_of[t] = p
    for c, cluster in enumerate(doc.clusters):
        if not cluster:
            issues.append(f"cluster {c}: empty")
        for m in cluster:
            if m.end >= n:
                issues.append(f"cluster {c}: mention ({m.start}, {m.end}) out of token range")
            elif para_of.get(m.start) != para_of.get(m.end):
                issues.append(f"cluster {c}: mention ({m.start}, {m.end}) crosses a paragraph boundary")
    return issues


@dataclass
class CorpusStats:
    """Aggregate corpus statistics with a table and a JSON form."""

    n_documents: int
    n_clusters: int
    n_mentions: int
    mention_length_mean: float
    mention_length_max: int
    mention_length_hist: dict[int, int]
    length_cap: int
    coverage_at_cap: float
    paragraphs_median: float
    paragraphs_max: int

    def coverage(self, cap: int) -> float:
        """Fraction of mentions no longer than ``cap`` tokens."""
        if self.n_mentions == 0:
            return 0.0
        covered = sum(cnt for ln, cnt in self.mention_length_hist.items() if ln <= cap)
        return covered / self.n_mentions

    def to_json(self) -> dict:
        return {
            "documents": self.n_documents,
            "clusters": self.n_clusters,
            "mentions": self.n_mentions,
            "mention_length": {
                "mean": self.mention_length_mean,
                "max": self.mention_length_max,
                "histogram": {str(k): v for k, v in sorted(self.mention_length_hist.items())},
            },
            "length_cap": self.length_cap,
            "coverage_at_cap": self.coverage_at_cap,
            "paragraphs": {"median": self.paragraphs_median, "max": self.paragraphs_max},
        }

    def format_table(self) -> str:
        rows = [
            ("documents", self.n_documents),
            ("clusters", self.n_clusters),
            ("mentions", self.n_mentions),
            ("mention length mean", f"{self.mention_length_mean:.2f}"),
            ("mention length max", self.mention_length_max),
            (f"coverage at length {self.length_cap}", f"{self.coverage_at_cap:.4f}"),
            ("paragraphs median", self.paragraphs_median),
            ("paragraphs max", self.paragraphs_max),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def corpus_stats(docs: list[Document], length_cap: int = 13) -> CorpusStats:
    """Compute corpus statistics over loaded documents."""
    if not docs:
        raise ConfigError("corpus_stats needs at least one document")
    hist: Counter[int] = Counter()
    n_clusters = 0
    for doc in docs:
        n_clusters += len(doc.clusters)
        for cluster in doc.clusters:
            for m in cluster:
                hist[m.length] += 1
    n_mentions = sum(hist.values())
    total_len = sum(ln * cnt for ln, cnt in hist.items())
    para_counts = [len(doc.paragraph_bounds) for doc in docs]
    stats = CorpusStats(
        n_documents=len(docs),
        n_clusters=n_clusters,
        n_mentions=n_mentions,
        mention_length_mean=(total_len / n_mentions) if n_mentions else 0.0,
        mention_length_max=max(hist) if hist else 0,
        mention_length_hist=dict(hist),
        length_cap=length_cap,
        coverage_at_cap=0.0,
        paragraphs_median=float(statistics.median(para_counts)),
        paragraphs_max=max(para_counts),
    )
    stats.coverage_at_cap = stats.coverage(length_cap)
    return stats
