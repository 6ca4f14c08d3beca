"""Deterministic synthetic corpora with aligned discourse trees.

Two generation modes share the same assembly machinery:

* "names": entities are repeated proper names from a pool, with some
  later mentions replaced by pronouns whenever the nearest preceding
  name mention belongs to the same entity, so the binding is true by
  construction. Paragraph trees are right-branching chains whose EDU
  nuclearity alternates, which makes the nuclear-count distance grow
  at roughly half the rate of the EDU-index distance.

* "rhetorical": every paragraph is one trial with two candidate
  antecedents sharing the same surface name and one pronoun. The gold
  antecedent is always the candidate at nuclear-count distance exactly
  one from the pronoun; whether that is the linearly nearer or farther
  candidate is decided by a fair coin, and filler material varies, so
  surface and positional cues carry no signal about the answer.

Output is deterministic in (seed, config): the same inputs produce
byte-identical documents and trees.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import Document, MentionSpan, paragraph_bounds_of, split_tokens
from .discourse import RstNode, parse_trees
from .errors import ConfigError

NAME_POOL = (
    "Alice", "Bruno", "Carmen", "Dario", "Elena", "Felix", "Greta", "Hugo",
    "Irene", "Jonas", "Karin", "Leon", "Mira", "Nadia", "Oskar", "Petra",
    "Renata", "Simon", "Tessa", "Viktor",
)

SURNAME_POOL = (
    "Abril", "Berg", "Costa", "Duran", "Eckert", "Fuchs", "Grau", "Horn",
    "Ibarra", "Juhl", "Kranz", "Lindt", "Moser", "Nolte", "Orlov", "Planck",
)

FILLER_POOL = (
    "walked", "near", "the", "old", "harbor", "spoke", "about", "a", "new",
    "plan", "smiled", "during", "long", "meeting", "carried", "small",
    "lantern", "through", "garden", "waited", "quietly", "beside", "river",
    "wrote", "letter", "before", "evening", "train", "found", "coin",
    "under", "bridge", "counted", "boats", "from", "tower", "market",
)

PRONOUNS = ("he", "she", "they", "it")


@dataclass
class SynthConfig:
    """Knobs for the generator. Defaults give a small mixed corpus."""

    mode: str = "names"
    n_entities: int = 3
    mentions_per_entity: int = 4
    n_paragraphs: int = 3
    pronoun_rate: float = 0.3
    surname_rate: float = 0.5
    min_fillers: int = 1
    max_fillers: int = 4
    name_pool: tuple[str, ...] = NAME_POOL
    filler_pool: tuple[str, ...] = FILLER_POOL

    def validate(self) -> None:
        if self.mode not in ("names", "rhetorical"):
            raise ConfigError(f"unknown synthesis mode {self.mode!r}")
        if self.n_entities < 1 or self.mentions_per_entity < 1 or self.n_paragraphs < 1:
            raise ConfigError("entity, mention, and paragraph counts must be positive")
        if self.n_entities > len(self.name_pool):
            raise ConfigError("more entities than names in the pool")
        if not (0.0 <= self.pronoun_rate <= 1.0) or not (0.0 <= self.surname_rate <= 1.0):
            raise ConfigError("rates must lie in [0, 1]")
        if not (0 <= self.min_fillers <= self.max_fillers):
            raise ConfigError("filler bounds must satisfy 0 <= min <= max")
        if not self.filler_pool:
            raise ConfigError("filler pool is empty")


@dataclass
class _Sentence:
    words: list[str]
    # word-index ranges of mentions inside this sentence, with their entity
    mentions: list[tuple[int, int, int]] = field(default_factory=list)
    nuclear: bool = False

    @property
    def text(self) -> str:
        return " ".join(self.words) + "."

    def word_char_range(self, a: int, b: int) -> tuple[int, int]:
        """Char span of words[a..b] relative to the sentence start."""
        start = sum(len(w) + 1 for w in self.words[:a])
        end = start + sum(len(w) + 1 for w in self.words[a : b + 1]) - 1
        return start, end


def _chain_tree(leaf_dicts: list[dict], nuclear: list[bool]) -> dict:
    """Right-branching chain realizing the given leaf nuclearity pattern."""
    if len(leaf_dicts) == 1:
        return leaf_dicts[0]
    head = leaf_dicts[0]
    if len(leaf_dicts) == 2:
        tail = leaf_dicts[1]
        nuc = {(True, True): "NN", (True, False): "NS", (False, True): "SN"}.get((nuclear[0], nuclear[1]))
        if nuc is None:
            raise ValueError("the last two EDUs of a chain cannot both be satellites")
    else:
        tail = _chain_tree(leaf_dicts[1:], nuclear[1:])
        nuc = "NS" if nuclear[0] else "SN"
    return {
        "kind": "rel",
        "label": "Elaboration",
        "nuc": nuc,
        "span": [head["span"][0], tail["span"][1]],
        "children": [head, tail],
    }


def _assemble(doc_id: str, paragraphs: list[list[_Sentence]]) -> tuple[Document, list[RstNode]]:
    """Lay paragraphs out as text, align tokens, build trees and clusters."""
    parts: list[str] = []
    pos = 0
    sent_spans: list[list[tuple[int, int]]] = []
    mention_chars: dict[int, list[tuple[int, int]]] = {}
    for p, sentences in enumerate(paragraphs):
        if p:
            parts.append("\n")
            pos += 1
        spans = []
        for s, sent in enumerate(sentences):
            if s:
                parts.append(" ")
                pos += 1
            start = pos
            parts.append(sent.text)
            pos += len(sent.text)
            spans.append((start, pos))
            for a, b, entity in sent.mentions:
                ra, rb = sent.word_char_range(a, b)
                mention_chars.setdefault(entity, []).append((start + ra, start + rb))
        sent_spans.append(spans)
    text = "".join(parts)

    tokens = split_tokens(text)
    start_of = {t.char_start: i for i, t in enumerate(tokens)}
    end_of = {t.char_end: i for i, t in enumerate(tokens)}
    clusters = []
    for entity in sorted(mention_chars, key=lambda e: min(mention_chars[e])):
        spans = mention_chars[entity]
        clusters.append(frozenset(MentionSpan(start_of[s], end_of[e]) for s, e in spans))

    tree_dicts = []
    for p, sentences in enumerate(paragraphs):
        spans = sent_spans[p]
        # EDU spans tile the paragraph: each extends to the next EDU's start
        leaf_dicts = []
        for s, sent in enumerate(sentences):
            lo = spans[s][0]
            hi = spans[s + 1][0] if s + 1 < len(spans) else spans[s][1]
            leaf_dicts.append({"kind": "edu", "label": "span", "span": [lo, hi], "text": text[lo:hi]})
        tree_dicts.append(_chain_tree(leaf_dicts, [s.nuclear for s in sentences]))
    trees = parse_trees({"paragraph_trees": tree_dicts}, where=doc_id)

    doc = Document(
        id=doc_id,
        text=text,
        tokens=tokens,
        paragraph_bounds=paragraph_bounds_of(text, tokens),
        clusters=clusters,
    )
    return doc, trees


def _fillers(rng: random.Random, cfg: SynthConfig, lo: int | None = None, hi: int | None = None) -> list[str]:
    lo = cfg.min_fillers if lo is None else lo
    hi = cfg.max_fillers if hi is None else hi
    return [rng.choice(cfg.filler_pool) for _ in range(rng.randint(lo, hi))]


def _names_doc(doc_id: str, rng: random.Random, cfg: SynthConfig) -> tuple[Document, list[RstNode]]:
    names = []
    for first in rng.sample(cfg.name_pool, cfg.n_entities):
        if rng.random() < cfg.surname_rate:
            names.append([first, rng.choice(SURNAME_POOL)])
        else:
            names.append([first])
    pronouns = [rng.choice(PRONOUNS) for _ in names]

    schedule = [e for e in range(cfg.n_entities) for _ in range(cfg.mentions_per_entity)]
    rng.shuffle(schedule)

    seen: set[int] = set()
    last_name_entity = -1
    sentences: list[_Sentence] = []
    for entity in schedule:
        use_pronoun = entity in seen and last_name_entity == entity and rng.random() < cfg.pronoun_rate
        mention_words = [pronouns[entity]] if use_pronoun else list(names[entity])
        prefix = _fillers(rng, cfg, 0, 2)
        suffix = _fillers(rng, cfg)
        words = prefix + mention_words + suffix
        if not prefix and use_pronoun:
            words[0] = words[0].capitalize()
        a = len(prefix)
        sentences.append(_Sentence(words=words, mentions=[(a, a + len(mention_words) - 1, entity)]))
        seen.add(entity)
        if not use_pronoun:
            last_name_entity = entity

    n_par = min(cfg.n_paragraphs, len(sentences))
    base, extra = divmod(len(sentences), n_par)
    paragraphs = []
    at = 0
    for p in range(n_par):
        size = base + (1 if p < extra else 0)
        chunk = sentences[at : at + size]
        for s, sent in enumerate(chunk):
            sent.nuclear = s % 2 == 0
        paragraphs.append(chunk)
        at += size
    return _assemble(doc_id, paragraphs)


def _rhetorical_paragraph(rng: random.Random, cfg: SynthConfig, entity_base: int) -> list[_Sentence]:
    """One trial: candidates C1 < C2 with the same name, pronoun P after.

    The nuclearity pattern places the gold candidate at nuclear-count
    distance exactly 1 from P and the decoy anywhere else, with the
    gold's linear side chosen by a fair coin. The final filler EDU is
    always nuclear so any pattern is realizable as a chain.
    """
    name = rng.choice(cfg.name_pool)
    gold_is_near = rng.random() < 0.5

    n_pre = rng.randint(0, 1)
    gap12 = rng.randint(1, 3)
    gap2p = rng.randint(1, 3)
    p1 = n_pre
    p2 = p1 + gap12
    pp = p2 + gap2p
    m = pp + 2

    sentences = []
    for k in range(m):
        if k == p1 or k == p2:
            entity = entity_base if (gold_is_near == (k == p2)) else entity_base + 1
            words = [name] + _fillers(rng, cfg)
            sentences.append(_Sentence(words=words, mentions=[(0, 0, entity)]))
        elif k == pp:
            words = ["It"] + _fillers(rng, cfg)
            sentences.append(_Sentence(words=words, mentions=[(0, 0, entity_base)]))
        else:
            sentences.append(_Sentence(words=_fillers(rng, cfg, 2, 5)))

    nuclear = [False] * m
    for k in range(n_pre):
        nuclear[k] = rng.random() < 0.5
    if gold_is_near:
        nuclear[rng.randint(p2 + 1, pp)] = True
        for k in rng.sample(range(p1 + 1, p2 + 1), rng.randint(1, 2) if gap12 > 1 else 1):
            nuclear[k] = True
    else:
        nuclear[rng.randint(p1 + 1, p2)] = True
    nuclear[m - 1] = True
    for k, sent in enumerate(sentences):
        sent.nuclear = nuclear[k]
    return sentences


def _rhetorical_doc(doc_id: str, rng: random.Random, cfg: SynthConfig) -> tuple[Document, list[RstNode]]:
    paragraphs = []
    for p in range(cfg.n_paragraphs):
        paragraphs.append(_rhetorical_paragraph(rng, cfg, entity_base=2 * p))
    return _assemble(doc_id, paragraphs)


def generate_synthetic_corpus(
    seed: int, n_docs: int, cfg: SynthConfig | None = None
) -> list[tuple[Document, list[RstNode]]]:
    """Generate ``n_docs`` documents with aligned paragraph trees."""
    cfg = cfg or SynthConfig()
    cfg.validate()
    if n_docs < 1:
        raise ConfigError("n_docs must be positive")
    out = []
    for i in range(n_docs):
        rng = random.Random(f"{seed}:{cfg.mode}:{i}")
        doc_id = f"synth-{i:04d}"
        if cfg.mode == "names":
            out.append(_names_doc(doc_id, rng, cfg))
        else:
            out.append(_rhetorical_doc(doc_id, rng, cfg))
    return out
