"""Token encodings: stored language-model vectors, compression, spans.

Subtoken vectors come precomputed in a binary store, one matrix per
paragraph with a subtoken-to-token alignment. They are averaged per
token, compressed by a bidirectional LSTM whose state resets at
paragraph boundaries, and turned into span representations of the form
[first token; last token; attention-weighted sum over the span].
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .corpus import Document
from .errors import AlignmentError, ConfigError, NumericError, StoreFormatError

STORE_MAGIC = b"CHDE"
STORE_VERSION = 1


@dataclass
class ParagraphEmbedding:
    """Subtoken vectors for one paragraph plus their token alignment.

    ``alignment[k]`` is the global token index subtoken ``k`` belongs
    to, or -1 for special subtokens that belong to no token.
    """

    vectors: np.ndarray
    alignment: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        self.alignment = np.asarray(self.alignment, dtype=np.int32)
        if self.vectors.ndim != 2 or self.alignment.shape != (self.vectors.shape[0],):
            raise StoreFormatError("paragraph embedding shapes disagree")


class EmbeddingStore:
    """In-memory map from document id to per-paragraph embeddings."""

    def __init__(self, d_lm: int):
        if d_lm < 1:
            raise ConfigError("embedding width must be positive")
        self.d_lm = d_lm
        self.docs: dict[str, list[ParagraphEmbedding]] = {}

    def add(self, doc_id: str, paragraphs: list[ParagraphEmbedding]) -> None:
        if doc_id in self.docs:
            raise StoreFormatError(f"duplicate document id {doc_id!r} in store")
        for p in paragraphs:
            if p.vectors.shape[1] != self.d_lm:
                raise StoreFormatError(f"{doc_id}: paragraph width {p.vectors.shape[1]} != store width {self.d_lm}")
        self.docs[doc_id] = paragraphs

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.docs


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise StoreFormatError(f"truncated store: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def _read_u32(f, what: str) -> int:
    return struct.unpack("<I", _read_exact(f, 4, what))[0]


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(STORE_MAGIC)
        f.write(struct.pack("<II", STORE_VERSION, store.d_lm))
        for doc_id, paragraphs in store.docs.items():
            id_bytes = doc_id.encode("utf-8")
            f.write(struct.pack("<I", len(id_bytes)))
            f.write(id_bytes)
            f.write(struct.pack("<I", len(paragraphs)))
            for p in paragraphs:
                f.write(struct.pack("<I", p.vectors.shape[0]))
                f.write(p.alignment.astype("<i4").tobytes())
                f.write(np.ascontiguousarray(p.vectors, dtype="<f4").tobytes())


def load_store(path: str | Path) -> EmbeddingStore:
    """Read a store file; documents follow the header until end of file."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != STORE_MAGIC:
            raise StoreFormatError(f"{path}: bad magic {magic!r}")
        version = _read_u32(f, "version")
        if version != STORE_VERSION:
            raise StoreFormatError(f"{path}: unsupported store version {version}")
        d_lm = _read_u32(f, "width")
        store = EmbeddingStore(d_lm)
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise StoreFormatError(f"{path}: truncated document header")
            (id_len,) = struct.unpack("<I", head)
            doc_id = _read_exact(f, id_len, "document id").decode("utf-8")
            n_par = _read_u32(f, f"paragraph count of {doc_id!r}")
            paragraphs = []
            for k in range(n_par):
                n_sub = _read_u32(f, f"subtoken count ({doc_id!r} paragraph {k})")
                align = np.frombuffer(_read_exact(f, 4 * n_sub, "alignment"), dtype="<i4")
                mat = np.frombuffer(_read_exact(f, 4 * n_sub * d_lm, "vectors"), dtype="<f4")
                mat = mat.reshape(n_sub, d_lm)
                if not np.isfinite(mat).all():
                    raise StoreFormatError(f"{path}: non-finite vectors in {doc_id!r} paragraph {k}")
                if (align < -1).any():
                    raise StoreFormatError(f"{path}: alignment below -1 in {doc_id!r} paragraph {k}")
                paragraphs.append(ParagraphEmbedding(mat.copy(), align.copy()))
            store.add(doc_id, paragraphs)
    return store


def average_subtokens(store: EmbeddingStore, doc: Document) -> np.ndarray:
    """Average each token's subtoken vectors into one row per token.

    Sums run in float64 in storage order before the final cast back to
    float32. Tokens no subtoken maps to, and alignments pointing past
    the document's tokens, are alignment errors.
    """
    if doc.id not in store.docs:
        raise AlignmentError(f"store has no embeddings for document {doc.id!r}")
    n = doc.n_tokens
    sums = np.zeros((n, store.d_lm), dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)
    for k, par in enumerate(store.docs[doc.id]):
        align = par.alignment
        if align.size and align.max() >= n:
            raise AlignmentError(f"{doc.id}: paragraph {k} alignment points past token {n - 1}")
        valid = align >= 0
        np.add.at(sums, align[valid], par.vectors[valid].astype(np.float64))
        np.add.at(counts, align[valid], 1)
    bare = np.flatnonzero(counts == 0)
    if bare.size:
        shown = ", ".join(map(str, bare[:10]))
        raise AlignmentError(f"{doc.id}: tokens without subtokens: {shown}" + (" ..." if bare.size > 10 else ""))
    return (sums / counts[:, None]).astype(np.float32)


def _unit_vector(seed: int, token_text: str, d_lm: int) -> np.ndarray:
    key = hashlib.blake2b(f"{seed}:{token_text}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(key, "little"))
    v = rng.standard_normal(d_lm)
    return (v / np.linalg.norm(v)).astype(np.float32)


def synthetic_embeddings(docs: list[Document], d_lm: int, seed: int) -> EmbeddingStore:
    """Deterministic stand-in for a language model: one unit vector per
    distinct lowercased token string, one subtoken per token."""
    if d_lm < 8:
        raise ConfigError("synthetic embedding width must be at least 8")
    store = EmbeddingStore(d_lm)
    cache: dict[str, np.ndarray] = {}
    for doc in docs:
        paragraphs = []
        for a, b in doc.paragraph_bounds:
            rows = []
            for t in range(a, b + 1):
                text = doc.tokens[t].text.lower()
                vec = cache.get(text)
                if vec is None:
                    vec = cache[text] = _unit_vector(seed, text, d_lm)
                rows.append(vec)
            paragraphs.append(ParagraphEmbedding(np.stack(rows), np.arange(a, b + 1, dtype=np.int32)))
        store.add(doc.id, paragraphs)
    return store


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class EncoderParams:
    """Weights of the BiLSTM compressor and the span attention vector.

    The compressed width d_c splits evenly between directions; gate
    blocks inside each 4H-wide weight follow the order input, forget,
    cell, output.
    """

    d_lm: int
    d_c: int
    wx_f: Tensor
    wh_f: Tensor
    b_f: Tensor
    wx_b: Tensor
    wh_b: Tensor
    b_b: Tensor
    attn: Tensor

    @classmethod
    def create(cls, d_lm: int, d_c: int, rng: np.random.Generator) -> "EncoderParams":
        if d_c < 2 or d_c % 2:
            raise ConfigError("compressed width must be a positive even number")
        h = d_c // 2

        def lstm_bias():
            b = np.zeros(4 * h)
            b[h : 2 * h] = 1.0
            return b

        return cls(
            d_lm=d_lm,
            d_c=d_c,
            wx_f=ag.param(xavier_uniform(rng, (d_lm, 4 * h))),
            wh_f=ag.param(xavier_uniform(rng, (h, 4 * h))),
            b_f=ag.param(lstm_bias()),
            wx_b=ag.param(xavier_uniform(rng, (d_lm, 4 * h))),
            wh_b=ag.param(xavier_uniform(rng, (h, 4 * h))),
            b_b=ag.param(lstm_bias()),
            attn=ag.param(xavier_uniform(rng, (d_c,))),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {
            "enc.wx_f": self.wx_f, "enc.wh_f": self.wh_f, "enc.b_f": self.b_f,
            "enc.wx_b": self.wx_b, "enc.wh_b": self.wh_b, "enc.b_b": self.b_b,
            "enc.attn": self.attn,
        }


def _lstm_direction(wx: Tensor, wh: Tensor, b: Tensor, x: Tensor, reverse: bool) -> list[Tensor]:
    n = x.shape[0]
    h_size = wh.shape[0]
    pre = ag.add(ag.matmul(x, wx), b)
    h = ag.constant(np.zeros(h_size))
    c = ag.constant(np.zeros(h_size))
    out: list[Tensor | None] = [None] * n
    steps = range(n - 1, -1, -1) if reverse else range(n)
    for t in steps:
        z = ag.add(ag.row(pre, t), ag.vecmat(h, wh))
        i = ag.sigmoid(ag.segment(z, 0, h_size))
        f = ag.sigmoid(ag.segment(z, h_size, 2 * h_size))
        g = ag.tanh(ag.segment(z, 2 * h_size, 3 * h_size))
        o = ag.sigmoid(ag.segment(z, 3 * h_size, 4 * h_size))
        c = ag.add(ag.mul(f, c), ag.mul(i, g))
        h = ag.mul(o, ag.tanh(c))
        out[t] = h
    return out


def compress(params: EncoderParams, token_matrix, paragraph_bounds: list[tuple[int, int]] | None = None) -> Tensor:
    """Compress averaged token vectors to d_c dimensions with a BiLSTM.

    Recurrent state starts fresh at every paragraph; ``paragraph_bounds``
    defaults to one paragraph spanning the whole input. Differentiable
    in the weights, and in the input when it is a gradient-requiring
    tensor. Non-finite activations abort.
    """
    x = token_matrix if isinstance(token_matrix, Tensor) else ag.constant(token_matrix)
    n = x.shape[0]
    if n == 0:
        return ag.constant(np.zeros((0, params.d_c)))
    if x.shape[1] != params.d_lm:
        raise ConfigError(f"input width {x.shape[1]} does not match encoder width {params.d_lm}")
    bounds = paragraph_bounds if paragraph_bounds is not None else [(0, n - 1)]
    pieces = []
    for a, b in bounds:
        xp = ag.rows(x, np.arange(a, b + 1))
        fw = _lstm_direction(params.wx_f, params.wh_f, params.b_f, xp, reverse=False)
        bw = _lstm_direction(params.wx_b, params.wh_b, params.b_b, xp, reverse=True)
        pieces.append(ag.concat([ag.stack_rows(fw), ag.stack_rows(bw)], axis=1))
    out = pieces[0] if len(pieces) == 1 else ag.concat(pieces, axis=0)
    if not np.isfinite(out.value).all():
        raise NumericError("compressor produced non-finite activations")
    return out


def attention_weights(x: np.ndarray, v: np.ndarray, starts: np.ndarray, ends: np.ndarray):
    """Softmax attention over each span's tokens; returns (A, idx, mask).

    ``A[s, l]`` weights token ``idx[s, l]`` inside span ``s``; weights
    at padded positions are exactly zero and each row sums to one.
    """
    lengths = ends - starts + 1
    max_len = int(lengths.max())
    offsets = np.arange(max_len)
    idx = np.minimum(starts[:, None] + offsets[None, :], len(x) - 1)
    mask = offsets[None, :] < lengths[:, None]
    logits = np.where(mask, (x @ v)[idx], -np.inf)
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))
    weights = np.where(mask, weights, 0.0)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights, idx, mask


def span_attention(x: Tensor, v: Tensor, starts: np.ndarray, ends: np.ndarray) -> Tensor:
    """Attention-weighted sum of compressed vectors over each span.

    One tape node for all spans; the backward rule scatters through the
    softmax by hand.
    """
    starts = np.asarray(starts, dtype=np.intp)
    ends = np.asarray(ends, dtype=np.intp)
    if starts.size == 0:
        return ag.custom(np.zeros((0, x.shape[1])), (x, v),
                         lambda g: (np.zeros_like(x.value), np.zeros_like(v.value)))
    weights, idx, mask = attention_weights(x.value, v.value, starts, ends)
    gathered = x.value[idx]
    value = np.einsum("sl,sld->sd", weights, gathered)

    def vjp(g):
        upstream = np.einsum("sd,sld->sl", g, gathered)
        d_logits = weights * (upstream - (weights * upstream).sum(axis=1, keepdims=True))
        d_v = np.einsum("sl,sld->d", d_logits, gathered)
        contrib = weights[:, :, None] * g[:, None, :] + d_logits[:, :, None] * v.value[None, None, :]
        d_x = np.zeros_like(x.value)
        np.add.at(d_x, idx[mask], contrib[mask])
        return (d_x, d_v)

    return ag.custom(value, (x, v), vjp)


def span_representations(params: EncoderParams, compressed: Tensor, starts, ends) -> Tensor:
    """Batch span representations [x_start; x_end; attention sum], (S, 3 d_c)."""
    starts = np.asarray(starts, dtype=np.intp)
    ends = np.asarray(ends, dtype=np.intp)
    if starts.size == 0:
        return ag.constant(np.zeros((0, 3 * params.d_c)))
    return ag.concat(
        [ag.rows(compressed, starts), ag.rows(compressed, ends),
         span_attention(compressed, params.attn, starts, ends)],
        axis=1,
    )


def span_repr(params: EncoderParams, compressed: Tensor, start: int, end: int) -> Tensor:
    """Representation of a single span as a 1-D tensor."""
    return ag.row(span_representations(params, compressed, [start], [end]), 0)
