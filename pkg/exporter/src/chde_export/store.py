"""Writer for the CHDE embedding store binary format.

Layout, all integers little-endian u32: magic "CHDE", version 1, the
embedding width, then per document the id (length-prefixed UTF-8), the
paragraph count, and per paragraph the subtoken count, the alignment
(i32, token index or -1) and the vectors (f32, one row per subtoken).
The resolver package reads this format; the writer matches it byte for
byte.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"CHDE"
VERSION = 1


def write_store(docs, d_lm: int, path: str | Path) -> Path:
    """Write (doc_id, [(vectors, alignment), ...]) pairs to ``path``.

    The whole store is serialized first and renamed into place, so a
    failing export never leaves a partial file behind.
    """
    path = Path(path)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, d_lm)
    seen: set[str] = set()
    for doc_id, paragraphs in docs:
        if doc_id in seen:
            raise ExportError(f"duplicate document id {doc_id!r}")
        seen.add(doc_id)
        id_bytes = doc_id.encode("utf-8")
        blob += struct.pack("<I", len(id_bytes))
        blob += id_bytes
        blob += struct.pack("<I", len(paragraphs))
        for vectors, alignment in paragraphs:
            vectors = np.asarray(vectors)
            alignment = np.asarray(alignment)
            if vectors.ndim != 2 or vectors.shape[1] != d_lm:
                raise ExportError(f"{doc_id}: paragraph matrix must have {d_lm} columns")
            if alignment.shape != (vectors.shape[0],):
                raise ExportError(f"{doc_id}: alignment length must match the subtoken count")
            if (alignment < -1).any():
                raise ExportError(f"{doc_id}: alignment indices below -1")
            if not np.isfinite(vectors).all():
                raise ExportError(f"{doc_id}: non-finite embedding values")
            blob += struct.pack("<I", vectors.shape[0])
            blob += alignment.astype("<i4").tobytes()
            blob += np.ascontiguousarray(vectors, dtype="<f4").tobytes()

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
    except BaseException:
        os.unlink(tmp)
        raise
    os.replace(tmp, path)
    return path
