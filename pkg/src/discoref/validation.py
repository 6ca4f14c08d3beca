"""Input validation helpers shared by the estimator and the library API."""

from __future__ import annotations

from .corpus import Document, validate_document
from .discourse import RstNode
from .encoder import EmbeddingStore
from .errors import ConfigError


def check_documents(docs) -> list[Document]:
    """Materialize and sanity-check a document collection."""
    docs = list(docs)
    if not docs:
        raise ConfigError("no documents given")
    for d in docs:
        if not isinstance(d, Document):
            raise TypeError(f"expected Document instances, got {type(d).__name__}")
    ids = [d.id for d in docs]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigError(f"duplicate document ids: {dupes[:10]}")
    for d in docs:
        issues = validate_document(d)
        if issues:
            raise ConfigError(f"document {d.id!r} is inconsistent: {issues[:5]}")
    return docs


def check_embeddings(store, docs: list[Document]) -> EmbeddingStore:
    if not isinstance(store, EmbeddingStore):
        raise TypeError(f"expected an EmbeddingStore, got {type(store).__name__}")
    missing = [d.id for d in docs if d.id not in store]
    if missing:
        raise ConfigError(f"store lacks embeddings for documents: {missing[:10]}")
    return store


def check_trees(trees, docs: list[Document], features) -> dict[str, list[RstNode]] | None:
    if not features:
        return trees
    if trees is None:
        raise ConfigError("tree distance features are enabled but no trees were given")
    missing = [d.id for d in docs if d.id not in trees]
    if missing:
        raise ConfigError(f"missing discourse trees for documents: {missing[:10]}")
    return trees
