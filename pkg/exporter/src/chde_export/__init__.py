"""Embedding export into the CHDE store format."""

__version__ = "0.1.0"

from .corpus import CorpusDoc, load_corpus, load_doc
from .errors import ExportError
from .export import ExportConfig, export_embeddings
from .store import write_store

__all__ = [
    "CorpusDoc",
    "ExportConfig",
    "ExportError",
    "__version__",
    "export_embeddings",
    "load_corpus",
    "load_doc",
    "write_store",
]
