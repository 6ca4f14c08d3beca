class ExportError(Exception):
    """Anything that should stop an export with a clean message."""
