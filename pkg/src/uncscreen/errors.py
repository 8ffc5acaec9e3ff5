"""Exception types shared across the package."""

__all__ = ["DataError"]


class DataError(Exception):
    """Invalid data or configuration content (bad config key, malformed
    dataset line, integrity mismatch).  The command-line layer maps this
    to exit code 2."""
