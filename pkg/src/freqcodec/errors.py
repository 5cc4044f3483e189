"""Shared exception types."""

from __future__ import annotations


class FormatError(ValueError):
    """Malformed serialized data (bitstream, weight file, image file).

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
