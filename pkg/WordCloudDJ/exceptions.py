"""
Domain failures shared by the decoder apps.

Validation and configuration problems use django's ValidationError, the
way the services everywhere else in the project report bad input; the
classes below cover failures that are not about bad arguments.
"""


class CloudDecodeError(Exception):
    """Base class for decoder processing failures (exit code 3)."""


class ImageReadError(CloudDecodeError, OSError):
    """The image file could not be read (exit code 1)."""


class ImageDecodeError(CloudDecodeError):
    """The file was read but is not a decodable PNG."""


class LayoutError(CloudDecodeError):
    """A synthesized cloud could not place one of its words."""

    def __init__(self, word: str, message: str = ""):
        self.word = word
        super().__init__(message or f"Cannot place word '{word}' within the image bounds")
