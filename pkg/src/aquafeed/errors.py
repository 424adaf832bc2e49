"""Exception hierarchy shared across the control plane."""


class AquafeedError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AquafeedError):
    """An input value violates a documented precondition.

    ``field`` names the offending value so callers can report it precisely.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DegenerateDetectionError(AquafeedError):
    """A detection cannot be measured (e.g. coincident mouth/peduncle keypoints)."""


class ParseError(AquafeedError):
    """A document failed schema validation.

    ``path`` is a dotted field path (or file byte offset for binary formats).
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnpairedFrameError(AquafeedError):
    """Two frames are too far apart in time to be fused."""


class EncodeError(AquafeedError):
    """A message violates its invariants and cannot be encoded."""


class DecodeError(AquafeedError):
    """Payload bytes could not be decoded into a valid message."""


class ProtocolError(AquafeedError):
    """Payload was valid but disagrees with the topic it arrived on."""
