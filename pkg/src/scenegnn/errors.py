"""Exception types shared across the package."""


class SceneGnnError(Exception):
    """Base class for all errors raised by this package."""


# --- data loading / generation ---

class MalformedRecord(SceneGnnError):
    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyFile(SceneGnnError):
    pass


class InvalidConfig(SceneGnnError):
    pass


class BadRatios(SceneGnnError):
    pass


# --- graph construction ---

class EmptyScene(SceneGnnError):
    pass


class NoNeighbor(SceneGnnError):
    pass


class LabelOutOfRange(SceneGnnError):
    pass


# --- numerics ---

class ShapeMismatch(SceneGnnError):
    pass


class NonFinite(SceneGnnError):
    pass


class NotScalar(SceneGnnError):
    pass


# --- models ---

class AggregatorMismatch(SceneGnnError):
    pass


class InputOutOfRange(SceneGnnError):
    pass


# --- training / evaluation ---

class BadTarget(SceneGnnError):
    pass


class EmptyDataset(SceneGnnError):
    pass


class UnlabeledSample(SceneGnnError):
    pass
