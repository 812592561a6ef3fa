"""Exception types shared across the package."""


class DyHGError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DyHGError, ValueError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        pretty = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {pretty}")


class ConfigError(DyHGError, ValueError):
    pass


class EmptyBagError(DyHGError, ValueError):
    pass


class GradCheckError(DyHGError, ArithmeticError):
    def __init__(self, name: str, index: tuple, value: float):
        self.name = name
        self.index = index
        super().__init__(f"non-finite loss {value!r} while probing {name}{list(index)}")


class BagFormatError(DyHGError):
    """Raised for any unreadable bag file."""


class BadMagicError(BagFormatError):
    pass


class TruncatedFileError(BagFormatError):
    pass


class VersionMismatchError(BagFormatError):
    pass


class CheckpointError(DyHGError):
    """Corrupt or incompatible checkpoint file."""


class ManifestError(DyHGError, ValueError):
    pass
