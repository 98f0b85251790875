"""Exception types raised across the package."""


class EmitterAssocError(Exception):
    """Base class for all package errors."""


# zc
class InvalidRoot(EmitterAssocError, ValueError):
    pass


class EvenLength(EmitterAssocError, ValueError):
    pass


class LagOutOfRange(EmitterAssocError, IndexError):
    pass


class LengthMismatch(EmitterAssocError, ValueError):
    pass


class ReferenceTooLong(EmitterAssocError, ValueError):
    pass


# simulator
class BadConfig(EmitterAssocError, ValueError):
    pass


class EmptyTaps(EmitterAssocError, ValueError):
    pass


class TestOutOfRange(EmitterAssocError, IndexError):
    __test__ = False  # keep pytest from collecting this


# chanest
class AllZeroInput(EmitterAssocError, ValueError):
    """No detectable sounding in a correlation output."""


class BadFftSize(EmitterAssocError, ValueError):
    pass


class ZeroWindow(EmitterAssocError, ValueError):
    pass


# dataset / file formats
class EmptyDataset(EmitterAssocError, ValueError):
    pass


class BadMagic(EmitterAssocError, ValueError):
    pass


class VersionMismatch(EmitterAssocError, ValueError):
    pass


class TruncatedFile(EmitterAssocError, ValueError):
    pass


class UnknownSplit(EmitterAssocError, KeyError):
    pass


# nn / models
class ShapeMismatch(EmitterAssocError, ValueError):
    pass


class EmptyAxis(EmitterAssocError, ValueError):
    pass


class LabelOutOfRange(EmitterAssocError, IndexError):
    pass


class EmptySplit(EmitterAssocError, ValueError):
    pass


class ArchMismatch(EmitterAssocError, ValueError):
    pass


class SplitIntegrityError(EmitterAssocError, ValueError):
    """Evaluation examples leaked into training splits (or vice versa)."""
