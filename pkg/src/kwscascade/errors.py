"""Exception hierarchy.

Every data/usage error raised by the package derives from ``KwsError`` so the
CLI can map it to exit code 2 in one place.
"""


class KwsError(Exception):
    pass


# phoneme-core
class DuplicateSymbol(KwsError):
    pass


class EmptyInventory(KwsError):
    pass


class OovWord(KwsError):
    def __init__(self, word):
        super().__init__(f"OOV: {word}")
        self.word = word


class EmptyText(KwsError):
    pass


class UnknownSymbol(KwsError):
    pass


class OverlappingGroups(KwsError):
    pass


class BlankInGroup(KwsError):
    pass


# posteriorgram / weight files
class BadMagic(KwsError):
    pass


class DimensionMismatch(KwsError):
    pass


class RowNotNormalized(KwsError):
    pass


class TruncatedFile(KwsError):
    pass


class HeaderMismatch(KwsError):
    pass


class ParseError(KwsError):
    pass


class SpecOverflow(KwsError):
    pass


class ShapeMismatch(KwsError):
    pass


# search / matcher
class EmptyKeyword(KwsError):
    pass


class BadConfig(KwsError):
    pass


class NonFiniteInput(KwsError):
    pass


class EmptyDataset(KwsError):
    pass


class DegenerateLabels(KwsError):
    pass


# pipeline
class SegmentOutOfRange(KwsError):
    pass


class MissingFeatures(KwsError):
    pass


class MissingWeights(KwsError):
    pass


# metrics
class EmptyClass(KwsError):
    pass


class NoPositives(KwsError):
    pass


class RecordError(KwsError):
    """A manifest record could not be read or evaluated."""
