"""Domain exceptions shared across the package."""


class CrystalTextError(Exception):
    """Base class for every recoverable domain error raised here."""


# --- CIF parsing / symmetry expansion ---

class MissingTag(CrystalTextError):
    pass


class MalformedLoop(CrystalTextError):
    pass


class UnknownElement(CrystalTextError):
    pass


class ParseError(CrystalTextError):
    """Unrecognized token; carries the byte offset into the parsed string."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TooManySites(CrystalTextError):
    pass


# --- graph construction ---

class IsolatedAtom(CrystalTextError):
    pass


# --- tensors / optimizer ---

class ShapeMismatch(CrystalTextError):
    pass


class NotScalar(CrystalTextError):
    pass


class NumericalWarning(UserWarning):
    """Warning (not an error): a degenerate numeric case was handled."""


# --- encoders ---

class EmptyText(CrystalTextError):
    pass


# --- contrastive training ---

class NonUnitRows(CrystalTextError):
    pass


class EmptyCorpus(CrystalTextError):
    pass


# --- corpus building ---

class ManifestError(CrystalTextError):
    pass


class DuplicateId(CrystalTextError):
    pass


class OfflineError(CrystalTextError):
    pass


# --- retrieval ---

class EmptyIndex(CrystalTextError):
    pass


class DegenerateLabels(CrystalTextError):
    pass


class NoMatches(CrystalTextError):
    pass


# --- atlas ---

class TooFewPoints(CrystalTextError):
    pass


class PerplexityTooHigh(CrystalTextError):
    pass


class NotNormalized(CrystalTextError):
    pass


class EmptyCluster(CrystalTextError):
    pass
