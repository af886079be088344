"""
gsdlab Errors

Every failure an operation can report. Domain errors derive from GsdLabError
(not ValueError) so they pass through pydantic validators untouched.
"""


class GsdLabError(Exception):
    """Base class for all gsdlab errors"""
    pass


class RankDeficient(GsdLabError):
    """Matrix does not have full column rank"""
    pass


class BadK(GsdLabError):
    """Subspace dimension k out of range"""
    pass


class NonFinite(GsdLabError):
    """Input contains NaN or Inf"""
    pass


class DimMismatch(GsdLabError):
    """Shapes of the inputs do not agree"""
    pass


class NonSymmetric(GsdLabError):
    """Matrix expected to be symmetric is not"""
    pass


class EmptyMatrix(GsdLabError):
    """Matrix has no rows"""
    pass


class ZeroGap(GsdLabError):
    """Eigengap is not positive"""
    pass


class BadMagnitude(GsdLabError):
    """Shift magnitude outside the valid range for its kind"""
    pass


class StorageError(GsdLabError):
    """File could not be read or written"""
    pass


class ConfigError(GsdLabError):
    """Settings or config file are invalid"""
    pass


class PrivacyRangeWarning(UserWarning):
    """Privacy parameters fall outside the range the guarantees cover"""
    pass
