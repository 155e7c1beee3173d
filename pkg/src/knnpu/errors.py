"""Exception hierarchy shared by every module.

Each error carries a ``category`` string that the CLI reports verbatim so
callers can branch on it without parsing messages.
"""


class PUError(Exception):
    category = "PUError"


class MalformedRow(PUError):
    category = "MalformedRow"


class DuplicateId(PUError):
    category = "DuplicateId"


class UnknownLabelToken(PUError):
    category = "UnknownLabelToken"


class EmptyDataset(PUError):
    category = "EmptyDataset"


class SubsetOutOfRange(PUError):
    category = "SubsetOutOfRange"


class KTooLarge(PUError):
    category = "KTooLarge"


class EmptyU(PUError):
    category = "EmptyU"


class ModelWithoutImportances(PUError):
    category = "ModelWithoutImportances"


class SingleClassInput(PUError):
    category = "SingleClassInput"


class NonPositiveLearningRate(PUError):
    category = "NonPositiveLearningRate"


class DimensionMismatch(PUError):
    category = "DimensionMismatch"


class TooFewEntities(PUError):
    category = "TooFewEntities"


class TooFewPositives(PUError):
    category = "TooFewPositives"


class SingleClassScores(PUError):
    category = "SingleClassScores"


class GridEmpty(PUError):
    category = "GridEmpty"


class MismatchedShapes(PUError):
    category = "MismatchedShapes"


class TopNZero(PUError):
    category = "TopNZero"


class InvalidConfig(PUError):
    category = "InvalidConfig"


class MismatchedLength(PUError):
    category = "MismatchedLength"
