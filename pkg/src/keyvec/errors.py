"""Exception types shared across the package."""


class KeyVecError(Exception):
    """Base class for all errors raised by this package."""


class CorpusFormatError(KeyVecError):
    """Malformed corpus input (bad JSON, missing fields, duplicate ids)."""


class EmptyDocumentError(KeyVecError):
    """A document has no non-empty sentence after tokenization."""


class MissingSummaryError(KeyVecError):
    """Label generation asked for on a document without a summary."""


class IndexOutOfRangeError(KeyVecError):
    """Token id outside the embedding table."""


class ShapeMismatchError(KeyVecError):
    """Operands with incompatible shapes."""


class NotScalarError(KeyVecError):
    """backward() called on a non-scalar value."""


class EmptyKeywordSetError(KeyVecError):
    """Keyword loss requires at least one keyword."""


class EmptyTrainingSetError(KeyVecError):
    """Training requires at least one example."""


class FormatVersionMismatchError(KeyVecError):
    """Checkpoint file written with an unsupported format version."""


class CorruptFileError(KeyVecError):
    """Checkpoint file truncated or failing its checksum."""


class DimMismatchError(KeyVecError):
    """Vectors of different dimension where equal dimension is required."""


class EmptyIndexError(KeyVecError):
    """Retrieval against an empty embedding index."""


class QueryWithoutRelevantsError(KeyVecError):
    """A query has no relevant documents in the qrels."""


class TooFewPointsError(KeyVecError):
    """k-means asked for more clusters than there are points."""


class LabelMismatchError(KeyVecError):
    """Predicted clustering and ground truth cover different documents."""
