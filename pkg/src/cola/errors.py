"""Exception hierarchy for the engine.

Two broad families matter for the CLI exit-code contract: ``DataError``
(bad inputs, malformed records, violated preconditions; exit 2) and
``BackendError`` (network failures, fixture misses, protocol violations;
exit 3). Usage errors are handled by the argument parser (exit 1).
"""

from __future__ import annotations


class ColaError(Exception):
    """Base class for all engine errors."""


class DataError(ColaError):
    """Invalid input data or violated operation precondition."""


class BackendError(ColaError):
    """Failure talking to (or replaying) a language-model backend."""


# --- dataset / event model ---------------------------------------------------


class MalformedRecord(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"malformed record at line {line}: {reason}")
        self.line = line
        self.reason = reason


class LabelLengthMismatch(DataError):
    def __init__(self, sequence_id: str, n_events: int, n_labels: int):
        super().__init__(
            f"sequence {sequence_id!r}: {n_labels} labels for {n_events} events "
            f"(expected {n_events - 1})"
        )
        self.sequence_id = sequence_id


class EmptyEvent(DataError):
    def __init__(self, sequence_id: str):
        super().__init__(f"sequence {sequence_id!r} contains an empty event")
        self.sequence_id = sequence_id


class UnlabeledSequence(DataError):
    def __init__(self, sequence_id: str):
        super().__init__(f"sequence {sequence_id!r} has no labels")
        self.sequence_id = sequence_id


# --- backend protocol ---------------------------------------------------------


class InvalidArgument(DataError):
    """A request violates an operation precondition."""


class NoMask(InvalidArgument):
    def __init__(self, template: str):
        super().__init__(f"template contains no mask marker: {template!r}")


class MultipleMasks(InvalidArgument):
    def __init__(self, template: str):
        super().__init__(f"template contains more than one mask marker: {template!r}")


class SpanOutOfBounds(InvalidArgument):
    pass


class OverlappingSpans(InvalidArgument):
    pass


class BackendUnreachable(BackendError):
    pass


class ProtocolViolation(BackendError):
    """The backend answered with a body that breaks the wire contract."""


class FixtureMiss(BackendError):
    def __init__(self, request_hash: str, endpoint: str):
        super().__init__(
            f"no recorded response for request {request_hash} (endpoint {endpoint})"
        )
        self.request_hash = request_hash
        self.endpoint = endpoint


class CacheConflict(BackendError):
    def __init__(self, request_hash: str):
        super().__init__(
            f"request {request_hash} already cached with a different response body"
        )
        self.request_hash = request_hash


# --- covariate sampler --------------------------------------------------------


class AllSetsEmpty(DataError):
    def __init__(self) -> None:
        super().__init__("every per-timestamp covariate set is empty")


class TooFewTexts(DataError):
    def __init__(self, count: int):
        super().__init__(f"self-BLEU needs at least 2 texts, got {count}")


# --- intervention generator ---------------------------------------------------


class NoVerbFound(DataError):
    def __init__(self, text: str):
        super().__init__(f"no verb-like token found in {text!r}")


class EmptyInterventionSet(DataError):
    def __init__(self, text: str):
        super().__init__(f"all generated interventions for {text!r} were filtered out")


# --- causal estimator ---------------------------------------------------------


class LengthMismatch(DataError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"propensity vector length mismatch: {got} != {expected}")


# --- temporal predictor -------------------------------------------------------


class CorpusTooSmall(DataError):
    def __init__(self, n_sequences: int):
        super().__init__(
            f"corpus has {n_sequences} sequences; at least 2 are needed to draw "
            "negatives from a different sequence"
        )


# --- task runner ----------------------------------------------------------------


class KUnknown(DataError):
    def __init__(self, sequence_id: str):
        super().__init__(
            f"sequence {sequence_id!r} is unlabeled; top-k ranking needs gold k"
        )


class Misaligned(DataError):
    pass


class UnsupportedSequenceLength(DataError):
    def __init__(self, k: int):
        super().__init__(
            f"analytic random baseline is defined for 4-candidate sequences; "
            f"got k={k} outside 0..4"
        )


class PipelineStageError(ColaError):
    """Wraps a failure inside one named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
