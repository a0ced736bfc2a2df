"""Exception types shared across the toolkit.

Every error raised by this package derives from IntentGuardError so callers
can catch the whole family with one clause. The gateway and CLI map these
onto HTTP status codes and process exit codes respectively.
"""


class IntentGuardError(Exception):
    """Base class for all package errors."""


# --- intent parsing ---------------------------------------------------------

class MalformedJson(IntentGuardError):
    pass


class MissingRequiredField(IntentGuardError):
    def __init__(self, name: str):
        super().__init__(f"missing required field: {name}")
        self.name = name


class InvalidTimestamp(IntentGuardError):
    pass


class NegativeQuantity(IntentGuardError):
    pass


class UnparseableRequirement(IntentGuardError):
    def __init__(self, text: str):
        super().__init__(f"unparseable performance requirement: {text!r}")
        self.text = text


class EmptyInput(IntentGuardError):
    pass


# --- dataset ----------------------------------------------------------------

class DegenerateClass(IntentGuardError):
    pass


class InvalidConfig(IntentGuardError):
    pass


class MalformedLine(IntentGuardError):
    def __init__(self, line_no: int, reason: str = ""):
        msg = f"malformed line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.line_no = line_no


# --- features ---------------------------------------------------------------

class NotSorted(IntentGuardError):
    pass


class OutOfOrderEvent(IntentGuardError):
    pass


# --- attacks ----------------------------------------------------------------

class InsufficientSamples(IntentGuardError):
    def __init__(self, event_type: str, count: int):
        super().__init__(
            f"need at least 2 benign samples for type {event_type!r}, got {count}"
        )
        self.event_type = event_type
        self.count = count


class TooManyAttacks(IntentGuardError):
    pass


class BaselineMissing(IntentGuardError):
    def __init__(self, event_type: str):
        super().__init__(f"no baseline statistics for type {event_type!r}")
        self.event_type = event_type


# --- resampling / model fitting ----------------------------------------------

class ClassTooSmall(IntentGuardError):
    def __init__(self, label: int, count: int):
        super().__init__(f"class {label} has only {count} sample(s), need >= 2")
        self.label = label
        self.count = count


class NonFiniteFeature(IntentGuardError):
    pass


class SingleClassInput(IntentGuardError):
    pass


class ManifestMismatch(IntentGuardError):
    pass


class DimensionMismatch(IntentGuardError):
    pass


class UnsupportedVersion(IntentGuardError):
    pass


class CorruptArtifact(IntentGuardError):
    pass


# --- tuning -------------------------------------------------------------------

class InsufficientClassMembers(IntentGuardError):
    pass


class InvalidSpace(IntentGuardError):
    pass


# --- metrics ------------------------------------------------------------------

class LengthMismatch(IntentGuardError):
    pass


class LabelOutOfRange(IntentGuardError):
    pass


class NotBinary(IntentGuardError):
    pass


# --- gateway / cli -------------------------------------------------------------

class ModelUnavailable(IntentGuardError):
    pass


class MissingArtifact(IntentGuardError):
    pass


class ConfigInvalid(IntentGuardError):
    pass
