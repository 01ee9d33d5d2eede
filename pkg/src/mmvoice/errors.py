"""Exception taxonomy shared across the package."""


class MmvoiceError(Exception):
    """Base class for all package errors."""

    category = "runtime"


class InvalidInputError(MmvoiceError):
    """Input data violates an operation's preconditions."""

    category = "invalid-input"


class InvalidConfigError(MmvoiceError):
    """Configuration violates its invariants."""

    category = "invalid-config"


class ConfigSchemaError(InvalidConfigError):
    """Config file does not match the expected schema (usage error)."""

    category = "config-schema"


class OutOfDomainError(MmvoiceError):
    """Numeric input left the valid domain of a formula (corrupt phase)."""

    category = "out-of-domain"


class ContractViolationError(MmvoiceError):
    """Caller broke an interface contract (wrong modality, non-unit norm)."""

    category = "contract-violation"


class NoSpeechError(MmvoiceError):
    """No speech activity found in a clip; drives modality-absence handling."""

    category = "no-speech"


class TamperConstructionError(MmvoiceError):
    """A tampered sample could not be built (e.g. no duration-matched donor)."""

    category = "tamper-construction"


class UntrainedModelError(MmvoiceError):
    """An operation requiring trained parameters got an untrained model."""

    category = "untrained-model"
