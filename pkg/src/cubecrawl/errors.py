"""Exception hierarchy shared by every engine layer."""


class CubeError(Exception):
    """Base class for all engine errors."""


class SchemaError(CubeError):
    """A name does not resolve against the active schema, or a schema is malformed."""


class RequestError(CubeError):
    """A feature request cannot be resolved (e.g. ambiguous joined feature name)."""


class SpecError(CubeError):
    """A crawl/join/store specification is invalid before any data is touched."""


class ConfigError(SpecError):
    """A run configuration file failed validation."""


class ContractError(CubeError):
    """An evaluation context does not match the model's declared feature requests."""


class DataError(CubeError):
    """Input data violates a model precondition (e.g. negative weights on an apriori signal)."""


class ModelError(CubeError):
    """A model produced an invalid result (non-finite signal, undefined statistic)."""


class DomainError(CubeError):
    """Attribution inputs outside the formula's domain (e.g. nonpositive denominators)."""


class DegenerateMetricsError(DomainError):
    """Population denominators coincide; the degenerate formula must be used instead."""


class NumericError(CubeError):
    """A numeric path integration hit a non-finite value."""


class ConsistencyError(CubeError):
    """Per-entity metrics disagree with the region totals they should sum to."""


class JoinError(CubeError):
    """Two cubes cannot be joined (incompatible schemas)."""


class StoreError(CubeError):
    """A persisted cube store is unreadable, corrupt, or being misused."""


class RefusalError(CubeError):
    """The requested exhaustive enumeration exceeds the configured safety cap."""


class AprioriViolationError(CubeError):
    """A signal declared apriori increased along region refinement (validation mode)."""
