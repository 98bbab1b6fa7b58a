# Data Models

from src.models.channel import ChannelParams, IntensityStatistics, LinkModel

from src.models.errors import (
    ConfigError,
    DegenerateStatisticsError,
    DomainError,
    InconsistentStatisticsError,
    LabelMismatchError,
    LpNumericalError,
    QkdRateError,
    StatsFileParseError,
    UndefinedRateError,
)

from src.models.finite import (
    AbortDecision,
    AbortOutcome,
    Consistency,
    ConsistencyDecision,
    SecurityParams,
    Tolerance,
    ToleranceSet,
)

from src.models.keyrate import (
    AnalyticResult,
    Cell,
    CellValue,
    EngineConfig,
    Partition,
    ProtocolVariant,
    RateResult,
)

from src.models.lp import (
    CertificateReport,
    LinearProgram,
    LpCertificate,
    LpSolution,
    LpStatus,
    Relation,
    SolverSettings,
)

from src.models.protocol import (
    ExpectedObservation,
    ObservedStatistics,
    ProtocolConfig,
    RoundRecord,
)

from src.models.files import ProtocolConfigFile, StatsFile, SweepSpec

__all__ = [
    "AbortDecision",
    "AbortOutcome",
    "AnalyticResult",
    "Cell",
    "CellValue",
    "CertificateReport",
    "ChannelParams",
    "ConfigError",
    "Consistency",
    "ConsistencyDecision",
    "DegenerateStatisticsError",
    "DomainError",
    "EngineConfig",
    "ExpectedObservation",
    "InconsistentStatisticsError",
    "IntensityStatistics",
    "LabelMismatchError",
    "LinearProgram",
    "LinkModel",
    "LpCertificate",
    "LpNumericalError",
    "LpSolution",
    "LpStatus",
    "ObservedStatistics",
    "Partition",
    "ProtocolConfig",
    "ProtocolConfigFile",
    "ProtocolVariant",
    "QkdRateError",
    "RateResult",
    "Relation",
    "RoundRecord",
    "SecurityParams",
    "SolverSettings",
    "StatsFile",
    "StatsFileParseError",
    "SweepSpec",
    "Tolerance",
    "ToleranceSet",
    "UndefinedRateError",
]
