"""Telemetry and result types shared across the engine.

Pure data: no I/O here. All timestamps are UTC instants at millisecond
precision; ingestion normalizes offsets before records reach this layer.
Every type is immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Optional, Union


class Severity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


class AlertStatus(str, Enum):
    NEW = "new"
    IN_PROGRESS = "in_progress"
    CLOSED = "closed"
    MISSED = "missed"


class Environment(str, Enum):
    PROD = "prod"
    DEV = "dev"
    STAGING = "staging"


NON_PROD_ENVIRONMENTS = (Environment.DEV, Environment.STAGING)


class Visibility(str, Enum):
    OFFICIAL = "official"
    PRIVATE = "private"


class CommSource(str, Enum):
    TICKETING = "ticketing"
    CHAT = "chat"


class Indicator(str, Enum):
    COMPLIANCE_FATIGUE = "compliance_fatigue"
    ALERT_OVERLOAD = "alert_overload"
    RISK_PERCEPTION_GAP = "risk_perception_gap"
    AGAINST_GRAVITY = "against_gravity"


class Marker(str, Enum):
    """First-class non-numeric metric values.

    Never encoded as sentinel reals: a zero-denominator density ratio is
    INFINITE, an empty topic union is UNDEFINED, and both must survive a
    serialization round trip unambiguously (no NaN-as-data).
    """

    UNDEFINED = "undefined"
    INFINITE = "infinite"
    SUPPRESSED = "suppressed"


MetricValue = Union[float, Marker]

# Fixed feature order for case-control rows; downstream code indexes by it.
FEATURE_ORDER = (
    "mtta_minutes",
    "ignore_rate",
    "pmr",
    "vmcc",
    "plg_hours",
    "vdr",
    "uctr",
)

# Closed metric ranges checked on IndicatorResult construction.
_UNIT_INTERVAL_METRICS = {"ignore_rate", "pmr", "uctr"}
_NONNEGATIVE_METRICS = {"mtta_minutes", "vdr"}


# ---------------------------------------------------------------------------
# Timestamp handling
# ---------------------------------------------------------------------------

_RFC3339_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt ](\d{2}):(\d{2}):(\d{2})"
    r"(?:\.(\d{1,9}))?(Z|z|[+-]\d{2}:\d{2})$"
)


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC3339 timestamp into a UTC instant at millisecond precision.

    Raises:
        ValueError: if the string is not RFC3339.
    """
    m = _RFC3339_RE.match(value)
    if m is None:
        raise ValueError(f"not an RFC3339 timestamp: {value!r}")
    year, month, day, hour, minute, second = (int(g) for g in m.groups()[:6])
    frac = m.group(7) or ""
    micros = int(frac.ljust(6, "0")[:6]) if frac else 0
    offset = m.group(8)
    if offset in ("Z", "z"):
        tz = timezone.utc
    else:
        sign = 1 if offset[0] == "+" else -1
        oh, om = int(offset[1:3]), int(offset[4:6])
        tz = timezone(sign * timedelta(hours=oh, minutes=om))
    dt = datetime(year, month, day, hour, minute, second, micros, tzinfo=tz)
    return to_utc_ms(dt)


def format_rfc3339(dt: datetime) -> str:
    """Render a UTC instant as ``YYYY-MM-DDTHH:MM:SS.mmmZ``."""
    dt = to_utc_ms(dt)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def to_utc_ms(dt: datetime) -> datetime:
    """Normalize to UTC and truncate sub-millisecond digits."""
    if dt.tzinfo is None:
        raise ValueError("naive datetime; timestamps must carry an offset")
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


# ---------------------------------------------------------------------------
# Telemetry records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlertRecord:
    """One SIEM/ticketing alert with lifecycle timestamps."""

    id: str
    created_at: datetime
    status: AlertStatus
    severity: Severity
    closed_at: Optional[datetime] = None
    assigned_to: Optional[str] = None
    team: Optional[str] = None
    resolution_notes: Optional[str] = None
    # Accepted on ingest for forward compatibility; the closure-time metric
    # intentionally does not consume it.
    acknowledged_at: Optional[datetime] = None


@dataclass(frozen=True)
class VulnRecord:
    """One vulnerability finding with environment tag and remediation times."""

    id: str
    asset_id: str
    severity: Severity
    environment: Environment
    detected_at: datetime
    remediated_at: Optional[datetime] = None


@dataclass(frozen=True)
class CommItem:
    """One ticket or chat message; text must already be anonymized."""

    id: str
    timestamp: datetime
    visibility: Visibility
    source: CommSource
    text: str


@dataclass(frozen=True)
class TimeRange:
    """Half-open interval [start, end) of UTC instants."""

    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if self.start.tzinfo is None or self.end.tzinfo is None:
            raise ValueError("TimeRange bounds must be timezone-aware")
        if not self.start < self.end:
            raise ValueError("TimeRange requires start < end")

    def contains(self, instant: datetime) -> bool:
        return self.start <= instant < self.end

    @property
    def duration(self) -> timedelta:
        return self.end - self.start


class ScopeKind(str, Enum):
    ORG = "org"
    TEAM = "team"
    ANALYST = "analyst"


@dataclass(frozen=True)
class Scope:
    """Reporting scope: the whole org, one team, or one analyst."""

    kind: ScopeKind
    id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind is ScopeKind.ORG and self.id is not None:
            raise ValueError("org scope carries no id")
        if self.kind is not ScopeKind.ORG and not self.id:
            raise ValueError(f"{self.kind.value} scope requires an id")

    def __str__(self) -> str:
        return self.kind.value if self.kind is ScopeKind.ORG else f"{self.kind.value}:{self.id}"

    @classmethod
    def parse(cls, text: str) -> "Scope":
        if text == "org":
            return cls(ScopeKind.ORG)
        kind, sep, ident = text.partition(":")
        if sep and kind in ("team", "analyst") and ident:
            return cls(ScopeKind(kind), ident)
        raise ValueError(f"bad scope {text!r}; expected org, team:ID or analyst:ID")


ORG_SCOPE = Scope(ScopeKind.ORG)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndicatorResult:
    """A computed metric bundle scoped to (org|team|analyst) x time window.

    ``values`` maps metric key to a finite real or a :class:`Marker`;
    ``sample_sizes`` carries the denominators behind each value so reports
    can state how much data supports a number.
    """

    indicator: Indicator
    scope: Scope
    range: TimeRange
    values: dict[str, MetricValue] = field(default_factory=dict)
    sample_sizes: dict[str, int] = field(default_factory=dict)
    suppression: Optional[str] = None

    def __post_init__(self) -> None:
        for key, value in self.values.items():
            if isinstance(value, Marker):
                continue
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{key}: non-finite metric value {value!r}; use a Marker")
            if key in _UNIT_INTERVAL_METRICS and not 0.0 <= value <= 1.0:
                raise ValueError(f"{key}={value} outside [0, 1]")
            if key == "vmcc" and not -1.0 <= value <= 1.0:
                raise ValueError(f"vmcc={value} outside [-1, 1]")
            if key in _NONNEGATIVE_METRICS and value < 0.0:
                raise ValueError(f"{key}={value} negative")
        for key, count in self.sample_sizes.items():
            if count < 0:
                raise ValueError(f"sample size {key}={count} negative")


class PeriodLabel(str, Enum):
    CASE = "case"
    CONTROL = "control"


@dataclass(frozen=True)
class FeatureValue:
    """One entry of a feature vector; ``defined`` is False when the value
    was imputed from an undefined or infinite metric."""

    value: float
    defined: bool = True


@dataclass(frozen=True)
class FeatureRow:
    """One labeled period turned into the fixed-order feature vector.

    Feature order follows :data:`FEATURE_ORDER`, optionally followed by an
    imputation flag column appended by the feature-table builder.
    """

    period: TimeRange
    label: PeriodLabel
    features: tuple[FeatureValue, ...]


@dataclass(frozen=True)
class ValidationReport:
    """Fitted incident-model summary for a case-control table."""

    coefficients: tuple[float, ...]
    std_errors: tuple[float, ...]
    p_values: tuple[float, ...]
    auc: float
    n_cases: int
    n_controls: int
    converged: bool
    feature_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (len(self.coefficients) == len(self.std_errors) == len(self.p_values)):
            raise ValueError("coefficient, error and p-value vectors must align")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"auc={self.auc} outside [0, 1]")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _check_aware(violations: list[str], name: str, value: object, required: bool) -> Optional[datetime]:
    if value is None:
        if required:
            violations.append(f"{name} is required")
        return None
    if not isinstance(value, datetime):
        violations.append(f"{name} is not a timestamp")
        return None
    if value.tzinfo is None:
        violations.append(f"{name} lacks a timezone offset")
        return None
    return value


def _validate_alert(alert: AlertRecord) -> list[str]:
    v: list[str] = []
    if not alert.id:
        v.append("id is empty")
    created = _check_aware(v, "created_at", alert.created_at, required=True)
    closed = _check_aware(v, "closed_at", alert.closed_at, required=False)
    if alert.status not in set(AlertStatus):
        v.append(f"unknown status {alert.status!r}")
    if alert.severity not in set(Severity):
        v.append(f"unknown severity {alert.severity!r}")
    if created is not None and closed is not None and closed < created:
        v.append("closed_at precedes created_at")
    if alert.status == AlertStatus.CLOSED and alert.closed_at is None:
        v.append("status closed requires closed_at")
    if alert.status == AlertStatus.MISSED and alert.closed_at is not None:
        v.append("status missed excludes closed_at (missed is terminal, not closed)")
    return v


def _validate_vuln(vuln: VulnRecord) -> list[str]:
    v: list[str] = []
    if not vuln.id:
        v.append("id is empty")
    if not vuln.asset_id:
        v.append("asset_id is empty")
    if vuln.severity not in set(Severity):
        v.append(f"unknown severity {vuln.severity!r}")
    if vuln.environment not in set(Environment):
        v.append(f"unknown environment tag {vuln.environment!r}")
    detected = _check_aware(v, "detected_at", vuln.detected_at, required=True)
    remediated = _check_aware(v, "remediated_at", vuln.remediated_at, required=False)
    if detected is not None and remediated is not None and remediated < detected:
        v.append("remediated_at precedes detected_at")
    return v


def _validate_comm(item: CommItem) -> list[str]:
    v: list[str] = []
    if not item.id:
        v.append("id is empty")
    _check_aware(v, "timestamp", item.timestamp, required=True)
    if item.visibility not in set(Visibility):
        v.append(f"unknown visibility {item.visibility!r}")
    if item.source not in set(CommSource):
        v.append(f"unknown source {item.source!r}")
    if not isinstance(item.text, str):
        v.append("text is not a string")
    return v


def validate_record(record: object) -> list[str]:
    """Check a telemetry record against its type invariants.

    Violations are data, not failures: returns an empty list iff every
    invariant holds, otherwise one human-readable entry naming the field
    and the rule it breaks.
    """
    if isinstance(record, AlertRecord):
        return _validate_alert(record)
    if isinstance(record, VulnRecord):
        return _validate_vuln(record)
    if isinstance(record, CommItem):
        return _validate_comm(record)
    raise TypeError(f"not a telemetry record: {type(record).__name__}")
