"""The four human-factor indicator computations.

Conventions pinned here, because reproducibility depends on them:

* window bins align to epoch multiples of the bin duration (hour bins
  start on the hour) and cover the whole requested range, zero-filled;
* peak bins are those with volume strictly greater than the 90th
  percentile threshold;
* "ignored" means normalized resolution notes equal to a configurable
  marker (default: "false positive" or empty/absent);
* "missed" is exactly the terminal missed status, never inferred;
* zero-denominator branches return the algorithmic defaults (zeros) or
  first-class markers, never NaN.

All computations are pure, deterministic, and invariant under permutation
of input record order (reductions run in canonical record-id order).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Sequence

from .domain import (
    AlertRecord,
    AlertStatus,
    CommItem,
    Environment,
    Indicator,
    IndicatorResult,
    Marker,
    MetricValue,
    ORG_SCOPE,
    Scope,
    ScopeKind,
    Severity,
    TimeRange,
    Visibility,
    VulnRecord,
)
from .errors import ConfigError, DataError, UsageError
from .stats import pearson, percentile

# Normalized resolution notes counted as "ignored"; absent notes compare
# as the empty string.
DEFAULT_IGNORE_MARKERS = frozenset({"false positive", ""})

PEAK_PERCENTILE = 90.0

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens; the one tokenizer used for topic
    matching, keyword matching and anonymization boundaries."""
    return _TOKEN_RE.findall(text.lower())


def _contains_phrase(tokens: Sequence[str], phrase: Sequence[str]) -> bool:
    """True when ``phrase`` appears as a contiguous token run."""
    if not phrase:
        return False
    n, m = len(tokens), len(phrase)
    first = phrase[0]
    for i in range(n - m + 1):
        if tokens[i] == first and list(tokens[i : i + m]) == list(phrase):
            return True
    return False


@dataclass(frozen=True)
class TopicTaxonomy:
    """Canonical topic key -> trigger phrases (lowercased on construction)."""

    entries: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        normalized: dict[str, tuple[str, ...]] = {}
        seen_triggers: dict[str, str] = {}
        for key, triggers in self.entries.items():
            if not triggers:
                raise ConfigError(f"topic {key!r} has an empty trigger list")
            lowered = tuple(t.strip().lower() for t in triggers)
            for trigger in lowered:
                if not trigger:
                    raise ConfigError(f"topic {key!r} has a blank trigger phrase")
                owner = seen_triggers.get(trigger)
                if owner is not None and owner != key:
                    raise ConfigError(
                        f"trigger {trigger!r} maps to both {owner!r} and {key!r}"
                    )
                seen_triggers[trigger] = key
            normalized[key] = lowered
        object.__setattr__(self, "entries", normalized)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class WindowBin:
    """Per-window alert tallies feeding the overload metrics."""

    window: TimeRange
    total_volume: int
    total_critical: int
    missed_critical: int
    missed_count: int

    def __post_init__(self) -> None:
        if not 0 <= self.missed_critical <= self.total_critical <= self.total_volume:
            raise ValueError("bin counts violate missed_critical <= critical <= volume")
        if not 0 <= self.missed_count <= self.total_volume:
            raise ValueError("bin counts violate missed_count <= volume")


def _scope_matches(scope: Scope, alert: AlertRecord) -> bool:
    if scope.kind is ScopeKind.ORG:
        return True
    if scope.kind is ScopeKind.TEAM:
        return alert.team == scope.id
    return alert.assigned_to == scope.id


def _minutes(delta: timedelta) -> float:
    return delta.total_seconds() / 60.0


def _hours(delta: timedelta) -> float:
    return delta.total_seconds() / 3600.0


def _epoch_ms(instant: datetime) -> int:
    return (instant - _EPOCH) // timedelta(milliseconds=1)


# ---------------------------------------------------------------------------
# Compliance fatigue
# ---------------------------------------------------------------------------


def compute_compliance_fatigue(
    alerts: Iterable[AlertRecord],
    time_range: TimeRange,
    scope: Scope = ORG_SCOPE,
    ignore_markers: frozenset[str] = DEFAULT_IGNORE_MARKERS,
) -> IndicatorResult:
    """Mean closure time (minutes) and ignore rate over closed alerts.

    Filters to alerts created inside the range and matching the scope.
    Both metrics fall back to 0 when no alerts were closed, per the
    guard expressions of the source procedure.
    """
    filtered = [
        a for a in alerts if time_range.contains(a.created_at) and _scope_matches(scope, a)
    ]
    closed = sorted(
        (a for a in filtered if a.status == AlertStatus.CLOSED), key=lambda a: a.id
    )
    ignored = 0
    total_minutes = 0.0
    for alert in closed:
        total_minutes += _minutes(alert.closed_at - alert.created_at)
        notes = alert.resolution_notes if alert.resolution_notes is not None else ""
        if notes in ignore_markers:
            ignored += 1
    n_closed = len(closed)
    mtta = total_minutes / n_closed if n_closed > 0 else 0.0
    ignore_rate = ignored / n_closed if n_closed > 0 else 0.0
    return IndicatorResult(
        indicator=Indicator.COMPLIANCE_FATIGUE,
        scope=scope,
        range=time_range,
        values={"mtta_minutes": mtta, "ignore_rate": ignore_rate},
        sample_sizes={"alerts_in_scope": len(filtered), "closed": n_closed, "ignored": ignored},
    )


# ---------------------------------------------------------------------------
# Alert overload bias
# ---------------------------------------------------------------------------


def bin_alerts(
    alerts: Iterable[AlertRecord], time_range: TimeRange, window: timedelta
) -> list[WindowBin]:
    """Partition in-range alerts into epoch-aligned window bins.

    Bins cover the whole range (zero-filled where no alerts landed), so
    every in-range alert falls in exactly one bin and bin volumes sum to
    the filtered total.
    """
    window_ms = window // timedelta(milliseconds=1)
    if window_ms <= 0:
        raise UsageError("window duration must be positive")
    start_ms = _epoch_ms(time_range.start)
    end_ms = _epoch_ms(time_range.end)
    first = (start_ms // window_ms) * window_ms
    n_bins = ((end_ms - 1) // window_ms) - (start_ms // window_ms) + 1

    volume = [0] * n_bins
    critical = [0] * n_bins
    missed_critical = [0] * n_bins
    missed = [0] * n_bins
    for alert in alerts:
        if not time_range.contains(alert.created_at):
            continue
        idx = (_epoch_ms(alert.created_at) - first) // window_ms
        volume[idx] += 1
        is_missed = alert.status == AlertStatus.MISSED
        if is_missed:
            missed[idx] += 1
        if alert.severity == Severity.CRITICAL:
            critical[idx] += 1
            if is_missed:
                missed_critical[idx] += 1

    bins: list[WindowBin] = []
    for i in range(n_bins):
        bin_start = _EPOCH + timedelta(milliseconds=first + i * window_ms)
        bins.append(
            WindowBin(
                window=TimeRange(bin_start, bin_start + window),
                total_volume=volume[i],
                total_critical=critical[i],
                missed_critical=missed_critical[i],
                missed_count=missed[i],
            )
        )
    return bins


def compute_alert_overload(
    alerts: Iterable[AlertRecord],
    time_range: TimeRange,
    window: timedelta,
    scope: Scope = ORG_SCOPE,
) -> IndicatorResult:
    """Peak miss rate and volume-to-miss correlation over window bins.

    The peak threshold is the 90th percentile of per-bin volumes; peak
    bins are strictly above it. PMR falls back to 0 when peak bins hold
    no critical alerts. VMCC carries the undefined marker when either
    per-bin series has zero variance.

    Raises:
        DataError: when the range spans fewer than two window bins.
    """
    scoped = [a for a in alerts if _scope_matches(scope, a)]
    bins = bin_alerts(scoped, time_range, window)
    if len(bins) < 2:
        raise DataError("range spans fewer than 2 window bins; correlation impossible")

    volumes = [b.total_volume for b in bins]
    threshold = percentile(volumes, PEAK_PERCENTILE)
    critical_in_peak = 0
    missed_in_peak = 0
    peak_bins = 0
    for b in bins:
        if b.total_volume > threshold:
            peak_bins += 1
            critical_in_peak += b.total_critical
            missed_in_peak += b.missed_critical
    pmr = missed_in_peak / critical_in_peak if critical_in_peak > 0 else 0.0

    vmcc: MetricValue
    try:
        vmcc = pearson(volumes, [float(b.missed_count) for b in bins])
    except DataError:
        vmcc = Marker.UNDEFINED

    in_range_total = sum(volumes)
    return IndicatorResult(
        indicator=Indicator.ALERT_OVERLOAD,
        scope=scope,
        range=time_range,
        values={"pmr": pmr, "vmcc": vmcc},
        sample_sizes={
            "alerts_in_scope": in_range_total,
            "bins": len(bins),
            "peak_bins": peak_bins,
            "critical_in_peak": critical_in_peak,
            "missed_critical_in_peak": missed_in_peak,
        },
    )


# ---------------------------------------------------------------------------
# Risk perception gap
# ---------------------------------------------------------------------------


def _mean_hours_to_patch(vulns: list[VulnRecord]) -> tuple[float, int]:
    """Mean detection-to-remediation hours over remediated vulns, with the
    guard default of 0 when none were remediated."""
    remediated = sorted(
        (v for v in vulns if v.remediated_at is not None), key=lambda v: v.id
    )
    if not remediated:
        return 0.0, 0
    total = 0.0
    for v in remediated:
        total += _hours(v.remediated_at - v.detected_at)
    return total / len(remediated), len(remediated)


def compute_risk_perception_gap(
    vulns: Iterable[VulnRecord],
    time_range: TimeRange,
    scope: Scope = ORG_SCOPE,
    open_only: bool = False,
) -> IndicatorResult:
    """Patch latency gap (hours) and vulnerability density ratio.

    Vulns are filtered by detection time; prod is compared against the
    dev+staging pool. Densities divide the vuln count (all in-range vulns
    by default, open ones under ``open_only``) by the group's distinct
    asset count. VDR is the infinite marker when prod density is 0 and
    the undefined marker when a group has no assets at all. ``scope``
    only labels the result: vuln records carry no team attribution.
    """
    in_range = [v for v in vulns if time_range.contains(v.detected_at)]
    prod = [v for v in in_range if v.environment == Environment.PROD]
    nonprod = [v for v in in_range if v.environment in (Environment.DEV, Environment.STAGING)]

    plg: MetricValue
    vdr: MetricValue
    density_prod: MetricValue
    density_nonprod: MetricValue

    mttp_prod, n_prod_rem = _mean_hours_to_patch(prod)
    mttp_nonprod, n_nonprod_rem = _mean_hours_to_patch(nonprod)
    if not in_range:
        plg = Marker.UNDEFINED
    else:
        plg = mttp_nonprod - mttp_prod

    prod_assets = {v.asset_id for v in prod}
    nonprod_assets = {v.asset_id for v in nonprod}
    prod_open = sum(1 for v in prod if v.remediated_at is None)
    nonprod_open = sum(1 for v in nonprod if v.remediated_at is None)
    prod_count = prod_open if open_only else len(prod)
    nonprod_count = nonprod_open if open_only else len(nonprod)

    density_prod = prod_count / len(prod_assets) if prod_assets else Marker.UNDEFINED
    density_nonprod = nonprod_count / len(nonprod_assets) if nonprod_assets else Marker.UNDEFINED

    if isinstance(density_prod, Marker) or isinstance(density_nonprod, Marker):
        vdr = Marker.UNDEFINED
    elif density_prod > 0.0:
        vdr = density_nonprod / density_prod
    else:
        vdr = Marker.INFINITE

    return IndicatorResult(
        indicator=Indicator.RISK_PERCEPTION_GAP,
        scope=scope,
        range=time_range,
        values={
            "plg_hours": plg,
            "vdr": vdr,
            "vuln_density_prod": density_prod,
            "vuln_density_nonprod": density_nonprod,
        },
        sample_sizes={
            "vulns_in_scope": len(in_range),
            "prod_vulns": len(prod),
            "nonprod_vulns": len(nonprod),
            "prod_remediated": n_prod_rem,
            "nonprod_remediated": n_nonprod_rem,
            "prod_open": prod_open,
            "nonprod_open": nonprod_open,
            "prod_assets": len(prod_assets),
            "nonprod_assets": len(nonprod_assets),
        },
    )


# ---------------------------------------------------------------------------
# Against-gravity communication
# ---------------------------------------------------------------------------


def extract_topics(
    items: Iterable[CommItem],
    taxonomy: TopicTaxonomy,
    keywords: Sequence[str],
) -> set[str]:
    """Deterministic topic extraction by taxonomy trigger matching.

    An item contributes a topic iff its text contains one of the topic's
    trigger phrases as a token-boundary run AND contains at least one of
    the supplied keywords. Returns the union over items.

    Raises:
        DataError: on an empty taxonomy.
    """
    if len(taxonomy) == 0:
        raise DataError("topic taxonomy is empty")
    keyword_phrases = [tuple(tokenize(k)) for k in keywords]
    keyword_phrases = [k for k in keyword_phrases if k]
    phrase_by_topic = {
        key: [tuple(tokenize(t)) for t in triggers]
        for key, triggers in taxonomy.entries.items()
    }
    found: set[str] = set()
    for item in items:
        tokens = tokenize(item.text)
        if not tokens:
            continue
        token_set = set(tokens)
        if not any(
            k[0] in token_set and _contains_phrase(tokens, k) for k in keyword_phrases
        ):
            continue
        for key, phrases in phrase_by_topic.items():
            if key in found:
                continue
            if any(p and p[0] in token_set and _contains_phrase(tokens, p) for p in phrases):
                found.add(key)
    return found


def compute_uctr(
    comm: Iterable[CommItem],
    taxonomy: TopicTaxonomy,
    keywords: Sequence[str],
    time_range: TimeRange,
    scope: Scope = ORG_SCOPE,
) -> IndicatorResult:
    """Share of unique security topics seen only through private channels.

    The denominator is the union of unique topics across both channel
    kinds; the ratio carries the undefined marker when that union is
    empty. ``scope`` only labels the result.
    """
    in_range = [c for c in comm if time_range.contains(c.timestamp)]
    official_items = [c for c in in_range if c.visibility == Visibility.OFFICIAL]
    private_items = [c for c in in_range if c.visibility == Visibility.PRIVATE]
    official_topics = extract_topics(official_items, taxonomy, keywords)
    private_topics = extract_topics(private_items, taxonomy, keywords)
    all_topics = official_topics | private_topics

    uctr: MetricValue
    uctr = len(private_topics) / len(all_topics) if all_topics else Marker.UNDEFINED
    return IndicatorResult(
        indicator=Indicator.AGAINST_GRAVITY,
        scope=scope,
        range=time_range,
        values={"uctr": uctr},
        sample_sizes={
            "comm_in_scope": len(in_range),
            "official_items": len(official_items),
            "private_items": len(private_items),
            "official_topics": len(official_topics),
            "private_topics": len(private_topics),
            "union_topics": len(all_topics),
        },
    )


# ---------------------------------------------------------------------------
# Threshold classification
# ---------------------------------------------------------------------------

_COMPARATORS = {
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
}

# Metrics a threshold may reference.
THRESHOLDABLE_METRICS = frozenset(
    {"mtta_minutes", "ignore_rate", "pmr", "vmcc", "plg_hours", "vdr", "uctr"}
)


@dataclass(frozen=True)
class Threshold:
    op: str
    value: float

    def __post_init__(self) -> None:
        if self.op not in _COMPARATORS:
            raise ConfigError(f"unknown comparator {self.op!r}")


# The ratio of private-only topics above one half signals severe breakdown;
# the remaining cutoffs are engine calibration defaults, not sourced values.
DEFAULT_THRESHOLDS: dict[str, Threshold] = {
    "uctr": Threshold(">", 0.5),
    "ignore_rate": Threshold(">", 0.35),
    "pmr": Threshold(">", 0.2),
    "vmcc": Threshold(">", 0.5),
    "mtta_minutes": Threshold(">", 240.0),
    "plg_hours": Threshold(">", 24.0),
    "vdr": Threshold(">", 1.5),
}


@dataclass(frozen=True)
class RiskFlag:
    indicator: Indicator
    scope: Scope
    flagged: bool
    rationale: str


def classify_risk(
    results: Iterable[IndicatorResult],
    thresholds: dict[str, Threshold] = DEFAULT_THRESHOLDS,
) -> list[RiskFlag]:
    """Deterministic threshold flagging of computed indicator results.

    Marker-valued metrics (undefined, infinite, suppressed) are never
    flagged; the rationale says why. Infinite density ratios are treated
    as exceeding any finite cutoff would be misleading, so they are
    reported but not flagged.

    Raises:
        ConfigError: when a threshold names an unknown metric.
    """
    for metric in thresholds:
        if metric not in THRESHOLDABLE_METRICS:
            raise ConfigError(f"threshold for unknown metric {metric!r}")

    flags: list[RiskFlag] = []
    for result in results:
        reasons: list[str] = []
        flagged = False
        for metric in sorted(result.values):
            if metric not in thresholds:
                continue
            rule = thresholds[metric]
            value = result.values[metric]
            if isinstance(value, Marker):
                reasons.append(f"{metric} {value.value}; not evaluated")
                continue
            if _COMPARATORS[rule.op](value, rule.value):
                flagged = True
                reasons.append(f"{metric}={value:.6g} {rule.op} {rule.value:.6g}")
            else:
                reasons.append(f"{metric}={value:.6g} within threshold {rule.op} {rule.value:.6g}")
        if not reasons:
            reasons.append("no thresholds applicable")
        flags.append(
            RiskFlag(
                indicator=result.indicator,
                scope=result.scope,
                flagged=flagged,
                rationale="; ".join(reasons),
            )
        )
    return flags
