"""Line-delimited telemetry export parsing.

One JSON object per line, schemas documented in the README. Strict only on
the fields the indicator algorithms consume: unknown fields are ignored
and missing optionals default to absent, because real SIEM/ticketing
exports are ragged. Every input line is accounted for as accepted or
rejected; nothing is dropped silently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from .domain import (
    AlertRecord,
    AlertStatus,
    CommItem,
    CommSource,
    Environment,
    Severity,
    Visibility,
    VulnRecord,
    format_rfc3339,
    parse_rfc3339,
    validate_record,
)
from .errors import MergeError, UsageError

RECORD_KINDS = ("alerts", "vulns", "comm")


@dataclass(frozen=True)
class Provenance:
    """Where a bundle came from and when it was read."""

    sources: tuple[str, ...]
    ingested_at: datetime


@dataclass(frozen=True)
class DatasetBundle:
    """Validated telemetry snapshot: alerts, vulns and comm items."""

    alerts: tuple[AlertRecord, ...] = ()
    vulns: tuple[VulnRecord, ...] = ()
    comm: tuple[CommItem, ...] = ()
    provenance: Optional[Provenance] = None


@dataclass(frozen=True)
class IngestReport:
    """Per-file parse accounting; accepted + rejected = non-blank lines."""

    kind: str
    accepted: int
    rejected: tuple[tuple[int, str], ...] = ()


class _LineError(Exception):
    """Internal: one line failed to parse; carries the reason."""


def _require_str(obj: dict, key: str) -> str:
    if key not in obj:
        raise _LineError(f"missing field {key!r}")
    value = obj[key]
    if not isinstance(value, str) or not value:
        raise _LineError(f"field {key!r} must be a non-empty string")
    return value


def _optional_str(obj: dict, key: str) -> Optional[str]:
    value = obj.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise _LineError(f"field {key!r} must be a string or null")
    return value


def _timestamp(obj: dict, key: str, required: bool) -> Optional[datetime]:
    value = obj.get(key)
    if value is None:
        if required:
            raise _LineError(f"missing field {key!r}")
        return None
    if not isinstance(value, str):
        raise _LineError(f"field {key!r} must be an RFC3339 string")
    try:
        return parse_rfc3339(value)
    except ValueError as exc:
        raise _LineError(f"field {key!r}: {exc}") from exc


def _coerce(enum_cls, raw: str):
    """Return the enum member when valid, else the raw string so that
    validate_record can name the violation."""
    try:
        return enum_cls(raw)
    except ValueError:
        return raw


def _normalize_notes(notes: Optional[str]) -> Optional[str]:
    # Ignore-marker comparison happens everywhere downstream; normalize once.
    return notes.strip().lower() if notes is not None else None


def alert_from_dict(obj: dict) -> AlertRecord:
    return AlertRecord(
        id=_require_str(obj, "id"),
        created_at=_timestamp(obj, "created_at", required=True),
        closed_at=_timestamp(obj, "closed_at", required=False),
        status=_coerce(AlertStatus, _require_str(obj, "status")),
        severity=_coerce(Severity, _require_str(obj, "severity")),
        assigned_to=_optional_str(obj, "assigned_to"),
        team=_optional_str(obj, "team"),
        resolution_notes=_normalize_notes(_optional_str(obj, "resolution_notes")),
        acknowledged_at=_timestamp(obj, "acknowledged_at", required=False),
    )


def vuln_from_dict(obj: dict) -> VulnRecord:
    return VulnRecord(
        id=_require_str(obj, "id"),
        asset_id=_require_str(obj, "asset_id"),
        severity=_coerce(Severity, _require_str(obj, "severity")),
        environment=_coerce(Environment, _require_str(obj, "environment")),
        detected_at=_timestamp(obj, "detected_at", required=True),
        remediated_at=_timestamp(obj, "remediated_at", required=False),
    )


def comm_from_dict(obj: dict) -> CommItem:
    text = obj.get("text")
    if not isinstance(text, str):
        raise _LineError("field 'text' must be a string")
    return CommItem(
        id=_require_str(obj, "id"),
        timestamp=_timestamp(obj, "timestamp", required=True),
        visibility=_coerce(Visibility, _require_str(obj, "visibility")),
        source=_coerce(CommSource, _require_str(obj, "source")),
        text=text,
    )


def alert_to_dict(alert: AlertRecord) -> dict:
    out = {
        "id": alert.id,
        "created_at": format_rfc3339(alert.created_at),
        "closed_at": format_rfc3339(alert.closed_at) if alert.closed_at else None,
        "status": str(alert.status.value if isinstance(alert.status, AlertStatus) else alert.status),
        "severity": str(alert.severity.value if isinstance(alert.severity, Severity) else alert.severity),
        "assigned_to": alert.assigned_to,
        "team": alert.team,
        "resolution_notes": alert.resolution_notes,
    }
    if alert.acknowledged_at is not None:
        out["acknowledged_at"] = format_rfc3339(alert.acknowledged_at)
    return out


def vuln_to_dict(vuln: VulnRecord) -> dict:
    return {
        "id": vuln.id,
        "asset_id": vuln.asset_id,
        "severity": str(vuln.severity.value if isinstance(vuln.severity, Severity) else vuln.severity),
        "environment": str(
            vuln.environment.value if isinstance(vuln.environment, Environment) else vuln.environment
        ),
        "detected_at": format_rfc3339(vuln.detected_at),
        "remediated_at": format_rfc3339(vuln.remediated_at) if vuln.remediated_at else None,
    }


def comm_to_dict(item: CommItem) -> dict:
    return {
        "id": item.id,
        "timestamp": format_rfc3339(item.timestamp),
        "visibility": str(item.visibility.value if isinstance(item.visibility, Visibility) else item.visibility),
        "source": str(item.source.value if isinstance(item.source, CommSource) else item.source),
        "text": item.text,
    }


_PARSERS = {"alerts": alert_from_dict, "vulns": vuln_from_dict, "comm": comm_from_dict}
_SERIALIZERS = {"alerts": alert_to_dict, "vulns": vuln_to_dict, "comm": comm_to_dict}


def record_to_json_line(kind: str, record) -> str:
    if kind not in _SERIALIZERS:
        raise UsageError(f"unknown record kind {kind!r}; expected one of {RECORD_KINDS}")
    return json.dumps(_SERIALIZERS[kind](record), sort_keys=True, separators=(",", ":"))


def load_dataset(
    path: str | Path,
    kind: str,
    actor_transform: Optional[Callable[[str], str]] = None,
) -> tuple[list, IngestReport]:
    """Parse one line-delimited export into validated records.

    Order-preserving and deterministic: identical bytes yield identical
    records and an identical report. Malformed lines land in the report
    with their 1-based line number and the violated rule; blank lines are
    excluded from the accounting. ``actor_transform`` (when given) is
    applied to alert ``assigned_to`` values, which is where salt-keyed
    pseudonymization plugs in.

    Raises:
        UsageError: unknown ``kind``.
        OSError: unreadable file (fatal, not a per-line rejection).
    """
    if kind not in _PARSERS:
        raise UsageError(f"unknown record kind {kind!r}; expected one of {RECORD_KINDS}")
    parse = _PARSERS[kind]

    records: list = []
    rejected: list[tuple[int, str]] = []
    seen_ids: set[str] = set()
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            rejected.append((line_no, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            rejected.append((line_no, "line is not a JSON object"))
            continue
        try:
            record = parse(obj)
        except _LineError as exc:
            rejected.append((line_no, str(exc)))
            continue
        if kind == "alerts" and actor_transform is not None and record.assigned_to is not None:
            record = AlertRecord(
                id=record.id,
                created_at=record.created_at,
                closed_at=record.closed_at,
                status=record.status,
                severity=record.severity,
                assigned_to=actor_transform(record.assigned_to),
                team=record.team,
                resolution_notes=record.resolution_notes,
                acknowledged_at=record.acknowledged_at,
            )
        violations = validate_record(record)
        if violations:
            rejected.append((line_no, "; ".join(violations)))
            continue
        if record.id in seen_ids:
            rejected.append((line_no, f"duplicate id {record.id!r}"))
            continue
        seen_ids.add(record.id)
        records.append(record)
    return records, IngestReport(kind=kind, accepted=len(records), rejected=tuple(rejected))


def load_bundle(
    alerts_path: Optional[str | Path] = None,
    vulns_path: Optional[str | Path] = None,
    comm_path: Optional[str | Path] = None,
    actor_transform: Optional[Callable[[str], str]] = None,
    now: Optional[datetime] = None,
) -> tuple[DatasetBundle, dict[str, IngestReport]]:
    """Load any subset of the three export files into one bundle."""
    reports: dict[str, IngestReport] = {}
    parts: dict[str, tuple] = {"alerts": (), "vulns": (), "comm": ()}
    sources: list[str] = []
    for kind, path in (("alerts", alerts_path), ("vulns", vulns_path), ("comm", comm_path)):
        if path is None:
            continue
        records, report = load_dataset(path, kind, actor_transform=actor_transform)
        parts[kind] = tuple(records)
        reports[kind] = report
        sources.append(str(path))
    provenance = Provenance(
        sources=tuple(sources),
        ingested_at=now if now is not None else datetime.now(timezone.utc),
    )
    bundle = DatasetBundle(
        alerts=parts["alerts"], vulns=parts["vulns"], comm=parts["comm"], provenance=provenance
    )
    return bundle, reports


def merge_bundles(bundles: list[DatasetBundle]) -> DatasetBundle:
    """Concatenate bundles, rejecting duplicate record ids.

    Raises:
        MergeError: when any id appears in more than one bundle (or twice
            across lists of the same kind); ``exc.duplicates`` holds one
            ``(kind, id, provenance_a, provenance_b)`` entry per clash.
    """
    duplicates: list[tuple[str, str, str, str]] = []
    merged: dict[str, list] = {"alerts": [], "vulns": [], "comm": []}
    owner: dict[tuple[str, str], str] = {}
    sources: list[str] = []
    newest: Optional[datetime] = None
    for bundle in bundles:
        prov = bundle.provenance
        label = ",".join(prov.sources) if prov and prov.sources else "<unknown source>"
        if prov is not None:
            sources.extend(prov.sources)
            if newest is None or prov.ingested_at > newest:
                newest = prov.ingested_at
        for kind in RECORD_KINDS:
            for record in getattr(bundle, kind):
                key = (kind, record.id)
                if key in owner:
                    duplicates.append((kind, record.id, owner[key], label))
                    continue
                owner[key] = label
                merged[kind].append(record)
    if duplicates:
        shown = ", ".join(f"{kind}:{rid}" for kind, rid, _, _ in duplicates[:5])
        more = "" if len(duplicates) <= 5 else f" (+{len(duplicates) - 5} more)"
        err = MergeError(f"duplicate record ids across bundles: {shown}{more}")
        err.duplicates = tuple(duplicates)
        raise err
    provenance = Provenance(
        sources=tuple(sources),
        ingested_at=newest if newest is not None else datetime.now(timezone.utc),
    )
    return DatasetBundle(
        alerts=tuple(merged["alerts"]),
        vulns=tuple(merged["vulns"]),
        comm=tuple(merged["comm"]),
        provenance=provenance,
    )
