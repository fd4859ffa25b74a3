"""Privacy safeguards on every report path.

Dictionary-driven text anonymization (deterministic and auditable, unlike
a model-based recognizer), salted actor pseudonymization, role tags, and
k-anonymity suppression of small groups. The salt arrives via
configuration (environment variable in the CLI), never a flag.
"""

from __future__ import annotations

import hashlib
import hmac
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping

from .domain import IndicatorResult, Marker
from .errors import ConfigError

DEFAULT_K = 10
MINIMUM_K = 2

# Key in IndicatorResult.sample_sizes that carries the group population.
MEMBER_COUNT_KEY = "members"

_PSEUDONYM_LENGTH = 16


class PlaceholderClass(str, Enum):
    PERSON = "PERSON"
    LOCATION = "LOCATION"
    ORG = "ORG"


_PLACEHOLDER_RE = re.compile(r"\[(PERSON|LOCATION|ORG)_(\d+)\]")


@dataclass(frozen=True)
class EntityDictionary:
    """Raw entity strings to scrub, plus actor-id to role-tag mapping."""

    entries: dict[str, PlaceholderClass]
    role_map: dict[str, str]

    def __post_init__(self) -> None:
        for raw in self.entries:
            if not raw or not raw.strip():
                raise ConfigError("entity dictionary contains an empty entry")


class SuppressionAction(str, Enum):
    SUPPRESS_VALUE = "suppress_value"
    MERGE_INTO_PARENT = "merge_into_parent"


@dataclass(frozen=True)
class SuppressionPolicy:
    """Minimum group size below which metrics must not be reported."""

    k: int = DEFAULT_K
    action: SuppressionAction = SuppressionAction.SUPPRESS_VALUE

    def __post_init__(self) -> None:
        if self.k < MINIMUM_K:
            raise ConfigError(f"k-anonymity floor must be >= {MINIMUM_K}, got {self.k}")


def anonymize_text(text: str, dictionary: EntityDictionary) -> str:
    """Replace dictionary entities with ``[CLASS_n]`` placeholders.

    Matching is case-insensitive at token boundaries, longest match first.
    Each distinct entity keeps one placeholder number for the whole
    document, numbered by first occurrence and continuing after any
    placeholders already present, which makes the operation idempotent.
    """
    if not dictionary.entries:
        return text
    # Longest first so "New York" beats "York"; ties broken lexically for
    # a total, deterministic order.
    candidates = sorted(
        ((raw.lower(), cls) for raw, cls in dictionary.entries.items()),
        key=lambda item: (-len(item[0]), item[0]),
    )
    lowered = text.lower()

    counters: dict[PlaceholderClass, int] = {cls: 0 for cls in PlaceholderClass}
    for m in _PLACEHOLDER_RE.finditer(text):
        cls = PlaceholderClass(m.group(1))
        counters[cls] = max(counters[cls], int(m.group(2)))

    assigned: dict[str, str] = {}
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        existing = _PLACEHOLDER_RE.match(text, i)
        if existing is not None:
            out.append(existing.group(0))
            i = existing.end()
            continue
        if i > 0 and text[i - 1].isalnum():
            out.append(text[i])
            i += 1
            continue
        matched = None
        for raw_lower, cls in candidates:
            end = i + len(raw_lower)
            if lowered.startswith(raw_lower, i) and (end == n or not text[end].isalnum()):
                matched = (raw_lower, cls)
                break
        if matched is None:
            out.append(text[i])
            i += 1
            continue
        raw_lower, cls = matched
        placeholder = assigned.get(raw_lower)
        if placeholder is None:
            counters[cls] += 1
            placeholder = f"[{cls.value}_{counters[cls]}]"
            assigned[raw_lower] = placeholder
        out.append(placeholder)
        i += len(raw_lower)
    return "".join(out)


def count_entities(text: str, dictionary: EntityDictionary) -> int:
    """Token-boundary occurrences of dictionary entities outside
    placeholders; anonymized text must score 0."""
    if not dictionary.entries:
        return 0
    candidates = sorted(
        (raw.lower() for raw in dictionary.entries),
        key=lambda item: (-len(item), item),
    )
    lowered = text.lower()
    total = 0
    i = 0
    n = len(text)
    while i < n:
        existing = _PLACEHOLDER_RE.match(text, i)
        if existing is not None:
            i = existing.end()
            continue
        if i > 0 and text[i - 1].isalnum():
            i += 1
            continue
        advanced = False
        for raw_lower in candidates:
            end = i + len(raw_lower)
            if lowered.startswith(raw_lower, i) and (end == n or not text[end].isalnum()):
                total += 1
                i = end
                advanced = True
                break
        if not advanced:
            i += 1
    return total


def pseudonymize_actor(actor_id: str, salt: str) -> str:
    """Salt-keyed one-way digest rendered as a short stable token.

    Raises:
        ConfigError: on an empty salt.
    """
    if not salt:
        raise ConfigError("pseudonymization salt must be non-empty")
    digest = hmac.new(salt.encode("utf-8"), actor_id.encode("utf-8"), hashlib.sha256)
    return digest.hexdigest()[:_PSEUDONYM_LENGTH]


def role_tag(dictionary: EntityDictionary, actor_id: str) -> str | None:
    return dictionary.role_map.get(actor_id)


def enforce_k_anonymity(
    grouped_results: Mapping[str, IndicatorResult],
    policy: SuppressionPolicy = SuppressionPolicy(),
) -> dict[str, IndicatorResult]:
    """Suppress metrics for any group smaller than the policy floor.

    Each result must carry its group population under
    ``sample_sizes["members"]``. Entries below k get every metric value
    replaced by the suppression marker and the reason recorded; under the
    merge action the entry is only signaled for the caller to regroup and
    recompute, but its values are still withheld here.

    Raises:
        ConfigError: when a result lacks a member count.
    """
    out: dict[str, IndicatorResult] = {}
    for group, result in grouped_results.items():
        members = result.sample_sizes.get(MEMBER_COUNT_KEY)
        if members is None:
            raise ConfigError(f"group {group!r} result lacks a {MEMBER_COUNT_KEY!r} sample size")
        if members >= policy.k:
            out[group] = result
            continue
        reason = f"{policy.action.value}: members={members} < k={policy.k}"
        out[group] = replace(
            result,
            values={key: Marker.SUPPRESSED for key in result.values},
            suppression=reason,
        )
    return out


# ---------------------------------------------------------------------------
# Config file formats
# ---------------------------------------------------------------------------


def load_entity_dictionary(path: str | Path, role_map_path: str | Path | None = None) -> EntityDictionary:
    """Read ``raw<TAB>CLASS`` entity lines and an optional
    ``actor_id<TAB>role`` role map."""
    entries: dict[str, PlaceholderClass] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigError(f"{path}:{line_no}: expected raw<TAB>CLASS")
        raw, cls_text = parts[0].strip(), parts[1].strip()
        try:
            cls = PlaceholderClass(cls_text)
        except ValueError as exc:
            raise ConfigError(f"{path}:{line_no}: unknown placeholder class {cls_text!r}") from exc
        entries[raw] = cls

    role_map: dict[str, str] = {}
    if role_map_path is not None:
        for line_no, line in enumerate(Path(role_map_path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{role_map_path}:{line_no}: expected actor_id<TAB>role")
            role_map[parts[0].strip()] = parts[1].strip()
    return EntityDictionary(entries=entries, role_map=role_map)
