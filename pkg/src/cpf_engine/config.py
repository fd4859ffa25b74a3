"""Engine configuration: ignore markers, risk thresholds, topic taxonomy,
retrieval weights. One JSON document, every key optional; defaults below.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .indicators import DEFAULT_IGNORE_MARKERS, DEFAULT_THRESHOLDS, Threshold, TopicTaxonomy

DEFAULT_TAXONOMY = TopicTaxonomy(
    entries={
        "cert_expiry": ("cert expired", "certificate expiry", "tls cert"),
        "vpn_outage": ("vpn down", "vpn outage"),
        "patch_rollback": ("patch rollback", "rolled back the patch"),
        "phishing_wave": ("phishing wave", "phishing campaign"),
        "credential_leak": ("credential leak", "leaked credentials", "password leak"),
        "firewall_gap": ("firewall rule gap", "open firewall port"),
        "mfa_bypass": ("mfa bypass", "mfa fatigue push"),
        "backup_failure": ("backup failure", "backup job failed"),
        "log_gap": ("logging gap", "missing logs"),
        "ransomware_drill": ("ransomware drill", "ransomware tabletop"),
    }
)

DEFAULT_KEYWORDS = (
    "security",
    "cert",
    "vpn",
    "patch",
    "phishing",
    "credential",
    "firewall",
    "mfa",
    "backup",
    "logging",
    "ransomware",
    "incident",
)


@dataclass(frozen=True)
class RetrievalWeights:
    """Hybrid score mix: alpha cosine + beta keyword Jaccard + gamma
    exp(-age/tau). Declared defaults, configurable per deployment."""

    alpha: float = 0.6
    beta: float = 0.3
    gamma: float = 0.1
    tau_days: float = 30.0

    def __post_init__(self) -> None:
        if self.tau_days <= 0:
            raise ConfigError("tau_days must be positive")


@dataclass(frozen=True)
class EngineConfig:
    ignore_markers: frozenset[str] = DEFAULT_IGNORE_MARKERS
    thresholds: dict[str, Threshold] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    taxonomy: TopicTaxonomy = DEFAULT_TAXONOMY
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    retrieval: RetrievalWeights = RetrievalWeights()
    open_only: bool = False


def load_engine_config(path: str | Path | None) -> EngineConfig:
    """Parse the JSON engine config; missing keys keep their defaults.

    Raises:
        ConfigError: on malformed JSON or bad values.
    """
    if path is None:
        return EngineConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    kwargs: dict = {}
    if "ignore_markers" in raw:
        markers = raw["ignore_markers"]
        if not isinstance(markers, list) or not all(isinstance(m, str) for m in markers):
            raise ConfigError("ignore_markers must be a list of strings")
        kwargs["ignore_markers"] = frozenset(m.strip().lower() for m in markers)
    if "thresholds" in raw:
        thresholds: dict[str, Threshold] = {}
        for metric, spec in raw["thresholds"].items():
            if not isinstance(spec, dict) or "op" not in spec or "value" not in spec:
                raise ConfigError(f"threshold {metric!r} needs an op and a value")
            thresholds[metric] = Threshold(op=spec["op"], value=float(spec["value"]))
        kwargs["thresholds"] = thresholds
    if "taxonomy" in raw:
        entries = raw["taxonomy"]
        if not isinstance(entries, dict):
            raise ConfigError("taxonomy must map topic keys to trigger lists")
        kwargs["taxonomy"] = TopicTaxonomy(
            entries={key: tuple(triggers) for key, triggers in entries.items()}
        )
    if "keywords" in raw:
        kwargs["keywords"] = tuple(str(k) for k in raw["keywords"])
    if "retrieval" in raw:
        spec = raw["retrieval"]
        kwargs["retrieval"] = RetrievalWeights(
            alpha=float(spec.get("alpha", 0.6)),
            beta=float(spec.get("beta", 0.3)),
            gamma=float(spec.get("gamma", 0.1)),
            tau_days=float(spec.get("tau_days", 30.0)),
        )
    if "open_only" in raw:
        kwargs["open_only"] = bool(raw["open_only"])
    return EngineConfig(**kwargs)
