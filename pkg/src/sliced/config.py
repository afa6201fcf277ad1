"""Tool configuration: classification overrides, parameter defaults, caps.

One JSON file configures everything; the CLI finds it via ``--config`` or
the SLICED_CONFIG environment variable. Models stay portable because
site-specific naming rules and parameter defaults live here, not in code.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

from .ingest import ClassificationTable, Rule, default_table
from .ir import Archetype, ModelError

ENV_VAR = "SLICED_CONFIG"

DEFAULT_STATE_CAP = 50_000_000
DEFAULT_LIVENESS_BOUND = 100


class ConfigError(ModelError):
    """A configuration file that cannot be used."""


@dataclass(frozen=True)
class PlanSettings:
    no_consecutive_toggle: bool = False
    allow_faults: bool = False


@dataclass(frozen=True)
class Config:
    table: ClassificationTable = field(default_factory=default_table)
    defaults: Mapping[str, Mapping[str, int]] = field(default_factory=dict)
    state_cap: int = DEFAULT_STATE_CAP
    liveness_bound: int = DEFAULT_LIVENESS_BOUND
    merge_enumeration_cap: int = 1_000_000
    plan: PlanSettings = field(default_factory=PlanSettings)

    def params_for(self, tag: Archetype, block_params: Mapping[str, int]) -> dict:
        merged = dict(self.defaults.get(tag.value, {}))
        merged.update(block_params)
        return merged


def _parse_rules(raw: object, where: str) -> Tuple[Rule, ...]:
    if not isinstance(raw, list):
        raise ConfigError(f"{where} must be a list of rules")
    rules = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "pattern" not in entry or "archetype" not in entry:
            raise ConfigError(f"{where}[{i}] needs 'pattern' and 'archetype'")
        try:
            archetype = Archetype(entry["archetype"])
        except ValueError:
            raise ConfigError(f"{where}[{i}]: unknown archetype {entry['archetype']!r}") from None
        rules.append(
            Rule(
                pattern=str(entry["pattern"]),
                archetype=archetype,
                prefix=bool(entry.get("prefix", False)),
                kind=entry.get("kind"),
            )
        )
    return tuple(rules)


def parse_config(text: str, source: str = "<config>") -> Config:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be an object")

    table = default_table()
    if "classification" in doc:
        table = ClassificationTable(rules=_parse_rules(doc["classification"], "classification"))
    if "classification_extra" in doc:
        table = table.prepend(_parse_rules(doc["classification_extra"], "classification_extra"))
    if doc.get("strict_classification"):
        table = ClassificationTable(rules=table.rules, strict=True)

    defaults = {}
    raw_defaults = doc.get("defaults", {})
    if not isinstance(raw_defaults, dict):
        raise ConfigError(f"{source}: 'defaults' must be an object")
    for tag, params in raw_defaults.items():
        try:
            Archetype(tag)
        except ValueError:
            raise ConfigError(f"{source}: defaults name unknown archetype {tag!r}") from None
        if not isinstance(params, dict):
            raise ConfigError(f"{source}: defaults for {tag} must be an object")
        for key, value in params.items():
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{source}: default {tag}.{key} must be an integer")
        defaults[tag] = dict(params)

    checker = doc.get("checker", {})
    if not isinstance(checker, dict):
        raise ConfigError(f"{source}: 'checker' must be an object")
    plan_raw = doc.get("plan", {})
    if not isinstance(plan_raw, dict):
        raise ConfigError(f"{source}: 'plan' must be an object")

    return Config(
        table=table,
        defaults=defaults,
        state_cap=int(checker.get("state_cap", DEFAULT_STATE_CAP)),
        liveness_bound=int(checker.get("liveness_bound", DEFAULT_LIVENESS_BOUND)),
        merge_enumeration_cap=int(doc.get("merge_enumeration_cap", 1_000_000)),
        plan=PlanSettings(
            no_consecutive_toggle=bool(plan_raw.get("no_consecutive_toggle", False)),
            allow_faults=bool(plan_raw.get("allow_faults", False)),
        ),
    )


def load_config(path: Optional[str] = None) -> Config:
    """Load configuration from a file, the environment, or defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        return Config()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=path)
