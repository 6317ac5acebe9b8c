"""Regex masking of trace-specific tokens."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class MaskingRule:
    pattern: str
    replacement: str
    _compiled: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        try:
            compiled = re.compile(self.pattern)
        except re.error as exc:
            raise ValueError(f"bad masking pattern {self.pattern!r}: {exc}") from None
        object.__setattr__(self, "_compiled", compiled)

    def apply(self, text: str) -> str:
        return self._compiled.sub(self.replacement, text)


GUID = r"[0-9a-fA-F]{8}(?:-[0-9a-fA-F]{4}){3}-[0-9a-fA-F]{12}"
TIMESTAMP = (
    r"\d{4}-\d{2}-\d{2}(?:[T ]\d{2}:\d{2}(?::\d{2}(?:\.\d+)?)?(?:Z|[+-]\d{2}:?\d{2})?)?"
)
IPV4 = r"\b(?:\d{1,3}\.){3}\d{1,3}\b"
# needs at least one letter and one digit so plain words and numbers are left alone
HEX = r"\b(?=[0-9a-fA-F]*[a-fA-F])(?=[0-9a-fA-F]*\d)[0-9a-fA-F]{8,}\b"
LONG_INT = r"\b\d{5,}\b"

DEFAULT_RULES: tuple[MaskingRule, ...] = (
    MaskingRule(GUID, "<GUID>"),
    MaskingRule(TIMESTAMP, "<TIMESTAMP>"),
    MaskingRule(IPV4, "<IP>"),
    MaskingRule(HEX, "<HEX>"),
    MaskingRule(LONG_INT, "<NUM>"),
)


def canonicalize(text: str, rules: Sequence[MaskingRule] = DEFAULT_RULES) -> str:
    """Apply every rule left to right, replacing all matches."""
    for rule in rules:
        text = rule.apply(text)
    return text


def check_rules(rules: Sequence[MaskingRule]) -> None:
    """Raise ValueError if a replacement token can itself be matched by a rule."""
    for r in rules:
        for other in rules:
            if other._compiled.search(r.replacement):
                raise ValueError(
                    f"replacement {r.replacement!r} is matched by pattern {other.pattern!r}"
                )


def load_rules(path: str | os.PathLike) -> tuple[MaskingRule, ...]:
    """Load rules from a JSON file: a list of ``{"pattern", "replacement"}`` objects."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return rules_from_config(raw)


def rules_from_config(raw: list) -> tuple[MaskingRule, ...]:
    rules = tuple(MaskingRule(item["pattern"], item["replacement"]) for item in raw)
    check_rules(rules)
    return rules
