"""Typed attribute values and canonical JSON encoding.

Attribute values in rules, claims, and credential metadata are one of four
types: string, integer, decimal, or calendar date. All wire and disk formats
encode them through to_wire/from_wire so that a round trip preserves the
exact Python type.
"""

from __future__ import annotations

import base64
import json
from datetime import date
from decimal import Decimal, InvalidOperation
from typing import Any, Union

AttrValue = Union[str, int, Decimal, date]


class ValueError_(ValueError):
    """Raised for values that cannot be encoded or decoded."""


def to_wire(value: AttrValue) -> Any:
    """Encode a typed value as JSON-representable data.

    Integers and decimals map to JSON numbers, strings to strings, and dates
    to a tagged object so they survive a round trip unambiguously.
    """
    if isinstance(value, bool):
        raise ValueError_("boolean attribute values are not supported")
    if isinstance(value, int):
        return value
    if isinstance(value, Decimal):
        return {"decimal": str(value)}
    if isinstance(value, date):
        return {"date": value.isoformat()}
    if isinstance(value, str):
        return value
    raise ValueError_(f"unsupported attribute value type: {type(value).__name__}")


def from_wire(raw: Any) -> AttrValue:
    """Decode a JSON value produced by to_wire back to its typed form."""
    if isinstance(raw, bool):
        raise ValueError_("boolean attribute values are not supported")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float):
        # Floats only appear when third-party JSON was handed to us directly.
        return Decimal(str(raw))
    if isinstance(raw, str):
        return raw
    if isinstance(raw, dict):
        if set(raw) == {"date"}:
            try:
                return date.fromisoformat(raw["date"])
            except (TypeError, ValueError) as exc:
                raise ValueError_(f"bad date literal: {raw['date']!r}") from exc
        if set(raw) == {"decimal"}:
            try:
                return Decimal(raw["decimal"])
            except (InvalidOperation, TypeError) as exc:
                raise ValueError_(f"bad decimal literal: {raw['decimal']!r}") from exc
    raise ValueError_(f"unsupported wire value: {raw!r}")


def is_ordered(value: AttrValue) -> bool:
    """Whether a value participates in <, <=, >, >= comparisons."""
    return isinstance(value, (int, Decimal, date)) and not isinstance(value, bool)


def compare(left: AttrValue, right: AttrValue) -> int | None:
    """Three-way comparison of two typed values.

    Returns a negative, zero, or positive int, or None when the two types
    are not comparable (string vs number, date vs number, and so on).
    Integers and decimals compare numerically with each other.
    """
    if isinstance(left, bool) or isinstance(right, bool):
        return None
    if isinstance(left, str) and isinstance(right, str):
        return (left > right) - (left < right)
    if isinstance(left, date) and isinstance(right, date):
        return (left > right) - (left < right)
    if isinstance(left, (int, Decimal)) and isinstance(right, (int, Decimal)):
        lq = Decimal(left) if isinstance(left, int) else left
        rq = Decimal(right) if isinstance(right, int) else right
        return (lq > rq) - (lq < rq)
    return None


def canonical_json(data: Any) -> str:
    """Serialize to deterministic JSON: sorted keys, no insignificant space."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(data: Any) -> bytes:
    return canonical_json(data).encode("utf-8")


def b64u(data: bytes) -> str:
    """base64url without padding."""
    return base64.urlsafe_b64encode(data).decode("ascii").rstrip("=")


def b64u_decode(text: str) -> bytes:
    pad = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode((text + pad).encode("ascii"))
