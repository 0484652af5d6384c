"""Strict JSON decoding with exact decimal numbers, and canonical encoding.

Numbers are read into ``Fraction`` so latency sums and bandwidth minima are
exact; costs compared for equality never depend on summation order.
"""
from __future__ import annotations

import json
import math
from decimal import Decimal
from fractions import Fraction
from typing import Any, Iterable

from .errors import FormatError

UNBOUNDED = math.inf

Number = Fraction | float


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} is not allowed")


def loads(data: bytes | str, what: str) -> Any:
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{what}: input is not valid UTF-8 (byte {exc.start})") from None
    else:
        text = data
    try:
        return json.loads(text, parse_float=Decimal, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{what}: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    except ValueError as exc:
        raise FormatError(f"{what}: {exc}") from None


def dumps(obj: Any) -> bytes:
    """Canonical encoding: sorted keys, two-space indent, UTF-8, trailing newline."""
    return (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def number_out(value: Number) -> int | float:
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value)
    if isinstance(value, int):
        return value
    return float(value)


def bandwidth_out(value: Number) -> int | float | str:
    return "unbounded" if value == UNBOUNDED else number_out(value)


def format_number(value: Number) -> str:
    """Short human form: ``10.2``, ``0``, ``unbounded``."""
    if value == UNBOUNDED:
        return "unbounded"
    if value == -UNBOUNDED:
        return "-unbounded"
    return repr(number_out(value))


# -- shape checking ---------------------------------------------------------


def obj(value: Any, where: str, required: Iterable[str], optional: Iterable[str] = ()) -> dict:
    if not isinstance(value, dict):
        raise FormatError(f"{where}: expected an object, got {type(value).__name__}")
    required = tuple(required)
    allowed = set(required) | set(optional)
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise FormatError(f"{where}: unknown key {unknown[0]!r}")
    for key in required:
        if key not in value:
            raise FormatError(f"{where}: missing key {key!r}")
    return value


def string(value: Any, where: str) -> str:
    if not isinstance(value, str):
        raise FormatError(f"{where}: expected a string")
    if not value:
        raise FormatError(f"{where}: must not be empty")
    return value


def integer(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise FormatError(f"{where}: expected an integer")
    return value


def number(value: Any, where: str) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, Decimal)):
        raise FormatError(f"{where}: expected a number")
    return Fraction(value)


def bandwidth(value: Any, where: str) -> Number:
    if value == "unbounded":
        return UNBOUNDED
    return number(value, where)


def boolean(value: Any, where: str) -> bool:
    if not isinstance(value, bool):
        raise FormatError(f"{where}: expected true or false")
    return value


def array(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise FormatError(f"{where}: expected an array")
    return value


def strings(value: Any, where: str) -> tuple[str, ...]:
    return tuple(string(v, f"{where}[{i}]") for i, v in enumerate(array(value, where)))


def format_version(doc: dict, where: str) -> None:
    version = doc.get("formatVersion")
    if isinstance(version, bool) or version != 1:
        raise FormatError(f"{where}: unsupported formatVersion {version!r} (expected 1)")
