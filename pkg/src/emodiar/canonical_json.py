"""Byte-stable JSON writing and offset-aware JSON reading."""

from __future__ import annotations

import json
import json.decoder
import json.scanner
import math
from decimal import Decimal
from typing import Any


class Fixed(str):
    """Pre-formatted number text emitted verbatim (e.g. ``"2.5000"``)."""


def _encode(value: Any, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(value, Fixed):
        out.append(str(value))
    elif value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(int(value)))
    elif isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"cannot serialize non-finite number {value!r}")
        out.append(repr(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, key in enumerate(sorted(value)):
            out.append(f"{pad}{json.dumps(str(key), ensure_ascii=False)}: ")
            _encode(value[key], indent, level + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(close + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(pad)
            _encode(item, indent, level + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(close + "]")
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(value: Any, indent: int = 2) -> str:
    """Sorted keys, fixed indentation, trailing newline."""
    out: list[str] = []
    _encode(value, indent, 0, out)
    out.append("\n")
    return "".join(out)


class PosDict(dict):
    """A parsed JSON object remembering its character offset in the source."""

    offset: int = 0


def _parse_object(s_and_end, *args, **kwargs):
    obj, end = json.decoder.JSONObject(s_and_end, *args, **kwargs)
    obj = PosDict(obj)
    obj.offset = s_and_end[1] - 1
    return obj, end


def loads_with_offsets(text: str) -> Any:
    """Parse JSON; objects become :class:`PosDict`, reals become ``Decimal``."""
    decoder = json.JSONDecoder(parse_float=Decimal)
    decoder.parse_object = _parse_object
    decoder.scan_once = json.scanner.py_make_scanner(decoder)
    return decoder.decode(text)


def byte_offset(text: str, char_offset: int) -> int:
    return len(text[:char_offset].encode("utf-8"))
