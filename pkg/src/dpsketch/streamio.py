"""Stream file format: UTF-8 text, one token per line.

A non-negative decimal integer is an element id, "_" is the empty symbol, a
signed decimal is an integer event.  The optional first line
"#T=<int> n=<int> mode=<elements|integers>" declares the stream shape; when
no mode is declared, a file containing any signed token is read in integers
mode (element and integer events never mix in one stream).
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Sequence

from .streams import (
    ELEMENTS_MODE,
    EMPTY_EVENT,
    INTEGERS_MODE,
    StreamConfig,
    StreamEvent,
    element,
    integer,
)

_HEADER_RE = re.compile(
    r"^#\s*T=(?P<T>\d+)\s+n=(?P<n>\d+)\s+mode=(?P<mode>elements|integers)\s*$"
)


class StreamParseError(ValueError):
    """Malformed stream file; carries the offending line number."""

    def __init__(self, path: str | Path, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


def parse_stream_file(
    path: str | Path, mode: str | None = None
) -> tuple[list[StreamEvent], StreamConfig | None]:
    """Parse a stream file; returns (events, header config or None).

    ``mode`` forces the interpretation of bare non-negative tokens when the
    file carries no header.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    header: StreamConfig | None = None
    start = 0
    if lines and lines[0].startswith("#"):
        m = _HEADER_RE.match(lines[0])
        if not m:
            raise StreamParseError(path, 1, f"malformed header {lines[0]!r}")
        header = StreamConfig(T=int(m["T"]), n=int(m["n"]), mode=m["mode"])
        start = 1

    tokens: list[tuple[int, str]] = []
    for i, line in enumerate(lines[start:], start=start + 1):
        token = line.strip()
        if token:
            tokens.append((i, token))

    declared = header.mode if header else mode
    effective = declared
    if effective is None:
        signed = any(t[0] in "+-" for _, t in tokens)
        effective = INTEGERS_MODE if signed else ELEMENTS_MODE

    events: list[StreamEvent] = []
    for i, token in tokens:
        if token == "_":
            if effective == INTEGERS_MODE:
                raise StreamParseError(
                    path, i, "empty symbol is not valid in an integers-mode stream"
                )
            events.append(EMPTY_EVENT)
            continue
        try:
            value = int(token, 10)
        except ValueError:
            raise StreamParseError(path, i, f"unrecognized token {token!r}") from None
        if effective == INTEGERS_MODE:
            events.append(integer(value))
        else:
            if token[0] in "+-":
                raise StreamParseError(
                    path, i, f"signed token {token!r} in an elements-mode stream"
                )
            if header is not None and value >= header.n:
                raise StreamParseError(
                    path, i, f"element id {value} outside universe size {header.n}"
                )
            events.append(element(value))
    if header is not None and len(events) > header.T:
        raise StreamParseError(
            path, len(lines), f"{len(events)} events exceed declared T={header.T}"
        )
    return events, header


def write_stream_file(
    path: str | Path,
    events: Sequence[StreamEvent],
    cfg: StreamConfig | None = None,
) -> None:
    out: list[str] = []
    if cfg is not None:
        out.append(f"#T={cfg.T} n={cfg.n} mode={cfg.mode}")
    for e in events:
        if e.is_empty():
            out.append("_")
        elif e.is_integer():
            out.append(f"{e.value:+d}")
        else:
            out.append(str(e.value))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
