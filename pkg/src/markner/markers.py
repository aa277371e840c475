"""Marker encoding and decoding over plain character offsets.

A span (start, end) is wrapped as ``open + text[start:end] + close`` so a
generative model can emit span positions as text. Decoding is tolerant:
LLM output is untrusted, so unbalanced or nested markers invalidate only
the region they touch and everything well-formed is still recovered.

Offsets here are plain ``(start, end)`` tuples; the corpus and extraction
layers wrap them in their own span records.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import MarkerCollisionError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_OPEN = "@@"
DEFAULT_CLOSE = "##"


@dataclass(frozen=True)
class MarkerConfig:
    """Open/close delimiter pair used to wrap entity spans.

    Both must be non-empty, distinct, and neither may be a substring of
    the other (otherwise scanning is ambiguous).
    """

    open: str = DEFAULT_OPEN
    close: str = DEFAULT_CLOSE

    def __post_init__(self) -> None:
        if not self.open or not self.close:
            raise ValidationError("marker strings must be non-empty")
        if self.open == self.close:
            raise ValidationError("open and close markers must differ")
        if self.open in self.close or self.close in self.open:
            raise ValidationError(
                f"markers must not contain each other: {self.open!r} / {self.close!r}"
            )


DEFAULT_MARKERS = MarkerConfig()


def insert_markers(
    text: str,
    spans: list[tuple[int, int]] | tuple[tuple[int, int], ...],
    cfg: MarkerConfig = DEFAULT_MARKERS,
) -> str:
    """Wrap each (start, end) span of ``text`` with the marker pair.

    Spans may arrive in any order but must be in-bounds, non-empty and
    pairwise non-overlapping. Raises MarkerCollisionError if ``text``
    already contains either marker string: such a sentence cannot be
    round-tripped, and the ambiguity is only detectable here.
    """
    if cfg.open in text or cfg.close in text:
        raise MarkerCollisionError(
            f"text already contains a marker string ({cfg.open!r} or {cfg.close!r})"
        )
    ordered = sorted(spans)
    prev_end = 0
    for start, end in ordered:
        if start < 0 or end > len(text) or start >= end:
            raise ValidationError(f"invalid span ({start}, {end}) for text of length {len(text)}")
        if start < prev_end:
            raise ValidationError(f"overlapping span ({start}, {end})")
        prev_end = end
    pieces: list[str] = []
    cursor = 0
    for start, end in ordered:
        pieces.append(text[cursor:start])
        pieces.append(cfg.open)
        pieces.append(text[start:end])
        pieces.append(cfg.close)
        cursor = end
    pieces.append(text[cursor:])
    return "".join(pieces)


def _tokenize(text: str, cfg: MarkerConfig) -> list[tuple[str, str]]:
    """Split ``text`` into ("text"|"open"|"close", value) tokens.

    Markers cannot contain each other, so at any position at most one of
    them matches and a greedy left-to-right scan is unambiguous.
    """
    tokens: list[tuple[str, str]] = []
    buf: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        if text.startswith(cfg.open, i):
            if buf:
                tokens.append(("text", "".join(buf)))
                buf = []
            tokens.append(("open", cfg.open))
            i += len(cfg.open)
        elif text.startswith(cfg.close, i):
            if buf:
                tokens.append(("text", "".join(buf)))
                buf = []
            tokens.append(("close", cfg.close))
            i += len(cfg.close)
        else:
            buf.append(text[i])
            i += 1
    if buf:
        tokens.append(("text", "".join(buf)))
    return tokens


def split_marked(
    text: str,
    cfg: MarkerConfig = DEFAULT_MARKERS,
    warnings: list[str] | None = None,
) -> tuple[str, list[tuple[int, int]]]:
    """Strip all markers out of ``text`` and collect well-formed fragments.

    Returns (stripped_text, fragments) where each fragment is a
    (start, end) range *into the stripped text*. Malformed regions —
    an open immediately followed by another open, an open never closed,
    or a stray close — are dropped with a warning; everything else is
    still recovered. Zero-length fragments are dropped too.
    """

    def warn(msg: str) -> None:
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)

    stripped_parts: list[str] = []
    fragments: list[tuple[int, int]] = []
    pos = 0  # offset into the stripped text
    open_at: int | None = None
    for kind, value in _tokenize(text, cfg):
        if kind == "text":
            stripped_parts.append(value)
            pos += len(value)
        elif kind == "open":
            if open_at is not None:
                warn(f"unclosed {cfg.open!r} before offset {pos}; region skipped")
            open_at = pos
        else:  # close
            if open_at is None:
                warn(f"stray {cfg.close!r} at offset {pos}; ignored")
            elif pos == open_at:
                warn(f"empty marker pair at offset {pos}; ignored")
                open_at = None
            else:
                fragments.append((open_at, pos))
                open_at = None
    if open_at is not None:
        warn(f"unclosed {cfg.open!r} at end of output; region skipped")
    return "".join(stripped_parts), fragments


def align_fragments(
    stripped: str,
    fragments: list[tuple[int, int]],
    original: str,
    warnings: list[str] | None = None,
) -> list[tuple[int, int]]:
    """Express marked fragments as offsets into ``original``.

    If the stripped output reproduces the original sentence exactly the
    fragment offsets already are original offsets. Otherwise the model
    drifted, and each fragment is located as a substring of the original
    (leftmost occurrence not overlapping an already-consumed one);
    fragments that cannot be located are dropped with a warning.
    """

    def warn(msg: str) -> None:
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)

    if stripped == original:
        return sorted(fragments)

    consumed: list[tuple[int, int]] = []
    out: list[tuple[int, int]] = []
    for fstart, fend in fragments:
        surface = stripped[fstart:fend]
        placed = False
        search = 0
        while True:
            idx = original.find(surface, search)
            if idx < 0:
                break
            candidate = (idx, idx + len(surface))
            if all(candidate[1] <= s or candidate[0] >= e for s, e in consumed):
                consumed.append(candidate)
                out.append(candidate)
                placed = True
                break
            search = idx + 1
        if not placed:
            warn(f"marked fragment {surface!r} not found in the original sentence; dropped")
    return sorted(out)
