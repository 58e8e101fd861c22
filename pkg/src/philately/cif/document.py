"""Tokenizer and block/loop parser for the structural subset of CIF 1.1."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from philately.cif.errors import BadNumber, CifSyntaxError, EmptyDocument

_NUMBER_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?:\((\d+)\))?$")


@dataclass(frozen=True)
class CifLoop:
    tags: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def column(self, tag: str) -> list[str]:
        idx = self.tags.index(tag)
        return [row[idx] for row in self.rows]


@dataclass
class CifBlock:
    name: str
    items: dict[str, str] = field(default_factory=dict)
    loops: list[CifLoop] = field(default_factory=list)

    def find_loop(self, tag: str) -> CifLoop | None:
        for loop in self.loops:
            if tag in loop.tags:
                return loop
        return None

    def has(self, tag: str) -> bool:
        return tag in self.items or self.find_loop(tag) is not None

    def values(self, tag: str) -> list[str] | None:
        """All values for `tag`, whether it is a scalar item or a loop column."""
        if tag in self.items:
            return [self.items[tag]]
        loop = self.find_loop(tag)
        return None if loop is None else loop.column(tag)


@dataclass
class CifDocument:
    blocks: list[CifBlock]

    def __getitem__(self, name: str) -> CifBlock:
        for b in self.blocks:
            if b.name.lower() == name.lower():
                return b
        raise KeyError(name)


# token kinds
_DATA, _LOOP, _TAG, _VALUE, _RESERVED = "data", "loop", "tag", "value", "reserved"


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str):
    lines = text.splitlines()
    n_lines = len(lines)
    li = 0
    while li < n_lines:
        line = lines[li]
        if line.startswith(";"):
            start = li
            parts = [line[1:]]
            li += 1
            while li < n_lines and not lines[li].startswith(";"):
                parts.append(lines[li])
                li += 1
            if li >= n_lines:
                raise CifSyntaxError("unterminated semicolon text field", start + 1, 1)
            # the closing ';' may be followed by further tokens on the same line
            rest = lines[li][1:]
            if parts[0].strip() == "":
                parts = parts[1:]
            yield _Token(_VALUE, "\n".join(parts), start + 1, 1)
            lines[li] = " " + rest
            continue
        col = 0
        n = len(line)
        while col < n:
            ch = line[col]
            if ch.isspace():
                col += 1
                continue
            if ch == "#":
                break
            if ch in "'\"":
                end = col + 1
                while True:
                    end = line.find(ch, end)
                    if end < 0:
                        raise CifSyntaxError(f"unterminated {ch}-quoted string", li + 1, col + 1)
                    if end + 1 >= n or line[end + 1].isspace():
                        break
                    end += 1
                yield _Token(_VALUE, line[col + 1:end], li + 1, col + 1)
                col = end + 1
                continue
            end = col
            while end < n and not line[end].isspace():
                end += 1
            word = line[col:end]
            low = word.lower()
            if low.startswith("data_"):
                yield _Token(_DATA, word[5:], li + 1, col + 1)
            elif low == "loop_":
                yield _Token(_LOOP, word, li + 1, col + 1)
            elif low.startswith(("save_", "global_", "stop_")):
                yield _Token(_RESERVED, word, li + 1, col + 1)
            elif word.startswith("_"):
                yield _Token(_TAG, low, li + 1, col + 1)
            else:
                yield _Token(_VALUE, word, li + 1, col + 1)
            col = end
        li += 1


def parse_document(text: str | bytes) -> CifDocument:
    """Parse CIF text into data blocks.

    Raises CifSyntaxError (with line/column) on malformed input and
    EmptyDocument when no ``data_`` block is present.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("latin-1")
    text = text.replace("\x00", " ")
    tokens = list(_tokenize(text))
    blocks: list[CifBlock] = []
    seen_names: set[str] = set()
    seen_tags: set[str] = set()
    cur: CifBlock | None = None
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind == _DATA:
            if not tok.text:
                raise CifSyntaxError("data block without a name", tok.line, tok.column)
            key = tok.text.lower()
            if key in seen_names:
                raise CifSyntaxError(f"duplicate data block {tok.text!r}", tok.line, tok.column)
            seen_names.add(key)
            cur = CifBlock(tok.text)
            blocks.append(cur)
            seen_tags = set()
            i += 1
            continue
        if tok.kind == _RESERVED:
            raise CifSyntaxError(f"unsupported construct {tok.text!r}", tok.line, tok.column)
        if cur is None:
            raise CifSyntaxError("content before the first data_ block", tok.line, tok.column)
        if tok.kind == _TAG:
            if i + 1 >= len(tokens) or tokens[i + 1].kind != _VALUE:
                raise CifSyntaxError(f"tag {tok.text} has no value", tok.line, tok.column)
            if tok.text in seen_tags:
                raise CifSyntaxError(f"duplicate tag {tok.text}", tok.line, tok.column)
            seen_tags.add(tok.text)
            cur.items[tok.text] = tokens[i + 1].text
            i += 2
            continue
        if tok.kind == _LOOP:
            i += 1
            tags: list[str] = []
            while i < len(tokens) and tokens[i].kind == _TAG:
                t = tokens[i]
                if t.text in seen_tags or t.text in tags:
                    raise CifSyntaxError(f"duplicate tag {t.text}", t.line, t.column)
                tags.append(t.text)
                i += 1
            if not tags:
                raise CifSyntaxError("loop_ without tags", tok.line, tok.column)
            values: list[_Token] = []
            while i < len(tokens) and tokens[i].kind == _VALUE:
                values.append(tokens[i])
                i += 1
            if len(values) % len(tags):
                last = values[-1]
                raise CifSyntaxError(
                    f"loop has {len(values)} values for {len(tags)} tags (row arity mismatch)",
                    last.line, last.column,
                )
            seen_tags.update(tags)
            width = len(tags)
            rows = tuple(tuple(v.text for v in values[k:k + width]) for k in range(0, len(values), width))
            cur.loops.append(CifLoop(tuple(tags), rows))
            continue
        raise CifSyntaxError(f"unexpected value {tok.text!r}", tok.line, tok.column)
    if not blocks:
        raise EmptyDocument("no data_ block found")
    return CifDocument(blocks)


def is_missing(value: str) -> bool:
    return value in ("?", ".")


def parse_number(value: str) -> float:
    """Numeric interpretation of a CIF value; a bracketed uncertainty is discarded."""
    v = value.strip()
    m = _NUMBER_RE.match(v)
    if not m:
        raise BadNumber(f"not a number: {value!r}")
    if m.group(1) is not None:
        v = v[: v.index("(")]
    return float(v)
