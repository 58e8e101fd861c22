from __future__ import annotations


class CifError(ValueError):
    """Base class for everything the CIF layer rejects."""


class CifSyntaxError(CifError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class EmptyDocument(CifError):
    pass


class MissingTag(CifError):
    def __init__(self, tag: str) -> None:
        super().__init__(f"missing required tag {tag}")
        self.tag = tag


class BadNumber(CifError):
    pass


class OccupancyError(CifError):
    pass


class UnknownElement(CifError):
    pass


class SymOpError(CifError):
    pass
