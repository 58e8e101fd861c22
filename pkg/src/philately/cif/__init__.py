"""CIF reading and writing."""

from philately.cif.document import CifBlock, CifDocument, CifLoop, parse_document, parse_number
from philately.cif.errors import (
    BadNumber,
    CifError,
    CifSyntaxError,
    EmptyDocument,
    MissingTag,
    OccupancyError,
    SymOpError,
    UnknownElement,
)
from philately.cif.structure_io import DEFAULT_SITE_MERGE_TOL, emit_cif, emit_cif_blocks, extract_structure, symmetry_operations
from philately.cif.symops import SymOp, format_symop, parse_symop


def read_structures(text: str | bytes, site_merge_tol: float = DEFAULT_SITE_MERGE_TOL, source: str = ""):
    """Parse CIF text and extract one structure per data block."""
    return [extract_structure(b, site_merge_tol, source) for b in parse_document(text).blocks]


__all__ = [
    "BadNumber", "CifBlock", "CifDocument", "CifError", "CifLoop", "CifSyntaxError", "EmptyDocument",
    "MissingTag", "OccupancyError", "SymOp", "SymOpError", "UnknownElement", "DEFAULT_SITE_MERGE_TOL",
    "emit_cif", "emit_cif_blocks", "extract_structure", "format_symop", "parse_document", "parse_number",
    "parse_symop", "read_structures", "symmetry_operations",
]
