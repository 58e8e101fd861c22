"""Energy/force calculators behind one contract."""

from philately.calculator.base import CalcResult, Calculator, CalculatorError, Overlap, UnknownElement
from philately.calculator.external import SubprocessCalculator, decode_response, encode_request
from philately.calculator.lj import DEFAULT_LJ_TABLE, LennardJones, LjParams, lj_evaluate
from philately.crystal.neighbors import CellTooSkewed, PairList, neighbor_pairs

__all__ = [
    "CalcResult", "Calculator", "CalculatorError", "CellTooSkewed", "DEFAULT_LJ_TABLE", "LennardJones",
    "LjParams", "Overlap", "PairList", "SubprocessCalculator", "UnknownElement", "decode_response",
    "encode_request", "lj_evaluate", "neighbor_pairs",
]
