"""Structure database: append-only log, indexes, queries, leaderboard, statistics."""

from philately.store.engine import BadQuery, Store, StoreError, apply_entry, empty_state
from philately.store.records import CorpusStats, DbRecord, LeaderboardRow, Query, decode_lines, encode_line

__all__ = [
    "BadQuery", "CorpusStats", "DbRecord", "LeaderboardRow", "Query", "Store", "StoreError",
    "apply_entry", "decode_lines", "empty_state", "encode_line",
]
