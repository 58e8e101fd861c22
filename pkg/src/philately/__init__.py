"""Crystal-submission evaluation: CIF ingestion, relaxation, hull scoring, and a structure store."""

__version__ = "0.1.0"
