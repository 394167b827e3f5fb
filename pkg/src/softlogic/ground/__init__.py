"""Data ingestion and rule grounding."""

from .data import DataError, DataSet, PredicateDef, load_data
from .grounder import (
    GroundRule,
    GroundingError,
    GroundingWarning,
    build_variable_table,
    ground_arithmetic_rule,
    ground_logical_rule,
    ground_program,
)

__all__ = [
    "DataError",
    "DataSet",
    "GroundRule",
    "GroundingError",
    "GroundingWarning",
    "PredicateDef",
    "build_variable_table",
    "ground_arithmetic_rule",
    "ground_logical_rule",
    "ground_program",
    "load_data",
]
