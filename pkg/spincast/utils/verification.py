"""Golden-file comparison utilities"""

import logging
from typing import List, Tuple

import numpy as np
import pandas as pd

from ..core.errors import ResultFileError
from .results import ResultFile

logger = logging.getLogger("spincast.verification")

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12


def compare_results(a: ResultFile, b: ResultFile) -> pd.DataFrame:
    """Per-column max absolute and max relative deviation of b from a"""
    if a.columns != b.columns:
        raise ResultFileError(f"column mismatch: {a.columns} vs {b.columns}")
    if len(a.data) != len(b.data):
        raise ResultFileError(f"row count mismatch: {len(a.data)} vs {len(b.data)}")

    rows = []
    for name in a.columns:
        x, y = a.column(name), b.column(name)
        both_nan = np.isnan(x) & np.isnan(y)
        diff = np.where(both_nan, 0.0, np.abs(x - y))
        scale = np.maximum(np.abs(x), np.abs(y))
        relative = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
        rows.append(
            {
                "column": name,
                "units": a.units[name],
                "units_match": a.units[name] == b.units[name],
                "max_abs": float(np.nanmax(diff)) if diff.size else 0.0,
                "max_rel": float(np.nanmax(relative)) if relative.size else 0.0,
            }
        )
    return pd.DataFrame(rows, columns=["column", "units", "units_match", "max_abs", "max_rel"])


def failing_columns(table: pd.DataFrame, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> List[str]:
    """Columns whose deviation exceeds both tolerances, or whose units differ"""
    bad = (~table["units_match"]) | ((table["max_abs"] > atol) & (table["max_rel"] > rtol))
    return table.loc[bad, "column"].tolist()


def verify_against_golden(
    fresh: ResultFile, golden: ResultFile, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL
) -> Tuple[bool, pd.DataFrame]:
    """Compare a fresh run against a stored golden file"""
    table = compare_results(golden, fresh)
    failures = failing_columns(table, rtol, atol)
    for name in failures:
        row = table.loc[table["column"] == name].iloc[0]
        logger.error("Column %s deviates: max_abs %.3e, max_rel %.3e", name, row["max_abs"], row["max_rel"])
    return not failures, table
