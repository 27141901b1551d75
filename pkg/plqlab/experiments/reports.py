"""Record tables and per-size summaries as pandas frames and CSV files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ..constants import FLOAT_FORMAT, RECORD_COLUMNS, SUMMARY_COLUMNS
from .runner import DeltaRecord, RestorationOutcome

RESTORATION_COLUMNS = RECORD_COLUMNS + (
    "degraded_mean",
    "degraded_std",
    "restored_mean",
    "restored_std",
)


def records_frame(records: Sequence[DeltaRecord]) -> pd.DataFrame:
    rows = [
        {
            "image_id": r.image_id,
            "size": r.size,
            "top": r.region.top,
            "left": r.region.left,
            "q_org": r.q_org,
            "q_mod": r.q_mod,
            "delta_q": r.delta_q,
            "delta_p": r.delta_p,
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=list(RECORD_COLUMNS))


def _quartile(q: float):
    return lambda s: float(np.percentile(s, q))


def summary_frame(records: Sequence[DeltaRecord]) -> pd.DataFrame:
    """Per-size n, fraction positive, median and quartiles of Δ_Q̂, and Δ_p."""
    frame = records_frame(records)
    if frame.empty:
        return pd.DataFrame(columns=list(SUMMARY_COLUMNS))
    grouped = frame.groupby("size", sort=True)
    summary = pd.DataFrame(
        {
            "n": grouped["delta_q"].size(),
            "frac_positive_dq": grouped["delta_q"].agg(lambda s: float((s > 0).mean())),
            "median_dq": grouped["delta_q"].median(),
            "q1_dq": grouped["delta_q"].agg(_quartile(25)),
            "q3_dq": grouped["delta_q"].agg(_quartile(75)),
            "frac_positive_dp": grouped["delta_p"].agg(lambda s: float((s > 0).mean())),
            "median_dp": grouped["delta_p"].median(),
        }
    ).reset_index()
    return summary[list(SUMMARY_COLUMNS)]


def restoration_frame(outcomes: Sequence[RestorationOutcome]) -> pd.DataFrame:
    frame = records_frame([o.record for o in outcomes])
    for prefix in ("degraded", "restored"):
        stats = [getattr(o, f"{prefix}_stats") for o in outcomes]
        frame[f"{prefix}_mean"] = [s.mean if s else np.nan for s in stats]
        frame[f"{prefix}_std"] = [s.std if s else np.nan for s in stats]
    return frame[list(RESTORATION_COLUMNS)]


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path
