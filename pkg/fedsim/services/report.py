"""Rounds-to-milestone tables from metrics CSVs."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from fedsim.services.metrics import RoundRecord, read_metrics

logger = logging.getLogger(__name__)

MISSING = "—"


@dataclass(frozen=True)
class RunSummary:
    label: str
    milestones: Dict[float, Optional[int]]
    final_accuracy: float


def trailing_mean(values: Sequence[float], window: int) -> List[float]:
    """Mean of each value and up to ``window - 1`` values before it."""
    values = np.asarray(values, dtype=np.float64)
    return [float(values[max(0, i - window + 1):i + 1].mean()) for i in range(len(values))]


def rounds_to_milestone(records: Sequence[RoundRecord], milestone: float, window: int = 5) -> Optional[int]:
    """First round whose trailing-mean accuracy reaches ``milestone``, or None."""
    smoothed = trailing_mean([r.accuracy for r in records], window)
    for record, accuracy in zip(records, smoothed):
        if accuracy >= milestone:
            return record.round
    return None


def final_accuracy(records: Sequence[RoundRecord], window: int = 10) -> float:
    return float(np.mean([r.accuracy for r in records[-window:]]))


def summarize(path: Union[str, Path], milestones: Sequence[float], window: int = 5,
              final_window: int = 10) -> RunSummary:
    path = Path(path)
    records = read_metrics(path)
    if not records:
        logger.warning(f"{path} has no evaluated rounds")
        return RunSummary(path.stem, {m: None for m in milestones}, float("nan"))
    label = f"{path.stem} ({records[0].algorithm})"
    return RunSummary(
        label,
        {m: rounds_to_milestone(records, m, window) for m in milestones},
        final_accuracy(records, final_window),
    )


def format_table(summaries: Sequence[RunSummary], milestones: Sequence[float]) -> str:
    header = ["run"] + [f"{m:.2f}" for m in milestones] + ["final"]
    rows = [header]
    for summary in summaries:
        cells = [summary.label]
        cells += [MISSING if summary.milestones[m] is None else str(summary.milestones[m]) for m in milestones]
        cells.append(MISSING if np.isnan(summary.final_accuracy) else f"{summary.final_accuracy:.4f}")
        rows.append(cells)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines)


def parse_milestones(text: str) -> List[float]:
    """'0.70,0.80,0.90' -> [0.7, 0.8, 0.9]."""
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"milestones must be comma-separated numbers, got {text!r}") from None
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise ValueError(f"milestones must lie in [0, 1], got {text!r}")
    return values
