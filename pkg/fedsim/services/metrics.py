"""Round records, the streamed metrics CSV and the run manifest written beside it."""
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import IO, List, Optional, Tuple, Union

from fedsim.errors import MetricsFormatError

logger = logging.getLogger(__name__)

CSV_HEADER = ("round", "algorithm", "accuracy", "loss", "meta_loss", "selected_clients", "wall_ms")


@dataclass(frozen=True)
class RoundRecord:
    """Outcome of one round; ``round`` is 1-based.

    ``accuracy`` and ``loss`` are None on rounds that were not evaluated.
    ``meta_loss_before`` is kept for meta-descent checks and is not written out.
    """

    round: int
    algorithm: str
    selected_clients: Tuple[int, ...]
    accuracy: Optional[float] = None
    loss: Optional[float] = None
    meta_loss: Optional[float] = None
    meta_loss_before: Optional[float] = None
    wall_ms: int = 0

    @property
    def evaluated(self) -> bool:
        return self.accuracy is not None

    def csv_row(self) -> List[str]:
        return [
            str(self.round),
            self.algorithm,
            _number(self.accuracy),
            _number(self.loss),
            _number(self.meta_loss),
            ";".join(str(c) for c in self.selected_clients),
            str(self.wall_ms),
        ]


def _number(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


class MetricsWriter:
    """Streams evaluated round records to a CSV file, flushing after every row."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._handle: Optional[IO[str]] = None
        self._writer = None
        self.rows = 0

    def __enter__(self) -> "MetricsWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(CSV_HEADER)
        self._handle.flush()
        return self

    def write(self, record: RoundRecord) -> None:
        if not record.evaluated:
            return
        self._writer.writerow(record.csv_row())
        self._handle.flush()
        self.rows += 1

    def __exit__(self, *exc) -> None:
        if self._handle is not None:
            self._handle.close()
            logger.info(f"Wrote {self.rows} metric rows to {self.path}")


def read_metrics(path: Union[str, Path]) -> List[RoundRecord]:
    """Parse a metrics CSV back into records.

    Raises:
        MetricsFormatError: with the 1-based line number of the offending row.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise MetricsFormatError(f"{path}: empty file", line=1)
    if tuple(rows[0]) != CSV_HEADER:
        raise MetricsFormatError(f"{path}: unexpected header {','.join(rows[0])}", line=1)
    records = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise MetricsFormatError(f"{path}: expected {len(CSV_HEADER)} fields, got {len(row)}", line=line)
        try:
            records.append(RoundRecord(
                round=int(row[0]),
                algorithm=row[1],
                accuracy=float(row[2]),
                loss=float(row[3]) if row[3] else None,
                meta_loss=float(row[4]) if row[4] else None,
                selected_clients=tuple(int(c) for c in row[5].split(";") if c),
                wall_ms=int(row[6]),
            ))
        except ValueError as e:
            raise MetricsFormatError(f"{path}: {e}", line=line) from e
    return records


def manifest_path(metrics_path: Union[str, Path]) -> Path:
    metrics_path = Path(metrics_path)
    return metrics_path.with_name(metrics_path.name + ".manifest.json")


def write_run_manifest(metrics_path: Union[str, Path], config_json: dict, partition_hash: str, version: str) -> Path:
    """Write ``<metrics>.manifest.json`` describing the run that produced the CSV.

    The thread count is not recorded; runs differing only in threads share a manifest.
    """
    path = manifest_path(metrics_path)
    manifest = {
        "config": config_json,
        "partition_hash": partition_hash,
        "version": version,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote run manifest to {path}")
    return path
