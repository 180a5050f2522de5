"""
CSV ingestion: one numeric value column, optional treatment label and
event/censoring status columns. Header row required, comma delimiter.
"""
import csv
import io
import os
from typing import Dict, List, Optional, Union

from .core import SortedSample, sort_sample
from .errors import ParseError


def normalize_header(h: str) -> str:
    return (h or "").strip().lower().replace("\ufeff", "").replace(" ", "").replace("_", "").replace("-", "")


def _resolve_column(fieldnames: List[str], wanted: str) -> str:
    """Match a requested column against the header, ignoring case, spaces, '_' and '-'."""
    if wanted in fieldnames:
        return wanted
    key = normalize_header(wanted)
    for name in fieldnames:
        if normalize_header(name) == key:
            return name
    raise ParseError(f"missing column {wanted!r} (have: {', '.join(fieldnames)})", row=1)


def parse_csv_text(text: str, value_col: str, label_col: Optional[str] = None,
                   status_col: Optional[str] = None) -> SortedSample:
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames:
        raise ParseError("CSV has no headers.")
    fieldnames = list(reader.fieldnames)
    value_key = _resolve_column(fieldnames, value_col)
    label_key = _resolve_column(fieldnames, label_col) if label_col else None
    status_key = _resolve_column(fieldnames, status_col) if status_col else None

    values: List[float] = []
    labels: List[str] = []
    status: List[int] = []
    for line, raw in enumerate(reader, start=2):
        cell = (raw.get(value_key) or "").strip()
        try:
            values.append(float(cell))
        except ValueError:
            raise ParseError(f"non-numeric value {cell!r} in column {value_key!r}", row=line)
        if label_key is not None:
            label = (raw.get(label_key) or "").strip()
            if not label:
                raise ParseError(f"empty label in column {label_key!r}", row=line)
            labels.append(label)
        if status_key is not None:
            flag = (raw.get(status_key) or "").strip()
            if flag not in ("0", "1"):
                raise ParseError(f"status must be 0 or 1, got {flag!r}", row=line)
            status.append(int(flag))

    if not values:
        raise ParseError("CSV has no data rows.")
    return sort_sample(values, labels if label_key else None, status if status_key else None)


def decode_lines(data: bytes) -> str:
    """Strict UTF-8 (BOM allowed on the first line); a bad byte names its line."""
    out: List[str] = []
    for row, line in enumerate(data.splitlines(keepends=True), start=1):
        try:
            out.append(line.decode("utf-8-sig" if row == 1 else "utf-8"))
        except UnicodeDecodeError as e:
            raise ParseError(f"invalid UTF-8 byte at offset {e.start} of the line", row=row)
    return "".join(out)


def ingest_csv(path: Union[str, os.PathLike], value_col: str, label_col: Optional[str] = None,
               status_col: Optional[str] = None) -> SortedSample:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror or e}")
    return parse_csv_text(decode_lines(data), value_col, label_col, status_col)


def summarize(sample: SortedSample) -> Dict[str, object]:
    out: Dict[str, object] = {"n": sample.n, "min": float(sample.values[0]), "max": float(sample.values[-1])}
    if sample.labels is not None:
        out["treatments"] = list(sample.treatments)
    if sample.status is not None:
        out["events"] = int(sample.status.sum())
    return out
