import csv
import re
from pathlib import Path

import numpy as np
import pandas as pd
import structlog

from ..models.data_models import Cell, FeatureMatrix, RawTable
from ..models.exceptions import DataLoadError, ResultsWriteError

logger = structlog.stdlib.get_logger()

MISSING_SENTINELS = frozenset({"", "NaN", "nan", "-"})
HEX_PATTERN = re.compile(r"^0[xX][0-9a-fA-F]+$")


def parse_cell(text: str) -> Cell:
    """
    Classifies one raw cell. Numbers become floats, hex stays text so that
    coercion can parse it base-16, and the missing sentinels become None.
    """
    value = text.strip()
    if value in MISSING_SENTINELS:
        return None
    if HEX_PATTERN.match(value):
        return value
    try:
        number = float(value)
    except ValueError:
        return value
    # 'inf' and friends are treated as category text, never as numbers
    return number if np.isfinite(number) else value


def load_csv(
    path: str | Path,
    label_column: str,
    positive_labels: set[str] | frozenset[str] | list[str],
    negative_labels: set[str] | frozenset[str] | list[str] | None = None,
) -> RawTable:
    """
    Reads a comma-separated file with one header row.
    Label cells are kept as stripped text; coercion happens later.
    """
    path = Path(path)
    if not path.is_file():
        raise DataLoadError("dataset file not found", path=str(path))

    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataLoadError("missing header row", path=str(path), line=1)

            if label_column not in header:
                raise DataLoadError(
                    f"label column '{label_column}' not in header", path=str(path), line=1
                )
            label_idx = header.index(label_column)

            rows: list[list[Cell]] = []
            for raw in reader:
                if not raw:
                    continue
                if len(raw) != len(header):
                    raise DataLoadError(
                        f"ragged row: {len(raw)} cells, header has {len(header)}",
                        path=str(path),
                        line=reader.line_num,
                    )
                cells = [parse_cell(c) for c in raw]
                label = raw[label_idx].strip()
                cells[label_idx] = label or None
                rows.append(cells)
    except UnicodeDecodeError as e:
        raise DataLoadError(f"not valid UTF-8: {e.reason}", path=str(path))

    logger.debug("dataset.loaded", path=str(path), rows=len(rows), columns=len(header))
    return RawTable(
        columns=header,
        rows=rows,
        label_column=label_column,
        positive_labels=frozenset(positive_labels),
        negative_labels=frozenset(negative_labels) if negative_labels is not None else None,
    )


def write_dataset_csv(matrix: FeatureMatrix, path: str | Path) -> Path:
    """Writes features plus a 0/1 `label` column in the format `load_csv` reads."""
    path = Path(path)
    frame = pd.DataFrame(matrix.X, columns=matrix.feature_names)
    frame["label"] = matrix.y.astype(int)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise ResultsWriteError(f"could not write dataset: {e.strerror}", str(path))
    logger.info("dataset.written", path=str(path), rows=matrix.n_samples)
    return path
