import json
from abc import ABC, abstractmethod
from io import StringIO
from pathlib import Path
from typing import Any, override

import pandas as pd
import structlog

from ..models.exceptions import ResultsWriteError

logger = structlog.stdlib.get_logger()


def render_csv(frame: pd.DataFrame, comment: str | None = None) -> str:
    """The exact bytes every repository stores: optional '# ' comment line, header, rows."""
    body = frame.to_csv(index=False, lineterminator="\n", na_rep="")
    return (f"# {comment}\n" if comment else "") + body


def render_json(document: dict[str, Any]) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


class ResultsRepository(ABC):
    """
    Abstract destination for one experiment's result files.
    """

    @property
    @abstractmethod
    def location(self) -> str:
        """Human-readable place the files end up."""
        pass

    @abstractmethod
    def save_table(self, filename: str, frame: pd.DataFrame, comment: str | None = None) -> None:
        """Persist a table as CSV."""
        pass

    @abstractmethod
    def save_document(self, filename: str, document: dict[str, Any]) -> None:
        """Persist a JSON document (the run manifest)."""
        pass


class InMemoryResultsRepository(ResultsRepository):
    """Keeps rendered files in a dict; used by the tests."""

    files: dict[str, str]

    def __init__(self):
        self.files = {}

    @property
    @override
    def location(self) -> str:
        return "<memory>"

    @override
    def save_table(self, filename: str, frame: pd.DataFrame, comment: str | None = None) -> None:
        self.files[filename] = render_csv(frame, comment)

    @override
    def save_document(self, filename: str, document: dict[str, Any]) -> None:
        self.files[filename] = render_json(document)

    def table(self, filename: str) -> pd.DataFrame:
        return pd.read_csv(StringIO(self.files[filename]), comment="#")


class CsvResultsRepository(ResultsRepository):
    """Writes into one directory, created on first write."""

    directory: Path

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    @property
    @override
    def location(self) -> str:
        return str(self.directory)

    def _write(self, filename: str, text: str) -> None:
        path = self.directory / filename
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            with path.open("w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as e:
            raise ResultsWriteError(f"could not write results: {e.strerror}", str(path))
        logger.debug("results.file_written", path=str(path), bytes=len(text))

    @override
    def save_table(self, filename: str, frame: pd.DataFrame, comment: str | None = None) -> None:
        self._write(filename, render_csv(frame, comment))

    @override
    def save_document(self, filename: str, document: dict[str, Any]) -> None:
        self._write(filename, render_json(document))
