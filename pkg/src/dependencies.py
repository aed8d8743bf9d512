from collections.abc import Callable
from pathlib import Path

from .config import BaseAppSettings, settings
from .repositories.results_repository import CsvResultsRepository, ResultsRepository

RepositoryFactory = Callable[[Path], ResultsRepository]

# Singletons keyed by output directory, built on first use
_results_repositories: dict[Path, ResultsRepository] = {}
_factory_override: RepositoryFactory | None = None


def get_settings() -> BaseAppSettings:
    return settings


def get_results_repository(directory: Path) -> ResultsRepository:
    """
    Returns the repository for one experiment directory. Tests swap the
    file-backed implementation out with `override_results_repository`.
    """
    if _factory_override is not None:
        return _factory_override(directory)
    if directory not in _results_repositories:
        _results_repositories[directory] = CsvResultsRepository(directory)
    return _results_repositories[directory]


def override_results_repository(factory: RepositoryFactory | None):
    global _factory_override
    _factory_override = factory
    _results_repositories.clear()
