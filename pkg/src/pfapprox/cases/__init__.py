"""Bundled case files for tests, examples, and the CLI."""

from importlib import resources


def case_path(name: str) -> str:
    """Filesystem path of a bundled case file (e.g. 'feeder6')."""
    return str(resources.files(__package__) / f"{name}.m")


def case_text(name: str) -> str:
    return (resources.files(__package__) / f"{name}.m").read_text()
