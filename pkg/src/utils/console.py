import logging
from typing import Any, Iterable, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

console = Console(stderr=True)


def setup_logging(level: str = "INFO") -> None:
    """Route library loggers through a single RichHandler"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(console=console, show_path=False, show_time=False))
    root.setLevel(level.upper())


def success(message: str) -> None:
    console.print(f"✅ {message}")


def warning(message: str) -> None:
    console.print(f"⚠️  {message}")


def failure(message: str) -> None:
    console.print(f"❌ {message}")


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return "" if value != value else f"{value:.3f}"
    return str(value)


def print_table(title: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    table = Table(title=title)
    for column in columns:
        table.add_column(str(column))
    for row in rows:
        table.add_row(*(_cell(v) for v in row))
    console.print(table)
