"""
Figure data from evaluation reports: per-SNR grouped bars (one bar per
system) and per-system means, written as CSV and SVG.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape

from ..errors import ConfigError
from ..metrics.evaluation import DISPLAY_NAMES

logger = logging.getLogger(__name__)

PALETTE = ["#7f7f7f", "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"]
WIDTH, HEIGHT = 640, 360
MARGIN = {"left": 64, "right": 16, "top": 36, "bottom": 56}

_environment = Environment(
    loader=FileSystemLoader(str(Path(__file__).parent / "templates")),
    autoescape=select_autoescape(["svg", "j2"]),
    trim_blocks=True,
    lstrip_blocks=True,
)


def metric_column(name: str) -> str:
    """Per-utterance column for a metric given by column or display name"""
    lookup = {display.lower(): column for column, display in DISPLAY_NAMES.items()}
    key = name.lower()
    if key in DISPLAY_NAMES:
        return key
    if key in lookup:
        return lookup[key]
    raise ConfigError(f"unknown metric {name!r}; choose from {', '.join(DISPLAY_NAMES.values())}")


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _axis(values: Sequence[float], n_ticks: int = 5) -> Tuple[float, float, np.ndarray]:
    finite = [v for v in values if np.isfinite(v)]
    low = min(0.0, min(finite, default=0.0))
    high = max(0.0, max(finite, default=1.0))
    if high == low:
        high = low + 1.0
    span = high - low
    low, high = (low - 0.05 * span if low < 0 else low), high + 0.05 * span
    return low, high, np.linspace(low, high, n_ticks)


def bar_chart_svg(
    title: str,
    y_label: str,
    groups: Sequence[str],
    series: Sequence[str],
    values: Dict[Tuple[str, str], float],
) -> str:
    plot = {
        "left": MARGIN["left"],
        "top": MARGIN["top"],
        "width": WIDTH - MARGIN["left"] - MARGIN["right"],
        "height": HEIGHT - MARGIN["top"] - MARGIN["bottom"],
    }
    low, high, tick_values = _axis(list(values.values()))

    def y_of(value: float) -> float:
        return plot["top"] + plot["height"] * (high - value) / (high - low)

    baseline = y_of(0.0)
    group_width = plot["width"] / max(1, len(groups))
    bar_width = 0.8 * group_width / max(1, len(series))
    rendered_groups = []
    for g, group in enumerate(groups):
        start = plot["left"] + g * group_width + 0.1 * group_width
        bars = []
        for s, name in enumerate(series):
            value = values.get((group, name), float("nan"))
            if not np.isfinite(value):
                continue
            top = min(y_of(value), baseline)
            bars.append(
                {
                    "series": name,
                    "value": _fmt(value),
                    "x": _fmt(start + s * bar_width),
                    "y": _fmt(top),
                    "width": _fmt(bar_width),
                    "height": _fmt(abs(y_of(value) - baseline)),
                    "color": PALETTE[s % len(PALETTE)],
                }
            )
        rendered_groups.append({"label": group, "bars": bars, "centre": _fmt(start + 0.4 * group_width)})

    legend = [{"label": name, "color": PALETTE[s % len(PALETTE)], "x": _fmt(plot["left"] + s * 110)} for s, name in enumerate(series)]
    ticks = [{"y": _fmt(y_of(t)), "label": _fmt(t)} for t in tick_values]
    template = _environment.get_template("bar_chart.svg.j2")
    return template.render(
        title=title,
        y_label=y_label,
        width=WIDTH,
        height=HEIGHT,
        plot=plot,
        ticks=ticks,
        baseline=_fmt(baseline),
        groups=rendered_groups,
        legend=legend,
    )


def snr_label(snr_db: float) -> str:
    return f"{snr_db:g} dB"


def by_snr_table(rows: pd.DataFrame, column: str, systems: Sequence[str]) -> pd.DataFrame:
    """Mean of a metric per (system, SNR) over every noise type and utterance"""
    table = rows.groupby(["system", "snr_db"], sort=False)[column].mean().reset_index(name="value")
    order = {name: index for index, name in enumerate(systems)}
    table = table.assign(_order=table["system"].map(order)).sort_values(["_order", "snr_db"], kind="mergesort")
    return table.drop(columns="_order").reset_index(drop=True)


def by_system_table(rows: pd.DataFrame, column: str, systems: Sequence[str]) -> pd.DataFrame:
    table = rows.groupby("system", sort=False)[column].mean()
    return pd.DataFrame({"system": list(systems), "value": [table.get(name, np.nan) for name in systems]})


def plot_report(
    per_utterance_csv: Union[str, Path],
    out_dir: Union[str, Path],
    metric: str = "pesq",
    condition: Optional[str] = None,
    systems: Optional[List[str]] = None,
) -> Dict[str, Path]:
    rows = pd.read_csv(per_utterance_csv, dtype={"id": str, "system": str})
    column = metric_column(metric)
    if condition and condition != "all":
        rows = rows[rows["condition"] == condition]
    rows = rows[rows[column].notna()]
    if rows.empty:
        raise ConfigError(f"no {DISPLAY_NAMES[column]} values to plot in {per_utterance_csv}")
    systems = systems or list(dict.fromkeys(rows["system"]))

    display = DISPLAY_NAMES[column]
    snr_table = by_snr_table(rows, column, systems)
    system_table = by_system_table(rows, column, systems)
    snrs = sorted(snr_table["snr_db"].unique())
    snr_values = {(snr_label(r.snr_db), r.system): float(r.value) for r in snr_table.itertuples(index=False)}
    system_values = {(r.system, display): float(r.value) for r in system_table.itertuples(index=False)}

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = display.lower()
    paths = {
        "by_snr_csv": out_dir / f"{stem}_by_snr.csv",
        "by_snr_svg": out_dir / f"{stem}_by_snr.svg",
        "by_system_csv": out_dir / f"{stem}_by_system.csv",
        "by_system_svg": out_dir / f"{stem}_by_system.svg",
    }
    snr_table.to_csv(paths["by_snr_csv"], index=False)
    system_table.to_csv(paths["by_system_csv"], index=False)
    paths["by_snr_svg"].write_text(
        bar_chart_svg(f"{display} per SNR", display, [snr_label(s) for s in snrs], systems, snr_values), encoding="utf-8"
    )
    paths["by_system_svg"].write_text(
        bar_chart_svg(f"Mean {display} per system", display, systems, [display], system_values), encoding="utf-8"
    )
    logger.info("Wrote %s charts for %d systems over %d SNRs", display, len(systems), len(snrs))
    return paths
