# CLI Module
from .main import build_parser, main, normalize_argv
from .plotting import bar_chart_svg, plot_report
