# Utils Module
from .console import console, failure, print_table, setup_logging, success, warning
