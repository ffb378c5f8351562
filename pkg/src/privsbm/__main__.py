"""Run the command-line interface with ``python -m privsbm``."""

from .cli import main

main()
