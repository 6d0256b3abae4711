#!/usr/bin/env python3
"""
Command-line runner for the NIT-CycleGAN speech enhancement toolkit

    python nitcg.py toy-corpus --out work/toy
    python nitcg.py synth-data --clean work/toy/clean --noise work/toy/noise --out work/corpus --snrs -5,0,5
    python nitcg.py train --manifest work/corpus/manifest.jsonl --out work/run --epochs 1
"""

import sys

from src.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
