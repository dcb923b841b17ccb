"""Shared argument handling for the experiment scripts."""

import argparse
import math
from pathlib import Path


def parser(description: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--nmc", type=int, default=100, help="Monte Carlo replications per cell")
    ap.add_argument("--jobs", type=int, default=1, help="parallel workers")
    ap.add_argument("--out", type=Path, default=Path("results"))
    return ap


def floats(text: str) -> tuple:
    return tuple(math.inf if s.strip() in ("inf", "Inf") else float(s) for s in text.split(","))
