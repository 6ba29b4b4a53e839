"""Randomized sweeps of the bounding inequalities; thin wrapper over `gevpost checkfun`."""

import sys

from gevpost.cli import run

if __name__ == "__main__":
    args = sys.argv[1:] or ["--cases", "100", "--seeds", "0"]
    sys.exit(run(["checkfun", *args]))
