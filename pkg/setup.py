#!/usr/bin/env python3
"""
Bootstrap for a fresh checkout: install requirements, run the fast test
suite, then solve the bundled samples into out/.
"""

import subprocess
import sys
from pathlib import Path

PY = sys.executable

STEPS = [
    ("install requirements", [PY, "-m", "pip", "install", "-r", "requirements.txt"]),
    ("tests", [PY, "-m", "pytest", "-m", "not slow"]),
    ("solve2 uniform22", [PY, "-m", "optauction", "solve2", "samples/uniform22.json", "--out", "out/uniform22_solve.json"]),
    ("brute correlated", [PY, "-m", "optauction", "brute", "samples/correlated.json", "--out", "out/correlated_brute.json"]),
    ("pairs uniform222", [PY, "-m", "optauction", "pairs", "samples/uniform222.json", "--out", "out/uniform222_pairs.json"]),
    ("continuous uniform", [PY, "-m", "optauction", "continuous", "--oracle", "uniform", "--epsilon", "0.1",
                            "--out", "out/uniform_continuous.json"]),
    ("reduce single clause", [PY, "-m", "optauction", "reduce", "samples/single_clause.json", "--categorized",
                              "--check", "--out", "out/m1_prior.json"]),
]


def main() -> int:
    if sys.version_info < (3, 9):
        print("OptAuction needs Python 3.9 or newer")
        return 1
    Path("out").mkdir(exist_ok=True)
    for label, argv in STEPS:
        result = subprocess.run(argv, capture_output=True, text=True)
        if result.returncode != 0:
            print(f"[fail] {label} (exit {result.returncode})")
            print(result.stderr or result.stdout)
            return result.returncode
        print(f"[ok] {label}")
    print("Done. Results are in out/; `python -m optauction --help` lists the commands.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
