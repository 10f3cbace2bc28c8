"""Generate, apply and simulate through the command line.

Writes a CSV to a temporary directory, runs ``tabfeat generate`` on it,
applies the resulting spec to a second CSV, and finishes with one
``tabfeat simulate`` summary line.
"""
import csv
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np


def write_table(path, n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, n))
    shop = np.array(["north", "south", "east"])[rng.integers(0, 3, n)]
    y = a * b + (shop == "east") + rng.normal(0, 0.1, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "shop", "y"])
        w.writerows(zip(np.round(a, 6), np.round(b, 6), shop, np.round(y, 6)))


def tabfeat(*args):
    cmd = [sys.executable, "-m", "tabfeat", *args]
    print("$ tabfeat " + " ".join(args))
    out = subprocess.run(cmd, capture_output=True, text=True)
    if out.stdout:
        print(out.stdout.rstrip())
    if out.returncode:
        print("stderr: " + out.stderr.strip().splitlines()[-1])
    print(f"(exit {out.returncode})\n")
    return out


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        write_table(tmp / "train.csv", 2000, seed=0)
        write_table(tmp / "new.csv", 4, seed=1)
        tabfeat("generate", "--input", str(tmp / "train.csv"), "--target", "y",
                "--out", str(tmp / "out"), "--top-k", "3", "--blocks", "2", "--threads", "1")
        print((tmp / "out" / "report.txt").read_text())
        spec = (tmp / "out" / "transforms.spec").read_text().splitlines()
        print(f"transforms.spec: {len(spec)} lines, header {spec[0]!r}\n")
        tabfeat("apply", "--spec", str(tmp / "out" / "transforms.spec"),
                "--input", str(tmp / "new.csv"), "--output", str(tmp / "new_aug.csv"))
        print((tmp / "new_aug.csv").read_text())
        # a missing target is a configuration error: exit status 2
        tabfeat("generate", "--input", str(tmp / "train.csv"))
        tabfeat("simulate", "--scenario", "bernoulli", "--k1", "500", "--h", "100", "--seed", "1")


if __name__ == "__main__":
    main()
