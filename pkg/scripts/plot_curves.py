"""Plot SER curves from one or more CSV files (needs matplotlib).

Files with a ``scheme`` column contribute one line per scheme.
"""
import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", required=True)
    args = p.parse_args()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path in args.csv:
        curves = defaultdict(list)
        with open(path) as f:
            for row in csv.DictReader(f):
                if float(row["ser"]) > 0:
                    curves[row.get("scheme", path)].append((float(row["snr_db"]), float(row["ser"])))
        for name, pts in curves.items():
            x, y = zip(*pts)
            ax.semilogy(x, y, marker="o", ms=3, label=name)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("SER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
