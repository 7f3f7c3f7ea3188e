"""Plot p0 and energy / triple-occupancy curves from gutzsim result CSVs.

    python3 scripts/plot_results.py exact.csv mc.csv --out fig.png

Each CSV becomes one series; error bars are drawn where stderr columns are finite.
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gutzsim.cli import read_csv

PANELS = (("p0", "success probability $p_0$"), ("H", "energy"), ("P3_per_site", "triple occupancy per site"))


def _series(ax, data, col, label, marker):
    y, err = data[col], data.get(col + "_err")
    if not np.any(np.isfinite(y)):
        return
    if err is not None and np.any(np.isfinite(err) & (err > 0)):
        ax.errorbar(data["g"], y, yerr=np.nan_to_num(err), fmt=marker, ms=4, capsize=2, label=label)
    else:
        ax.plot(data["g"], y, marker + "-", ms=4, label=label)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv", nargs="+")
    ap.add_argument("--out", default="results.png")
    args = ap.parse_args(argv)
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    markers = "osd^v<>"
    for k, path in enumerate(args.csv):
        data = read_csv(path)
        label = Path(path).stem
        for ax, (col, _) in zip(axes, PANELS):
            _series(ax, data, col, label, markers[k % len(markers)])
        # kinetic and interaction parts next to the total
        if k == 0:
            for col, ls in (("K", ":"), ("UD", "--")):
                axes[1].plot(data["g"], data[col], "k" + ls, lw=1, label=f"{col} ({label})")
    for ax, (_, title) in zip(axes, PANELS):
        ax.set_xlabel("g")
        ax.set_title(title)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
