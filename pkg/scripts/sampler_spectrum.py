"""Radially averaged power spectrum of the stationary sampler, with its log-log slope."""
import argparse
import csv
from pathlib import Path

import numpy as np

from ewscatter.randfield import Grid3, PotentialRealization, power_spectrum, spectral_slope, stationary_field


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/spectrum")
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--realizations", type=int, default=200)
    ap.add_argument("--m", type=float, nargs="+", default=[2.9, 3.0])
    ap.add_argument("--seed", type=int, default=5)
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    g = Grid3.centered(2.0, a.n)
    k = g.wavenumbers()
    kk = np.sqrt(k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2)
    k1 = 2 * np.pi / g.side
    shells = np.round(kk / k1).astype(int)
    for m in a.m:
        spec = np.zeros(g.shape)
        for r in range(a.realizations):
            spec += power_spectrum(PotentialRealization(g, stationary_field(g, m, a.seed, r)))
        spec /= a.realizations
        slope = spectral_slope(g, spec, 2 * k1, np.pi / g.h / 2)
        with open(out / f"spectrum_m{m}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "power", "nodes"])
            for s in range(1, shells.max() + 1):
                sel = shells == s
                if sel.any():
                    w.writerow([s * k1, spec[sel].mean(), int(sel.sum())])
        print(f"m={m}: fitted slope {slope:.4f}")


if __name__ == "__main__":
    main()
