"""Single-realization band estimates at Q, 2Q, 4Q for several realizations."""
import argparse
import csv
from pathlib import Path

import numpy as np

from ewscatter.greens import LameParameters
from ewscatter.inversion import band_lattice, born1_sweep, correlation_estimate, inversion_constants
from ewscatter.randfield import Grid3, RandomFieldSpec, bump_strength, sample_potential


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/ergodicity")
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--Q", type=float, default=40.0)
    ap.add_argument("--realizations", type=int, default=5)
    ap.add_argument("--taus", type=float, nargs="+", default=[0.0, 2.5, 5.0])
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    lame = LameParameters(2.0, 1.0)
    g = Grid3.centered(2.0, a.n)
    phi = bump_strength(g, (0, 0, 0), 0.5, 1.0)
    theta = np.array([1.0, 2.0, 2.0]) / 3
    Cp, _ = inversion_constants(3.0, lame)
    taus = np.asarray(a.taus)
    om = band_lattice(a.Q, taus.max(), 64, doublings=2)
    target = (Cp * phi.descriptor.fourier(2 * lame.c_p * taus[:, None] * theta[None, :])).real
    Qs = a.Q * np.array([1, 2, 4])
    ratios = np.empty((a.realizations, 3, len(taus)))
    with open(out / "ergodicity.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["realization", "Q", "tau", "estimate", "target"])
        for r in range(a.realizations):
            rho = sample_potential(RandomFieldSpec(3.0, phi, seed=a.seed, realization_index=r))
            sw = born1_sweep(rho, theta, om, lame)
            for i, q in enumerate(Qs):
                for j, t in enumerate(taus):
                    v = correlation_estimate(sw, t, 3.0, "P", q).real
                    ratios[r, i, j] = v / target[j]
                    w.writerow([r, q, t, v, target[j]])
    std = ratios.std(axis=0, ddof=1)
    for i, q in enumerate(Qs):
        print(f"Q={q:g}: std/target per tau {np.round(std[i], 3).tolist()}  mean {np.round(ratios[:, i].mean(0), 3).tolist()}")


if __name__ == "__main__":
    main()
