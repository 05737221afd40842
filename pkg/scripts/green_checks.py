"""Green tensor checks: FD Navier residual convergence and far-field remainder decay.

Writes ``navier_convergence.csv`` and ``farfield_remainder.csv`` to ``--out``.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from ewscatter.greens import LameParameters, farfield_remainder, fitted_order, navier_convergence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/green")
    ap.add_argument("--omega", type=float, default=4.0)
    ap.add_argument("--pairs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    lame = LameParameters(2.0, 1.0)
    rng = np.random.default_rng(a.seed)
    lam_s = 2 * np.pi / lame.kappa_s(a.omega)
    hs = lam_s / np.array([8, 16, 32, 64])

    with open(out / "navier_convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "stencil_order", "h", "residual", "fitted_order"])
        for p in range(a.pairs):
            z = rng.uniform(-1, 1, 3)
            d = rng.standard_normal(3)
            x = z + d / np.linalg.norm(d) * rng.uniform(0.5, 2.0) * lam_s
            for order in (2, 4):
                pairs = navier_convergence(x, z, a.omega, lame, hs, order)
                fo = fitted_order(pairs)
                for h, r in pairs:
                    w.writerow([p, order, h, r, fo])
            print(f"pair {p}: order-2 fit {fitted_order(navier_convergence(x, z, a.omega, lame, hs[1:], 2)):.3f}")

    Rs = np.geomspace(20, 200, 12) * lam_s
    with open(out / "farfield_remainder.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["R_over_wavelength", "remainder", "R2_remainder"])
        x_hat = np.array([0.48, 0.6, 0.64])
        z = np.array([0.2, -0.1, 0.3])
        rem = [farfield_remainder(x_hat, z, R, a.omega, lame) for R in Rs]
        for R, r in zip(Rs, rem):
            w.writerow([R / lam_s, r, r * R * R])
    print(f"far-field remainder exponent {fitted_order(list(zip(Rs, rem))):.3f}")


if __name__ == "__main__":
    main()
