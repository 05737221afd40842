"""Band energies of Born-1, Born-2 and the Born tail at Q, 2Q, 4Q from full solves."""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from ewscatter.greens import LameParameters
from ewscatter.inversion import band_lattice, negligibility_diagnostics, order_sweeps
from ewscatter.randfield import Grid3, RandomFieldSpec, bump_strength, sample_potential


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/negligibility")
    ap.add_argument("--n", type=int, default=48)
    ap.add_argument("--Q", type=float, default=3.0)
    ap.add_argument("--nodes-per-band", type=int, default=16)
    ap.add_argument("--amplitude", type=float, default=1e4)
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    lame = LameParameters(2.0, 1.0)
    g = Grid3.centered(2.0, a.n)
    rho = sample_potential(RandomFieldSpec(3.0, bump_strength(g, (0, 0, 0), 0.5, a.amplitude), seed=a.seed))
    theta = np.array([1.0, 2.0, 2.0]) / 3
    om = band_lattice(a.Q, 0.0, a.nodes_per_band, doublings=2)
    t0 = time.perf_counter()
    sweeps = order_sweeps(rho, theta, om, lame, tol=a.tol, kinds=("P",))
    print(f"{len(om)} frequencies solved in {time.perf_counter() - t0:.0f}s")
    rep = negligibility_diagnostics(sweeps, 3.0, a.Q, "P")
    with open(out / "negligibility.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Q", "A_born1", "A_born2", "A_tail", "ratio_2", "ratio_tail"])
        for i, q in enumerate(rep.Qs):
            w.writerow([q, rep.A["born-1"][i], rep.A["born-2"][i], rep.A["born-tail"][i], rep.ratio_2[i], rep.ratio_tail[i]])
    print(f"A2/A1 {rep.ratio_2}  decreasing: {rep.monotone_2}")
    print(f"Atail/A1 {rep.ratio_tail}  decreasing: {rep.monotone_tail}")


if __name__ == "__main__":
    main()
