"""Monte Carlo check of omega^m E[u(omega) . conj(u(omega + tau))] against C * phi_hat(2 c tau theta)."""
import argparse
import csv
from pathlib import Path

import numpy as np

from ewscatter.greens import LameParameters
from ewscatter.inversion import expectation_correlation_mc, inversion_constants
from ewscatter.randfield import Grid3, RandomFieldSpec, bump_strength


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/expectation")
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--realizations", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--omega-p", type=float, default=80.0)
    ap.add_argument("--omega-s", type=float, default=60.0)
    ap.add_argument("--xi", type=float, nargs="+", default=[0.0, 1.5, 3.0, 4.5, 6.0], help="lags as |2 c tau|")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    lame = LameParameters(2.0, 1.0)
    g = Grid3.centered(2.0, a.n)
    phi = bump_strength(g, (0, 0, 0), 0.5, 1.0)
    spec = RandomFieldSpec(3.0, phi, seed=a.seed)
    theta = np.array([1.0, 2.0, 2.0]) / 3
    Cp, Cs = inversion_constants(3.0, lame)
    xis = np.asarray(a.xi)
    with open(out / "expectation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "omega", "tau", "estimate_re", "estimate_im", "stderr", "target"])
        for kind, C, c, omega in (("P", Cp, lame.c_p, a.omega_p), ("S", Cs, lame.c_s, a.omega_s)):
            taus = xis / (2 * c)
            est, se = expectation_correlation_mc(spec, theta, omega, taus, lame, a.realizations, kind=kind)
            target = (C * phi.descriptor.fourier(2 * c * taus[:, None] * theta[None, :])).real
            for t, v, s, tg in zip(taus, omega**3 * est, omega**3 * se, target):
                w.writerow([kind, omega, t, v.real, v.imag, s, tg])
                print(f"{kind} tau={t:.3f}  est/target={v.real / tg:.3f}  stderr/target={s / tg:.3f}")


if __name__ == "__main__":
    main()
