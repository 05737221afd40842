"""Acceptance criteria 1 to 10.

Each test records one ``CRITERION k: PASS|FAIL ...`` line (printed in the
terminal summary) and then asserts. Criterion 8 is marked ``slow``.
"""
import json

import numpy as np
import pytest

from conftest import ACCEPTANCE, random_unit
from ewscatter.config import ExperimentConfig
from ewscatter.ewsf import read_ewsf, write_ewsf
from ewscatter.greens import (
    LameParameters,
    fitted_order,
    farfield_remainder,
    green_tensor_hessian_form,
    green_tensor_parts,
    navier_convergence,
)
from ewscatter.inversion import (
    StrengthEstimate,
    band_lattice,
    born1_sweep,
    correlation_curve,
    correlation_estimate,
    expectation_correlation_mc,
    inversion_constants,
    negligibility_diagnostics,
    order_sweeps,
    reconstruct_strength,
    recover_phi_hat,
    relative_l2,
    relaxed_hemisphere,
)
from ewscatter.lippmann import (
    PlaneWave,
    VectorField3C,
    apply_K,
    apply_K_direct,
    evaluate_incident,
    far_field,
    scattered_field_at,
    solve_full,
)
from ewscatter.randfield import (
    Bump,
    Grid3,
    PotentialRealization,
    RandomFieldSpec,
    bump_strength,
    power_spectrum,
    sample_potential,
    spectral_slope,
    stationary_field,
)
from ewscatter.sweep import record_dir, run_sweep

LAME = LameParameters(2.0, 1.0)
THETA = np.array([1.0, 2.0, 2.0]) / 3


def verdict(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def rel(a, b):
    return float(np.linalg.norm(np.ravel(a - b)) / np.linalg.norm(np.ravel(b)))


# -- 1 ---------------------------------------------------------------------------


def test_criterion_1_green_tensor():
    rng = np.random.default_rng(1)
    omega = 4.0
    lam_s = 2 * np.pi / LAME.kappa_s(omega)
    orders, split = [], []
    for _ in range(20):
        z = rng.uniform(-1, 1, 3)
        x = z + random_unit(rng) * rng.uniform(0.5, 2.0) * lam_s
        orders.append(fitted_order(navier_convergence(x, z, omega, LAME, [lam_s / 16, lam_s / 32, lam_s / 64], order=2)))
        G = green_tensor_hessian_form(x, z, omega, LAME)
        split.append(np.linalg.norm(sum(green_tensor_parts(x, z, omega, LAME)) - G) / np.linalg.norm(G))
    orders = np.array(orders)
    ok = bool(np.all(np.abs(orders - 2) <= 0.3) and max(split) <= 1e-13)
    verdict(1, ok, f"FD order in [{orders.min():.3f}, {orders.max():.3f}] (2.0 +- 0.3); split-sum max rel {max(split):.2e} (<= 1e-13)")


# -- 2 ---------------------------------------------------------------------------


def test_criterion_2_far_field_asymptotics():
    rng = np.random.default_rng(2)
    omega = 3.0
    lam_s = 2 * np.pi / LAME.kappa_s(omega)
    Rs = np.geomspace(20, 200, 8) * lam_s
    green_exps = []
    for _ in range(5):
        x_hat, z = random_unit(rng), rng.uniform(-0.5, 0.5, 3)
        green_exps.append(fitted_order([(R, farfield_remainder(x_hat, z, R, omega, LAME)) for R in Rs]))

    g = Grid3.centered(2.0, 16)
    r = np.linalg.norm(g.points(), axis=-1)
    rho = PotentialRealization(g, np.where(r <= 0.5, 50 * np.exp(-(r**2) / (2 * 0.12**2)), 0.0))
    w = 2.0
    u, _ = solve_full(rho, PlaneWave("P", tuple(THETA), w), LAME, tol=1e-12)
    x_hat = np.array([0.0, 0.6, 0.8])
    rec = far_field(rho, u, w, LAME, x_hat)
    lam_s = 2 * np.pi / LAME.kappa_s(w)
    Rs = np.geomspace(20, 200, 6) * lam_s
    rem = []
    for R in Rs:
        usc = scattered_field_at(rho, u, w, LAME, [R * x_hat])[0]
        approx = np.exp(1j * LAME.kappa_p(w) * R) / R * rec.uinf_p + np.exp(1j * LAME.kappa_s(w) * R) / R * rec.uinf_s
        rem.append(np.linalg.norm(usc - approx))
    rem = np.array(rem)
    usc_exp = fitted_order(list(zip(Rs, rem)))
    scaled = rem * Rs**2
    ok = all(abs(e + 2) <= 0.2 for e in green_exps) and abs(usc_exp + 2) <= 0.2 and scaled.max() <= 2 * scaled.min()
    verdict(
        2,
        ok,
        f"Green remainder exponents {np.round(green_exps, 3).tolist()}; u_sc exponent {usc_exp:.3f}; "
        f"R^2*remainder range [{scaled.min():.3e}, {scaled.max():.3e}]",
    )


# -- 3 ---------------------------------------------------------------------------


def test_criterion_3_operator_equivalence():
    rng = np.random.default_rng(3)
    g = Grid3.centered(2.0, 8)
    errs = []
    for _ in range(20):
        rho = PotentialRealization(g, rng.standard_normal(g.shape))
        u = VectorField3C(g, rng.standard_normal((3,) + g.shape) + 1j * rng.standard_normal((3,) + g.shape))
        omega = rng.uniform(0.2, 2.0)
        errs.append(rel(apply_K(rho, u, omega, LAME).values, apply_K_direct(rho, u, omega, LAME).values))
    verdict(3, max(errs) <= 1e-12, f"max rel FFT vs direct {max(errs):.2e} over 20 triples (<= 1e-12)")


# -- 4 ---------------------------------------------------------------------------


def test_criterion_4_born1_closed_form():
    g = Grid3.centered(2.0, 32)
    sigma = 0.12
    x, y, z = g.coords()
    rho = PotentialRealization(g, np.exp(-(x**2 + y**2 + z**2) / (2 * sigma**2)))
    errs = {}
    for ppw in (6, 12):
        omega = 2 * np.pi / (ppw * g.h * LAME.c_s)
        wave = PlaneWave("P", tuple(THETA), omega)
        rec = far_field(rho, evaluate_incident(wave, g, LAME), omega, LAME, -THETA, THETA)
        kp = LAME.kappa_p(omega)
        rho_hat = (2 * np.pi * sigma**2) ** 1.5 * np.exp(-(sigma**2) * (2 * kp) ** 2 / 2)
        errs[ppw] = rel(rec.uinf_p, -(LAME.c_p**2) / (4 * np.pi) * THETA * rho_hat)
    ok = errs[6] <= 1e-3 and errs[12] <= 1e-4
    verdict(4, ok, f"rel err {errs[6]:.2e} at 6 ppw (<= 1e-3), {errs[12]:.2e} at 12 ppw (<= 1e-4)")


# -- 5 ---------------------------------------------------------------------------


def test_criterion_5_sampler_spectrum():
    g = Grid3.centered(2.0, 64)
    k1 = 2 * np.pi / g.side
    kmax = np.pi / g.h
    slopes = {}
    for m in (2.9, 3.0):
        spec = np.zeros(g.shape)
        for r in range(200):
            spec += power_spectrum(PotentialRealization(g, stationary_field(g, m, 5, r)))
        slopes[m] = spectral_slope(g, spec / 200, 2 * k1, kmax / 2)
    ok = all(abs(s + m) <= 0.1 for m, s in slopes.items())
    verdict(5, ok, "slopes " + ", ".join(f"m={m}: {s:.4f}" for m, s in slopes.items()) + " (target -m +- 0.1)")


# -- 6 ---------------------------------------------------------------------------


def test_criterion_6_expectation_identity():
    g = Grid3.centered(2.0, 64)
    phi = bump_strength(g, (0, 0, 0), 0.5, 1.0)
    spec = RandomFieldSpec(3.0, phi, seed=0)
    Cp, Cs = inversion_constants(3.0, LAME)
    xis = np.array([0.0, 1.5, 3.0, 4.5, 6.0])
    ok, parts = True, []
    for kind, C, c, omega in (("P", Cp, LAME.c_p, 80.0), ("S", Cs, LAME.c_s, 60.0)):
        taus = xis / (2 * c)
        est, se = expectation_correlation_mc(spec, THETA, omega, taus, LAME, 500, kind=kind)
        target = C * phi.descriptor.fourier(2 * c * taus[:, None] * THETA[None, :])
        val, se = omega**3 * est, omega**3 * se
        good = np.abs(val - target) <= np.maximum(3 * se, 0.15 * np.abs(target))
        ok &= bool(good.all())
        parts.append(f"{kind}: rel {np.round(np.abs(val - target) / np.abs(target), 3).tolist()}")
    verdict(6, ok, "; ".join(parts) + " (within max(3 se, 15%))")


# -- 7 ---------------------------------------------------------------------------


def test_criterion_7_ergodicity_trend():
    # largest Q whose top band edge 8Q + tau stays below 0.81 of the 256^3 Nyquist wavenumber
    g = Grid3.centered(2.0, 256)
    phi = bump_strength(g, (0, 0, 0), 0.5, 1.0)
    Cp, _ = inversion_constants(3.0, LAME)
    Q = 40.0
    taus = np.array([0.0, 2.5, 5.0])
    om = band_lattice(Q, taus.max(), 64, doublings=2)
    target = Cp * phi.descriptor.fourier(2 * LAME.c_p * taus[:, None] * THETA[None, :]).real
    res = []
    for r in range(5):
        rho = sample_potential(RandomFieldSpec(3.0, phi, seed=0, realization_index=r))
        sw = born1_sweep(rho, THETA, om, LAME)
        res.append([[correlation_estimate(sw, t, 3.0, "P", q).real for t in taus] for q in (Q, 2 * Q, 4 * Q)])
    res = np.array(res) / target
    std = res.std(axis=0, ddof=1)
    monotone = bool(np.all(np.diff(std, axis=0) < 0))
    dev4 = np.abs(res[:, 2, :] - 1).max()
    verdict(
        7,
        monotone and dev4 <= 0.25,
        f"std/target at Q,2Q,4Q per tau {np.round(std, 3).tolist()} (monotone: {monotone}); "
        f"max single-realization deviation at 4Q {dev4:.3f} (<= 0.25)",
    )


# -- 8 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_negligibility():
    g = Grid3.centered(2.0, 48)
    phi = bump_strength(g, (0, 0, 0), 0.5, 1e4)
    rho = sample_potential(RandomFieldSpec(3.0, phi, seed=0))
    om = band_lattice(3.0, 0.0, 16, doublings=2)
    sweeps = order_sweeps(rho, THETA, om, LAME, tol=1e-10, kinds=("P",))
    rep = negligibility_diagnostics(sweeps, 3.0, 3.0, "P")
    verdict(
        8,
        rep.monotone_2 and rep.monotone_tail,
        f"Q={rep.Qs.tolist()} A2/A1={np.round(rep.ratio_2, 5).tolist()} Atail/A1={np.round(rep.ratio_tail, 6).tolist()}",
    )


# -- 9 ---------------------------------------------------------------------------


def test_criterion_9_reconstruction():
    target = Grid3.centered(1.0, 32)
    dirs = relaxed_hemisphere(33)

    # oracle samples, no statistics
    b = Bump((0, 0, 0), 0.5, 1.0)
    t = np.linspace(0, 24 / 0.5, 64)
    exact = StrengthEstimate(dirs, t, b.fourier((dirs[:, None, :] * t[None, :, None]).reshape(-1, 3)).reshape(len(dirs), -1))
    oracle_err = relative_l2(reconstruct_strength(exact, target, taper_start=0.25).phi.values, b(target.points()))

    # single-realization pipeline
    g = Grid3.centered(2.0, 256)
    phi = bump_strength(g, (0, 0, 0), 0.5, 1.0)
    rho = sample_potential(RandomFieldSpec(3.0, phi, seed=0))
    Q, Xi = 160.0, 10.0
    om = band_lattice(Q, Xi / (2 * LAME.c_p), 256)
    d = om[1] - om[0]
    taus = d * np.arange(int(round(Xi / (2 * LAME.c_p) / d)) + 1)
    curves = [correlation_curve(born1_sweep(rho, th, om, LAME), taus, 3.0, "P", Q) for th in dirs]
    est = reconstruct_strength(recover_phi_hat(curves, LAME, 3.0), target, taper_start=1.0)
    err = relative_l2(est.phi.values, phi.descriptor(target.points()))
    verdict(9, err <= 0.30 and oracle_err <= 0.05, f"pipeline rel L2 {err:.3f} (<= 0.30); oracle round trip {oracle_err:.4f} (<= 0.05)")


# -- 10 --------------------------------------------------------------------------


def test_criterion_10_infrastructure(tmp_path):
    rng = np.random.default_rng(10)
    g = Grid3.centered(2.0, 16)
    v = rng.standard_normal((3,) + g.shape) + 1j * rng.standard_normal((3,) + g.shape)
    write_ewsf(tmp_path / "u.ewsf", g, v)
    ewsf_ok = read_ewsf(tmp_path / "u.ewsf", expect_grid=g)[1].tobytes() == v.tobytes()

    cfg = ExperimentConfig(grid_n=16, Q=2.0, doublings=0, nodes_per_band=4, taus=(0.0, 0.5), directions=2, output_dir=str(tmp_path / "a")).validate()
    config_ok = ExperimentConfig.loads(cfg.dumps()) == cfg

    first = run_sweep(cfg, max_jobs=4)
    second = run_sweep(cfg)
    third = run_sweep(cfg)
    resume_ok = first["jobs_run"] == 4 and second["jobs_run"] == len(cfg.omegas()) * 2 - 4 and third["jobs_run"] == 0

    other = cfg.replace(output_dir=str(tmp_path / "b"))
    run_sweep(other)
    recs = lambda p: {f.name: f.read_bytes() for f in sorted(record_dir(p).glob("*.csv"))}
    man = lambda p: {k: v for k, v in json.loads((p / "manifest_sweep.json").read_text()).items() if k not in ("timings", "config")}
    a, b = tmp_path / "a", tmp_path / "b"
    rho1 = sample_potential(cfg.field_spec(0)).values
    rho2 = sample_potential(other.field_spec(0)).values
    determinism_ok = recs(a) == recs(b) and man(a) == man(b) and rho1.tobytes() == rho2.tobytes()

    verdict(
        10,
        ewsf_ok and config_ok and resume_ok and determinism_ok,
        f"ewsf round trip {ewsf_ok}; config round trip {config_ok}; resume {resume_ok}; determinism {determinism_ok}",
    )
