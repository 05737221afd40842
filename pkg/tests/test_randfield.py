import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ewscatter.randfield import (
    Bump,
    FieldError,
    Grid3,
    PotentialRealization,
    RandomFieldSpec,
    StrengthField,
    bump_strength,
    bump_unit_integral,
    covariance_kernel_reference,
    lattice_covariance,
    mollified_lattice_covariance,
    mollify,
    riesz_constant,
    sample_potential,
    stationary_field,
    white_noise,
)


def radial_kernel_oracle(m, r, split=60.0):
    """(2 pi)^-3 int |xi|^-m e^{i x.xi} dxi = (1 / (2 pi^2 r)) int_0^inf k^(1-m) sin(k r) dk."""
    head, _ = integrate.quad(lambda k: k ** (1 - m) * np.sin(k * r), 0, split, limit=400, epsabs=0, epsrel=1e-12)
    tail, _ = integrate.quad(lambda k: k ** (1 - m), split, np.inf, weight="sin", wvar=r)
    return (head + tail) / (2 * np.pi**2 * r)


# -- grid ---------------------------------------------------------------------


@pytest.mark.parametrize("n", [4, 10, 20, 100])
def test_grid_rejects_inadmissible_sizes(n):
    with pytest.raises(FieldError):
        Grid3.centered(1.0, n)


@pytest.mark.parametrize("n", [8, 16, 24, 48, 64])
def test_grid_accepts_fft_friendly_sizes(n):
    g = Grid3.centered(2.0, n)
    assert g.h == pytest.approx(2.0 / n)
    lo, hi = g.support_box()
    assert np.allclose(lo, -0.5) and np.allclose(hi, 0.5)


def test_grid_rejects_nonpositive_side():
    with pytest.raises(FieldError):
        Grid3((0, 0, 0), 0.0, 8)


# -- bump ---------------------------------------------------------------------


def test_bump_peak_and_boundary():
    b = Bump((0.1, -0.05, 0.0), 0.3, 2.5)
    assert b(np.array(b.center)) == pytest.approx(2.5, rel=1e-15)
    e = np.array([0.0, 0.6, 0.8])
    assert b(np.array(b.center) + 0.3 * e) == 0.0


def test_bump_integral_matches_radial_oracle():
    # independent oracle: spherical shells with adaptive quadrature on the full profile
    f = lambda s: np.exp(1 - 1 / (1 - s * s)) * 4 * np.pi * s * s if s < 1 else 0.0
    B, _ = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-12)
    assert bump_unit_integral() == pytest.approx(B, rel=1e-12)
    b = Bump((0, 0, 0), 0.4, 3.0)
    assert b.fourier(np.zeros(3)).real == pytest.approx(3.0 * 0.4**3 * B, rel=1e-10)


def test_bump_fourier_matches_grid_transform():
    rng = np.random.default_rng(1)
    xi = rng.uniform(-12, 12, size=(10, 3))
    errs = []
    for n in (64, 128):
        g = Grid3.centered(2.0, n)
        phi = bump_strength(g, (0.1, 0.0, -0.1), 0.35, 1.0)
        grid_ft = PotentialRealization(g, phi.values).fourier(xi)
        errs.append(np.abs(phi.descriptor.fourier(xi) - grid_ft).max() / phi.descriptor.integral())
    assert errs[1] < 1e-6
    assert errs[1] < errs[0] / 50


def test_bump_escaping_support_rejected():
    g = Grid3.centered(2.0, 16)
    with pytest.raises(FieldError):
        bump_strength(g, (0.3, 0, 0), 0.3, 1.0)


def test_strength_nonnegative_and_supported():
    g = Grid3.centered(2.0, 16)
    with pytest.raises(FieldError):
        StrengthField(g, -np.ones(g.shape))
    with pytest.raises(FieldError):
        StrengthField(g, np.ones(g.shape))  # not zero outside D
    StrengthField(g, -np.ones(g.shape), estimated=True)


# -- sampling -----------------------------------------------------------------


def test_zero_strength_gives_zero_field():
    g = Grid3.centered(2.0, 16)
    rho = sample_potential(RandomFieldSpec(3.0, StrengthField.zero(g), seed=3))
    assert not np.any(rho.values)


def test_sampling_is_bitwise_deterministic():
    g = Grid3.centered(2.0, 32)
    spec = RandomFieldSpec(3.0, bump_strength(g, (0, 0, 0), 0.5, 1.0), seed=7, realization_index=0)
    a, b = sample_potential(spec), sample_potential(spec)
    assert a.values.tobytes() == b.values.tobytes()
    other = sample_potential(spec.with_realization(1))
    assert not np.array_equal(a.values, other.values)


@pytest.mark.parametrize("m", [2.0, 3.5, 1.0])
def test_order_outside_range_rejected(m):
    g = Grid3.centered(2.0, 8)
    with pytest.raises(FieldError):
        RandomFieldSpec(m, StrengthField.zero(g))


def test_realization_is_real_and_supported():
    g = Grid3.centered(2.0, 32)
    phi = bump_strength(g, (0, 0, 0), 0.4, 1.0)
    rho = sample_potential(RandomFieldSpec(2.9, phi, seed=5))
    assert rho.values.dtype == np.float64
    assert np.all(rho.values[phi.values == 0] == 0)
    assert np.any(rho.values[phi.values > 0] != 0)


@given(
    seed=st.integers(0, 2**63),
    realization=st.integers(0, 2**31),
    start=st.integers(0, 500),
    count=st.integers(1, 300),
)
def test_white_noise_subranges_are_order_independent(seed, realization, start, count):
    full = white_noise(seed, realization, (start + count,))
    part = white_noise(seed, realization, (start + count,), start_node=start, count=count)
    assert np.array_equal(full[start:], part)


def test_centering_and_gaussianity():
    g = Grid3.centered(2.0, 8)
    N = 1000
    x = np.array([stationary_field(g, 3.0, 11, r)[2, 3, 4] for r in range(N)])
    assert abs(x.mean()) <= 4 * x.std() / np.sqrt(N)
    kurt = np.mean((x - x.mean()) ** 4) / x.var() ** 2
    assert abs(kurt - 3) <= 3 * np.sqrt(24 / N)


def test_sampler_covariance_matches_lattice_oracle():
    g = Grid3.centered(2.0, 16)
    N = 600
    lag = np.array([4, 0, 0])
    prods = np.empty(N)
    for r in range(N):
        f = stationary_field(g, 3.0, 21, r)
        prods[r] = np.mean(f * np.roll(f, -4, axis=0))
    ref = lattice_covariance(g, 3.0, [lag * g.h])[0]
    # field-averaged products are correlated across nodes; use realizations as the independent unit
    se = prods.std(ddof=1) / np.sqrt(N)
    assert abs(prods.mean() - ref) <= 3 * se


def test_lattice_covariance_differences_follow_continuum_kernel():
    g = Grid3.centered(2.0, 64)
    lags = np.array([[4, 0, 0], [0, 12, 0]]) * g.h
    lat = lattice_covariance(g, 3.0, lags)
    ref = [covariance_kernel_reference(3.0, np.linalg.norm(d)) for d in lags]
    assert lat[0] - lat[1] == pytest.approx(ref[0] - ref[1], rel=0.05)


# -- mollification ------------------------------------------------------------


def test_mollify_constant_is_constant():
    g = Grid3.centered(2.0, 16)
    rho = PotentialRealization(g, np.full(g.shape, 2.75))
    for eps in (2 * g.h, 5 * g.h):
        assert np.allclose(mollify(rho, eps).values, 2.75, rtol=0, atol=1e-12)


def test_mollify_rejects_unresolvable_width():
    g = Grid3.centered(2.0, 16)
    with pytest.raises(FieldError):
        mollify(PotentialRealization(g, np.ones(g.shape)), 1.5 * g.h)


def test_mollify_support_fattening():
    g = Grid3.centered(2.0, 32)
    phi = bump_strength(g, (0, 0, 0), 0.3, 1.0)
    rho = sample_potential(RandomFieldSpec(3.0, phi, seed=2))
    eps = 8 * g.h
    out = mollify(rho, eps)
    r = np.linalg.norm(g.points(), axis=-1)
    assert np.all(out.values[r > 0.3 + eps / 4 + np.sqrt(3) * g.h] == 0)
    assert out.values.sum() == pytest.approx(rho.values.sum(), rel=1e-9)


def test_mollified_covariance_converges_monotonically():
    # the kernel radius is eps/4, so eps <= 4h is a one-node delta and reproduces the field exactly
    g = Grid3.centered(2.0, 32)
    lag = np.array([4, 0, 0]) * g.h
    exact = mollified_lattice_covariance(g, 3.0, None, lag)
    errs = [abs(mollified_lattice_covariance(g, 3.0, k * g.h, lag) - exact) for k in (16, 8, 4, 2)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] >= errs[3]


# -- covariance reference -----------------------------------------------------


def test_reference_ratio_for_m_2_5():
    assert covariance_kernel_reference(2.5, 0.1) / covariance_kernel_reference(2.5, 0.4) == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("m", [2.2, 2.5, 2.8])
@pytest.mark.parametrize("r", [0.1, 0.7])
def test_riesz_constant_matches_radial_quadrature(m, r):
    assert covariance_kernel_reference(m, r) == pytest.approx(radial_kernel_oracle(m, r), rel=1e-6)


def test_log_kernel_differences():
    r1, r2 = 0.05, 0.8
    d = covariance_kernel_reference(3.0, r1) - covariance_kernel_reference(3.0, r2)
    assert d == pytest.approx(np.log(r2 / r1) / (2 * np.pi**2), rel=1e-14)
    # near m = 3 the Riesz kernel differences approach the logarithmic ones
    m = 3 - 1e-4
    dm = riesz_constant(m) * (r1 ** (m - 3) - r2 ** (m - 3))
    assert dm == pytest.approx(d, rel=1e-3)


def test_reference_rejects_zero_separation():
    with pytest.raises(FieldError):
        covariance_kernel_reference(3.0, 0.0)
