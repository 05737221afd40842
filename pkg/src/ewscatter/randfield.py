"""Microlocally isotropic Gaussian potentials on a periodic sampling box.

A realization is built spectrally: counter-based white noise is filtered by
``|xi|**(-m/2)`` and multiplied pointwise by ``sqrt(phi)``, so the covariance
has principal symbol ``phi(x) |xi|**(-m)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

SQRT_EPS = np.sqrt(np.finfo(float).eps)


class FieldError(ValueError):
    """Invalid grid, strength or sampling request."""


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def admissible_size(n: int) -> bool:
    """``2^k`` or ``3 * 2^k`` with ``n >= 8``."""
    return n >= 8 and (_is_pow2(n) or (n % 3 == 0 and _is_pow2(n // 3)))


@dataclass(frozen=True)
class Grid3:
    """Uniform periodic grid of ``n**3`` nodes ``origin + h * (i, j, k)``."""

    origin: tuple[float, float, float]
    side: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if len(self.origin) != 3:
            raise FieldError("origin must be a 3-vector")
        if not admissible_size(int(self.n)):
            raise FieldError(f"n must be 2^k or 3*2^k and >= 8, got {self.n}")
        if not self.side > 0:
            raise FieldError(f"side must be positive, got {self.side}")

    @classmethod
    def centered(cls, side: float, n: int) -> "Grid3":
        return cls((-side / 2,) * 3, side, n)

    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n,) * 3

    @property
    def cell_volume(self) -> float:
        return self.h**3

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.h * np.arange(self.n)

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij", sparse=True)

    def points(self) -> np.ndarray:
        """All node positions, shape ``(n, n, n, 3)``."""
        x, y, z = np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")
        return np.stack([x, y, z], axis=-1)

    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the DFT along one axis."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Corners of the admissible support region D (margin side/4)."""
        lo = np.asarray(self.origin) + self.side / 4
        return lo, lo + self.side / 2

    def inside_support(self) -> np.ndarray:
        lo, hi = self.support_box()
        x, y, z = self.coords()
        return (
            (x >= lo[0]) & (x <= hi[0]) & (y >= lo[1]) & (y <= hi[1]) & (z >= lo[2]) & (z <= hi[2])
        )


# ---------------------------------------------------------------------------
# strength fields


def _bump_profile(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def bump_unit_integral() -> float:
    """Integral of the unit-radius, unit-amplitude bump over R^3."""
    val, _ = integrate.quad(lambda s: _bump_profile(s) * s * s, 0.0, 1.0, epsabs=0, epsrel=1e-13)
    return 4 * np.pi * val


@lru_cache(maxsize=None)
def _radial_rule(npts: int = 400):
    x, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (x + 1.0)
    return s, 0.5 * w * _bump_profile(s) * s * s


@dataclass(frozen=True)
class Bump:
    """``amplitude * exp(1 - 1/(1 - |x-c|^2/r^2))`` inside the ball, zero outside."""

    center: tuple[float, float, float]
    radius: float
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.radius <= 0:
            raise FieldError("bump radius must be positive")
        if self.amplitude < 0:
            raise FieldError("bump amplitude must be nonnegative")

    def __call__(self, points) -> np.ndarray:
        d = np.asarray(points, dtype=float) - np.asarray(self.center)
        return self.amplitude * _bump_profile(np.linalg.norm(d, axis=-1) / self.radius)

    def integral(self) -> float:
        return self.amplitude * self.radius**3 * bump_unit_integral()

    def fourier(self, xi) -> np.ndarray:
        """``int phi(x) exp(-i x.xi) dx`` by Gauss-Legendre radial quadrature."""
        xi = np.asarray(xi, dtype=float)
        k = np.linalg.norm(xi, axis=-1)
        s, w = _radial_rule()
        kr = k[..., None] * self.radius * s
        radial = 4 * np.pi * np.sum(w * np.sinc(kr / np.pi), axis=-1)
        phase = np.exp(-1j * (xi @ np.asarray(self.center)))
        return self.amplitude * self.radius**3 * radial * phase


@dataclass
class StrengthField:
    """Microlocal strength sampled on a grid.

    ``stationary`` marks the periodic constant-strength case used for spectral
    checks; ``estimated`` marks reconstructions, which may dip below zero.
    """

    grid: Grid3
    values: np.ndarray
    descriptor: Bump | None = None
    stationary: bool = False
    estimated: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise FieldError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if self.estimated:
            return
        if np.any(self.values < 0):
            raise FieldError("strength must be nonnegative")
        if not self.stationary and np.any(self.values[~self.grid.inside_support()] != 0):
            raise FieldError("strength must vanish outside the support region D")

    @classmethod
    def uniform(cls, grid: Grid3, value: float = 1.0) -> "StrengthField":
        return cls(grid, np.full(grid.shape, float(value)), stationary=True)

    @classmethod
    def zero(cls, grid: Grid3) -> "StrengthField":
        return cls(grid, np.zeros(grid.shape))

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)


def bump_strength(grid: Grid3, center, radius: float, amplitude: float) -> StrengthField:
    bump = Bump(tuple(center), radius, amplitude)
    lo, hi = grid.support_box()
    c = np.asarray(bump.center)
    if np.any(c - radius < lo - 1e-12) or np.any(c + radius > hi + 1e-12):
        raise FieldError(f"ball(center={bump.center}, radius={radius}) escapes the support region D")
    return StrengthField(grid, bump(grid.points()), descriptor=bump)


# ---------------------------------------------------------------------------
# sampling


def _raw_words(seed: int, realization: int, start: int, count: int) -> np.ndarray:
    """Philox words ``start .. start+count`` of the stream keyed by (seed, realization)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, realization & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    block, offset = divmod(start, 4)
    bg = np.random.Philox(key=key, counter=np.array([block, 0, 0, 0], dtype=np.uint64))
    return bg.random_raw(offset + count)[offset:]


def white_noise(seed: int, realization: int, shape, start_node: int = 0, count: int | None = None) -> np.ndarray:
    """Standard normal noise; node ``i`` depends only on (seed, realization, i).

    Node ``i`` consumes Philox words ``2i`` and ``2i+1`` (Box-Muller, cosine
    branch), so any sub-range can be regenerated without the rest.
    """
    total = int(np.prod(shape))
    if count is None:
        count = total - start_node
    raw = _raw_words(seed, realization, 2 * start_node, 2 * count)
    u1 = ((raw[0::2] >> np.uint64(11)).astype(float) + 1.0) * 2.0**-53
    u2 = (raw[1::2] >> np.uint64(11)).astype(float) * 2.0**-53
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2 * np.pi * u2)
    if start_node == 0 and count == total:
        return z.reshape(shape)
    return z


@dataclass(frozen=True)
class RandomFieldSpec:
    m: float
    strength: StrengthField = field(compare=False)
    seed: int = 0
    realization_index: int = 0

    def __post_init__(self):
        if not 2 < self.m <= 3:
            raise FieldError(f"order m must lie in (2, 3], got {self.m}")

    def with_realization(self, index: int) -> "RandomFieldSpec":
        return RandomFieldSpec(self.m, self.strength, self.seed, index)


@dataclass
class PotentialRealization:
    grid: Grid3
    values: np.ndarray
    spec: RandomFieldSpec | None = None

    def fourier(self, xi) -> np.ndarray:
        """Rectangle-rule transform ``h^3 sum rho(x) exp(-i x.xi)`` at arbitrary ``xi``."""
        return fourier_at(self.grid, self.values, xi)


def _spectral_filter(grid: Grid3, m: float) -> np.ndarray:
    k = grid.wavenumbers()
    kz = k[: grid.n // 2 + 1]
    kk = np.sqrt(k[:, None, None] ** 2 + k[None, :, None] ** 2 + kz[None, None, :] ** 2)
    with np.errstate(divide="ignore"):
        filt = kk ** (-m / 2)
    filt[0, 0, 0] = 0.0
    return filt


def stationary_field(grid: Grid3, m: float, seed: int, realization: int) -> np.ndarray:
    """Periodic field with spectral density ``|xi|**(-m)`` and zero mean mode."""
    w = white_noise(seed, realization, grid.shape)
    g = np.fft.irfftn(np.fft.rfftn(w) * _spectral_filter(grid, m), s=grid.shape, axes=(0, 1, 2))
    return g * grid.h**-1.5


def sample_potential(spec: RandomFieldSpec) -> PotentialRealization:
    phi = spec.strength.values
    grid = spec.strength.grid
    if not np.any(phi):
        return PotentialRealization(grid, np.zeros(grid.shape), spec)
    g = stationary_field(grid, spec.m, spec.seed, spec.realization_index)
    return PotentialRealization(grid, np.sqrt(phi) * g, spec)


def lattice_covariance(grid: Grid3, m: float, lags) -> np.ndarray:
    """Exact covariance of :func:`stationary_field` at the given lag vectors.

    Direct lattice sum ``L^-3 sum_{q != 0} |q|^-m cos(q.d)``; independent of
    the sampler's noise and FFT path.
    """
    lags = np.atleast_2d(np.asarray(lags, dtype=float))
    k = grid.wavenumbers()
    qx, qy, qz = np.meshgrid(k, k, k, indexing="ij")
    q2 = qx**2 + qy**2 + qz**2
    q2[0, 0, 0] = np.inf
    dens = q2 ** (-m / 2)
    out = np.empty(len(lags))
    for i, d in enumerate(lags):
        out[i] = np.sum(dens * np.cos(qx * d[0] + qy * d[1] + qz * d[2]))
    return out / grid.side**3


def fourier_at(grid: Grid3, values: np.ndarray, xi) -> np.ndarray:
    """``h^3 sum f(x) exp(-i x.xi)`` over the nonzero nodes of ``values``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    idx = np.nonzero(values)
    if idx[0].size == 0:
        return np.zeros(len(xi), dtype=complex)
    pts = np.stack([grid.axis(a)[idx[a]] for a in range(3)], axis=-1)
    f = values[idx]
    out = np.empty(len(xi), dtype=complex)
    for start in range(0, len(xi), 64):
        phase = pts @ xi[start : start + 64].T
        out[start : start + 64] = f @ np.exp(-1j * phase)
    return out * grid.cell_volume


def power_spectrum(rho: PotentialRealization) -> np.ndarray:
    """``|rho_hat(q)|^2`` on the DFT lattice with continuum normalisation."""
    return np.abs(np.fft.fftn(rho.values) * rho.grid.cell_volume) ** 2


def spectral_slope(grid: Grid3, spectrum: np.ndarray, kmin: float, kmax: float) -> float:
    """Least-squares log-log slope of ``spectrum`` over ``kmin <= |q| <= kmax``."""
    k = grid.wavenumbers()
    kk = np.sqrt(k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2)
    sel = (kk >= kmin) & (kk <= kmax)
    slope, _ = np.polyfit(np.log(kk[sel]), np.log(spectrum[sel]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# mollification


@lru_cache(maxsize=None)
def _mollifier_norm() -> float:
    # unit-radius bump rescaled to radius 1/4 must integrate to one
    return bump_unit_integral() * 0.25**3


def mollifier(grid: Grid3, epsilon: float) -> np.ndarray:
    """Periodic tabulation of ``eps^-3 varphi(x/eps)``, normalised to unit discrete mass."""
    offs = grid.h * np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    r = np.sqrt(offs[:, None, None] ** 2 + offs[None, :, None] ** 2 + offs[None, None, :] ** 2)
    ker = _bump_profile(r / (epsilon / 4)) / (_mollifier_norm() * epsilon**3)
    return ker / (ker.sum() * grid.cell_volume)


def mollify(rho: PotentialRealization, epsilon: float) -> PotentialRealization:
    grid = rho.grid
    if epsilon < 2 * grid.h * (1 - 1e-12):
        raise FieldError(f"epsilon={epsilon} is below 2h={2 * grid.h}; mollifier is unresolvable")
    ker = mollifier(grid, epsilon) * grid.cell_volume
    out = np.fft.irfftn(np.fft.rfftn(rho.values) * np.fft.rfftn(ker), s=grid.shape, axes=(0, 1, 2))
    # exact support: zero outside supp(rho) fattened by the kernel radius
    reach = np.fft.irfftn(np.fft.rfftn((rho.values != 0).astype(float)) * np.fft.rfftn((ker > 0).astype(float)), s=grid.shape, axes=(0, 1, 2))
    out[reach < 0.5] = 0.0
    return PotentialRealization(grid, out, rho.spec)


def mollified_lattice_covariance(grid: Grid3, m: float, epsilon: float | None, lag) -> float:
    """Exact covariance of the mollified stationary field at one lag."""
    k = grid.wavenumbers()
    qx, qy, qz = np.meshgrid(k, k, k, indexing="ij")
    q2 = qx**2 + qy**2 + qz**2
    q2[0, 0, 0] = np.inf
    dens = q2 ** (-m / 2)
    if epsilon is not None:
        khat = np.fft.fftn(mollifier(grid, epsilon) * grid.cell_volume)
        dens = dens * np.abs(khat) ** 2
    d = np.asarray(lag, dtype=float)
    return float(np.sum(dens * np.cos(qx * d[0] + qy * d[1] + qz * d[2])) / grid.side**3)


# ---------------------------------------------------------------------------
# covariance kernel reference


def riesz_constant(m: float) -> float:
    """``c(m)`` in ``(2 pi)^-3 int |xi|^-m e^{i x.xi} dxi = c(m) |x|^(m-3)``, 0 < m < 3."""
    return special.gamma((3 - m) / 2) / (2**m * np.pi**1.5 * special.gamma(m / 2))


LOG_KERNEL_CONSTANT = 1.0 / (2 * np.pi**2)


def covariance_kernel_reference(m: float, separation: float) -> float:
    """Leading-order stationary covariance at distance ``separation`` (phi = 1).

    For ``m == 3`` the kernel is ``-log(r) / (2 pi^2)`` up to an additive
    constant, which is fixed here to zero.
    """
    if separation <= 0:
        raise FieldError("covariance kernel is singular at zero separation")
    if not 2 < m <= 3:
        raise FieldError(f"order m must lie in (2, 3], got {m}")
    if m == 3:
        return -LOG_KERNEL_CONSTANT * np.log(separation)
    return riesz_constant(m) * separation ** (m - 3)
