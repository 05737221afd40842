"""Discrete Lippmann-Schwinger operator, Born iteration, Krylov solve and far fields.

The volume integral ``(K u)(x) = int G(x, z) rho(z) u(z) dz`` is discretised
by the midpoint rule on the potential's grid. The singular self-cell uses the
exact cube integral of the static kernel plus the regular part at the centre.
The discrete convolution is linear (not circular): kernel and source are
zero-padded to a box of twice the side before the FFT.
"""
from __future__ import annotations

import logging
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .greens import LameParameters, green_coefficients, green_tensor_offset, self_cell
from .randfield import Grid3, PotentialRealization

log = logging.getLogger(__name__)

MIN_POINTS_PER_WAVELENGTH = 6
ORDER_TAGS = ("born-1", "born-2", "born-tail", "full")
_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class SolverError(RuntimeError):
    """Krylov solve did not reach the requested tolerance."""

    def __init__(self, message, u=None, report=None):
        super().__init__(message)
        self.u = u
        self.report = report


class BornSeriesDiverged(RuntimeError):
    def __init__(self, message, terms, report):
        super().__init__(message)
        self.terms = terms
        self.report = report


def kv(**items) -> str:
    """Render a structured ``key=value`` log line."""
    return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in items.items())


# ---------------------------------------------------------------------------
# data types


@dataclass
class VectorField3C:
    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (3,) + self.grid.shape:
            raise ValueError(f"vector field shape {self.values.shape} does not match grid")

    @classmethod
    def zeros(cls, grid: Grid3) -> "VectorField3C":
        return cls(grid, np.zeros((3,) + grid.shape, dtype=complex))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values.ravel()))

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return VectorField3C(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self.grid, other.grid)
        return VectorField3C(self.grid, self.values - other.values)

    def __mul__(self, a):
        return VectorField3C(self.grid, self.values * a)

    __rmul__ = __mul__


def _same_grid(a: Grid3, b: Grid3):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def unit(v, tol=1e-12) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1) > tol:
        raise ValueError(f"expected a unit vector, got norm {np.linalg.norm(v)}")
    return v


def perpendicular(theta) -> np.ndarray:
    """A fixed unit vector orthogonal to ``theta``."""
    theta = np.asarray(theta, dtype=float)
    a = np.eye(3)[np.argmin(np.abs(theta))]
    p = np.cross(theta, a)
    return p / np.linalg.norm(p)


@dataclass(frozen=True)
class PlaneWave:
    kind: str
    theta: tuple
    omega: float
    theta_perp: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("P", "S"):
            raise ValueError(f"plane wave kind must be 'P' or 'S', got {self.kind!r}")
        object.__setattr__(self, "theta", tuple(unit(self.theta)))
        if self.omega <= 0:
            raise ValueError("frequency must be positive")
        if self.kind == "S":
            tp = perpendicular(self.theta) if self.theta_perp is None else unit(self.theta_perp)
            if abs(np.dot(tp, self.theta)) > 1e-12:
                raise ValueError("theta_perp must be orthogonal to theta")
            object.__setattr__(self, "theta_perp", tuple(tp))

    def polarization(self) -> np.ndarray:
        return np.asarray(self.theta if self.kind == "P" else self.theta_perp)

    def wavenumber(self, lame: LameParameters) -> float:
        return lame.kappa_p(self.omega) if self.kind == "P" else lame.kappa_s(self.omega)


@dataclass
class FarFieldRecord:
    theta: np.ndarray
    x_hat: np.ndarray
    omega: float
    uinf_p: np.ndarray
    uinf_s: np.ndarray
    order_tag: str = "full"

    def __post_init__(self):
        if self.order_tag not in ORDER_TAGS:
            raise ValueError(f"unknown order tag {self.order_tag!r}")


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = 0.0
    born_terms_used: int | None = None
    wall_time: float = 0.0
    converged: bool = True
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# incident field


def evaluate_incident(wave: PlaneWave, grid: Grid3, lame: LameParameters) -> VectorField3C:
    x, y, z = grid.coords()
    th = wave.theta
    phase = np.exp(1j * wave.wavenumber(lame) * (x * th[0] + y * th[1] + z * th[2]))
    pol = wave.polarization()
    return VectorField3C(grid, pol[:, None, None, None] * phase[None])


# ---------------------------------------------------------------------------
# the operator


def check_resolution(grid: Grid3, omega: float, lame: LameParameters):
    ppw = lame.shear_wavelength(omega) / grid.h
    if ppw < MIN_POINTS_PER_WAVELENGTH * (1 - 1e-12):
        raise ValueError(
            f"grid under-resolves the shear wavelength: {ppw:.2f} points per wavelength "
            f"(need >= {MIN_POINTS_PER_WAVELENGTH}); reduce h or omega"
        )
    return ppw


def kernel_table(grid: Grid3, omega: float, lame: LameParameters) -> np.ndarray:
    """Cell-integrated kernel ``T_ab(d)`` on the doubled periodic box, shape ``(6, 2n, 2n, 2n)``."""
    n, h = grid.n, grid.h
    k = np.arange(2 * n)
    off = np.where(k < n, k, k - 2 * n) * h
    off[n] = 0.0  # wrap-around slot; never reached by |i - j| <= n - 1
    dx, dy, dz = np.meshgrid(off, off, off, indexing="ij", sparse=True)
    r = np.sqrt(dx**2 + dy**2 + dz**2)
    live = r > 0
    a = np.zeros(r.shape, dtype=complex)
    b = np.zeros(r.shape, dtype=complex)
    a[live], b[live] = green_coefficients(r[live], omega, lame)
    a *= h**3
    b *= h**3
    a[0, 0, 0] = self_cell(h, omega, lame)[0, 0]
    for ax, idx in enumerate(((n, slice(None), slice(None)), (slice(None), n, slice(None)), (slice(None), slice(None), n))):
        a[idx] = 0.0
        b[idx] = 0.0
    d = (dx, dy, dz)
    out = np.empty((6,) + r.shape, dtype=complex)
    for p, (i, j) in enumerate(_PAIRS):
        out[p] = b * d[i] * d[j]
        if i == j:
            out[p] += a
    return out


class LSOperator:
    """Matrix-free ``u -> K_omega u`` for a fixed grid, frequency and solid."""

    def __init__(self, grid: Grid3, omega: float, lame: LameParameters):
        if omega <= 0:
            raise ValueError("frequency must be positive")
        self.ppw = check_resolution(grid, omega, lame)
        self.grid, self.omega, self.lame = grid, omega, lame
        self.kernel_hat = sfft.fftn(kernel_table(grid, omega, lame), axes=(1, 2, 3))

    def convolve(self, f: np.ndarray) -> np.ndarray:
        """``sum_z T(x - z) f(z)`` for a 3-component source ``f``."""
        n = self.grid.n
        fh = sfft.fftn(f, s=(2 * n,) * 3, axes=(1, 2, 3))
        out = np.empty_like(fh)
        kh = self.kernel_hat
        out[0] = kh[0] * fh[0] + kh[3] * fh[1] + kh[4] * fh[2]
        out[1] = kh[3] * fh[0] + kh[1] * fh[1] + kh[5] * fh[2]
        out[2] = kh[4] * fh[0] + kh[5] * fh[1] + kh[2] * fh[2]
        return sfft.ifftn(out, axes=(1, 2, 3))[:, :n, :n, :n]

    def apply(self, rho: PotentialRealization, u: VectorField3C) -> VectorField3C:
        _same_grid(self.grid, rho.grid)
        _same_grid(self.grid, u.grid)
        if not np.any(rho.values):
            return VectorField3C.zeros(self.grid)
        return VectorField3C(self.grid, self.convolve(rho.values[None] * u.values))


_OPERATORS: "OrderedDict[tuple, LSOperator]" = OrderedDict()


def get_operator(grid: Grid3, omega: float, lame: LameParameters, cache_size: int = 2) -> LSOperator:
    key = (grid, float(omega), lame)
    op = _OPERATORS.get(key)
    if op is None:
        op = LSOperator(grid, omega, lame)
        _OPERATORS[key] = op
        while len(_OPERATORS) > cache_size:
            _OPERATORS.popitem(last=False)
    else:
        _OPERATORS.move_to_end(key)
    return op


def apply_K(rho: PotentialRealization, u: VectorField3C, omega: float, lame: LameParameters) -> VectorField3C:
    _same_grid(rho.grid, u.grid)
    check_resolution(rho.grid, omega, lame)
    if not np.any(rho.values):
        return VectorField3C.zeros(rho.grid)
    return get_operator(rho.grid, omega, lame).apply(rho, u)


def apply_K_direct(rho: PotentialRealization, u: VectorField3C, omega: float, lame: LameParameters) -> VectorField3C:
    """O(N^2) reference for :func:`apply_K` with the same self-cell rule."""
    grid = rho.grid
    _same_grid(grid, u.grid)
    pts = grid.points().reshape(-1, 3)
    f = (rho.values[None] * u.values).reshape(3, -1).T
    sc = self_cell(grid.h, omega, lame)
    out = np.empty_like(f)
    for i, x in enumerate(pts):
        d = x - pts
        d[i] = 1.0  # placeholder, overwritten below
        T = green_tensor_offset(d, omega, lame) * grid.cell_volume
        T[i] = sc
        out[i] = np.einsum("kab,kb->a", T, f)
    return VectorField3C(grid, out.T.reshape((3,) + grid.shape))


# ---------------------------------------------------------------------------
# Born series and full solve


def born_series(
    rho: PotentialRealization,
    wave: PlaneWave,
    lame: LameParameters,
    J_max: int = 6,
    tol: float = 1e-8,
):
    """Terms ``u_0 = u_inc``, ``u_j = -K u_{j-1}`` until ``|u_j| < tol |u_0|`` or ``j = J_max``."""
    t0 = time.perf_counter()
    grid = rho.grid
    u0 = evaluate_incident(wave, grid, lame)
    terms = [u0]
    report = SolveReport(born_terms_used=1)
    if not np.any(rho.values):
        report.wall_time = time.perf_counter() - t0
        return terms, report
    op = get_operator(grid, wave.omega, lame)
    n0 = u0.norm()
    norms = [n0]
    growth = 0
    for j in range(1, J_max + 1):
        uj = op.apply(rho, terms[-1]) * -1.0
        terms.append(uj)
        norms.append(uj.norm())
        report.history.append(norms[-1] / n0)
        growth = growth + 1 if norms[-1] > norms[-2] else 0
        log.debug(kv(event="born", omega=wave.omega, j=j, ratio=norms[-1] / n0))
        if growth >= 3:
            report.converged = False
            report.born_terms_used = len(terms)
            report.wall_time = time.perf_counter() - t0
            raise BornSeriesDiverged(
                f"Born series diverging at omega={wave.omega}: term norms grew for 3 consecutive orders",
                terms,
                report,
            )
        if norms[-1] < tol * n0:
            break
    report.born_terms_used = len(terms)
    report.residual = norms[-1] / n0
    report.converged = norms[-1] < tol * n0
    report.wall_time = time.perf_counter() - t0
    return terms, report


def lippmann_residual(rho, u: VectorField3C, wave: PlaneWave, lame: LameParameters) -> float:
    uinc = evaluate_incident(wave, rho.grid, lame)
    r = u + apply_K(rho, u, wave.omega, lame) - uinc
    return r.norm() / uinc.norm()


def solve_full(
    rho: PotentialRealization,
    wave: PlaneWave,
    lame: LameParameters,
    tol: float = 1e-8,
    max_iter: int = 300,
    restart: int = 30,
):
    """Solve ``(I + K) u = u_inc`` by restarted GMRES."""
    t0 = time.perf_counter()
    grid = rho.grid
    uinc = evaluate_incident(wave, grid, lame)
    if not np.any(rho.values):
        return uinc, SolveReport(iterations=0, residual=0.0, wall_time=time.perf_counter() - t0)
    op = get_operator(grid, wave.omega, lame)
    f = rho.values[None]
    shape = (3,) + grid.shape
    N = 3 * grid.n**3

    def matvec(v):
        v = v.reshape(shape)
        return (v + op.convolve(f * v)).ravel()

    A = LinearOperator((N, N), matvec=matvec, dtype=complex)
    history: list[float] = []
    b = uinc.values.ravel()
    restart = max(1, min(restart, max_iter))
    x, info = gmres(
        A,
        b,
        rtol=tol,
        atol=0.0,
        restart=restart,
        maxiter=max(1, -(-max_iter // restart)),
        callback=history.append,
        callback_type="pr_norm",
    )
    u = VectorField3C(grid, x.reshape(shape))
    res = float(np.linalg.norm(matvec(x) - b) / np.linalg.norm(b))
    report = SolveReport(
        iterations=len(history),
        residual=res,
        wall_time=time.perf_counter() - t0,
        converged=res <= tol,
        history=[float(h) for h in history],
    )
    log.info(kv(event="solve", omega=wave.omega, kind=wave.kind, iterations=report.iterations, residual=res, seconds=report.wall_time))
    if not report.converged:
        raise SolverError(
            f"GMRES did not reach tol={tol:g} within {max_iter} iterations (best residual {res:.3e}, info={info})",
            u,
            report,
        )
    return u, report


# ---------------------------------------------------------------------------
# far field and scattered field


def _support(rho: PotentialRealization):
    idx = np.nonzero(rho.values)
    pts = np.stack([rho.grid.axis(a)[idx[a]] for a in range(3)], axis=-1)
    return idx, pts


def far_field_moments(rho, u: VectorField3C, omega: float, lame: LameParameters, x_hat):
    """``h^3 sum e^{-i k x_hat.z} rho(z) u(z)`` for ``k`` = kappa_p and kappa_s."""
    idx, pts = _support(rho)
    if len(pts) == 0:
        return np.zeros(3, complex), np.zeros(3, complex)
    f = rho.values[idx][:, None] * u.values[(slice(None),) + idx].T
    proj = pts @ x_hat
    h3 = rho.grid.cell_volume
    mp = np.exp(-1j * lame.kappa_p(omega) * proj) @ f * h3
    ms = np.exp(-1j * lame.kappa_s(omega) * proj) @ f * h3
    return mp, ms


def far_field(rho, u: VectorField3C, omega: float, lame: LameParameters, x_hat, theta=None, order_tag: str = "full") -> FarFieldRecord:
    """Compressional and shear far-field patterns of ``u_sc = -K u``."""
    x_hat = unit(x_hat)
    _same_grid(rho.grid, u.grid)
    mp, ms = far_field_moments(rho, u, omega, lame, x_hat)
    proj = np.outer(x_hat, x_hat)
    up = -lame.c_p**2 / (4 * np.pi) * proj @ mp
    us = -lame.c_s**2 / (4 * np.pi) * (np.eye(3) - proj) @ ms
    th = np.full(3, np.nan) if theta is None else np.asarray(theta, dtype=float)
    return FarFieldRecord(th, x_hat, float(omega), up, us, order_tag)


def scattered_field_at(rho, u: VectorField3C, omega: float, lame: LameParameters, points) -> np.ndarray:
    """``-h^3 sum_z G(x, z) rho(z) u(z)`` at points away from the support."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx, pts = _support(rho)
    out = np.zeros((len(points), 3), dtype=complex)
    if len(pts) == 0:
        return out
    f = rho.values[idx][:, None] * u.values[(slice(None),) + idx].T
    for i, x in enumerate(points):
        d = x - pts
        r = np.linalg.norm(d, axis=-1)
        if r.min() <= 2 * rho.grid.h:
            raise ValueError(f"evaluation point {x} lies within 2h of the potential's support")
        a, b = green_coefficients(r, omega, lame)
        out[i] = -(a @ f + (b[:, None] * d * np.einsum("ka,ka->k", d, f)[:, None]).sum(0)) * rho.grid.cell_volume
    return out


# ---------------------------------------------------------------------------
# first-order backscatter fast path


def ray_transform(grid: Grid3, values: np.ndarray, direction, ks, chunk: int = 256) -> np.ndarray:
    """``h^3 sum f(x) exp(-i k direction.x)`` for each scalar ``k`` in ``ks``.

    Separable evaluation on the bounding box of ``supp f``: one matrix product
    per axis, ``O(N_box * len(ks))``.
    """
    direction = np.asarray(direction, dtype=float)
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    nz = np.nonzero(values)
    if nz[0].size == 0:
        return np.zeros(len(ks), dtype=complex)
    lo = [int(a.min()) for a in nz]
    hi = [int(a.max()) + 1 for a in nz]
    box = values[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    ax = [grid.axis(a)[lo[a] : hi[a]] for a in range(3)]
    out = np.empty(len(ks), dtype=complex)
    for s in range(0, len(ks), chunk):
        kc = ks[s : s + chunk]
        e = [np.exp(-1j * np.outer(kc, direction[a] * ax[a])) for a in range(3)]
        t = box @ e[2].T  # (nx, ny, K)
        t = np.einsum("xyk,ky->xk", t, e[1])
        out[s : s + chunk] = np.einsum("xk,kx->k", t, e[0])
    return out * grid.cell_volume


def born1_backscatter(rho: PotentialRealization, theta, omegas, lame: LameParameters, kind: str = "P", theta_perp=None) -> np.ndarray:
    """First-order backscattered pattern ``u_1^inf(-theta, omega)`` for each omega, shape ``(K, 3)``.

    Equals :func:`far_field` applied to the incident wave, but needs only the
    transform of ``rho`` along the backscatter ray.
    """
    theta = unit(theta)
    omegas = np.asarray(omegas, dtype=float)
    if kind == "P":
        c, pol = lame.c_p, theta
    elif kind == "S":
        c = lame.c_s
        pol = perpendicular(theta) if theta_perp is None else unit(theta_perp)
    else:
        raise ValueError(f"kind must be 'P' or 'S', got {kind!r}")
    rhat = ray_transform(rho.grid, rho.values, theta, -2 * c * omegas)
    return -(c**2) / (4 * np.pi) * rhat[:, None] * pol[None, :]
