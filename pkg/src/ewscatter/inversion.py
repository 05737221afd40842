"""Frequency-band correlation estimator, its ensemble counterpart and recovery of the strength.

For backscatter data ``u(omega) = u^inf(-theta, omega, theta)`` the estimator

    (1/Q) int_Q^{2Q} omega^m u(omega) . conj(u(omega + tau)) domega

tends to ``C phi_hat(2 c tau theta)`` for a single realization as ``Q`` grows,
with ``C = 2^{-m-4} pi^{-2} c^{4-m}``. Sampling ``tau`` along many directions
gives ``phi_hat`` on polar rays, which :func:`reconstruct_strength` inverts.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import SphericalVoronoi

from .greens import LameParameters
from .lippmann import (
    PlaneWave,
    FarFieldRecord,
    born1_backscatter,
    far_field,
    kv,
    perpendicular,
    solve_full,
    unit,
)
from .randfield import Grid3, RandomFieldSpec, StrengthField, sample_potential

log = logging.getLogger(__name__)

M_MIN, M_MAX = 14 / 5, 3.0
MIN_RAYS = 32
MIN_REALIZATIONS = 100
IMAG_TOLERANCE = 0.10


class InversionError(ValueError):
    pass


def _kind_speed(kind: str, lame: LameParameters) -> float:
    if kind == "P":
        return lame.c_p
    if kind == "S":
        return lame.c_s
    raise InversionError(f"kind must be 'P' or 'S', got {kind!r}")


def inversion_constants(m: float, lame: LameParameters) -> tuple[float, float]:
    if not M_MIN < m <= M_MAX:
        raise InversionError(f"order m={m} outside the admissible interval (14/5, 3]")
    base = 2.0 ** (-m - 4) / np.pi**2
    return base * lame.c_p ** (4 - m), base * lame.c_s ** (4 - m)


# ---------------------------------------------------------------------------
# sweeps and the band estimator


@dataclass
class FrequencySweep:
    """Backscatter far-field patterns on a uniform frequency lattice for one incidence direction."""

    theta: np.ndarray
    omegas: np.ndarray
    uinf_p: np.ndarray
    uinf_s: np.ndarray
    order_tag: str = "born-1"
    lame: LameParameters | None = None

    def __post_init__(self):
        self.theta = unit(self.theta)
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.uinf_p = np.asarray(self.uinf_p, dtype=complex).reshape(len(self.omegas), 3)
        self.uinf_s = np.asarray(self.uinf_s, dtype=complex).reshape(len(self.omegas), 3)
        if len(self.omegas) < 2:
            raise InversionError("a sweep needs at least two frequencies")
        steps = np.diff(self.omegas)
        if np.any(steps <= 0):
            raise InversionError("sweep frequencies must be strictly increasing")
        if np.ptp(steps) > 1e-9 * steps.mean():
            raise InversionError("sweep frequencies must be uniformly spaced")

    @property
    def delta(self) -> float:
        return float((self.omegas[-1] - self.omegas[0]) / (len(self.omegas) - 1))

    def index_of(self, omega: float) -> int:
        k = (omega - self.omegas[0]) / self.delta
        j = int(round(k))
        if abs(k - j) > 1e-6 or not 0 <= j < len(self.omegas):
            raise InversionError(f"frequency {omega} is not on the sweep lattice [{self.omegas[0]}, {self.omegas[-1]}] step {self.delta}")
        return j

    def pattern(self, kind: str) -> np.ndarray:
        if kind == "P":
            return self.uinf_p
        if kind == "S":
            return self.uinf_s
        raise InversionError(f"kind must be 'P' or 'S', got {kind!r}")

    def records(self) -> list[FarFieldRecord]:
        return [
            FarFieldRecord(self.theta, -self.theta, float(w), self.uinf_p[k], self.uinf_s[k], self.order_tag)
            for k, w in enumerate(self.omegas)
        ]

    @classmethod
    def from_records(cls, records, lame=None) -> "FrequencySweep":
        records = sorted(records, key=lambda r: r.omega)
        tags = {r.order_tag for r in records}
        if len(tags) != 1:
            raise InversionError(f"records mix order tags {sorted(tags)}")
        theta = records[0].theta
        return cls(
            theta,
            [r.omega for r in records],
            [r.uinf_p for r in records],
            [r.uinf_s for r in records],
            tags.pop(),
            lame,
        )

    def scaled(self, a: complex) -> "FrequencySweep":
        return FrequencySweep(self.theta, self.omegas, a * self.uinf_p, a * self.uinf_s, self.order_tag, self.lame)


def band_lattice(Q: float, tau_max: float, nodes_per_band: int = 64, doublings: int = 0) -> np.ndarray:
    """Uniform lattice covering ``[Q, 2^(doublings+1) Q + tau_max]`` with ``nodes_per_band`` steps over ``[Q, 2Q]``."""
    if Q <= 0 or nodes_per_band < 1:
        raise InversionError("need Q > 0 and a positive node count")
    d = Q / nodes_per_band
    top = 2 ** (doublings + 1) * Q + tau_max
    n = int(np.ceil((top - Q) / d - 1e-9))
    return Q + d * np.arange(n + 1)


def correlation_integrand(sweep: FrequencySweep, tau: float, m: float, kind: str, Q: float):
    """Lattice frequencies and ``omega^m u(omega) . conj(u(omega + tau))`` over ``[Q, 2Q]``."""
    if tau < 0:
        raise InversionError("tau must be nonnegative")
    shift = tau / sweep.delta
    s = int(round(shift))
    if abs(shift - s) > 1e-6:
        raise InversionError(f"tau={tau} is not a multiple of the lattice step {sweep.delta}")
    i0 = sweep.index_of(Q)
    i1 = sweep.index_of(2 * Q)
    if i1 + s >= len(sweep.omegas):
        raise InversionError(f"sweep ends at {sweep.omegas[-1]} but [Q, 2Q+tau] needs {2 * Q + tau}")
    u = sweep.pattern(kind)
    w = sweep.omegas[i0 : i1 + 1]
    a = u[i0 : i1 + 1]
    b = u[i0 + s : i1 + 1 + s]
    return w, w**m * np.einsum("ka,ka->k", a, b.conj())


def correlation_estimate(sweep: FrequencySweep, tau: float, m: float, kind: str, Q: float) -> complex:
    w, f = correlation_integrand(sweep, tau, m, kind, Q)
    val = np.trapezoid(f, w) / Q
    return complex(val.real, 0.0) if tau == 0 else complex(val)


@dataclass
class CorrelationCurve:
    kind: str
    theta: np.ndarray
    Q: float
    taus: np.ndarray
    values: np.ndarray
    m: float
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.theta = unit(self.theta)
        self.taus = np.asarray(self.taus, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.taus.shape:
            raise InversionError("one value per tau is required")
        if self.stderr is None:
            self.stderr = np.full(self.taus.shape, np.nan)


def correlation_curve(sweep: FrequencySweep, taus, m: float, kind: str, Q: float) -> CorrelationCurve:
    vals = [correlation_estimate(sweep, t, m, kind, Q) for t in taus]
    return CorrelationCurve(kind, sweep.theta, Q, np.asarray(taus, float), np.asarray(vals), m)


# ---------------------------------------------------------------------------
# sweep generation


def born1_sweep(rho, theta, omegas, lame: LameParameters, theta_perp=None) -> FrequencySweep:
    up = born1_backscatter(rho, theta, omegas, lame, "P")
    us = born1_backscatter(rho, theta, omegas, lame, "S", theta_perp)
    return FrequencySweep(theta, omegas, up, us, "born-1", lame)


ORDER_SWEEP_TAGS = ("born-1", "born-2", "born-tail", "full")


def orders_at(rho, theta, omega: float, lame: LameParameters, kinds=("P", "S"), tol=1e-8, max_iter=300, theta_perp=None):
    """Backscatter patterns ``{tag: (uinf_p, uinf_s)}`` at one frequency.

    ``u_j^inf = F(rho u_{j-1})`` with ``u_1 = -K u_inc``; the tail is the full
    pattern minus the first two orders, which avoids summing the series.
    Patterns of a polarization not in ``kinds`` are NaN.
    """
    from .lippmann import apply_K, evaluate_incident

    theta = unit(theta)
    tp = perpendicular(theta) if theta_perp is None else unit(theta_perp)
    out = {t: [np.full(3, np.nan + 0j), np.full(3, np.nan + 0j)] for t in ORDER_SWEEP_TAGS}
    for slot, kind in enumerate(("P", "S")):
        if kind not in kinds:
            continue
        wave = PlaneWave(kind, tuple(theta), float(omega), tuple(tp) if kind == "S" else None)
        u0 = evaluate_incident(wave, rho.grid, lame)
        u1 = apply_K(rho, u0, omega, lame) * -1.0
        u, rep = solve_full(rho, wave, lame, tol=tol, max_iter=max_iter)
        pick = (lambda r: r.uinf_p) if kind == "P" else (lambda r: r.uinf_s)
        r1 = pick(far_field(rho, u0, omega, lame, -theta, theta))
        r2 = pick(far_field(rho, u1, omega, lame, -theta, theta))
        rf = pick(far_field(rho, u, omega, lame, -theta, theta))
        out["born-1"][slot], out["born-2"][slot], out["full"][slot] = r1, r2, rf
        out["born-tail"][slot] = rf - r1 - r2
        log.info(kv(event="orders", omega=float(omega), kind=kind, iterations=rep.iterations))
    return {t: tuple(v) for t, v in out.items()}


def order_sweeps(rho, theta, omegas, lame: LameParameters, tol=1e-8, max_iter=300, theta_perp=None, kinds=("P", "S")):
    """Sweeps at every order tag, one full solve per frequency and polarization."""
    per = [orders_at(rho, theta, w, lame, kinds, tol, max_iter, theta_perp) for w in omegas]
    return {
        t: FrequencySweep(theta, omegas, [p[t][0] for p in per], [p[t][1] for p in per], t, lame)
        for t in ORDER_SWEEP_TAGS
    }


# ---------------------------------------------------------------------------
# ensemble expectation


def jackknife_mean(samples: np.ndarray) -> tuple[complex, float]:
    """Mean and leave-one-out jackknife standard error (complex modulus)."""
    x = np.asarray(samples)
    n = len(x)
    loo = (x.sum(0) - x) / (n - 1)
    mean = x.mean(0)
    se = np.sqrt((n - 1) / n * np.sum(np.abs(loo - loo.mean(0)) ** 2, axis=0))
    return mean, se


@dataclass
class MonteCarloReport:
    estimate: np.ndarray
    stderr: np.ndarray
    N: int
    warnings: list = field(default_factory=list)


def expectation_correlation_mc(
    spec: RandomFieldSpec,
    theta,
    omega: float,
    tau,
    lame: LameParameters,
    N: int,
    order_tag: str = "born-1",
    kind: str = "P",
):
    """Ensemble mean of ``u(-theta, omega) . conj(u(-theta, omega + tau))`` over realizations ``0..N-1``.

    ``tau`` may be a scalar or an array. Returns ``(estimate, stderr)`` with the
    same shape as ``tau``.
    """
    if order_tag not in ("born-1", "full"):
        raise InversionError(f"order tag {order_tag!r} not supported here; use born-1 or full")
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    if N < 2:
        raise InversionError("need at least two realizations")
    if N < MIN_REALIZATIONS:
        warnings.warn(f"N={N} realizations is below the recommended {MIN_REALIZATIONS}", RuntimeWarning, stacklevel=2)
    theta = unit(theta)
    omegas = np.concatenate([[omega], omega + taus])
    prods = np.empty((N, len(taus)), dtype=complex)
    for i in range(N):
        rho = sample_potential(spec.with_realization(spec.realization_index + i))
        if order_tag == "born-1":
            u = born1_backscatter(rho, theta, omegas, lame, kind)
        else:
            u = np.stack([_full_backscatter(rho, theta, w, lame, kind) for w in omegas])
        prods[i] = u[1:].conj() @ u[0]
    est, se = jackknife_mean(prods)
    if np.isscalar(tau) or np.ndim(tau) == 0:
        return complex(est[0]), float(se[0])
    return est, se


def _full_backscatter(rho, theta, omega, lame, kind):
    wave = PlaneWave(kind, tuple(theta), float(omega))
    u, _ = solve_full(rho, wave, lame)
    rec = far_field(rho, u, omega, lame, -np.asarray(theta), theta)
    return rec.uinf_p if kind == "P" else rec.uinf_s


# ---------------------------------------------------------------------------
# negligibility of higher orders


@dataclass
class DecayReport:
    Qs: np.ndarray
    A: dict
    ratio_2: np.ndarray
    ratio_tail: np.ndarray
    monotone_2: bool
    monotone_tail: bool
    stabilization: float


def band_energy(sweep: FrequencySweep, m: float, kind: str, Q: float) -> float:
    return correlation_estimate(sweep, 0.0, m, kind, Q).real


def negligibility_diagnostics(sweeps: dict, m: float, Q: float, kind: str = "P", doublings: int = 2) -> DecayReport:
    """``A_j(Q') = (1/Q') int_{Q'}^{2Q'} omega^m |u_j|^2`` at ``Q' = Q, 2Q, 4Q``."""
    needed = ("born-1", "born-2", "born-tail")
    missing = [t for t in needed if t not in sweeps]
    if missing:
        raise InversionError(f"missing sweeps for order tags {missing}")
    ref = sweeps["born-1"]
    for t in needed:
        if not np.allclose(sweeps[t].omegas, ref.omegas) or not np.allclose(sweeps[t].theta, ref.theta):
            raise InversionError("sweeps must share the frequency lattice and incidence direction")
    Qs = Q * 2.0 ** np.arange(doublings + 1)
    A = {t: np.array([band_energy(sweeps[t], m, kind, q) for q in Qs]) for t in needed}
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = A["born-2"] / A["born-1"]
        rt = A["born-tail"] / A["born-1"]
    stab = abs(A["born-1"][-1] / A["born-1"][0] - 1) if A["born-1"][0] > 0 else 0.0
    return DecayReport(
        Qs,
        A,
        r2,
        rt,
        bool(np.all(np.diff(r2) < 0)),
        bool(np.all(np.diff(rt) < 0)),
        float(stab),
    )


# ---------------------------------------------------------------------------
# direction sets


def fibonacci_hemisphere(n: int) -> np.ndarray:
    """``n`` quasi-uniform unit vectors with positive z component."""
    i = np.arange(n) + 0.5
    z = 1 - i / n
    az = np.pi * (1 + np.sqrt(5)) * i
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(az), s * np.sin(az), z], axis=-1)


def relaxed_hemisphere(n: int, iterations: int = 3400, step: float = 1e-3) -> np.ndarray:
    """Fibonacci hemisphere relaxed under inverse-square repulsion of the antipodal set ``{d, -d}``.

    Deterministic. The relaxed set spreads the 2n antipodal directions more
    evenly than the plain spiral, which lowers angular aliasing in the
    polar Fourier inversion.
    """
    d = fibonacci_hemisphere(n)
    for _ in range(iterations):
        full = np.concatenate([d, -d])
        diff = d[:, None, :] - full[None, :, :]
        r = np.linalg.norm(diff, axis=-1)
        r[r == 0] = np.inf
        f = (diff / r[..., None] ** 3).sum(axis=1)
        f -= (f * d).sum(axis=1, keepdims=True) * d
        fmax = np.abs(f).max()
        if fmax < 1e-14:
            break
        d = d + step * f / fmax
        d /= np.linalg.norm(d, axis=1, keepdims=True)
    d *= np.where(d[:, 2:3] < 0, -1.0, 1.0)
    return d


def direction_weights(directions: np.ndarray) -> np.ndarray:
    """Spherical Voronoi cell areas of a set of unit vectors (they sum to 4 pi)."""
    return SphericalVoronoi(np.asarray(directions, dtype=float)).calculate_areas()


# ---------------------------------------------------------------------------
# recovery of phi


@dataclass
class StrengthEstimate:
    """``phi_hat`` on polar rays ``xi = t * direction``.

    ``values[k, j]`` belongs to ``directions[k]`` and radius ``radii[j]``.
    """

    directions: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None
    kind: str = "P"
    phi: StrengthField | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.directions), len(self.radii)):
            raise InversionError("values must have shape (directions, radii)")

    @property
    def points(self) -> np.ndarray:
        return self.directions[:, None, :] * self.radii[None, :, None]

    def origin_value(self) -> complex:
        if self.radii[0] != 0:
            raise InversionError("no sample at the origin")
        return complex(self.values[:, 0].mean())


def recover_phi_hat(curves, lame: LameParameters, m: float) -> StrengthEstimate:
    """``phi_hat(2 c tau theta) = curve(tau) / C`` for each curve."""
    curves = list(curves)
    if not curves:
        raise InversionError("no curves given")
    kinds = {c.kind for c in curves}
    if len(kinds) != 1:
        raise InversionError("curves mix polarizations")
    kind = kinds.pop()
    for c in curves:
        if abs(c.m - m) > 1e-12:
            raise InversionError(f"curve weighted with m={c.m} but recovery requested m={m}")
        if not np.allclose(c.taus, curves[0].taus):
            raise InversionError("all curves must share the tau grid")
    C = inversion_constants(m, lame)[0 if kind == "P" else 1]
    speed = _kind_speed(kind, lame)
    values = np.stack([c.values for c in curves]) / C
    stderr = np.stack([c.stderr for c in curves]) / C
    return StrengthEstimate(
        np.stack([c.theta for c in curves]),
        2 * speed * curves[0].taus,
        values,
        stderr,
        kind,
        diagnostics={"C": C, "m": m},
    )


def hermitian_fill(estimate: StrengthEstimate) -> StrengthEstimate:
    """Append the antipodal rays with ``phi_hat(-xi) = conj(phi_hat(xi))``."""
    return StrengthEstimate(
        np.concatenate([estimate.directions, -estimate.directions]),
        estimate.radii,
        np.concatenate([estimate.values, estimate.values.conj()]),
        None if estimate.stderr is None else np.concatenate([estimate.stderr, estimate.stderr]),
        estimate.kind,
        diagnostics=dict(estimate.diagnostics),
    )


def radial_window(radii: np.ndarray, taper_start: float) -> np.ndarray:
    """``cos^2`` roll-off from ``taper_start * max(radii)`` to zero at ``max(radii)``."""
    top = radii[-1]
    if taper_start >= 1:
        return np.ones_like(radii)
    s = np.clip((radii - taper_start * top) / ((1 - taper_start) * top), 0, 1)
    return np.cos(np.pi * s / 2) ** 2


def reconstruct_strength(
    estimate: StrengthEstimate,
    target_grid: Grid3,
    hermitian: bool = True,
    taper_start: float = 0.25,
    chunk: int = 512,
) -> StrengthEstimate:
    """Polar-quadrature inverse transform of ``phi_hat`` onto ``target_grid``.

    Weights are Voronoi areas over the full direction set times the radial
    trapezoid rule with Jacobian ``t^2``, times a ``cos^2`` taper from
    ``taper_start`` of the cutoff. The result is returned on a copy of
    ``estimate`` with ``phi`` set; negative values are counted, not clipped.
    """
    if len(estimate.directions) < MIN_RAYS // (2 if hermitian else 1):
        raise InversionError(
            f"{len(estimate.directions)} rays is below the minimum coverage ({MIN_RAYS} rays in total)"
        )
    if len(estimate.radii) < 2 or estimate.radii[0] != 0 or np.any(np.diff(estimate.radii) <= 0):
        raise InversionError("radii must start at 0 and increase")
    full = hermitian_fill(estimate) if hermitian else estimate
    wdir = direction_weights(full.directions)
    t = full.radii
    wt = np.zeros_like(t)
    dt = np.diff(t)
    wt[:-1] += dt / 2
    wt[1:] += dt / 2
    wt *= t**2 * radial_window(t, taper_start)
    w = (wdir[:, None] * wt[None, :]).ravel()
    xi = full.points.reshape(-1, 3)
    fw = full.values.ravel() * w
    keep = fw != 0
    xi, fw = xi[keep], fw[keep]
    pts = target_grid.points().reshape(-1, 3)
    rec = np.zeros(len(pts), dtype=complex)
    for s in range(0, len(xi), chunk):
        rec += np.exp(1j * (pts @ xi[s : s + chunk].T)) @ fw[s : s + chunk]
    rec /= (2 * np.pi) ** 3
    re_max = np.abs(rec.real).max()
    im_max = np.abs(rec.imag).max()
    if re_max > 0 and im_max > IMAG_TOLERANCE * re_max:
        raise InversionError(f"reconstruction imaginary part {im_max:.3g} exceeds 10% of real maximum {re_max:.3g}")
    vals = rec.real.reshape(target_grid.shape)
    out = StrengthEstimate(
        estimate.directions, estimate.radii, estimate.values, estimate.stderr, estimate.kind,
        diagnostics=dict(estimate.diagnostics),
    )
    out.phi = StrengthField(target_grid, vals, estimated=True)
    out.diagnostics.update(
        negative_nodes=int((vals < 0).sum()),
        negative_min=float(min(vals.min(), 0.0)),
        imag_ratio=float(im_max / re_max) if re_max > 0 else 0.0,
    )
    if out.diagnostics["negative_nodes"]:
        log.info(kv(event="reconstruct", negative_nodes=out.diagnostics["negative_nodes"], negative_min=out.diagnostics["negative_min"]))
    return out


def relative_l2(estimate: np.ndarray, truth: np.ndarray) -> float:
    return float(np.linalg.norm(estimate - truth) / np.linalg.norm(truth))
