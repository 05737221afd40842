"""Elastic Green tensor of the homogeneous isotropic solid and its far-field form."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# below this value of kappa_s * r the beta factor is evaluated by its Taylor series
BETA_TAYLOR_THRESHOLD = 1e-3

UNIT_CUBE_INV_R = 3 * np.log(2 + np.sqrt(3)) - np.pi / 2
"""``int_{[-1/2,1/2]^3} dx / |x|``."""


class GreenError(ValueError):
    pass


@dataclass(frozen=True)
class LameParameters:
    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise GreenError(f"mu must be positive, got {self.mu}")
        if not self.lam + 2 * self.mu > 0:
            raise GreenError(f"lambda + 2 mu must be positive, got {self.lam + 2 * self.mu}")

    @property
    def c_p(self) -> float:
        return (self.lam + 2 * self.mu) ** -0.5

    @property
    def c_s(self) -> float:
        return self.mu**-0.5

    def kappa_p(self, omega: float) -> float:
        return self.c_p * omega

    def kappa_s(self, omega: float) -> float:
        return self.c_s * omega

    def shear_wavelength(self, omega: float) -> float:
        return 2 * np.pi / self.kappa_s(omega)


def _offsets(x, z) -> np.ndarray:
    d = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    if d.shape[-1] != 3:
        raise GreenError("points must be 3-vectors")
    return d


def helmholtz_fundamental(x, z, kappa: float):
    r = np.linalg.norm(_offsets(x, z), axis=-1)
    if np.any(r == 0):
        raise GreenError("Helmholtz fundamental solution is singular at x = z")
    return np.exp(1j * kappa * r) / (4 * np.pi * r)


def beta_taylor(r, omega: float, lame: LameParameters):
    """Series of the beta factor through ``r**4``; ``e^x (x - 1) = -1 + x^2/2 + x^3/3 + x^4/8 + ...``."""
    r = np.asarray(r, dtype=float)
    ks, kp = lame.kappa_s(omega), lame.kappa_p(omega)
    return (
        -0.5 * (ks**2 - kp**2) * r**2
        - 1j / 3 * (ks**3 - kp**3) * r**3
        + 0.125 * (ks**4 - kp**4) * r**4
    )


def beta_factor(r, omega: float, lame: LameParameters):
    """``e^{i ks r}(i ks r - 1) - e^{i kp r}(i kp r - 1)``, cancellation-free near r = 0."""
    r = np.asarray(r, dtype=float)
    small = lame.kappa_s(omega) * r < BETA_TAYLOR_THRESHOLD
    out = np.empty(r.shape, dtype=complex)
    out[~small] = beta_direct(r[~small], omega, lame)
    out[small] = beta_taylor(r[small], omega, lame)
    return out


def beta_direct(r, omega: float, lame: LameParameters):
    r = np.asarray(r, dtype=float)
    ks, kp = lame.kappa_s(omega), lame.kappa_p(omega)
    return np.exp(1j * ks * r) * (1j * ks * r - 1) - np.exp(1j * kp * r) * (1j * kp * r - 1)


def _check(omega, lame, r):
    if omega <= 0:
        raise GreenError(f"frequency must be positive, got {omega}")
    if np.isclose(lame.c_p, lame.c_s, rtol=1e-12, atol=0):
        raise GreenError("c_p == c_s (lambda == -mu) is a degenerate solid")
    if np.any(r == 0):
        raise GreenError("Green tensor is singular at x = z")


def green_parts_offset(d, omega: float, lame: LameParameters):
    """Three-part split of the Green tensor at offsets ``d = x - z``, shape ``(..., 3)``."""
    d = np.asarray(d, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    _check(omega, lame, r)
    cp2, cs2 = lame.c_p**2, lame.c_s**2
    ks, kp = lame.kappa_s(omega), lame.kappa_p(omega)
    es, ep = np.exp(1j * ks * r), np.exp(1j * kp * r)
    dd = d[..., :, None] * d[..., None, :]
    eye = np.eye(3)
    r_ = r[..., None, None]
    g1 = (cs2 / (4 * np.pi) * es / r)[..., None, None] * eye
    g2 = ((cp2 * ep - cs2 * es) / (4 * np.pi))[..., None, None] * dd / r_**3
    beta = beta_factor(r, omega, lame)
    g3 = (beta / (4 * np.pi * omega**2))[..., None, None] * (r_**2 * eye - 3 * dd) / r_**5
    return g1, g2, g3


def green_coefficients(r, omega: float, lame: LameParameters):
    """Scalars ``(A, B)`` with ``G = A I + B d d^T`` at distance ``r > 0``.

    Same three-part split, collapsed so large tables need no 3x3 temporaries.
    """
    r = np.asarray(r, dtype=float)
    _check(omega, lame, r)
    cp2, cs2 = lame.c_p**2, lame.c_s**2
    ks, kp = lame.kappa_s(omega), lame.kappa_p(omega)
    es, ep = np.exp(1j * ks * r), np.exp(1j * kp * r)
    beta = beta_factor(r, omega, lame) / (4 * np.pi * omega**2)
    a = cs2 * es / (4 * np.pi * r) + beta / r**3
    b = (cp2 * ep - cs2 * es) / (4 * np.pi * r**3) - 3 * beta / r**5
    return a, b


def green_tensor_offset(d, omega: float, lame: LameParameters):
    g1, g2, g3 = green_parts_offset(d, omega, lame)
    return g1 + g2 + g3


def green_tensor(x, z, omega: float, lame: LameParameters):
    return green_tensor_offset(_offsets(x, z), omega, lame)


def green_tensor_parts(x, z, omega: float, lame: LameParameters):
    return green_parts_offset(_offsets(x, z), omega, lame)


def green_tensor_hessian_form(x, z, omega: float, lame: LameParameters):
    """``Phi_s I / mu + (Hess Phi_s - Hess Phi_p) / omega^2`` with the Hessian written out.

    Evaluated without any cancellation guard; used as an independent check on
    the split form away from the origin.
    """
    d = _offsets(x, z)
    r = np.linalg.norm(d, axis=-1)[..., None, None]
    xx = d[..., :, None] * d[..., None, :] / r**2
    eye = np.eye(3)

    def hess(k):
        e = np.exp(1j * k * r) / (4 * np.pi * r**3)
        return e * (-(k**2) * r**2 * xx + (1j * k * r - 1) * (eye - 3 * xx))

    ks, kp = lame.kappa_s(omega), lame.kappa_p(omega)
    phis = np.exp(1j * ks * r) / (4 * np.pi * r)
    return phis * eye / lame.mu + (hess(ks) - hess(kp)) / omega**2


def static_kernel(d, lame: LameParameters):
    """Leading ``1/r`` part of the Green tensor as ``r -> 0`` (Kelvin form)."""
    d = np.asarray(d, dtype=float)
    r = np.linalg.norm(d, axis=-1)[..., None, None]
    cp2, cs2 = lame.c_p**2, lame.c_s**2
    dd = d[..., :, None] * d[..., None, :]
    return ((cp2 + cs2) * np.eye(3) + (cs2 - cp2) * dd / r**2) / (8 * np.pi * r)


def regular_limit(omega: float, lame: LameParameters) -> np.ndarray:
    """``lim_{r->0} (G - static_kernel)``, which is isotropic."""
    return 1j * omega * (2 * lame.c_s**3 + lame.c_p**3) / (12 * np.pi) * np.eye(3)


def self_cell(h: float, omega: float, lame: LameParameters) -> np.ndarray:
    """Integral of the Green tensor over the cube of side ``h`` centred at the source.

    The static part is integrated exactly; the smooth remainder contributes its
    value at the centre times the cell volume.
    """
    cp2, cs2 = lame.c_p**2, lame.c_s**2
    static = h**2 * UNIT_CUBE_INV_R * ((cp2 + cs2) + (cs2 - cp2) / 3) / (8 * np.pi)
    return static * np.eye(3) + h**3 * regular_limit(omega, lame)


def _unit(x_hat, tol=1e-12):
    x_hat = np.asarray(x_hat, dtype=float)
    if abs(np.linalg.norm(x_hat) - 1) > tol:
        raise GreenError(f"direction must be a unit vector, |x_hat| = {np.linalg.norm(x_hat)}")
    return x_hat


def farfield_kernel(x_hat, z, omega: float, lame: LameParameters):
    """P and S far-field kernels: ``G(R x_hat, z) ~ e^{i kp R}/R P + e^{i ks R}/R S``."""
    x_hat = _unit(x_hat)
    z = np.asarray(z, dtype=float)
    proj = np.outer(x_hat, x_hat)
    ph_p = np.exp(-1j * lame.kappa_p(omega) * (z @ x_hat))
    ph_s = np.exp(-1j * lame.kappa_s(omega) * (z @ x_hat))
    p = lame.c_p**2 / (4 * np.pi) * ph_p[..., None, None] * proj
    s = lame.c_s**2 / (4 * np.pi) * ph_s[..., None, None] * (np.eye(3) - proj)
    return p, s


def farfield_remainder(x_hat, z, R: float, omega: float, lame: LameParameters) -> float:
    """``|G(R x_hat, z) - far-field form|`` (Frobenius norm)."""
    x_hat = _unit(x_hat)
    p, s = farfield_kernel(x_hat, z, omega, lame)
    approx = np.exp(1j * lame.kappa_p(omega) * R) / R * p + np.exp(1j * lame.kappa_s(omega) * R) / R * s
    return float(np.linalg.norm(green_tensor(R * x_hat, z, omega, lame) - approx))


# ---------------------------------------------------------------------------
# Navier residual by finite differences

_D2 = {2: ((-1, 1.0), (0, -2.0), (1, 1.0)), 4: ((-2, -1 / 12), (-1, 4 / 3), (0, -5 / 2), (1, 4 / 3), (2, -1 / 12))}
_D1 = {2: ((-1, -0.5), (1, 0.5)), 4: ((-2, 1 / 12), (-1, -2 / 3), (1, 2 / 3), (2, -1 / 12))}


def navier_residual(x, z, omega: float, lame: LameParameters, h: float, order: int = 2) -> np.ndarray:
    """``(mu Lap + (lam+mu) grad div + omega^2) G(., z)`` at ``x`` by centred differences.

    Column ``j`` of the result is the residual of column ``j`` of ``G``.
    """
    if order not in _D2:
        raise GreenError("order must be 2 or 4")
    x = np.asarray(x, dtype=float)
    eye = np.eye(3)

    def G(p):
        return green_tensor(p, z, omega, lame)

    lap = np.zeros((3, 3), dtype=complex)
    hess = np.zeros((3, 3, 3, 3), dtype=complex)  # hess[a, b] = d_a d_b G
    for a in range(3):
        second = sum(c * G(x + k * h * eye[a]) for k, c in _D2[order]) / h**2
        lap += second
        hess[a, a] = second
        for b in range(a + 1, 3):
            mixed = sum(
                ca * cb * G(x + ka * h * eye[a] + kb * h * eye[b]) for ka, ca in _D1[order] for kb, cb in _D1[order]
            ) / h**2
            hess[a, b] = hess[b, a] = mixed
    # (grad div G)_{i j} = sum_k d_i d_k G_{k j}
    grad_div = np.einsum("ikkj->ij", hess)
    return lame.mu * lap + (lame.lam + lame.mu) * grad_div + omega**2 * G(x)


def navier_convergence(x, z, omega: float, lame: LameParameters, spacings, order: int = 2):
    """Relative residual ``|res| / (omega^2 |G|)`` for each spacing; returns (h, residual) pairs."""
    scale = omega**2 * np.linalg.norm(green_tensor(x, z, omega, lame))
    return [(float(h), float(np.linalg.norm(navier_residual(x, z, omega, lame, h, order)) / scale)) for h in spacings]


def fitted_order(pairs) -> float:
    h, res = np.asarray(pairs, dtype=float).T
    return float(np.polyfit(np.log(h), np.log(res), 1)[0])


def write_convergence_csv(path, pairs) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "residual"])
        for h, r in pairs:
            w.writerow([repr(h), repr(r)])
