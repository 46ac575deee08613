"""Isotropic damage constitutive model with exponential softening.

Nominal stress follows the secant relation sigma = (1 - omega) * De : (eps -
eps_sh).  The damage variable solves the implicit crack-band-regularised
softening law

    (1 - omega) * E * kappa = f_t * exp(-h * omega * kappa * f_t / G_f)

with kappa the largest equivalent strain reached so far and h the element
projection onto the maximum principal stress direction at crack initiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..microgen import AGG, ITZ, MORTAR


class NonConvergence(Exception):
    """Damage-law root finding failed (pathological parameters)."""


@dataclass(frozen=True)
class MaterialParams:
    E: float            # Pa
    nu: float
    f_t: float = None   # Pa, None for non-softening phases
    G_f: float = None   # N/m
    shrinks: bool = True

    def __post_init__(self):
        if self.E <= 0:
            raise ValueError("E must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError("nu outside [0, 0.5)")

    @property
    def softens(self):
        return self.f_t is not None

    @property
    def kappa0(self):
        """Damage-onset equivalent strain f_t / E."""
        return self.f_t / self.E if self.softens else np.inf


MORTAR_MAT = MaterialParams(E=25e9, nu=0.2, f_t=4e6, G_f=100.0, shrinks=True)
ITZ_MAT = MaterialParams(E=25e9, nu=0.2, f_t=3e6, G_f=75.0, shrinks=True)
AGG_MAT = MaterialParams(E=50e9, nu=0.2, f_t=None, G_f=None, shrinks=False)

PHASE_MATERIALS = {MORTAR: MORTAR_MAT, ITZ: ITZ_MAT, AGG: AGG_MAT}


def elastic_matrix(E, nu):
    """Plane-stress elasticity matrix for Voigt strain [exx, eyy, gxy]."""
    c = E / (1.0 - nu * nu)
    return c * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - nu)],
    ])


def principal_stresses(sig):
    """Principal values of plane-stress tensors given as (..., 3) Voigt."""
    sxx, syy, sxy = sig[..., 0], sig[..., 1], sig[..., 2]
    m = 0.5 * (sxx + syy)
    r = np.sqrt((0.5 * (sxx - syy)) ** 2 + sxy ** 2)
    return m + r, m - r


def equivalent_strain(sig_eff, E):
    """Smoothed Rankine equivalent strain from effective stress.

    eps_eq = sqrt(<s1>^2 + <s2>^2) / E with <.> the positive part; the
    out-of-plane principal value is zero under plane stress.
    """
    s1, s2 = principal_stresses(np.asarray(sig_eff, dtype=float))
    p1 = np.maximum(s1, 0.0)
    p2 = np.maximum(s2, 0.0)
    return np.sqrt(p1 * p1 + p2 * p2) / E


def max_principal_direction(sig):
    """Unit direction (cos, sin) of the larger principal stress."""
    sxx, syy, sxy = sig[..., 0], sig[..., 1], sig[..., 2]
    theta = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)
    return np.cos(theta), np.sin(theta)


def crack_band_width(size, direction):
    """Projection of a square element of side `size` onto `direction`.

    `direction` is a (cos, sin) pair; the result lies in [L, L*sqrt(2)].
    """
    c, s = direction
    return size * (np.abs(c) + np.abs(s))


def solve_damage(kappa, mat, h, tol_scale=1e-12, max_iter=200):
    """Damage from history variable kappa via the implicit softening law.

    Vectorized safeguarded Newton with a [0, 1] bracket; iteration stops
    when the residual drops below ``tol_scale * f_t`` or the bracket is
    exhausted to machine width (the root is then float-exact even where
    the residual cannot be evaluated that finely).  Returns 0 where
    ``kappa <= f_t / E``.
    """
    if not mat.softens:
        return np.zeros_like(np.asarray(kappa, dtype=float))
    kappa = np.asarray(kappa, dtype=float)
    scalar = kappa.ndim == 0
    kappa = np.atleast_1d(kappa)
    h = np.broadcast_to(np.asarray(h, dtype=float), kappa.shape)

    E, ft, Gf = mat.E, mat.f_t, mat.G_f
    omega = np.zeros_like(kappa)
    active = kappa > mat.kappa0
    if not np.any(active):
        return float(omega[0]) if scalar else omega

    k = kappa[active]
    c = h[active] * k * ft / Gf  # exponent scale per point

    def residual(w):
        return (1.0 - w) * E * k - ft * np.exp(-c * w)

    lo = np.zeros_like(k)
    hi = np.ones_like(k)
    w = 1.0 - ft / (E * k)  # root of the secant line, good initial guess
    tol = tol_scale * ft
    done = False
    for _ in range(max_iter):
        g = residual(w)
        if np.all((np.abs(g) <= tol) | (hi - lo <= 4.0 * np.finfo(float).eps)):
            done = True
            break
        pos = g > 0
        lo = np.where(pos, w, lo)
        hi = np.where(pos, hi, w)
        dg = -E * k + c * ft * np.exp(-c * w)
        step = g / np.where(dg == 0.0, 1.0, dg)
        w_new = w - step
        outside = (w_new <= lo) | (w_new >= hi) | (dg == 0.0)
        w = np.where(outside, 0.5 * (lo + hi), w_new)
    if not done:
        raise NonConvergence("damage update did not converge")

    omega[active] = w
    if scalar:
        return float(omega[0])
    return omega
