"""Transport coefficients of the active lattice gas hydrodynamics.

The self-diffusion coefficient of the symmetric exclusion process is
approximated by the polynomial

    ds(rho) = (1 - rho) (1 - a*rho + b*rho^2),   a = pi/2 - 1,  b = a(2a-1)/(2a+1)

Derived coefficients:

    calD(rho) = (1 - ds(rho)) / rho   (expands to the exact polynomial
                                       (1+a) - (a+b)*rho + b*rho^2)
    s(rho)    = calD(rho) - 1
    Q(rho)    = integral_0^rho calD(x)/ds(x) dx

Q diverges logarithmically at rho = 1, so it is served from a precomputed
table (monotone cubic Hermite with exact slopes) on [0, rho_max] and inputs
are clamped at rho_max.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import ConvergenceError, ParameterError

ALPHA = math.pi / 2.0 - 1.0
BETA = ALPHA * (2.0 * ALPHA - 1.0) / (2.0 * ALPHA + 1.0)
RHO_MAX_DEFAULT = 1.0 - 1e-9

_UNIFORM_END = 0.9999
_UNIFORM_STEP = 1e-4


@njit(cache=True)
def ds_scalar(rho):
    return (1.0 - rho) * (1.0 - ALPHA * rho + BETA * rho * rho)


@njit(cache=True)
def ds_prime_scalar(rho):
    return -(1.0 - ALPHA * rho + BETA * rho * rho) + (1.0 - rho) * (
        -ALPHA + 2.0 * BETA * rho
    )


@njit(cache=True)
def cal_d_scalar(rho):
    return (1.0 + ALPHA) - (ALPHA + BETA) * rho + BETA * rho * rho


@njit(cache=True)
def s_scalar(rho):
    return cal_d_scalar(rho) - 1.0


@njit(cache=True)
def q_eval_scalar(qx, qy, qd, rho_max, rho):
    """Cubic Hermite evaluation of the Q table at a single point."""
    if rho > rho_max:
        rho = rho_max
    if rho <= 0.0:
        return 0.0
    if rho < _UNIFORM_END:
        i = int(rho / _UNIFORM_STEP)
        n_uni = int(_UNIFORM_END / _UNIFORM_STEP)
        if i >= n_uni:
            i = n_uni - 1
        # guard against floating rounding at node boundaries
        if rho < qx[i]:
            i -= 1
        elif rho >= qx[i + 1]:
            i += 1
    else:
        lo = 0
        hi = len(qx) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if qx[mid] <= rho:
                lo = mid
            else:
                hi = mid
        i = lo
    h = qx[i + 1] - qx[i]
    t = (rho - qx[i]) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + t
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    return h00 * qy[i] + h10 * h * qd[i] + h01 * qy[i + 1] + h11 * h * qd[i + 1]


def _gauss_legendre_panels(a_nodes):
    """Cumulative integral of calD/ds between consecutive nodes (16-pt GL)."""
    gx, gw = np.polynomial.legendre.leggauss(16)
    a = a_nodes[:-1]
    b = a_nodes[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid[:, None] + half[:, None] * gx[None, :]
    integrand = cal_d_scalar(x) / ds_scalar(x)
    panels = half * (integrand @ gw)
    out = np.empty(len(a_nodes))
    out[0] = 0.0
    np.cumsum(panels, out=out[1:])
    return out


class TransportCoefficients:
    """Immutable evaluator for ds, ds', calD, s and the tabulated Q."""

    def __init__(self, rho_max: float = RHO_MAX_DEFAULT):
        if not 0.0 < rho_max < 1.0:
            raise ParameterError(f"rho_max must lie in (0,1), got {rho_max}")
        self.alpha = ALPHA
        self.beta = BETA
        self.rho_max = rho_max

        n_uni = round(_UNIFORM_END / _UNIFORM_STEP)
        uniform = np.linspace(0.0, _UNIFORM_END, n_uni + 1)
        # geometric refinement of the logarithmic divergence at rho -> 1
        p_max = -math.log10(1.0 - rho_max)
        tail_p = np.arange(4.05, p_max, 0.05)
        tail = 1.0 - 10.0 ** (-tail_p)
        tail = tail[tail <= rho_max - 1e-11]
        self.q_x = np.concatenate([uniform, tail, [rho_max]])
        self.q_y = _gauss_legendre_panels(self.q_x)
        # exact slopes Q'(x) = calD(x)/ds(x); positive, so the Hermite
        # interpolant stays monotone on this fine grid
        self.q_d = cal_d_scalar(self.q_x) / ds_scalar(self.q_x)
        if np.any(np.diff(self.q_y) <= 0.0):
            raise ConvergenceError("Q table is not strictly increasing")

    @staticmethod
    def _check_domain(rho, upper=1.0):
        r = np.asarray(rho, dtype=float)
        if np.any(r < 0.0) or np.any(r > upper):
            raise ParameterError(f"density outside [0,{upper}]: {rho!r}")
        return r

    def ds(self, rho):
        r = self._check_domain(rho)
        return (1.0 - r) * (1.0 - ALPHA * r + BETA * r * r)

    def ds_prime(self, rho):
        r = self._check_domain(rho)
        return -(1.0 - ALPHA * r + BETA * r * r) + (1.0 - r) * (-ALPHA + 2.0 * BETA * r)

    def cal_D(self, rho):
        r = self._check_domain(rho)
        return (1.0 + ALPHA) - (ALPHA + BETA) * r + BETA * r * r

    def s(self, rho):
        return self.cal_D(rho) - 1.0

    def Q(self, rho):
        r = np.asarray(rho, dtype=float)
        if np.any(r < 0.0):
            raise ParameterError(f"density must be nonnegative: {rho!r}")
        if r.ndim == 0:
            return q_eval_scalar(self.q_x, self.q_y, self.q_d, self.rho_max, float(r))
        out = np.empty_like(r)
        flat_in = r.ravel()
        flat_out = out.ravel()
        for i in range(flat_in.size):
            flat_out[i] = q_eval_scalar(
                self.q_x, self.q_y, self.q_d, self.rho_max, flat_in[i]
            )
        return out

    def einstein_check(self, f, rho=None):
        """Max-abs residual of the discrete mobility/diffusivity identity.

        f is a nonnegative angular density on n_theta uniform bins; the
        Dirac parts of the parametric distributions become diagonal/dtheta.
        """
        f = np.asarray(f, dtype=float)
        if f.ndim != 1 or np.any(f < 0.0):
            raise ParameterError("f must be a 1-D nonnegative angular density")
        n = f.size
        dtheta = 2.0 * math.pi / n
        rho_f = dtheta * f.sum()
        if rho is None:
            rho = rho_f
        if rho > 1.0:
            raise ParameterError(f"density {rho} exceeds 1")
        dsv = float(self.ds(rho))
        dv = float(self.cal_D(rho))
        sv = dv - 1.0
        eye = np.eye(n) / dtheta
        diff = dsv * eye + dv * f[:, None] * np.ones((1, n))
        chi = f[:, None] * eye - f[:, None] * f[None, :]
        sigma = sv * f[:, None] * f[None, :] + dsv * f[:, None] * eye
        residual = sigma - (diff @ chi) * dtheta
        return float(np.max(np.abs(residual)))
