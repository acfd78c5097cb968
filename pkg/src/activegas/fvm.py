"""First-order upwind finite-volume solver for the hydrodynamic equation.

The phase space [0,1)^2 x [0,2pi) is split into N_x1 x N_x2 x N_theta
periodic cells with centres (i dx1, j dx2, k dtheta).  The equation is
advanced in mobility/velocity split form: interface velocities combine
centred log-density and Q(rho) differences with the self-propulsion drift,
and the upwinded mobilities are M = f*ds(rho) in space and M = f in angle.
Forward Euler with an adaptive CFL time step (capped at dt_max) completes
the scheme.

Run-and-tumble orientation dynamics replaces the angular flux with the
relaxation term D_O * (rho/(2 pi) - f).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .coeffs import TransportCoefficients, q_eval_scalar
from .errors import CflError, ParameterError
from .linstab import StabilityResult

TWO_PI = 2.0 * math.pi
F_FLOOR = 1e-12
DT_MAX_DEFAULT = 1e-5


@dataclass(frozen=True)
class Grid:
    n_x1: int
    n_x2: int
    n_theta: int

    def __post_init__(self):
        for name in ("n_x1", "n_x2", "n_theta"):
            if getattr(self, name) < 4:
                raise ParameterError(f"{name} must be >= 4, got {getattr(self, name)}")

    @property
    def dx1(self):
        return 1.0 / self.n_x1

    @property
    def dx2(self):
        return 1.0 / self.n_x2

    @property
    def dtheta(self):
        return TWO_PI / self.n_theta

    @property
    def cell_volume(self):
        return self.dx1 * self.dx2 * self.dtheta

    @property
    def shape(self):
        return (self.n_x1, self.n_x2, self.n_theta)

    def thetas(self):
        return self.dtheta * np.arange(self.n_theta)

    def x1s(self):
        return self.dx1 * np.arange(self.n_x1)


@dataclass
class OrientationField:
    values: np.ndarray
    grid: Grid
    time: float = 0.0

    def mass(self) -> float:
        return float(self.values.sum()) * self.grid.cell_volume

    def copy(self) -> "OrientationField":
        return OrientationField(self.values.copy(), self.grid, self.time)


@dataclass(frozen=True)
class Moments:
    rho: np.ndarray
    p: np.ndarray  # shape (n_x1, n_x2, 2)


def moments(f: OrientationField) -> Moments:
    th = f.grid.thetas()
    dth = f.grid.dtheta
    rho = dth * f.values.sum(axis=2)
    p = np.empty(rho.shape + (2,))
    p[..., 0] = dth * (f.values @ np.cos(th))
    p[..., 1] = dth * (f.values @ np.sin(th))
    return Moments(rho=rho, p=p)


@njit(cache=True)
def _q_table_eval(qx, qy, qd, rho_max, rho, out):
    flat = rho.ravel()
    o = out.ravel()
    for i in range(flat.size):
        o[i] = q_eval_scalar(qx, qy, qd, rho_max, flat[i])


@njit(cache=True)
def _velocity_kernel(lnf, qv, g1, g2, cosk, sink, D_E, v0, D_O,
                     inv_dx1, inv_dx2, inv_dth, tumble, U1, U2, Ut):
    n1, n2, nt = lnf.shape
    a1 = 0.0
    a2 = 0.0
    at = 0.0
    bad_i = -1
    bad_j = -1
    bad_k = -1
    for i in range(n1):
        ip = i + 1 if i + 1 < n1 else 0
        for j in range(n2):
            jp = j + 1 if j + 1 < n2 else 0
            dq1 = (qv[ip, j] - qv[i, j]) * inv_dx1
            dq2 = (qv[i, jp] - qv[i, j]) * inv_dx2
            ga1 = 0.5 * (g1[ip, j] + g1[i, j])
            ga2 = 0.5 * (g2[i, jp] + g2[i, j])
            for k in range(nt):
                u1 = -D_E * ((lnf[ip, j, k] - lnf[i, j, k]) * inv_dx1 + dq1) \
                    + v0 * (ga1 + cosk[k])
                u2 = -D_E * ((lnf[i, jp, k] - lnf[i, j, k]) * inv_dx2 + dq2) \
                    + v0 * (ga2 + sink[k])
                U1[i, j, k] = u1
                U2[i, j, k] = u2
                if not (math.isfinite(u1) and math.isfinite(u2)):
                    bad_i, bad_j, bad_k = i, j, k
                au = abs(u1)
                if au > a1:
                    a1 = au
                au = abs(u2)
                if au > a2:
                    a2 = au
                if not tumble:
                    kp = k + 1 if k + 1 < nt else 0
                    ut = -D_O * (lnf[i, j, kp] - lnf[i, j, k]) * inv_dth
                    Ut[i, j, k] = ut
                    if not math.isfinite(ut):
                        bad_i, bad_j, bad_k = i, j, k
                    au = abs(ut)
                    if au > at:
                        at = au
    return a1, a2, at, bad_i, bad_j, bad_k


@njit(cache=True)
def _flux_kernel(f, dsv, U1, U2, Ut, tumble):
    """Overwrite U1/U2/Ut with upwind fluxes through the plus-interfaces."""
    n1, n2, nt = f.shape
    for i in range(n1):
        ip = i + 1 if i + 1 < n1 else 0
        for j in range(n2):
            jp = j + 1 if j + 1 < n2 else 0
            for k in range(nt):
                u = U1[i, j, k]
                U1[i, j, k] = u * (f[i, j, k] * dsv[i, j]) if u >= 0.0 \
                    else u * (f[ip, j, k] * dsv[ip, j])
                u = U2[i, j, k]
                U2[i, j, k] = u * (f[i, j, k] * dsv[i, j]) if u >= 0.0 \
                    else u * (f[i, jp, k] * dsv[i, jp])
                if not tumble:
                    kp = k + 1 if k + 1 < nt else 0
                    u = Ut[i, j, k]
                    Ut[i, j, k] = u * f[i, j, k] if u >= 0.0 else u * f[i, j, kp]


@njit(cache=True)
def _divergence_kernel(f, F1, F2, Ft, rho, dt, inv_dx1, inv_dx2, inv_dth,
                       D_O, tumble, out):
    n1, n2, nt = f.shape
    inv2pi = 1.0 / TWO_PI
    minv = 1e300
    for i in range(n1):
        im = i - 1 if i > 0 else n1 - 1
        for j in range(n2):
            jm = j - 1 if j > 0 else n2 - 1
            for k in range(nt):
                div = (F1[i, j, k] - F1[im, j, k]) * inv_dx1 \
                    + (F2[i, j, k] - F2[i, jm, k]) * inv_dx2
                if tumble:
                    v = f[i, j, k] + dt * (
                        -div + D_O * (rho[i, j] * inv2pi - f[i, j, k])
                    )
                else:
                    km = k - 1 if k > 0 else nt - 1
                    div += (Ft[i, j, k] - Ft[i, j, km]) * inv_dth
                    v = f[i, j, k] - dt * div
                out[i, j, k] = v
                if v < minv:
                    minv = v
    return minv


class FvmSolver:
    """Stateless-per-step solver bound to one parameter set and grid."""

    def __init__(
        self,
        grid: Grid,
        params,
        coeffs: TransportCoefficients | None = None,
        *,
        tumble: bool = False,
        safety: float = 1.0,
        dt_max: float = DT_MAX_DEFAULT,
        f_floor: float = F_FLOOR,
    ):
        if safety <= 0 or dt_max <= 0:
            raise ParameterError("safety and dt_max must be positive")
        self.grid = grid
        self.params = params
        self.coeffs = coeffs or TransportCoefficients()
        self.tumble = tumble
        self.safety = safety
        self.dt_max = dt_max
        self.f_floor = f_floor
        th = grid.thetas()
        self._cosk = np.cos(th)
        self._sink = np.sin(th)

    # -- public operations --------------------------------------------------

    def interface_velocities(self, f: OrientationField):
        """(U_x1, U_x2, U_theta) on the plus-side staggered interfaces."""
        u1, u2, ut, _, _, _, _ = self._velocities(f.values)
        return u1, u2, ut

    def adaptive_dt(self, velocities) -> float:
        u1, u2, ut = velocities
        a = (np.max(np.abs(u1)), np.max(np.abs(u2)),
             np.max(np.abs(ut)) if ut is not None else 0.0)
        return self._dt_from_maxes(*a)

    def step(self, f: OrientationField, dt: float | None = None,
             velocities=None) -> OrientationField:
        if velocities is None:
            u1, u2, ut, a1, a2, at, bad = self._velocities(f.values)
            if bad[0] >= 0:
                raise CflError(f"non-finite interface velocity at cell {bad}")
        else:
            u1, u2, ut = (v.copy() if v is not None else None for v in velocities)
            a1, a2, at = (np.max(np.abs(u1)), np.max(np.abs(u2)),
                          np.max(np.abs(ut)) if ut is not None else 0.0)
        if dt is None:
            dt = self._dt_from_maxes(a1, a2, at)
        return self._apply(f, u1, u2, ut, dt)

    def _apply(self, f: OrientationField, u1, u2, ut, dt) -> OrientationField:
        """Consume the velocity buffers (overwritten with fluxes) and update."""
        g = self.grid
        rho, dsv = self._density_and_ds(f.values)
        if ut is None:
            ut = np.empty((0, 0, 0))
        _flux_kernel(f.values, dsv, u1, u2, ut, self.tumble)
        out = np.empty_like(f.values)
        minv = _divergence_kernel(
            f.values, u1, u2, ut, rho, dt,
            1.0 / g.dx1, 1.0 / g.dx2, 1.0 / g.dtheta,
            self.params.D_O, self.tumble, out,
        )
        if minv < 0.0:
            idx = np.unravel_index(int(np.argmin(out)), out.shape)
            raise CflError(
                f"negative cell value {minv:.3e} at {idx} after step of dt={dt:.3e}"
            )
        if not math.isfinite(minv):
            raise CflError("non-finite cell value produced by step")
        return OrientationField(out, g, f.time + dt)

    # -- internals ---------------------------------------------------------

    def _density_and_ds(self, values):
        g = self.grid
        rho = g.dtheta * values.sum(axis=2)
        rho_c = np.minimum(rho, self.coeffs.rho_max)
        dsv = self.coeffs.ds(rho_c)
        return rho, dsv

    def _velocities(self, values):
        g = self.grid
        c = self.coeffs
        rho = g.dtheta * values.sum(axis=2)
        rho_c = np.minimum(rho, c.rho_max)
        dsv = c.ds(rho_c)
        ratio = c.s(rho_c) / dsv
        p1 = g.dtheta * (values @ self._cosk)
        p2 = g.dtheta * (values @ self._sink)
        g1 = p1 * ratio
        g2 = p2 * ratio
        qv = np.empty_like(rho_c)
        _q_table_eval(c.q_x, c.q_y, c.q_d, c.rho_max, rho_c, qv)
        lnf = np.log(np.maximum(values, self.f_floor))
        u1 = np.empty_like(values)
        u2 = np.empty_like(values)
        ut = None if self.tumble else np.empty_like(values)
        a1, a2, at, bi, bj, bk = _velocity_kernel(
            lnf, qv, g1, g2, self._cosk, self._sink,
            self.params.D_E, self.params.v0, self.params.D_O,
            1.0 / g.dx1, 1.0 / g.dx2, 1.0 / g.dtheta,
            self.tumble, u1, u2, ut if ut is not None else np.empty((0, 0, 0)),
        )
        return u1, u2, ut, a1, a2, at, (bi, bj, bk)

    def _dt_from_maxes(self, a1, a2, at) -> float:
        g = self.grid
        dt = self.dt_max
        if a1 > 0:
            dt = min(dt, self.safety * g.dx1 / a1)
        if a2 > 0:
            dt = min(dt, self.safety * g.dx2 / a2)
        if at > 0:
            dt = min(dt, self.safety * g.dtheta / at)
        return dt

    def advance(self, f: OrientationField):
        """One adaptive step; returns (new field, dt)."""
        u1, u2, ut, a1, a2, at, bad = self._velocities(f.values)
        if bad[0] >= 0:
            raise CflError(f"non-finite interface velocity at cell {bad}")
        dt = self._dt_from_maxes(a1, a2, at)
        return self._apply(f, u1, u2, ut, dt), dt


# -- initial conditions ----------------------------------------------------


def initial_uniform_random(grid: Grid, phi: float, delta: float, seed) -> OrientationField:
    """i.i.d. Unif(phi/2pi - delta, phi/2pi + delta) cells, renormalized to mass phi."""
    base = phi / TWO_PI
    if delta >= base and delta > 0:
        raise ParameterError(f"delta={delta} must be < phi/(2 pi)={base}")
    rng = np.random.default_rng(seed)
    values = rng.uniform(base - delta, base + delta, size=grid.shape)
    mass = values.sum() * grid.cell_volume
    if mass > 0:
        values *= phi / mass
    return OrientationField(values, grid, 0.0)


def initial_eigenmode(
    grid: Grid,
    phi: float,
    delta: float,
    stability: StabilityResult,
    omega: float = TWO_PI,
    f_floor: float = F_FLOOR,
) -> OrientationField:
    """phi/2pi plus delta times the unit-norm unstable eigenmode."""
    coeff = stability.coefficients
    th = grid.thetas()
    ks = np.arange(coeff.size)
    profile = np.cos(np.outer(th, ks)) @ coeff  # complex angular profile
    wave = np.exp(1j * omega * grid.x1s())
    pert = np.real(wave[:, None, None] * profile[None, None, :])
    values = phi / TWO_PI + delta * np.broadcast_to(pert, grid.shape).copy()
    if np.any(values < f_floor):
        warnings.warn("eigenmode initial condition floored at f_floor")
        values = np.maximum(values, f_floor)
    return OrientationField(values, grid, 0.0)


# -- diagnostics -----------------------------------------------------------


def norm_l2tilde(f: OrientationField, reference: float) -> float:
    g = f.grid
    diff = f.values - reference
    return math.sqrt(g.cell_volume * float(np.sum(diff * diff)))


def free_energy(f: OrientationField) -> float:
    """Discrete entropy functional; x log x terms continued by 0 at x = 0."""
    g = f.grid
    rho = g.dtheta * f.values.sum(axis=2)
    hole = np.clip(1.0 - rho, 0.0, None)
    term_hole = np.where(hole > 0.0, hole * np.log(np.where(hole > 0, hole, 1.0)), 0.0)
    v = f.values
    term_f = np.where(v > 0.0, v * np.log(np.where(v > 0, TWO_PI * v, 1.0)), 0.0)
    return g.dx1 * g.dx2 * (float(term_hole.sum()) + g.dtheta * float(term_f.sum()))


def classify(times, norms, delta: float, horizon: float = 4.0) -> str:
    """Stability verdict from the norm time series per the 2*delta protocol."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    sup = float(np.max(norms[times <= horizon + 1e-9]))
    if sup > 2.0 * delta:
        return "unstable"
    if times[-1] < horizon - 1e-9:
        raise ParameterError(
            f"norm series ends at t={times[-1]}, before the t={horizon} horizon"
        )
    slope = (norms[-1] - norms[-2]) / (times[-1] - times[-2])
    return "stable" if slope <= 0.0 else "unclassified"


# -- trajectory driver -----------------------------------------------------


@dataclass
class TrajectoryRecord:
    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    free_energies: list = field(default_factory=list)
    masses: list = field(default_factory=list)
    min_f: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    density_snapshots: list = field(default_factory=list)
    stopped_early: bool = False
    final_field: OrientationField | None = None

    def sup_norm(self) -> float:
        return float(np.max(self.norms))

    def final_slope(self) -> float:
        return (self.norms[-1] - self.norms[-2]) / (self.times[-1] - self.times[-2])


def run(
    solver: FvmSolver,
    f0: OrientationField,
    T: float,
    *,
    phi: float,
    series_dt: float = 0.01,
    snapshot_dt: float = 0.1,
    stop_norm: float | None = None,
    snapshot_callback=None,
) -> TrajectoryRecord:
    """Advance to time T, recording the norm/energy series and density snapshots.

    stop_norm, when set, ends the run as soon as the perturbation norm
    exceeds it (the supremum in the classification protocol only grows).
    snapshot_callback(field) is invoked at every snapshot time.
    """
    ref = phi / TWO_PI
    rec = TrajectoryRecord()
    f = f0

    def emit_series():
        rec.times.append(f.time)
        rec.norms.append(norm_l2tilde(f, ref))
        rec.free_energies.append(free_energy(f))
        rec.masses.append(f.mass())
        rec.min_f.append(float(f.values.min()))

    def emit_snapshot():
        rec.snapshot_times.append(f.time)
        rec.density_snapshots.append(f.grid.dtheta * f.values.sum(axis=2))
        if snapshot_callback is not None:
            snapshot_callback(f)

    emit_series()
    emit_snapshot()
    eps = 1e-9
    next_series = series_dt
    next_snap = snapshot_dt
    while f.time < T - eps:
        f, _ = solver.advance(f)
        if f.time >= next_series - eps:
            emit_series()
            next_series = (math.floor((f.time + eps) / series_dt) + 1) * series_dt
            if stop_norm is not None and rec.norms[-1] > stop_norm:
                rec.stopped_early = True
                break
        if f.time >= next_snap - eps:
            emit_snapshot()
            next_snap = (math.floor((f.time + eps) / snapshot_dt) + 1) * snapshot_dt
    if rec.times[-1] < f.time:
        emit_series()
    rec.final_field = f
    return rec


def fit_growth_rate(times, norms, lo: float, hi: float) -> float:
    """Least-squares slope of ln(norm) over the window where norm lies in [lo, hi]."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    mask = (norms >= lo) & (norms <= hi)
    if mask.sum() < 2:
        raise ParameterError("fewer than two norm samples in the fit window")
    t = times[mask]
    y = np.log(norms[mask])
    return float(np.polyfit(t, y, 1)[0])
