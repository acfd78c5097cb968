"""Exact event-driven simulation of the active lattice gas.

Particles on an N x N periodic lattice attempt nearest-neighbour jumps at
rate N^2*D_E + N*(v0/2)*(u . e_theta), aborted when the target is occupied.
Jumps are simulated exactly with a Gillespie loop over a Fenwick (binary
prefix-sum) tree of the 4*count directed rates; only the <= 9 rates touched
by a jump are updated per event.  Orientations are frozen within each
window of length dt and then receive Gaussian increments of variance
2*D_O*elapsed, after which all biased rates are rebuilt.

The jump loop uses a self-contained splitmix64 stream so that a trajectory
is reproducible bitwise from its seed; Gaussian angle increments come from
an independent numpy Generator spawned from the same seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ParameterError, ScaleError
from .params import PhysicalParams

TWO_PI = 2.0 * math.pi

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True)
def _next_u64(state):
    state[0] += _GOLD
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def _next_double(state):
    return float(_next_u64(state) >> _S11) * _INV53


# -- Fenwick tree (1-indexed, size m+1) ------------------------------------


@njit(cache=True)
def _fenwick_build(tree, rates):
    m = rates.size
    for i in range(m + 1):
        tree[i] = 0.0
    for i in range(1, m + 1):
        tree[i] += rates[i - 1]
        j = i + (i & (-i))
        if j <= m:
            tree[j] += tree[i]


@njit(cache=True)
def _fenwick_add(tree, i, delta):
    m = tree.size - 1
    while i <= m:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True)
def _fenwick_total(tree):
    m = tree.size - 1
    total = 0.0
    i = m
    while i > 0:
        total += tree[i]
        i -= i & (-i)
    return total


@njit(cache=True)
def _fenwick_sample(tree, rates, r):
    """0-based leaf whose cumulative interval contains r."""
    m = tree.size - 1
    idx = 0
    bit = 1
    while (bit << 1) <= m:
        bit <<= 1
    while bit > 0:
        nxt = idx + bit
        if nxt <= m and tree[nxt] <= r:
            idx = nxt
            r -= tree[nxt]
        bit >>= 1
    if idx >= m:
        idx = m - 1
    # skip zero-rate leaves hit by roundoff at interval boundaries
    while rates[idx] <= 0.0 and idx + 1 < m:
        idx += 1
    while rates[idx] <= 0.0 and idx > 0:
        idx -= 1
    return idx


# -- jump rates ------------------------------------------------------------

# directions: 0 -> +x1, 1 -> -x1, 2 -> +x2, 3 -> -x2
_DX = np.array([1, -1, 0, 0], dtype=np.int64)
_DY = np.array([0, 0, 1, -1], dtype=np.int64)
_OPP = np.array([1, 0, 3, 2], dtype=np.int64)


@njit(cache=True)
def _base_rate(d, c, s, n2de, half_nv0):
    if d == 0:
        drift = c
    elif d == 1:
        drift = -c
    elif d == 2:
        drift = s
    else:
        drift = -s
    return n2de + half_nv0 * drift


@njit(cache=True)
def _rebuild_rates(occ, px, py, costh, sinth, rates, tree, n, n2de, half_nv0):
    count = px.size
    for p in range(count):
        for d in range(4):
            tx = (px[p] + _DX[d]) % n
            ty = (py[p] + _DY[d]) % n
            if occ[tx, ty] >= 0:
                rates[4 * p + d] = 0.0
            else:
                rates[4 * p + d] = _base_rate(d, costh[p], sinth[p], n2de, half_nv0)
    _fenwick_build(tree, rates)


@njit(cache=True)
def _gillespie_window(occ, px, py, costh, sinth, wx, wy, rates, tree,
                      prng, n, n2de, half_nv0, delta_t):
    """Run exact jump events until the elapsed time crosses delta_t.

    Returns (elapsed, events).  The event whose waiting time crosses the
    boundary is still executed, so elapsed >= delta_t (exact crossing time).
    """
    total = _fenwick_total(tree)
    if total <= 0.0:
        return delta_t, 0
    t = 0.0
    events = 0
    while True:
        u = _next_double(prng)
        t += -math.log1p(-u) / total
        r = _next_double(prng) * total
        leaf = _fenwick_sample(tree, rates, r)
        p = leaf // 4
        d = leaf - 4 * p
        ox = px[p]
        oy = py[p]
        nx = (ox + _DX[d]) % n
        ny = (oy + _DY[d]) % n
        # move
        occ[ox, oy] = -1
        occ[nx, ny] = p
        px[p] = nx
        py[p] = ny
        wx[p] += _DX[d]
        wy[p] += _DY[d]
        # mover's four rates
        for dd in range(4):
            tx = (nx + _DX[dd]) % n
            ty = (ny + _DY[dd]) % n
            if occ[tx, ty] >= 0:
                new = 0.0
            else:
                new = _base_rate(dd, costh[p], sinth[p], n2de, half_nv0)
            i = 4 * p + dd
            delta = new - rates[i]
            if delta != 0.0:
                rates[i] = new
                _fenwick_add(tree, i + 1, delta)
                total += delta
        # neighbours of the vacated site may now jump into it
        for dd in range(4):
            ax = (ox + _DX[dd]) % n
            ay = (oy + _DY[dd]) % n
            q = occ[ax, ay]
            if q >= 0 and q != p:
                back = _OPP[dd]
                new = _base_rate(back, costh[q], sinth[q], n2de, half_nv0)
                i = 4 * q + back
                delta = new - rates[i]
                if delta != 0.0:
                    rates[i] = new
                    _fenwick_add(tree, i + 1, delta)
                    total += delta
        # neighbours of the target site lose their jump into it
        for dd in range(4):
            bx = (nx + _DX[dd]) % n
            by = (ny + _DY[dd]) % n
            q = occ[bx, by]
            if q >= 0 and q != p:
                back = _OPP[dd]
                i = 4 * q + back
                delta = -rates[i]
                if delta != 0.0:
                    rates[i] = 0.0
                    _fenwick_add(tree, i + 1, delta)
                    total += delta
        events += 1
        if t >= delta_t:
            return t, events
        if total <= 0.0:
            return max(t, delta_t), events


# -- public API ------------------------------------------------------------


def validate_scale(n: int, params: PhysicalParams) -> None:
    """All jump rates are nonnegative iff N >= v0/(2*D_E)."""
    if n * n * params.D_E - n * params.v0 / 2.0 < 0.0:
        raise ScaleError(n, math.ceil(params.v0 / (2.0 * params.D_E)))


class MicroState:
    """Occupancy, per-particle orientations and the directed-rate index."""

    def __init__(self, n, params, occ, px, py, angles, seed):
        validate_scale(n, params)
        self.n = n
        self.params = params
        self.occ = occ
        self.px = px
        self.py = py
        self.angles = angles
        self.costh = np.cos(angles)
        self.sinth = np.sin(angles)
        self.wx = np.zeros(px.size, dtype=np.int64)
        self.wy = np.zeros(px.size, dtype=np.int64)
        self.sim_time = 0.0
        self.seed = seed
        ss = np.random.SeedSequence(seed)
        self.rng = np.random.default_rng(ss.spawn(1)[0])
        self._prng = ss.generate_state(1, dtype=np.uint64)
        self.rates = np.zeros(4 * px.size)
        self.tree = np.zeros(4 * px.size + 1)
        self.rebuild_rates()

    @property
    def count(self) -> int:
        return self.px.size

    @property
    def _n2de(self) -> float:
        return self.n * self.n * self.params.D_E

    @property
    def _half_nv0(self) -> float:
        return 0.5 * self.n * self.params.v0

    def rebuild_rates(self) -> None:
        if self.count:
            _rebuild_rates(self.occ, self.px, self.py, self.costh, self.sinth,
                           self.rates, self.tree, self.n, self._n2de, self._half_nv0)

    def expected_rates(self) -> np.ndarray:
        """Recompute all directed rates from scratch (consistency oracle)."""
        out = np.zeros(4 * self.count)
        if self.count:
            tree = np.zeros(out.size + 1)
            _rebuild_rates(self.occ, self.px, self.py, self.costh, self.sinth,
                           out, tree, self.n, self._n2de, self._half_nv0)
        return out

    def total_rate(self) -> float:
        return _fenwick_total(self.tree) if self.count else 0.0

    def check_consistent(self) -> None:
        occupied = np.argwhere(self.occ >= 0)
        if occupied.shape[0] != self.count:
            raise RuntimeError("occupancy/particle-list mismatch")
        for x, y in occupied:
            p = self.occ[x, y]
            if self.px[p] != x or self.py[p] != y:
                raise RuntimeError(f"particle {p} position mismatch at ({x},{y})")

    def displacements(self):
        """Unwrapped displacement of each particle in macroscopic units."""
        return self.wx / self.n, self.wy / self.n


def init_product(n: int, phi: float, params: PhysicalParams, seed) -> MicroState:
    """Product measure: each site occupied w.p. phi, angles Unif[0, 2 pi)."""
    if not 0.0 <= phi <= 1.0:
        raise ParameterError(f"phi must lie in [0,1], got {phi}")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    mask = rng.random((n, n)) < phi
    xs, ys = np.nonzero(mask)
    count = xs.size
    occ = np.full((n, n), -1, dtype=np.int64)
    occ[xs, ys] = np.arange(count)
    angles = rng.uniform(0.0, TWO_PI, count)
    return MicroState(n, params, occ, xs.astype(np.int64), ys.astype(np.int64),
                      angles, seed)


def init_profile(n: int, zeta_hat, params: PhysicalParams, seed,
                 n_theta: int = 256) -> MicroState:
    """Product measure close to a smooth profile zeta_hat(x1, x2, theta)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    th = TWO_PI * (np.arange(n_theta) + 0.5) / n_theta
    x = (np.arange(n) + 0.0) / n
    x1, x2, tg = np.meshgrid(x, x, th, indexing="ij")
    zh = np.asarray(zeta_hat(x1, x2, tg), dtype=float)
    if np.any(zh < 0):
        raise ParameterError("profile must be nonnegative")
    zeta = zh.sum(axis=2) * (TWO_PI / n_theta)
    if np.any(zeta > 1.0 + 1e-12):
        raise ParameterError("profile density exceeds 1")
    mask = rng.random((n, n)) < zeta
    xs, ys = np.nonzero(mask)
    count = xs.size
    occ = np.full((n, n), -1, dtype=np.int64)
    occ[xs, ys] = np.arange(count)
    angles = np.empty(count)
    for i, (zx, zy) in enumerate(zip(xs, ys)):
        w = zh[zx, zy]
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        u = rng.random()
        k = int(np.searchsorted(cdf, u))
        angles[i] = th[min(k, n_theta - 1)]
    return MicroState(n, params, occ, xs.astype(np.int64), ys.astype(np.int64),
                      angles, seed)


def gillespie_window(state: MicroState, delta_t: float) -> float:
    """Jump events with frozen angles until elapsed time crosses delta_t."""
    if state.count == 0:
        state.sim_time += delta_t
        return delta_t
    elapsed, _ = _gillespie_window(
        state.occ, state.px, state.py, state.costh, state.sinth,
        state.wx, state.wy, state.rates, state.tree, state._prng,
        state.n, state._n2de, state._half_nv0, delta_t,
    )
    state.sim_time += elapsed
    return elapsed


def angle_update(state: MicroState, elapsed: float) -> None:
    """Gaussian orientation increments of variance 2*D_O*elapsed, then rebuild."""
    if state.count == 0:
        return
    sigma = math.sqrt(2.0 * state.params.D_O * elapsed)
    inc = state.rng.normal(0.0, sigma, state.count)
    state.angles = np.mod(state.angles + inc, TWO_PI)
    state.costh = np.cos(state.angles)
    state.sinth = np.sin(state.angles)
    state.rebuild_rates()


@dataclass
class MicroRecord:
    times: list = field(default_factory=list)
    phi_order: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (occ copy, angles copy)


def run(
    state: MicroState,
    T: float,
    *,
    dt: float = 1e-3,
    series_dt: float = 0.01,
    snapshot_dt: float = 0.1,
    snapshot_callback=None,
) -> MicroRecord:
    """Alternate Gillespie windows and angle updates up to time T."""
    from .observables import phi_order  # local import; observables is pure

    lo = state.n ** -2 * state.params.D_E
    hi = 1.0 / state.params.D_O if state.params.D_O > 0 else math.inf
    if not lo < dt < hi:
        warnings.warn(
            f"dt={dt} outside the separation-of-scales window ({lo:.2e}, {hi:.2e})"
        )
    rec = MicroRecord()

    def emit_series():
        rec.times.append(state.sim_time)
        rec.phi_order.append(phi_order(state.occ))

    def emit_snapshot():
        rec.snapshot_times.append(state.sim_time)
        rec.snapshots.append((state.occ.copy(), state.angles.copy()))
        if snapshot_callback is not None:
            snapshot_callback(state)

    emit_series()
    emit_snapshot()
    eps = 1e-12
    next_series = series_dt
    next_snap = snapshot_dt
    while state.sim_time < T - eps:
        elapsed = gillespie_window(state, dt)
        angle_update(state, elapsed)
        if state.sim_time >= next_series - eps:
            emit_series()
            next_series = (math.floor(state.sim_time / series_dt + eps) + 1) * series_dt
        if state.sim_time >= next_snap - eps:
            emit_snapshot()
            next_snap = (math.floor(state.sim_time / snapshot_dt + eps) + 1) * snapshot_dt
    return rec
