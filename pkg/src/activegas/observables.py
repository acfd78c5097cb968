"""Coarse-graining of microscopic configurations and macroscopic fields.

Local density and polarisation are box averages over the (2*floor(eps*N)+1)^2
periodic window around each site; the translational-asymmetry order parameter
Phi sums the magnitudes of the first Fourier modes of the occupancy in both
lattice directions.  Histograms of the local density pool all sites of any
number of coarse fields into 50 uniform bins on [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

DEFAULT_BINS = 50


@dataclass(frozen=True)
class CoarseField:
    """Windowed field on the site/cell grid; vector fields have a last axis 2."""

    values: np.ndarray
    eps: float
    window: int  # box side in sites (2*floor(eps*N)+1) or cells


@dataclass(frozen=True)
class DensityHistogram:
    edges: np.ndarray  # bin edges, length nbins+1
    probability: np.ndarray  # normalized to mass 1
    n_samples: int


def _occupancy(state) -> np.ndarray:
    occ = getattr(state, "occ", state)
    return np.asarray(occ)


def _window_radius(eps: float, n: int) -> int:
    r = int(math.floor(eps * n))
    if r < 1:
        raise ParameterError(f"window eps*N must round to >= 1, got eps={eps}, N={n}")
    return r


def _box_average(field: np.ndarray, r: int) -> np.ndarray:
    """Periodic (2r+1)^2 box mean via padded 2-D prefix sums (exact for ints)."""
    padded = np.pad(field, r, mode="wrap")
    acc = padded.cumsum(axis=0).cumsum(axis=1)
    acc = np.pad(acc, ((1, 0), (1, 0)))
    w = 2 * r + 1
    n = field.shape[0]
    total = (
        acc[w : w + n, w : w + n]
        - acc[:n, w : w + n]
        - acc[w : w + n, :n]
        + acc[:n, :n]
    )
    return total / float(w * w)


def local_density(state, eps: float) -> CoarseField:
    occ = _occupancy(state)
    n = occ.shape[0]
    r = _window_radius(eps, n)
    eta = (occ >= 0).astype(np.int64)
    return CoarseField(values=_box_average(eta, r), eps=eps, window=2 * r + 1)


def local_polarisation(state, eps: float) -> CoarseField:
    occ = _occupancy(state)
    n = occ.shape[0]
    r = _window_radius(eps, n)
    cx = np.zeros((n, n))
    sx = np.zeros((n, n))
    mask = occ >= 0
    ids = occ[mask]
    cx[mask] = state.costh[ids]
    sx[mask] = state.sinth[ids]
    values = np.stack([_box_average(cx, r), _box_average(sx, r)], axis=-1)
    return CoarseField(values=values, eps=eps, window=2 * r + 1)


def phi_order(state) -> float:
    """Phi = |N^-2 sum eta e^(2 pi i z1/N)| + |N^-2 sum eta e^(2 pi i z2/N)|."""
    occ = _occupancy(state)
    n = occ.shape[0]
    eta = (occ >= 0).astype(float)
    wave = np.exp(2j * math.pi * np.arange(n) / n)
    m1 = abs(wave @ eta.sum(axis=1)) / n**2
    m2 = abs(wave @ eta.sum(axis=0)) / n**2
    return float(m1 + m2)


def coarse_macro_density(rho: np.ndarray, eps: float, dx: float) -> CoarseField:
    """Box average of a cell-centered density over [x-eps, x+eps]^2.

    eps is rounded down to a whole number of cell widths; the exact integral
    of the piecewise-constant field gives half weight to the two edge cells
    of the 2w+1 covered in each direction.
    """
    rho = np.asarray(rho, dtype=float)
    w = int(math.floor(eps / dx + 1e-9))
    if w < 1:
        raise ParameterError(f"eps={eps} below one cell width {dx}")
    kernel = np.full(2 * w + 1, 1.0)
    kernel[0] = kernel[-1] = 0.5
    kernel /= 2.0 * w
    out = rho
    for axis in (0, 1):
        n = out.shape[axis]
        idx = (np.arange(n)[:, None] + np.arange(-w, w + 1)[None, :]) % n
        gathered = np.take(out, idx, axis=axis)
        # contract the window axis (axis+1 after take) against the kernel
        out = np.tensordot(gathered, kernel, axes=([axis + 1], [0]))
    return CoarseField(values=out, eps=w * dx, window=2 * w + 1)


def histogram(fields, edges: np.ndarray | None = None) -> DensityHistogram:
    """Pooled normalized histogram over all sites of all input fields."""
    arrays = []
    for f in fields:
        arrays.append(np.asarray(getattr(f, "values", f), dtype=float).ravel())
    if not arrays:
        raise ParameterError("histogram needs at least one field")
    data = np.concatenate(arrays)
    if edges is None:
        edges = np.linspace(0.0, 1.0, DEFAULT_BINS + 1)
    counts, edges = np.histogram(data, bins=edges)
    total = counts.sum()
    if total == 0:
        raise ParameterError("all samples fall outside the histogram range")
    return DensityHistogram(
        edges=edges, probability=counts / total, n_samples=int(data.size)
    )


def histogram_distance(h1: DensityHistogram, h2: DensityHistogram) -> float:
    """Total-variation distance (half the L1 difference), in [0, 1]."""
    if h1.edges.shape != h2.edges.shape or not np.allclose(h1.edges, h2.edges):
        raise ParameterError("histograms have mismatched bin edges")
    return float(0.5 * np.abs(h1.probability - h2.probability).sum())
