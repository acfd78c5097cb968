"""Linear stability of the homogeneous state.

Perturbations e^(lambda t + i omega x1) * sum_k A_k cos(k theta) of the
uniform profile phi/(2 pi) satisfy a three-term recurrence in k, closed at
k = 0, 1 by the density and polarisation integrals.  The growth rate lambda
is the leading eigenvalue of the truncated n x n complex tridiagonal matrix

    [ W11 W12            ]
    [ W21 W22  b         ]
    [      b   a-4*DO  b ]  ...

with a = -DE*ds(phi)*omega^2 and b = -(v0/2)*i*omega*ds(phi).  Truncation
order n keeps the angular modes k = 0..n (matrix size n+1); the sequence of
truncated eigenvalues converges factorially fast.  The returned error
estimate is |b A_n A_{n+1}| with A_{n+1} extrapolated from the
decaying-solution tail ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coeffs import TransportCoefficients
from .errors import ConvergenceError, ParameterError
from .params import DimensionlessParams, PhysicalParams, to_physical

TWO_PI = 2.0 * math.pi

DIFFUSION = "diffusion"
RUN_AND_TUMBLE = "run_and_tumble"


@dataclass(frozen=True)
class StabilityProblem:
    phi: float
    params: PhysicalParams
    omega: float = TWO_PI
    n: int = 40
    orientation_dynamics: str = DIFFUSION

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise ParameterError(f"phi must lie in [0,1], got {self.phi}")
        if self.n < 2:
            raise ParameterError(f"truncation order must be >= 2, got {self.n}")
        k = self.omega / TWO_PI
        if self.omega <= 0 or abs(k - round(k)) > 1e-12:
            raise ParameterError(f"omega must be a positive multiple of 2*pi, got {self.omega}")
        if self.orientation_dynamics not in (DIFFUSION, RUN_AND_TUMBLE):
            raise ParameterError(f"unknown orientation dynamics {self.orientation_dynamics!r}")


@dataclass(frozen=True)
class StabilityResult:
    lambda_max: complex
    coefficients: np.ndarray  # A_0 .. A_n, unit-norm angular profile
    truncation_error: float
    n_used: int


def _angular_relaxation(k: int, D_O: float, dynamics: str) -> float:
    """Diagonal decay rate of angular mode k (k >= 1)."""
    if dynamics == RUN_AND_TUMBLE:
        return D_O
    return k * k * D_O


def build_matrix(p: StabilityProblem, coeffs: TransportCoefficients | None = None) -> np.ndarray:
    coeffs = coeffs or TransportCoefficients()
    D_E, v0, D_O = p.params.D_E, p.params.v0, p.params.D_O
    w = p.omega
    dsv = float(coeffs.ds(p.phi))
    dspv = float(coeffs.ds_prime(p.phi))
    a = -D_E * dsv * w * w
    b = -0.5 * v0 * 1j * w * dsv

    size = p.n + 1  # angular modes k = 0..n
    m = np.zeros((size, size), dtype=complex)
    m[0, 0] = -D_E * w * w
    m[0, 1] = -0.5 * v0 * 1j * w * (1.0 - p.phi)
    m[1, 0] = 2.0 * b - v0 * 1j * w * p.phi * dspv
    m[1, 1] = a - _angular_relaxation(1, D_O, p.orientation_dynamics)
    m[1, 2] = b
    for k in range(2, size):
        m[k, k - 1] = b
        m[k, k] = a - _angular_relaxation(k, D_O, p.orientation_dynamics)
        if k + 1 < size:
            m[k, k + 1] = b
    return m


def _normalize(vec: np.ndarray) -> np.ndarray:
    """Unit L2(T^2 x S) norm of Re[sum_k A_k cos(k theta) e^(i omega x1)]."""
    weights = np.full(vec.size, math.pi)
    weights[0] = TWO_PI
    norm_sq = 0.5 * float(weights @ (np.abs(vec) ** 2))
    vec = vec / math.sqrt(norm_sq)
    # phase gauge: A_0 real nonnegative (fall back to the largest coefficient)
    pivot = vec[0]
    if abs(pivot) < 1e-12 * np.max(np.abs(vec)):
        pivot = vec[np.argmax(np.abs(vec))]
    phase = pivot / abs(pivot)
    return vec / phase


def leading_eigenpair(
    p: StabilityProblem, coeffs: TransportCoefficients | None = None
) -> StabilityResult:
    coeffs = coeffs or TransportCoefficients()
    m = build_matrix(p, coeffs)
    try:
        eigvals, eigvecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"dense eigensolve failed: {exc}") from exc
    idx = int(np.argmax(eigvals.real))
    lam = eigvals[idx]
    vec = eigvecs[:, idx]

    m_norm = np.max(np.sum(np.abs(m), axis=1))
    residual = np.max(np.abs(m @ vec - lam * vec)) / np.max(np.abs(vec))
    if m_norm > 0 and residual > 1e-10 * m_norm:
        raise ConvergenceError(
            f"eigenpair residual {residual:.3e} exceeds 1e-10 * ||M||_inf = {1e-10 * m_norm:.3e}"
        )

    vec = _normalize(vec)
    D_E, v0, D_O = p.params.D_E, p.params.v0, p.params.D_O
    dsv = float(coeffs.ds(p.phi))
    a = -D_E * dsv * p.omega**2
    b = -0.5 * v0 * 1j * p.omega * dsv
    k = p.n
    denom = a - _angular_relaxation(k, D_O, p.orientation_dynamics) - lam
    a_next = vec[-1] * b / denom if denom != 0 else 0.0
    trunc = abs(b * vec[-1] * a_next) / float(np.linalg.norm(vec))
    return StabilityResult(
        lambda_max=complex(lam),
        coefficients=vec,
        truncation_error=float(trunc),
        n_used=p.n,
    )


def leading_eigenvalue(
    phi: float,
    d: DimensionlessParams | None = None,
    *,
    Pe: float | None = None,
    ell: float = 0.5,
    D_E: float = 1.0,
    omega: float = TWO_PI,
    n: int = 40,
    orientation_dynamics: str = DIFFUSION,
    coeffs: TransportCoefficients | None = None,
) -> complex:
    """Convenience wrapper working directly in (phi, Pe, ell)."""
    if d is None:
        d = DimensionlessParams(phi=phi, Pe=Pe, ell=ell)
    prob = StabilityProblem(
        phi=phi,
        params=to_physical(d, D_E=D_E),
        omega=omega,
        n=n,
        orientation_dynamics=orientation_dynamics,
    )
    return leading_eigenpair(prob, coeffs).lambda_max


@dataclass(frozen=True)
class BoundaryResult:
    pe_star: float | None
    diagnostic: str = ""


def boundary_pe(
    phi: float,
    *,
    ell: float = 0.5,
    D_E: float = 1.0,
    omega: float = TWO_PI,
    n: int = 40,
    pe_bracket: tuple[float, float] = (0.0, 40.0),
    tol: float = 1e-3,
    orientation_dynamics: str = DIFFUSION,
    coeffs: TransportCoefficients | None = None,
) -> BoundaryResult:
    """Critical Pe where Re(lambda_max) changes sign, by pre-scan + bisection.

    Returns pe_star=None when the state stays stable over the whole bracket.
    A pre-scan at unit Pe spacing locates the lowest crossing if several exist.
    """
    if not 0.0 < phi < 1.0:
        raise ParameterError(f"phi must lie in (0,1), got {phi}")
    coeffs = coeffs or TransportCoefficients()

    def growth(pe: float) -> float:
        return leading_eigenvalue(
            phi, Pe=pe, ell=ell, D_E=D_E, omega=omega, n=n,
            orientation_dynamics=orientation_dynamics, coeffs=coeffs,
        ).real

    lo, hi = pe_bracket
    pes = np.arange(lo, hi, 1.0)
    pes = np.append(pes, hi)
    prev_pe, prev_g = pes[0], growth(pes[0])
    if prev_g > 0:
        return BoundaryResult(pe_star=float(prev_pe), diagnostic="unstable at bracket start")
    for pe in pes[1:]:
        g = growth(pe)
        if g > 0:
            break
        prev_pe, prev_g = pe, g
    else:
        return BoundaryResult(pe_star=None, diagnostic="Re(lambda) < 0 over the whole bracket")

    a, b = float(prev_pe), float(pe)
    while b - a > tol:
        mid = 0.5 * (a + b)
        if growth(mid) > 0:
            b = mid
        else:
            a = mid
    return BoundaryResult(pe_star=0.5 * (a + b))


def spinodal_pe(phi: float, coeffs: TransportCoefficients | None = None) -> float | None:
    """Sharp-interface (ell -> 0) critical Pe, or None where stable for all Pe."""
    if not 0.0 < phi < 1.0:
        raise ParameterError(f"phi must lie in (0,1), got {phi}")
    coeffs = coeffs or TransportCoefficients()
    g = float(coeffs.ds(phi)) + phi * float(coeffs.ds_prime(phi))
    if g >= 0.0:
        return None
    return math.sqrt(-1.0 / ((1.0 - phi) * g))
