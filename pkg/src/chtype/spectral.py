"""Multi-pseudo-peakons from spectral data via Hankel determinants of moments.

The peakon system in the variables ``x_j = q_j / 2``, ``m_j = 2 p_j`` and
``tau = t / 2`` is solved explicitly by

    x_j = 1/2 log((1 + y_j) / (1 - y_j)),   m_j = g_j (1 - y_j^2),
    y_j = 1 - D(N-j, 2) / D(N-j+1, 0),
    g_j = D(N-j+1, 0)^2 / (D(N-j+1, 1) D(N-j, 1)),

with ``D(k, l)`` the Hankel determinant of the moments
``A_k = sum_{j>=0} (-lambda_j)^k a_j(tau)``, ``a_0 = 1/2``, ``lambda_0 = 0`` and
``a_j(tau) = a_j(0) exp(-2 tau / lambda_j)``.

Index convention. ``D(k, l)`` is the ``k x k`` determinant of ``A_{i+j+l}``
with ``i, j = 0 .. k-1`` (``D(0, l) = 1``). Reading the index range as
``1 .. k-1`` instead gives a matrix of size ``k-1`` and freezes a single
peakon in place; that reading is kept as ``base=1`` only so the tests can show
it fails. With ``lambda_j > 0`` the resulting positions come out ordered
``q_1 < q_2 < ... < q_N`` and ``p_j -> -1/lambda_j`` as ``t -> infinity``.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from chtype.peakon import PeakonState

A_ZERO = 0.5
EXTENDED_DPS = 50
# Hankel systems beyond this condition number go to the extended-precision path.
COND_LIMIT = 1e9


class SpectralMapError(ArithmeticError):
    """Determinant data outside the domain of the explicit formulas."""


@dataclass(frozen=True)
class SpectralData:
    lambdas: np.ndarray
    a0s: np.ndarray
    a_zero: float = A_ZERO

    def __post_init__(self):
        lam = np.atleast_1d(np.array(self.lambdas, dtype=float))
        a0 = np.atleast_1d(np.array(self.a0s, dtype=float))
        if lam.ndim != 1 or lam.shape != a0.shape or lam.size < 1:
            raise ValueError("lambdas and a0s must be vectors of equal length >= 1")
        if np.any(lam == 0):
            raise ValueError("eigenvalues must be nonzero")
        if not (np.all(lam > 0) or np.all(lam < 0)):
            raise ValueError("eigenvalues must all have the same sign")
        if np.unique(lam).size != lam.size:
            raise ValueError("eigenvalues must be distinct")
        if np.any(a0 <= 0):
            raise ValueError("initial weights must be positive")
        lam.flags.writeable = False
        a0.flags.writeable = False
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "a0s", a0)

    @property
    def N(self) -> int:
        return self.lambdas.size


def evolve_weights(d: SpectralData, tau: float) -> np.ndarray:
    """``a_j(tau) = a_j(0) exp(-2 tau / lambda_j)`` for ``j >= 1`` (``a_0`` stays 1/2)."""
    return d.a0s * np.exp(-2.0 * tau / d.lambdas)


def moments(d: SpectralData, tau: float, k_max: int) -> np.ndarray:
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    a = evolve_weights(d, tau)
    powers = (-d.lambdas[None, :]) ** np.arange(k_max + 1)[:, None]
    out = powers @ a
    out[0] += d.a_zero
    return out


def _moments_mp(d: SpectralData, tau, k_max: int):
    tau = mpmath.mpf(tau)
    lams = [mpmath.mpf(float(x)) for x in d.lambdas]
    a = [mpmath.mpf(float(a0)) * mpmath.exp(-2 * tau / lam) for a0, lam in zip(d.a0s, lams)]
    out = [sum((-lam) ** k * aj for lam, aj in zip(lams, a)) for k in range(k_max + 1)]
    out[0] += mpmath.mpf(d.a_zero)
    return out


def hankel_matrix(A, k: int, l: int, base: int = 0):
    size = k if base == 0 else k - 1
    if size <= 0:
        return None
    top = 2 * (size - 1) + l + 2 * base
    if top >= len(A):
        raise ValueError(f"need moments up to A_{top}, only {len(A)} supplied")
    idx = np.arange(size) + base
    return [[A[i + j + l] for j in idx] for i in idx]


def hankel_delta(A, k: int, l: int, base: int = 0):
    """Hankel determinant ``det(A_{i+j+l})`` over ``i, j = base .. base+size-1``.

    ``base=0`` (the default) uses size ``k``; ``base=1`` uses size ``k - 1``.
    Empty determinants are 1. Works on float arrays or ``mpmath`` lists.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    rows = hankel_matrix(A, k, l, base)
    if rows is None:
        return 1.0 if not isinstance(A[0], mpmath.mpf) else mpmath.mpf(1)
    if isinstance(A[0], mpmath.mpf):
        return mpmath.det(mpmath.matrix(rows))
    return float(np.linalg.det(np.array(rows, dtype=float)))


def _needs_extended(A, N) -> bool:
    for k in range(1, N + 1):
        for l in (0, 1, 2):
            rows = hankel_matrix(A, k, l)
            if rows is None or (l == 2 and k > N - 1):
                continue
            if np.linalg.cond(np.array(rows)) > COND_LIMIT:
                return True
    return False


def _positions_momenta(A, N, base, log, one):
    q = []
    p = []
    for j in range(1, N + 1):
        top = hankel_delta(A, N - j + 1, 0, base)
        d2 = hankel_delta(A, N - j, 2, base)
        d1a = hankel_delta(A, N - j + 1, 1, base)
        d1b = hankel_delta(A, N - j, 1, base)
        if top == 0 or d1a == 0 or d1b == 0:
            raise SpectralMapError(f"vanishing determinant for peakon {j}")
        y = one - d2 / top
        if not (-one < y < one):
            raise SpectralMapError(f"y_{j} = {float(y)!r} outside (-1, 1)")
        g = top ** 2 / (d1a * d1b)
        x = log((one + y) / (one - y)) / 2
        m = g * (one - y * y)
        q.append(float(2 * x))
        p.append(float(m / 2))
    return np.array(q), np.array(p)


def peakon_state_from_spectral(d: SpectralData, t: float, *, precision: str = "auto",
                               base: int = 0) -> PeakonState:
    """Evaluate the explicit solution at time ``t`` (``tau = t/2``, ``q = 2x``, ``p = m/2``).

    ``precision`` is ``"double"``, ``"extended"`` or ``"auto"``; auto switches to
    ``mpmath`` when ``N >= 5``, a Hankel matrix is badly conditioned, or the
    double-precision evaluation leaves the domain of the formulas.
    """
    N = d.N
    tau = t / 2.0
    k_max = 2 * N + 2
    use_mp = precision == "extended"
    if precision == "auto":
        if N >= 5:
            use_mp = True
        else:
            A = moments(d, tau, k_max)
            use_mp = _needs_extended(A, N)
    elif precision not in ("double", "extended"):
        raise ValueError(f"unknown precision {precision!r}")

    if not use_mp:
        try:
            A = moments(d, tau, k_max)
            q, p = _positions_momenta(A, N, base, np.log, 1.0)
            return PeakonState(t, q, p)
        except SpectralMapError:
            if precision == "double":
                raise
    # positions far from the origin need ~|q|/ln(10) extra digits, since 1 -+ y ~ exp(-|q|)
    reach = abs(tau) * float(np.max(2.0 / np.abs(d.lambdas))) + float(np.max(np.abs(np.log(d.a0s))))
    dps = EXTENDED_DPS + int(np.ceil(2 * reach / np.log(10)))
    with mpmath.workdps(dps):
        A = _moments_mp(d, tau, k_max)
        q, p = _positions_momenta(A, N, base, mpmath.log, mpmath.mpf(1))
    return PeakonState(t, q, p)


def spectral_trajectory(d: SpectralData, times, **kwargs) -> list:
    return [peakon_state_from_spectral(d, float(t), **kwargs) for t in times]
