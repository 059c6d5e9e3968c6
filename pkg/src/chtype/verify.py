"""Integrability checks for the order-``2n+1`` equation and its alternative forms.

With ``A = A_2n``, ``B = B_2n = dC/dx`` and ``C = C_2n`` the Lax pair is

    X = [[0, lambda/2 + A(u)], [1/(2 lambda), 0]]
    T = [[B(u)/2, C(u) A(u) - lambda C(u)/2 - lambda^2/2],
         [-1/2 + C(u)/(2 lambda), -B(u)/2]]

and ``X_t - T_x + [X, T]`` vanishes except in the upper-right entry, which is
``A(u)_t - 2 C(u)_x A(u) - C(u) A(u)_x``, the equation itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from chtype.operators import (
    Field,
    GridSpec,
    OperatorKind,
    apply_operator,
    apply_symbol,
    derivative_symbol,
    invert_neg_A2n,
    neg_A_symbol,
    upsample,
)
from chtype.pde import PdeSolution, m_from_u


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if lam == 0 or not np.isfinite(lam):
        raise ValueError("spectral parameter must be a nonzero finite number")
    return lam


def _dx(values: np.ndarray, grid: GridSpec, order: int = 1) -> np.ndarray:
    return apply_symbol(values, derivative_symbol(grid, order))


def _ABC(u: Field, n: int):
    return tuple(apply_operator(u, OperatorKind(c, n)).values for c in "ABC")


# --- Lax pair ---------------------------------------------------------------------


@dataclass(frozen=True)
class LaxPair:
    """``X`` and ``T`` at one instant, stored as ``(2, 2, N)`` arrays."""

    grid: GridSpec
    lam: float
    n: int
    X: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        _check_lambda(self.lam)
        shape = (2, 2, self.grid.N)
        if self.X.shape != shape or self.T.shape != shape:
            raise ValueError(f"matrix fields must have shape {shape}")

    def entry(self, which: str, i: int, j: int) -> Field:
        return Field(self.grid, getattr(self, which)[i, j])


def build_lax(u: Field, lam: float, n: int = 2) -> LaxPair:
    lam = _check_lambda(lam)
    A, B, C = _ABC(u, n)
    one = np.ones_like(A)
    X = np.array([[0 * one, 0.5 * lam + A], [one / (2 * lam), 0 * one]])
    T = np.array([[0.5 * B, C * A - 0.5 * lam * C - 0.5 * lam ** 2 * one],
                  [-0.5 * one + C / (2 * lam), -0.5 * B]])
    return LaxPair(u.grid, lam, n, X, T)


def _commutator(X, T):
    return np.einsum("ijx,jkx->ikx", X, T) - np.einsum("ijx,jkx->ikx", T, X)


def curvature(X_t: np.ndarray, pair: LaxPair) -> np.ndarray:
    """``X_t - T_x + [X, T]`` for a given time derivative of ``X``."""
    T_x = _dx(pair.T, pair.grid)
    return X_t - T_x + _commutator(pair.X, pair.T)


def zero_curvature_residual(sol: PdeSolution, lam: float, t: float,
                            n: Optional[int] = None) -> Field:
    """Pointwise Frobenius norm of the curvature at snapshot time ``t``.

    ``X_t`` is the centered difference of ``X`` over the neighbouring snapshots,
    so ``t`` must be an interior snapshot time and the result carries an
    ``O(dt^2)`` error from that difference.
    """
    n = sol.n if n is None else n
    i = sol.index_of(t)
    if i == 0 or i == len(sol.times) - 1:
        raise ValueError("zero-curvature residual needs an interior snapshot time")
    pairs = [build_lax(sol.u(j), lam, n) for j in (i - 1, i, i + 1)]
    X_t = (pairs[2].X - pairs[0].X) / (sol.times[i + 1] - sol.times[i - 1])
    if not np.isclose(sol.times[i + 1] - sol.times[i], sol.times[i] - sol.times[i - 1],
                      rtol=1e-9):
        raise ValueError("snapshots around t are not equally spaced")
    R = curvature(X_t, pairs[1])
    return Field(sol.grid, np.sqrt(np.sum(R ** 2, axis=(0, 1))))


# --- Riccati pseudo-potential ----------------------------------------------------------


@dataclass(frozen=True)
class PseudoPotential:
    """``Gamma`` on the grid; ``escaped`` marks nodes at and after a finite-x escape."""

    gamma: Field
    escaped: np.ndarray
    lam: float
    n: int

    @property
    def ok(self) -> bool:
        return not bool(self.escaped.any())


def _riccati_rhs(g, a, lam):
    return 0.5 * lam + a - g * g / (2.0 * lam)


def riccati_pseudopotential(u: Field, lam: float, n: int = 2,
                            gamma_left: Optional[float] = None, substeps: int = 4,
                            escape: float = 1e8) -> PseudoPotential:
    """Integrate ``Gamma_x = lambda/2 + A_2n(u) - Gamma^2/(2 lambda)`` left to right.

    Classical RK4 with ``substeps`` steps per grid cell; the forcing ``A_2n(u)``
    at the intermediate points comes from trigonometric interpolation. The
    default seed ``Gamma = lambda`` is the attracting rest point for ``u = 0``.
    Once ``|Gamma|`` passes ``escape * max(1, |lambda|)`` the remaining nodes are
    masked and set to NaN.
    """
    lam = _check_lambda(lam)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    g0 = lam if gamma_left is None else float(gamma_left)
    grid = u.grid
    A = apply_operator(u, OperatorKind("A", n)).values
    fine = upsample(A, 2 * substeps)
    fine = np.append(fine, fine[0])
    h = grid.h / substeps
    N = grid.N
    out = np.full(N, np.nan)
    escaped = np.zeros(N, dtype=bool)
    limit = escape * max(1.0, abs(lam))
    g = g0
    out[0] = g
    # an escaping solution may overflow inside one RK4 stage; the finiteness check catches it
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(N - 1):
            base = 2 * substeps * i
            for s in range(substeps):
                j = base + 2 * s
                a0, am, a1 = fine[j], fine[j + 1], fine[j + 2]
                k1 = _riccati_rhs(g, a0, lam)
                k2 = _riccati_rhs(g + 0.5 * h * k1, am, lam)
                k3 = _riccati_rhs(g + 0.5 * h * k2, am, lam)
                k4 = _riccati_rhs(g + h * k3, a1, lam)
                g = g + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.isfinite(g) or abs(g) > limit:
                escaped[i + 1:] = True
                break
            out[i + 1] = g
    return PseudoPotential(Field(grid, out, diagnostic=True), escaped, lam, n)


def conservation_flux(u: Field, gamma: np.ndarray, lam: float, n: int = 2) -> np.ndarray:
    """x-derivative of the flux ``-B(u) - Gamma (1 - C(u)/lambda)``.

    ``Gamma_x`` is taken from the Riccati equation itself, so ``Gamma`` does not
    need to be periodic.
    """
    A, B, C = _ABC(u, n)
    g = u.grid
    gamma_x = _riccati_rhs(gamma, A, lam)
    return -_dx(B, g) - gamma_x * (1.0 - C / lam) + gamma * _dx(C, g) / lam


@dataclass(frozen=True)
class ConservationResidual:
    t: float
    lam: float
    evaluable: bool
    residual: float
    message: str = ""


def conservation_law_residual(sol: PdeSolution, lam: float, t: float,
                              n: Optional[int] = None,
                              gamma_left: Optional[float] = None) -> ConservationResidual:
    """Sup norm of ``(Gamma/lambda)_t - (flux)_x`` at interior snapshot ``t``."""
    lam = _check_lambda(lam)
    n = sol.n if n is None else n
    i = sol.index_of(t)
    if i == 0 or i == len(sol.times) - 1:
        raise ValueError("conservation-law residual needs an interior snapshot time")
    pots = [riccati_pseudopotential(sol.u(j), lam, n, gamma_left) for j in (i - 1, i, i + 1)]
    if not all(p.ok for p in pots):
        return ConservationResidual(float(t), lam, False, float("nan"),
                                    "Riccati escape inside the time window")
    dt = sol.times[i + 1] - sol.times[i - 1]
    lhs = (pots[2].gamma.values - pots[0].gamma.values) / (lam * dt)
    rhs = conservation_flux(sol.u(i), pots[1].gamma.values, lam, n)
    return ConservationResidual(float(t), lam, True, float(np.max(np.abs(lhs - rhs))))


# --- conserved densities ---------------------------------------------------------------


@dataclass
class DensityLadder:
    """Densities from the two expansions of the pseudo-potential.

    ``gammas[j]`` is ``gamma_{j+1}`` (NaN outside ``mask``); ``gamma_tildes[j]``
    is ``tilde gamma_j``. ``H1`` is the energy density.
    """

    grid: GridSpec
    mask: np.ndarray
    gammas: list
    gamma_tildes: list
    H1: np.ndarray
    notes: list = field(default_factory=list)


def _masked(values, mask):
    out = np.full(values.shape, np.nan)
    out[mask] = values[mask]
    return out


def density_ladder(m: Field, K: int = 3, n: int = 2, mask_tol: float = 1e-8) -> DensityLadder:
    """``gamma_1 .. gamma_K`` on the set ``-m > mask_tol * max|m|`` and ``tilde gamma_0 .. tilde gamma_K``.

    The first three ``gamma`` come from closed forms in ``m, m_x, m_xx``; from
    ``gamma_4`` on the recursion
    ``gamma_{k+1} = -gamma_{k,x}/gamma_1 - (1/(2 gamma_1)) sum_{j=2}^{k} gamma_j gamma_{k+2-j}``
    needs spectral derivatives and therefore a mask covering the whole grid.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    g = m.grid
    mv = m.values
    notes = []
    scale = float(np.max(np.abs(mv))) if mv.size else 0.0
    mask = -mv > mask_tol * scale if scale > 0 else np.zeros(mv.shape, dtype=bool)

    gammas = []
    if not mask.any():
        notes.append("gamma branch skipped: -m is not positive anywhere")
    else:
        m_x = _dx(mv, g)
        m_xx = _dx(mv, g, 2)
        # values outside the mask are discarded, so floating-point warnings there are noise
        with np.errstate(all="ignore"):
            g1 = np.sqrt(2.0 * np.where(mask, -mv, np.nan))
            g2 = -0.5 * m_x / mv
            g2_x = -0.5 * (m_xx / mv - (m_x / mv) ** 2)
            g3 = (0.5 - g2_x - 0.5 * g2 ** 2) / g1
        gammas = [_masked(g1, mask), _masked(g2, mask), _masked(g3, mask)][:K]
        if K > 3:
            if mask.all():
                for k in range(3, K):
                    gk_x = _dx(gammas[k - 1], g)
                    s = sum(gammas[j - 1] * gammas[k + 1 - j] for j in range(2, k + 1))
                    gammas.append(-gk_x / g1 - s / (2.0 * g1))
            else:
                notes.append(f"gamma_4..gamma_{K} need -m > 0 on the whole grid")

    one_plus_ik = 1.0 + 1j * g.k
    tildes = [apply_symbol(-mv, 1.0 / one_plus_ik)]
    for k in range(1, K + 1):
        s = sum(tildes[j] * tildes[k - 1 - j] for j in range(k))
        tildes.append(apply_symbol(-0.5 * s, 1.0 / one_plus_ik))

    u = invert_neg_A2n(m, n).values
    d1, d2, d3 = (_dx(u, g, j) for j in (1, 2, 3))
    H1 = d3 ** 2 + 3 * d2 ** 2 + 3 * d1 ** 2 + u ** 2
    return DensityLadder(g, mask, gammas, tildes, H1, notes)


def nonlocal_density(m: Field, n: int = 2) -> float:
    """``int (u_xxx - u_xx) tilde gamma_1 - 1/2 int u tilde gamma_0^2`` (diagnostic only)."""
    lad = density_ladder(m, K=1, n=n)
    u = invert_neg_A2n(m, n).values
    g = m.grid
    val = (_dx(u, g, 3) - _dx(u, g, 2)) * lad.gamma_tildes[1] - 0.5 * u * lad.gamma_tildes[0] ** 2
    return float(np.sum(val) * g.h)


DENSITIES = ("H1", "momentum", "gamma1", "gamma_tilde0", "nonlocal_J")


@dataclass(frozen=True)
class DriftReport:
    which: str
    times: np.ndarray
    values: np.ndarray
    max_relative_drift: float
    evaluable: bool
    message: str = ""

    def as_dict(self):
        return {"which": self.which, "times": self.times.tolist(),
                "values": self.values.tolist(),
                "max_relative_drift": self.max_relative_drift,
                "evaluable": self.evaluable, "message": self.message}


def _density_integral(m: Field, which: str, n: int) -> float:
    g = m.grid
    if which == "H1":
        return float(np.sum(density_ladder(m, 1, n).H1) * g.h)
    if which == "momentum":
        return m.integral()
    if which == "gamma1":
        lad = density_ladder(m, 1, n)
        if not lad.mask.all():
            raise ValueError("gamma_1 needs -m > 0 on the whole grid")
        return float(np.sum(lad.gammas[0]) * g.h)
    if which == "gamma_tilde0":
        return float(np.sum(density_ladder(m, 0 + 1, n).gamma_tildes[0]) * g.h)
    if which == "nonlocal_J":
        return nonlocal_density(m, n)
    raise ValueError(f"unknown density {which!r}; choose from {DENSITIES}")


def density_conservation_check(sol: PdeSolution, which: str) -> DriftReport:
    """Time series of ``int density dx`` over the snapshots and its largest relative drift."""
    if which not in DENSITIES:
        raise ValueError(f"unknown density {which!r}; choose from {DENSITIES}")
    try:
        vals = np.array([_density_integral(m, which, sol.n) for m in sol.snapshots])
    except ValueError as exc:
        return DriftReport(which, sol.times, np.array([]), float("nan"), False, str(exc))
    ref = abs(vals[0]) if vals[0] != 0 else max(1.0, float(np.max(np.abs(vals))))
    drift = float(np.max(np.abs(vals - vals[0])) / ref)
    return DriftReport(which, sol.times, vals, drift, True)


# --- alternative formulations -----------------------------------------------------------


def hamiltonian_variational_derivative(u: Field, n: int = 2) -> Field:
    """``dH/du`` for ``H = 1/2 int v m``; for ``n = 2`` this is ``(1 - d^2)^3 u``."""
    k2 = u.grid.k ** 2
    s = neg_A_symbol(u.grid.k, n) / (1.0 + k2)
    return u.with_values(apply_symbol(u.values, (1.0 + k2) * s * s))


def hamiltonian_form_rhs(u: Field, n: int = 2) -> Field:
    """``m_t = -(d m + m d) w`` with ``w = (-A_2n)^-1 dH/du``."""
    g = u.grid
    if n == 2:
        d = {j: _dx(u.values, g, j) for j in (2, 4, 6)}
        var = u.values - 3 * d[2] + 3 * d[4] - d[6]
    else:
        var = hamiltonian_variational_derivative(u, n).values
    w = apply_symbol(var, 1.0 / neg_A_symbol(g.k, n))
    m = m_from_u(u, n).values
    return u.with_values(-_dx(m * w, g) - m * _dx(w, g))


def euler_form_rhs(X: Field, n: int = 2) -> Field:
    """``X_t = ad_A(C(X)) X = A^-1 {2 C(X)' A(X) + C(X) A(X)'}``, returned as ``u_t``."""
    g = X.grid
    A = apply_operator(X, OperatorKind("A", n)).values
    C = apply_operator(X, OperatorKind("C", n)).values
    inner = 2 * _dx(C, g) * A + C * _dx(A, g)
    return X.with_values(apply_symbol(inner, -1.0 / neg_A_symbol(g.k, n)))
