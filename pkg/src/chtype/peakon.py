"""Finite-dimensional pseudo-peakon dynamics.

An ``N``-pseudo-peakon ``u = sum_j p_j/2 exp(-|x-q_j|)(1+|x-q_j|)`` evolves by
the canonical Hamiltonian system with ``H = 1/2 sum_ij p_i p_j exp(-|q_i-q_j|)``,
the same finite system that governs Camassa-Holm peakons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from chtype.integrators import StepStats, StepSizeUnderflow, dopri45
from chtype.operators import Field, GridSpec

COLLISION_EPSILON = 1e-8
SEAM_MARGIN = 5.0


class SingularTimeError(ValueError):
    """The explicit 2-peakon solution is singular at t = 0."""


class IntegrationFailure(RuntimeError):
    def __init__(self, message, last_state):
        super().__init__(message)
        self.last_state = last_state


class DomainError(ValueError):
    """Peak positions too close to the periodic seam of the grid."""


@dataclass(frozen=True)
class PeakonState:
    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.array(self.q, dtype=float))
        p = np.atleast_1d(np.array(self.p, dtype=float))
        if q.ndim != 1 or q.shape != p.shape or q.size < 1:
            raise ValueError("q and p must be vectors of equal length >= 1")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.isfinite(self.t)):
            raise ValueError("peakon state must be finite")
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    @property
    def N(self) -> int:
        return self.q.size

    def min_separation(self) -> float:
        if self.N < 2:
            return np.inf
        return float(np.min(np.diff(np.sort(self.q))))

    def collided(self, epsilon: float = COLLISION_EPSILON) -> bool:
        return self.min_separation() < epsilon

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, t, z) -> "PeakonState":
        n = len(z) // 2
        return cls(t, z[:n], z[n:])


@dataclass(frozen=True)
class PeakonTrajectory:
    states: tuple
    stats: StepStats = field(default_factory=StepStats)
    collided: bool = False

    def __post_init__(self):
        steps = np.diff([s.t for s in self.states])
        if steps.size and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("trajectory times must be strictly monotone")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def q(self) -> np.ndarray:
        return np.array([s.q for s in self.states])

    @property
    def p(self) -> np.ndarray:
        return np.array([s.p for s in self.states])

    @property
    def final(self) -> PeakonState:
        return self.states[-1]


def hamiltonian(s: PeakonState) -> float:
    d = s.q[:, None] - s.q[None, :]
    return float(0.5 * s.p @ np.exp(-np.abs(d)) @ s.p)


def total_momentum(s: PeakonState) -> float:
    return float(np.sum(s.p))


def _rhs_arrays(q, p):
    d = q[:, None] - q[None, :]
    e = np.exp(-np.abs(d))
    dq = e @ p
    dp = p * ((np.sign(d) * e) @ p)
    return dq, dp


def peakon_rhs(s: PeakonState):
    """``(dH/dp, -dH/dq)`` with the convention ``sgn(0) = 0``."""
    return _rhs_arrays(s.q, s.p)


def integrate(s0: PeakonState, t_end: float, tol: float = 1e-12, *,
              monitor_times=None, collision_epsilon: float = COLLISION_EPSILON,
              ) -> PeakonTrajectory:
    """Integrate the peakon system with Dormand-Prince 5(4), ``rtol = atol = tol``.

    Stops early (``collided=True``) once two positions come within
    ``collision_epsilon``. Step-size underflow raises :class:`IntegrationFailure`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if s0.collided(collision_epsilon):
        raise ValueError("initial state is collided")
    n = s0.N

    def f(t, z):
        dq, dp = _rhs_arrays(z[:n], z[n:])
        return np.concatenate([dq, dp])

    def too_close(t, z):
        return n > 1 and np.min(np.diff(np.sort(z[:n]))) < collision_epsilon

    try:
        res = dopri45(f, s0.t, s0.as_vector(), t_end, rtol=tol, atol=tol,
                      output_times=monitor_times, on_step=too_close)
    except StepSizeUnderflow as exc:
        raise IntegrationFailure(str(exc), PeakonState.from_vector(exc.t, exc.y)) from exc
    states = tuple(PeakonState.from_vector(t, z) for t, z in zip(res.t, res.y))
    return PeakonTrajectory(states, res.stats, collided=res.stopped)


def two_peakon_exact(A: float, t: float) -> PeakonState:
    """``p1 = -p2 = A coth(At)``, ``q1 = -q2 = ln cosh(At)``."""
    if A == 0:
        raise ValueError("amplitude A must be nonzero")
    if t == 0:
        raise SingularTimeError("the 2-pseudo-peakon momenta blow up at t = 0")
    at = A * t
    q1 = np.logaddexp(at, -at) - np.log(2.0)
    p1 = A / np.tanh(at)
    return PeakonState(t, [q1, -q1], [p1, -p1])


def pseudo_peakon_profile(xi):
    """``exp(-|xi|)(1+|xi|)``; the single pseudo-peakon is ``c/2`` times this."""
    a = np.abs(xi)
    return np.exp(-a) * (1.0 + a)


def evaluate_2peakon_field(A: float, t: float, x):
    if t == 0:
        raise SingularTimeError("the 2-pseudo-peakon solution is singular at t = 0")
    at = A * t
    lc = np.logaddexp(at, -at) - np.log(2.0)
    amp = 0.5 * A / np.tanh(at)
    x = np.asarray(x, dtype=float)
    return amp * (pseudo_peakon_profile(x - lc) - pseudo_peakon_profile(x + lc))


def reconstruct(s: PeakonState, g: GridSpec):
    """Sample ``u`` and ``v = (1 - d^2) u`` of the ansatz; ``m`` comes back as delta weights ``2 p_j``."""
    if np.any(np.abs(s.q) > g.L - SEAM_MARGIN):
        raise DomainError(f"peaks must stay {SEAM_MARGIN} away from the seam at +-{g.L}")
    d = g.x[None, :] - s.q[:, None]
    u = 0.5 * s.p @ pseudo_peakon_profile(d)
    v = s.p @ np.exp(-np.abs(d))
    return Field(g, u), Field(g, v), 2.0 * s.p


def _piecewise_gauss_nodes(breaks, max_width, order=8):
    ref_x, ref_w = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        pieces = max(1, int(np.ceil((b - a) / max_width)))
        edges = np.linspace(a, b, pieces + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        xs.append((mid[:, None] + half[:, None] * ref_x).ravel())
        ws.append((half[:, None] * ref_w).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def weak_residual(s: PeakonState, eps: float, test_fn, bounds=(-30.0, 30.0)) -> float:
    """Pair the PDE residual of a mollified peakon momentum with ``test_fn``.

    ``m_eps = sum 2 p_j phi_eps(x - q_j)`` with a Gaussian ``phi_eps``; ``v`` is the
    exact ansatz value and ``(q, p)`` move by :func:`peakon_rhs`. Returns
    ``int (m_t + v m_x + 2 v_x m) psi dx``; the quadrature breaks at every ``q_j``
    because ``v_x`` jumps there.
    """
    dq, dp = peakon_rhs(s)
    lo, hi = bounds
    breaks = np.unique(np.concatenate([[lo, hi], s.q[(s.q > lo) & (s.q < hi)]]))
    x, w = _piecewise_gauss_nodes(breaks, eps / 4.0)
    d = x[None, :] - s.q[:, None]
    phi = np.exp(-0.5 * (d / eps) ** 2) / (eps * np.sqrt(2 * np.pi))
    dphi = -d / eps ** 2 * phi
    m = 2.0 * s.p @ phi
    m_x = 2.0 * s.p @ dphi
    m_t = 2.0 * dp @ phi - 2.0 * (s.p * dq) @ dphi
    e = np.exp(-np.abs(d))
    v = s.p @ e
    v_x = -(s.p @ (np.sign(d) * e))
    integrand = (m_t + v * m_x + 2.0 * v_x * m) * test_fn(x)
    return float(integrand @ w)
