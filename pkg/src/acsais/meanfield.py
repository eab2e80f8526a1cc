"""Mean-field dynamics of the adaptive-contact SAIS model.

Per node ``i`` with ``s_i = sum_j w^S_ij p_j`` and ``a_i = sum_j w^A_ij p_j``::

    dp_i/dt = -delta p_i + beta (1 - p_i - q_i) s_i + beta q_i a_i
    dq_i/dt =  kappa (1 - p_i - q_i) s_i - beta q_i a_i

Steady states are reached by fixed-step RK4.  The stepping loop is
compiled with numba; :func:`mf_derivative` is the plain numpy version and
the two are cross-checked in the test suite.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import AcsaisError, BracketError, InputValidationError, IntegrationError
from .netcore import MultilayerNetwork
from .npf import _ensure_m_connected
from .spectral import spectral_radius

CLAMP_TOL = 1e-12
PREVALENCE_CUTOFF = 1e-6
DEFAULT_SETTLE_TOL = 1e-10
DEFAULT_INIT_P = 0.01
MAX_HALVINGS = 12


@dataclass(frozen=True)
class EpidemicParams:
    """Infection rate ``beta``, curing rate ``delta`` and alerting rate ``kappa``."""

    beta: float
    delta: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise InputValidationError(f"beta must be finite and >= 0, got {self.beta}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InputValidationError(f"delta must be finite and > 0, got {self.delta}")
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise InputValidationError(f"kappa must be finite and >= 0, got {self.kappa}")

    @classmethod
    def from_tau(cls, tau, kappa_bar, delta=1.0) -> "EpidemicParams":
        beta = tau * delta
        return cls(beta, delta, kappa_bar * beta)

    @property
    def tau(self) -> float:
        return self.beta / self.delta

    @property
    def kappa_bar(self) -> float:
        if self.beta == 0:
            return 0.0 if self.kappa == 0 else math.inf
        return self.kappa / self.beta


@dataclass
class MfState:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.p = np.array(self.p, dtype=float)
        self.q = np.array(self.q, dtype=float)
        if self.p.shape != self.q.shape or self.p.ndim != 1:
            raise InputValidationError("p and q must be 1-d arrays of equal length")

    def validate(self, tol=CLAMP_TOL):
        worst = simplex_violation(self.p, self.q)
        if worst > tol:
            raise InputValidationError(f"state leaves the probability simplex by {worst:.3e}")

    @property
    def prevalence(self) -> float:
        return float(self.p.mean())

    @classmethod
    def uniform(cls, n, p0=DEFAULT_INIT_P) -> "MfState":
        return cls(np.full(n, p0), np.zeros(n))


def simplex_violation(p, q) -> float:
    return float(max(0.0, -p.min(), -q.min(), (p + q - 1.0).max()))


def mf_derivative(state: MfState, net: MultilayerNetwork, params: EpidemicParams):
    """Right-hand sides ``(dp, dq)`` evaluated with dense matrix products."""
    p, q = state.p, state.q
    s = net.W_S @ p
    a = net.W_A @ p
    free = 1.0 - p - q
    dp = -params.delta * p + params.beta * (free * s + q * a)
    dq = params.kappa * free * s - params.beta * q * a
    return dp, dq


@numba.njit(cache=True)
def _rhs(sp, si, sw, ap, ai, aw, p, q, beta, delta, kappa, dp, dq):
    n = p.shape[0]
    worst = 0.0
    for i in range(n):
        s = 0.0
        for k in range(sp[i], sp[i + 1]):
            s += sw[k] * p[si[k]]
        a = 0.0
        for k in range(ap[i], ap[i + 1]):
            a += aw[k] * p[ai[k]]
        free = 1.0 - p[i] - q[i]
        dp[i] = -delta * p[i] + beta * (free * s + q[i] * a)
        dq[i] = kappa * free * s - beta * q[i] * a
        worst = max(worst, abs(dp[i]), abs(dq[i]))
    return worst


@numba.njit(cache=True)
def _rk4_run(sp, si, sw, ap, ai, aw, p, q, beta, delta, kappa, dt, max_steps, settle_tol, clamp_tol):
    """Advance ``p, q`` in place.

    Returns ``(status, steps, derivative_norm, violation)`` with status 0 for
    settled, 1 for step budget used up, 2 for a simplex breach larger than
    ``clamp_tol`` (the offending step is not applied).
    """
    n = p.shape[0]
    k1p = np.empty(n); k1q = np.empty(n)
    k2p = np.empty(n); k2q = np.empty(n)
    k3p = np.empty(n); k3q = np.empty(n)
    k4p = np.empty(n); k4q = np.empty(n)
    tp = np.empty(n); tq = np.empty(n)
    norm = 0.0
    for step in range(max_steps):
        norm = _rhs(sp, si, sw, ap, ai, aw, p, q, beta, delta, kappa, k1p, k1q)
        if norm <= settle_tol:
            return 0, step, norm, 0.0
        for i in range(n):
            tp[i] = p[i] + 0.5 * dt * k1p[i]
            tq[i] = q[i] + 0.5 * dt * k1q[i]
        _rhs(sp, si, sw, ap, ai, aw, tp, tq, beta, delta, kappa, k2p, k2q)
        for i in range(n):
            tp[i] = p[i] + 0.5 * dt * k2p[i]
            tq[i] = q[i] + 0.5 * dt * k2q[i]
        _rhs(sp, si, sw, ap, ai, aw, tp, tq, beta, delta, kappa, k3p, k3q)
        for i in range(n):
            tp[i] = p[i] + dt * k3p[i]
            tq[i] = q[i] + dt * k3q[i]
        _rhs(sp, si, sw, ap, ai, aw, tp, tq, beta, delta, kappa, k4p, k4q)
        worst = 0.0
        for i in range(n):
            tp[i] = p[i] + dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i])
            tq[i] = q[i] + dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i])
            worst = max(worst, -tp[i], -tq[i], tp[i] + tq[i] - 1.0)
        if worst > clamp_tol:
            return 2, step, norm, worst
        for i in range(n):
            pi = min(max(tp[i], 0.0), 1.0)
            qi = min(max(tq[i], 0.0), 1.0 - pi)
            p[i] = pi
            q[i] = qi
    return 1, max_steps, norm, 0.0


@dataclass
class SteadyState:
    state: MfState
    settled: bool
    t: float
    steps: int
    dt: float
    derivative_norm: float
    history: list = field(default_factory=list)

    @property
    def prevalence(self) -> float:
        return self.state.prevalence


def integrate_to_steady_state(net: MultilayerNetwork, params: EpidemicParams, init: MfState | None = None,
                              dt=None, t_max=None, settle_tol=DEFAULT_SETTLE_TOL, record_every=None) -> SteadyState:
    """Integrate until ``max(|dp|, |dq|) <= settle_tol`` or until ``t_max``.

    ``dt`` defaults to ``0.01/delta`` and ``t_max`` to ``1e4/delta``.  When
    a step would leave the simplex by more than ``CLAMP_TOL`` the step size
    is halved (up to ``MAX_HALVINGS`` times); smaller round-off is clamped.
    ``record_every`` (a time span) stores ``(t, p, q)`` snapshots in
    ``history``.
    """
    dt = 0.01 / params.delta if dt is None else float(dt)
    t_max = 1e4 / params.delta if t_max is None else float(t_max)
    if dt <= 0 or t_max <= 0:
        raise InputValidationError("dt and t_max must be positive")
    state = MfState.uniform(net.n) if init is None else MfState(init.p, init.q)
    if state.p.shape[0] != net.n:
        raise InputValidationError(f"initial state has {state.p.shape[0]} nodes, network has {net.n}")
    state.validate()
    p, q = state.p, state.q
    sp, si, sw = net.layer_s.csr
    ap, ai, aw = net.layer_a.csr
    t, steps, halvings = 0.0, 0, 0
    history = [(0.0, p.copy(), q.copy())] if record_every else []
    norm = math.inf
    while t < t_max * (1 - 1e-12):
        horizon = t_max - t
        if record_every:
            horizon = min(horizon, record_every)
        budget = max(1, int(round(horizon / dt)))
        status, done, norm, worst = _rk4_run(sp, si, sw, ap, ai, aw, p, q, params.beta, params.delta,
                                             params.kappa, dt, budget, settle_tol, CLAMP_TOL)
        t += done * dt
        steps += done
        if status == 0:
            if record_every:
                history.append((t, p.copy(), q.copy()))
            return SteadyState(MfState(p, q), True, t, steps, dt, norm, history)
        if status == 2:
            halvings += 1
            if halvings > MAX_HALVINGS:
                raise IntegrationError(
                    f"state left the simplex by {worst:.3e} at t={t:.4g} even with dt={dt:.3e}; use a smaller dt"
                )
            dt /= 2
            continue
        if record_every:
            history.append((t, p.copy(), q.copy()))
    return SteadyState(MfState(p, q), False, t, steps, dt, norm, history)


def sis_fixed_point(W, tau, tol=1e-14, max_iter=1_000_000) -> np.ndarray:
    """Endemic SIS state by iterating ``p = tau W p / (1 + tau W p)`` from ``p = 1``."""
    W = np.asarray(W, dtype=float)
    p = np.ones(W.shape[0])
    for _ in range(max_iter):
        x = tau * (W @ p)
        nxt = x / (1.0 + x)
        if np.max(np.abs(nxt - p)) <= tol:
            return nxt
        p = nxt
    return p


def equilibrium_residuals(state: MfState, net: MultilayerNetwork, params: EpidemicParams) -> tuple[float, float]:
    """Worst violation of the two equilibrium identities at ``state``.

    First: ``p/(1-p) = tau (kb+1) a s / (kb s + a)``.  Second:
    ``q = kb s (1-p) / (kb s + a)``.  Rows where ``kb s + a = 0`` are skipped.
    """
    p, q = state.p, state.q
    s = net.W_S @ p
    a = net.W_A @ p
    kb, tau = params.kappa_bar, params.tau
    den = kb * s + a
    ok = den > 0
    lhs = p[ok] / (1.0 - p[ok])
    rhs = tau * (kb + 1.0) * a[ok] * s[ok] / den[ok]
    q_rhs = kb * s[ok] * (1.0 - p[ok]) / den[ok]
    r1 = float(np.max(np.abs(lhs - rhs), initial=0.0))
    r2 = float(np.max(np.abs(q[ok] - q_rhs), initial=0.0))
    return r1, r2


@dataclass(frozen=True)
class PrevalencePoint:
    kappa_bar: float
    prevalence: float | None
    settled: bool = False
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def _prevalence_one(args):
    net, tau, kb, dt, t_max, settle_tol = args
    if tau == 0:
        return PrevalencePoint(kb, 0.0, True)
    try:
        res = integrate_to_steady_state(net, EpidemicParams.from_tau(tau, kb), None, dt, t_max, settle_tol)
    except AcsaisError as exc:
        return PrevalencePoint(kb, None, False, f"{type(exc).__name__}: {exc}")
    return PrevalencePoint(kb, res.prevalence, res.settled)


def steady_prevalence_sweep(net: MultilayerNetwork, tau, kappa_bar_grid: Sequence[float], dt=None, t_max=None,
                            settle_tol=DEFAULT_SETTLE_TOL, workers=1) -> list[PrevalencePoint]:
    """Steady-state mean infected fraction for each kappa_bar at fixed ``tau`` (``delta = 1``)."""
    if tau < 0:
        raise InputValidationError("tau must be >= 0")
    jobs = [(net, float(tau), float(kb), dt, t_max, settle_tol) for kb in kappa_bar_grid]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_prevalence_one, jobs))
    return [_prevalence_one(job) for job in jobs]


@dataclass(frozen=True)
class EmpiricalThreshold:
    tau: float
    lower: float
    upper: float
    evaluations: int


def empirical_threshold(net: MultilayerNetwork, kappa_bar, bisect_tol=2e-3, dt=0.05, t_max=1e4,
                        settle_tol=DEFAULT_SETTLE_TOL, cutoff=PREVALENCE_CUTOFF, check=True) -> EmpiricalThreshold:
    """Bisect on ``tau`` for the onset of a positive steady prevalence.

    The bracket is ``[1e-3, 1e3] / lambda1(W_S)`` and is halved in log
    scale until ``upper / lower - 1 <= bisect_tol``.  A run counts as
    endemic when its final mean infection probability exceeds ``cutoff``.
    """
    if check:
        _ensure_m_connected(net)
    lam = spectral_radius(net.W_S)
    count = 0

    def endemic(tau):
        nonlocal count
        count += 1
        res = integrate_to_steady_state(net, EpidemicParams.from_tau(tau, kappa_bar), None, dt, t_max, settle_tol)
        return res.prevalence > cutoff

    lo, hi = 1e-3 / lam, 1e3 / lam
    if endemic(lo) or not endemic(hi):
        raise BracketError(
            f"no extinct/endemic sign change between tau={lo:.4g} and tau={hi:.4g} at kappa_bar={kappa_bar}"
        )
    while hi / lo - 1.0 > bisect_tol:
        mid = math.sqrt(lo * hi)
        if endemic(mid):
            hi = mid
        else:
            lo = mid
    return EmpiricalThreshold(math.sqrt(lo * hi), lo, hi, count)
