"""Nonlinear Perron-Frobenius solver for homogeneous concave maps of the cone.

Maps are vectorised callables: given an ``(n,)`` array they return ``F(x)``
and given an ``(n, m)`` array they return ``F`` applied to each column.
That lets the subset enumerations in :func:`check_c1` / :func:`check_c2`
evaluate thousands of indicator vectors per call.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AcsaisError,
    BudgetExceededError,
    ConvergenceError,
    InputValidationError,
    NotMConnectedError,
    PositiveConeError,
)
from .netcore import MultilayerNetwork, is_m_connected
from .spectral import spectral_triple

SUBSET_BUDGET = 20
DEFAULT_C = 1.0
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 1_000_000
RATIO_SPREAD_TOL = 1e-6
PREMISE_TOL = 1e-9
INF = math.inf


@dataclass(frozen=True)
class ConcaveMap:
    """A homogeneous concave self-map of the nonnegative cone of dimension ``n``."""

    n: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    name: str = "F"

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))


class AcsaisMap(ConcaveMap):
    """``F(z)_i = a_i s_i / (kappa_bar s_i + a_i)`` with ``s = W_S z`` and ``a = W_A z``.

    Rows with a vanishing denominator map to 0 (the boundary extension of
    the formula).
    """

    def __init__(self, net: MultilayerNetwork, kappa_bar: float):
        if not kappa_bar >= 0 or math.isinf(kappa_bar):
            raise InputValidationError(f"kappa_bar must be finite and >= 0, got {kappa_bar}")
        object.__setattr__(self, "net", net)
        object.__setattr__(self, "kappa_bar", float(kappa_bar))
        super().__init__(net.n, self._evaluate, f"acsais(kappa_bar={kappa_bar:g})")

    def _evaluate(self, z):
        s = self.net.W_S @ z
        a = self.net.W_A @ z
        den = self.kappa_bar * s + a
        out = np.zeros_like(den)
        np.divide(a * s, den, out=out, where=den > 0)
        return out


@dataclass
class PremiseReport:
    homogeneity: float = 0.0
    concavity: float = 0.0
    monotonicity: float = 0.0
    superadditivity: float = 0.0
    samples: int = 0

    @property
    def worst(self) -> float:
        return max(self.homogeneity, self.concavity, self.monotonicity, self.superadditivity)

    def ok(self, tol=PREMISE_TOL) -> bool:
        return self.worst <= tol


def check_map_premises(F: ConcaveMap, samples=100, seed=0) -> PremiseReport:
    """Largest relative violation of each structural property over random samples.

    Samples ``(x, y, theta, c)`` with entries in ``[0, 1]``.  Violations are
    measured relative to ``1 + max|F|`` on the sample.
    """
    rng = np.random.default_rng(seed)
    rep = PremiseReport(samples=samples)
    for _ in range(samples):
        x, y = rng.random(F.n), rng.random(F.n)
        theta, c = rng.random(), rng.random()
        fx, fy = F(x), F(y)
        scale = 1.0 + max(np.max(np.abs(fx)), np.max(np.abs(fy)))
        rep.homogeneity = max(rep.homogeneity, np.max(np.abs(F(c * x) - c * fx)) / scale)
        gap = theta * fx + (1 - theta) * fy - F(theta * x + (1 - theta) * y)
        rep.concavity = max(rep.concavity, max(0.0, np.max(gap)) / scale)
        gap = fx + fy - F(x + y)
        rep.superadditivity = max(rep.superadditivity, max(0.0, np.max(gap)) / scale)
        gap = fx - F(x + y)  # x <= x + y
        rep.monotonicity = max(rep.monotonicity, max(0.0, np.max(gap)) / scale)
    return rep


def register_map(F: ConcaveMap, samples=100, seed=0, tol=PREMISE_TOL) -> ConcaveMap:
    """Return ``F`` after spot-checking homogeneity and concavity, raise otherwise."""
    rep = check_map_premises(F, samples, seed)
    if rep.homogeneity > tol or rep.concavity > tol:
        raise InputValidationError(
            f"map {F.name} fails premise checks: homogeneity {rep.homogeneity:.2e}, concavity {rep.concavity:.2e}"
        )
    return F


@dataclass(frozen=True)
class SubsetCheck:
    """Outcome of a subset condition; ``witness`` is a violating subset (0-indexed)."""

    holds: bool
    witness: frozenset[int] | None = None

    def __bool__(self):
        return self.holds


def _check_budget(n, budget):
    if n > budget:
        raise BudgetExceededError(f"dimension {n} exceeds the exhaustive subset budget of {budget}")


def _proper_subsets(n):
    """Nonempty proper subsets as bitmasks, by increasing size then lexicographically."""
    for size in range(1, n):
        for combo in itertools.combinations(range(n), size):
            yield sum(1 << j for j in combo)


def _mask_to_set(mask, n):
    return frozenset(j for j in range(n) if mask >> j & 1)


def _indicator_block(masks, n):
    bits = np.array(masks, dtype=np.int64)[None, :] >> np.arange(n, dtype=np.int64)[:, None]
    return (bits & 1).astype(float)


def check_c1(F: ConcaveMap, budget=SUBSET_BUDGET) -> SubsetCheck:
    """Every nonempty proper J has ``j in J``, ``i not in J`` with ``F_i(e_j) > 0``."""
    n = F.n
    _check_budget(n, budget)
    reach = F(np.eye(n)) > 0  # reach[i, j]: F_i(e_j) > 0
    out_mask = [sum(1 << i for i in np.flatnonzero(reach[:, j])) for j in range(n)]
    full = (1 << n) - 1
    for mask in _proper_subsets(n):
        hit = 0
        m = mask
        while m:
            j = (m & -m).bit_length() - 1
            hit |= out_mask[j]
            m &= m - 1
        if not hit & (full ^ mask):
            return SubsetCheck(False, _mask_to_set(mask, n))
    return SubsetCheck(True)


def check_c2(F: ConcaveMap, budget=SUBSET_BUDGET, chunk=4096) -> SubsetCheck:
    """Every nonempty proper J has some ``i not in J`` with ``F_i(e_J) > 0``."""
    n = F.n
    _check_budget(n, budget)
    masks = _proper_subsets(n)
    while True:
        batch = list(itertools.islice(masks, chunk))
        if not batch:
            return SubsetCheck(True)
        E = _indicator_block(batch, n)
        outside = (F(E) > 0) & (E == 0)
        bad = np.flatnonzero(~outside.any(axis=0))
        if bad.size:
            return SubsetCheck(False, _mask_to_set(batch[bad[0]], n))


@dataclass(frozen=True)
class PrimitivityCheck:
    primitive: bool
    exponent: int | None
    stalled_support: frozenset[int] | None = None

    def __bool__(self):
        return self.primitive


def check_primitive(F: ConcaveMap, c=DEFAULT_C, budget=SUBSET_BUDGET) -> PrimitivityCheck:
    """Decide primitivity of ``F_c(x) = c x + F(x)`` from support dynamics.

    The support of ``F(x)`` only depends on the support of ``x``, so the
    iterates starting at ``e_j`` are tracked as 0/1 patterns.  ``exponent``
    is the smallest M with every ``F_c^M(e_j)`` strictly positive.
    """
    if c <= 0:
        raise InputValidationError("c must be positive")
    n = F.n
    _check_budget(n, budget)
    support = np.eye(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    steps = 0
    while not support.all():
        cols = np.flatnonzero(active)
        X = support[:, cols].astype(float)
        grown = (c * X + F(X)) > 0
        changed = (grown != support[:, cols]).any(axis=0)
        support[:, cols] = grown
        steps += 1
        stuck = cols[~changed & ~grown.all(axis=0)]
        if stuck.size:
            return PrimitivityCheck(False, None, frozenset(np.flatnonzero(support[:, stuck[0]]).tolist()))
        active[cols[grown.all(axis=0)]] = False
    return PrimitivityCheck(True, steps)


@dataclass(frozen=True)
class NpfSolution:
    """Positive eigenvector ``z_star`` (unit L2) of ``F`` with eigenvalue ``lambda_f``.

    For the threshold problem ``tau_c = 1 / ((kappa_bar + 1) * lambda_f)``.
    At ``kappa_bar = inf`` ``lambda_f`` stores the limit of
    ``(kappa_bar + 1) * lambda_f``, which is ``lambda1(W_A)``.
    """

    z_star: np.ndarray
    lambda_f: float
    tau_c: float | None = None
    iterations: int = 0
    residual: float = 0.0
    kappa_bar: float | None = None
    ratio_spread: float = 0.0


def solve_npf(F: ConcaveMap, c=DEFAULT_C, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, z0=None) -> NpfSolution:
    """Iterate ``z <- (F(z) + c z) / ||F(z) + c z||`` to the positive eigenvector.

    The loop stops on the L2 distance between successive iterates.  The
    eigenvalue is the Rayleigh value ``z . F(z)``; the per-coordinate ratios
    ``F(z)_i / z_i`` must agree with it to ``RATIO_SPREAD_TOL``.
    """
    if c <= 0:
        raise InputValidationError("c must be positive")
    n = F.n
    if z0 is None:
        z = np.full(n, 1.0 / math.sqrt(n))
    else:
        z = np.asarray(z0, dtype=float).copy()
        if z.shape != (n,) or np.any(z <= 0):
            raise InputValidationError("z0 must be a strictly positive vector of the map's dimension")
        z /= np.linalg.norm(z)
    step = math.inf
    for it in range(1, max_iter + 1):
        y = F(z) + c * z
        z_next = y / np.linalg.norm(y)
        step = float(np.linalg.norm(z_next - z))
        z = z_next
        if step <= tol:
            break
    else:
        raise ConvergenceError(
            f"NPF iteration did not converge in {max_iter} iterations (last step {step:.3e})",
            iterations=max_iter,
            residual=step,
            last_iterate=z,
        )
    if not np.all(z > 0):
        raise PositiveConeError(f"iterate lost strict positivity at nodes {np.flatnonzero(z <= 0).tolist()}")
    fz = F(z)
    lam = float(z @ fz)
    if lam <= 0:
        raise PositiveConeError("eigenvalue estimate is not positive")
    ratios = fz / z
    spread = float((ratios.max() - ratios.min()) / lam)
    if spread > RATIO_SPREAD_TOL:
        raise ConvergenceError(
            f"coordinate ratios F(z)_i/z_i disagree by {spread:.2e} relative; no positive eigenvector reached",
            iterations=it,
            residual=spread,
            last_iterate=z,
        )
    residual = float(np.linalg.norm(fz - lam * z))
    return NpfSolution(z, lam, None, it, residual, None, spread)


def _ensure_m_connected(net):
    ok, trace = is_m_connected(net)
    if not ok:
        raise NotMConnectedError(
            "network is not M-connected: the iterated both-layer aggregation stalls at "
            f"{len(trace.final_partition)} blocks before becoming strongly connected",
            trace,
        )


def acsais_threshold(net: MultilayerNetwork, kappa_bar, c=DEFAULT_C, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                     z0=None, check=True) -> NpfSolution:
    """Mean-field epidemic threshold ``tau_c(kappa_bar)`` of the adaptive-contact model.

    ``kappa_bar = 0`` and ``kappa_bar = inf`` are the linear eigenproblems of
    ``W_S`` and ``W_A`` and bypass the nonlinear iteration.
    """
    kappa_bar = float(kappa_bar)
    if not kappa_bar >= 0:
        raise InputValidationError(f"kappa_bar must be >= 0, got {kappa_bar}")
    if check:
        _ensure_m_connected(net)
    if kappa_bar == 0 or math.isinf(kappa_bar):
        W = net.W_S if kappa_bar == 0 else net.W_A
        t = spectral_triple(W, tol=max(tol, 1e-13))
        return NpfSolution(t.v, t.lambda1, 1.0 / t.lambda1, 0, 0.0, kappa_bar)
    sol = solve_npf(AcsaisMap(net, kappa_bar), c, tol, max_iter, z0)
    tau = 1.0 / ((kappa_bar + 1.0) * sol.lambda_f)
    return NpfSolution(sol.z_star, sol.lambda_f, tau, sol.iterations, sol.residual, kappa_bar, sol.ratio_spread)


@dataclass(frozen=True)
class SweepPoint:
    kappa_bar: float
    tau_c: float | None
    iterations: int = 0
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def _sweep_one(args):
    net, kb, c, tol, max_iter = args
    try:
        sol = acsais_threshold(net, kb, c, tol, max_iter, check=False)
        return SweepPoint(kb, sol.tau_c, sol.iterations)
    except AcsaisError as exc:
        return SweepPoint(kb, None, 0, f"{type(exc).__name__}: {exc}")


def sweep_threshold(net: MultilayerNetwork, kappa_grid: Sequence[float], c=DEFAULT_C, tol=DEFAULT_TOL,
                    max_iter=DEFAULT_MAX_ITER, warm_start=True, workers=1, check=True) -> list[SweepPoint]:
    """``tau_c`` on every grid point; failures are recorded and the sweep goes on.

    Sequential sweeps warm-start each solve from the previous eigenvector.
    With ``workers > 1`` points are solved independently in a process pool.
    """
    grid = [float(k) for k in kappa_grid]
    if any(not k >= 0 for k in grid):
        raise InputValidationError("kappa_bar grid values must be >= 0")
    if check:
        _ensure_m_connected(net)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_one, [(net, kb, c, tol, max_iter) for kb in grid]))
    out = []
    z_prev = None
    for kb in grid:
        try:
            sol = acsais_threshold(net, kb, c, tol, max_iter, z0=z_prev if warm_start else None, check=False)
        except AcsaisError as exc:
            out.append(SweepPoint(kb, None, 0, f"{type(exc).__name__}: {exc}"))
            continue
        out.append(SweepPoint(kb, sol.tau_c, sol.iterations))
        if warm_start:
            z_prev = sol.z_star
    return out


def default_workers():
    return os.cpu_count() or 1
