"""Dominant eigenpairs of nonnegative matrices and the joint-layer descriptor Psi.

Everything here is linear Perron-Frobenius theory: eigenpairs come from a
shifted power iteration, Psi compares how two layers act on the dominant
eigenvector of the first, and the perturbation coefficients give the
first-order slope of the threshold curve at both ends of the kappa_bar axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, InputValidationError, PreconditionError, ZeroDenominatorError
from .netcore import MultilayerNetwork, matrix_is_irreducible

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
TIE_TOL = 1e-9


class EigenPair(NamedTuple):
    value: float
    vector: np.ndarray
    iterations: int
    residual: float


@dataclass(frozen=True)
class SpectralTriple:
    """Dominant eigenvalue with right eigenvector ``v`` (unit L2) and left ``u`` (``u @ v == 1``)."""

    lambda1: float
    v: np.ndarray
    u: np.ndarray


def _as_matrix(W) -> np.ndarray:
    if hasattr(W, "matrix") and not isinstance(W, np.ndarray):
        W = W.matrix
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise InputValidationError(f"expected a square matrix, got shape {W.shape}")
    if np.any(W < 0):
        raise InputValidationError("matrix has negative entries")
    return W


def dominant_eigenpair(W, side="right", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, check=True) -> EigenPair:
    """Perron eigenpair of an irreducible nonnegative matrix by power iteration.

    The iteration runs on ``W + s*I`` with ``s`` the mean row sum.  The shift
    makes the iteration matrix primitive, so periodic matrices such as a
    directed cycle converge too; it does not move the eigenvectors.
    Stops once ``||W v - lam v|| <= tol * lam`` with ``||v|| = 1``.
    """
    if tol <= 0:
        raise InputValidationError("tol must be positive")
    W = _as_matrix(W)
    if side == "left":
        W = W.T
    elif side != "right":
        raise InputValidationError(f"side must be 'right' or 'left', got {side!r}")
    n = W.shape[0]
    if check and not matrix_is_irreducible(W):
        raise PreconditionError("matrix graph is not strongly connected; the Perron vector is not unique")
    if n == 1:
        return EigenPair(float(W[0, 0]), np.ones(1), 0, 0.0)

    shift = float(W.sum()) / n
    v = np.full(n, 1.0 / math.sqrt(n))
    residual = math.inf
    for it in range(1, max_iter + 1):
        y = W @ v
        lam = float(v @ y)
        residual = float(np.linalg.norm(y - lam * v))
        if residual <= tol * lam:
            v = np.abs(v)
            return EigenPair(lam, v, it, residual / lam)
        y += shift * v
        v = y / np.linalg.norm(y)
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations (relative residual {residual / lam:.3e})",
        iterations=max_iter,
        residual=residual / lam,
        last_iterate=v,
    )


def spectral_triple(W, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> SpectralTriple:
    right = dominant_eigenpair(W, "right", tol, max_iter)
    left = dominant_eigenpair(W, "left", tol, max_iter, check=False)
    u = left.vector / float(left.vector @ right.vector)
    return SpectralTriple(right.value, right.vector, u)


def spectral_radius(W, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> float:
    return dominant_eigenpair(W, "right", tol, max_iter).value


def psi(A, B, tol=DEFAULT_TOL, triple: SpectralTriple | None = None) -> float:
    """``sum_i u_i v_i (A v)_i / (B v)_i`` with ``u, v`` the Perron pair of ``A``."""
    A, B = _as_matrix(A), _as_matrix(B)
    if A.shape != B.shape:
        raise InputValidationError(f"matrices differ in shape: {A.shape} vs {B.shape}")
    t = triple or spectral_triple(A, tol)
    num = A @ t.v
    den = B @ t.v
    weight = t.u * t.v
    bad = np.flatnonzero((den <= 0) & (weight > 0))
    if bad.size:
        node = int(bad[0])
        raise ZeroDenominatorError(f"node {node} has no out-edges in the second matrix, so Psi is undefined", node)
    return float(np.sum(weight * num / den))


class Perturbation(NamedTuple):
    """First-order threshold expansion ``intercept + slope * x``.

    ``x`` is kappa_bar for the small-kappa regime and 1/kappa_bar for the
    large-kappa regime.
    """

    intercept: float
    slope: float


def threshold_perturbation(net: MultilayerNetwork, regime="small_kappa", tol=DEFAULT_TOL) -> Perturbation:
    if regime == "small_kappa":
        first, second = net.W_S, net.W_A
    elif regime == "large_kappa":
        first, second = net.W_A, net.W_S
    else:
        raise InputValidationError(f"regime must be 'small_kappa' or 'large_kappa', got {regime!r}")
    t = spectral_triple(first, tol)
    _require_irreducible(second, "the other layer")
    value = psi(first, second, tol, triple=t)
    return Perturbation(1.0 / t.lambda1, (value - 1.0) / t.lambda1)


def _require_irreducible(W, what):
    if not matrix_is_irreducible(W):
        raise PreconditionError(f"{what} is not strongly connected")


@dataclass(frozen=True)
class ScenarioReport:
    kind: str  # monotone | overshoot | undershoot | mixed
    psi_sa: float
    psi_as: float
    lambda_s: float
    lambda_a: float
    degenerate: bool = False
    note: str = ""

    @property
    def radius_constraint_holds(self) -> bool:
        """Whether the alert layer is the more robust one (larger threshold at kappa_bar -> inf)."""
        return self.lambda_s > self.lambda_a


def classify_scenario(net: MultilayerNetwork, tol=DEFAULT_TOL, tie_tol=TIE_TOL) -> ScenarioReport:
    """Predict the shape of the threshold curve from the two Psi values.

    undershoot: Psi(S, A) < 1, the curve first dips below its kappa_bar = 0 value.
    overshoot: Psi(A, S) > 1, the curve peaks above its kappa_bar -> inf value.
    mixed: both at once, or a Psi within ``tie_tol`` of 1 (first order is inconclusive).
    monotone: neither.
    """
    _require_irreducible(net.W_S, "layer S")
    _require_irreducible(net.W_A, "layer A")
    ts, ta = spectral_triple(net.W_S, tol), spectral_triple(net.W_A, tol)
    psi_sa = psi(net.W_S, net.W_A, tol, triple=ts)
    psi_as = psi(net.W_A, net.W_S, tol, triple=ta)
    notes = []
    if ts.lambda1 <= ta.lambda1:
        notes.append("lambda1(W_S) <= lambda1(W_A): alert layer is not the more robust one")
    ties = [name for name, val in (("Psi(S,A)", psi_sa), ("Psi(A,S)", psi_as)) if abs(val - 1.0) < tie_tol]
    if ties:
        notes.insert(0, f"{' and '.join(ties)} equal to 1 within {tie_tol:g}; first-order test inconclusive")
        kind, degenerate = "mixed", True
    else:
        under, over = psi_sa < 1.0, psi_as > 1.0
        degenerate = False
        if under and over:
            kind = "mixed"
        elif under:
            kind = "undershoot"
        elif over:
            kind = "overshoot"
        else:
            kind = "monotone"
    return ScenarioReport(kind, psi_sa, psi_as, ts.lambda1, ta.lambda1, degenerate, "; ".join(notes))
