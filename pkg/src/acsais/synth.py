"""Synthesis of alert-contact layers that realise a chosen threshold scenario.

Every synthesized alert layer is scaled so that its spectral radius is a
fixed fraction of the susceptible layer's.  The Psi objective is then pushed
past its target by a greedy hill-climb over edge rewires and weight tweaks.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputValidationError, PreconditionError
from .netcore import MultilayerNetwork, WeightedDigraph, is_m_connected, matrix_is_irreducible
from .spectral import psi, spectral_radius

OBJECTIVES = ("psi_sa_below", "psi_as_above", "social_distancing")
TIE_TOL = 1e-12
LOG_COLUMNS = ("step", "psi_sa", "psi_as", "lambda_ratio", "accepted")


def random_strong_digraph(n, mean_degree, rng, symmetric=False, weight_range=(0.5, 1.5)) -> WeightedDigraph:
    """Random weighted digraph that is strongly connected by construction.

    A random Hamiltonian cycle guarantees strong connectivity; on top of it
    every ordered pair is linked with the probability that brings the mean
    out-degree to ``mean_degree``.  ``symmetric=True`` mirrors every edge
    with the same weight.
    """
    if n < 2:
        raise InputValidationError("need at least two nodes")
    lo, hi = weight_range
    order = rng.permutation(n)
    A = np.zeros((n, n), dtype=bool)
    A[order, np.roll(order, -1)] = True
    p = max(0.0, min(1.0, (mean_degree - 1.0) / max(n - 2, 1)))
    A |= rng.random((n, n)) < p
    np.fill_diagonal(A, False)
    W = A * rng.uniform(lo, hi, (n, n))
    if symmetric:
        W = np.maximum(W, W.T)
    return WeightedDigraph.from_matrix(W)


def synth_social_distancing(base: WeightedDigraph, scale: float) -> WeightedDigraph:
    """Alert layer with the same contacts as ``base``, each weight multiplied by ``scale``."""
    if not 0 < scale < 1:
        raise InputValidationError(f"scale must lie strictly between 0 and 1, got {scale}")
    return base.scaled(scale)


@dataclass(frozen=True)
class SynthTarget:
    """Synthesis request.

    ``objective`` is ``psi_sa_below`` / ``psi_as_above`` (``threshold`` is the
    Psi bound) or ``social_distancing`` (``threshold`` is the weight scale).
    """

    base_layer: WeightedDigraph
    radius_ratio: float = 2.0 / 3.0
    objective: str = "psi_sa_below"
    threshold: float = 1.0
    max_steps: int = 50_000
    rng_seed: int = 0
    symmetric_only: bool = False

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InputValidationError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not self.radius_ratio > 0:
            raise InputValidationError("radius_ratio must be positive")
        if not self.threshold > 0:
            raise InputValidationError("threshold must be positive")
        if self.max_steps < 0:
            raise InputValidationError("max_steps must be nonnegative")


@dataclass
class SynthResult:
    net: MultilayerNetwork
    psi_sa: float
    psi_as: float
    lambda_ratio: float
    met: bool
    steps: int
    log: list = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LOG_COLUMNS)
            for row in self.log:
                writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), int(row[4])])

    def report(self) -> dict:
        return {
            "psi_sa": self.psi_sa,
            "psi_as": self.psi_as,
            "lambda_ratio": self.lambda_ratio,
            "objective_met": self.met,
            "steps": self.steps,
        }


def _perron(W):
    """Perron value with right vector ``v`` and left vector ``u`` (``u @ v = 1``), via LAPACK."""
    vals, vecs = np.linalg.eig(W)
    k = int(np.argmax(vals.real))
    v = np.abs(vecs[:, k].real)
    lvals, lvecs = np.linalg.eig(W.T)
    u = np.abs(lvecs[:, int(np.argmax(lvals.real))].real)
    v /= np.linalg.norm(v)
    return float(vals[k].real), v, u / float(u @ v)


def _psi_fast(perron, A, B):
    _, v, u = perron
    den = B @ v
    if np.any(den <= 0):
        return math.inf
    return float(np.sum(u * v * (A @ v) / den))


def _evaluate(WS, ps, WA, ratio):
    """Rescale ``WA`` to the target radius ratio and return it with both Psi values."""
    pa = _perron(WA)
    c = ratio * ps[0] / pa[0]
    WA = WA * c
    pa = (pa[0] * c, pa[1], pa[2])
    return WA, _psi_fast(ps, WS, WA), _psi_fast(pa, WA, WS)


def _score(objective, psi_sa, psi_as):
    """Lower is better."""
    return psi_sa if objective == "psi_sa_below" else -psi_as


def _met(target, psi_sa, psi_as):
    if target.objective == "psi_sa_below":
        return psi_sa < target.threshold
    return psi_as > target.threshold


def _propose(W, rng, symmetric):
    W = W.copy()
    n = W.shape[0]
    rows, cols = np.nonzero(np.triu(W) if symmetric else W)
    k = rng.integers(len(rows))
    i, j = rows[k], cols[k]
    if rng.random() < 0.5:
        factor = rng.uniform(0.8, 1.2)
        W[i, j] *= factor
        if symmetric:
            W[j, i] = W[i, j]
        return W
    free = np.flatnonzero((W[i] == 0) & (np.arange(n) != i))
    if free.size == 0:
        return W
    t = rng.choice(free)
    w = W[i, j]
    W[i, j] = 0.0
    W[i, t] = w
    if symmetric:
        W[j, i] = 0.0
        W[t, i] = w
    return W


def synth_psi_target(target: SynthTarget) -> SynthResult:
    """Greedy search for an alert layer meeting the Psi objective.

    Starting from a random strongly connected layer, each step proposes one
    rewire or one ±20% weight change.  The proposal is rescaled to the radius
    ratio and kept only if it improves the objective by more than
    ``TIE_TOL`` while the alert layer stays strongly connected and the pair
    stays M-connected.  The search ends at the first layer meeting the
    objective or after ``max_steps``.  If it ends unmet, the best layer found
    is returned with ``met=False``.
    """
    base = target.base_layer
    if not matrix_is_irreducible(base.matrix):
        raise PreconditionError("base layer must be strongly connected")
    if target.objective == "social_distancing":
        layer_a = synth_social_distancing(base, target.threshold)
        net = MultilayerNetwork(base, layer_a)
        return SynthResult(net, 1.0 / target.threshold, target.threshold, target.threshold, True, 0, [])
    if target.symmetric_only and not base.is_symmetric():
        raise PreconditionError("symmetric-only search needs a symmetric base layer")

    rng = np.random.default_rng(target.rng_seed)
    WS = np.array(base.matrix)
    ps = _perron(WS)
    symmetric = target.symmetric_only
    # Start on the base's contact pattern with fresh random weights: strongly
    # connected, same mean degree, and M-connected from the outset.
    WA0 = (WS > 0) * rng.uniform(0.5, 1.5, WS.shape)
    if symmetric:
        WA0 = np.triu(WA0) + np.triu(WA0).T
    WA, psi_sa, psi_as = _evaluate(WS, ps, WA0, target.radius_ratio)
    best = _score(target.objective, psi_sa, psi_as)
    log = [(0, psi_sa, psi_as, target.radius_ratio, True)]
    step = 0
    while step < target.max_steps and not _met(target, psi_sa, psi_as):
        step += 1
        cand = _propose(WA, rng, symmetric)
        accepted = False
        c_sa, c_as = math.nan, math.nan
        if matrix_is_irreducible(cand):
            cWA, c_sa, c_as = _evaluate(WS, ps, cand, target.radius_ratio)
            score = _score(target.objective, c_sa, c_as)
            if score < best - TIE_TOL and is_m_connected(MultilayerNetwork.from_matrices(WS, cWA))[0]:
                WA, psi_sa, psi_as, best, accepted = cWA, c_sa, c_as, score, True
        log.append((step, c_sa, c_as, target.radius_ratio, accepted))

    # exact final rescale with the package's own eigensolver
    lam_s = spectral_radius(WS)
    WA = WA * (target.radius_ratio * lam_s / spectral_radius(WA))
    net = MultilayerNetwork.from_matrices(WS, WA)
    final_sa, final_as = psi(net.W_S, net.W_A), psi(net.W_A, net.W_S)
    ratio = spectral_radius(net.W_A) / lam_s
    return SynthResult(net, final_sa, final_as, ratio, _met(target, final_sa, final_as), step, log)
