"""Exact continuous-time simulation of the adaptive-contact SAIS Markov chain.

Transitions of node ``i`` (``Y_i``/``Z_i`` are the weights of its infected
neighbours in the S/A layer)::

    S -> I  at rate beta  * Y_i
    S -> A  at rate kappa * Y_i
    A -> I  at rate beta  * Z_i
    I -> S  at rate delta

Events are drawn with the direct (Gillespie) method.  Per-node total
rates live in a Fenwick tree so that picking the next node and updating the
rates after an event both cost O(log N).
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import AcsaisError, InputValidationError
from .meanfield import EpidemicParams
from .netcore import MultilayerNetwork


class NodeState(IntEnum):
    S = 0
    A = 1
    I = 2


LEGAL = {(NodeState.S, NodeState.I), (NodeState.S, NodeState.A), (NodeState.A, NodeState.I), (NodeState.I, NodeState.S)}


class RateBookkeepingError(AcsaisError):
    """Incrementally maintained rates drifted from a full recomputation."""


class NodeRates(NamedTuple):
    infection: np.ndarray  # S->I for susceptible nodes, A->I for alert nodes
    alerting: np.ndarray  # S->A
    recovery: np.ndarray  # I->S

    @property
    def total(self) -> np.ndarray:
        return self.infection + self.alerting + self.recovery


def total_rates(states, net: MultilayerNetwork, params: EpidemicParams) -> NodeRates:
    """Rates of every legal transition, computed from scratch."""
    x = np.asarray(states)
    infected = (x == NodeState.I).astype(float)
    y = net.W_S @ infected
    z = net.W_A @ infected
    sus, alert = x == NodeState.S, x == NodeState.A
    infection = np.where(sus, params.beta * y, 0.0) + np.where(alert, params.beta * z, 0.0)
    alerting = np.where(sus, params.kappa * y, 0.0)
    recovery = np.where(x == NodeState.I, params.delta, 0.0)
    return NodeRates(infection, alerting, recovery)


class FenwickTree:
    """Prefix sums over nonnegative node rates with point updates."""

    def __init__(self, values):
        self.n = len(values)
        self.values = [0.0] * self.n
        self.tree = [0.0] * (self.n + 1)
        self.rebuild(values)

    def rebuild(self, values):
        self.values = [float(v) for v in values]
        tree = [0.0] * (self.n + 1)
        for i, v in enumerate(self.values, start=1):
            tree[i] += v
            parent = i + (i & -i)
            if parent <= self.n:
                tree[parent] += tree[i]
        self.tree = tree

    def set(self, i, value):
        delta = value - self.values[i]
        if delta == 0.0:
            return
        self.values[i] = value
        k = i + 1
        while k <= self.n:
            self.tree[k] += delta
            k += k & -k

    def total(self):
        k, s = self.n, 0.0
        while k > 0:
            s += self.tree[k]
            k -= k & -k
        return s

    def find(self, r):
        """Smallest index whose prefix sum exceeds ``r``; returns it and the offset inside it."""
        pos = 0
        step = 1 << self.n.bit_length()
        while step:
            nxt = pos + step
            if nxt <= self.n and self.tree[nxt] <= r:
                pos = nxt
                r -= self.tree[nxt]
            step >>= 1
        if pos >= self.n:  # round-off past the end: fall back to the last positive rate
            pos = max(k for k, v in enumerate(self.values) if v > 0)
            r = self.values[pos] * (1 - 1e-12)
        return pos, r


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``initial_infected`` is ``"all"``, an int ``k`` (that many nodes drawn
    per replica) or an explicit node sequence.
    """

    params: EpidemicParams
    initial_infected: object = "all"
    t_end: float | None = None
    rng_seed: int = 0
    replicas: int = 1
    tail_fraction: float = 0.5
    check_every: int = 0

    def __post_init__(self):
        if self.t_end is not None and not self.t_end > 0:
            raise InputValidationError("t_end must be positive")
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise InputValidationError("replicas must be a positive integer")
        if not 0 < self.tail_fraction < 1:
            raise InputValidationError("tail_fraction must lie in (0, 1)")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise InputValidationError("rng_seed must be a 64-bit unsigned integer")

    @property
    def horizon(self) -> float:
        return 100.0 / self.params.delta if self.t_end is None else float(self.t_end)


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(seed, replica)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(replica),))))


@dataclass
class SimTrajectory:
    initial: np.ndarray
    times: np.ndarray
    nodes: np.ndarray
    old: np.ndarray
    new: np.ndarray
    t_end: float
    replica: int = 0
    final: np.ndarray = field(default=None)

    @property
    def n_events(self) -> int:
        return len(self.times)

    def infected_path(self):
        """Step function ``(t_k, I(t_k))`` with the infected count after each event."""
        start = int(np.sum(self.initial == NodeState.I))
        delta = (self.new == NodeState.I).astype(int) - (self.old == NodeState.I).astype(int)
        counts = start + np.concatenate([[0], np.cumsum(delta)])
        return np.concatenate([[0.0], self.times]), counts

    @property
    def final_prevalence(self) -> float:
        return float(np.mean(self.final == NodeState.I))

    @property
    def survived(self) -> bool:
        return bool(np.any(self.final == NodeState.I))

    def tail_average(self, tail_fraction=0.5) -> float:
        """Time-averaged infected fraction over the last ``tail_fraction`` of ``[0, t_end]``."""
        t0 = self.t_end * (1 - tail_fraction)
        times, counts = self.infected_path()
        edges = np.append(times, self.t_end)
        lo = np.clip(edges[:-1], t0, self.t_end)
        hi = np.clip(edges[1:], t0, self.t_end)
        area = float(np.sum(counts * (hi - lo)))
        return area / ((self.t_end - t0) * len(self.initial))

    def event_rows(self):
        for t, i, a, b in zip(self.times, self.nodes, self.old, self.new):
            yield float(t), int(i), NodeState(a).name, NodeState(b).name

    def to_tsv(self) -> str:
        lines = ["time\tnode\tfrom\tto"]
        lines += [f"{t!r}\t{i}\t{a}\t{b}" for t, i, a, b in self.event_rows()]
        return "\n".join(lines) + "\n"


def _initial_states(n, rule, rng) -> np.ndarray:
    x = np.full(n, int(NodeState.S), dtype=np.int8)
    if isinstance(rule, str):
        if rule != "all":
            raise InputValidationError(f"unknown seeding rule {rule!r}")
        x[:] = NodeState.I
    elif isinstance(rule, (int, np.integer)):
        if not 0 <= rule <= n:
            raise InputValidationError(f"cannot seed {rule} infected nodes in a network of {n}")
        x[rng.choice(n, size=int(rule), replace=False)] = NodeState.I
    else:
        nodes = [int(i) for i in rule]
        if any(not 0 <= i < n for i in nodes):
            raise InputValidationError("initial_infected mentions a node outside the network")
        x[nodes] = NodeState.I
    return x


def _predecessors(g):
    """``pred[j]``: list of ``(i, w_ij)`` — nodes that listen to ``j``."""
    pred = [[] for _ in range(g.n)]
    for i, j, w in g.edges:
        pred[j].append((i, w))
    return pred


def simulate_replica(net: MultilayerNetwork, config: SimConfig, replica: int = 0) -> SimTrajectory:
    """One exact sample path on ``[0, t_end]``.

    Random draws per event, in order: one standard exponential for the
    waiting time, then one uniform that selects the node and, inside the
    node, the transition.
    """
    params = config.params
    beta, kappa, delta = params.beta, params.kappa, params.delta
    n = net.n
    rng = replica_rng(config.rng_seed, replica)
    x = _initial_states(n, config.initial_infected, rng)
    initial = x.copy()
    pred_s, pred_a = _predecessors(net.layer_s), _predecessors(net.layer_a)

    touched_by = [sorted({k for k, _ in pred_s[j]} | {k for k, _ in pred_a[j]}) for j in range(n)]

    # plain ints and lists in the hot loop; enum comparisons dominate otherwise
    S, A, I = int(NodeState.S), int(NodeState.A), int(NodeState.I)
    infected = (x == I).astype(float)
    y = (net.W_S @ infected).tolist()
    z = (net.W_A @ infected).tolist()
    ny = ((net.W_S > 0).astype(int) @ infected.astype(int)).tolist()
    nz = ((net.W_A > 0).astype(int) @ infected.astype(int)).tolist()
    state = x.tolist()
    susceptible_rate = beta + kappa

    def rate(i):
        s = state[i]
        if s == S:
            return susceptible_rate * y[i]
        if s == A:
            return beta * z[i]
        return delta

    tree = FenwickTree([rate(i) for i in range(n)])
    t_end = config.horizon
    times, nodes, olds, news = [], [], [], []
    t = 0.0
    while True:
        total = tree.total()
        if total <= 0:
            break
        t += rng.standard_exponential() / total
        if t > t_end:
            break
        i, offset = tree.find(rng.random() * total)
        old = state[i]
        if old == S:
            new = I if offset < beta * y[i] else A
        elif old == A:
            new = I
        else:
            new = S
        state[i] = new
        times.append(t)
        nodes.append(i)
        olds.append(old)
        news.append(new)
        tree.set(i, rate(i))
        if new == I or old == I:
            sign = 1 if new == I else -1
            for k, w in pred_s[i]:
                ny[k] += sign
                y[k] = y[k] + sign * w if ny[k] else 0.0
            for k, w in pred_a[i]:
                nz[k] += sign
                z[k] = z[k] + sign * w if nz[k] else 0.0
            for k in touched_by[i]:
                tree.set(k, rate(k))
        if config.check_every and len(times) % config.check_every == 0:
            fresh = total_rates(np.array(state), net, params).total
            if not np.allclose(tree.values, fresh, rtol=1e-9, atol=1e-12):
                raise RateBookkeepingError(f"rate drift after {len(times)} events")
    x = np.array(state, dtype=np.int8)
    return SimTrajectory(
        initial,
        np.array(times, dtype=float),
        np.array(nodes, dtype=np.int64),
        np.array(olds, dtype=np.int8),
        np.array(news, dtype=np.int8),
        t_end,
        replica,
        x.copy(),
    )


def _run_replica(args):
    return simulate_replica(*args)


def simulate(net: MultilayerNetwork, config: SimConfig, workers=1) -> list[SimTrajectory]:
    """All replicas of ``config``; results do not depend on ``workers``."""
    jobs = [(net, config, r) for r in range(config.replicas)]
    if workers and workers > 1 and config.replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_replica, jobs, chunksize=max(1, config.replicas // (4 * workers))))
    return [simulate_replica(*job) for job in jobs]


@dataclass(frozen=True)
class MetastableEstimate:
    mean: float
    stderr: float
    survivors: int
    replicas: int

    @property
    def survival_fraction(self) -> float:
        return self.survivors / self.replicas


def summarize(trajectories: Sequence[SimTrajectory], tail_fraction=0.5) -> MetastableEstimate:
    alive = [tr.tail_average(tail_fraction) for tr in trajectories if tr.survived]
    if not alive:
        return MetastableEstimate(0.0, 0.0, 0, len(trajectories))
    arr = np.array(alive)
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return MetastableEstimate(float(arr.mean()), stderr, len(arr), len(trajectories))


def metastable_prevalence(net: MultilayerNetwork, config: SimConfig, tail_fraction=None, workers=1) -> MetastableEstimate:
    """Tail-window infected fraction averaged over replicas still infected at ``t_end``."""
    tail = config.tail_fraction if tail_fraction is None else tail_fraction
    if not 0 < tail < 1:
        raise InputValidationError("tail_fraction must lie in (0, 1)")
    return summarize(simulate(net, config, workers), tail)


def write_outputs(trajectories: Sequence[SimTrajectory], outdir, tail_fraction=0.5, extra=None) -> dict:
    """One ``replica_XXXX.tsv`` event log per replica plus ``summary.json``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for tr in trajectories:
        (outdir / f"replica_{tr.replica:04d}.tsv").write_text(tr.to_tsv(), encoding="utf-8")
    est = summarize(trajectories, tail_fraction)
    summary = {
        "replicas": est.replicas,
        "survivors": est.survivors,
        "survival_fraction": est.survival_fraction,
        "metastable_prevalence": est.mean,
        "metastable_stderr": est.stderr,
        "tail_fraction": tail_fraction,
        "final_prevalence": [tr.final_prevalence for tr in trajectories],
        "events": [tr.n_events for tr in trajectories],
    }
    if extra:
        summary.update(extra)
    (outdir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summary
