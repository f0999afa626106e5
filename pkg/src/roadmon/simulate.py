"""Trip-level detection model for a fixed set of monitored nodes.

A trip follows one shortest route for its OD pair; every distinct
monitored node on the route gets an independent detection chance q, so
P(detect) = 1 - (1 - q)^k with k on-route monitors. Exact coverage
averages that over all shortest routes per pair, demand weighted; the
Monte Carlo estimator samples trips with one RNG stream per trip index,
which makes runs reproducible and order independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .centrality import WeightMode, _census_arrays, _link_weights
from .netmodel import Network, ODMatrix

# exact enumeration refuses to walk more than this many path visits
ENUMERATION_LIMIT = 10_000


class EnumerationGuardError(RuntimeError):
    """Exact route enumeration would exceed the visit budget."""


@dataclass(frozen=True)
class DetectionConfig:
    q: float
    samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


@dataclass(frozen=True)
class CoverageEstimate:
    mean: float
    std_error: float
    samples: int


def detection_probability(route: Sequence[int], monitors: Iterable[int],
                          q: float) -> float:
    """Chance that a trip along `route` is seen at least once.

    Counts distinct monitored nodes on the route; k = 1 short-circuits to
    q itself so single-monitor routes carry no rounding.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    route = list(route)
    if not route:
        raise ValueError("route must be non-empty")
    k = len(set(route) & set(monitors))
    if k == 0:
        return 0.0
    if k == 1:
        return q
    return 1.0 - (1.0 - q) ** k


class _RouteSampler:
    """Per-origin successor DAGs with route counts toward each destination."""

    def __init__(self, network: Network, od: ODMatrix, mode: WeightMode):
        if not od.entries:
            raise ValueError("empty OD matrix")
        self.network = network
        weights = _link_weights(network, mode)
        n = network.node_count
        self.pairs = []               # (o_idx, d_idx, weight, tau or None, succ)
        for origin, dests in sorted(od.by_origin().items()):
            s_idx = network.index[origin]
            dist, sigma, pred_links, order = _census_arrays(network, weights,
                                                            s_idx)
            succ: list[list[int]] = [[] for _ in range(n)]
            for v in range(n):
                for k in pred_links[v]:
                    succ[network.index[network.links[k].from_id]].append(v)
            for dest, w in dests:
                t_idx = network.index[dest]
                if not np.isfinite(dist[t_idx]):
                    self.pairs.append((s_idx, t_idx, w, None, succ))
                    continue
                tau = np.zeros(n)
                tau[t_idx] = 1.0
                for v in reversed(order):
                    if v == t_idx:
                        continue
                    tau[v] = sum(tau[x] for x in succ[v])
                self.pairs.append((s_idx, t_idx, w, tau, succ))
        self.weights = np.array([p[2] for p in self.pairs])
        self.cum = np.cumsum(self.weights)
        self.total = float(self.cum[-1])

    def routes(self, pair_index: int):
        """Every shortest route of one pair, as node-id lists."""
        s_idx, t_idx, _, tau, succ = self.pairs[pair_index]
        if tau is None or tau[s_idx] == 0:
            return []
        out = []
        visits = 0
        stack = [(s_idx, [s_idx])]
        while stack:
            v, trail = stack.pop()
            visits += 1
            if visits > ENUMERATION_LIMIT:
                raise EnumerationGuardError(
                    f"more than {ENUMERATION_LIMIT} route visits")
            if v == t_idx:
                out.append([self.network.node_ids[x] for x in trail])
                continue
            for x in succ[v]:
                if tau[x] > 0:
                    stack.append((x, trail + [x]))
        return out

    def sample_route(self, pair_index: int, rng) -> list[int]:
        s_idx, t_idx, _, tau, succ = self.pairs[pair_index]
        if tau is None or tau[s_idx] == 0:
            return []
        trail = [s_idx]
        v = s_idx
        while v != t_idx:
            nexts = [x for x in succ[v] if tau[x] > 0]
            if len(nexts) == 1:
                v = nexts[0]
            else:
                weights = np.array([tau[x] for x in nexts])
                pick = rng.random() * weights.sum()
                v = nexts[int(np.searchsorted(np.cumsum(weights), pick,
                                              side="right"))]
            trail.append(v)
        return [self.network.node_ids[x] for x in trail]


def exact_coverage(network: Network, od: ODMatrix, monitors: Iterable[int],
                   q: float, mode: WeightMode = "congested_time") -> float:
    """Demand-weighted mean detection probability, by full enumeration.

    With q = 1 this equals the group-coverage fraction of the monitor set.
    Unreachable pairs contribute zero. Raises EnumerationGuardError when
    the route census is too large to enumerate.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    monitors = set(monitors)
    for m in monitors:
        if m not in network.index:
            raise ValueError(f"unknown monitor node {m}")
    sampler = _RouteSampler(network, od, mode)
    covered = 0.0
    for i, (_, _, w, tau, _) in enumerate(sampler.pairs):
        routes = sampler.routes(i)
        if not routes:
            continue
        prob = sum(detection_probability(r, monitors, q) for r in routes) \
            / len(routes)
        covered += w * prob
    return covered / sampler.total


def estimate_coverage(network: Network, od: ODMatrix, monitors: Iterable[int],
                      config: DetectionConfig,
                      mode: WeightMode = "congested_time") -> CoverageEstimate:
    """Monte Carlo detection rate over demand-weighted sampled trips.

    Trip i draws from numpy stream (seed, i): pair choice, route choice,
    then one Bernoulli draw per distinct monitored node on the route.
    """
    monitors = set(monitors)
    for m in monitors:
        if m not in network.index:
            raise ValueError(f"unknown monitor node {m}")
    sampler = _RouteSampler(network, od, mode)
    hits = 0
    for i in range(config.samples):
        rng = np.random.default_rng((config.seed, i))
        pick = rng.random() * sampler.total
        pair = int(np.searchsorted(sampler.cum, pick, side="right"))
        pair = min(pair, len(sampler.pairs) - 1)
        route = sampler.sample_route(pair, rng)
        detected = False
        for node in route:
            if node in monitors and rng.random() < config.q:
                detected = True
                break
        hits += detected
    mean = hits / config.samples
    std_error = float(np.sqrt(mean * (1.0 - mean) / config.samples))
    return CoverageEstimate(mean, std_error, config.samples)
