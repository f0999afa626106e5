"""Shortest-path censuses and betweenness centrality on road networks.

Path counts come from a single-source census per origin: exact Dijkstra
distances, then a predecessor DAG built with a relative tie tolerance so
that numerically equal-length routes are all kept. Betweenness credits
every node on a shortest route, endpoints included, so a route of k nodes
adds its weight to all k of them.
"""

from __future__ import annotations

import heapq
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Literal, Optional

import numpy as np

from .netmodel import Network, ODMatrix

WeightMode = Literal["hops", "free_flow_time", "congested_time"]
WEIGHT_MODES = ("hops", "free_flow_time", "congested_time")

# two path lengths are tied when |d1 - d2| <= REL_TOL * max(1, d1)
REL_TOL = 1e-9


def _link_weights(network: Network, mode: str) -> np.ndarray:
    if mode == "hops":
        return np.ones(network.link_count)
    if mode == "free_flow_time":
        w = np.array([l.free_flow_min for l in network.links], dtype=float)
    elif mode == "congested_time":
        w = np.array([l.congested_min for l in network.links], dtype=float)
    else:
        raise ValueError(f"unknown weight mode {mode!r}")
    if network.link_count and w.min() <= 0:
        raise ValueError(f"{mode}: all link weights must be > 0")
    return w


@dataclass(frozen=True)
class PathCensus:
    """All-shortest-paths summary from one source.

    dist, sigma and pred_links are dense arrays/lists over node indices
    (see Network.index); order lists reachable indices by ascending
    (distance, index). sigma[v] counts distinct shortest paths source->v,
    with sigma[source] = 1.
    """

    source: int
    dist: np.ndarray
    sigma: np.ndarray
    pred_links: list[list[int]]
    order: list[int]

    def dist_of(self, network: Network, node_id: int) -> float:
        return float(self.dist[network.index[node_id]])

    def sigma_of(self, network: Network, node_id: int) -> float:
        return float(self.sigma[network.index[node_id]])

    def pred_nodes(self, network: Network, node_id: int) -> list[int]:
        links = self.pred_links[network.index[node_id]]
        return sorted(network.links[k].from_id for k in links)


def _census_arrays(network: Network, weights: np.ndarray, s_idx: int):
    n = network.node_count
    dist = np.full(n, np.inf)
    dist[s_idx] = 0.0
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, s_idx)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for k in network.out_links[v]:
            u = network.index[network.links[k].to_id]
            nd = d + weights[k]
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))

    pred_links: list[list[int]] = [[] for _ in range(n)]
    for k, l in enumerate(network.links):
        u = network.index[l.from_id]
        v = network.index[l.to_id]
        if not np.isfinite(dist[u]) or not np.isfinite(dist[v]):
            continue
        if abs(dist[u] + weights[k] - dist[v]) <= REL_TOL * max(1.0, dist[v]):
            pred_links[v].append(k)

    order = sorted((v for v in range(n) if np.isfinite(dist[v])),
                   key=lambda v: (dist[v], v))
    sigma = np.zeros(n)
    sigma[s_idx] = 1.0
    for v in order:
        if v == s_idx:
            continue
        sigma[v] = sum(sigma[network.index[network.links[k].from_id]]
                       for k in pred_links[v])
    return dist, sigma, pred_links, order


def path_census(network: Network, source: int, mode: WeightMode = "hops") -> PathCensus:
    """Distances, path counts and predecessor DAG from one source node."""
    if source not in network.index:
        raise ValueError(f"unknown source node {source}")
    weights = _link_weights(network, mode)
    dist, sigma, preds, order = _census_arrays(network, weights,
                                               network.index[source])
    return PathCensus(source, dist, sigma, preds, order)


@dataclass(frozen=True)
class CentralityScores:
    """Betweenness per node id, plus the settings that produced it."""

    scores: dict[int, float]
    weight_mode: Optional[str]
    od_weighted: bool
    alpha: Optional[float] = None
    unreachable_pairs: int = 0

    def top(self, k: int) -> list[int]:
        ranked = sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return [node for node, _ in ranked[:k]]


def _source_delta(network: Network, mode: str, pair_weights, s_idx: int):
    """Endpoint-inclusive dependency vector for one source.

    pair_weights is None for the unweighted all-pairs census (weight 1 per
    reachable target) or a list of (target index, demand). Returns the
    dense per-node contribution and the count of unreachable demanded pairs.
    """
    weights = _link_weights(network, mode)
    dist, sigma, preds, order = _census_arrays(network, weights, s_idx)
    n = network.node_count
    delta = np.zeros(n)
    missed = 0
    if pair_weights is None:
        for v in order:
            if v != s_idx:
                delta[v] = 1.0
    else:
        for t_idx, w in pair_weights:
            if np.isfinite(dist[t_idx]):
                delta[t_idx] += w
            else:
                missed += 1
    for v in reversed(order):
        dv = delta[v]
        if dv == 0.0:
            continue
        share = dv / sigma[v]
        for k in preds[v]:
            u = network.index[network.links[k].from_id]
            delta[u] += sigma[u] * share
    return delta, missed


def _source_jobs(network: Network, od: Optional[ODMatrix]):
    if od is None:
        return [(s, None) for s in range(network.node_count)]
    jobs = []
    for origin, dests in sorted(od.by_origin().items()):
        pairs = [(network.index[d], w) for d, w in dests]
        jobs.append((network.index[origin], pairs))
    return jobs


def _run_job(network: Network, mode: str, job):
    s_idx, pairs = job
    return _source_delta(network, mode, pairs, s_idx)


def betweenness(network: Network, mode: WeightMode = "hops",
                od: Optional[ODMatrix] = None, workers: int = 1) -> CentralityScores:
    """Betweenness of every node, endpoints included.

    Without an OD matrix every ordered reachable pair counts once; with one,
    each pair counts its trips_per_hour. Unreachable OD pairs contribute
    nothing and are tallied in unreachable_pairs. Results are deterministic
    and independent of the worker count.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    jobs = _source_jobs(network, od)
    run = partial(_run_job, network, mode)
    if workers == 1 or len(jobs) < 2:
        parts = [run(job) for job in jobs]
    else:
        chunk = max(1, len(jobs) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs, chunksize=chunk))
    total = np.zeros(network.node_count)
    missed = 0
    for delta, m in parts:
        total += delta
        missed += m
    scores = {node_id: float(total[i])
              for i, node_id in enumerate(network.node_ids)}
    return CentralityScores(scores, mode, od is not None,
                            unreachable_pairs=missed)


def blended_betweenness(network: Network, od: ODMatrix, alpha: float = 0.25,
                        workers: int = 1) -> CentralityScores:
    """Convex mix of free-flow and congested betweenness.

    score = alpha * free_flow + (1 - alpha) * congested, per node. alpha=1
    and alpha=0 reproduce the single-mode results exactly.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    ft = betweenness(network, "free_flow_time", od, workers)
    ct = betweenness(network, "congested_time", od, workers)
    scores = {i: alpha * ft.scores[i] + (1.0 - alpha) * ct.scores[i]
              for i in network.node_ids}
    return CentralityScores(scores, None, True, alpha=alpha,
                            unreachable_pairs=ct.unreachable_pairs)


def _pearson_r2(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    if x.size < 3:
        return None
    vx = x - x.mean()
    vy = y - y.mean()
    sxx = float(vx @ vx)
    syy = float(vy @ vy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(vx @ vy) / (sxx * syy) ** 0.5
    return r * r

def correlation_report(scores: CentralityScores, network: Network,
                       grouping: str = "none",
                       od: Optional[ODMatrix] = None) -> dict:
    """Squared Pearson correlation between scores and observed inbound flow.

    grouping: "none" (one pooled group), "stub_vs_transit" (needs od), or
    "road_type" (nodes keyed by the highest inbound road_type; nodes with
    no inbound links are skipped). Groups smaller than 3 or with zero
    variance report r_squared None.
    """
    from .netmodel import classify_nodes

    flow = {}
    for i, node_id in enumerate(network.node_ids):
        flow[node_id] = sum(network.links[k].flow_vph
                            for k in network.in_links[i])
    if grouping == "none":
        groups = {"all": list(network.node_ids)}
    elif grouping == "stub_vs_transit":
        if od is None:
            raise ValueError("stub_vs_transit grouping needs an OD matrix")
        kinds = classify_nodes(network, od).kinds
        groups = {"stub": [], "transit": []}
        for node_id, kind in kinds.items():
            groups[kind].append(node_id)
    elif grouping == "road_type":
        groups = {}
        for i, node_id in enumerate(network.node_ids):
            if not network.in_links[i]:
                continue
            rt = max(network.links[k].road_type for k in network.in_links[i])
            groups.setdefault(f"type_{rt}", []).append(node_id)
    else:
        raise ValueError(f"unknown grouping {grouping!r}")

    report = {}
    for name in sorted(groups):
        members = sorted(groups[name])
        x = np.array([scores.scores[m] for m in members], dtype=float)
        y = np.array([flow[m] for m in members], dtype=float)
        report[name] = {"n": len(members), "r_squared": _pearson_r2(x, y)}
    return report
