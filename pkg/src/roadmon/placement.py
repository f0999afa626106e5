"""Monitor-group coverage and placement optimisers.

Group coverage of an OD pair is the fraction of its shortest routes that
touch at least one group member, endpoints included; pair fractions are
weighted by demand and summed. Shortest-path DAGs are computed once per
origin and reused: evaluating a group only reruns a path-count pass with
counts zeroed at member nodes.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .centrality import WeightMode, _census_arrays, _link_weights, betweenness, \
    blended_betweenness
from .netmodel import Network, ODMatrix


@dataclass(frozen=True)
class MonitorGroup:
    members: tuple[int, ...]
    gbc_value: float
    coverage_fraction: float


@dataclass(frozen=True)
class PlacementStep:
    node_id: int
    marginal_gain: float
    gbc_value: float


@dataclass(frozen=True)
class SearchResult:
    group: MonitorGroup
    certificate: float
    elapsed_s: float
    completed: bool


@dataclass(frozen=True)
class CoverageCurve:
    scheme: str
    points: list[tuple[int, float]]


@dataclass(frozen=True)
class _SourcePaths:
    s_idx: int
    order: list[int]
    preds_from: list[list[int]]
    sigma: np.ndarray
    targets: list[tuple[int, float, float]]
    routable_demand: float


class GroupEvaluator:
    """Cached per-origin path censuses for fast group-coverage queries.

    Pairs with no route contribute zero coverage whatever the group, so a
    group's value is bounded by the routable demand, not the total.
    """

    def __init__(self, network: Network, od: ODMatrix,
                 mode: WeightMode = "congested_time"):
        if not od.entries:
            raise ValueError("empty OD matrix")
        self.network = network
        self.total_demand = od.total_demand
        self.node_count = network.node_count
        weights = _link_weights(network, mode)
        self._sources: list[_SourcePaths] = []
        routable = 0.0
        for origin, dests in sorted(od.by_origin().items()):
            s_idx = network.index[origin]
            dist, sigma, pred_links, order = _census_arrays(network, weights,
                                                            s_idx)
            preds_from = [[network.index[network.links[k].from_id]
                           for k in pred_links[v]]
                          for v in range(network.node_count)]
            targets = []
            reach = 0.0
            for dest, w in dests:
                t_idx = network.index[dest]
                if np.isfinite(dist[t_idx]):
                    targets.append((t_idx, w, float(sigma[t_idx])))
                    reach += w
            routable += reach
            self._sources.append(_SourcePaths(
                s_idx, order, preds_from, sigma, targets, reach))
        self.routable_demand = routable

    def value(self, member_idxs: set[int]) -> float:
        """Demand-weighted coverage of the group given by dense indices."""
        covered = 0.0
        avoid = np.empty(self.node_count)
        for src in self._sources:
            if src.s_idx in member_idxs:
                covered += src.routable_demand
                continue
            avoid[src.s_idx] = 1.0
            for v in src.order:
                if v == src.s_idx:
                    continue
                if v in member_idxs:
                    avoid[v] = 0.0
                else:
                    avoid[v] = sum(avoid[u] for u in src.preds_from[v])
            for t_idx, w, sig in src.targets:
                if t_idx in member_idxs:
                    covered += w
                else:
                    covered += w * (1.0 - avoid[t_idx] / sig)
        return covered

    def to_idx(self, members: Iterable[int]) -> set[int]:
        idxs = set()
        for m in members:
            if m not in self.network.index:
                raise ValueError(f"unknown node id {m}")
            idxs.add(self.network.index[m])
        return idxs

    def group(self, member_idxs: set[int]) -> MonitorGroup:
        value = self.value(member_idxs)
        fraction = value / self.total_demand if self.total_demand else 0.0
        members = tuple(sorted(self.network.node_ids[i] for i in member_idxs))
        return MonitorGroup(members, value, min(1.0, max(0.0, fraction)))


def group_betweenness(network: Network, od: ODMatrix, members: Iterable[int],
                      mode: WeightMode = "congested_time") -> float:
    """Demand-weighted shortest-route coverage of one node group."""
    ev = GroupEvaluator(network, od, mode)
    return ev.value(ev.to_idx(members))


def evaluate_group(network: Network, od: ODMatrix, members: Iterable[int],
                   mode: WeightMode = "congested_time") -> MonitorGroup:
    ev = GroupEvaluator(network, od, mode)
    return ev.group(ev.to_idx(members))


def _lazy_greedy(ev: GroupEvaluator, k: int) -> list[PlacementStep]:
    # heap entries: (-gain, idx, group size the gain was computed at, total)
    chosen: set[int] = set()
    value = 0.0
    heap = []
    for idx in range(ev.node_count):
        total = ev.value({idx})
        heap.append((-total, idx, 0, total))
    heapq.heapify(heap)
    steps = []
    while len(chosen) < k:
        neg_gain, idx, at_size, total = heapq.heappop(heap)
        if at_size != len(chosen):
            total = ev.value(chosen | {idx})
            heapq.heappush(heap, (value - total, idx, len(chosen), total))
            continue
        chosen.add(idx)
        gain = -neg_gain + 0.0      # avoid -0.0 for zero gains
        value = total
        steps.append(PlacementStep(ev.network.node_ids[idx], gain, value))
    return steps


def greedy_placement(network: Network, od: ODMatrix, k: int,
                     mode: WeightMode = "congested_time") -> list[PlacementStep]:
    """Lazy greedy placement; step i extends the step i-1 group.

    Marginal gains are exact (no decay factors), so the usual (1 - 1/e)
    bound against the optimal size-k group applies. Ties go to the lowest
    node id.
    """
    ev = GroupEvaluator(network, od, mode)
    if not 1 <= k <= ev.node_count:
        raise ValueError("k must lie in [1, node count]")
    return _lazy_greedy(ev, k)


def _bound(ev: GroupEvaluator, chosen: set[int], value: float,
           rest: list[int], slots: int) -> float:
    """Admissible upper bound: current value plus the best remaining
    singleton marginal gains, one per open slot."""
    if slots <= 0 or not rest:
        return value
    gains = sorted((ev.value(chosen | {c}) - value for c in rest),
                   reverse=True)
    return value + sum(g for g in gains[:slots] if g > 0)


def _pad_group(ev: GroupEvaluator, idxs: set[int], k: int) -> set[int]:
    if len(idxs) >= k:
        return idxs
    out = set(idxs)
    for idx in range(ev.node_count):
        if len(out) == k:
            break
        out.add(idx)
    return out


def exact_placement(network: Network, od: ODMatrix, k: int,
                    algorithm: str = "dfbnb", time_budget_s: float = 3600.0,
                    mode: WeightMode = "congested_time") -> SearchResult:
    """Optimal size-k group by branch and bound.

    algorithm "dfbnb" explores include-first depth-first; "potential" is
    best-first on bound / incumbent. Both prune on the singleton-gain bound
    and honour the wall-clock budget between node expansions. A finished
    run certifies optimality (certificate 1); a timed-out run reports the
    incumbent with certificate best / strongest-open-bound.
    """
    if time_budget_s <= 0:
        raise ValueError("time budget must be > 0")
    if algorithm not in ("dfbnb", "potential"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    start = time.perf_counter()
    ev = GroupEvaluator(network, od, mode)
    if not 1 <= k <= ev.node_count:
        raise ValueError("k must lie in [1, node count]")

    singles = [(ev.value({idx}), idx) for idx in range(ev.node_count)]
    cands = [idx for v, idx in sorted(singles, key=lambda vi: (-vi[0], vi[1]))
             if v > 0.0]
    seed = _lazy_greedy(ev, k)
    best_set = {network.index[s.node_id] for s in seed}
    best_val = seed[-1].gbc_value

    if len(cands) <= k:
        # zero-value nodes cannot add coverage; pad and finish
        full = set(cands)
        val = ev.value(full) if full else 0.0
        if val < best_val:
            full, val = best_set, best_val
        elapsed = time.perf_counter() - start
        return SearchResult(ev.group(_pad_group(ev, full, k)), 1.0, elapsed,
                            True)

    deadline = start + time_budget_s
    root_bound = _bound(ev, set(), 0.0, cands, k)
    completed = True
    if algorithm == "dfbnb":
        # stack of (chosen, value, next candidate position, bound at push)
        stack = [(set(), 0.0, 0, root_bound)]
        while stack:
            if time.perf_counter() > deadline:
                completed = False
                break
            chosen, value, pos, bound = stack.pop()
            if bound <= best_val:
                continue
            if len(chosen) == k:
                if value > best_val:
                    best_val, best_set = value, chosen
                continue
            if len(cands) - pos < k - len(chosen):
                continue
            c = cands[pos]
            rest = cands[pos + 1:]
            # exclude branch first so the include branch pops next
            ex_bound = _bound(ev, chosen, value, rest, k - len(chosen))
            if ex_bound > best_val and len(rest) >= k - len(chosen):
                stack.append((chosen, value, pos + 1, ex_bound))
            inc = chosen | {c}
            inc_val = ev.value(inc)
            if len(inc) == k:
                if inc_val > best_val:
                    best_val, best_set = inc_val, inc
            else:
                inc_bound = _bound(ev, inc, inc_val, rest, k - len(inc))
                if inc_bound > best_val:
                    stack.append((inc, inc_val, pos + 1, inc_bound))
        open_bounds = [b for _, _, _, b in stack]
    else:
        counter = 0
        heap = [(-root_bound / max(best_val, 1e-300), counter,
                 set(), 0.0, 0, root_bound)]
        while heap:
            if time.perf_counter() > deadline:
                completed = False
                break
            _, _, chosen, value, pos, bound = heapq.heappop(heap)
            if bound <= best_val:
                continue
            if len(chosen) == k:
                if value > best_val:
                    best_val, best_set = value, chosen
                continue
            if len(cands) - pos < k - len(chosen):
                continue
            c = cands[pos]
            rest = cands[pos + 1:]
            children = [(chosen, value, pos + 1)]
            inc = chosen | {c}
            children.append((inc, ev.value(inc), pos + 1))
            for ch_set, ch_val, ch_pos in children:
                if len(ch_set) == k:
                    if ch_val > best_val:
                        best_val, best_set = ch_val, ch_set
                    continue
                if len(cands) - ch_pos < k - len(ch_set):
                    continue
                ch_bound = _bound(ev, ch_set, ch_val, cands[ch_pos:],
                                  k - len(ch_set))
                if ch_bound > best_val:
                    counter += 1
                    heapq.heappush(heap, (
                        -ch_bound / max(best_val, 1e-300), counter,
                        ch_set, ch_val, ch_pos, ch_bound))
        open_bounds = [entry[5] for entry in heap]

    elapsed = time.perf_counter() - start
    if completed:
        certificate = 1.0
    else:
        upper = max([best_val] + open_bounds)
        certificate = best_val / upper if upper > 0 else 1.0
    return SearchResult(ev.group(_pad_group(ev, best_set, k)), certificate,
                        elapsed, completed)


def _ranked_by_score(network: Network, od: ODMatrix, mode: WeightMode,
                     alpha: Optional[float]) -> list[int]:
    if alpha is None:
        scores = betweenness(network, mode, od)
    else:
        scores = blended_betweenness(network, od, alpha)
    return scores.top(network.node_count)


def random_group_values(ev: GroupEvaluator, k: int, seed: int,
                        repetitions: int) -> np.ndarray:
    """Coverage of `repetitions` uniformly drawn size-k groups."""
    rng = np.random.default_rng(seed)
    values = np.empty(repetitions)
    for r in range(repetitions):
        draw = rng.choice(ev.node_count, size=k, replace=False)
        values[r] = ev.value({int(i) for i in draw})
    return values


def baseline_placement(network: Network, od: ODMatrix, k: int,
                       scheme: str = "random", *, seed: int = 0,
                       repetitions: int = 30,
                       mode: WeightMode = "congested_time",
                       alpha: Optional[float] = 0.25):
    """Reference placements: seeded random mean, or top-k by centrality.

    scheme "random" returns the mean coverage over `repetitions` uniform
    size-k draws; scheme "bc_topk" returns the MonitorGroup of the k
    highest blended-centrality nodes (plain single-mode scores when alpha
    is None).
    """
    ev = GroupEvaluator(network, od, mode)
    if not 1 <= k <= ev.node_count:
        raise ValueError("k must lie in [1, node count]")
    if scheme == "random":
        if repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        return float(random_group_values(ev, k, seed, repetitions).mean())
    if scheme == "bc_topk":
        ranked = _ranked_by_score(network, od, mode, alpha)
        return ev.group(ev.to_idx(ranked[:k]))
    raise ValueError(f"unknown scheme {scheme!r}")


def coverage_curve(network: Network, od: ODMatrix, scheme: str, k_max: int,
                   *, mode: WeightMode = "congested_time",
                   alpha: Optional[float] = 0.25, seed: int = 0,
                   repetitions: int = 30) -> CoverageCurve:
    """Coverage fraction as the group grows from 1 to k_max nodes."""
    ev = GroupEvaluator(network, od, mode)
    if not 1 <= k_max <= ev.node_count:
        raise ValueError("k_max must lie in [1, node count]")
    total = ev.total_demand

    def frac(v: float) -> float:
        return min(1.0, max(0.0, v / total))

    if scheme == "gbc_greedy":
        steps = _lazy_greedy(ev, k_max)
        points = [(i + 1, frac(s.gbc_value)) for i, s in enumerate(steps)]
    elif scheme == "bc_topk":
        ranked = _ranked_by_score(network, od, mode, alpha)
        points = []
        for n in range(1, k_max + 1):
            points.append((n, frac(ev.value(ev.to_idx(ranked[:n])))))
    elif scheme == "random":
        points = []
        for n in range(1, k_max + 1):
            vals = random_group_values(ev, n, seed + n, repetitions)
            points.append((n, frac(float(vals.mean()))))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return CoverageCurve(scheme, points)
