"""Directed road-network data model: loading, validation and structure reports.

Node ids are arbitrary non-negative integers taken from the link table.
Internally nodes are remapped to dense indices in ascending id order; every
public result is keyed by the original ids.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LINK_FIELDS = (
    "from", "to", "length_km", "road_type", "free_flow_min",
    "congested_min", "capacity_vph", "toll_min", "flow_vph",
)
OD_FIELDS = ("origin", "destination", "trips_per_hour")

STUB = "stub"
TRANSIT = "transit"


class NetworkFormatError(ValueError):
    """An input table violates the link or OD schema."""


@dataclass(frozen=True)
class Node:
    id: int
    kind: str = TRANSIT


@dataclass(frozen=True)
class Link:
    from_id: int
    to_id: int
    length_km: float
    road_type: int
    free_flow_min: float
    congested_min: float
    capacity_vph: float
    toll_min: float
    flow_vph: float


def _check_link(link: Link) -> None:
    if link.from_id < 0 or link.to_id < 0:
        raise NetworkFormatError("node ids must be non-negative")
    if link.from_id == link.to_id:
        raise NetworkFormatError(f"self loop at node {link.from_id}")
    if link.length_km < 0:
        raise NetworkFormatError("length_km must be >= 0")
    if link.free_flow_min <= 0:
        raise NetworkFormatError("free_flow_min must be > 0")
    if link.congested_min < 0:
        raise NetworkFormatError("congested_min must be >= 0")
    if link.capacity_vph < 0 or link.toll_min < 0 or link.flow_vph < 0:
        raise NetworkFormatError("capacity, toll and flow must be >= 0")
    if link.congested_min < link.free_flow_min:
        warnings.warn(
            f"link {link.from_id}->{link.to_id}: congested_min below "
            "free_flow_min", stacklevel=3)


class Network:
    """Immutable directed network over validated links.

    Attributes
    ----------
    nodes : tuple[Node, ...]
        Ascending by id.
    links : tuple[Link, ...]
        Canonical order, ascending by (from_id, to_id).
    index : dict[int, int]
        Original id -> dense index.
    """

    def __init__(self, links, node_ids=None):
        links = [l if isinstance(l, Link) else Link(*l) for l in links]
        for link in links:
            _check_link(link)
        seen = set()
        for link in links:
            key = (link.from_id, link.to_id)
            if key in seen:
                raise NetworkFormatError(f"duplicate link {key}")
            seen.add(key)
        ids = {l.from_id for l in links} | {l.to_id for l in links}
        if node_ids is not None:
            extra = set(int(i) for i in node_ids)
            if any(i < 0 for i in extra):
                raise NetworkFormatError("node ids must be non-negative")
            ids |= extra
        ids = sorted(ids)
        self.nodes = tuple(Node(i) for i in ids)
        self.links = tuple(sorted(links, key=lambda l: (l.from_id, l.to_id)))
        self.index = {i: k for k, i in enumerate(ids)}
        self.node_ids = tuple(ids)
        out: list[list[int]] = [[] for _ in ids]
        inc: list[list[int]] = [[] for _ in ids]
        for k, l in enumerate(self.links):
            out[self.index[l.from_id]].append(k)
            inc[self.index[l.to_id]].append(k)
        self.out_links = tuple(tuple(ks) for ks in out)
        self.in_links = tuple(tuple(ks) for ks in inc)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def link_count(self) -> int:
        return len(self.links)

    def __eq__(self, other):
        return (isinstance(other, Network)
                and self.nodes == other.nodes and self.links == other.links)

    def __hash__(self):
        return hash((self.nodes, self.links))

    def __repr__(self):
        return f"Network(nodes={self.node_count}, links={self.link_count})"


@dataclass(frozen=True)
class ODMatrix:
    """Origin-destination demand; entries map (origin, destination) to trips/h."""

    entries: dict[tuple[int, int], float]

    @property
    def total_demand(self) -> float:
        return float(sum(self.entries.values()))

    def origins(self) -> list[int]:
        return sorted({o for o, _ in self.entries})

    def by_origin(self) -> dict[int, list[tuple[int, float]]]:
        out: dict[int, list[tuple[int, float]]] = {}
        for (o, d), w in sorted(self.entries.items()):
            out.setdefault(o, []).append((d, w))
        return out


def _open_source(source):
    if isinstance(source, (str, Path)):
        return open(source, newline=""), True
    return source, False


def _read_rows(source, fields, label):
    handle, owned = _open_source(source)
    try:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise NetworkFormatError(f"{label}: empty input") from None
        header = [h.strip() for h in header]
        if header != list(fields):
            raise NetworkFormatError(
                f"{label}: header must be {','.join(fields)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(fields):
                raise NetworkFormatError(
                    f"{label} row {lineno}: expected {len(fields)} fields")
            rows.append((lineno, [c.strip() for c in row]))
        return rows
    finally:
        if owned:
            handle.close()


def _parse_int(text, label):
    try:
        return int(text)
    except ValueError:
        raise NetworkFormatError(f"{label}: bad integer {text!r}") from None


def _parse_float(text, label):
    try:
        value = float(text)
    except ValueError:
        raise NetworkFormatError(f"{label}: bad number {text!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise NetworkFormatError(f"{label}: non-finite value")
    return value


def load_network(source) -> Network:
    """Read a link table (path or open text stream) into a Network."""
    links = []
    for lineno, row in _read_rows(source, LINK_FIELDS, "links"):
        where = f"links row {lineno}"
        link = Link(
            from_id=_parse_int(row[0], where),
            to_id=_parse_int(row[1], where),
            length_km=_parse_float(row[2], where),
            road_type=_parse_int(row[3], where),
            free_flow_min=_parse_float(row[4], where),
            congested_min=_parse_float(row[5], where),
            capacity_vph=_parse_float(row[6], where),
            toll_min=_parse_float(row[7], where),
            flow_vph=_parse_float(row[8], where),
        )
        try:
            _check_link(link)
        except NetworkFormatError as err:
            raise NetworkFormatError(f"{where}: {err}") from None
        links.append(link)
    if not links:
        raise NetworkFormatError("links: no data rows")
    return Network(links)


def load_od_matrix(source, network: Network) -> ODMatrix:
    """Read an OD table and validate every endpoint against the network."""
    entries: dict[tuple[int, int], float] = {}
    for lineno, row in _read_rows(source, OD_FIELDS, "od"):
        where = f"od row {lineno}"
        o = _parse_int(row[0], where)
        d = _parse_int(row[1], where)
        trips = _parse_float(row[2], where)
        if o not in network.index or d not in network.index:
            raise NetworkFormatError(f"{where}: unknown node id")
        if o == d:
            raise NetworkFormatError(f"{where}: origin equals destination")
        if trips <= 0:
            raise NetworkFormatError(f"{where}: trips_per_hour must be > 0")
        if (o, d) in entries:
            raise NetworkFormatError(f"{where}: duplicate pair ({o},{d})")
        entries[(o, d)] = trips
    if not entries:
        raise NetworkFormatError("od: no data rows")
    return ODMatrix(entries)


def _float_cell(x: float) -> str:
    return format(float(x), ".17g")


def save_network(network: Network, target) -> None:
    """Write the canonical link table; load(save(net)) reproduces net exactly."""
    handle, owned = (open(target, "w", newline=""), True) \
        if isinstance(target, (str, Path)) else (target, False)
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(LINK_FIELDS)
        for l in network.links:
            writer.writerow([
                l.from_id, l.to_id, _float_cell(l.length_km), l.road_type,
                _float_cell(l.free_flow_min), _float_cell(l.congested_min),
                _float_cell(l.capacity_vph), _float_cell(l.toll_min),
                _float_cell(l.flow_vph),
            ])
    finally:
        if owned:
            handle.close()


def save_od_matrix(od: ODMatrix, target) -> None:
    handle, owned = (open(target, "w", newline=""), True) \
        if isinstance(target, (str, Path)) else (target, False)
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(OD_FIELDS)
        for (o, d), w in sorted(od.entries.items()):
            writer.writerow([o, d, _float_cell(w)])
    finally:
        if owned:
            handle.close()


@dataclass(frozen=True)
class NodeClassification:
    kinds: dict[int, str]
    stub_count: int
    transit_count: int


def classify_nodes(network: Network, od: ODMatrix) -> NodeClassification:
    """Split nodes into demand endpoints (stubs) and pure through nodes.

    A node is a stub iff it appears as origin or destination of any OD
    entry; every other node is transit.
    """
    endpoints = {o for o, _ in od.entries} | {d for _, d in od.entries}
    kinds = {i: (STUB if i in endpoints else TRANSIT) for i in network.node_ids}
    stubs = sum(1 for k in kinds.values() if k == STUB)
    return NodeClassification(kinds, stubs, len(kinds) - stubs)


@dataclass(frozen=True)
class StructuralSummary:
    node_count: int
    directed_edge_count: int
    undirected_edge_count: int
    equivalence_class_count: int
    largest_equivalence_class: int
    bcc_count: int
    avg_bcc_size: float
    largest_bcc: int


def _undirected_adjacency(network: Network) -> list[list[int]]:
    n = network.node_count
    nbrs = [set() for _ in range(n)]
    for l in network.links:
        u, v = network.index[l.from_id], network.index[l.to_id]
        nbrs[u].add(v)
        nbrs[v].add(u)
    return [sorted(s) for s in nbrs]


def _biconnected_components(adj: list[list[int]]) -> list[set[int]]:
    """Vertex sets of the biconnected components of a simple undirected graph.

    Iterative lowpoint computation with an explicit edge stack; isolated
    vertices belong to no component.
    """
    n = len(adj)
    disc = [0] * n
    low = [0] * n
    comps: list[set[int]] = []
    clock = 0
    for root in range(n):
        if disc[root] or not adj[root]:
            continue
        clock += 1
        disc[root] = low[root] = clock
        stack = [(root, -1, iter(adj[root]))]
        edges: list[tuple[int, int]] = []
        while stack:
            v, parent, it = stack[-1]
            descended = False
            for w in it:
                if w == parent:
                    continue
                if not disc[w]:
                    edges.append((v, w))
                    clock += 1
                    disc[w] = low[w] = clock
                    stack.append((w, v, iter(adj[w])))
                    descended = True
                    break
                if disc[w] < disc[v]:
                    edges.append((v, w))
                    if disc[w] < low[v]:
                        low[v] = disc[w]
            if descended:
                continue
            stack.pop()
            if not stack:
                continue
            u = stack[-1][0]
            if low[v] < low[u]:
                low[u] = low[v]
            if low[v] >= disc[u]:
                comp = set()
                while edges:
                    a, b = edges.pop()
                    comp.add(a)
                    comp.add(b)
                    if (a, b) == (u, v):
                        break
                comps.append(comp)
    return comps


def structural_summary(network: Network) -> StructuralSummary:
    """Topology report: edge counts, structural-equivalence classes, BCCs.

    Two nodes are structurally equivalent when their in-neighbour sets and
    out-neighbour sets both match exactly. Biconnected components are taken
    on the undirected projection.
    """
    n = network.node_count
    in_nbrs = [frozenset() for _ in range(n)]
    out_nbrs = [frozenset() for _ in range(n)]
    ins: list[set[int]] = [set() for _ in range(n)]
    outs: list[set[int]] = [set() for _ in range(n)]
    undirected = set()
    for l in network.links:
        u, v = network.index[l.from_id], network.index[l.to_id]
        outs[u].add(v)
        ins[v].add(u)
        undirected.add((min(u, v), max(u, v)))
    classes: dict[tuple[frozenset, frozenset], int] = {}
    for k in range(n):
        key = (frozenset(ins[k]), frozenset(outs[k]))
        classes[key] = classes.get(key, 0) + 1
    comps = _biconnected_components(_undirected_adjacency(network))
    sizes = [len(c) for c in comps]
    return StructuralSummary(
        node_count=n,
        directed_edge_count=network.link_count,
        undirected_edge_count=len(undirected),
        equivalence_class_count=len(classes),
        largest_equivalence_class=max(classes.values()) if classes else 0,
        bcc_count=len(comps),
        avg_bcc_size=float(np.mean(sizes)) if sizes else 0.0,
        largest_bcc=max(sizes) if sizes else 0,
    )


@dataclass(frozen=True)
class FlowRecord:
    node_id: int
    inbound_vph: float
    outbound_vph: float
    imbalance_vph: float


def flow_consistency(network: Network) -> list[FlowRecord]:
    """Per-node inbound minus outbound flow, largest absolute imbalance first."""
    records = []
    for i, node_id in enumerate(network.node_ids):
        inbound = sum(network.links[k].flow_vph for k in network.in_links[i])
        outbound = sum(network.links[k].flow_vph for k in network.out_links[i])
        records.append(FlowRecord(node_id, inbound, outbound, inbound - outbound))
    records.sort(key=lambda r: (-abs(r.imbalance_vph), r.node_id))
    return records


def node_congestion(network: Network) -> dict[int, float]:
    """Total inbound delay per node: sum of (congested - free flow) minutes."""
    out = {}
    for i, node_id in enumerate(network.node_ids):
        out[node_id] = sum(
            network.links[k].congested_min - network.links[k].free_flow_min
            for k in network.in_links[i])
    return out


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]


def distribution_histogram(values, bins=10) -> Histogram:
    """Histogram of a value collection; bins is a count or explicit edges."""
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        raise ValueError("histogram of empty collection")
    if not np.all(np.isfinite(data)):
        raise ValueError("histogram values must be finite")
    counts, edges = np.histogram(data, bins=bins)
    return Histogram(tuple(float(e) for e in edges),
                     tuple(int(c) for c in counts))
