"""Static network instances: validation, canonical edge order, min-cut, channel sampling.

Internally the source is node 0, relays are 1..n in topological order and the
destination is n + 1.  Edges are stored already sorted in the processing
order used by both simulation engines.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Iterable, Sequence

import networkx as nx
import numpy as np

SOURCE = 0


class NetworkError(ValueError):
    """Base class for invalid network descriptions."""


class CycleDetected(NetworkError):
    pass


class DisconnectedRelay(NetworkError):
    pass


class InvalidProbability(NetworkError):
    pass


class NonPositiveBuffer(NetworkError):
    pass


class MissingSourceOrDest(NetworkError):
    pass


@dataclass(frozen=True)
class ErasureNetwork:
    n: int
    edges: tuple[tuple[int, int], ...]
    erasure: tuple[Fraction, ...]
    buffers: tuple[int, ...]
    labels: tuple[str, ...]

    @property
    def source(self) -> int:
        return SOURCE

    @property
    def dest(self) -> int:
        return self.n + 1

    @property
    def relays(self) -> range:
        return range(1, self.n + 1)

    @property
    def edge_order(self) -> tuple[tuple[int, int], ...]:
        return self.edges

    @property
    def success_prob(self) -> np.ndarray:
        return np.array([1.0 - float(e) for e in self.erasure])

    def buffer(self, relay: int) -> int:
        return self.buffers[relay - 1]

    def label(self, node: int) -> str:
        return self.labels[node]

    def edge_label(self, edge: tuple[int, int]) -> str:
        return f"({self.labels[edge[0]]},{self.labels[edge[1]]})"

    def with_buffers(self, m: int) -> "ErasureNetwork":
        if m <= 0:
            raise NonPositiveBuffer(f"buffer size must be positive, got {m}")
        return replace(self, buffers=(int(m),) * self.n)

    def with_erasures(self, erasure: dict[tuple[int, int], Any]) -> "ErasureNetwork":
        new = list(self.erasure)
        for k, (tail, head) in enumerate(self.edges):
            if (tail, head) in erasure:
                new[k] = _parse_prob(erasure[(tail, head)], self.edge_label((tail, head)))
        return replace(self, erasure=tuple(new))


def _parse_prob(raw: Any, where: str) -> Fraction:
    try:
        p = Fraction(raw) if isinstance(raw, (int, Fraction)) else Fraction(str(raw))
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidProbability(f"erasure on {where} is not a number: {raw!r}") from exc
    if not 0 <= p <= 1:
        raise InvalidProbability(f"erasure on {where} must lie in [0, 1], got {raw}")
    return p


def validate(desc: dict) -> ErasureNetwork:
    """Check a raw description and return the canonical network.

    ``desc`` follows the JSON schema read by the CLI: ``nodes`` (each with
    ``id`` and, for relays, ``buffer``), ``edges`` (``from``, ``to``,
    ``erasure``), ``source`` and ``dest``.
    """
    src, dst = desc.get("source"), desc.get("dest")
    if src is None or dst is None:
        raise MissingSourceOrDest("description must name both 'source' and 'dest'")
    src, dst = str(src), str(dst)
    if src == dst:
        raise MissingSourceOrDest("source and destination must differ")

    ids: list[str] = []
    buffers: dict[str, int] = {}
    for node in desc.get("nodes", []):
        nid = str(node["id"])
        if nid in buffers or nid in ids:
            raise NetworkError(f"duplicate node id {nid!r}")
        ids.append(nid)
        if nid in (src, dst):
            continue
        if "buffer" not in node:
            raise NonPositiveBuffer(f"relay {nid!r} has no buffer size")
        m = node["buffer"]
        if isinstance(m, bool) or not isinstance(m, int) or m <= 0:
            raise NonPositiveBuffer(f"relay {nid!r} buffer must be a positive integer, got {m!r}")
        buffers[nid] = m
    if src not in ids or dst not in ids:
        raise MissingSourceOrDest(f"source {src!r} or dest {dst!r} missing from nodes")

    raw_edges: list[tuple[str, str, Fraction]] = []
    seen = set()
    for e in desc.get("edges", []):
        tail, head = str(e["from"]), str(e["to"])
        for x in (tail, head):
            if x not in ids:
                raise NetworkError(f"edge references unknown node {x!r}")
        if tail == head:
            raise CycleDetected(f"self-loop on {tail!r}")
        if head == src:
            raise MissingSourceOrDest(f"edge ({tail},{head}) enters the source")
        if tail == dst:
            raise MissingSourceOrDest(f"edge ({tail},{head}) leaves the destination")
        if (tail, head) in seen:
            raise NetworkError(f"parallel edge ({tail},{head}) not supported")
        seen.add((tail, head))
        raw_edges.append((tail, head, _parse_prob(e.get("erasure", 0), f"({tail},{head})")))

    succ: dict[str, list[str]] = {x: [] for x in ids}
    pred: dict[str, list[str]] = {x: [] for x in ids}
    for tail, head, _ in raw_edges:
        succ[tail].append(head)
        pred[head].append(tail)

    # Kahn's algorithm, ties broken by order of appearance in the node list.
    position = {x: i for i, x in enumerate(ids)}
    indeg = {x: len(pred[x]) for x in ids}
    ready = sorted((x for x in ids if indeg[x] == 0), key=position.__getitem__)
    topo: list[str] = []
    while ready:
        x = ready.pop(0)
        topo.append(x)
        for y in succ[x]:
            indeg[y] -= 1
            if indeg[y] == 0:
                ready.append(y)
                ready.sort(key=position.__getitem__)
    if len(topo) != len(ids):
        raise CycleDetected("network graph contains a directed cycle")

    from_s = _reach(src, succ)
    to_d = _reach(dst, pred)
    for x in ids:
        if x in (src, dst):
            continue
        if x not in from_s or x not in to_d:
            raise DisconnectedRelay(f"relay {x!r} does not lie on any source-destination path")

    relay_order = [x for x in topo if x not in (src, dst)]
    n = len(relay_order)
    index = {src: SOURCE, dst: n + 1}
    index.update({x: i + 1 for i, x in enumerate(relay_order)})
    labels = [src] + relay_order + [dst]
    edges = [(index[t], index[h], p) for t, h, p in raw_edges]
    edges = _sort_edges(n, edges)
    return ErasureNetwork(
        n=n,
        edges=tuple((t, h) for t, h, _ in edges),
        erasure=tuple(p for _, _, p in edges),
        buffers=tuple(buffers[x] for x in relay_order),
        labels=tuple(labels),
    )


def _reach(start: str, adj: dict[str, list[str]]) -> set[str]:
    seen = {start}
    todo = [start]
    while todo:
        x = todo.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return seen


def _hops_to_dest(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    """Longest hop count from every node to the destination (DAG)."""
    succ: list[list[int]] = [[] for _ in range(n + 2)]
    for t, h in edges:
        succ[t].append(h)
    dist = [0] * (n + 2)
    # relays are numbered topologically, so a reverse sweep sees heads first
    for v in list(range(n, 0, -1)) + [SOURCE]:
        dist[v] = max((dist[h] + 1 for h in succ[v]), default=0)
    return dist


def _sort_edges(n, edges):
    dist = _hops_to_dest(n, [(t, h) for t, h, *_ in edges])
    return sorted(edges, key=lambda e: (dist[e[0]], e[0], e[1]))


def topological_edge_order(network: ErasureNetwork) -> list[tuple[int, int]]:
    """Downstream-first processing order.

    Edges are sorted by the longest hop distance from their tail to the
    destination, then by (tail, head).  Any edge leaving a node therefore
    precedes every edge entering it, so within an epoch each node transmits
    its start-of-epoch content.
    """
    return [(t, h) for t, h in _sort_edges(network.n, list(network.edges))]


def serialize(network: ErasureNetwork) -> dict:
    labels = network.labels
    nodes = [{"id": labels[SOURCE]}]
    nodes += [{"id": labels[i], "buffer": network.buffer(i)} for i in network.relays]
    nodes.append({"id": labels[network.dest]})
    edges = [
        {"from": labels[t], "to": labels[h], "erasure": _fraction_text(p)}
        for (t, h), p in zip(network.edges, network.erasure)
    ]
    return {"nodes": nodes, "edges": edges, "source": labels[SOURCE], "dest": labels[network.dest]}


def _fraction_text(p: Fraction) -> str:
    # shortest exact decimal literal when the denominator is 2^a 5^b
    den, twos, fives = p.denominator, 0, 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{p.numerator}/{p.denominator}"
    digits = max(twos, fives, 1)
    scaled = p * 10**digits
    whole, frac = divmod(int(scaled), 10**digits)
    return f"{whole}.{frac:0{digits}d}"


def min_cut_capacity(network: ErasureNetwork) -> Fraction:
    """Exact s-d max-flow value with edge capacities 1 - erasure."""
    caps = [1 - p for p in network.erasure]
    scale = math.lcm(*(c.denominator for c in caps)) if caps else 1
    g = nx.DiGraph()
    g.add_nodes_from([network.source, network.dest])
    for (t, h), c in zip(network.edges, caps):
        g.add_edge(t, h, capacity=int(c * scale))
    value = nx.maximum_flow_value(g, network.source, network.dest)
    return Fraction(int(value), scale)


def sample_realization(network: ErasureNetwork, rng: np.random.Generator) -> np.ndarray:
    """One epoch of channel outcomes as a 0/1 vector indexed like ``network.edges``."""
    return (rng.random(len(network.edges)) < network.success_prob).astype(np.uint8)


def sample_realizations(network: ErasureNetwork, rng: np.random.Generator, count: int) -> np.ndarray:
    return (rng.random((count, len(network.edges))) < network.success_prob).astype(np.uint8)


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(channel, coding) generators derived from one seed.

    The channel stream matches the occupancy engine's, so equal seeds give
    both engines the same erasure pattern.
    """
    channel, coding = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(channel), np.random.default_rng(coding)


# -- builders ---------------------------------------------------------------


def build(
    n: int,
    edges: Sequence[tuple[Any, Any, Any]],
    buffers: int | Sequence[int] = 1,
) -> ErasureNetwork:
    """Build from relay count and (tail, head, erasure) triples using ids 's', 1..n, 'd'."""
    if isinstance(buffers, int):
        buffers = [buffers] * n
    desc = {
        "nodes": [{"id": "s"}] + [{"id": str(i + 1), "buffer": int(b)} for i, b in enumerate(buffers)] + [{"id": "d"}],
        "edges": [{"from": str(t), "to": str(h), "erasure": str(p)} for t, h, p in edges],
        "source": "s",
        "dest": "d",
    }
    return validate(desc)


def line(n: int, erasure: Any = "0.5", buffers: int | Sequence[int] = 1) -> ErasureNetwork:
    nodes = ["s"] + [str(i) for i in range(1, n + 1)] + ["d"]
    if not isinstance(erasure, (list, tuple)):
        erasure = [erasure] * (n + 1)
    return build(n, [(a, b, p) for a, b, p in zip(nodes, nodes[1:], erasure)], buffers)


NETWORK1_EDGES = (
    ("s", "1", "0.1"),
    ("1", "2", "0.6"),
    ("1", "3", "0.5"),
    ("2", "4", "0.4"),
    ("3", "4", "0.5"),
    ("4", "d", "0.1"),
)


def network1(m: int = 1) -> ErasureNetwork:
    return build(4, NETWORK1_EDGES, m)


def network2_standin(m: int = 1) -> ErasureNetwork:
    """Layered six-relay stand-in: 0.25 on source/destination links, 0.5 elsewhere."""
    edges = [
        ("s", "1", "0.25"), ("s", "2", "0.25"),
        ("1", "3", "0.5"), ("1", "4", "0.5"), ("2", "3", "0.5"), ("2", "4", "0.5"),
        ("3", "5", "0.5"), ("3", "6", "0.5"), ("4", "5", "0.5"), ("4", "6", "0.5"),
        ("5", "d", "0.25"), ("6", "d", "0.25"),
    ]
    return build(6, edges, m)


def random_dag(
    rng: random.Random,
    n: int,
    erasures: Sequence[str] = ("0.2", "0.5", "0.8"),
    max_buffer: int = 2,
    edge_prob: float = 0.4,
) -> ErasureNetwork:
    """Random acyclic network on relays 1..n where every relay lies on an s-d path."""
    edges: set[tuple[str, str]] = set()
    names = [str(i) for i in range(1, n + 1)]
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < edge_prob:
                edges.add((names[a], names[b]))
    for a in range(n):
        if rng.random() < edge_prob:
            edges.add(("s", names[a]))
        if rng.random() < edge_prob:
            edges.add((names[a], "d"))
    # patch connectivity: every relay gets a predecessor and a successor
    for a in range(n):
        if not any(h == names[a] for _, h in edges):
            tail = rng.choice(["s"] + names[:a])
            edges.add((tail, names[a]))
        if not any(t == names[a] for t, _ in edges):
            head = rng.choice(names[a + 1 :] + ["d"])
            edges.add((names[a], head))
    triples = [(t, h, rng.choice(erasures)) for t, h in sorted(edges)]
    bufs = [rng.randint(1, max_buffer) for _ in range(n)]
    return build(n, triples, bufs)


def random_layered(
    rng: random.Random,
    n: int,
    erasures: Sequence[str] = ("0.2", "0.5", "0.8"),
    max_buffer: int = 2,
    edge_prob: float = 0.5,
) -> ErasureNetwork:
    """Random network whose relay links all go from hop layer k to layer k - 1."""
    depth = rng.randint(1, n)
    sizes = [1] * depth
    for _ in range(n - depth):
        sizes[rng.randrange(depth)] += 1
    layers: list[list[str]] = []
    label = 1
    # layer 0 of this list is farthest from d
    for size in sizes:
        layers.append([str(label + i) for i in range(size)])
        label += size
    edges: set[tuple[str, str]] = set()
    for v in layers[-1]:
        edges.add((v, "d"))
    for up, down in zip(layers, layers[1:]):
        for v in up:
            targets = [w for w in down if rng.random() < edge_prob] or [rng.choice(down)]
            edges.update((v, w) for w in targets)
        for w in down:
            if not any(h == w for _, h in edges):
                edges.add((rng.choice(up), w))
    for li, layer in enumerate(layers):
        for v in layer:
            if li == 0 or rng.random() < 0.2:
                edges.add(("s", v))
    triples = [(t, h, rng.choice(erasures)) for t, h in sorted(edges)]
    bufs = [rng.randint(1, max_buffer) for _ in range(n)]
    return build(n, triples, bufs)
