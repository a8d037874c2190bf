"""State reduction for layered networks.

Relays are grouped by shortest hop distance to the destination.  In a layered
network every relay link drops exactly one layer, and only the occupancy of
subsets whose complement can still reach d on its own is tracked.  The
reduced engine applies the same per-edge rules as the full model; whenever a
rule needs an entry outside the tracked family it raises ClosureViolation
instead of guessing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .netmodel import ErasureNetwork
from .occupancy import bit, mask_members, realization_bits, realization_code


class ClosureViolation(RuntimeError):
    def __init__(self, subset: int, edge: tuple[int, int], target: int):
        self.subset = subset
        self.edge = edge
        self.target = target
        super().__init__(
            f"edge {edge} updating S={set(mask_members(target))} needs b for "
            f"S={set(mask_members(subset))}, which is not tracked"
        )


class NotLayered(ValueError):
    pass


def hop_distances(network: ErasureNetwork) -> dict[int, int]:
    """Shortest hop distance to d for every relay (BFS on reversed edges)."""
    pred: dict[int, list[int]] = {}
    for t, h in network.edges:
        pred.setdefault(h, []).append(t)
    dist = {network.dest: 0}
    todo = deque([network.dest])
    while todo:
        v = todo.popleft()
        for u in pred.get(v, []):
            if u not in dist and u != network.source:
                dist[u] = dist[v] + 1
                todo.append(u)
    return {v: d for v, d in dist.items() if v != network.dest}


def layered_partition(network: ErasureNetwork) -> dict[int, set[int]]:
    layers: dict[int, set[int]] = {}
    for v, d in hop_distances(network).items():
        layers.setdefault(d, set()).add(v)
    return dict(sorted(layers.items()))


def is_in_class_N(network: ErasureNetwork) -> bool:
    """True when every relay link goes from layer k to layer k - 1 (source links exempt)."""
    dist = hop_distances(network)
    dist[network.dest] = 0
    return all(t == network.source or dist[t] - 1 == dist[h] for t, h in network.edges)


def enumerate_A(network: ErasureNetwork) -> list[int]:
    """Bitmasks S whose complement reaches d without leaving the complement."""
    n = network.n
    succ: dict[int, list[int]] = {}
    for t, h in network.edges:
        if t != network.source:
            succ.setdefault(t, []).append(h)
    full = (1 << n) - 1
    family = []
    for s in range(1 << n):
        comp = full ^ s
        # relays of the complement that reach d inside it, swept downstream-up
        good = 0
        for v in range(n, 0, -1):
            if comp & bit(v) and any(h == network.dest or good & bit(h) for h in succ.get(v, [])):
                good |= bit(v)
        if good == comp:
            family.append(s)
    return family


@dataclass
class ReducedEngine:
    """Occupancy model restricted to the tracked family, with memoised transitions."""

    network: ErasureNetwork
    family: list[int] = field(default_factory=list)
    position: dict[int, int] = field(default_factory=dict)
    states: list[tuple[int, ...]] = field(default_factory=list)
    ids: dict[tuple[int, ...], int] = field(default_factory=dict)
    transitions: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)
    current: int = 0

    def __post_init__(self):
        if not is_in_class_N(self.network):
            raise NotLayered("reduced engine requires a layered network")
        self.family = enumerate_A(self.network)
        self.position = {s: k for k, s in enumerate(self.family)}
        self.current = self._intern((0,) * len(self.family))

    def _intern(self, state: tuple[int, ...]) -> int:
        sid = self.ids.get(state)
        if sid is None:
            sid = len(self.states)
            self.ids[state] = sid
            self.states.append(state)
        return sid

    @property
    def state(self) -> dict[int, int]:
        return dict(zip(self.family, self.states[self.current]))

    def step(self, realization) -> int:
        code = realization_code(realization)
        key = (self.current, code)
        hit = self.transitions.get(key)
        if hit is None:
            new, delivered = reduced_step_epoch(self, self.states[self.current], realization)
            hit = (self._intern(new), delivered)
            self.transitions[key] = hit
        self.current = hit[0]
        return hit[1]

    def project(self, b: np.ndarray) -> tuple[int, ...]:
        """Restrict a full occupancy vector to the tracked family."""
        return tuple(int(b[s]) for s in self.family)


def _apply_edge(engine: ReducedEngine, vals: list[int], edge: tuple[int, int]) -> tuple[list[int], int]:
    net = engine.network
    pos = engine.position
    tail, head = edge
    full = (1 << net.n) - 1

    def get(s: int, target: int) -> int:
        k = pos.get(s)
        if k is None:
            raise ClosureViolation(s, edge, target)
        return vals[k]

    new = list(vals)
    if tail == net.source:
        if head == net.dest:
            return new, 1
        bi, m = bit(head), net.buffer(head)
        if get(bi, bi) >= m:
            return new, 0
        for k, s in enumerate(engine.family):
            if s & bi or get(s | bi, s) - vals[k] == m:
                new[k] += 1
        return new, 0
    if head == net.dest:
        bj = bit(tail)
        innovative = int(get(full, full) - get(full ^ bj, full) > 0)
        for k, s in enumerate(engine.family):
            if s & bj and vals[k] - get(s & ~bj, s) > 0:
                new[k] -= 1
        return new, innovative
    bi, bj, m = bit(tail), bit(head), net.buffer(head)
    for k, s in enumerate(engine.family):
        if not s & bi or s & bj:
            continue
        if vals[k] - get(s & ~bi, s) > 0 and get(s | bj, s) - vals[k] < m:
            new[k] -= 1
    return new, 0


def reduced_step_epoch(engine: ReducedEngine, state: tuple[int, ...], realization) -> tuple[tuple[int, ...], int]:
    """One epoch on the tracked entries only; edges in the network's order."""
    vals = list(state)
    delivered = 0
    for ok, edge in zip(realization, engine.network.edges):
        if ok:
            vals, got = _apply_edge(engine, vals, edge)
            delivered += got
    return tuple(vals), delivered
