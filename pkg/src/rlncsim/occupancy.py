"""Occupancy-vector model of finite-buffer RLNC.

The state is a flat integer array ``b`` of length 2**n indexed by relay-subset
bitmask (bit i-1 stands for relay i).  ``b[S]`` counts the packets the relays
in S hold that are innovative with respect to the remaining relays together
with the destination.  Every stored entry uses that destination-inclusive
convention, so the subset innovativeness recovered from ``b`` is always
relative to "the other set plus d".
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .netmodel import ErasureNetwork, sample_realizations, seed_streams
from .stats import batch_means

DTYPE = np.int32
MAX_RELAYS = 16


class NegativeInnovativeness(RuntimeError):
    """A derived innovativeness came out negative: the state is corrupt."""


@dataclass
class EpochOutcome:
    new_state: np.ndarray
    delivered: int


def bit(relay: int) -> int:
    return 1 << (relay - 1)


def subset_mask(relays: Iterable[int]) -> int:
    mask = 0
    for r in relays:
        mask |= bit(r)
    return mask


def mask_members(mask: int) -> tuple[int, ...]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def zero_state(n: int) -> np.ndarray:
    return np.zeros(1 << n, dtype=DTYPE)


def innovativeness(b: np.ndarray, s: int, s_prime: int) -> int:
    """Packets the relays in ``s`` can generate beyond ``s_prime`` (plus d).

    Subsets are bitmasks; complements are taken within the relay set.
    """
    full = len(b) - 1
    value = int(b[full ^ s_prime]) - int(b[full ^ (s | s_prime)])
    if value < 0:
        raise NegativeInnovativeness(f"I[{s:#x} -> {s_prime:#x}] = {value}")
    return value


class _Index:
    """Precomputed subset index arrays for one relay count."""

    def __init__(self, n: int):
        if n > MAX_RELAYS:
            raise ValueError(f"full occupancy state supports at most {MAX_RELAYS} relays")
        self.n = n
        self.full = (1 << n) - 1
        subsets = np.arange(1 << n, dtype=np.int64)
        self.subsets = subsets
        self.has = {}
        self.with_ = {}
        self.without = {}
        for i in range(1, n + 1):
            bi = bit(i)
            self.has[i] = (subsets & bi) != 0
            self.with_[i] = subsets | bi
            self.without[i] = subsets & ~bi


_INDEX_CACHE: dict[int, _Index] = {}


def _index(n: int) -> _Index:
    if n not in _INDEX_CACHE:
        _INDEX_CACHE[n] = _Index(n)
    return _INDEX_CACHE[n]


def _n_of(b: np.ndarray) -> int:
    return int(len(b)).bit_length() - 1


def apply_source_to_relay(b: np.ndarray, i: int, m_i: int, check: bool = False) -> np.ndarray:
    """Relay i folds in a fresh packet from the source."""
    if b[bit(i)] >= m_i:
        return b
    ix = _index(_n_of(b))
    # I_{i -> S^c \ i} = b[S | i] - b[S] for S not containing i
    gain = b[ix.with_[i]] - b
    if check and (gain < 0).any():
        raise NegativeInnovativeness(f"source->relay {i}: negative I_(i -> S^c minus i)")
    inc = ix.has[i] | (gain == m_i)
    return b + inc.astype(DTYPE)


def apply_relay_to_relay(b: np.ndarray, i: int, j: int, m_j: int, check: bool = False) -> np.ndarray:
    """Relay j folds in a combination of relay i's buffer."""
    ix = _index(_n_of(b))
    # conditions on pre-state: I_{j -> S^c \ j} = b[S | j] - b[S],  I_{i -> S^c} = b[S] - b[S \ i]
    i_j = b[ix.with_[j]] - b
    i_i = b - b[ix.without[i]]
    if check and ((i_j < 0).any() or (i_i < 0).any()):
        raise NegativeInnovativeness(f"relay {i} -> relay {j}: negative innovativeness")
    dec = ix.has[i] & ~ix.has[j] & (i_j < m_j) & (i_i > 0)
    if not dec.any():
        return b
    return b - dec.astype(DTYPE)


def apply_relay_to_dest(b: np.ndarray, j: int, check: bool = False) -> tuple[np.ndarray, int]:
    """The destination receives a combination of relay j's buffer."""
    ix = _index(_n_of(b))
    # I_{j -> S^c} = b[S] - b[S \ j]
    i_j = b - b[ix.without[j]]
    if check and (i_j < 0).any():
        raise NegativeInnovativeness(f"relay {j} -> d: negative innovativeness")
    innovative = int(i_j[ix.full] > 0)
    dec = ix.has[j] & (i_j > 0)
    if not dec.any():
        return b, innovative
    return b - dec.astype(DTYPE), innovative


def apply_edge(network: ErasureNetwork, b: np.ndarray, edge: tuple[int, int], check: bool = False) -> tuple[np.ndarray, int]:
    tail, head = edge
    d = network.dest
    if tail == network.source:
        if head == d:
            # fresh source packet straight to d: innovative, relays untouched
            return b, 1
        return apply_source_to_relay(b, head, network.buffer(head), check), 0
    if head == d:
        return apply_relay_to_dest(b, tail, check)
    return apply_relay_to_relay(b, tail, head, network.buffer(head), check), 0


def step_epoch(network: ErasureNetwork, b: np.ndarray, realization, check: bool = False) -> EpochOutcome:
    """Apply every successful edge of one epoch in the network's edge order."""
    delivered = 0
    for ok, edge in zip(realization, network.edges):
        if ok:
            b, got = apply_edge(network, b, edge, check)
            delivered += got
    return EpochOutcome(b, delivered)


def check_state(network: ErasureNetwork, b: np.ndarray) -> None:
    """Raise if ``b`` breaks a structural invariant of occupancy vectors."""
    ix = _index(network.n)
    if b[0] != 0:
        raise NegativeInnovativeness("b of the empty set must be 0")
    if (b < 0).any():
        raise NegativeInnovativeness("negative occupancy entry")
    caps = capacity_vector(network)
    if (b > caps).any():
        raise NegativeInnovativeness("occupancy above buffer capacity")
    for i in network.relays:
        if ((b[ix.with_[i]] - b) < 0).any():
            raise NegativeInnovativeness(f"occupancy not monotone when adding relay {i}")


def capacity_vector(network: ErasureNetwork) -> np.ndarray:
    """sum of buffer sizes over each subset."""
    ix = _index(network.n)
    caps = np.zeros(1 << network.n, dtype=DTYPE)
    for i in network.relays:
        caps += ix.has[i].astype(DTYPE) * network.buffer(i)
    return caps


def realization_code(bits) -> int:
    code = 0
    for k, x in enumerate(bits):
        if x:
            code |= 1 << k
    return code


def realization_bits(code: int, n_edges: int) -> tuple[int, ...]:
    return tuple((code >> k) & 1 for k in range(n_edges))


@dataclass
class OccupancyEngine:
    """Stateful occupancy simulator with a memoised transition table.

    States are interned to integer ids; the (state id, realization code)
    transition cache makes long runs on small state spaces cheap.
    """

    network: ErasureNetwork
    cache_limit: int = 2_000_000
    states: list[np.ndarray] = field(default_factory=list)
    ids: dict[bytes, int] = field(default_factory=dict)
    transitions: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)
    current: int = 0
    epoch: int = 0

    def __post_init__(self):
        self.current = self.intern(zero_state(self.network.n))

    def intern(self, b: np.ndarray) -> int:
        key = b.tobytes()
        sid = self.ids.get(key)
        if sid is None:
            sid = len(self.states)
            self.ids[key] = sid
            self.states.append(b)
        return sid

    @property
    def state(self) -> np.ndarray:
        return self.states[self.current]

    def successor(self, sid: int, code: int) -> tuple[int, int]:
        key = (sid, code)
        hit = self.transitions.get(key)
        if hit is not None:
            return hit
        bits = realization_bits(code, len(self.network.edges))
        out = step_epoch(self.network, self.states[sid], bits)
        result = (self.intern(out.new_state), out.delivered)
        if len(self.transitions) < self.cache_limit:
            self.transitions[key] = result
        return result

    def step_code(self, code: int) -> int:
        self.current, delivered = self.successor(self.current, code)
        self.epoch += 1
        return delivered

    def step(self, realization) -> int:
        return self.step_code(realization_code(realization))


def default_warmup(network: ErasureNetwork) -> int:
    return max(10_000, 50 * sum(network.buffers))


def _codes(network: ErasureNetwork, rng: np.random.Generator, count: int) -> np.ndarray:
    bits = sample_realizations(network, rng, count).astype(np.int64)
    weights = 1 << np.arange(len(network.edges), dtype=np.int64)
    return bits @ weights


def run_codes(engine: OccupancyEngine, rng: np.random.Generator, epochs: int, chunk: int = 65536):
    """Yield (state id, delivered) after each of ``epochs`` random epochs."""
    done = 0
    while done < epochs:
        todo = min(chunk, epochs - done)
        for code in _codes(engine.network, rng, todo).tolist():
            delivered = engine.step_code(code)
            yield engine.current, delivered
        done += todo


def monte_carlo_throughput(
    network: ErasureNetwork,
    epochs: int,
    seed: int,
    warmup: int | None = None,
    batches: int = 20,
) -> dict:
    """Time-averaged deliveries per epoch after warmup, with a batch-means 95% CI."""
    if warmup is None:
        warmup = default_warmup(network)
    if epochs <= warmup:
        raise ValueError(f"epochs ({epochs}) must exceed the warmup ({warmup})")
    rng, _ = seed_streams(seed)
    engine = OccupancyEngine(network)
    counts = np.fromiter((d for _, d in run_codes(engine, rng, epochs)), dtype=np.int64, count=epochs)
    mean, half = batch_means(counts[warmup:], batches)
    return {
        "throughput": mean,
        "ci95": half,
        "epochs": epochs,
        "warmup": warmup,
        "distinct_states": len(engine.states),
    }


def state_census(
    network: ErasureNetwork,
    epochs: int,
    seed: int,
    warmup: int | None = None,
) -> dict:
    """Distinct occupancy vectors visited after warmup, with visit frequencies."""
    if warmup is None:
        warmup = default_warmup(network)
    rng, _ = seed_streams(seed)
    engine = OccupancyEngine(network)
    visits: Counter[int] = Counter()
    early: set[int] = {engine.current}
    for t, (sid, _) in enumerate(run_codes(engine, rng, warmup + epochs)):
        if t < warmup:
            early.add(sid)
        else:
            visits[sid] += 1
    total = sum(visits.values())
    freq = {tuple(int(x) for x in engine.states[sid]): c / total for sid, c in sorted(visits.items())}
    m = max(network.buffers)
    return {
        "visited_count": len(visits),
        "transient_only_count": len(early - set(visits)),
        "frequencies": freq,
        "upper_bound": (m + 1) ** ((1 << network.n) - 1),
        "epochs": epochs,
        "warmup": warmup,
    }
