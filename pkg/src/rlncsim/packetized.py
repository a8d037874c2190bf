"""Packet-level RLNC simulation over GF(2^w): the ground truth for the occupancy model.

Each epoch runs in two phases.  First every successful edge's packet is drawn
from its tail's start-of-epoch buffer (the source sends a uniform combination
of the whole block).  Then the packets are delivered in the network's edge
order: a relay folds the packet into every slot with fresh random
coefficients, the destination adds it to its decoding matrix.  Erased packets
never influence any state, so they are not generated.

Two representations are provided.

``DensePacketizedEngine`` stores every buffer slot as a length-k coefficient
vector over the source packets and keeps the destination matrix in reduced
echelon form.  Memory and time grow with k, so it is meant for small blocks.

``PacketizedEngine`` stores the same buffers in coordinates of the quotient
space (source block) / (destination span).  A coordinate is added whenever
the source emits a direction outside the tracked subspace and removed when
the destination decodes one, and unused coordinates are compacted away.  All
subspace dimensions the model depends on are preserved, and the finite block
is honoured by counting how many unseen source dimensions remain, so the two
engines are equal in distribution while this one runs in time independent
of k.
"""

from __future__ import annotations

import numpy as np

from .gfield import GF, field
from .netmodel import ErasureNetwork, min_cut_capacity, sample_realizations, seed_streams
from .occupancy import bit
from .stats import batch_means

DEFAULT_MEMORY_BUDGET = 1 << 30


class MemoryBudgetExceeded(MemoryError):
    pass


class NonTerminating(RuntimeError):
    pass


def _combine(f: GF, coeffs: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """sum_i coeffs[i] * mat[i] over the field (vectorised)."""
    c = coeffs.astype(np.int64)
    m = mat.astype(np.int64)
    prod = f.exp[f.log[c][:, None] + f.log[m]]
    prod[(c == 0)[:, None] | (m == 0)] = 0
    return np.bitwise_xor.reduce(prod, axis=0).astype(f.dtype)


class PacketizedEngine:
    """Quotient-coordinate RLNC engine.  ``k=None`` models an unbounded block."""

    def __init__(self, network: ErasureNetwork, k: int | None = None, w: int = 16, rng=None, compact_slack: int | None = None):
        if k is not None and k < 1:
            raise ValueError("block size k must be at least 1")
        self.network = network
        self.k = k
        self.f = field(w)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.offsets = {}
        owners = []
        total = 0
        for i in network.relays:
            self.offsets[i] = total
            total += network.buffer(i)
            owners += [bit(i)] * network.buffer(i)
        self.total_rows = total
        self.owners = np.array(owners, dtype=np.int64)
        self.L = 0
        self.rows = np.zeros((total, 8), dtype=self.f.dtype)
        self.slack = compact_slack if compact_slack is not None else max(8, total // 2)
        self.dest_rank = 0
        self.epoch = 0
        self.compactions = 0

    # -- coordinates ---------------------------------------------------------

    def _grow(self, mats: list[np.ndarray]) -> list[np.ndarray]:
        if self.L < self.rows.shape[1]:
            return mats
        cap = 2 * self.rows.shape[1]
        out = []
        for m in [self.rows] + mats:
            wider = np.zeros((m.shape[0], cap), dtype=m.dtype)
            wider[:, : m.shape[1]] = m
            out.append(wider)
        self.rows = out[0]
        return out[1:]

    def _fresh_available(self) -> int | None:
        if self.k is None:
            return None
        return self.k - self.dest_rank - self.L

    def relay_rows(self, i: int) -> np.ndarray:
        o = self.offsets[i]
        return self.rows[o : o + self.network.buffer(i), : self.L]

    # -- phase 1 -------------------------------------------------------------

    def _source_packet(self, pending: np.ndarray) -> np.ndarray:
        f = self.f
        packet = np.zeros(pending.shape[1], dtype=f.dtype)
        packet[: self.L] = f.random_vector(self.L, self.rng)
        avail = self._fresh_available()
        if avail is None:
            fresh = True
        elif avail <= 0:
            fresh = False
        else:
            # the component outside the tracked subspace is zero w.p. q^-avail
            fresh = avail * f.w >= 64 or self.rng.random() >= float(f.q) ** (-avail)
        if fresh:
            self.L += 1
            packet[self.L - 1] = 1
        return packet

    def _relay_packet(self, i: int, width: int) -> np.ndarray:
        packet = np.zeros(width, dtype=self.f.dtype)
        if self.L:
            alpha = self.f.random_vector(self.network.buffer(i), self.rng)
            packet[: self.L] = _combine(self.f, alpha, self.relay_rows(i))
        return packet

    # -- phase 2 -------------------------------------------------------------

    def _to_relay(self, j: int, packet: np.ndarray) -> None:
        o = self.offsets[j]
        m = self.network.buffer(j)
        beta = self.f.random_vector(m, self.rng)
        self.rows[o : o + m, : self.L] ^= self.f.outer(beta, packet[: self.L])

    def _to_dest(self, packet: np.ndarray, pending: np.ndarray) -> int:
        e = packet[: self.L]
        nz = np.flatnonzero(e)
        if nz.size == 0:
            return 0
        f = self.f
        p = int(nz[-1])
        inv = f.inv(int(e[p]))
        last = self.L - 1
        for mat in (self.rows, pending):
            col = mat[:, p]
            if col.any():
                mat[:, : self.L] ^= f.outer(f.scale(col, inv), e)
            if p != last:
                mat[:, p] = mat[:, last]
            mat[:, last] = 0
        self.L -= 1
        self.dest_rank += 1
        return 1

    def compact(self) -> None:
        """Drop coordinates outside the span of the relay buffers."""
        if self.L == 0:
            return
        _, pivots = self.f.rref(self.rows[:, : self.L])
        keep = self.rows[:, pivots]
        self.rows[:, :] = 0
        self.rows[:, : len(pivots)] = keep
        self.L = len(pivots)
        self.compactions += 1

    def step_epoch(self, realization) -> int:
        net = self.network
        live = [edge for ok, edge in zip(realization, net.edges) if ok]
        pending = np.zeros((len(live), self.rows.shape[1]), dtype=self.f.dtype)
        for idx, (tail, _) in enumerate(live):
            if tail == net.source:
                if self.L == self.rows.shape[1]:
                    (pending,) = self._grow([pending])
                pending[idx] = self._source_packet(pending)
            else:
                pending[idx] = self._relay_packet(tail, pending.shape[1])
        delivered = 0
        for idx, (_, head) in enumerate(live):
            if head == net.dest:
                delivered += self._to_dest(pending[idx], pending[idx + 1 :])
            else:
                self._to_relay(head, pending[idx])
        self.epoch += 1
        if self.L > self.total_rows + self.slack:
            self.compact()
        return delivered

    # -- measurement ---------------------------------------------------------

    def subset_spans(self) -> np.ndarray:
        """dim(V(X) + D) - dim(D) for every relay subset X, indexed by bitmask."""
        return self.f.subset_ranks(self.rows[:, : max(self.L, 1)], self.owners, self.network.n)

    def measure_all(self) -> np.ndarray:
        spans = self.subset_spans()
        full = len(spans) - 1
        return spans[full] - spans[full ^ np.arange(full + 1)]

    def measure_occupancy(self, subset: int) -> int:
        spans = self.subset_spans()
        full = len(spans) - 1
        return int(spans[full] - spans[full ^ subset])


class DensePacketizedEngine(PacketizedEngine):
    """Literal representation: buffers are m_i x k coefficient matrices."""

    def __init__(self, network: ErasureNetwork, k: int, w: int = 16, rng=None, memory_budget: int = DEFAULT_MEMORY_BUDGET):
        if k < 1:
            raise ValueError("block size k must be at least 1")
        super().__init__(network, k, w, rng)
        itemsize = np.dtype(self.f.dtype).itemsize
        if (self.total_rows + k) * k * itemsize > memory_budget:
            raise MemoryBudgetExceeded(f"k={k} needs more than {memory_budget} bytes")
        self.L = k
        self.rows = np.zeros((self.total_rows, k), dtype=self.f.dtype)
        self.dest_matrix = np.zeros((0, k), dtype=self.f.dtype)
        self.dest_pivots: list[int] = []

    def buffer(self, i: int) -> np.ndarray:
        return self.relay_rows(i)

    def _source_packet(self, pending):
        return self.f.random_vector(self.k, self.rng)

    def _reduce(self, packet: np.ndarray) -> np.ndarray:
        if not self.dest_pivots:
            return packet.copy()
        coeffs = packet[self.dest_pivots]
        if not coeffs.any():
            return packet.copy()
        return packet ^ _combine(self.f, coeffs, self.dest_matrix)

    def _to_dest(self, packet, pending):
        f = self.f
        r = self._reduce(packet)
        nz = np.flatnonzero(r)
        if nz.size == 0:
            return 0
        p = int(nz[0])
        r = f.scale(r, f.inv(int(r[p])))
        col = self.dest_matrix[:, p]
        if col.any():
            self.dest_matrix ^= f.outer(col, r)
        self.dest_matrix = np.vstack([self.dest_matrix, r])
        self.dest_pivots.append(p)
        self.dest_rank += 1
        return 1

    def compact(self) -> None:
        pass

    def _grow(self, mats):
        return mats

    def step_epoch(self, realization) -> int:
        self.L = self.k
        return super().step_epoch(realization)

    def subset_spans(self) -> np.ndarray:
        rows = np.vstack([self.rows, self.dest_matrix])
        owners = np.concatenate([self.owners, np.zeros(len(self.dest_matrix), dtype=np.int64)])
        spans = self.f.subset_ranks(rows, owners, self.network.n)
        return spans - self.dest_rank


def init_state(network: ErasureNetwork, k: int, w: int = 16, rng=None, dense: bool = False) -> PacketizedEngine:
    if dense:
        return DensePacketizedEngine(network, k, w, rng)
    return PacketizedEngine(network, k, w, rng)


def run_throughput(
    network: ErasureNetwork,
    k: int,
    seed: int,
    w: int = 16,
    max_epochs: int | None = None,
    warmup: int | None = None,
    batches: int = 20,
    dense: bool = False,
    chunk: int = 4096,
) -> dict:
    """Send a block of k packets; throughput is k divided by the epochs needed."""
    if min_cut_capacity(network) == 0:
        raise NonTerminating("min-cut capacity is zero; the block can never be delivered")
    channel, coding = seed_streams(seed)
    engine = init_state(network, k, w, coding, dense)
    if max_epochs is None:
        max_epochs = int(100 * k / float(min_cut_capacity(network))) + 10_000
    counts: list[int] = []
    while engine.dest_rank < k:
        if engine.epoch >= max_epochs:
            raise NonTerminating(f"block not delivered after {max_epochs} epochs")
        for real in sample_realizations(network, channel, chunk):
            counts.append(engine.step_epoch(real))
            if engine.dest_rank >= k:
                break
    tau = engine.epoch
    if warmup is None:
        warmup = min(tau // 10, max(1000, 50 * sum(network.buffers)))
    steady, half = batch_means(counts[warmup:], batches) if tau - warmup >= batches else (float("nan"), float("nan"))
    return {
        "throughput": k / tau,
        "epochs_used": tau,
        "ci95": half,
        "steady_throughput": steady,
    }
