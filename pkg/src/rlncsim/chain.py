"""Exact Markov-chain analysis of the occupancy model for small networks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .netmodel import ErasureNetwork
from .occupancy import OccupancyEngine

MAX_EDGES = 12


class StateBudgetExceeded(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    pass


@dataclass
class TransitionChain:
    network: ErasureNetwork
    states: list[np.ndarray]
    matrix: sp.csr_matrix
    realization_probs: np.ndarray
    delivery: dict[tuple[int, int], int]
    expected_delivery: np.ndarray

    @property
    def size(self) -> int:
        return len(self.states)

    def recurrent_states(self) -> np.ndarray:
        """Indices of states in closed strongly connected components."""
        n_comp, labels = connected_components(self.matrix, directed=True, connection="strong")
        coo = self.matrix.tocoo()
        leaves = np.zeros(n_comp, dtype=bool)
        leaves[labels[coo.row[labels[coo.row] != labels[coo.col]]]] = True
        closed = ~leaves
        return np.flatnonzero(closed[labels])

    def closed_classes(self) -> list[np.ndarray]:
        n_comp, labels = connected_components(self.matrix, directed=True, connection="strong")
        rec = self.recurrent_states()
        return [rec[labels[rec] == c] for c in np.unique(labels[rec])]


def realization_probabilities(network: ErasureNetwork) -> np.ndarray:
    """Pr(l) for every realization code l (bit k = success on edge k)."""
    p = network.success_prob
    probs = np.ones(1, dtype=float)
    for pk in p:
        # codes with bit k clear come first within each doubling
        probs = np.concatenate([probs * (1.0 - pk), probs * pk])
    return probs


def build_chain(network: ErasureNetwork, max_states: int = 100_000) -> TransitionChain:
    """Enumerate states reachable from the empty network under all realizations."""
    n_edges = len(network.edges)
    if n_edges > MAX_EDGES:
        raise StateBudgetExceeded(f"{n_edges} edges exceeds the {MAX_EDGES}-edge enumeration limit")
    probs = realization_probabilities(network)
    codes = np.flatnonzero(probs > 0).tolist()
    engine = OccupancyEngine(network, cache_limit=0)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    delivery: dict[tuple[int, int], int] = {}
    expected: list[float] = []
    sid = 0
    while sid < len(engine.states):
        gain = 0.0
        for code in codes:
            nxt, got = engine.successor(sid, code)
            if len(engine.states) > max_states:
                raise StateBudgetExceeded(f"more than {max_states} reachable states")
            rows.append(sid)
            cols.append(nxt)
            vals.append(probs[code])
            if got:
                delivery[(sid, code)] = got
                gain += probs[code] * got
        expected.append(gain)
        sid += 1
    size = len(engine.states)
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    matrix.sum_duplicates()
    return TransitionChain(
        network=network,
        states=engine.states,
        matrix=matrix,
        realization_probs=probs,
        delivery=delivery,
        expected_delivery=np.array(expected),
    )


def steady_state(
    chain: TransitionChain,
    tol: float = 1e-12,
    max_iter: int = 200_000,
    warm_start: bool = True,
) -> np.ndarray:
    """Stationary distribution over all states (zero outside the recurrent class).

    Power iteration on the lazy chain (I + T) / 2, which shares T's stationary
    vector and is aperiodic even when T is not.  The iterate is seeded with a
    direct sparse solve when ``warm_start`` is set; convergence is always
    judged by the L1 residual ||pi T - pi||_1 < tol.
    """
    classes = chain.closed_classes()
    if len(classes) != 1:
        raise NonConvergence(f"chain has {len(classes)} closed classes; stationary law not unique")
    rec = classes[0]
    t = chain.matrix[rec][:, rec].tocsr()
    k = len(rec)
    pi = np.full(k, 1.0 / k)
    if warm_start and k > 1:
        a = (t.T - sp.identity(k, format="csr")).tolil()
        a[0, :] = 1.0
        rhs = np.zeros(k)
        rhs[0] = 1.0
        guess = spsolve(a.tocsr(), rhs)
        if np.all(np.isfinite(guess)):
            guess = np.clip(guess, 0.0, None)
            if guess.sum() > 0:
                pi = guess / guess.sum()
    tt = t.T.tocsr()
    for _ in range(max_iter):
        nxt = tt @ pi
        residual = np.abs(nxt - pi).sum()
        if residual < tol:
            break
        pi = 0.5 * (pi + nxt)
        pi /= pi.sum()
    else:
        raise NonConvergence(f"power iteration residual {residual:.3e} after {max_iter} steps")
    full = np.zeros(chain.size)
    full[rec] = pi
    return full


def exact_throughput(chain: TransitionChain, pi: np.ndarray) -> float:
    """Expected innovative deliveries per epoch in steady state."""
    return float(pi @ chain.expected_delivery)


def census_counts(chain: TransitionChain) -> dict:
    return {"reachable": chain.size, "recurrent": int(len(chain.recurrent_states()))}
