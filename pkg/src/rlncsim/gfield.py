"""Arithmetic and linear algebra over GF(2^w), w in {8, 16}.

Scalar multiplication follows the usual split: log/antilog tables for w=8,
carry-less multiply plus polynomial reduction for w=16.  Array kernels use
log tables for both widths since numpy gathers are the only fast path.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit

POLYNOMIALS = {8: 0x11D, 16: 0x1100B}


def _check_width(w: int) -> None:
    if w not in POLYNOMIALS:
        raise ValueError(f"unsupported field width w={w}; expected 8 or 16")


def clmul_reduce(a: int, b: int, w: int) -> int:
    """Carry-less product of a and b reduced modulo the width-w polynomial."""
    poly = POLYNOMIALS[w]
    prod = 0
    while b:
        if b & 1:
            prod ^= a
        a <<= 1
        b >>= 1
    for bit in range(2 * w - 2, w - 1, -1):
        if prod >> bit & 1:
            prod ^= poly << (bit - w)
    return prod


class GF:
    """Table-backed GF(2^w).  Instances are immutable and cached per width."""

    def __init__(self, w: int = 16):
        _check_width(w)
        self.w = w
        self.q = 1 << w
        self.poly = POLYNOMIALS[w]
        order = self.q - 1
        exp = np.zeros(2 * order + 1, dtype=np.int64)
        log = np.zeros(self.q, dtype=np.int64)
        x = 1
        for i in range(order):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & self.q:
                x ^= self.poly
        if x != 1:
            raise ValueError(f"polynomial {self.poly:#x} is not primitive")
        exp[order : 2 * order] = exp[:order]
        self.order = order
        self.exp = exp
        self.log = log
        self.dtype = np.uint8 if w == 8 else np.uint16

    def mul(self, a: int, b: int) -> int:
        if self.w == 16:
            return clmul_reduce(a, b, 16)
        if a == 0 or b == 0:
            return 0
        return int(self.exp[self.log[a] + self.log[b]])

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("0 has no inverse in GF(2^w)")
        return int(self.exp[(self.order - self.log[a]) % self.order])

    def scale(self, vec: np.ndarray, c: int) -> np.ndarray:
        """Multiply every entry of ``vec`` by the scalar ``c``."""
        if c == 0:
            return np.zeros_like(vec)
        v = vec.astype(np.int64, copy=False)
        out = self.exp[self.log[v] + self.log[c]]
        out[v == 0] = 0
        return out.astype(vec.dtype)

    def outer(self, col: np.ndarray, row: np.ndarray) -> np.ndarray:
        """Outer product col[:, None] * row[None, :] in the field."""
        c = col.astype(np.int64, copy=False)
        r = row.astype(np.int64, copy=False)
        out = self.exp[self.log[c][:, None] + self.log[r][None, :]]
        out[(c == 0)[:, None] | (r == 0)[None, :]] = 0
        return out.astype(self.dtype)

    def matvec_left(self, coeffs: np.ndarray, mat: np.ndarray) -> np.ndarray:
        """Linear combination sum_i coeffs[i] * mat[i, :]."""
        acc = np.zeros(mat.shape[1], dtype=self.dtype)
        for c, row in zip(coeffs.tolist(), mat):
            if c:
                acc ^= self.scale(row, c)
        return acc

    def random_vector(self, length: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.q, size=length, dtype=self.dtype)

    def rref(self, mat: np.ndarray) -> tuple[np.ndarray, list[int]]:
        """Reduced row echelon form of a copy of ``mat`` and its pivot columns."""
        m = np.array(mat, dtype=self.dtype, copy=True)
        if m.ndim != 2:
            raise ValueError("expected a 2-D coefficient matrix")
        rows, cols = m.shape
        pivots: list[int] = []
        r = 0
        for c in range(cols):
            if r == rows:
                break
            nz = np.flatnonzero(m[r:, c])
            if nz.size == 0:
                continue
            p = r + int(nz[0])
            if p != r:
                m[[r, p]] = m[[p, r]]
            m[r] = self.scale(m[r], self.inv(int(m[r, c])))
            col = m[:, c].copy()
            col[r] = 0
            if col.any():
                m ^= self.outer(col, m[r])
            pivots.append(c)
            r += 1
        return m, pivots

    def rank(self, mat: np.ndarray) -> int:
        m = np.asarray(mat)
        if m.size == 0:
            return 0
        return int(_rank_kernel(m.astype(np.int64), self.exp, self.log, self.order))

    def subset_ranks(self, rows: np.ndarray, owners: np.ndarray, n: int) -> np.ndarray:
        """Rank of the rows owned by each subset X of n owners.

        ``owners[r]`` is the owner bitmask of row r; rows with owner 0 are
        included for every X.  Returns an array indexed by the bitmask X.
        """
        return _subset_ranks_kernel(
            np.ascontiguousarray(rows, dtype=np.int64),
            np.ascontiguousarray(owners, dtype=np.int64),
            n,
            self.exp,
            self.log,
            self.order,
        )


@lru_cache(maxsize=None)
def field(w: int = 16) -> GF:
    return GF(w)


def gf_mul(a: int, b: int, w: int = 16) -> int:
    f = field(w)
    if not (0 <= a < f.q and 0 <= b < f.q):
        raise ValueError("operands out of range")
    return f.mul(a, b)


def rank(mat, w: int = 16) -> int:
    """Row rank over GF(2^w).  The input is not modified."""
    m = np.asarray(mat)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    return field(w).rank(m)


def intersection_dim(a, b, w: int = 16) -> int:
    """dim(rowspan(a) ∩ rowspan(b)) via rank(a) + rank(b) - rank([a; b])."""
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    if a.shape[1] != b.shape[1]:
        raise ValueError("row length mismatch")
    f = field(w)
    return f.rank(a) + f.rank(b) - f.rank(np.vstack([a, b]))


def random_vector(length: int, rng: np.random.Generator, w: int = 16) -> np.ndarray:
    return field(w).random_vector(length, rng)


@njit(cache=True)
def _eliminate(a, nrows, ncols, exp, log, order):
    r = 0
    for c in range(ncols):
        if r == nrows:
            break
        p = -1
        for i in range(r, nrows):
            if a[i, c] != 0:
                p = i
                break
        if p < 0:
            continue
        if p != r:
            for cc in range(c, ncols):
                tmp = a[r, cc]
                a[r, cc] = a[p, cc]
                a[p, cc] = tmp
        inv_log = order - log[a[r, c]]
        for i in range(r + 1, nrows):
            f = a[i, c]
            if f == 0:
                continue
            lf = log[f] + inv_log
            for cc in range(c, ncols):
                v = a[r, cc]
                if v != 0:
                    a[i, cc] ^= exp[(lf + log[v]) % order]
        r += 1
    return r


@njit(cache=True)
def _rank_kernel(m, exp, log, order):
    a = m.copy()
    return _eliminate(a, a.shape[0], a.shape[1], exp, log, order)


@njit(cache=True)
def _subset_ranks_kernel(rows, owners, n, exp, log, order):
    total = rows.shape[0]
    ncols = rows.shape[1]
    out = np.zeros(1 << n, dtype=np.int64)
    a = np.empty((total, ncols), dtype=np.int64)
    for x in range(1 << n):
        k = 0
        for r in range(total):
            if owners[r] == 0 or (owners[r] & x) != 0:
                for c in range(ncols):
                    a[k, c] = rows[r, c]
                k += 1
        out[x] = _eliminate(a, k, ncols, exp, log, order)
    return out
