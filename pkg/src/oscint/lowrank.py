"""Low-rank factorization primitives.

Everything here works on matrices that are only reachable through a sampler
(full rows, full columns, or arbitrary sub-blocks), so that an ``N x N``
operator is never formed densely.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._validation import ParameterError, check_matrix, check_positive_int, check_random_state

PINV_RCOND = 1e-13
ILL_CONDITIONED = 1e14
# row / column block length that keeps a sampled panel cache resident
BLOCK = 1024


@dataclass(frozen=True)
class LowRankFactor:
    """``M ~= u @ diag(sigma) @ v.conj().T``.

    ``sigma`` is optional; when absent the singular values are considered
    folded into ``u``.
    """

    u: np.ndarray
    v: np.ndarray
    sigma: np.ndarray | None = None
    ill_conditioned: bool = field(default=False, compare=False)

    def __post_init__(self):
        u = np.asarray(self.u)
        v = np.asarray(self.v)
        if u.ndim != 2 or v.ndim != 2:
            raise ValueError("u and v must be 2-D")
        if u.shape[1] != v.shape[1]:
            raise ValueError(f"rank mismatch: u has {u.shape[1]} columns, v has {v.shape[1]}")
        if u.shape[1] < 1:
            raise ValueError("rank must be positive")
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != (u.shape[1],):
                raise ValueError("sigma must have one entry per column")
            if np.any(s < 0) or np.any(np.diff(s) > 1e-12 * max(s[0], 1.0)):
                raise ValueError("sigma must be nonnegative and nonincreasing")
            object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def rank(self):
        return self.u.shape[1]

    @property
    def shape(self):
        return (self.u.shape[0], self.v.shape[0])

    def left(self):
        """``u`` with the singular values absorbed."""
        return self.u if self.sigma is None else self.u * self.sigma

    def reconstruct(self, rows=None, cols=None):
        """Dense block ``M[rows][:, cols]`` of the represented matrix."""
        a = self.left()
        b = self.v
        if rows is not None:
            a = a[np.asarray(rows)]
        if cols is not None:
            b = b[np.asarray(cols)]
        return a @ b.conj().T

    def truncate(self, rtol):
        """Drop trailing terms whose singular value is below ``rtol * sigma[0]``."""
        if self.sigma is None:
            raise ValueError("truncate needs singular values")
        keep = max(1, int(np.sum(self.sigma > rtol * self.sigma[0])))
        return LowRankFactor(self.u[:, :keep], self.v[:, :keep], self.sigma[:keep])


class MatrixSampler:
    """Deterministic access to arbitrary sub-blocks of an ``nrows x ncols`` matrix.

    ``func(I, J)`` must return the dense block for integer index arrays.
    """

    def __init__(self, nrows, ncols, func):
        self.nrows = check_positive_int(nrows, "nrows")
        self.ncols = check_positive_int(ncols, "ncols")
        self._func = func

    @classmethod
    def from_dense(cls, m):
        m = np.asarray(m)
        return cls(m.shape[0], m.shape[1], lambda i, j: m[np.ix_(i, j)])

    def sample(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        # long panels are evaluated in blocks so temporaries stay in cache
        if rows.size > 2 * BLOCK:
            return np.vstack([np.asarray(self._func(rows[s:s + BLOCK], cols)) for s in range(0, rows.size, BLOCK)])
        if cols.size > 2 * BLOCK:
            return np.hstack([np.asarray(self._func(rows, cols[s:s + BLOCK])) for s in range(0, cols.size, BLOCK)])
        return np.asarray(self._func(rows, cols))

    def rows(self, idx):
        return self.sample(idx, np.arange(self.ncols))

    def cols(self, idx):
        return self.sample(np.arange(self.nrows), idx)


def tsqr(m, mode="reduced"):
    """QR of a tall matrix by blocks of ``BLOCK`` rows (``mode="r"``: only ``r``)."""
    if m.shape[0] <= 2 * BLOCK:
        return np.linalg.qr(m, mode=mode)
    blocks = [np.linalg.qr(m[s:s + BLOCK], mode=mode) for s in range(0, m.shape[0], BLOCK)]
    if mode == "r":
        return np.linalg.qr(np.vstack(blocks), mode="r")
    q2, r = np.linalg.qr(np.vstack([b[1] for b in blocks]))
    q = np.empty((m.shape[0], q2.shape[1]), dtype=np.result_type(m, q2))
    row = col = 0
    for qb, rb in blocks:
        q[row:row + qb.shape[0]] = qb @ q2[col:col + rb.shape[0]]
        row += qb.shape[0]
        col += rb.shape[0]
    return q, r


def pivoted_qr(m, mode="economic"):
    """Column-pivoted QR, ``m[:, perm] = q @ r``.

    ``|r[0,0]| >= |r[1,1]| >= ...``; ``q`` has ``min(m, n)`` orthonormal columns.
    Tall inputs are first reduced by a blocked unpivoted QR, since pivoting
    only depends on ``m^H m``.  ``mode="r"`` skips ``q`` and returns ``(r, perm)``.
    """
    m = check_matrix(m, "M")
    if m.shape[0] > 2 * m.shape[1]:
        if mode == "r":
            return scipy.linalg.qr(tsqr(m, mode="r"), mode="r", pivoting=True)
        q0, r0 = tsqr(m)
        q1, r, perm = scipy.linalg.qr(r0, pivoting=True)
        return q0 @ q1, r, perm
    if mode == "r":
        return scipy.linalg.qr(m, mode="r", pivoting=True)
    return scipy.linalg.qr(m, mode="economic", pivoting=True)


def _pivots(m, k):
    """Sorted indices of ``k`` leading pivot columns of ``m``.

    Wide matrices use tournament pivoting: the ``k`` leading pivots of each
    block of ``BLOCK`` columns compete in a final pivoted QR.
    """
    n = m.shape[1]
    if n > 2 * BLOCK and m.shape[0] < BLOCK:
        cand = []
        for s in range(0, n, BLOCK):
            _, perm = pivoted_qr(m[:, s:s + BLOCK], mode="r")
            cand.append(s + perm[:k])
        cand = np.sort(np.concatenate(cand))
        _, perm = pivoted_qr(m[:, cand], mode="r")
        return np.sort(cand[perm[:k]])
    _, perm = pivoted_qr(m, mode="r")
    return np.sort(perm[:k])


def _orth(m, k):
    # orthonormal basis of the leading pivots, cut at numerical rank so that
    # arbitrary complement directions never enter the middle matrix
    q, r, _ = pivoted_qr(m)
    d = np.abs(np.diag(r))
    keep = int(np.sum(d > PINV_RCOND * d[0])) if d.size and d[0] > 0 else 1
    return q[:, :max(1, min(k, keep))]


def _middle(qc_rows, k_ij, qr_cols):
    """``pinv(qc_rows) @ k_ij @ pinv(qr_cols^*)`` and an ill-conditioning flag."""
    flag = False
    for q in (qc_rows, qr_cols):
        s = np.linalg.svd(q, compute_uv=False)
        if s[-1] == 0 or s[0] / s[-1] > ILL_CONDITIONED:
            flag = True
    left = np.linalg.pinv(qc_rows, rcond=PINV_RCOND)
    right = np.linalg.pinv(qr_cols.conj().T, rcond=PINV_RCOND)
    return left @ k_ij @ right, flag


def _assemble(q_col, q_row, m, flag, r):
    um, s, vmh = np.linalg.svd(m, full_matrices=False)
    u = q_col @ um
    v = q_row @ vmh.conj().T
    k = s.size
    if k < r:
        # numerically rank deficient: pad with zero singular triplets
        u = np.hstack([u, np.zeros((u.shape[0], r - k), dtype=u.dtype)])
        v = np.hstack([v, np.zeros((v.shape[0], r - k), dtype=v.dtype)])
        s = np.concatenate([s, np.zeros(r - k)])
    return LowRankFactor(u, v, s, ill_conditioned=flag)


def randomized_svd(sampler, r=20, q=5, iters=2, seed=0):
    """Rank-``r`` approximate SVD from ``O(r q)`` sampled rows and columns.

    Alternates pivoted QR on sampled rows (to pick important columns) and
    pivoted LQ on sampled columns (to pick important rows) ``iters`` times,
    then forms the middle matrix on a fresh set of extra samples.
    """
    r = check_positive_int(r, "r")
    q = check_positive_int(q, "q")
    iters = check_positive_int(iters, "iters")
    m, n = sampler.nrows, sampler.ncols
    rq = r * q
    if rq > min(m, n):
        raise ParameterError(f"r*q = {rq} exceeds matrix dimension {min(m, n)}")
    rng = check_random_state(seed)

    pi_row = np.empty(0, dtype=np.int64)
    pi_col = np.empty(0, dtype=np.int64)
    for _ in range(iters):
        rows = np.union1d(rng.choice(m, rq, replace=False), pi_row)
        pi_col = _pivots(sampler.rows(rows), r)
        cols = np.union1d(rng.choice(n, rq, replace=False), pi_col)
        k_cols = sampler.cols(cols)
        pi_row = _pivots(k_cols.conj().T, r)

    k_pc = k_cols[:, np.searchsorted(cols, pi_col)]
    q_col = _orth(k_pc, r)
    q_row = _orth(sampler.rows(pi_row).conj().T, r)

    rows = np.union1d(pi_row, rng.choice(m, rq, replace=False))
    cols = np.union1d(pi_col, rng.choice(n, rq, replace=False))
    mid, flag = _middle(q_col[rows], sampler.sample(rows, cols), q_row[cols])
    return _assemble(q_col, q_row, mid, flag, r)


def restricted_svd_from_samples(rows, cols, row_idx, col_idx, r):
    """Rank-``r`` factor from fixed samples ``rows = M[row_idx, :]`` and ``cols = M[:, col_idx]``.

    No fresh sampling is possible, so the important rows and columns are
    selected inside the supplied index sets.
    """
    rows = check_matrix(rows, "rows")
    cols = check_matrix(cols, "cols")
    row_idx = np.asarray(row_idx, dtype=np.int64)
    col_idx = np.asarray(col_idx, dtype=np.int64)
    r = check_positive_int(r, "r")
    if rows.shape[0] != row_idx.size or cols.shape[1] != col_idx.size:
        raise ValueError("sample shapes do not match index sets")
    if rows.shape[0] < r or cols.shape[1] < r:
        raise ParameterError(f"need at least r={r} sampled rows and columns")

    k_ij = rows[:, col_idx]
    pc = _pivots(k_ij, r)
    pr = _pivots(k_ij.conj().T, r)
    q_col = _orth(cols[:, pc], r)
    q_row = _orth(rows[pr].conj().T, r)
    mid, flag = _middle(q_col[row_idx], k_ij, q_row[col_idx])
    return _assemble(q_col, q_row, mid, flag, r)


def truncated_svd_of_factored(f, r, seed=0, extra=8):
    """Leading rank-``r`` SVD of the rank-``k`` matrix held in ``f``.

    Randomized range finder with ``k + extra`` test columns; every step
    touches only ``N x k`` arrays.  Returns ``(P, Q)`` with the singular
    values absorbed into ``P``.
    """
    r = check_positive_int(r, "r")
    if r >= f.rank:
        raise ParameterError(f"target rank {r} must be below factor rank {f.rank}")
    rng = check_random_state(seed)
    a, b = f.left(), f.v
    real = np.isrealobj(a) and np.isrealobj(b)
    omega = rng.standard_normal((b.shape[0], f.rank + extra))
    y = a @ (b.conj().T @ omega)
    qy, _ = tsqr(y)
    w = qy.conj().T @ a
    qb, rb = tsqr(b)
    ub, s, zh = np.linalg.svd(w @ rb.conj().T)
    p = (qy @ ub[:, :r]) * s[:r]
    q = qb @ zh[:r].conj().T
    if real:
        p, q = p.real, q.real
    return p, q
