"""Kernel access and recovery of low-rank amplitude and phase factors.

The kernel ``K = A * exp(2 pi i Phi)`` is only observed, so ``Phi`` is known
modulo 1.  Rows and columns of the phase are unwrapped by extrapolating third
differences (a greedy TV^3 minimization), stitched so that every sampled row
and column agrees at their intersections, and compressed into a low-rank
factor.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import ParameterError, check_positive_int, check_random_state
from .lowrank import (
    LowRankFactor,
    MatrixSampler,
    randomized_svd,
    restricted_svd_from_samples,
)

DEFAULT_TAU = np.pi / 2
BLOCK_TAU = 2 * np.pi
CONSISTENCY_TOL = 1e-8
MIN_AMPLITUDE = 1e-14


class PhaseConsistencyError(ValueError):
    """Recovered rows and columns disagree, or an anchor contradicts the data."""


class DegenerateAmplitudeError(ValueError):
    """The amplitude vanishes at a sampled entry, so the phase is undefined."""


# ---------------------------------------------------------------------------
# kernel access (three scenarios)


class KernelAccess:
    """Base class; subclasses expose full rows and columns of ``K``."""

    scenario = None

    def __init__(self, n):
        self.n = check_positive_int(n, "n")

    def rows(self, idx):
        raise NotImplementedError

    def cols(self, idx):
        raise NotImplementedError

    def sample(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size <= cols.size:
            return self.rows(rows)[:, cols]
        return self.cols(cols)[rows]

    def sampler(self, transform=None):
        """``MatrixSampler`` over ``K`` (or ``transform(K)`` blockwise)."""
        if transform is None:
            return MatrixSampler(self.n, self.n, self.sample)
        return MatrixSampler(self.n, self.n, lambda i, j: transform(self.sample(i, j)))


class EntryOracle(KernelAccess):
    """Scenario 1: arbitrary entries ``func(I, J)``."""

    scenario = "entry"

    def __init__(self, n, func):
        super().__init__(n)
        self._func = func

    def sample(self, rows, cols):
        return np.asarray(self._func(np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)))

    def rows(self, idx):
        return self.sample(idx, np.arange(self.n))

    def cols(self, idx):
        return self.sample(np.arange(self.n), idx)


class MatvecOracle(KernelAccess):
    """Scenario 2: only ``K @ f`` and ``K.T @ f`` are available.

    Rows and columns are extracted by applying the operator to natural
    basis vectors.
    """

    scenario = "matvec"

    def __init__(self, n, apply, apply_transpose):
        super().__init__(n)
        self.apply = apply
        self.apply_transpose = apply_transpose

    def _basis(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        e = np.zeros((self.n, idx.size))
        e[idx, np.arange(idx.size)] = 1.0
        return e

    def rows(self, idx):
        return np.asarray(self.apply_transpose(self._basis(idx))).T

    def cols(self, idx):
        return np.asarray(self.apply(self._basis(idx)))


class SampleOracle(KernelAccess):
    """Scenario 3: fixed amplitude/phase rows and columns supplied externally.

    ``phase_rows``/``phase_cols`` may be given modulo 1.
    """

    scenario = "samples"

    def __init__(self, n, row_idx, col_idx, amp_rows, amp_cols, phase_rows, phase_cols):
        super().__init__(n)
        self.row_idx = np.asarray(row_idx, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=np.int64)
        for name, idx in (("row_idx", self.row_idx), ("col_idx", self.col_idx)):
            if idx.size == 0 or np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= n:
                raise ParameterError(f"{name} must be sorted, distinct and within [0, {n})")
        self.amp_rows = np.asarray(amp_rows, dtype=float)
        self.amp_cols = np.asarray(amp_cols, dtype=float)
        self.phase_rows = np.asarray(phase_rows, dtype=float)
        self.phase_cols = np.asarray(phase_cols, dtype=float)
        if self.amp_rows.shape != (self.row_idx.size, n) or self.phase_rows.shape != self.amp_rows.shape:
            raise ValueError("row samples must have shape (len(row_idx), n)")
        if self.amp_cols.shape != (n, self.col_idx.size) or self.phase_cols.shape != self.amp_cols.shape:
            raise ValueError("column samples must have shape (n, len(col_idx))")

    def _pos(self, have, idx, what):
        idx = np.asarray(idx, dtype=np.int64)
        pos = np.searchsorted(have, idx)
        pos = np.minimum(pos, have.size - 1)
        if np.any(have[pos] != idx):
            missing = idx[have[pos] != idx]
            raise ParameterError(f"{what} {missing.tolist()} not among the supplied samples")
        return pos

    def rows(self, idx):
        p = self._pos(self.row_idx, idx, "rows")
        return self.amp_rows[p] * np.exp(2j * np.pi * self.phase_rows[p])

    def cols(self, idx):
        p = self._pos(self.col_idx, idx, "columns")
        return self.amp_cols[:, p] * np.exp(2j * np.pi * self.phase_cols[:, p])

    def sample(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        if np.all(np.isin(rows, self.row_idx)):
            return self.rows(rows)[:, np.asarray(cols, dtype=np.int64)]
        return self.cols(cols)[rows]


# ---------------------------------------------------------------------------
# vector recovery


def tv_norm(v, order):
    """Sum of absolute ``order``-th differences of ``v``."""
    v = np.asarray(v, dtype=float)
    if order not in (1, 2, 3):
        raise ParameterError(f"order must be 1, 2 or 3, got {order}")
    if v.ndim != 1 or v.size < order + 1:
        raise ParameterError(f"need a vector of length >= {order + 1}")
    return float(np.abs(np.diff(v, order)).sum())


def _round_half_down(d):
    # nearest integer; exact halves go toward zero
    return np.sign(d) * np.ceil(np.abs(d) - 0.5)


def unwrap_next(target, u):
    """Value congruent to ``u`` (mod 1) closest to ``target``."""
    return u + _round_half_down(np.asarray(target) - u)


def frac(v):
    out = np.mod(v, 1.0)
    return np.where(out >= 1.0, 0.0, out)


def _check_anchor(value, obs, where):
    d = np.asarray(value) - obs
    bad = np.abs(d - np.rint(d)) > CONSISTENCY_TOL
    if np.any(bad):
        raise PhaseConsistencyError(f"anchor inconsistent with observation at {where}")


@dataclass(frozen=True)
class RecoveredVector:
    values: np.ndarray
    breaks: np.ndarray


def recover_vector(u, tau=DEFAULT_TAU, known_breaks=None, anchors=None):
    """Unwrap ``u = v mod 1`` piece by piece, detecting discontinuities.

    Within a piece each new entry is chosen so that its third difference is
    as small as possible; a second difference larger than ``tau`` opens a
    new piece at that index.  ``anchors`` maps indices to prescribed values.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    if u.ndim != 1 or n < 4:
        raise ParameterError("u must be a vector of length >= 4")
    if not tau > 0:
        raise ParameterError("tau must be positive")
    anchors = {} if anchors is None else {int(k): float(val) for k, val in anchors.items()}
    for k, val in anchors.items():
        if not 0 <= k < n:
            raise ParameterError(f"anchor index {k} out of range")
        _check_anchor(val, u[k], k)
    breaks = sorted({0} | {int(b) for b in (known_breaks or ()) if 0 < int(b) < n})

    v = np.empty(n)

    def put(a, target):
        v[a] = anchors[a] if a in anchors else unwrap_next(target, u[a])

    c = 0
    while c < len(breaks):
        st = breaks[c]
        ed = breaks[c + 1] if c + 1 < len(breaks) else n
        if ed - st < 4:
            # too short for higher differences
            for a in range(st, ed):
                put(a, u[a] if a == 0 else v[a - 1])
            c += 1
            continue
        if c == 0:
            put(st, u[st])
            put(st + 1, v[st])
            put(st + 2, 2 * v[st + 1] - v[st])
            bg = st + 3
        else:
            put(st, v[st - 1])
            put(st + 1, 2 * v[st] - v[st - 1])
            bg = st + 2
        for a in range(bg, ed):
            put(a, 3 * v[a - 1] - 3 * v[a - 2] + v[a - 3])
            if abs(v[a] + v[a - 2] - 2 * v[a - 1]) > tau:
                breaks.insert(c + 1, a)
                break
        c += 1
    return RecoveredVector(v, np.asarray(breaks, dtype=np.int64))


def _trace_batch(u, anchor_pos=(), anchor_vals=None):
    """Unwrap every row of ``u`` as one piece, without break detection.

    ``anchor_pos`` are shared positions; ``anchor_vals[k, m]`` is the value
    prescribed for vector ``k`` at ``anchor_pos[m]``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    k, n = u.shape
    anchor_pos = np.asarray(anchor_pos, dtype=np.int64)
    lookup = {int(p): m for m, p in enumerate(anchor_pos)}
    if anchor_pos.size:
        anchor_vals = np.asarray(anchor_vals, dtype=float).reshape(k, anchor_pos.size)
        _check_anchor(anchor_vals, u[:, anchor_pos], "batch anchors")
    v = np.empty_like(u)
    for a in range(n):
        if a in lookup:
            v[:, a] = anchor_vals[:, lookup[a]]
            continue
        if a == 0:
            target = u[:, 0]
        elif a == 1 or n < 4:
            target = v[:, a - 1]
        elif a == 2:
            target = 2 * v[:, 1] - v[:, 0]
        else:
            target = 3 * v[:, a - 1] - 3 * v[:, a - 2] + v[:, a - 3]
        v[:, a] = unwrap_next(target, u[:, a])
    return v


# ---------------------------------------------------------------------------
# matrix recovery


@dataclass(frozen=True)
class RecoveredPhase:
    row_samples: np.ndarray
    col_samples: np.ndarray
    row_idx: np.ndarray
    col_idx: np.ndarray
    row_breaks: np.ndarray
    col_breaks: np.ndarray


def _merge(idx, obs, extra, fetch, axis):
    # insert freshly fetched rows/columns into sorted sample arrays
    extra = np.setdiff1d(extra, idx)
    if extra.size == 0:
        return idx, obs
    if fetch is None:
        kind = "rows" if axis == 0 else "columns"
        raise ParameterError(f"{kind} {extra.tolist()} are required but cannot be fetched")
    new = np.asarray(fetch(extra), dtype=float)
    idx = np.concatenate([idx, extra])
    obs = np.concatenate([obs, new], axis=axis)
    order = np.argsort(idx, kind="stable")
    return idx[order], np.take(obs, order, axis=axis)


def _chain(cols, arg_cols, rows, qs, rsl, anchor_rows, anchor_pos, col_idx):
    """Recover columns ``qs[1:]`` from column ``qs[0]`` (already recovered).

    Each column is unwrapped as its difference to the previous sampled
    column.  That difference varies by ``O(gap / N)`` per row, so it never
    sits near the half-cycle ambiguity a raw column can hit, and the row
    anchors pin it at every sampled row.
    """
    if len(qs) < 2:
        return
    qs = list(qs)
    js = col_idx[qs]
    d_obs = frac(arg_cols[rsl][:, qs[1:]] - arg_cols[rsl][:, qs[:-1]]).T
    d_anchor = (rows[np.ix_(anchor_rows, js[1:])] - rows[np.ix_(anchor_rows, js[:-1])]).T
    d = _trace_batch(d_obs, anchor_pos, d_anchor)
    cols[rsl, qs[1:]] = cols[rsl, qs[0]][:, None] + np.cumsum(d.T, axis=1)


def recover_phase_samples(arg_rows, arg_cols, row_idx, col_idx, tau=DEFAULT_TAU,
                          fetch_rows=None, fetch_cols=None):
    """Unwrap sampled rows and columns of a phase matrix consistently.

    ``arg_rows`` (``len(row_idx) x N``) and ``arg_cols`` (``N x len(col_idx)``)
    hold the phase modulo 1.  Break detection runs on the first sampled
    column and row; the detected breaks partition the matrix into blocks,
    each of which is unwrapped in a fixed order so that rows and columns
    share values at every intersection.  ``fetch_rows``/``fetch_cols`` supply
    observations for indices the partition requires but the samples lack.
    """
    arg_rows = np.atleast_2d(np.asarray(arg_rows, dtype=float))
    arg_cols = np.asarray(arg_cols, dtype=float)
    row_idx = np.asarray(row_idx, dtype=np.int64)
    col_idx = np.asarray(col_idx, dtype=np.int64)
    n = arg_rows.shape[1]
    if arg_cols.shape[0] != n or arg_rows.shape[0] != row_idx.size or arg_cols.shape[1] != col_idx.size:
        raise ValueError("sample shapes do not match index sets")
    for name, idx in (("row_idx", row_idx), ("col_idx", col_idx)):
        if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= n:
            raise ParameterError(f"{name} must be sorted, distinct, in range")

    s_r = recover_vector(arg_cols[:, 0], tau).breaks
    row_idx, arg_rows = _merge(row_idx, arg_rows, s_r, fetch_rows, 0)
    s_c = recover_vector(arg_rows[0], tau).breaks
    need = np.unique(np.concatenate([s_c, s_c + 1, s_c + 2]))
    col_idx, arg_cols = _merge(col_idx, arg_cols, need[need < n], fetch_cols, 1)

    rows = np.empty_like(arg_rows)
    cols = np.empty_like(arg_cols)
    rpos = {int(i): p for p, i in enumerate(row_idx)}
    cpos = {int(j): q for q, j in enumerate(col_idx)}
    r_edges = list(s_r) + [n]
    c_edges = list(s_c) + [n]
    for rb, re in zip(r_edges[:-1], r_edges[1:]):
        in_r = row_idx[(row_idx >= rb) & (row_idx < re)]
        p0 = rpos[int(rb)]
        for cb, ce in zip(c_edges[:-1], c_edges[1:]):
            qc = [cpos[int(j)] for j in col_idx[(col_idx >= cb) & (col_idx < ce)]]
            nl = min(3, ce - cb)
            # first row of the block, free start
            rows[p0, cb:ce] = _trace_batch(arg_rows[p0, cb:ce])[0]
            # first column anchored at the corner
            cols[rb:re, qc[0]] = _trace_batch(arg_cols[rb:re, qc[0]], [0], [[rows[p0, cb]]])[0]
            # second and third columns anchored at the first row
            _chain(cols, arg_cols, rows, qc[:nl], slice(rb, re), [p0], [0], col_idx)
            # remaining rows anchored at the first three columns
            others = [rpos[int(i)] for i in in_r if i != rb]
            if others:
                anchors = cols[row_idx[others]][:, qc[:nl]]
                rows[others, cb:ce] = _trace_batch(arg_rows[others, cb:ce], np.arange(nl), anchors)
            # remaining columns anchored at every sampled row of the block
            if len(qc) > nl:
                _chain(cols, arg_cols, rows, qc[nl - 1:], slice(rb, re),
                       [rpos[int(i)] for i in in_r], in_r - rb, col_idx)

    gap = np.abs(rows[:, col_idx] - cols[row_idx, :])
    if gap.size and gap.max() > CONSISTENCY_TOL:
        p, q = np.unravel_index(np.argmax(gap), gap.shape)
        raise PhaseConsistencyError(
            f"rows and columns disagree at ({row_idx[p]}, {col_idx[q]}) by {gap[p, q]:.3g}"
        )
    return RecoveredPhase(rows, cols, row_idx, col_idx, np.asarray(s_r), np.asarray(s_c))


# ---------------------------------------------------------------------------
# factor recovery from kernel access


def recover_amplitude(access, r=20, q=5, seed=0):
    """Rank-``r`` factor of ``|K|``."""
    if isinstance(access, SampleOracle):
        r = min(r, access.row_idx.size, access.col_idx.size)
        return restricted_svd_from_samples(
            np.abs(access.amp_rows), np.abs(access.amp_cols), access.row_idx, access.col_idx, r
        )
    r = min(r, access.n // q) if r * q > access.n else r
    return randomized_svd(access.sampler(np.abs), r=r, q=q, seed=seed)


def _observe(k, amp, where):
    small = np.abs(amp) < MIN_AMPLITUDE
    if np.any(small):
        i, j = np.argwhere(small)[0]
        raise DegenerateAmplitudeError(f"amplitude vanishes at sampled entry {where(i, j)}")
    return frac(np.angle(k / amp) / (2 * np.pi))


def sample_indices(n, count, rng):
    return np.sort(rng.choice(n, min(count, n), replace=False))


def recover_phase_factor(access, amp, r=20, q=5, tau=DEFAULT_TAU, seed=0, return_samples=False):
    """Low-rank factor ``Psi`` with ``exp(2 pi i Psi) ~= K / A``.

    Samples ``r q`` random rows and columns, removes the amplitude, unwraps
    the phase and compresses the unwrapped samples to rank ``r``.
    """
    r = check_positive_int(r, "r")
    q = check_positive_int(q, "q")
    n = access.n
    if isinstance(access, SampleOracle):
        row_idx, col_idx = access.row_idx, access.col_idx
    else:
        rng = check_random_state(seed)
        row_idx = sample_indices(n, r * q, rng)
        col_idx = sample_indices(n, r * q, rng)

    def obs_rows(idx):
        return _observe(access.rows(idx), amp.reconstruct(rows=idx), lambda i, j: (int(idx[i]), int(j)))

    def obs_cols(idx):
        return _observe(access.cols(idx), amp.reconstruct(cols=idx), lambda i, j: (int(i), int(idx[j])))

    rec = recover_phase_samples(
        obs_rows(row_idx), obs_cols(col_idx), row_idx, col_idx, tau,
        fetch_rows=obs_rows, fetch_cols=obs_cols,
    )
    r = min(r, rec.row_idx.size, rec.col_idx.size)
    f = restricted_svd_from_samples(rec.row_samples, rec.col_samples, rec.row_idx, rec.col_idx, r)
    return (f, rec) if return_samples else f
