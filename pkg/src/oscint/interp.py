"""Interpolative low-rank approximation of ``exp(2 pi i Phi(A, B))`` on a block.

Only equispaced samples of the phase are available, so the interpolation
nodes are Mock-Chebyshev indices: Chebyshev points mapped onto the index
range and rounded.  All indices are 0-based.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import ParameterError, check_positive_int
from .lowrank import LowRankFactor

SIDE_XI = "xi"
SIDE_X = "x"


def round_half_away(a):
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.floor(np.abs(a) + 0.5)


def expi(phase):
    """``exp(2 pi i phase)`` with the integer part removed first."""
    phase = np.asarray(phase, dtype=float)
    return np.exp(2j * np.pi * (phase - np.rint(phase)))


@dataclass(frozen=True)
class IndexGrid:
    """Interpolation nodes inside one contiguous index range."""

    indices: np.ndarray
    requested_rank: int
    start: int = 0
    n: int = 0

    @property
    def effective_count(self):
        return len(self.indices)


def mock_chebyshev_grid(n, r, start=0, ascending=False):
    """Mock-Chebyshev nodes for the range ``start, ..., start + n - 1``.

    ``Round(t + (n - r)(z_t + 1/2))`` with ``z_t = cos((t-1) pi / (r-1)) / 2``.
    Repeated points after rounding are dropped, so the grid may hold fewer
    than ``r`` nodes.  When ``n <= r`` every index is a node.

    With the default ordering ``z_t`` decreases while ``t`` increases, which
    keeps the nodes inside ``[r, n - r + 1]``.  ``ascending=True`` pairs
    ``t`` with ``-z_t`` instead, so the nodes run from ``1`` to ``n`` and never
    collide; this is the variant used for interpolation.
    """
    n = check_positive_int(n, "n")
    r = check_positive_int(r, "r", minimum=2)
    if n <= r:
        local = np.arange(n)
    else:
        t = np.arange(1, r + 1)
        z = 0.5 * np.cos((t - 1) * np.pi / (r - 1))
        if ascending:
            z = -z
        pts = round_half_away(t + (n - r) * (z + 0.5)).astype(np.int64)
        local = np.unique(np.clip(pts, 1, n)) - 1
    return IndexGrid(local + start, r, start, n)


def lagrange_matrix(nodes, queries):
    """``out[k, t] = prod_{j != t} (q_k - x_j) / (x_t - x_j)``."""
    nodes = np.asarray(nodes, dtype=float)
    q = np.asarray(queries, dtype=float)
    r = nodes.size
    out = np.ones((q.size, r))
    for t in range(r):
        for j in range(r):
            if j != t:
                out[:, t] *= (q - nodes[j]) / (nodes[t] - nodes[j])
    return out


def lagrange_row(grid, k):
    """Lagrange basis values ``M_t(k)`` for every node of ``grid``."""
    return lagrange_matrix(grid.indices, [k])[0]


def center(start, length):
    # index closest to the mean; ties go to the smaller one
    return start + (length - 1) // 2


def _as_range(a, name):
    if isinstance(a, range):
        if a.step != 1 or len(a) == 0:
            raise ParameterError(f"{name} must be a non-empty contiguous range")
        return a
    lo, hi = a
    if hi <= lo:
        raise ParameterError(f"{name} must be a non-empty contiguous range")
    return range(int(lo), int(hi))


def phase_evaluator(phase):
    """Return ``f(I, J)`` giving the dense real phase block.

    ``phase`` is a real ``LowRankFactor`` or already such a callable.
    """
    if callable(phase):
        return phase
    if not isinstance(phase, LowRankFactor):
        raise TypeError("phase must be a LowRankFactor or a callable")
    left = np.real(phase.left())
    right = np.real(phase.v)
    nr, nc = left.shape[0], right.shape[0]

    def block(i, j):
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        if i.size and (i.min() < 0 or i.max() >= nr) or j.size and (j.min() < 0 or j.max() >= nc):
            raise ParameterError("phase index out of range")
        return left[i] @ right[j].T

    block.shape = (nr, nc)
    return block


def residual_phase(phase, A, B, rows=None, cols=None):
    """Cross-difference ``Phi(i,j) - Phi(cA,j) - Phi(i,cB) + Phi(cA,cB)``."""
    ev = phase_evaluator(phase)
    A = _as_range(A, "A")
    B = _as_range(B, "B")
    rows = np.asarray(A if rows is None else rows, dtype=np.int64)
    cols = np.asarray(B if cols is None else cols, dtype=np.int64)
    if np.any((rows < A.start) | (rows >= A.stop)) or np.any((cols < B.start) | (cols >= B.stop)):
        raise ParameterError("rows/cols must lie inside A/B")
    ca = center(A.start, len(A))
    cb = center(B.start, len(B))
    return (
        ev(rows, cols)
        - ev([ca], cols)
        - ev(rows, [cb])
        + ev([ca], [cb])
    )


@dataclass(frozen=True)
class InterpFactor:
    """``exp(2 pi i Phi(A, B)) ~= u @ v.conj().T``."""

    u: np.ndarray
    v: np.ndarray
    side: str
    grid: IndexGrid

    def reconstruct(self):
        return self.u @ self.v.conj().T


def interp_lowrank(phase, A, B, r, side=SIDE_XI):
    """Interpolative factor of the kernel block on ``A x B``.

    ``side="xi"`` interpolates along the columns (nodes in ``B``),
    ``side="x"`` along the rows (nodes in ``A``).
    """
    ev = phase_evaluator(phase)
    A = _as_range(A, "A")
    B = _as_range(B, "B")
    ia = np.arange(A.start, A.stop)
    ib = np.arange(B.start, B.stop)
    if side == SIDE_XI:
        grid = mock_chebyshev_grid(len(B), r, B.start, ascending=True)
        ca = center(A.start, len(A))
        nodes = grid.indices
        u = expi(ev(ia, nodes) - ev([ca], nodes))
        m = lagrange_matrix(nodes, ib)
        v = m * expi(-ev([ca], ib)[0])[:, None]
    elif side == SIDE_X:
        grid = mock_chebyshev_grid(len(A), r, A.start, ascending=True)
        cb = center(B.start, len(B))
        nodes = grid.indices
        m = lagrange_matrix(nodes, ia)
        u = m * expi(ev(ia, [cb])[:, 0])[:, None]
        v = expi(-(ev(nodes, ib) - ev(nodes, [cb])).T)
    else:
        raise ParameterError(f"side must be {SIDE_XI!r} or {SIDE_X!r}, got {side!r}")
    return InterpFactor(u, v, side, grid)
