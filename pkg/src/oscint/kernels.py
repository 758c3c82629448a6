"""Concrete oscillatory kernels used in the experiments and property tests.

Grids: ``x_i = i / N`` on ``[0, 1)`` and ``xi_j = j - N/2`` on ``[-N/2, N/2)``
(0-based ``i, j``).
"""

from dataclasses import dataclass

import numpy as np

from ._validation import ParameterError, check_positive_int, check_random_state
from .interp import expi
from .lowrank import LowRankFactor
from .phase_recovery import EntryOracle, MatvecOracle, SampleOracle, frac, sample_indices

CHUNK = 1 << 22  # entries per dense block in chunked products


@dataclass(frozen=True)
class GridSpec:
    n: int

    def __post_init__(self):
        check_positive_int(self.n, "n")

    @property
    def x(self):
        return np.arange(self.n) / self.n

    @property
    def xi(self):
        return np.arange(self.n) - self.n // 2

    def x_index(self, x):
        return np.rint(np.asarray(x) * self.n).astype(np.int64)

    def xi_index(self, xi):
        return np.rint(np.asarray(xi) + self.n // 2).astype(np.int64)


def c_speed(x):
    return (2.0 + 0.2 * np.sin(2 * np.pi * x)) / 16.0


class Kernel:
    """``K(i, j) = amplitude(i, j) * exp(2 pi i phase(i, j))``."""

    name = "kernel"
    unimodular = True

    def __init__(self, n):
        self.n = check_positive_int(n, "n")
        self.grid = GridSpec(self.n)

    def _check(self, i, j):
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        for name, a in (("row", i), ("column", j)):
            if a.size and (a.min() < 0 or a.max() >= self.n):
                raise ParameterError(f"{name} index out of range [0, {self.n})")
        return i, j

    def phase(self, i, j):
        raise NotImplementedError

    def amplitude(self, i, j):
        i, j = self._check(i, j)
        return np.ones((i.size, j.size))

    def entries(self, i, j):
        i, j = self._check(i, j)
        k = expi(self.phase(i, j))
        return k if self.unimodular else self.amplitude(i, j) * k

    def entry(self, i, j):
        return complex(self.entries([i], [j])[0, 0])

    def exact_phase_factor(self):
        """Closed-form low-rank factor of the phase, when one exists."""
        return None

    def exact_amplitude_factor(self):
        if self.unimodular:
            return LowRankFactor(np.ones((self.n, 1)), np.ones((self.n, 1)))
        return None

    # dense O(N^2) products, built in chunks

    def matvec(self, f, rows=None):
        f = np.asarray(f)
        rows = np.arange(self.n) if rows is None else np.asarray(rows, dtype=np.int64)
        out = np.empty((rows.size,) + f.shape[1:], dtype=complex)
        step = max(1, CHUNK // self.n)
        cols = np.arange(self.n)
        for s in range(0, rows.size, step):
            out[s:s + step] = self.entries(rows[s:s + step], cols) @ f
        return out

    def rmatvec(self, f):
        """``K.T @ f``."""
        f = np.asarray(f)
        out = np.empty((self.n,) + f.shape[1:], dtype=complex)
        step = max(1, CHUNK // self.n)
        rows = np.arange(self.n)
        for s in range(0, self.n, step):
            out[s:s + step] = self.entries(rows, np.arange(s, min(s + step, self.n))).T @ f
        return out

    def access(self, scenario="entry", r=20, q=5, seed=0):
        """Kernel access for one of the three scenarios.

        For ``"samples"`` the row and column sets are drawn like the
        recovery would draw them, and always contain row 0 and columns
        0, 1, 2 so that the block partition can be anchored.
        """
        if scenario == "entry":
            return EntryOracle(self.n, self.entries)
        if scenario == "matvec":
            return MatvecOracle(self.n, self.matvec, self.rmatvec)
        if scenario == "samples":
            rng = check_random_state(seed)
            ri = np.union1d(sample_indices(self.n, r * q, rng), [0])
            ci = np.union1d(sample_indices(self.n, r * q, rng), np.arange(min(3, self.n)))
            all_ = np.arange(self.n)
            return SampleOracle(
                self.n, ri, ci,
                self.amplitude(ri, all_), self.amplitude(all_, ci),
                frac(self.phase(ri, all_)), frac(self.phase(all_, ci)),
            )
        raise ParameterError(f"unknown scenario {scenario!r}")


class FIO1D(Kernel):
    """``Phi = x xi + c(x) |xi|``; rank-2 phase with a kink at ``xi = 0``."""

    name = "fio1d"

    def phase(self, i, j):
        i, j = self._check(i, j)
        x = self.grid.x[i][:, None]
        xi = self.grid.xi[j][None, :]
        return x * xi + c_speed(x) * np.abs(xi)

    def exact_phase_factor(self):
        x, xi = self.grid.x, self.grid.xi.astype(float)
        return LowRankFactor(np.column_stack([x, c_speed(x)]), np.column_stack([xi, np.abs(xi)]))

    def split_phase_pieces(self):
        return split_phase_pieces(self.grid)


class FIOSplit(FIO1D):
    """Same kernel as ``fio1d``, evaluated through its two rank-1 pieces."""

    name = "fio-split"


class FIOSmooth(Kernel):
    """``Phi = x xi + c(x) xi``; exactly rank 1."""

    name = "fio-smooth"

    def phase(self, i, j):
        i, j = self._check(i, j)
        x = self.grid.x[i][:, None]
        return (x + c_speed(x)) * self.grid.xi[j][None, :]

    def exact_phase_factor(self):
        x = self.grid.x
        return LowRankFactor((x + c_speed(x))[:, None], self.grid.xi.astype(float)[:, None])


def split_phase_pieces(grid):
    """Rank-1 phases on ``xi < 0`` and ``xi >= 0``: ``(x -/+ c(x)) xi``.

    Returns ``[(cols, factor), ...]`` where ``factor`` spans the full rows and
    only the listed columns.
    """
    x = grid.x
    xi = grid.xi.astype(float)
    neg = np.flatnonzero(xi < 0)
    pos = np.flatnonzero(xi >= 0)
    return [
        (neg, LowRankFactor((x - c_speed(x))[:, None], xi[neg][:, None])),
        (pos, LowRankFactor((x + c_speed(x))[:, None], xi[pos][:, None])),
    ]


# ---------------------------------------------------------------------------
# Hankel functions H^(1)_m(x) for x >= 20, m < x


ASYMPTOTIC_MIN_X = 20.0


def hankel1_01(x):
    """``(H_0(x), H_1(x))`` of the first kind from Hankel's asymptotic series."""
    x = np.asarray(x, dtype=float)
    if np.any(x < ASYMPTOTIC_MIN_X):
        raise ParameterError(f"asymptotic evaluation needs x >= {ASYMPTOTIC_MIN_X}")
    out = []
    for nu in (0.0, 1.0):
        mu = 4 * nu * nu
        s = np.ones_like(x, dtype=complex)
        a = np.ones_like(x)
        prev = np.full_like(x, np.inf)
        live = np.ones(x.shape, dtype=bool)
        for k in range(1, 80):
            a = a * (mu - (2 * k - 1) ** 2) / (8 * k * x)
            mag = np.abs(a)
            live &= mag < prev
            if not live.any():
                break
            s = s + np.where(live, (1j ** k) * a, 0)
            live &= mag > 1e-17
            prev = mag
        w = x - nu * np.pi / 2 - np.pi / 4
        out.append(np.sqrt(2 / (np.pi * x)) * np.exp(1j * w) * s)
    return out[0], out[1]


def hankel1_table(x, m_max):
    """``H[k, m] = H^(1)_m(x_k)`` for ``m = 0..m_max`` via forward recurrence.

    The recurrence ``H_{m+1} = (2m/x) H_m - H_{m-1}`` is stable while
    ``m < x``; beyond that the Bessel ``J`` part decays and accuracy is lost.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m_max = int(m_max)
    if m_max >= x.min():
        raise ParameterError("order must stay below the argument (oscillatory regime)")
    h = np.empty((x.size, m_max + 1), dtype=complex)
    h0, h1 = hankel1_01(x)
    h[:, 0] = h0
    if m_max >= 1:
        h[:, 1] = h1
    for m in range(1, m_max):
        h[:, m + 1] = (2 * m / x) * h[:, m] - h[:, m - 1]
    return h


class Hankel(Kernel):
    """``K(i, j) = H^(1)_j(x_i)`` with ``x_i = N + 2 pi i / 3``."""

    name = "hankel"
    unimodular = False

    def points(self):
        return self.n + 2 * np.pi / 3 * np.arange(self.n)

    def _table(self, i, j):
        i, j = self._check(i, j)
        x = self.points()[i]
        out = np.empty((i.size, j.size), dtype=complex)
        if j.size == 0 or i.size == 0:
            return out
        m_max = int(j.max())
        step = max(1, CHUNK // (m_max + 1))
        for s in range(0, i.size, step):
            out[s:s + step] = hankel1_table(x[s:s + step], m_max)[:, j]
        return out

    def entries(self, i, j):
        return self._table(i, j)

    def amplitude(self, i, j):
        return np.abs(self._table(i, j))

    def phase(self, i, j):
        return np.angle(self._table(i, j)) / (2 * np.pi)


def hankel_entry(i, j, n):
    return Hankel(n).entry(i, j)


# ---------------------------------------------------------------------------
# synthetic phases for property tests


class SyntheticKernel(Kernel):
    """Unimodular kernel with a documented ground-truth phase.

    ``truth`` is the exact phase factor and ``true_breaks`` the planted
    column discontinuities (0-based, always containing 0).
    """

    def __init__(self, n, kind, u, v, true_breaks=(0,)):
        super().__init__(n)
        self.name = f"synthetic:{kind}"
        self.kind = kind
        self.truth = LowRankFactor(u, v)
        self.true_breaks = np.asarray(true_breaks, dtype=np.int64)

    def phase(self, i, j):
        i, j = self._check(i, j)
        return self.truth.reconstruct(i, j).real

    def exact_phase_factor(self):
        return self.truth


SYNTHETIC_KINDS = ("separable", "smooth-low-rank", "planted-breaks")


def synthetic_phase(kind, n, rank=3, jump=0.35, seed=0):
    """Deterministic synthetic kernel of the given ``kind``.

    separable        ``p(x) q(xi)`` with smooth ``p, q``
    smooth-low-rank  ``x xi + N sum_t w_t sin(a_t x + b_t) sin(a_t xi/N + d_t) / a_t^2``,
                     mixed derivative bounded by 1, exact rank ``rank``
    planted-breaks   ``x xi`` plus a jump of ``jump`` cycles at ``xi = 0``
    """
    n = check_positive_int(n, "n")
    g = GridSpec(n)
    x, xi = g.x, g.xi.astype(float)
    rng = check_random_state(seed)
    if kind == "separable":
        a, b = rng.uniform(0, 2 * np.pi, 2)
        p = 1.0 + 0.3 * np.sin(2 * np.pi * x + a)
        q = xi + 0.02 * n * np.cos(2 * np.pi * xi / n + b)
        return SyntheticKernel(n, kind, p[:, None], q[:, None])
    if kind == "smooth-low-rank":
        rank = check_positive_int(rank, "rank")
        us, vs = [x], [xi]
        for t in range(1, rank):
            w = 1.0 + 0.5 * t + rng.uniform(0, 0.25)
            b, d = rng.uniform(0, 2 * np.pi, 2)
            us.append(n * np.sin(w * x + b) / (w * w * rank))
            vs.append(np.sin(w * xi / n + d))
        return SyntheticKernel(n, kind, np.column_stack(us), np.column_stack(vs))
    if kind == "planted-breaks":
        k0 = n // 2
        step = (np.arange(n) >= k0).astype(float)
        return SyntheticKernel(
            n, kind, np.column_stack([x, np.full(n, jump)]), np.column_stack([xi, step]), (0, k0)
        )
    raise ParameterError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")


def make_kernel(name, n, **kw):
    """Kernel from a CLI selection string."""
    table = {"fio1d": FIO1D, "fio-split": FIOSplit, "fio-smooth": FIOSmooth, "hankel": Hankel}
    if name in table:
        return table[name](n)
    if name.startswith("synthetic:"):
        return synthetic_phase(name.split(":", 1)[1], n, **kw)
    raise ParameterError(f"unknown kernel {name!r}")
