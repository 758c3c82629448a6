"""Type-3 NUFFT in one and two dimensions, and the NUFFT-applicability test.

``F(t_k) = sum_j c_j exp(2 pi i <t_k, s_j>)`` for arbitrary real sources
``s_j`` and targets ``t_k``.  The transform runs in two Gaussian stages per
dimension (tensor product in 2-D):

1. spread the sources onto a uniform grid of spacing ``1 / (2 R T)``
   (``T`` the target half-width), so that the sampled Fourier integral of the
   spread function equals ``G_hat(t) F(t)`` up to aliasing;
2. evaluate that trigonometric sum at the targets with a Gaussian type-2
   transform on a ``sigma``-times oversampled FFT grid, then divide by
   ``G_hat(t)``.

Both the spreading and the interpolation operators are sparse matrices
built once per plan.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.sparse

from ._validation import ParameterError, check_positive_int, check_random_state, check_vector
from .interp import expi
from .lowrank import LowRankFactor, MatrixSampler, pivoted_qr, randomized_svd, truncated_svd_of_factored

STAGE1_OVERSAMPLING = 2.0
MAX_DIM = 2
# phases of size |Phi| carry rounding noise ~ 2 pi u |Phi| in every entry;
# pivots below this multiple of that level are not counted
NOISE_FACTOR = 100.0
MAX_GRID_BATCH = 1 << 24


class NufftPlanningError(ParameterError):
    """The requested tolerance cannot be met by the requested plan."""


class NufftNotApplicable(ValueError):
    """NUFFT evaluation requested for a decision with ``y = 0``."""


def _stage1_params(half_t, tol):
    # Gaussian exp(-s^2 / (4 tau)); alpha = 4 pi^2 tau T^2 fixes both the
    # deconvolution growth exp(alpha) and the aliasing exp(-4 R (R-1) alpha)
    big_r = STAGE1_OVERSAMPLING
    log_eps = np.log(1.0 / tol)
    alpha = log_eps / (4 * big_r * (big_r - 1))
    tau = alpha / (4 * np.pi ** 2 * half_t ** 2)
    width = np.sqrt(4 * tau * (log_eps + alpha))
    return tau, width, 1.0 / (2 * big_r * half_t)


def spread_width(tol):
    """Half-width (grid points) of the type-2 interpolation stencil."""
    return int(np.ceil(-np.log10(tol))) + 1


def _gauss_rows(points, spacing, tau, half, grid_min, size, periodic):
    """Sparse ``len(points) x size`` matrix of ``exp(-(p - l h)^2 / (4 tau))``."""
    near = np.rint(points / spacing).astype(np.int64)
    offs = np.arange(-half, half + 1)
    idx = near[:, None] + offs[None, :]
    w = np.exp(-(points[:, None] - idx * spacing) ** 2 / (4 * tau))
    col = idx - grid_min
    if periodic:
        col %= size
    elif col.min() < 0 or col.max() >= size:
        raise NufftPlanningError("spreading stencil leaves the grid")
    return col, w


def _kron_rows(cols, weights, sizes):
    """Tensor-product stencils ``(npts, prod(widths))`` for flattened C-order grids."""
    col, w = cols[0], weights[0]
    for c2, w2, sz in zip(cols[1:], weights[1:], sizes[1:]):
        col = (col[:, :, None] * sz + c2[:, None, :]).reshape(col.shape[0], -1)
        w = (w[:, :, None] * w2[:, None, :]).reshape(w.shape[0], -1)
    return col, w


def _sparse(col, w, shape):
    npts = col.shape[0]
    rows = np.repeat(np.arange(npts), col.shape[1])
    return scipy.sparse.csr_matrix((w.ravel(), (rows, col.ravel())), shape=shape)


@dataclass
class _Axis:
    s_center: float
    t_center: float
    tau1: float
    h1: float
    m1: int
    l0: int
    tau2: float
    mr: int


@dataclass
class NufftPlan:
    """Precomputed type-3 transform from ``sources`` to ``targets``.

    ``sources`` is ``dim x n`` and ``targets`` is ``dim x m`` (1-D arrays
    are taken as ``dim = 1``).  ``width`` optionally fixes the type-2
    stencil half-width; too small a width for ``tolerance`` is an error.
    """

    sources: np.ndarray
    targets: np.ndarray
    tolerance: float = 1e-12
    oversampling: float = 2.0
    width: int | None = None
    axes: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sources, dtype=float))
        t = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if s.shape[0] != t.shape[0]:
            raise ParameterError("sources and targets must have the same dimension")
        if s.shape[0] > MAX_DIM:
            raise NotImplementedError(f"type-3 NUFFT implemented for dim <= {MAX_DIM}, got {s.shape[0]}")
        if s.shape[1] < 1 or t.shape[1] < 1:
            raise ParameterError("need at least one source and one target")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
            raise ParameterError("points must be finite")
        if not 1e-15 < self.tolerance < 1e-1:
            raise ParameterError(f"tolerance must lie in (1e-15, 1e-1), got {self.tolerance}")
        if self.oversampling < 1.25:
            raise ParameterError(f"oversampling must be >= 1.25, got {self.oversampling}")
        need = spread_width(self.tolerance)
        if self.width is None:
            self.width = need
        elif check_positive_int(self.width, "width") < need:
            raise NufftPlanningError(f"width {self.width} cannot reach tolerance {self.tolerance:g}; need {need}")
        self.sources, self.targets = s, t
        self._build()

    @property
    def dim(self):
        return self.sources.shape[0]

    def _build(self):
        s, t, tol = self.sources, self.targets, self.tolerance
        n, m = s.shape[1], t.shape[1]
        pre = np.zeros(n)
        post = np.zeros(m)
        deconv = np.zeros(m)
        s_cols, s_w, t_cols, t_w, m1s, mrs, kept = [], [], [], [], [], [], []
        self.axes = []
        for d in range(self.dim):
            sc = 0.5 * (s[d].min() + s[d].max())
            tc = 0.5 * (t[d].min() + t[d].max())
            ss = s[d] - sc
            tt = t[d] - tc
            pre += tc * ss
            post += t[d] * sc
            half_s = np.abs(ss).max()
            half_t = np.abs(tt).max()
            if half_s * half_t == 0.0:
                # no oscillation along this axis once both sets are centered
                continue
            tau1, w1, h1 = _stage1_params(half_t, tol)
            p1 = int(np.ceil(w1 / h1))
            l_hi = int(np.ceil(half_s / h1)) + p1 + 1
            m1 = 2 * l_hi
            l0 = -l_hi
            c1, g1 = _gauss_rows(ss, h1, tau1, p1, l0, m1, periodic=False)
            # type-2 stage on theta = t h1 in [-1/(2R), 1/(2R)]
            mr = scipy.fft.next_fast_len(int(np.ceil(self.oversampling * m1)))
            sigma = mr / m1
            tau2 = np.pi * self.width / (m1 ** 2 * sigma * (sigma - 0.5))
            x = 2 * np.pi * tt * h1
            c2, g2 = _gauss_rows(x, 2 * np.pi / mr, tau2, self.width, 0, mr, periodic=True)
            g2 *= np.sqrt(np.pi / tau2) / mr
            deconv += 4 * np.pi ** 2 * tau1 * tt ** 2
            s_cols.append(c1)
            s_w.append(g1)
            t_cols.append(c2)
            t_w.append(g2 * (h1 / np.sqrt(4 * np.pi * tau1)))
            m1s.append(m1)
            mrs.append(mr)
            kept.append(d)
            self.axes.append(_Axis(sc, tc, tau1, h1, m1, l0, tau2, mr))
        self._pre = expi(pre)
        self._post = expi(post) * np.exp(deconv)
        self._kept = kept
        if not kept:
            return
        self._m1 = tuple(m1s)
        self._mr = tuple(mrs)
        col, w = _kron_rows(s_cols, s_w, m1s)
        self._spread = _sparse(col, w, (n, int(np.prod(m1s)))).T.tocsr()
        col, w = _kron_rows(t_cols, t_w, mrs)
        self._interp = _sparse(col, w, (m, int(np.prod(mrs))))
        # type-2 deconvolution and placement of mode l at l mod mr
        self._deconv2 = []
        self._place = []
        for ax in self.axes:
            ll = ax.l0 + np.arange(ax.m1)
            self._deconv2.append(np.exp(ll.astype(float) ** 2 * ax.tau2))
            self._place.append(ll % ax.mr)

    @property
    def grid_size(self):
        return int(np.prod(self._mr)) if self._kept else 0

    def execute(self, coeffs):
        """Transform one vector (length ``n``) or a block ``n x k``."""
        c = check_vector(coeffs, self.sources.shape[1], "coeffs", allow_batch=True)
        flat = c.ndim == 1
        c = c.reshape(c.shape[0], -1) * self._pre[:, None]
        k = c.shape[1]
        if not self._kept:
            out = np.broadcast_to(c.sum(axis=0), (self.targets.shape[1], k)) * self._post[:, None]
            return out[:, 0] if flat else out
        batch = max(1, MAX_GRID_BATCH // self.grid_size)
        out = np.empty((self.targets.shape[1], k), dtype=complex)
        for a in range(0, k, batch):
            out[:, a:a + batch] = self._run(c[:, a:a + batch])
        out *= self._post[:, None]
        return out[:, 0] if flat else out

    def _run(self, c):
        k = c.shape[1]
        h = (self._spread @ c).reshape(*self._m1, k)
        for d, dc in enumerate(self._deconv2):
            shape = [1] * h.ndim
            shape[d] = dc.size
            h = h * dc.reshape(shape)
        grid = np.zeros((*self._mr, k), dtype=complex)
        grid[np.ix_(*self._place, np.arange(k))] = h
        grid = scipy.fft.ifftn(grid, axes=tuple(range(len(self._mr))), norm="forward")
        return self._interp @ grid.reshape(-1, k)


def nufft_type3(plan, coeffs):
    return plan.execute(coeffs)


def direct_type3(sources, targets, coeffs):
    """``O(n m)`` reference sum, chunked over targets."""
    s = np.atleast_2d(np.asarray(sources, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    c = np.asarray(coeffs)
    out = np.empty((t.shape[1],) + c.shape[1:], dtype=complex)
    step = max(1, (1 << 22) // s.shape[1])
    for a in range(0, t.shape[1], step):
        out[a:a + step] = expi(t[:, a:a + step].T @ s) @ c
    return out


# ---------------------------------------------------------------------------
# applicability test and dimension-lifted evaluation


@dataclass
class NufftDecision:
    applicable: bool
    p: np.ndarray
    q: np.ndarray
    residual: LowRankFactor | None
    pivot_count: int
    pivots: np.ndarray
    eps: float
    r: int
    r_eps: int
    eps_effective: float = 0.0

    def __post_init__(self):
        if not self.applicable and self.residual is not None:
            raise ValueError("a negative decision carries no residual factor")


def centered(phase):
    """Phase factor with row and column means removed (double centering).

    Separable terms ``f(x) + h(xi)``, in particular the integer offsets left
    by phase recovery, only scale the residual kernel diagonally, so they
    are kept out of the lifted part.
    """
    a = phase.left()
    b = phase.v
    return LowRankFactor(a - a.mean(axis=0), b - b.mean(axis=0))


def _leading_pair(phase, r, seed):
    phase = centered(phase)
    if r < phase.rank:
        return truncated_svd_of_factored(phase, r, seed=seed)
    # r equal to the factor rank: the split is exact, only orthogonalize
    qa, ra = np.linalg.qr(phase.left())
    qb, rb = np.linalg.qr(phase.v)
    u, s, vh = np.linalg.svd(ra @ rb.conj().T)
    p = (qa @ u) * s
    q = qb @ vh.conj().T
    if np.isrealobj(phase.left()) and np.isrealobj(phase.v):
        p, q = p.real, q.real
    return p, q


def residual_sampler(phase, amp, p, q):
    """Entries of ``A * exp(2 pi i (Phi - P Q^T))`` on demand."""
    a1, b1 = phase.left(), phase.v
    a2, b2 = amp.left(), amp.v
    n1, n2 = a1.shape[0], b1.shape[0]

    def block(i, j):
        ph = np.real(a1[i] @ b1[j].conj().T) - p[i] @ q[j].T
        return (a2[i] @ b2[j].conj().T) * expi(ph)

    return MatrixSampler(n1, n2, block)


def decide_nufft(phase, amp, r=1, r_eps=20, q=5, eps=1e-12, seed=0):
    """Decide whether ``A exp(2 pi i Phi)`` is an ``r``-dimensional NUFFT plus low rank.

    ``P Q^T`` is the leading rank-``r`` part of the double-centered phase.  ``r_eps q``
    random columns of the residual kernel are factored by pivoted QR; the
    split is accepted when fewer than ``r_eps`` pivots exceed ``eps`` times
    the largest one, and the residual is then factored at rank ``r_eps``.
    The cutoff is raised to the rounding level of the phase when that is
    larger than ``eps``; both are reported.
    """
    r = check_positive_int(r, "r")
    r_eps = check_positive_int(r_eps, "r_eps")
    q = check_positive_int(q, "q")
    if r > phase.rank:
        raise ParameterError(f"r={r} exceeds the phase rank {phase.rank}")
    if r > MAX_DIM:
        raise NotImplementedError(f"dimension lifting implemented for r <= {MAX_DIM}")
    p, qq = _leading_pair(phase, r, seed)
    samp = residual_sampler(phase, amp, p, qq)
    n = samp.ncols
    rng = check_random_state(seed)
    cols = np.sort(rng.choice(n, min(n, r_eps * q), replace=False))
    rr = pivoted_qr(samp.cols(cols), mode="r")[0]
    d = np.abs(np.diag(rr))
    scale = np.abs(np.real(phase.left() @ phase.v[cols].conj().T)).max()
    cut = max(eps, NOISE_FACTOR * 2 * np.pi * np.finfo(float).eps * scale)
    count = int(np.sum(d > cut * d[0])) if d[0] > 0 else 0
    ok = count < r_eps
    res = None
    if ok:
        res = randomized_svd(samp, r=r_eps, q=min(q, max(1, n // r_eps)), seed=seed)
    return NufftDecision(ok, p, qq, res, count, d, eps, r, r_eps, cut)


def nufft_evaluate(decision, f, tol=1e-12):
    """``sum_k a_k(x) sum_xi exp(2 pi i p(x) q(xi)) b_k(xi) f(xi)``."""
    if not decision.applicable:
        raise NufftNotApplicable("decision says NUFFT is not applicable (y = 0)")
    f = check_vector(f, decision.q.shape[0], "f", allow_batch=True)
    plan = NufftPlan(decision.q.T, decision.p.T, tolerance=tol)
    return lifted_apply(plan, residual_terms(decision), f)


def residual_terms(decision):
    """Residual factor without the terms below the decision cutoff."""
    res = decision.residual
    s = res.sigma
    if s is None or s[0] == 0:
        return res
    keep = max(1, int(np.sum(s > decision.eps_effective * s[0])))
    return LowRankFactor(res.u[:, :keep], res.v[:, :keep], s[:keep])


def lifted_apply(plan, res, f):
    """``sum_k a_k * NUFFT(conj(b_k) * f)`` for the terms of ``res``."""
    a, b = res.left(), res.v
    flat = f.ndim == 1
    f2 = f.reshape(f.shape[0], -1)
    k = f2.shape[1]
    src = (b.conj()[:, :, None] * f2[:, None, :]).reshape(f2.shape[0], -1)
    out = plan.execute(src).reshape(-1, a.shape[1], k)
    g = np.einsum("xr,xrk->xk", a, out)
    return g[:, 0] if flat else g


def split_evaluate(pieces, f, tol=1e-12, amp=None):
    """Sum of 1-D NUFFTs, one per rank-1 column piece.

    ``pieces`` is ``[(cols, factor), ...]`` with ``factor`` a rank-1 phase
    on all rows and the listed columns; ``amp`` (optional) is the amplitude
    factor on the full matrix.
    """
    n = sum(len(c) for c, _ in pieces)
    f = check_vector(f, n, "f", allow_batch=True)
    flat = f.ndim == 1
    f2 = f.reshape(n, -1)
    if amp is None:
        a = np.ones((pieces[0][1].shape[0], 1))
        b = np.ones((n, 1))
    else:
        a, b = amp.left(), amp.v
    k = f2.shape[1]
    out = 0
    for cols, fac in pieces:
        if fac.rank != 1:
            raise ParameterError("split evaluation needs rank-1 pieces")
        src = (b[cols].conj()[:, :, None] * f2[cols][:, None, :]).reshape(len(cols), -1)
        plan = NufftPlan(np.real(fac.v[:, 0]), np.real(fac.left()[:, 0]), tolerance=tol)
        out = out + plan.execute(src).reshape(-1, a.shape[1], k)
    g = np.einsum("xr,xrk->xk", a, out)
    return g[:, 0] if flat else g
