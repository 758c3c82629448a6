"""Butterfly evaluation of ``u(x) = sum_xi exp(2 pi i Phi(x, xi)) g(xi)``.

The phase is only available through a low-rank factor, so every low-rank
block expansion comes from Lagrange interpolation on Mock-Chebyshev indices
(``interp``).  Coefficients live in arrays ``delta[a, b, t, k]``: ``a``
indexes the nodes of ``T_X`` at the current level, ``b`` the nodes of
``T_Omega`` at the complementary level, ``t`` the interpolation node and
``k`` the right-hand side.

Every block at a given level has the same size, so the Lagrange matrices
are shared per level (one per child side) and only the diagonal phase
factors differ between blocks.  ``butterfly_factorize`` stores exactly the
data ``butterfly_apply`` computes on the fly.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from ._validation import ParameterError, check_positive_int, check_vector
from .interp import center, expi, lagrange_matrix, mock_chebyshev_grid, phase_evaluator

FAULT_XI_RECURSION = "xi-recursion"
MAGIC = b"IBFM"
VERSION = 1


class DegenerateBlockError(ValueError):
    def __init__(self, level, a, b):
        super().__init__(f"interpolation grid collapsed below 2 nodes at level {level}, block ({a}, {b})")
        self.level, self.a, self.b = level, a, b


@dataclass(frozen=True)
class DyadicTree:
    """Paired dyadic trees on ``N = leaf * 2**L`` points."""

    n: int
    depth: int
    leaf_size: int

    def node(self, level, k):
        size = self.n >> level
        return range(k * size, (k + 1) * size)

    def nodes(self, level):
        return [self.node(level, k) for k in range(1 << level)]

    @property
    def switch_level(self):
        return self.depth // 2


def build_trees(n, leaf_size=1):
    """``T_X`` and ``T_Omega`` (identical geometry) of depth ``log2(n / leaf_size)``.

    An odd depth is kept as is; the switch then happens at ``depth // 2``.
    """
    n = check_positive_int(n, "n")
    leaf_size = check_positive_int(leaf_size, "leaf_size")
    q, rem = divmod(n, leaf_size)
    if rem or q & (q - 1):
        raise ParameterError(
            f"N={n} is not leaf_size * 2**L for leaf_size={leaf_size}; pad the input to such a length"
        )
    tree = DyadicTree(n, q.bit_length() - 1, leaf_size)
    return tree, tree


def _local_grid(size, r, level, kind):
    g = mock_chebyshev_grid(size, r, ascending=True) if size > 1 else None
    nodes = np.arange(1) if g is None else g.indices
    if size >= 2 and nodes.size < 2:
        raise DegenerateBlockError(level, kind, size)
    return nodes


# ---------------------------------------------------------------------------
# level data


@dataclass
class Level:
    """Operators of one butterfly stage; arrays only, no Python objects."""

    kind: str
    level: int
    arrays: dict = field(default_factory=dict)

    def size(self):
        return int(sum(a.size for a in self.arrays.values()))


def _levels(phase, r, tree, fault=None):
    """Yield the ``Level`` records of the butterfly in application order.

    The outgoing phase factor of each stage is folded into the incoming one
    of the next, so the coefficients carried between levels are the
    expansion coefficients times a known diagonal.
    """
    ev = phase_evaluator(phase)
    n, L, leaf = tree.n, tree.depth, tree.leaf_size
    h = tree.switch_level

    def centers(level):
        size = n >> level
        return np.arange(1 << level) * size + (size - 1) // 2

    def nodes(level):
        # interpolation nodes of every node at ``level``, shape (count, r_eff)
        size = n >> level
        local = _local_grid(size, r, level, "grid")
        return np.arange(1 << level)[:, None] * size + local[None, :], local

    def c(a):
        return np.ascontiguousarray(a)

    # initialization: A = root, B = leaves of T_Omega, interpolate in xi
    croot = centers(0)
    _, lb = nodes(L)
    yield Level("init", 0, {
        "pre": expi(ev(croot, np.arange(n))[0]),
        "lag": c(lagrange_matrix(lb, np.arange(leaf)).T),  # (r0, leaf)
    })

    sign = -1.0 if fault == FAULT_XI_RECURSION else 1.0
    for ell in range(1, h + 1):
        ca = centers(ell)
        nc, lc = nodes(L - ell + 1)
        sc = n >> (L - ell + 1)
        _, lbn = nodes(L - ell)
        cols = nc.ravel()
        # exp(2 pi i (Phi(c_A, xi_s^C) - Phi(c_P, xi_s^C)))
        d = ev(ca, cols) - np.repeat(ev(centers(ell - 1), cols), 2, axis=0)
        yield Level("xi", ell, {
            "pre": expi(sign * d).reshape(ca.size, *nc.shape),
            "lag": c(np.stack([lagrange_matrix(lbn, lc + side * sc).T for side in (0, 1)])),  # (2, rB, rC)
        })

    # switch to interpolation in x on the pairs of level h
    xa, _ = nodes(h)
    nbh, _ = nodes(L - h)
    ca = centers(h)
    cb = centers(L - h)
    na, ra = xa.shape
    nb, rb = nbh.shape
    phi = ev(xa.ravel(), nbh.ravel()).reshape(na, ra, nb, rb)
    phi -= np.repeat(ev(ca, nbh.ravel()), ra, axis=0).reshape(na, ra, nb, rb)
    phi -= ev(xa.ravel(), cb).reshape(na, ra, nb, 1)
    yield Level("switch", h, {"s": c(expi(phi.transpose(0, 2, 1, 3)))})  # (A, B, t, s)

    for ell in range(h + 1, L + 1):
        _, lp = nodes(ell - 1)
        xa, la = nodes(ell)
        sa = n >> ell
        rows = xa.ravel()
        # exp(2 pi i (Phi(x_t^A, c_C) - Phi(x_t^A, c_B))), C a child of B
        d = ev(rows, centers(L - ell + 1)) - np.repeat(ev(rows, centers(L - ell)), 2, axis=1)
        yield Level("x", ell, {
            "lag": np.stack([lagrange_matrix(lp, la + side * sa) for side in (0, 1)]),  # (2, rA, rP)
            "post": c(expi(d).reshape(*xa.shape, -1).transpose(0, 2, 1)),  # (A, C, t)
        })

    # termination: A = leaves of T_X, B = root
    _, la = nodes(L)
    yield Level("final", L, {
        "lag": lagrange_matrix(la, np.arange(leaf)),  # (leaf, rA)
        "post": expi(ev(np.arange(n), croot)[:, 0]),
    })


def _step(lev, d):
    """Apply one level to coefficients ``d``."""
    a = lev.arrays
    if lev.kind == "init":
        w = (a["pre"][:, None] * d).reshape(-1, a["lag"].shape[1], d.shape[-1])  # (B, leaf, k)
        return np.einsum("ts,bsk->btk", a["lag"], w)[None]  # (1, B, t, k)
    if lev.kind == "xi":
        tmp = a["pre"][..., None] * np.repeat(d, 2, axis=0)  # (A, C, s, k)
        na, nc = tmp.shape[:2]
        tmp = tmp.reshape(na, nc // 2, 2, *tmp.shape[2:])
        return np.einsum("jts,abjsk->abtk", a["lag"], tmp)
    if lev.kind == "switch":
        return np.einsum("abts,absk->abtk", a["s"], d)
    if lev.kind == "x":
        y = np.einsum("jts,pcsk->pjctk", a["lag"], d)
        y = y.reshape(-1, *y.shape[2:])  # (A, C, t, k)
        z = a["post"][..., None] * y
        na, nc = z.shape[:2]
        return z.reshape(na, nc // 2, 2, *z.shape[2:]).sum(axis=2)
    if lev.kind == "final":
        u = np.einsum("xt,atk->axk", a["lag"], d[:, 0]).reshape(-1, d.shape[-1])
        return a["post"][:, None] * u
    raise ValueError(f"unknown level kind {lev.kind!r}")


def _as_batch(g, n):
    g = check_vector(g, n, "g", allow_batch=True)
    return g.reshape(n, -1).astype(complex), g.ndim == 1


def _check_rank(r):
    r = check_positive_int(r, "r_eps")
    if r < 4:
        raise ParameterError(f"r_eps must be >= 4, got {r}")
    return r


def _phase_size(phase):
    ev = phase_evaluator(phase)
    shape = getattr(ev, "shape", None)
    if shape is None or shape[0] != shape[1]:
        raise ParameterError("phase must describe a square N x N matrix")
    return shape[0]


def butterfly_apply(phase, g, r_eps=8, leaf_size=1, fault=None):
    """On-the-fly butterfly product ``exp(2 pi i Phi) @ g`` in ``O(N log N)``.

    ``g`` may be a vector or an ``N x k`` block of vectors.
    """
    r = _check_rank(r_eps)
    n = _phase_size(phase)
    tree, _ = build_trees(n, leaf_size)
    d, flat = _as_batch(g, n)
    for lev in _levels(phase, r, tree, fault):
        d = _step(lev, d)
    return d[:, 0] if flat else d


def phase_fingerprint(phase):
    hsh = hashlib.sha256()
    if hasattr(phase, "left"):
        for a in (np.ascontiguousarray(np.real(phase.left())), np.ascontiguousarray(np.real(phase.v))):
            hsh.update(a.astype("<f8").tobytes())
    return hsh.hexdigest()


@dataclass
class ButterflyFactorization:
    """Stored butterfly factors; ``apply`` reproduces ``butterfly_apply``."""

    n: int
    depth: int
    r_eps: int
    leaf_size: int
    levels: list
    seed: int = 0
    fingerprint: str = ""

    def apply(self, g):
        d, flat = _as_batch(g, self.n)
        for lev in self.levels:
            d = _step(lev, d)
        return d[:, 0] if flat else d

    def matvec(self, g):
        return self.apply(g)

    @property
    def storage(self):
        """Number of stored scalars."""
        return sum(lev.size() for lev in self.levels)

    def to_bytes(self):
        out = [MAGIC, struct.pack("<IQIIIq", VERSION, self.n, self.depth, self.r_eps, self.leaf_size, self.seed)]
        fp = bytes.fromhex(self.fingerprint) if self.fingerprint else b""
        out.append(struct.pack("<I", len(fp)) + fp)
        out.append(struct.pack("<I", len(self.levels)))
        for lev in self.levels:
            kind = lev.kind.encode()
            out.append(struct.pack("<IB", lev.level, len(kind)) + kind)
            out.append(struct.pack("<I", len(lev.arrays)))
            for name, arr in lev.arrays.items():
                key = name.encode()
                cplx = np.iscomplexobj(arr)
                data = np.ascontiguousarray(arr, dtype="<c16" if cplx else "<f8")
                out.append(struct.pack("<B", len(key)) + key)
                out.append(struct.pack("<BB", int(cplx), data.ndim) + struct.pack(f"<{data.ndim}Q", *data.shape))
                out.append(data.tobytes())
        return b"".join(out)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, buf):
        buf = memoryview(buf)
        if bytes(buf[:4]) != MAGIC:
            raise ValueError("not an IBFM container")
        pos = 4

        def take(fmt):
            nonlocal pos
            vals = struct.unpack_from(fmt, buf, pos)
            pos += struct.calcsize(fmt)
            return vals

        version, n, depth, r, leaf, seed = take("<IQIIIq")
        if version != VERSION:
            raise ValueError(f"unsupported IBFM version {version}")
        (nfp,) = take("<I")
        fp = bytes(buf[pos:pos + nfp]).hex()
        pos += nfp
        (nlev,) = take("<I")
        levels = []
        for _ in range(nlev):
            level, nk = take("<IB")
            kind = bytes(buf[pos:pos + nk]).decode()
            pos += nk
            (narr,) = take("<I")
            arrays = {}
            for _ in range(narr):
                (nkey,) = take("<B")
                key = bytes(buf[pos:pos + nkey]).decode()
                pos += nkey
                cplx, ndim = take("<BB")
                shape = take(f"<{ndim}Q")
                dt = np.dtype("<c16" if cplx else "<f8")
                count = int(np.prod(shape)) if ndim else 1
                arrays[key] = np.frombuffer(buf, dt, count, pos).reshape(shape).copy()
                pos += count * dt.itemsize
            levels.append(Level(kind, level, arrays))
        return cls(n, depth, r, leaf, levels, seed, fp)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def butterfly_factorize(phase, r_eps=8, leaf_size=1, seed=0, fault=None):
    """Precompute and keep all butterfly factors of ``exp(2 pi i Phi)``."""
    r = _check_rank(r_eps)
    n = _phase_size(phase)
    tree, _ = build_trees(n, leaf_size)
    levels = list(_levels(phase, r, tree, fault))
    return ButterflyFactorization(n, tree.depth, r, leaf_size, levels, seed, phase_fingerprint(phase))


def direct_apply(access, g, rows=None, chunk=1 << 22):
    """Dense ``K @ g`` (optionally only ``rows``); the ``O(N^2)`` reference."""
    n = access.n
    g = check_vector(g, n, "g", allow_batch=True)
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
    out = np.empty((rows.size,) + g.shape[1:], dtype=complex)
    step = max(1, chunk // n)
    for s in range(0, rows.size, step):
        out[s:s + step] = access.rows(rows[s:s + step]) @ g
    return out
