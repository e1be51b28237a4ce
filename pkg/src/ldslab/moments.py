"""Moment statistics of LDS mixtures: cross-covariances and sixth moments.

With 0-based trajectory indexing, the two estimators implemented here are

    Rhat[k1]          = mean_i  y[k1] (x) u[0]
    That[k1, k2, k3]  = mean_i  y[k1+k2+k3+2] (x) u[k1+k2+2] (x) y[k1+k2+1]
                                (x) u[k1+1] (x) y[k1] (x) u[0]

whose expectations are, respectively, sum_j w_j X_{j,k1} and
sum_j w_j X_{j,k3} (x) X_{j,k2} (x) X_{j,k1}, where X_{j,l} is the l-th
Markov parameter of component j.  Piecing the sixth-moment blocks
together over 0 <= k1,k2,k3 <= 2s and flattening (y, u) index pairs
yields a third-order tensor whose rank-one components are the flattened
per-component Markov matrices.

Flattening convention, fixed everywhere: a Markov matrix block X_k maps
to vector indices k*(m*p) + row*p + col.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError
from .lds import MixtureSpec, markov_parameter

__all__ = [
    "CrossCovarianceStack",
    "MomentTensor6",
    "FlatTensor3",
    "estimate_cross_covariance",
    "exact_cross_covariance",
    "estimate_sixth_moment_block",
    "exact_sixth_moment_block",
    "assemble_pi",
    "symmetrize_tensor3",
    "flatten_markov",
    "unflatten_markov",
]

# Trajectories are reduced chunk-by-chunk in fixed order, bounding the
# length of any single accumulation run regardless of dataset size.
_CHUNK = 65536


def _stack_dataset(dataset, min_length: int):
    """Stack a trajectory list into (U, Y) arrays, truncated to the
    shortest common length (which must be >= min_length)."""
    if not dataset:
        raise DataError("empty dataset")
    length = min(len(t) for t in dataset)
    if length < min_length:
        raise DataError(
            f"trajectories of length {length} are too short; "
            f"need length >= {min_length}"
        )
    p = dataset[0].u.shape[1]
    m = dataset[0].y.shape[1]
    for i, t in enumerate(dataset):
        if t.u.shape[1] != p or t.y.shape[1] != m:
            raise DataError(f"trajectory {i} dims differ from trajectory 0")
    u = np.stack([t.u[:length] for t in dataset])
    y = np.stack([t.y[:length] for t in dataset])
    return u, y


def estimate_cross_covariance(dataset, k1: int) -> np.ndarray:
    """Empirical mean of y[k1] u[0]^T over the dataset (m-by-p)."""
    if k1 < 0:
        raise DataError("k1 must be >= 0")
    u, y = _stack_dataset(dataset, k1 + 1)
    return _cross_covariance_from_arrays(u, y, k1)


def _cross_covariance_from_arrays(u, y, k1: int) -> np.ndarray:
    prods = np.einsum("bm,bp->bmp", y[:, k1, :], u[:, 0, :])
    return np.sum(prods, axis=0) / u.shape[0]


def exact_cross_covariance(mix: MixtureSpec, k1: int) -> np.ndarray:
    """sum_i w_i X_{i,k1}; the population value of the estimator above."""
    m, _, p = mix.dims
    out = np.zeros((m, p))
    for w, comp in zip(mix.weights, mix.components):
        out += w * markov_parameter(comp, k1)
    return out


@dataclass(frozen=True)
class CrossCovarianceStack:
    """Blocks Rhat[0..2s] side by side: assembled is m-by-(2s+1)p."""

    blocks: tuple
    assembled: np.ndarray
    s: int

    @classmethod
    def estimate(cls, dataset, s: int) -> "CrossCovarianceStack":
        u, y = _stack_dataset(dataset, 2 * s + 1)
        blocks = tuple(
            _cross_covariance_from_arrays(u, y, k1) for k1 in range(2 * s + 1)
        )
        return cls(blocks=blocks, assembled=np.hstack(blocks), s=s)

    @classmethod
    def exact(cls, mix: MixtureSpec, s: int) -> "CrossCovarianceStack":
        blocks = tuple(exact_cross_covariance(mix, k1) for k1 in range(2 * s + 1))
        return cls(blocks=blocks, assembled=np.hstack(blocks), s=s)


def _pair_products(u, y, cache, y_idx, u_idx):
    """Flattened outer products y[y_idx] (x) u[u_idx], shape (B, m*p)."""
    key = (y_idx, u_idx)
    if key not in cache:
        b = u.shape[0]
        cache[key] = np.einsum("bm,bp->bmp", y[:, y_idx, :], u[:, u_idx, :]).reshape(
            b, -1
        )
    return cache[key]


def _sixth_moment_sums(u, y, triples, with_sq=False):
    """Sum over trajectories of the six-fold products for each index
    triple.  Trajectories are processed in fixed-size chunks added in
    fixed order, which bounds accumulation error independently of the
    dataset size.  Returns (sums, sumsqs) of (mp, mp, mp) arrays."""
    n, _, m = y.shape
    p = u.shape[2]
    mp = m * p
    sums = {t: np.zeros((mp, mp * mp)) for t in triples}
    sumsqs = {t: np.zeros((mp, mp * mp)) for t in triples} if with_sq else None
    pair_keys = {}
    for k1, k2, k3 in triples:
        pair_keys.setdefault((k1, k2), []).append(k3)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        uc, yc = u[lo:hi], y[lo:hi]
        bsz = hi - lo
        cache = {}
        sq_cache = {}

        def _sq(key):
            if key not in sq_cache:
                sq_cache[key] = cache[key] * cache[key]
            return sq_cache[key]

        for (k1, k2), k3s in pair_keys.items():
            o1 = _pair_products(uc, yc, cache, k1, 0)
            o2 = _pair_products(uc, yc, cache, k1 + k2 + 1, k1 + 1)
            inner = (o2[:, :, None] * o1[:, None, :]).reshape(bsz, mp * mp)
            if with_sq:
                inner_sq = (_sq((k1 + k2 + 1, k1 + 1))[:, :, None]
                            * _sq((k1, 0))[:, None, :]).reshape(bsz, mp * mp)
            for k3 in k3s:
                o3 = _pair_products(uc, yc, cache, k1 + k2 + k3 + 2, k1 + k2 + 2)
                sums[(k1, k2, k3)] += o3.T @ inner
                if with_sq:
                    o3sq = _sq((k1 + k2 + k3 + 2, k1 + k2 + 2))
                    sumsqs[(k1, k2, k3)] += o3sq.T @ inner_sq
    shape = (mp, mp, mp)
    sums = {t: v.reshape(shape) for t, v in sums.items()}
    if with_sq:
        sumsqs = {t: v.reshape(shape) for t, v in sumsqs.items()}
    return sums, sumsqs


def _block_shape(m, p):
    return (m, p, m, p, m, p)


def estimate_sixth_moment_block(dataset, k1: int, k2: int, k3: int) -> np.ndarray:
    """Empirical sixth-moment block (m,p,m,p,m,p) for one (k1, k2, k3)."""
    for name, k in (("k1", k1), ("k2", k2), ("k3", k3)):
        if k < 0:
            raise DataError(f"{name} must be >= 0")
    need = k1 + k2 + k3 + 3
    u, y = _stack_dataset(dataset, need)
    m, p = y.shape[2], u.shape[2]
    sums, _ = _sixth_moment_sums(u, y, [(k1, k2, k3)])
    return (sums[(k1, k2, k3)] / len(dataset)).reshape(_block_shape(m, p))


def exact_sixth_moment_block(mix: MixtureSpec, k1: int, k2: int, k3: int) -> np.ndarray:
    """sum_j w_j X_{j,k3} (x) X_{j,k2} (x) X_{j,k1}, shape (m,p,m,p,m,p)."""
    m, _, p = mix.dims
    out = np.zeros(_block_shape(m, p))
    for w, comp in zip(mix.weights, mix.components):
        x1 = markov_parameter(comp, k1)
        x2 = markov_parameter(comp, k2)
        x3 = markov_parameter(comp, k3)
        out += w * np.einsum("ab,cd,ef->abcdef", x3, x2, x1)
    return out


@dataclass(frozen=True)
class MomentTensor6:
    """All (2s+1)^3 sixth-moment blocks on a complete grid.

    ``blocks[k1, k2, k3]`` is the (m,p,m,p,m,p) block; ``se`` (present
    only when estimated with ``with_se=True``) holds the per-entry
    Monte-Carlo standard errors on the same grid.
    """

    blocks: np.ndarray
    s: int
    se: np.ndarray = None

    def __post_init__(self):
        g = 2 * self.s + 1
        b = np.asarray(self.blocks, dtype=float)
        if b.ndim != 9 or b.shape[:3] != (g, g, g):
            raise DimensionError("blocks", f"expected ({g},{g},{g},m,p,m,p,m,p) grid")
        if b.shape[3:] != _block_shape(b.shape[3], b.shape[4]):
            raise DimensionError("blocks", f"inconsistent block shape {b.shape[3:]}")
        if not np.all(np.isfinite(b)):
            raise DataError("sixth-moment blocks contain non-finite entries")
        object.__setattr__(self, "blocks", b)

    @property
    def m(self) -> int:
        return self.blocks.shape[3]

    @property
    def p(self) -> int:
        return self.blocks.shape[4]

    def block(self, k1: int, k2: int, k3: int) -> np.ndarray:
        return self.blocks[k1, k2, k3]

    @classmethod
    def estimate(cls, dataset, s: int, with_se: bool = False) -> "MomentTensor6":
        """Estimate every block from one streaming pass over the dataset."""
        u, y = _stack_dataset(dataset, 6 * s + 3)
        return cls._estimate_from_arrays(u, y, s, with_se=with_se)

    @classmethod
    def _estimate_from_arrays(cls, u, y, s, with_se=False):
        g = 2 * s + 1
        n = u.shape[0]
        m, p = y.shape[2], u.shape[2]
        triples = [(a, b, c) for a in range(g) for b in range(g) for c in range(g)]
        sums, sumsqs = _sixth_moment_sums(u, y, triples, with_sq=with_se)
        shape = (g, g, g) + _block_shape(m, p)
        blocks = np.empty(shape)
        se = np.empty(shape) if with_se else None
        for t in triples:
            mean = sums[t] / n
            blocks[t] = mean.reshape(_block_shape(m, p))
            if with_se:
                var = np.maximum(sumsqs[t] / n - mean**2, 0.0)
                se[t] = np.sqrt(var / n).reshape(_block_shape(m, p))
        return cls(blocks=blocks, s=s, se=se)

    @classmethod
    def exact(cls, mix: MixtureSpec, s: int) -> "MomentTensor6":
        """Population blocks computed from the mixture parameters."""
        g = 2 * s + 1
        m, _, p = mix.dims
        xs = [
            [markov_parameter(comp, j) for j in range(g)] for comp in mix.components
        ]
        blocks = np.zeros((g, g, g) + _block_shape(m, p))
        for w, x in zip(mix.weights, xs):
            for k1 in range(g):
                for k2 in range(g):
                    for k3 in range(g):
                        blocks[k1, k2, k3] += w * np.einsum(
                            "ab,cd,ef->abcdef", x[k3], x[k2], x[k1]
                        )
        return cls(blocks=blocks, s=s)


@dataclass(frozen=True)
class FlatTensor3:
    """Order-3 flattening of the sixth-moment grid, q = (2s+1)*m*p."""

    data: np.ndarray
    s: int
    m: int
    p: int

    def __post_init__(self):
        q = (2 * self.s + 1) * self.m * self.p
        d = np.asarray(self.data, dtype=float)
        if d.shape != (q, q, q):
            raise DimensionError("data", f"expected shape {(q, q, q)}, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise DataError("flattened tensor contains non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def q(self) -> int:
        return (2 * self.s + 1) * self.m * self.p


def assemble_pi(blocks: MomentTensor6) -> FlatTensor3:
    """Flatten the block grid into a q*q*q tensor.

    Mode 1 indexes (k3, y-row, u-col) of the third measurement pair,
    mode 2 the (k2, ...) pair and mode 3 the (k1, ...) pair, each with
    the block flattening k*(m*p) + row*p + col.  On exact blocks the
    result equals sum_i w_i v(G_i) (x) v(G_i) (x) v(G_i).
    """
    bb = blocks.blocks
    g = 2 * blocks.s + 1
    m, p = blocks.m, blocks.p
    q = g * m * p
    # axes (k1,k2,k3, r3,c3, r2,c2, r1,c1) -> (k3,r3,c3, k2,r2,c2, k1,r1,c1)
    flat = bb.transpose(2, 3, 4, 1, 5, 6, 0, 7, 8).reshape(q, q, q)
    return FlatTensor3(data=flat, s=blocks.s, m=m, p=p)


def symmetrize_tensor3(t: np.ndarray) -> np.ndarray:
    """Average an order-3 tensor over all six mode permutations.

    The population flattened tensor is fully symmetric, so this leaves
    exact tensors unchanged and only averages out estimation noise.
    """
    t = np.asarray(t, dtype=float)
    out = t.copy()
    for perm in ((0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        out += t.transpose(perm)
    return out / 6.0


def flatten_markov(gmat: np.ndarray, p: int) -> np.ndarray:
    """Flatten an m-by-(T+1)p Markov matrix to a vector of length (T+1)mp.

    Inverse of :func:`unflatten_markov`; preserves the Frobenius norm.
    """
    gmat = np.asarray(gmat, dtype=float)
    m, width = gmat.shape
    if width % p != 0:
        raise DimensionError("gmat", f"width {width} not a multiple of p={p}")
    nblocks = width // p
    return gmat.reshape(m, nblocks, p).transpose(1, 0, 2).ravel()


def unflatten_markov(vec: np.ndarray, m: int, p: int) -> np.ndarray:
    """Rearrange a flattened Markov vector back into an m-by-(T+1)p matrix."""
    vec = np.asarray(vec, dtype=float).ravel()
    if vec.size % (m * p) != 0:
        raise DimensionError("vec", f"length {vec.size} not a multiple of m*p={m * p}")
    nblocks = vec.size // (m * p)
    return vec.reshape(nblocks, m, p).transpose(1, 0, 2).reshape(m, nblocks * p)
