"""Compressed linear operators.

A dense matrix-vector product ``A @ x`` (A of shape m x n) is replaced by one
of several cheaper structured compositions:

* ``LGPShuffle``   -- block-diagonal product followed by a zero-parameter
  permutation that redistributes each output group across all groups.
* ``LGPDense``     -- block-diagonal product mixed with a small dense square
  matrix on the smaller of the two dimensions.
* ``LowRankLGP``   -- low-rank bottleneck of width n/r whose two factors are
  themselves block-diagonal, fused with a square mixing matrix in between.
* ``SVDLinear``    -- plain two-factor low-rank form ``P @ Q @ x``.
* ``DenseLinear``  -- the uncompressed baseline.

Every operator exposes ``apply`` (vector), ``apply_matrix`` (one column per
timestep), ``materialize`` (explicit dense equivalent, used as the
correctness oracle in tests) and ``param_count``.

Operators are immutable after construction (backing arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "ShapeError",
    "CompressionConfig",
    "ShuffleMix",
    "BlockDiagonal",
    "CompressedLinear",
    "DenseLinear",
    "SVDLinear",
    "LGPShuffle",
    "LGPDense",
    "LowRankLGP",
    "KINDS",
    "mv_dense",
    "validate",
    "init_weights",
    "cast_operator",
    "set_block_threads",
    "get_block_threads",
]

KIND_DENSE = "dense"
KIND_SVD = "svd"
KIND_LGP_SHUFFLE = "lgp-shuffle"
KIND_LGP_DENSE = "lgp-dense"
KIND_LOWRANK_LGP = "lowrank-lgp"
KINDS = (KIND_DENSE, KIND_SVD, KIND_LGP_SHUFFLE, KIND_LGP_DENSE, KIND_LOWRANK_LGP)

MIX_AFTER = "after"
MIX_BEFORE = "before"

_FLOAT_DTYPES = (np.float32, np.float64)


class ConfigError(ValueError):
    """An operator configuration violates a structural constraint."""


class ShapeError(ValueError):
    """An input does not match the operator's declared dimensions."""


# ---------------------------------------------------------------------------
# block-level thread mode
# ---------------------------------------------------------------------------

_block_threads = 1
_pool: Optional[ThreadPoolExecutor] = None


def set_block_threads(n: int) -> None:
    """Set the number of worker threads for block-diagonal products.

    ``n == 1`` (the default) evaluates blocks serially, which is the
    reproducible mode used for benchmarking. Results are identical either
    way: each block runs the same kernel on the same operands and writes a
    disjoint output slice.
    """
    global _block_threads, _pool
    if not isinstance(n, int) or n < 1:
        raise ConfigError("thread count must be an integer >= 1")
    if n != _block_threads and _pool is not None:
        _pool.shutdown(wait=True)
        _pool = None
    _block_threads = n


def get_block_threads() -> int:
    return _block_threads


def _get_pool() -> ThreadPoolExecutor:
    global _pool
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_block_threads)
    return _pool


def threads_from_env() -> int:
    """Read the ANTMAN_THREADS override, defaulting to 1."""
    raw = os.environ.get("ANTMAN_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"ANTMAN_THREADS must be an integer >= 1, got {raw!r}")
    if n < 1:
        raise ConfigError(f"ANTMAN_THREADS must be an integer >= 1, got {raw!r}")
    return n


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _coerce(a, dtype) -> np.ndarray:
    a = np.asarray(a, dtype=dtype)
    if not np.all(np.isfinite(a)):
        raise ConfigError("operator values must all be finite")
    return _freeze(a)


def _check_vector(x, length: int, name: str = "x") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {x.shape}")
    if x.shape[0] != length:
        raise ShapeError(f"{name} has length {x.shape[0]}, expected {length}")
    return x


def _check_matrix(x, rows: int, name: str = "X") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {x.shape}")
    if x.shape[0] != rows:
        raise ShapeError(f"{name} has {x.shape[0]} rows, expected {rows}")
    return x


def mv_dense(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Reference dense matrix-vector product ``y[i] = sum_j a[i, j] * x[j]``."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got shape {a.shape}")
    x = _check_vector(x, a.shape[1])
    return a @ x


# ---------------------------------------------------------------------------
# structural pieces
# ---------------------------------------------------------------------------


class ShuffleMix:
    """Zero-parameter group mixing permutation.

    Element ``i = b * (m/g) + k`` moves to position ``k * g + b``: the vector
    is viewed as a ``[g, m/g]`` matrix of groups and transposed, so each
    group's elements end up evenly spread across the whole output.
    """

    def __init__(self, length: int, groups: int):
        if length < 1 or groups < 1:
            raise ConfigError("length and groups must be >= 1")
        if length % groups != 0:
            raise ConfigError("g must divide m")
        self.length = length
        self.groups = groups
        per = length // groups
        # out = v[perm]; perm[k*g + b] = b*per + k
        self.perm = _freeze(np.arange(length).reshape(groups, per).T.ravel())
        self.inv_perm = _freeze(np.argsort(self.perm))

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = _check_vector(v, self.length, "v")
        return v[self.perm]

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        v = _check_vector(v, self.length, "v")
        return v[self.inv_perm]

    def apply_matrix(self, x: np.ndarray) -> np.ndarray:
        x = _check_matrix(x, self.length)
        return x[self.perm]

    def materialize(self) -> np.ndarray:
        p = np.zeros((self.length, self.length))
        p[np.arange(self.length), self.perm] = 1.0
        return p

    def param_count(self) -> int:
        return 0


class BlockDiagonal:
    """``g`` dense blocks on the diagonal of an m x n map.

    Output group ``b`` (rows ``[b*m/g, (b+1)*m/g)``) depends only on input
    group ``b``; all entries outside the diagonal blocks are exactly zero.
    """

    def __init__(self, blocks: Sequence[np.ndarray] | np.ndarray, dtype=np.float64):
        stacked = np.asarray(blocks, dtype=dtype)
        if stacked.ndim != 3:
            raise ConfigError(
                f"blocks must stack to a (g, m/g, n/g) array, got shape {stacked.shape}"
            )
        self.blocks = _coerce(stacked, dtype)
        g, p, q = stacked.shape
        self.groups = g
        self.out_dim = g * p
        self.in_dim = g * q

    @property
    def block_shape(self):
        return self.blocks.shape[1:]

    def mv(self, x: np.ndarray) -> np.ndarray:
        """Block-diagonal matrix-vector product as g independent small MVs."""
        x = _check_vector(x, self.in_dim)
        g, p, q = self.blocks.shape
        out = np.empty(self.out_dim, dtype=np.result_type(self.blocks, x))
        xg = x.reshape(g, q)
        if _block_threads > 1 and g > 1:
            pool = _get_pool()
            list(pool.map(lambda b: out.__setitem__(
                slice(b * p, (b + 1) * p), self.blocks[b] @ xg[b]), range(g)))
        else:
            for b in range(g):
                out[b * p:(b + 1) * p] = self.blocks[b] @ xg[b]
        return out

    def apply_matrix(self, x: np.ndarray) -> np.ndarray:
        x = _check_matrix(x, self.in_dim)
        g, p, q = self.blocks.shape
        out = np.empty((self.out_dim, x.shape[1]), dtype=np.result_type(self.blocks, x))
        for b in range(g):
            out[b * p:(b + 1) * p] = self.blocks[b] @ x[b * q:(b + 1) * q]
        return out

    def materialize(self) -> np.ndarray:
        g, p, q = self.blocks.shape
        full = np.zeros((self.out_dim, self.in_dim), dtype=self.blocks.dtype)
        for b in range(g):
            full[b * p:(b + 1) * p, b * q:(b + 1) * q] = self.blocks[b]
        return full

    def param_count(self) -> int:
        return int(self.blocks.size)


# ---------------------------------------------------------------------------
# the operator family
# ---------------------------------------------------------------------------


class CompressedLinear:
    """Base class: a linear map from R^in_dim to R^out_dim."""

    kind: str
    out_dim: int
    in_dim: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_matrix(self, x: np.ndarray) -> np.ndarray:
        """Apply to each column of a (in_dim, t) matrix in one pass."""
        raise NotImplementedError

    def materialize(self) -> np.ndarray:
        raise NotImplementedError

    def param_count(self) -> int:
        raise NotImplementedError

    def factors(self) -> Iterator[tuple[str, np.ndarray]]:
        """Named weight arrays in a fixed serialization order."""
        raise NotImplementedError

    def config(self) -> "CompressionConfig":
        """Structural description (kind, dims, group/rank parameters)."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(out_dim={self.out_dim}, in_dim={self.in_dim})"


class DenseLinear(CompressedLinear):
    kind = KIND_DENSE

    def __init__(self, matrix: np.ndarray, dtype=np.float64):
        matrix = np.asarray(matrix, dtype=dtype)
        if matrix.ndim != 2:
            raise ConfigError(f"matrix must be 2-D, got shape {matrix.shape}")
        self.matrix = _coerce(matrix, dtype)
        self.out_dim, self.in_dim = matrix.shape

    def apply(self, x):
        x = _check_vector(x, self.in_dim)
        return self.matrix @ x

    def apply_matrix(self, x):
        x = _check_matrix(x, self.in_dim)
        return self.matrix @ x

    def materialize(self):
        return self.matrix.copy()

    def param_count(self):
        return self.out_dim * self.in_dim

    def factors(self):
        yield "matrix", self.matrix

    def config(self):
        return CompressionConfig(KIND_DENSE, self.out_dim, self.in_dim)


class SVDLinear(CompressedLinear):
    """Two-factor low-rank form ``P @ Q @ x`` with bottleneck width n/r."""

    kind = KIND_SVD

    def __init__(self, p: np.ndarray, q: np.ndarray, rank_factor: int, dtype=np.float64):
        p = np.asarray(p, dtype=dtype)
        q = np.asarray(q, dtype=dtype)
        m, inner = p.shape
        inner_q, n = q.shape
        if rank_factor < 1 or n % rank_factor != 0:
            raise ConfigError("r must divide n")
        if inner != n // rank_factor or inner_q != inner:
            raise ConfigError(
                f"factor shapes {p.shape} x {q.shape} do not match bottleneck n/r={n // rank_factor}"
            )
        self.p = _coerce(p, dtype)
        self.q = _coerce(q, dtype)
        self.rank_factor = rank_factor
        self.out_dim, self.in_dim = m, n

    def apply(self, x):
        x = _check_vector(x, self.in_dim)
        return self.p @ (self.q @ x)

    def apply_matrix(self, x):
        x = _check_matrix(x, self.in_dim)
        return self.p @ (self.q @ x)

    def materialize(self):
        return self.p @ self.q

    def param_count(self):
        return int(self.p.size + self.q.size)

    def factors(self):
        yield "p", self.p
        yield "q", self.q

    def config(self):
        return CompressionConfig(KIND_SVD, self.out_dim, self.in_dim, r=self.rank_factor)


class LGPShuffle(CompressedLinear):
    """Block-diagonal product followed by the shuffle permutation."""

    kind = KIND_LGP_SHUFFLE

    def __init__(self, block_diag: BlockDiagonal, shuffle: Optional[ShuffleMix] = None):
        if shuffle is None:
            shuffle = ShuffleMix(block_diag.out_dim, block_diag.groups)
        if shuffle.length != block_diag.out_dim:
            raise ConfigError("shuffle length must equal the block-diagonal out_dim")
        self.block_diag = block_diag
        self.shuffle = shuffle
        self.out_dim = block_diag.out_dim
        self.in_dim = block_diag.in_dim

    def apply(self, x):
        return self.shuffle.apply(self.block_diag.mv(x))

    def apply_matrix(self, x):
        return self.shuffle.apply_matrix(self.block_diag.apply_matrix(x))

    def materialize(self):
        return self.shuffle.materialize() @ self.block_diag.materialize()

    def param_count(self):
        return self.block_diag.param_count()

    def factors(self):
        yield "blocks", self.block_diag.blocks

    def config(self):
        return CompressionConfig(
            KIND_LGP_SHUFFLE, self.out_dim, self.in_dim, g=self.block_diag.groups
        )


class LGPDense(CompressedLinear):
    """Block-diagonal product mixed with a dense square matrix.

    The mix sits on the smaller dimension: after the block product
    (``M @ D @ x``, M of size m x m) when m <= n, before it
    (``D @ M @ x``, M of size n x n) when n < m. ``mix_side`` may be given
    explicitly to override the size-based default.
    """

    kind = KIND_LGP_DENSE

    def __init__(self, block_diag: BlockDiagonal, mix: np.ndarray,
                 mix_side: Optional[str] = None, dtype=np.float64):
        m, n = block_diag.out_dim, block_diag.in_dim
        if mix_side is None:
            mix_side = MIX_AFTER if m <= n else MIX_BEFORE
        if mix_side not in (MIX_AFTER, MIX_BEFORE):
            raise ConfigError(f"mix_side must be 'after' or 'before', got {mix_side!r}")
        mix = np.asarray(mix, dtype=dtype)
        want = m if mix_side == MIX_AFTER else n
        if mix.shape != (want, want):
            raise ConfigError(
                f"mix matrix must be {want}x{want} for mix_side={mix_side!r}, got {mix.shape}"
            )
        self.block_diag = block_diag
        self.mix = _coerce(mix, dtype)
        self.mix_side = mix_side
        self.out_dim, self.in_dim = m, n

    def apply(self, x):
        if self.mix_side == MIX_AFTER:
            return self.mix @ self.block_diag.mv(x)
        x = _check_vector(x, self.in_dim)
        return self.block_diag.mv(self.mix @ x)

    def apply_matrix(self, x):
        if self.mix_side == MIX_AFTER:
            return self.mix @ self.block_diag.apply_matrix(x)
        x = _check_matrix(x, self.in_dim)
        return self.block_diag.apply_matrix(self.mix @ x)

    def materialize(self):
        if self.mix_side == MIX_AFTER:
            return self.mix @ self.block_diag.materialize()
        return self.block_diag.materialize() @ self.mix

    def param_count(self):
        return self.block_diag.param_count() + int(self.mix.size)

    def factors(self):
        yield "blocks", self.block_diag.blocks
        yield "mix", self.mix

    def config(self):
        return CompressionConfig(
            KIND_LGP_DENSE, self.out_dim, self.in_dim,
            g=self.block_diag.groups, mix_side=self.mix_side,
        )


class LowRankLGP(CompressedLinear):
    """Low-rank bottleneck with block-diagonal factors: ``D_out @ M @ D_in @ x``.

    ``D_in`` maps n -> n/r with g_in blocks, ``M`` is the fused (n/r)-square
    mixing matrix, ``D_out`` maps n/r -> m with g_out blocks.
    """

    kind = KIND_LOWRANK_LGP

    def __init__(self, d_in: BlockDiagonal, mix: np.ndarray, d_out: BlockDiagonal,
                 rank_factor: int, dtype=np.float64):
        n = d_in.in_dim
        if rank_factor < 1 or n % rank_factor != 0:
            raise ConfigError("r must divide n")
        inner = n // rank_factor
        if d_in.out_dim != inner:
            raise ConfigError(f"d_in must map n={n} to n/r={inner}, got out_dim {d_in.out_dim}")
        if d_out.in_dim != inner:
            raise ConfigError(f"d_out must consume n/r={inner}, got in_dim {d_out.in_dim}")
        mix = np.asarray(mix, dtype=dtype)
        if mix.shape != (inner, inner):
            raise ConfigError(f"mix matrix must be {inner}x{inner}, got {mix.shape}")
        self.d_in = d_in
        self.mix = _coerce(mix, dtype)
        self.d_out = d_out
        self.rank_factor = rank_factor
        self.out_dim = d_out.out_dim
        self.in_dim = n

    def apply(self, x):
        return self.d_out.mv(self.mix @ self.d_in.mv(x))

    def apply_matrix(self, x):
        return self.d_out.apply_matrix(self.mix @ self.d_in.apply_matrix(x))

    def materialize(self):
        return self.d_out.materialize() @ self.mix @ self.d_in.materialize()

    def param_count(self):
        return self.d_in.param_count() + int(self.mix.size) + self.d_out.param_count()

    def factors(self):
        yield "d_in", self.d_in.blocks
        yield "mix", self.mix
        yield "d_out", self.d_out.blocks

    def config(self):
        return CompressionConfig(
            KIND_LOWRANK_LGP, self.out_dim, self.in_dim,
            r=self.rank_factor, g_in=self.d_in.groups, g_out=self.d_out.groups,
        )


# ---------------------------------------------------------------------------
# configs, validation, initialization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompressionConfig:
    """Structural description of an operator: kind plus dims and parameters.

    Which of g / r / g_in / g_out are required depends on the kind; the rest
    must stay None.
    """

    kind: str
    m: int
    n: int
    g: Optional[int] = None
    r: Optional[int] = None
    g_in: Optional[int] = None
    g_out: Optional[int] = None
    mix_side: Optional[str] = None

    def label(self) -> str:
        parts = [self.kind]
        for name in ("g", "r", "g_in", "g_out"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={v}")
        return " ".join(parts)


def _require(cfg: CompressionConfig, *names: str) -> list[int]:
    values = []
    for name in names:
        v = getattr(cfg, name)
        if v is None:
            raise ConfigError(f"{cfg.kind} requires {name}")
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        values.append(v)
    return values


def validate(cfg: CompressionConfig) -> None:
    """Check divisibility and positivity; raise ConfigError on the first violation."""
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown kind {cfg.kind!r}; expected one of {KINDS}")
    if not isinstance(cfg.m, int) or cfg.m < 1:
        raise ConfigError(f"m must be an integer >= 1, got {cfg.m!r}")
    if not isinstance(cfg.n, int) or cfg.n < 1:
        raise ConfigError(f"n must be an integer >= 1, got {cfg.n!r}")
    if cfg.kind == KIND_DENSE:
        return
    if cfg.kind == KIND_SVD:
        (r,) = _require(cfg, "r")
        if cfg.n % r != 0:
            raise ConfigError("r must divide n")
        return
    if cfg.kind in (KIND_LGP_SHUFFLE, KIND_LGP_DENSE):
        (g,) = _require(cfg, "g")
        if cfg.m % g != 0:
            raise ConfigError("g must divide m")
        if cfg.n % g != 0:
            raise ConfigError("g must divide n")
        if cfg.kind == KIND_LGP_DENSE and cfg.mix_side not in (None, MIX_AFTER, MIX_BEFORE):
            raise ConfigError(f"mix_side must be 'after' or 'before', got {cfg.mix_side!r}")
        return
    # lowrank-lgp
    r, g_in, g_out = _require(cfg, "r", "g_in", "g_out")
    if cfg.n % r != 0:
        raise ConfigError("r must divide n")
    inner = cfg.n // r
    if cfg.n % g_in != 0:
        raise ConfigError("g_in must divide n")
    if inner % g_in != 0:
        raise ConfigError("g_in must divide n/r")
    if cfg.m % g_out != 0:
        raise ConfigError("g_out must divide m")
    if inner % g_out != 0:
        raise ConfigError("g_out must divide n/r")


def _uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    # bound 1/sqrt(fan_in), fan_in = last axis of the stored factor
    bound = 1.0 / np.sqrt(shape[-1])
    return rng.uniform(-bound, bound, size=shape)


def init_weights(cfg: CompressionConfig, seed: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None) -> CompressedLinear:
    """Build an operator with seeded uniform(+-1/sqrt(fan_in)) factor weights.

    Factors are drawn in a fixed order, so the result is bit-identical for a
    given seed.
    """
    validate(cfg)
    if rng is None:
        rng = np.random.default_rng(seed)
    m, n = cfg.m, cfg.n
    if cfg.kind == KIND_DENSE:
        return DenseLinear(_uniform(rng, (m, n)))
    if cfg.kind == KIND_SVD:
        inner = n // cfg.r
        return SVDLinear(_uniform(rng, (m, inner)), _uniform(rng, (inner, n)), cfg.r)
    if cfg.kind == KIND_LGP_SHUFFLE:
        g = cfg.g
        return LGPShuffle(BlockDiagonal(_uniform(rng, (g, m // g, n // g))))
    if cfg.kind == KIND_LGP_DENSE:
        g = cfg.g
        blocks = BlockDiagonal(_uniform(rng, (g, m // g, n // g)))
        side = cfg.mix_side or (MIX_AFTER if m <= n else MIX_BEFORE)
        s = m if side == MIX_AFTER else n
        return LGPDense(blocks, _uniform(rng, (s, s)), mix_side=side)
    inner = n // cfg.r
    d_in = BlockDiagonal(_uniform(rng, (cfg.g_in, inner // cfg.g_in, n // cfg.g_in)))
    mix = _uniform(rng, (inner, inner))
    d_out = BlockDiagonal(_uniform(rng, (cfg.g_out, m // cfg.g_out, inner // cfg.g_out)))
    return LowRankLGP(d_in, mix, d_out, cfg.r)


def cast_operator(op: CompressedLinear, dtype) -> CompressedLinear:
    """Rebuild an operator with factors converted to dtype (float32/float64)."""
    if dtype not in _FLOAT_DTYPES and np.dtype(dtype) not in [np.dtype(d) for d in _FLOAT_DTYPES]:
        raise ConfigError(f"dtype must be float32 or float64, got {dtype}")
    if isinstance(op, DenseLinear):
        return DenseLinear(op.matrix, dtype=dtype)
    if isinstance(op, SVDLinear):
        return SVDLinear(op.p, op.q, op.rank_factor, dtype=dtype)
    if isinstance(op, LGPShuffle):
        return LGPShuffle(BlockDiagonal(op.block_diag.blocks, dtype=dtype))
    if isinstance(op, LGPDense):
        return LGPDense(BlockDiagonal(op.block_diag.blocks, dtype=dtype),
                        op.mix, mix_side=op.mix_side, dtype=dtype)
    if isinstance(op, LowRankLGP):
        return LowRankLGP(BlockDiagonal(op.d_in.blocks, dtype=dtype), op.mix,
                          BlockDiagonal(op.d_out.blocks, dtype=dtype),
                          op.rank_factor, dtype=dtype)
    raise ConfigError(f"unknown operator type {type(op).__name__}")


def from_factors(cfg: CompressionConfig, arrays: dict[str, np.ndarray]) -> CompressedLinear:
    """Reassemble an operator from its named factor arrays (inverse of factors())."""
    validate(cfg)
    if cfg.kind == KIND_DENSE:
        return DenseLinear(arrays["matrix"])
    if cfg.kind == KIND_SVD:
        return SVDLinear(arrays["p"], arrays["q"], cfg.r)
    if cfg.kind == KIND_LGP_SHUFFLE:
        return LGPShuffle(BlockDiagonal(arrays["blocks"]))
    if cfg.kind == KIND_LGP_DENSE:
        side = cfg.mix_side or (MIX_AFTER if cfg.m <= cfg.n else MIX_BEFORE)
        return LGPDense(BlockDiagonal(arrays["blocks"]), arrays["mix"], mix_side=side)
    return LowRankLGP(BlockDiagonal(arrays["d_in"]), arrays["mix"],
                      BlockDiagonal(arrays["d_out"]), cfg.r)
