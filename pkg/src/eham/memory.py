"""Four-dimensional associative weight table over pairs of quantized functions.

A memory holds relations between a source function (``n`` arguments, ``p``
levels) and a target function (``m`` arguments, ``q`` levels).  Each stored
pair reinforces one cell per (source argument, target argument) position, so
the table is a dense int64 array of shape ``(n, m, p, q)`` whose cells
saturate at a fixed cap.  Recognition tests a pair against the table through
a per-plane mean-weight threshold, and the table's Shannon entropy summarizes
how diffuse the stored relation is.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

SNAPSHOT_MAGIC = b"EHAM"
SNAPSHOT_VERSION = 1
DEFAULT_CAP = 65535

ArrayLike = Union[Sequence[int], np.ndarray]


class QuantizedFn:
    """A total function from argument index to quantized level, with weights.

    ``values[i]`` is the level assigned to argument ``i`` and must lie in
    ``[0, n_levels)``.  ``weights[i]`` is a nonnegative integer multiplicity,
    1 for every argument unless the caller supplies its own.

    Args:
        values: level per argument, one-dimensional.
        n_levels: number of quantization levels (at least 1).
        weights: optional per-argument weights, same length as ``values``.
    """

    def __init__(self, values: ArrayLike, n_levels: int,
                 weights: Optional[ArrayLike] = None):
        vals = np.ascontiguousarray(values, dtype=np.int64)
        if vals.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if vals.size == 0:
            raise ValueError("values must not be empty")
        n_levels = int(n_levels)
        if n_levels < 1:
            raise ValueError("n_levels must be at least 1")
        if np.any(vals < 0) or np.any(vals >= n_levels):
            raise ValueError(f"values must lie in [0, {n_levels})")
        if weights is None:
            w = np.ones(vals.size, dtype=np.int64)
        else:
            w = np.ascontiguousarray(weights, dtype=np.int64)
            if w.shape != vals.shape:
                raise ValueError("weights must have the same length as values")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
        self.values = vals
        self.weights = w
        self.n_levels = n_levels

    @property
    def n_args(self) -> int:
        return self.values.size

    @property
    def total_weight(self) -> int:
        """Sum of the argument weights (the function's total mass)."""
        return int(self.weights.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantizedFn):
            return NotImplemented
        return (self.n_levels == other.n_levels
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"QuantizedFn(n_args={self.n_args}, "
                f"n_levels={self.n_levels}, values={self.values.tolist()})")


@dataclass(frozen=True)
class MemParams:
    """Recognition parameters.

    ``iota`` scales the per-plane mean weight used as the keep threshold,
    ``kappa`` scales the table-wide mean weight in the support test, and
    ``xi`` is the number of threshold violations tolerated before a pair is
    rejected.
    """

    iota: float = 0.0
    kappa: float = 0.0
    xi: int = 0

    def __post_init__(self):
        if self.iota < 0:
            raise ValueError("iota must be nonnegative")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.xi < 0:
            raise ValueError("xi must be nonnegative")


@dataclass(frozen=True)
class PairCue:
    """A (source, target) pair of quantized functions presented together."""

    fa: QuantizedFn
    fb: QuantizedFn

    @property
    def total_weight(self) -> int:
        """Total mass of the induced relation: product of the two sides."""
        return self.fa.total_weight * self.fb.total_weight


class RecognitionResult(NamedTuple):
    accepted: bool
    violations: int
    rho: float
    degenerate: bool = False


class Hamr4D:
    """Dense saturating weight table over (n, m, p, q).

    Registration adds each pair's weight product into one cell per
    (source argument, target argument) plane and clips at ``cap``.  Derived
    statistics (mean nonzero weights, entropy) are computed on demand; the
    per-plane mean grid is cached and invalidated on write.

    Args:
        n: source arguments.
        m: target arguments.
        p: source levels.
        q: target levels.
        cap: saturation bound for every cell, at least 1.
    """

    def __init__(self, n: int, m: int, p: int, q: int, cap: int = DEFAULT_CAP):
        dims = (int(n), int(m), int(p), int(q))
        if any(d < 1 for d in dims):
            raise ValueError("all dimensions must be at least 1")
        cap = int(cap)
        if cap < 1:
            raise ValueError("cap must be at least 1")
        self.cells = np.zeros(dims, dtype=np.int64)
        self.cap = cap
        self._version = 0
        self._stats_version = -1
        self._stats: tuple = ()
        # scratch computed by the retrieval engine, keyed by (name, ...);
        # cleared on every write so stale tensors cannot leak across fills
        self._derived: dict = {}

    @property
    def dims(self) -> tuple:
        return self.cells.shape

    @property
    def version(self) -> int:
        """Write counter; bumps once per registration."""
        return self._version

    # ------------------------------------------------------------------
    # validation helpers

    def _check_pair(self, cue: PairCue) -> None:
        n, m, p, q = self.dims
        fa, fb = cue.fa, cue.fb
        if fa.n_args != n or fa.n_levels != p:
            raise ValueError(
                f"source side has {fa.n_args} args x {fa.n_levels} levels, "
                f"memory expects {n} x {p}")
        if fb.n_args != m or fb.n_levels != q:
            raise ValueError(
                f"target side has {fb.n_args} args x {fb.n_levels} levels, "
                f"memory expects {m} x {q}")

    def _check_plane(self, i: int, j: int) -> None:
        n, m = self.dims[0], self.dims[1]
        if not (0 <= i < n and 0 <= j < m):
            raise ValueError(f"plane index ({i}, {j}) outside ({n}, {m})")

    # ------------------------------------------------------------------
    # writes

    def register(self, cue: PairCue) -> None:
        """Store a pair: add its weight product into every touched cell.

        Cell (i, j, fa(i), fb(j)) gains ``fa.weights[i] * fb.weights[j]``
        and saturates at the cap.  Registration is idempotent only at
        saturation; repeated pairs otherwise keep reinforcing.
        """
        self._check_pair(cue)
        fa, fb = cue.fa, cue.fb
        n, m = self.dims[0], self.dims[1]
        rows = np.arange(n)[:, None]
        cols = np.arange(m)[None, :]
        ks = fa.values[:, None]
        ls = fb.values[None, :]
        add = fa.weights[:, None] * fb.weights[None, :]
        cur = self.cells[rows, cols, ks, ls]
        self.cells[rows, cols, ks, ls] = np.minimum(cur + add, self.cap)
        self._version += 1
        self._derived.clear()

    # ------------------------------------------------------------------
    # derived statistics

    def _omega(self) -> tuple:
        """(per-plane mean nonzero weight (n, m), table-wide mean) cached."""
        if self._stats_version != self._version:
            sums = self.cells.sum(axis=(2, 3))
            counts = np.count_nonzero(self.cells, axis=(2, 3))
            grid = np.divide(sums, counts,
                             out=np.zeros(sums.shape, dtype=np.float64),
                             where=counts > 0)
            self._stats = (grid, float(grid.mean()))
            self._stats_version = self._version
        return self._stats

    def omega_pair(self, i: int, j: int) -> float:
        """Mean of the nonzero weights in plane (i, j); 0.0 if all-zero."""
        self._check_plane(i, j)
        return float(self._omega()[0][i, j])

    def omega_mean(self) -> float:
        """Mean of omega_pair over all n*m planes."""
        return self._omega()[1]

    def thresholded(self, params: MemParams, i: int, j: int,
                    k: int, l: int) -> int:
        """Cell weight after thresholding: kept only if strictly above
        ``iota`` times the plane's mean nonzero weight, else 0."""
        self._check_plane(i, j)
        n, m, p, q = self.dims
        if not (0 <= k < p and 0 <= l < q):
            raise ValueError(f"level index ({k}, {l}) outside ({p}, {q})")
        w = int(self.cells[i, j, k, l])
        return w if w > params.iota * self._omega()[0][i, j] else 0

    def recognize(self, cue: PairCue,
                  params: MemParams = MemParams()) -> RecognitionResult:
        """Test whether a pair is supported by the thresholded table.

        A position (i, j) with nonzero cue weight violates when its cell
        does not survive the ``iota`` threshold.  The pair is accepted when
        violations do not exceed ``xi`` and the cue-weighted mean cell
        weight ``rho`` reaches ``kappa`` times the table-wide mean.  A cue
        with zero total weight is degenerate: every position counts as a
        violation and ``rho`` is 0.
        """
        self._check_pair(cue)
        fa, fb = cue.fa, cue.fb
        n, m = self.dims[0], self.dims[1]
        rows = np.arange(n)[:, None]
        cols = np.arange(m)[None, :]
        touched = self.cells[rows, cols, fa.values[:, None], fb.values[None, :]]
        wprod = fa.weights[:, None] * fb.weights[None, :]
        grid, grid_mean = self._omega()
        s_r = int(wprod.sum())
        if s_r == 0:
            # degenerate cue: every position counts against it
            violations = n * m
            rho = 0.0
            accepted = violations <= params.xi and rho >= params.kappa * grid_mean
            return RecognitionResult(accepted, violations, rho, degenerate=True)
        kept = touched > params.iota * grid
        violations = int(np.count_nonzero((wprod > 0) & ~kept))
        # integer accumulation, one final division: scaling the cue weights
        # by a common factor leaves rho bit-identical
        rho = float(int((touched * wprod).sum()) / s_r)
        accepted = violations <= params.xi and rho >= params.kappa * grid_mean
        return RecognitionResult(accepted, violations, rho)

    def entropy_pair(self, i: int, j: int) -> float:
        """Shannon entropy in bits of plane (i, j) normalized by its total
        weight; 0.0 for an all-zero plane."""
        self._check_plane(i, j)
        plane = self.cells[i, j]
        total = plane.sum()
        if total == 0:
            return 0.0
        pr = plane[plane > 0] / total
        return float(-(pr * np.log2(pr)).sum())

    def entropy(self) -> float:
        """Mean of entropy_pair over all n*m planes."""
        totals = self.cells.sum(axis=(2, 3), keepdims=True)
        pr = self.cells / np.maximum(totals, 1)
        logs = np.log2(np.where(pr > 0, pr, 1.0))
        per_plane = -(pr * logs).sum(axis=(2, 3))
        return float(per_plane.mean())

    # ------------------------------------------------------------------
    # snapshot format: magic, version, dims, cap, then big-endian u16 cells
    # in row-major order
    #
    #   offset  size  field
    #   0       4     b"EHAM"
    #   4       2     format version (u16 BE) == 1
    #   6       16    n, m, p, q (u32 BE each)
    #   22      4     cap (u32 BE)
    #   26      2*n*m*p*q   cells (u16 BE)

    def save(self, path) -> None:
        """Write the snapshot; cells above 65535 do not fit and raise."""
        n, m, p, q = self.dims
        if int(self.cells.max()) > 0xFFFF:
            raise ValueError("cell weight exceeds the 16-bit snapshot range")
        if self.cap > 0xFFFFFFFF:
            raise ValueError("cap exceeds the 32-bit snapshot range")
        header = SNAPSHOT_MAGIC + struct.pack(">H", SNAPSHOT_VERSION)
        header += struct.pack(">IIIII", n, m, p, q, self.cap)
        body = self.cells.astype(">u2").tobytes(order="C")
        Path(path).write_bytes(header + body)

    @classmethod
    def load(cls, path) -> "Hamr4D":
        data = Path(path).read_bytes()
        if len(data) < 26:
            raise ValueError(f"{path}: snapshot shorter than the 26-byte header")
        if data[:4] != SNAPSHOT_MAGIC:
            raise ValueError(
                f"{path}: bad magic {data[:4]!r} at offset 0, "
                f"expected {SNAPSHOT_MAGIC!r}")
        (version,) = struct.unpack(">H", data[4:6])
        if version != SNAPSHOT_VERSION:
            raise ValueError(
                f"{path}: unsupported snapshot version {version} at offset 4")
        n, m, p, q, cap = struct.unpack(">IIIII", data[6:26])
        expected = 26 + 2 * n * m * p * q
        if len(data) != expected:
            raise ValueError(
                f"{path}: {len(data)} bytes, expected {expected} "
                f"for dims ({n}, {m}, {p}, {q}); truncated at offset {min(len(data), expected)}")
        mem = cls(n, m, p, q, cap)
        cells = np.frombuffer(data, dtype=">u2", offset=26).astype(np.int64)
        cells = cells.reshape(n, m, p, q)
        if int(cells.max()) > cap:
            raise ValueError(f"{path}: cell weight above the stored cap {cap}")
        mem.cells[:] = cells
        return mem
