"""Partner retrieval from a one-sided cue.

A cue on one field reduces the 4D table to a weighted plane over the other
field.  The plane holds every stored object superimposed, so a concrete
partner must be drawn out of it: sample each column's categorical
distribution (random-samples), score a batch of samples by the distance of
their backward reduction to the cue and keep the best (sample-and-test), or
additionally improve each sample by random descent over single-argument
moves (sample-and-search).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .memory import Hamr4D, MemParams, QuantizedFn

_DEFAULT_PARAMS = MemParams()


class Direction(Enum):
    """Which field the cue lives on: A_TO_B reduces by a source-field cue
    and retrieves a target-field object; B_TO_A is the mirror."""

    A_TO_B = "a2b"
    B_TO_A = "b2a"

    @property
    def reverse(self) -> "Direction":
        return Direction.B_TO_A if self is Direction.A_TO_B else Direction.A_TO_B

    @classmethod
    def parse(cls, text: str) -> "Direction":
        for member in cls:
            if member.value == text:
                return member
        raise ValueError(f"unknown direction {text!r}, expected a2b or b2a")


class WeightedPlane:
    """2D nonnegative weight table: rows are arguments, columns are levels."""

    def __init__(self, cells):
        arr = np.ascontiguousarray(cells, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("plane cells must be two-dimensional")
        if arr.size == 0:
            raise ValueError("plane must not be empty")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("plane cells must be finite and nonnegative")
        self.cells = arr

    @property
    def n_args(self) -> int:
        return self.cells.shape[0]

    @property
    def n_levels(self) -> int:
        return self.cells.shape[1]


class EmptyColumnError(ValueError):
    """A plane column carries no weight, so its categorical distribution is
    undefined and no object can be drawn through it."""

    def __init__(self, column: int):
        super().__init__(f"plane column {column} has no nonzero weight")
        self.column = column


@dataclass(frozen=True)
class SearchConfig:
    """Sampling and descent knobs shared by the retrieval methods.

    ``uniform_fallback`` substitutes a uniform distribution for empty plane
    columns instead of failing; off by default so that an unpopulated plane
    stays observable.
    """

    n_samples: int = 128
    descent_budget: int = 800
    rng_seed: int = 0
    uniform_fallback: bool = False

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.descent_budget < 0:
            raise ValueError("descent_budget must be nonnegative")


@dataclass(frozen=True)
class RetrievalOutcome:
    """Retrieved object plus method diagnostics.

    ``object`` is absent exactly when ``failure`` carries a reason.
    ``evaluations`` counts distance evaluations actually performed.
    """

    object: Optional[QuantizedFn]
    distance: float = math.inf
    evaluations: int = 0
    failure: Optional[str] = None

    def __post_init__(self):
        if (self.object is None) == (self.failure is None):
            raise ValueError("exactly one of object and failure must be set")


def _check_fn(plane: WeightedPlane, f: QuantizedFn) -> None:
    if f.n_args != plane.n_args or f.n_levels != plane.n_levels:
        raise ValueError(
            f"function has {f.n_args} args x {f.n_levels} levels, "
            f"plane expects {plane.n_args} x {plane.n_levels}")


def reduce(mem: Hamr4D, cue: QuantizedFn, direction: Direction) -> WeightedPlane:
    """Collapse the 4D table through a cue into the other field's plane.

    For A_TO_B: plane(j, l) = sum_i F'(i) * H(i, j, cue.values[i], l) with
    F' the cue weights normalized by their total (left unnormalized when the
    total is 0).  B_TO_A mirrors the roles.
    """
    n, m, p, q = mem.dims
    if direction is Direction.A_TO_B:
        if cue.n_args != n or cue.n_levels != p:
            raise ValueError(
                f"cue has {cue.n_args} args x {cue.n_levels} levels, "
                f"source field expects {n} x {p}")
        sub = mem.cells[np.arange(n), :, cue.values, :]       # (n, m, q)
    else:
        if cue.n_args != m or cue.n_levels != q:
            raise ValueError(
                f"cue has {cue.n_args} args x {cue.n_levels} levels, "
                f"target field expects {m} x {q}")
        sub = mem.cells[:, np.arange(m), :, cue.values]       # (m, n, p)
    # integer contraction first, one division at the end: scaling the cue
    # weights by a positive constant cannot perturb the plane
    acc = np.einsum("i,ijl->jl", cue.weights, sub)
    s_f = cue.total_weight
    return WeightedPlane(acc / s_f if s_f > 0 else acc.astype(np.float64))


def _support_weights(plane: WeightedPlane, uniform_fallback: bool) -> np.ndarray:
    """Column weights to sample from, uniform where empty if allowed."""
    w = plane.cells
    empty = ~np.any(w > 0, axis=1)
    if not empty.any():
        return w
    if not uniform_fallback:
        raise EmptyColumnError(int(np.flatnonzero(empty)[0]))
    return np.where(empty[:, None], 1.0, w)


def sample_plane(plane: WeightedPlane, rng: np.random.Generator,
                 uniform_fallback: bool = False) -> QuantizedFn:
    """Draw one object: per column j, a level from the categorical
    distribution proportional to the column's weights.  Unit weights on the
    result.  Raises EmptyColumnError on the first weightless column unless
    ``uniform_fallback`` is set.
    """
    w = _support_weights(plane, uniform_fallback)
    totals = w.sum(axis=1)
    cum = np.cumsum(w, axis=1)
    u = rng.random(plane.n_args) * totals
    values = (cum <= u[:, None]).sum(axis=1)
    # u == total can only arise from rounding at the top edge
    values = np.minimum(values, plane.n_levels - 1)
    return QuantizedFn(values, plane.n_levels)


def _column_stats(cells: np.ndarray):
    """(column sums, mean nonzero weight per column) for one plane."""
    sums = cells.sum(axis=1)
    counts = np.count_nonzero(cells, axis=1)
    means = np.divide(sums, counts, out=np.zeros(cells.shape[0]),
                      where=counts > 0)
    return sums, means


def eta_plane(plane: WeightedPlane, f: QuantizedFn,
              params: MemParams = _DEFAULT_PARAMS) -> bool:
    """2D recognition gate for the distance: the function's cell in each
    column must survive iota-thresholding (up to xi violations) and its
    normalized weighted mass must reach kappa times the plane's mean column
    weight."""
    _check_fn(plane, f)
    rows = np.arange(plane.n_args)
    picked = plane.cells[rows, f.values]
    _, col_means = _column_stats(plane.cells)
    violations = int(np.count_nonzero(~(picked > params.iota * col_means)))
    if violations > params.xi:
        return False
    s_f = f.total_weight
    rho = float(picked @ f.weights)
    if s_f > 0:
        rho /= s_f
    return rho >= params.kappa * col_means.mean()


def distance(plane: WeightedPlane, f: QuantizedFn,
             params: MemParams = _DEFAULT_PARAMS) -> float:
    """Weighted mean squared deviation between the plane and the function.

    Infinity when the eta gate rejects.  Per argument i the deviation is the
    plane-weighted mean of (level - f(i))^2 over the column, 0 for an
    all-zero column (such columns already count as eta violations).
    """
    _check_fn(plane, f)
    if f.total_weight <= 0:
        raise ValueError("function has zero total weight")
    if not eta_plane(plane, f, params):
        return math.inf
    levels = np.arange(plane.n_levels)
    sq = (levels[None, :] - f.values[:, None]).astype(np.float64) ** 2
    num = (plane.cells * sq).sum(axis=1)
    den = plane.cells.sum(axis=1)
    d_i = np.divide(num, den, out=np.zeros(plane.n_args), where=den > 0)
    return float((f.weights @ d_i) / f.total_weight)


def neighbor(candidate: QuantizedFn, plane: WeightedPlane,
             rng: np.random.Generator) -> QuantizedFn:
    """Single random-descent move: one argument chosen uniformly, its value
    redrawn uniformly from the column's support excluding the current value.
    Returns an identical copy when the support offers no alternative."""
    _check_fn(plane, candidate)
    arg = int(rng.integers(plane.n_args))
    support = np.flatnonzero(plane.cells[arg] > 0)
    choices = support[support != candidate.values[arg]]
    values = candidate.values.copy()
    if choices.size:
        values[arg] = int(choices[rng.integers(choices.size)])
    return QuantizedFn(values, candidate.n_levels, candidate.weights.copy())


# ----------------------------------------------------------------------
# batched candidate scoring
#
# Candidates live on the target field of the chosen direction.  Transposing
# the table to X[cue_arg, cand_arg, cue_level, cand_level] makes both
# directions one code path.  A candidate's backward plane is
#   B(a, k) = (1/J) * sum_j X[a, j, k, o[j]]
# so per-argument distance terms reduce to ratios of integer gather-sums,
# which single-argument moves update by exact integer deltas.


class _BatchScorer:
    """Scores batches of candidate value vectors by backward distance.

    The fast path applies when iota and kappa are both 0: eta reduces to
    "the cue's cell is nonzero in every column, up to xi misses", and the
    distance needs only three integer gather tables.  Otherwise planes are
    rebuilt from scratch per evaluation, exact but slower.
    """

    def __init__(self, mem: Hamr4D, cue: QuantizedFn, direction: Direction,
                 params: MemParams):
        X = mem.cells if direction is Direction.A_TO_B \
            else mem.cells.transpose(1, 0, 3, 2)
        self.A, self.J, self.K, self.Z = X.shape
        self.cue = cue
        self.params = params
        self.w = cue.weights.astype(np.float64)
        self.s_f = cue.total_weight
        self.fast = params.iota == 0.0 and params.kappa == 0.0
        if self.fast:
            # T0/T1/T2[j, z, a]: column sum, squared-deviation sum, and the
            # cue-level cell of backward column a when candidate arg j holds
            # level z.  T0 is cue-independent, cached on the memory.
            key = ("colsum", direction.value)
            t0 = mem._derived.get(key)
            if t0 is None:
                t0 = np.ascontiguousarray(X.sum(axis=2).transpose(1, 2, 0))
                mem._derived[key] = t0
            self.T0 = t0
            sq = (np.arange(self.K)[None, :] - cue.values[:, None]) ** 2
            self.T1 = np.ascontiguousarray(
                np.einsum("ajkz,ak->jza", X, sq))
            self.T2 = np.ascontiguousarray(
                X[np.arange(self.A), :, cue.values, :].transpose(1, 2, 0))
        else:
            # Xrow[j, z, a, k] = X[a, j, k, z], gathered per candidate arg
            self.Xrow = np.ascontiguousarray(
                X.transpose(1, 3, 0, 2).astype(np.float64))
            self.sq = (np.arange(self.K)[None, :]
                       - cue.values[:, None]).astype(np.float64) ** 2

    # -- fast path ------------------------------------------------------

    def gather_sums(self, cands: np.ndarray):
        """Integer sums (S0, S1, S2) of shape (C, A) for candidate rows."""
        jj = np.arange(self.J)[None, :]
        s0 = self.T0[jj, cands].sum(axis=1)
        s1 = self.T1[jj, cands].sum(axis=1)
        s2 = self.T2[jj, cands].sum(axis=1)
        return s0, s1, s2

    def delta_sums(self, sums, j0: np.ndarray, z_old: np.ndarray,
                   z_new: np.ndarray):
        s0, s1, s2 = sums
        return (s0 + self.T0[j0, z_new] - self.T0[j0, z_old],
                s1 + self.T1[j0, z_new] - self.T1[j0, z_old],
                s2 + self.T2[j0, z_new] - self.T2[j0, z_old])

    def dist_from_sums(self, sums) -> np.ndarray:
        s0, s1, s2 = sums
        violations = np.count_nonzero(s2 == 0, axis=1)
        d_i = np.divide(s1, s0, out=np.zeros(s0.shape, dtype=np.float64),
                        where=s0 > 0)
        d = (d_i @ self.w) / self.s_f
        return np.where(violations <= self.params.xi, d, np.inf)

    # -- generic path ----------------------------------------------------

    def planes_of(self, cands: np.ndarray) -> np.ndarray:
        """Backward planes (C, A, K), exact function of the value vectors."""
        jj = np.arange(self.J)[None, :]
        return self.Xrow[jj, cands].sum(axis=1) / self.J

    def dist_from_planes(self, planes: np.ndarray) -> np.ndarray:
        sums = planes.sum(axis=2)
        counts = np.count_nonzero(planes, axis=2)
        col_means = np.divide(sums, counts,
                              out=np.zeros(sums.shape), where=counts > 0)
        picked = planes[:, np.arange(self.A), self.cue.values]
        violations = np.count_nonzero(
            ~(picked > self.params.iota * col_means), axis=1)
        rho = (picked @ self.w) / self.s_f
        eta_ok = ((violations <= self.params.xi)
                  & (rho >= self.params.kappa * col_means.mean(axis=1)))
        num = np.einsum("cak,ak->ca", planes, self.sq)
        d_i = np.divide(num, sums, out=np.zeros(sums.shape), where=sums > 0)
        d = (d_i @ self.w) / self.s_f
        return np.where(eta_ok, d, np.inf)

    def score(self, cands: np.ndarray) -> np.ndarray:
        if self.fast:
            return self.dist_from_sums(self.gather_sums(cands))
        return self.dist_from_planes(self.planes_of(cands))


class _SupportTable:
    """Per-column support of a plane, laid out for batched uniform draws
    excluding the current value."""

    def __init__(self, plane: WeightedPlane):
        mask = plane.cells > 0
        J, Z = mask.shape
        self.counts = mask.sum(axis=1)
        pos = np.cumsum(mask, axis=1) - 1
        self.pos = np.where(mask, pos, -1)           # rank of z in support
        self.padded = np.full((J, Z), -1, dtype=np.int64)
        jj, zz = np.nonzero(mask)
        self.padded[jj, pos[jj, zz]] = zz

    def propose(self, j0: np.ndarray, current: np.ndarray,
                u: np.ndarray) -> np.ndarray:
        """New values for arguments j0, uniform over support minus the
        current value; current where no alternative exists."""
        cnt = self.counts[j0]
        cur_pos = self.pos[j0, current]
        in_support = cur_pos >= 0
        eff = np.where(in_support, cnt - 1, cnt)
        movable = eff > 0
        idx = (u * eff).astype(np.int64)
        idx = np.minimum(idx, np.maximum(eff - 1, 0))
        idx = np.where(in_support & (idx >= cur_pos), idx + 1, idx)
        drawn = self.padded[j0, np.minimum(idx, self.padded.shape[1] - 1)]
        return np.where(movable, drawn, current)


def _descend(scorer: _BatchScorer, support: _SupportTable, cands: np.ndarray,
             dists: np.ndarray, budget: int, rng: np.random.Generator):
    """Random descent on every candidate row, strict-decrease acceptance,
    ``budget`` proposal evaluations per candidate."""
    C = cands.shape[0]
    rows = np.arange(C)
    sums = scorer.gather_sums(cands) if scorer.fast else None
    for _ in range(budget):
        j0 = rng.integers(0, scorer.J, size=C)
        u = rng.random(C)
        z_old = cands[rows, j0]
        z_new = support.propose(j0, z_old, u)
        if scorer.fast:
            proposed = scorer.delta_sums(sums, j0, z_old, z_new)
            d_new = scorer.dist_from_sums(proposed)
        else:
            trial = cands.copy()
            trial[rows, j0] = z_new
            d_new = scorer.score(trial)
        accept = d_new < dists
        if accept.any():
            cands[rows[accept], j0[accept]] = z_new[accept]
            dists = np.where(accept, d_new, dists)
            if scorer.fast:
                sums = tuple(np.where(accept[:, None], new, old)
                             for new, old in zip(proposed, sums))
    return cands, dists


def _sample_candidates(plane: WeightedPlane, cfg: SearchConfig,
                       rng: np.random.Generator) -> np.ndarray:
    """Distinct sampled value vectors (C, n_args), first-draw order."""
    seen = {}
    for _ in range(cfg.n_samples):
        obj = sample_plane(plane, rng, cfg.uniform_fallback)
        key = obj.values.tobytes()
        if key not in seen:
            seen[key] = obj.values
    return np.stack(list(seen.values()))


def _search(mem: Hamr4D, cue: QuantizedFn, direction: Direction,
            cfg: SearchConfig, params: MemParams,
            budget: int) -> RetrievalOutcome:
    """Shared body of sample-and-test (budget 0) and sample-and-search."""
    plane = reduce(mem, cue, direction)
    rng = np.random.default_rng(cfg.rng_seed)
    try:
        cands = _sample_candidates(plane, cfg, rng)
    except EmptyColumnError as exc:
        return RetrievalOutcome(None, failure=str(exc))
    scorer = _BatchScorer(mem, cue, direction, params)
    dists = scorer.score(cands)
    evaluations = len(cands)
    if budget > 0:
        cands, dists = _descend(scorer, _SupportTable(plane), cands, dists,
                                budget, rng)
        evaluations += len(cands) * budget
    best = int(np.argmin(dists))
    if math.isinf(dists[best]):
        return RetrievalOutcome(
            None, evaluations=evaluations,
            failure=f"all {len(cands)} candidates were rejected "
                    f"by the distance gate")
    obj = QuantizedFn(cands[best], plane.n_levels)
    return RetrievalOutcome(obj, float(dists[best]), evaluations)


def retrieve_rs(mem: Hamr4D, cue: QuantizedFn, direction: Direction,
                cfg: SearchConfig = SearchConfig(),
                params: MemParams = _DEFAULT_PARAMS) -> RetrievalOutcome:
    """Random-samples method: draw one object from the reduced plane.  The
    reported distance is a diagnostic score of that single draw."""
    plane = reduce(mem, cue, direction)
    rng = np.random.default_rng(cfg.rng_seed)
    try:
        obj = sample_plane(plane, rng, cfg.uniform_fallback)
    except EmptyColumnError as exc:
        return RetrievalOutcome(None, failure=str(exc))
    back = reduce(mem, obj, direction.reverse)
    return RetrievalOutcome(obj, distance(back, cue, params), evaluations=1)


def retrieve_st(mem: Hamr4D, cue: QuantizedFn, direction: Direction,
                cfg: SearchConfig = SearchConfig(),
                params: MemParams = _DEFAULT_PARAMS) -> RetrievalOutcome:
    """Sample-and-test: score n_samples draws by the distance between their
    backward reduction and the cue, return the earliest minimum."""
    return _search(mem, cue, direction, cfg, params, budget=0)


def retrieve_ss(mem: Hamr4D, cue: QuantizedFn, direction: Direction,
                cfg: SearchConfig = SearchConfig(),
                params: MemParams = _DEFAULT_PARAMS) -> RetrievalOutcome:
    """Sample-and-search: sample-and-test plus random descent on every
    sampled candidate, accepting only strict distance decreases, spending
    descent_budget evaluations per candidate."""
    return _search(mem, cue, direction, cfg, params,
                   budget=cfg.descent_budget)
