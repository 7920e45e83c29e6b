"""Upper bound on Eve's information per sifted symbol.

The bound is a maximum over two independent point sets ``x`` and ``y``, each
a vector of N+1 non-negative reals summing to 2. The numerator splits into
an x-only and a y-only sum while the denominator is constant on the
constraint set, so each part is maximised on its own.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .core import ParameterError, check_L

SIMPLEX_TOTAL = 2.0
SIMPLEX_TOL = 1e-12
MAX_LATTICE_POINTS = 1_000_000
N_STARTS = 5
_CHUNK = 1 << 16


class BoundNotApplicable(ParameterError):
    """Photon-number threshold too large for the packet size."""


class Method(str, enum.Enum):
    GRID_ORACLE = "grid_oracle"
    REFINED = "refined"


@dataclass(frozen=True)
class SimplexPoint:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise ParameterError("a simplex point needs at least two entries")
        if min(vals) < 0:
            raise ParameterError(f"simplex entries must be >= 0, got {vals}")
        if abs(math.fsum(vals) - SIMPLEX_TOTAL) > SIMPLEX_TOL:
            raise ParameterError(f"simplex entries must sum to 2, got {math.fsum(vals)!r}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_array(cls, arr) -> "SimplexPoint":
        arr = np.clip(np.asarray(arr, dtype=float), 0.0, None)
        # absorb rounding drift into the largest entry
        arr[np.argmax(arr)] += SIMPLEX_TOTAL - math.fsum(arr)
        return cls(tuple(arr))

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class BoundResult:
    L: int
    N: int
    iae_upper: float
    argmax_x: SimplexPoint
    argmax_y: SimplexPoint
    method: Method

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "N": self.N,
            "iae_upper": self.iae_upper,
            "argmax_x": list(self.argmax_x.values),
            "argmax_y": list(self.argmax_y.values),
            "method": self.method.value,
        }


def _xlog4(v):
    # v * log4(v) with 0 * log 0 = 0; log4 taken as log2 / 2
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] * np.log2(v[pos]) / 2.0
    return out


def _f(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = x + y
    # (s/4) log4(s/2) = (s/2)/2 * log4(s/2); same for the other two terms
    return -_xlog4(x / 4.0) - _xlog4(y / 4.0) + _xlog4(s / 2.0) / 2.0


def f_entropy(x: float, y: float) -> float:
    """-(x/4)log4(x/4) - (y/4)log4(y/4) + ((x+y)/4)log4((x+y)/2), 0*log0 := 0.

    >>> f_entropy(1.0, 1.0)
    0.5
    """
    if x < 0 or y < 0:
        raise ValueError(f"f_entropy needs x, y >= 0, got ({x}, {y})")
    return float(_f(x, y))


def check_threshold(L: int, N: int) -> None:
    check_L(L)
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N!r}")
    if N > L // 2 - 1:
        raise BoundNotApplicable(f"N exceeds L/2-1 (N={N}, L={L}, L/2-1={L // 2 - 1})")


def denominator(L: int) -> float:
    return 0.5 * ((L - 1) + (L / 2 - 1))


def x_part(L: int, N: int, x: np.ndarray) -> np.ndarray:
    """x-dependent numerator, vectorised over the leading axis of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    total = (L - N - 1) * x[:, N] / 8.0
    for n in range(1, N + 1):
        total = total + _f((L - n) * x[:, n - 1], n * x[:, n])
    return total


def y_part(L: int, N: int, y: np.ndarray) -> np.ndarray:
    """y-dependent numerator, vectorised over the leading axis of ``y``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    total = (L / 2 - N - 1) * y[:, N] / 16.0
    for n in range(1, N + 1):
        total = total + _f((L / 2 - n) / 2.0 * y[:, n - 1], n / 2.0 * y[:, n])
    return total


def iae_objective(L: int, N: int, x, y) -> float:
    """Objective whose maximum over both point sets is the information bound."""
    check_threshold(L, N)
    x = x if isinstance(x, SimplexPoint) else SimplexPoint(tuple(x))
    y = y if isinstance(y, SimplexPoint) else SimplexPoint(tuple(y))
    if len(x) != N + 1 or len(y) != N + 1:
        raise ParameterError(f"point sets must have N+1={N + 1} entries")
    num = x_part(L, N, np.asarray(x))[0] + y_part(L, N, np.asarray(y))[0]
    return float(num / denominator(L))


def lattice_resolution(dim: int, max_points: int = MAX_LATTICE_POINTS) -> int:
    """Largest m whose lattice {k in N^dim : sum k = m} has at most max_points points."""
    lo, hi = 1, max_points
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if math.comb(mid + dim - 1, dim - 1) <= max_points:
            lo = mid
        else:
            hi = mid - 1
    return lo


def simplex_lattice(dim: int, m: int) -> np.ndarray:
    """All compositions of m into dim non-negative parts, in lexicographic order."""
    dtype = np.int32
    rows = np.zeros((1, 0), dtype=dtype)
    rem = np.array([m], dtype=np.int64)
    for _ in range(dim - 1):
        counts = rem + 1
        parent = np.repeat(np.arange(len(rows)), counts)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        vals = (np.arange(counts.sum()) - starts).astype(dtype)
        rows = np.column_stack([rows[parent], vals])
        rem = rem[parent] - vals
    return np.column_stack([rows, rem.astype(dtype)])


def _evaluate(evaluator, pts: np.ndarray) -> np.ndarray:
    out = np.empty(len(pts))
    for i in range(0, len(pts), _CHUNK):
        out[i:i + _CHUNK] = evaluator(pts[i:i + _CHUNK])
    return out


def _pattern_search(evaluator, start: np.ndarray, h0: float, tol: float = 1e-13):
    """Compass search along pairwise mass transfers e_i - e_j, deterministic."""
    dim = len(start)
    src, dst = np.nonzero(~np.eye(dim, dtype=bool))  # move mass from src to dst
    p = start.copy()
    best = float(evaluator(p[None, :])[0])
    h = h0
    while h > tol:
        t = np.minimum(h, p[src])
        ok = t > 0
        if not ok.any():
            break
        cand = np.repeat(p[None, :], ok.sum(), axis=0)
        rows = np.arange(len(cand))
        cand[rows, src[ok]] -= t[ok]
        cand[rows, dst[ok]] += t[ok]
        vals = evaluator(cand)
        k = int(np.argmax(vals))
        if vals[k] > best:
            p, best = cand[k], float(vals[k])
            h = min(2.0 * h, SIMPLEX_TOTAL)
        else:
            h *= 0.5
    return p, best


def maximize_separable(
    dim: int,
    evaluator: Callable[[np.ndarray], np.ndarray],
    *,
    max_points: int = MAX_LATTICE_POINTS,
    n_starts: int = N_STARTS,
    refine: bool = True,
) -> tuple[SimplexPoint, float]:
    """Maximise ``evaluator`` over {v >= 0, sum v = 2} in ``dim`` dimensions.

    ``evaluator`` maps an (M, dim) array to M values. A lattice of at most
    ``max_points`` points is scanned, then the best ``n_starts`` lattice
    points are refined by compass search. Ties go to the lexicographically
    smallest point.
    """
    if dim < 2:
        raise ParameterError("dim must be >= 2")
    m = lattice_resolution(dim, max_points)
    step = SIMPLEX_TOTAL / m
    lattice = simplex_lattice(dim, m)
    vals = _evaluate(evaluator, lattice * step)
    order = np.argsort(-vals, kind="stable")
    if not refine:
        k = order[0]
        return SimplexPoint.from_array(lattice[k] * step), float(vals[k])

    results = []
    for k in order[:n_starts]:
        p, v = _pattern_search(evaluator, lattice[k] * step, step)
        results.append((-v, tuple(p), p))
    results.sort(key=lambda item: item[:2])
    _, _, p = results[0]
    point = SimplexPoint.from_array(p)
    return point, float(evaluator(np.asarray(point)[None, :])[0])


def _maximize_parts(L, N, **kw):
    xp, xv = maximize_separable(N + 1, lambda a: x_part(L, N, a), **kw)
    yp, yv = maximize_separable(N + 1, lambda a: y_part(L, N, a), **kw)
    return xp, xv, yp, yv


@lru_cache(maxsize=None)
def iae_upper(L: int, N: int) -> BoundResult:
    """Maximum of the information bound for L pulses and at most N photons."""
    check_threshold(L, N)
    xp, xv, yp, yv = _maximize_parts(L, N)
    return BoundResult(L, N, float((xv + yv) / denominator(L)), xp, yp, Method.REFINED)


def grid_oracle(L: int, N: int, step: float = 0.005) -> BoundResult:
    """Exhaustive lattice maximum with the given spacing, no refinement."""
    check_threshold(L, N)
    m = round(SIMPLEX_TOTAL / step)
    if not math.isclose(m * step, SIMPLEX_TOTAL):
        raise ParameterError(f"step must divide 2 evenly, got {step}")
    pts = simplex_lattice(N + 1, m) * (SIMPLEX_TOTAL / m)
    xv = _evaluate(lambda a: x_part(L, N, a), pts)
    yv = _evaluate(lambda a: y_part(L, N, a), pts)
    i, j = int(np.argmax(xv)), int(np.argmax(yv))
    return BoundResult(
        L, N, float((xv[i] + yv[j]) / denominator(L)),
        SimplexPoint.from_array(pts[i]), SimplexPoint.from_array(pts[j]), Method.GRID_ORACLE,
    )
