"""Finitely supported measures on [0, 1] and the transfer/Koopman pair.

Two independent code paths compute the same pairing and are cross-checked in
tests: pushing a measure forward atom by atom (:func:`push_n` then integrate)
and averaging a test function over the full word tree (:func:`dual_apply`).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .pwl_core import Ifs, UnitPoint, _check_unit

__all__ = [
    "DiscreteMeasure",
    "TestFunction",
    "MassMismatchError",
    "DepthExceededError",
    "push",
    "push_n",
    "dual_apply",
    "cesaro_dual",
    "wasserstein1",
    "endpoint_limit",
]

#: default gap under which neighbouring atoms are merged after a push
MERGE_TOL_DEFAULT = 1e-13

#: hard default on word-tree depth; atom/leaf counts grow like 2^n
DEPTH_CAP_DEFAULT = 25


class MassMismatchError(ValueError):
    """Raised when comparing measures whose total masses differ."""


class DepthExceededError(ValueError):
    """Raised when an exact word-tree enumeration would be too deep."""


class DiscreteMeasure:
    """A nonnegative measure supported on finitely many points of [0, 1].

    Atoms are kept sorted by position.  Construction optionally merges atoms
    closer than ``merge_tol`` (weighted-mean position, summed weight); merging
    is greedy on consecutive gaps, so a chain of near-duplicates collapses to
    one atom.  Zero-weight atoms are dropped, negative weights are rejected.
    """

    __slots__ = ("positions", "weights")

    def __init__(
        self,
        positions: Iterable[float],
        weights: Iterable[float],
        merge_tol: float = 0.0,
    ):
        pos = np.asarray(positions, dtype=float).ravel()
        wts = np.asarray(weights, dtype=float).ravel()
        if pos.shape != wts.shape:
            raise ValueError("positions and weights must have equal length")
        if pos.size and not (np.all(np.isfinite(pos)) and np.all(np.isfinite(wts))):
            raise ValueError("positions and weights must be finite")
        if np.any(wts < 0.0):
            raise ValueError("weights must be nonnegative")
        keep = wts > 0.0
        pos, wts = pos[keep], wts[keep]
        if pos.size and (pos.min() < -1e-15 or pos.max() > 1.0 + 1e-15):
            raise ValueError("positions must lie in [0, 1]")
        pos = np.clip(pos, 0.0, 1.0)

        order = np.argsort(pos, kind="stable")
        pos, wts = pos[order], wts[order]
        if merge_tol > 0.0 and pos.size > 1:
            gap = np.diff(pos)
            starts = np.flatnonzero(np.concatenate(([True], gap > merge_tol)))
            if starts.size < pos.size:
                group_w = np.add.reduceat(wts, starts)
                group_pw = np.add.reduceat(pos * wts, starts)
                pos = group_pw / group_w
                wts = group_w
        self.positions = pos
        self.weights = wts

    # -- construction -----------------------------------------------------

    @classmethod
    def point(cls, x: float) -> "DiscreteMeasure":
        return cls([_check_unit(float(x), "position")], [1.0])

    @classmethod
    def from_samples(cls, samples: Iterable[float]) -> "DiscreteMeasure":
        """Empirical probability measure; exact duplicates share one atom."""
        arr = np.asarray(samples, dtype=float).ravel()
        if arr.size == 0:
            raise ValueError("need at least one sample")
        vals, counts = np.unique(arr, return_counts=True)
        return cls(vals, counts / arr.size)

    # -- basic queries -----------------------------------------------------

    def __len__(self) -> int:
        return int(self.positions.size)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist())

    def is_probability(self, tol: float = 1e-12) -> bool:
        return abs(self.total_mass - 1.0) <= tol

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of ``fn`` (vectorized on positions) against the measure."""
        if len(self) == 0:
            return 0.0
        vals = np.asarray(fn(self.positions), dtype=float)
        return math.fsum((self.weights * vals).tolist())

    def mass_of_interval(self, lo: float, hi: float) -> float:
        """Mass of the closed interval [lo, hi]."""
        if hi < lo:
            raise ValueError("interval endpoints out of order")
        sel = (self.positions >= lo) & (self.positions <= hi)
        return math.fsum(self.weights[sel].tolist())

    def cdf(self, grid: np.ndarray) -> np.ndarray:
        """Right-continuous CDF evaluated on ``grid``."""
        cw = np.concatenate(([0.0], np.cumsum(self.weights)))
        idx = np.searchsorted(self.positions, np.asarray(grid, dtype=float), side="right")
        return cw[idx]

    def quantize(self, cells: int) -> "DiscreteMeasure":
        """Snap atoms to a uniform grid of ``cells`` cells, summing weights.

        Coarse-grains the support to at most ``cells + 1`` atoms while moving
        each atom by at most half a cell width.  Used to keep long iterated
        pushforwards of many-atom measures from growing without bound.
        """
        if cells < 1:
            raise ValueError("cells must be >= 1")
        snapped = np.round(self.positions * cells) / cells
        vals, inverse = np.unique(snapped, return_inverse=True)
        wts = np.zeros(vals.size)
        np.add.at(wts, inverse, self.weights)
        return DiscreteMeasure(vals, wts)

    # -- serialization -----------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "atoms": [[float(p), float(w)] for p, w in zip(self.positions, self.weights)],
            "total_mass": self.total_mass,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DiscreteMeasure":
        atoms = obj["atoms"]
        return cls([a[0] for a in atoms], [a[1] for a in atoms])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["position", "weight"])
        for p, w in zip(self.positions, self.weights):
            writer.writerow(["%.17g" % p, "%.17g" % w])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:2] != ["position", "weight"]:
            raise ValueError("expected a position,weight header")
        pos = [float(r[0]) for r in rows[1:] if r]
        wts = [float(r[1]) for r in rows[1:] if r]
        return cls(pos, wts)

    def __repr__(self) -> str:
        return f"DiscreteMeasure({len(self)} atoms, mass={self.total_mass:.6g})"


class TestFunction:
    """Bounded piecewise-linear observable on [0, 1] with cached features.

    Four shapes cover everything the laboratory needs:

    - ``tent(a)``: value 1 at 0, linear down to 0 at ``a``, then 0.  Compactly
      supported away from 1, nonincreasing.
    - ``ramp(b)``: 0 at 0, linear up to 1 at ``b``, then flat 1.  Nondecreasing
      and constant near 1.
    - ``constant(v)``: the constant function.
    - ``pwl(nodes)``: generic continuous piecewise-linear interpolant.

    Cached attributes: ``value_at_0``, ``sup_norm``, ``limit_at_1``.
    """

    __slots__ = ("kind", "params", "_xs", "_ys", "value_at_0", "sup_norm", "limit_at_1")

    #: keeps pytest from collecting this class by its Test- prefix
    __test__ = False

    def __init__(self, kind: str, params: tuple, xs: np.ndarray, ys: np.ndarray):
        self.kind = kind
        self.params = params
        self._xs = xs
        self._ys = ys
        self.value_at_0 = float(ys[0])
        self.sup_norm = float(np.max(np.abs(ys)))
        self.limit_at_1 = float(ys[-1])

    @classmethod
    def _from_nodes(cls, kind: str, params: tuple, nodes: Sequence[tuple[float, float]]) -> "TestFunction":
        xs = np.asarray([n[0] for n in nodes], dtype=float)
        ys = np.asarray([n[1] for n in nodes], dtype=float)
        if xs.size < 2 or xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
            raise ValueError("nodes must run from x=0 to x=1 with increasing x")
        if not np.all(np.isfinite(ys)):
            raise ValueError("node values must be finite")
        return cls(kind, params, xs, ys)

    @classmethod
    def tent(cls, a: float) -> "TestFunction":
        a = float(a)
        if not (0.0 < a < 1.0):
            raise ValueError(f"tent width must lie in (0, 1), got {a!r}")
        return cls._from_nodes("tent", (a,), [(0.0, 1.0), (a, 0.0), (1.0, 0.0)])

    @classmethod
    def ramp(cls, b: float) -> "TestFunction":
        b = float(b)
        if not (0.0 < b < 1.0):
            raise ValueError(f"ramp knee must lie in (0, 1), got {b!r}")
        return cls._from_nodes("ramp", (b,), [(0.0, 0.0), (b, 1.0), (1.0, 1.0)])

    @classmethod
    def constant(cls, v: float) -> "TestFunction":
        v = float(v)
        if not math.isfinite(v):
            raise ValueError("constant value must be finite")
        return cls._from_nodes("const", (v,), [(0.0, v), (1.0, v)])

    @classmethod
    def pwl(cls, nodes: Sequence[tuple[float, float]]) -> "TestFunction":
        return cls._from_nodes("pwl", (tuple((float(a), float(b)) for a, b in nodes),), nodes)

    def __call__(self, y):
        arr = np.asarray(y, dtype=float)
        out = np.interp(arr, self._xs, self._ys)
        if np.ndim(y) == 0:
            return float(out)
        return out

    def scaled(self, factor: float) -> "TestFunction":
        """The pointwise multiple ``factor * phi`` as a new TestFunction."""
        factor = float(factor)
        if self.kind == "const":
            return TestFunction.constant(self.params[0] * factor)
        nodes = list(zip(self._xs.tolist(), (self._ys * factor).tolist()))
        return TestFunction._from_nodes("pwl", (tuple(nodes),), nodes)

    @property
    def is_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self._ys) >= 0.0))

    @property
    def is_constant_near_1(self) -> bool:
        """True when the last linear piece is flat."""
        return bool(self._ys[-1] == self._ys[-2])

    @property
    def is_compactly_supported_in_01(self) -> bool:
        """True when the function vanishes on a neighbourhood of 1."""
        flat_zero_tail = self._ys[-1] == 0.0 and self._ys[-2] == 0.0
        return bool(flat_zero_tail and self._xs[-2] < 1.0)

    @property
    def descriptor(self) -> str:
        if self.kind == "tent":
            return f"tent:{self.params[0]:g}"
        if self.kind == "ramp":
            return f"ramp:{self.params[0]:g}"
        if self.kind == "const":
            return f"const:{self.params[0]:g}"
        return "pwl:" + json.dumps([[float(a), float(b)] for a, b in zip(self._xs, self._ys)])

    @classmethod
    def parse(cls, text: str) -> "TestFunction":
        """Parse a ``kind:value`` descriptor as accepted on the command line.

        ``tent:0.5``, ``ramp:0.9``, ``const:1.0``, ``pwl:[[0,0],[0.5,1],[1,1]]``
        or ``pwl:@nodes.json`` (nodes loaded from a JSON file).
        """
        kind, sep, arg = text.partition(":")
        if not sep:
            raise ValueError(f"test function descriptor needs kind:value, got {text!r}")
        kind = kind.strip().lower()
        arg = arg.strip()
        if kind == "tent":
            return cls.tent(float(arg))
        if kind == "ramp":
            return cls.ramp(float(arg))
        if kind in ("const", "constant"):
            return cls.constant(float(arg))
        if kind == "pwl":
            if arg.startswith("@"):
                with open(arg[1:], "r", encoding="utf-8") as fh:
                    nodes = json.load(fh)
            else:
                nodes = json.loads(arg)
            return cls.pwl([(float(a), float(b)) for a, b in nodes])
        raise ValueError(f"unknown test function kind {kind!r}")

    def __repr__(self) -> str:
        return f"TestFunction({self.descriptor})"


# -- pushforward ----------------------------------------------------------


def push(ifs: Ifs, mu: DiscreteMeasure, merge_tol: float = MERGE_TOL_DEFAULT) -> DiscreteMeasure:
    """One transfer-operator step: mix the pushforwards under every map."""
    if len(mu) == 0:
        return mu
    parts_p = [mp.eval_array(mu.positions) for mp in ifs.maps]
    parts_w = [w * mu.weights for w in ifs.weights]
    return DiscreteMeasure(np.concatenate(parts_p), np.concatenate(parts_w), merge_tol=merge_tol)


def push_n(
    ifs: Ifs,
    x: float,
    n: int,
    merge_tol: float = MERGE_TOL_DEFAULT,
    depth_cap: int = DEPTH_CAP_DEFAULT,
) -> DiscreteMeasure:
    """Exact n-step pushforward of the point mass at x.

    Raises DepthExceededError when ``n`` exceeds ``depth_cap``: the support
    holds up to ``2**n`` atoms, so deep exact pushforwards are refused rather
    than silently approximated.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > depth_cap:
        raise DepthExceededError(f"n={n} exceeds the exact enumeration cap {depth_cap}")
    mu = DiscreteMeasure.point(x)
    for _ in range(n):
        mu = push(ifs, mu, merge_tol=merge_tol)
    return mu


# -- word-tree averaging (Koopman side) -----------------------------------

#: tree depth handled in one vectorized block; prefixes above it are walked
#: scalar so peak memory stays ~2**_TAIL_DEPTH states
_TAIL_DEPTH = 20


def _tail_level_sums(
    ifs: Ifs,
    phi: Callable,
    v0: float,
    f0: bool,
    w0: float,
    depth: int,
    sums: np.ndarray,
    offset: int,
    want: Callable[[int], bool],
) -> None:
    """Accumulate sum over the subtree below one state, level by level."""
    v = np.array([v0])
    flip = np.array([f0], dtype=bool)
    wts = np.array([w0])
    for t in range(1, depth + 1):
        new_v = np.empty(v.size * ifs.n_maps)
        new_f = np.empty(v.size * ifs.n_maps, dtype=bool)
        new_w = np.empty(v.size * ifs.n_maps)
        for k, mp in enumerate(ifs.maps):
            sl = slice(k * v.size, (k + 1) * v.size)
            new_v[sl], new_f[sl] = mp.step_arrays(v, flip)
            new_w[sl] = wts * ifs.weights[k]
        v, flip, wts = new_v, new_f, new_w
        if want(offset + t):
            values = np.where(flip, 1.0 - v, v)
            sums[offset + t] += float(np.dot(wts, phi(values)))


def _level_sums(ifs: Ifs, phi: Callable, x: float, n: int, want: Callable[[int], bool]) -> np.ndarray:
    """sums[k] = E_word[ phi(word_k(x)) ] for each requested level k <= n.

    Walks word prefixes depth-first down to ``n - _TAIL_DEPTH`` as scalars,
    then sweeps each remaining subtree with vectorized level passes.
    """
    sums = np.zeros(n + 1)
    if want(0):
        sums[0] = phi(UnitPoint.from_value(x).value)
    prefix_depth = max(0, n - _TAIL_DEPTH)

    def visit(p: UnitPoint, w: float, depth: int) -> None:
        if depth > 0 and want(depth):
            sums[depth] += w * phi(p.value)
        if depth == min(prefix_depth, n):
            if depth < n:
                _tail_level_sums(ifs, phi, p.raw, p.flipped, w, n - depth, sums, depth, want)
            return
        for k, mp in enumerate(ifs.maps):
            visit(mp.step_point(p), w * float(ifs.weights[k]), depth + 1)

    visit(UnitPoint.from_value(x), 1.0, 0)
    return sums


def dual_apply(
    ifs: Ifs,
    phi: Callable,
    x: float,
    n: int,
    depth_cap: int = DEPTH_CAP_DEFAULT,
) -> float:
    """n-fold Koopman average of ``phi`` at x over the full word tree.

    Equals integrating ``phi`` against :func:`push_n` of the point mass at x;
    the two are computed by disjoint code and cross-checked in tests.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > depth_cap:
        raise DepthExceededError(f"n={n} exceeds the exact enumeration cap {depth_cap}")
    sums = _level_sums(ifs, phi, x, n, want=lambda k: k == n)
    return float(sums[n])


def cesaro_dual(
    ifs: Ifs,
    phi: Callable,
    x: float,
    n: int,
    depth_cap: int = DEPTH_CAP_DEFAULT,
) -> float:
    """Average of the first n Koopman powers (levels 1..n) of phi at x."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > depth_cap:
        raise DepthExceededError(f"n={n} exceeds the exact enumeration cap {depth_cap}")
    sums = _level_sums(ifs, phi, x, n, want=lambda k: 1 <= k <= n)
    return math.fsum(sums[1:].tolist()) / n


# -- distances and limits -------------------------------------------------


def wasserstein1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact 1-Wasserstein distance between equal-mass discrete measures.

    Integrates |F_mu - F_nu| over the merged breakpoint grid, which is exact
    for step CDFs.  Raises MassMismatchError when masses differ by more than
    1e-9.
    """
    if abs(mu.total_mass - nu.total_mass) > 1e-9:
        raise MassMismatchError(
            f"total masses differ: {mu.total_mass!r} vs {nu.total_mass!r}"
        )
    if len(mu) == 0 or len(nu) == 0:
        return 0.0
    grid = np.union1d(mu.positions, nu.positions)
    if grid.size == 1:
        return 0.0
    diff = np.abs(mu.cdf(grid[:-1]) - nu.cdf(grid[:-1]))
    return float(np.dot(diff, np.diff(grid)))


def endpoint_limit(x: float) -> DiscreteMeasure:
    """The two-point endpoint law (1-x) at 0 plus x at 1.

    This is the n -> infinity limit of the n-step pushforward of the point
    mass at x for the two-map family; degenerate x in {0, 1} yields a single
    atom.
    """
    x = _check_unit(float(x), "start point")
    return DiscreteMeasure([0.0, 1.0], [1.0 - x, x])
