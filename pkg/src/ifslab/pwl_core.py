"""Piecewise-linear interval maps and the two-map random iteration built from them.

The maps here are continuous, strictly increasing, piecewise-linear bijections
of [0, 1].  Points close to 1 are the numerically delicate region: the maps of
interest contract toward the endpoints, and a state like 1 - 1e-40 is
indistinguishable from 1.0 in a plain float.  Every map therefore carries its
node table twice, once as (x, y) and once as exact complements (1-x, 1-y), and
:class:`UnitPoint` stores whichever of x and 1-x is small.  Orbit arithmetic
near 1 then happens on tiny complements, where float64 has full relative
precision, instead of on doubles glued to 1.0.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "UnitPoint",
    "PwlMap",
    "Ifs",
    "Word",
    "AmParams",
    "am_map",
    "am_ifs",
    "compose_word",
    "compose_word_point",
    "conjugated_eval",
]

#: slack accepted when validating that an argument lies in [0, 1]
DOMAIN_SLACK = 1e-15


def _check_unit(x: float, what: str) -> float:
    """Validate x in [0, 1] up to DOMAIN_SLACK and clamp the slack away."""
    if not math.isfinite(x):
        raise ValueError(f"{what} must be finite, got {x!r}")
    if x < -DOMAIN_SLACK or x > 1.0 + DOMAIN_SLACK:
        raise ValueError(f"{what} must lie in [0, 1], got {x!r}")
    return min(max(x, 0.0), 1.0)


@dataclass(frozen=True, slots=True)
class UnitPoint:
    """A point of [0, 1] stored as the smaller of x and 1 - x plus a side flag.

    Attributes
    ----------
    raw:
        The stored coordinate.  Equals x when ``flipped`` is False and 1 - x
        when ``flipped`` is True.
    flipped:
        True when the point is represented through its distance to 1.

    The representation keeps full relative precision at both endpoints, so an
    orbit that collapses onto 1 can still report a meaningful distance to 1
    (down to ~1e-300) long after ``float(x) == 1.0``.
    """

    raw: float
    flipped: bool = False

    @classmethod
    def from_value(cls, x: float) -> "UnitPoint":
        x = _check_unit(float(x), "point")
        if x > 0.5:
            return cls(1.0 - x, True)  # exact: Sterbenz subtraction for x >= 0.5
        return cls(x, False)

    @classmethod
    def from_complement(cls, w: float) -> "UnitPoint":
        """Build the point 1 - w from its distance-to-1 coordinate w."""
        w = _check_unit(float(w), "complement")
        if w > 0.5:
            return cls(1.0 - w, False)
        return cls(w, True)

    @property
    def value(self) -> float:
        """The point as a plain float (rounds to 1.0 for tiny complements)."""
        return 1.0 - self.raw if self.flipped else self.raw

    @property
    def complement(self) -> float:
        """Distance to 1, exact even when ``value`` rounds to 1.0."""
        return self.raw if self.flipped else 1.0 - self.raw

    def __float__(self) -> float:
        return self.value


def _as_float_array(values: Iterable[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"{name} must be a 1-d sequence with at least 2 entries")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


class PwlMap:
    """A continuous, strictly increasing, piecewise-linear map of [0, 1].

    Parameters
    ----------
    nodes_x, nodes_y:
        Breakpoint coordinates.  ``nodes_x`` must start at 0, end at 1 and be
        strictly increasing; ``nodes_y`` must be strictly increasing and stay
        inside [0, 1].
    comp_x, comp_y:
        Optional exact complements ``1 - nodes_x`` and ``1 - nodes_y``.  When a
        node value such as 1 - c is itself a rounded float, the caller may know
        the complement (c) exactly; passing it keeps upper-branch slopes and
        evaluations near 1 exact.  Defaults to the float subtraction.

    Segment slopes are derived from complement differences on the upper half of
    the domain, so a map whose upper branch has true slope 2c reports exactly
    ``2*c`` even when its node value ``1 - c`` is not exactly representable.
    """

    __slots__ = ("nodes_x", "nodes_y", "comp_x", "comp_y", "slopes", "_rcx")

    def __init__(
        self,
        nodes_x: Sequence[float],
        nodes_y: Sequence[float],
        comp_x: Sequence[float] | None = None,
        comp_y: Sequence[float] | None = None,
    ):
        x = _as_float_array(nodes_x, "nodes_x")
        y = _as_float_array(nodes_y, "nodes_y")
        if x.shape != y.shape:
            raise ValueError("nodes_x and nodes_y must have equal length")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("nodes_x must start at 0 and end at 1")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise ValueError("nodes must be strictly increasing in both coordinates")
        if y[0] < 0.0 or y[-1] > 1.0:
            raise ValueError("nodes_y must stay within [0, 1]")

        cx = 1.0 - x if comp_x is None else _as_float_array(comp_x, "comp_x")
        cy = 1.0 - y if comp_y is None else _as_float_array(comp_y, "comp_y")
        if cx.shape != x.shape or cy.shape != x.shape:
            raise ValueError("complement nodes must match nodes in length")
        # complements must round back to the stated nodes
        if np.max(np.abs((1.0 - cx) - x)) > 1e-15 or np.max(np.abs((1.0 - cy) - y)) > 1e-15:
            raise ValueError("complement nodes disagree with nodes")

        slopes = np.empty(x.size - 1)
        for j in range(x.size - 1):
            if x[j] >= 0.5:
                slopes[j] = (cy[j] - cy[j + 1]) / (cx[j] - cx[j + 1])
            else:
                slopes[j] = (y[j + 1] - y[j]) / (x[j + 1] - x[j])

        self.nodes_x = x
        self.nodes_y = y
        self.comp_x = cx
        self.comp_y = cy
        self.slopes = slopes
        self._rcx = cx[::-1].copy()  # ascending complements, for bisection

    # -- scalar evaluation ------------------------------------------------

    def step_point(self, p: UnitPoint) -> UnitPoint:
        """Apply the map to a dual-represented point, staying in dual form.

        The output side flag is chosen so the stored coordinate is the one
        with full relative precision: an image in the upper half of [0, 1] is
        produced directly as a distance to 1 through the complement nodes,
        never as ``1 - value``.
        """
        x, y, cx, cy, s = self.nodes_x, self.nodes_y, self.comp_x, self.comp_y, self.slopes
        n = x.size
        if not p.flipped:
            v = p.raw
            j = min(max(bisect_right(x, v) - 1, 0), n - 2)
            out = y[j] + s[j] * (v - x[j])
            if out > 0.5:
                return UnitPoint(float(cy[j + 1] + s[j] * (x[j + 1] - v)), True)
            return UnitPoint(float(out), False)
        w = p.raw  # distance to 1
        j = min(max(n - 2 - (bisect_right(self._rcx, w) - 1), 0), n - 2)
        out_c = cy[j + 1] + s[j] * (w - cx[j + 1])
        if out_c > 0.5:
            return UnitPoint(float(y[j] + s[j] * (cx[j] - w)), False)
        return UnitPoint(float(out_c), True)

    def eval(self, x: float) -> float:
        """Evaluate the map at a scalar x in [0, 1]."""
        return self.step_point(UnitPoint.from_value(x)).value

    def invert_point(self, q: UnitPoint) -> UnitPoint:
        """Preimage of a dual-represented point under the map."""
        x, y, cx, cy, s = self.nodes_x, self.nodes_y, self.comp_x, self.comp_y, self.slopes
        n = x.size
        if not q.flipped:
            u = q.raw
            if u < y[0] or u > y[-1]:
                raise ValueError(f"value {u!r} outside the range [{y[0]}, {y[-1]}]")
            j = min(max(bisect_right(y, u) - 1, 0), n - 2)
            out = x[j] + (u - y[j]) / s[j]
            if out > 0.5:
                return UnitPoint(float(cx[j + 1] + (y[j + 1] - u) / s[j]), True)
            return UnitPoint(float(out), False)
        wu = q.raw
        if wu < cy[-1] or wu > cy[0]:
            raise ValueError("value outside the map range")
        j = min(max(n - 2 - (bisect_right(cy[::-1], wu) - 1), 0), n - 2)
        out_c = cx[j + 1] + (wu - cy[j + 1]) / s[j]
        if out_c > 0.5:
            return UnitPoint(float(x[j] + (cy[j] - wu) / s[j]), False)
        return UnitPoint(float(out_c), True)

    def invert(self, u: float) -> float:
        """Scalar inverse.  Raises ValueError outside the range of the map."""
        u = float(u)
        if not math.isfinite(u):
            raise ValueError("value must be finite")
        lo, hi = self.nodes_y[0], self.nodes_y[-1]
        if u < lo - DOMAIN_SLACK or u > hi + DOMAIN_SLACK:
            raise ValueError(f"value {u!r} outside the range [{lo}, {hi}]")
        u = min(max(u, lo), hi)
        return self.invert_point(UnitPoint.from_value(u)).value

    def __call__(self, x: float) -> float:
        return self.eval(x)

    # -- vectorized evaluation -------------------------------------------

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized evaluation by linear interpolation of the node table."""
        xs = np.asarray(xs, dtype=float)
        if xs.size and (np.nanmin(xs) < -DOMAIN_SLACK or np.nanmax(xs) > 1.0 + DOMAIN_SLACK):
            raise ValueError("eval_array input outside [0, 1]")
        out = np.interp(np.clip(xs, 0.0, 1.0), self.nodes_x, self.nodes_y)
        return np.clip(out, self.nodes_y[0], self.nodes_y[-1])

    def invert_array(self, us: np.ndarray) -> np.ndarray:
        """Vectorized inverse by interpolation of the transposed node table."""
        us = np.asarray(us, dtype=float)
        lo, hi = self.nodes_y[0], self.nodes_y[-1]
        if us.size and (np.nanmin(us) < lo - DOMAIN_SLACK or np.nanmax(us) > hi + DOMAIN_SLACK):
            raise ValueError("invert_array input outside the map range")
        return np.interp(np.clip(us, lo, hi), self.nodes_y, self.nodes_x)

    def step_arrays(self, v: np.ndarray, flip: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`step_point` on parallel (raw, flipped) arrays.

        Bit-for-bit identical to the scalar path: the same segment anchors and
        the same operation order are used, so scalar and vector trajectories
        driven by identical symbols coincide exactly.
        """
        x, y, cx, cy, s = self.nodes_x, self.nodes_y, self.comp_x, self.comp_y, self.slopes
        n = x.size
        v = np.asarray(v, dtype=float)
        flip = np.asarray(flip, dtype=bool)
        out_v = np.empty_like(v)
        out_f = np.empty_like(flip)

        direct = ~flip
        if np.any(direct):
            vd = v[direct]
            j = np.clip(np.searchsorted(x, vd, side="right") - 1, 0, n - 2)
            lower = y[j] + s[j] * (vd - x[j])
            cross = lower > 0.5
            res = np.where(cross, cy[j + 1] + s[j] * (x[j + 1] - vd), lower)
            out_v[direct] = res
            out_f[direct] = cross
        if np.any(flip):
            w = v[flip]
            j = np.clip(n - 2 - (np.searchsorted(self._rcx, w, side="right") - 1), 0, n - 2)
            upper = cy[j + 1] + s[j] * (w - cx[j + 1])
            cross = upper > 0.5
            res = np.where(cross, y[j] + s[j] * (cx[j] - w), upper)
            out_v[flip] = res
            out_f[flip] = ~cross
        return out_v, out_f


class Ifs:
    """A finite family of increasing PWL maps with selection probabilities."""

    __slots__ = ("maps", "weights", "am_c")

    def __init__(self, maps: Sequence[PwlMap], weights: Sequence[float], am_c: float | None = None):
        if len(maps) == 0:
            raise ValueError("need at least one map")
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(maps),):
            raise ValueError("weights must match the number of maps")
        if np.any(w <= 0.0):
            raise ValueError("weights must be strictly positive")
        if abs(math.fsum(w.tolist()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        self.maps = tuple(maps)
        self.weights = w
        #: set when the family is the two-map equal-weight family with
        #: parameter c; enables a closed-form fast path in simulation kernels
        self.am_c = am_c

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    def step_arrays(
        self, v: np.ndarray, flip: np.ndarray, symbols: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Apply map ``symbols[i]`` (1-based) to state i, vectorized."""
        symbols = np.asarray(symbols)
        if symbols.size and (symbols.min() < 1 or symbols.max() > len(self.maps)):
            raise ValueError(f"symbols must lie in 1..{len(self.maps)}")
        out_v = np.empty_like(np.asarray(v, dtype=float))
        out_f = np.empty(out_v.shape, dtype=bool)
        for k, mp in enumerate(self.maps, start=1):
            mask = symbols == k
            if np.any(mask):
                out_v[mask], out_f[mask] = mp.step_arrays(
                    np.asarray(v, dtype=float)[mask], np.asarray(flip, dtype=bool)[mask]
                )
        return out_v, out_f


@dataclass(frozen=True, slots=True)
class Word:
    """A finite sequence of 1-based map indices, applied first symbol first."""

    symbols: tuple[int, ...]

    def __post_init__(self):
        if any((not isinstance(s, (int, np.integer))) or s < 1 for s in self.symbols):
            raise ValueError("symbols must be integers >= 1")
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[int]:
        return iter(self.symbols)

    def validate_for(self, ifs: Ifs) -> None:
        if any(s > ifs.n_maps for s in self.symbols):
            raise ValueError("word contains an index beyond the family size")


def compose_word_point(ifs: Ifs, word: Word, p: UnitPoint) -> UnitPoint:
    """Apply the maps named by ``word`` in order, first symbol innermost."""
    word.validate_for(ifs)
    for sym in word:
        p = ifs.maps[sym - 1].step_point(p)
    return p


def compose_word(ifs: Ifs, word: Word, x: float) -> float:
    return compose_word_point(ifs, word, UnitPoint.from_value(x)).value


# -- the two-map family ---------------------------------------------------


def _check_c(c: float) -> float:
    c = float(c)
    if not (0.0 < c < 0.5):
        raise ValueError(f"parameter c must lie strictly between 0 and 1/2, got {c!r}")
    return c


@dataclass(frozen=True, slots=True)
class AmParams:
    """Derived constants of the two-map family at parameter c.

    Attributes
    ----------
    c:
        Slope parameter in (0, 1/2).
    x0:
        Preimage of 1/2 under the steep map, ``1 / (4 (1 - c))``.  The point
        where the drift function's square-root profile flattens out.
    d:
        Average-contraction factor ``(sqrt(2)/2) (sqrt(1-c) + sqrt(c))``,
        always < 1 on (0, 1/2).
    """

    c: float
    x0: float
    d: float

    @classmethod
    def from_c(cls, c: float) -> "AmParams":
        c = _check_c(c)
        x0 = 1.0 / (4.0 * (1.0 - c))
        d = (math.sqrt(2.0) / 2.0) * (math.sqrt(1.0 - c) + math.sqrt(c))
        return cls(c=c, x0=x0, d=d)


def am_map(c: float, index: int) -> PwlMap:
    """One of the two maps of the family: index 1 is steep below 1/2.

    Map 1 has slope 2(1-c) on [0, 1/2] and slope 2c above; map 2 swaps the
    two slopes.  Both fix 0 and 1 and cross height 1/2 only at their middle
    node.  Complement nodes are supplied exactly: the node value 1 - c is a
    rounded float, but its complement c is exact, which keeps the upper-branch
    identity 1 - f(x) = 2c(1 - x) exact in float arithmetic.
    """
    c = _check_c(c)
    if index == 1:
        return PwlMap(
            nodes_x=(0.0, 0.5, 1.0),
            nodes_y=(0.0, 1.0 - c, 1.0),
            comp_x=(1.0, 0.5, 0.0),
            comp_y=(1.0, c, 0.0),
        )
    if index == 2:
        return PwlMap(
            nodes_x=(0.0, 0.5, 1.0),
            nodes_y=(0.0, c, 1.0),
            comp_x=(1.0, 0.5, 0.0),
            comp_y=(1.0, 1.0 - c, 0.0),
        )
    raise ValueError(f"index must be 1 or 2, got {index!r}")


def am_ifs(c: float) -> Ifs:
    """The equal-weight two-map family at parameter c."""
    return Ifs((am_map(c, 1), am_map(c, 2)), (0.5, 0.5), am_c=_check_c(c))


def conjugated_eval(mp: PwlMap, t: float) -> float:
    """Evaluate the conjugate of ``mp`` by h(x) = tan(pi x / 2) on [0, inf).

    Computes ``h(mp(h^{-1}(t)))`` for t >= 0.  Raises OverflowError when the
    image under ``mp`` rounds to 1.0 exactly, since the conjugated value is
    then beyond float range.
    """
    t = float(t)
    if not math.isfinite(t) or t < 0.0:
        raise ValueError(f"conjugated argument must be finite and >= 0, got {t!r}")
    x = (2.0 / math.pi) * math.atan(t)
    y = mp.eval(x)
    if y >= 1.0:
        raise OverflowError("image rounds to 1; conjugated value exceeds float range")
    return math.tan(0.5 * math.pi * y)


def apply_callable_word(maps: Sequence[Callable[[float], float]], symbols: Iterable[int], x: float) -> float:
    """Reference composition helper for plain callables (used in tests)."""
    for s in symbols:
        x = maps[s - 1](x)
    return x
