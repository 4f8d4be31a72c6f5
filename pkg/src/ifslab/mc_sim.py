"""Trajectory simulation with reproducible counter-based symbol streams.

Reproducibility contract: a master seed plus a stream index fully determines a
symbol stream.  Streams use the Philox counter-based generator with the
128-bit key ``(master_seed mod 2**64) | (stream_index << 64)``, so any subset
of trajectories can be regenerated independently, in any order, on any worker
count, with bit-identical results.  Ensemble reductions use compensated
summation in a fixed order, which keeps reported aggregates byte-stable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .pwl_core import Ifs, UnitPoint
from .measure_ops import DiscreteMeasure, endpoint_limit, wasserstein1

__all__ = [
    "GENERATOR_NAME",
    "SymbolStream",
    "Classification",
    "classify",
    "trajectory",
    "trajectory_points",
    "birkhoff",
    "trajectory_stats",
    "TrajectoryStats",
    "EnsembleReport",
    "EnsembleResult",
    "ensemble",
    "run_ensemble",
    "expectation_at",
]

GENERATOR_NAME = "philox4x64"

_MASK64 = (1 << 64) - 1
_FILL_BLOCK = 512
#: trajectories advanced in lockstep per vectorized block
ENSEMBLE_BLOCK = 8192


def make_generator(master_seed: int, stream_index: int) -> np.random.Generator:
    """The Philox generator for one (master_seed, stream_index) pair."""
    if master_seed < 0 or stream_index < 0:
        raise ValueError("master_seed and stream_index must be >= 0")
    key = (int(master_seed) & _MASK64) | (int(stream_index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _symbols_from_uniforms(u: np.ndarray, cum_weights: np.ndarray) -> np.ndarray:
    # inverse-CDF draw; u == boundary goes to the higher symbol
    return (np.searchsorted(cum_weights, u, side="right") + 1).astype(np.int8)


class _SymbolBuffer:
    """Append-only int8 buffer filled on demand from an absolute-index source."""

    __slots__ = ("data", "fill", "limit")

    def __init__(self, fill: Callable[[int, int], np.ndarray], limit: int | None = None):
        self.data = np.empty(0, dtype=np.int8)
        self.fill = fill
        self.limit = limit

    def ensure(self, upto: int) -> None:
        have = self.data.size
        if upto <= have:
            return
        if self.limit is not None and upto > self.limit:
            raise IndexError(
                f"symbol stream exhausted: asked for {upto} symbols, source has {self.limit}"
            )
        count = max(upto - have, _FILL_BLOCK)
        if self.limit is not None:
            count = min(count, self.limit - have)
        chunk = self.fill(have, count)
        self.data = np.concatenate([self.data, chunk.astype(np.int8)])


class SymbolStream:
    """A lazily generated sequence of 1-based map indices.

    A stream is a window onto a shared symbol buffer; :meth:`shifted` returns
    the one-step-advanced window over the same buffer, so a stream and its
    shift agree symbol for symbol.  Random streams draw through the seeded
    generator described in the module docstring; ``cyclic`` repeats a fixed
    pattern; ``fixed`` replays a finite list and raises IndexError when read
    past its end.
    """

    __slots__ = ("_buf", "offset", "weights", "master_seed", "stream_index", "source")

    def __init__(
        self,
        buf: _SymbolBuffer,
        offset: int,
        weights: np.ndarray | None,
        master_seed: int | None,
        stream_index: int | None,
        source: str,
    ):
        self._buf = buf
        self.offset = offset
        self.weights = weights
        self.master_seed = master_seed
        self.stream_index = stream_index
        self.source = source

    @classmethod
    def random(cls, weights: Sequence[float], master_seed: int, stream_index: int) -> "SymbolStream":
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w <= 0.0):
            raise ValueError("weights must be a nonempty vector of positive numbers")
        if abs(math.fsum(w.tolist()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        cum = np.cumsum(w)
        cum[-1] = 1.0
        gen = make_generator(master_seed, stream_index)

        def fill(_start: int, count: int) -> np.ndarray:
            # the generator advances sequentially; _SymbolBuffer only appends
            return _symbols_from_uniforms(gen.random(count), cum)

        return cls(_SymbolBuffer(fill), 0, w, int(master_seed), int(stream_index), "random")

    @classmethod
    def cyclic(cls, pattern: Sequence[int]) -> "SymbolStream":
        pat = np.asarray(pattern, dtype=np.int8)
        if pat.ndim != 1 or pat.size == 0 or np.any(pat < 1):
            raise ValueError("pattern must be a nonempty sequence of indices >= 1")

        def fill(start: int, count: int) -> np.ndarray:
            return pat[(start + np.arange(count)) % pat.size]

        return cls(_SymbolBuffer(fill), 0, None, None, None, "cyclic")

    @classmethod
    def fixed(cls, symbols: Sequence[int]) -> "SymbolStream":
        arr = np.asarray(symbols, dtype=np.int8)
        if arr.ndim != 1 or np.any(arr < 1):
            raise ValueError("symbols must be indices >= 1")

        def fill(start: int, count: int) -> np.ndarray:
            return arr[start : start + count]

        return cls(_SymbolBuffer(fill, limit=arr.size), 0, None, None, None, "fixed")

    def take(self, n: int) -> np.ndarray:
        """The first n symbols of this stream as an int8 array (a copy)."""
        if n < 0:
            raise ValueError("n must be >= 0")
        self._buf.ensure(self.offset + n)
        return self._buf.data[self.offset : self.offset + n].copy()

    def symbol(self, k: int) -> int:
        """The k-th symbol (0-based)."""
        if k < 0:
            raise ValueError("k must be >= 0")
        self._buf.ensure(self.offset + k + 1)
        return int(self._buf.data[self.offset + k])

    def first_symbol(self) -> int:
        return self.symbol(0)

    def shifted(self) -> "SymbolStream":
        """The same stream with its first symbol dropped (shared buffer)."""
        return SymbolStream(
            self._buf, self.offset + 1, self.weights, self.master_seed, self.stream_index, self.source
        )


# -- classification -------------------------------------------------------


class Classification(enum.Enum):
    TO_ZERO = "to_zero"
    TO_ONE = "to_one"
    UNDECIDED = "undecided"


def classify(p: "UnitPoint | float", threshold: float = 1e-6) -> Classification:
    """Endpoint classification of a state by distance to 0 or to 1.

    The distance to 1 is read from the dual representation, so a state that
    prints as 1.0 but sits at 1 - 1e-200 is still classified correctly.
    """
    if not (0.0 < threshold < 0.5):
        raise ValueError(f"threshold must lie in (0, 0.5), got {threshold!r}")
    if not isinstance(p, UnitPoint):
        p = UnitPoint.from_value(float(p))
    if p.complement <= threshold:
        return Classification.TO_ONE
    if p.value <= threshold:
        return Classification.TO_ZERO
    return Classification.UNDECIDED


# -- scalar trajectory walks ----------------------------------------------


def trajectory_points(ifs: Ifs, x: float, n: int, stream: SymbolStream) -> list[UnitPoint]:
    """States Z_0 .. Z_n of the chain started at x, driven by ``stream``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    syms = stream.take(n)
    if syms.size and (syms.min() < 1 or syms.max() > ifs.n_maps):
        raise ValueError("stream contains a symbol beyond the family size")
    p = UnitPoint.from_value(x)
    out = [p]
    for s in syms:
        p = ifs.maps[s - 1].step_point(p)
        out.append(p)
    return out


def trajectory(ifs: Ifs, x: float, n: int, stream: SymbolStream) -> np.ndarray:
    """Float values of Z_0 .. Z_n (length n + 1)."""
    return np.asarray([p.value for p in trajectory_points(ifs, x, n, stream)])


def birkhoff(ifs: Ifs, phi: Callable, x: float, n: int, stream: SymbolStream) -> float:
    """Time average of phi over Z_1 .. Z_n along one trajectory.

    Terms are accumulated with exact (fsum) summation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = trajectory_points(ifs, x, n, stream)
    return math.fsum(float(phi(p.value)) for p in pts[1:]) / n


@dataclass(frozen=True, slots=True)
class TrajectoryStats:
    """Summary of one finished trajectory."""

    start: float
    steps: int
    final_value: float
    final_complement: float
    birkhoff_value: float | None
    classification: Classification

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "steps": self.steps,
            "final_value": self.final_value,
            "final_complement": self.final_complement,
            "birkhoff_value": self.birkhoff_value,
            "classification": self.classification.value,
        }


def trajectory_stats(
    ifs: Ifs,
    x: float,
    n: int,
    stream: SymbolStream,
    phi: Callable | None = None,
    threshold: float = 1e-6,
) -> TrajectoryStats:
    pts = trajectory_points(ifs, x, n, stream)
    final = pts[-1]
    bk = None
    if phi is not None and n >= 1:
        bk = math.fsum(float(phi(p.value)) for p in pts[1:]) / n
    return TrajectoryStats(
        start=float(UnitPoint.from_value(x).value),
        steps=n,
        final_value=final.value,
        final_complement=final.complement,
        birkhoff_value=bk,
        classification=classify(final, threshold),
    )


# -- vectorized ensemble kernel -------------------------------------------


def _block_symbols(
    weights: np.ndarray, master_seed: int, stream_lo: int, stream_hi: int, n: int
) -> np.ndarray:
    """Symbols for streams [lo, hi) as an int8 matrix of shape (hi-lo, n)."""
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    out = np.empty((stream_hi - stream_lo, n), dtype=np.int8)
    for row, j in enumerate(range(stream_lo, stream_hi)):
        u = make_generator(master_seed, j).random(n)
        out[row] = _symbols_from_uniforms(u, cum)
    return out


def _kahan_add(sums: np.ndarray, comp: np.ndarray, term: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = term - comp
    t = sums + y
    comp = (t - sums) - y
    return t, comp


def _run_streams(
    ifs: Ifs,
    starts_v: np.ndarray,
    starts_flip: np.ndarray,
    n: int,
    m: int,
    master_seed: int,
    phi: Callable | None = None,
    stream_lo: int = 0,
    block: int = ENSEMBLE_BLOCK,
):
    """Advance S start rows under m shared symbol streams for n steps.

    ``starts_v``/``starts_flip`` have shape (S,) (every stream starts each
    row's single point: common-random-number coupling across rows) or (S, m)
    (per-stream start columns).  Stream j uses index ``stream_lo + j``.

    Returns (final_v, final_flip, kahan_sums) with shape (S, m); kahan_sums
    is None when phi is None, else holds sum_{k=1..n} phi(Z_k) per
    trajectory.
    """
    starts_v = np.asarray(starts_v, dtype=float)
    starts_flip = np.asarray(starts_flip, dtype=bool)
    per_stream = starts_v.ndim == 2
    S = starts_v.shape[0]
    final_v = np.empty((S, m))
    final_f = np.empty((S, m), dtype=bool)
    sums = np.zeros((S, m)) if phi is not None else None

    fast = ifs.am_c is not None
    if fast:
        a1 = float(ifs.maps[0].slopes[0])
        a2 = float(ifs.maps[0].slopes[1])
        cnode = float(ifs.maps[0].comp_y[1])

    for lo in range(0, m, block):
        hi = min(lo + block, m)
        width = hi - lo
        syms = _block_symbols(ifs.weights, master_seed, stream_lo + lo, stream_lo + hi, n)
        if per_stream:
            v = starts_v[:, lo:hi].copy()
            flip = starts_flip[:, lo:hi].copy()
        else:
            v = np.broadcast_to(starts_v[:, None], (S, width)).copy()
            flip = np.broadcast_to(starts_flip[:, None], (S, width)).copy()
        bsum = np.zeros((S, width)) if phi is not None else None
        bcomp = np.zeros((S, width)) if phi is not None else None

        for k in range(n):
            col = syms[:, k]  # shared across start rows: coupled driving noise
            if fast:
                mult = np.where((col[None, :] == 1) ^ flip, a1, a2)
                y = mult * v
                cross = y > 0.5
                v = np.where(cross, cnode + a1 * (0.5 - v), y)
                flip = flip ^ cross
            else:
                for r in range(S):
                    v[r], flip[r] = ifs.step_arrays(v[r], flip[r], col)
            if phi is not None:
                values = np.where(flip, 1.0 - v, v)
                bsum, bcomp = _kahan_add(bsum, bcomp, phi(values))

        final_v[:, lo:hi] = v
        final_f[:, lo:hi] = flip
        if phi is not None:
            sums[:, lo:hi] = bsum
    return final_v, final_f, sums


# -- ensemble reports -----------------------------------------------------


@dataclass(frozen=True, slots=True)
class EnsembleReport:
    """Aggregate statistics over independent trajectories from one start."""

    start: float
    steps: int
    trajectories: int
    master_seed: int
    generator: str
    threshold: float
    phi: str | None
    mean_birkhoff: float | None
    stderr_birkhoff: float | None
    fraction_to_zero: float
    fraction_to_one: float
    fraction_undecided: float
    w1_to_endpoint_law: float

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "steps": self.steps,
            "trajectories": self.trajectories,
            "master_seed": self.master_seed,
            "generator": self.generator,
            "threshold": self.threshold,
            "phi": self.phi,
            "mean_birkhoff": self.mean_birkhoff,
            "stderr_birkhoff": self.stderr_birkhoff,
            "fraction_to_zero": self.fraction_to_zero,
            "fraction_to_one": self.fraction_to_one,
            "fraction_undecided": self.fraction_undecided,
            "w1_to_endpoint_law": self.w1_to_endpoint_law,
        }


@dataclass(slots=True)
class EnsembleResult:
    """Report plus the per-trajectory arrays behind it."""

    report: EnsembleReport
    final_values: np.ndarray
    final_complements: np.ndarray
    birkhoff_values: np.ndarray | None
    classifications: np.ndarray = field(repr=False)  # int8 codes 0/1/2


#: names for the int8 classification codes stored in EnsembleResult
CLASS_NAMES = ("to_zero", "to_one", "undecided")


def _mean_std(values: np.ndarray) -> tuple[float, float]:
    mvals = values.size
    mean = math.fsum(values.tolist()) / mvals
    if mvals < 2:
        return mean, 0.0
    var = math.fsum(((values - mean) ** 2).tolist()) / (mvals - 1)
    return mean, math.sqrt(var / mvals)


def run_ensemble(
    ifs: Ifs,
    phi: Callable | None,
    x: float,
    n: int,
    m: int,
    master_seed: int,
    threshold: float = 1e-6,
) -> EnsembleResult:
    """Simulate m independent trajectories of length n from x; reduce.

    Trajectory j is driven by stream (master_seed, j).  Results are invariant
    under the internal block size: regenerating any single stream reproduces
    its trajectory exactly.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    p0 = UnitPoint.from_value(x)
    fv, ff, sums = _run_streams(
        ifs, np.array([p0.raw]), np.array([p0.flipped]), n, m, master_seed, phi=phi
    )
    values = np.where(ff[0], 1.0 - fv[0], fv[0])
    complements = np.where(ff[0], fv[0], 1.0 - fv[0])

    to_one = complements <= threshold
    to_zero = ~to_one & (values <= threshold)
    undecided = ~to_one & ~to_zero
    codes = np.where(to_zero, 0, np.where(to_one, 1, 2)).astype(np.int8)

    bvals = None
    mean_bk = stderr_bk = None
    if phi is not None:
        bvals = sums[0] / n
        mean_bk, stderr_bk = _mean_std(bvals)

    empirical = DiscreteMeasure.from_samples(values)
    w1 = wasserstein1(empirical, endpoint_limit(x))

    report = EnsembleReport(
        start=float(p0.value),
        steps=n,
        trajectories=m,
        master_seed=int(master_seed),
        generator=GENERATOR_NAME,
        threshold=threshold,
        phi=getattr(phi, "descriptor", None) if phi is not None else None,
        mean_birkhoff=mean_bk,
        stderr_birkhoff=stderr_bk,
        fraction_to_zero=float(np.count_nonzero(to_zero)) / m,
        fraction_to_one=float(np.count_nonzero(to_one)) / m,
        fraction_undecided=float(np.count_nonzero(undecided)) / m,
        w1_to_endpoint_law=w1,
    )
    return EnsembleResult(
        report=report,
        final_values=values,
        final_complements=complements,
        birkhoff_values=bvals,
        classifications=codes,
    )


def ensemble(
    ifs: Ifs,
    phi: Callable | None,
    x: float,
    n: int,
    m: int,
    master_seed: int,
    threshold: float = 1e-6,
) -> EnsembleReport:
    return run_ensemble(ifs, phi, x, n, m, master_seed, threshold).report


def expectation_at(
    ifs: Ifs, phi: Callable, x: float, n: int, m: int, master_seed: int
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, stderr) of E[phi(Z_n)] from start x."""
    if n < 0 or m < 1:
        raise ValueError("n must be >= 0 and m >= 1")
    p0 = UnitPoint.from_value(x)
    if n == 0:
        return float(phi(p0.value)), 0.0
    fv, ff, _ = _run_streams(ifs, np.array([p0.raw]), np.array([p0.flipped]), n, m, master_seed)
    values = np.where(ff[0], 1.0 - fv[0], fv[0])
    return _mean_std(np.asarray(phi(values), dtype=float))
