"""Backward-iteration synchronization thresholds and their statistics.

For a fixed symbol sequence, applying the inverse maps of the first n symbols
in reverse order to any interior seed converges to a single point: the
threshold separating forward orbits that fall to 0 from those that rise to 1.
Two seeds (1/4 and 3/4) are tracked; monotonicity of the inverse maps makes
them a bracket for every interior seed, so their final gap is a direct error
indicator for the returned midpoint.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .pwl_core import Ifs, UnitPoint
from .mc_sim import (
    Classification,
    SymbolStream,
    _run_streams,
    classify,
    make_generator,
    trajectory_points,
)

__all__ = [
    "SyncSample",
    "UndecidedError",
    "Agreement",
    "upsilon",
    "upsilon_sample",
    "ks_uniform",
    "equivariance_residual",
    "threshold_agreement",
    "agreement_counts",
]

SEED_LO = 0.25
SEED_HI = 0.75
#: backward depths are examined at multiples of this chunk; each examination
#: recomposes the full inverse word exactly, so no per-step drift accumulates
RECOMP_CHUNK = 64
TOL_DEFAULT = 1e-12
MAX_DEPTH_DEFAULT = 10_000
#: half-width of the |x - upsilon| band excluded from agreement statistics
EXCLUSION_BAND = 1e-3

#: stream index reserved for auxiliary draws (start points of paired samples),
#: far above any trajectory index in use
AUX_STREAM_INDEX = 2**32


class UndecidedError(RuntimeError):
    """A backward bracket failed to reach the requested tolerance."""


@dataclass(frozen=True, slots=True)
class SyncSample:
    """One synchronization threshold with its convergence certificate.

    ``gap`` is the bracket width at ``depth_used``; ``converged`` records
    whether the requested tolerance was reached before ``max_depth``.
    """

    stream_index: int
    upsilon: float
    depth_used: int
    gap: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "stream_index": self.stream_index,
            "upsilon": self.upsilon,
            "depth_used": self.depth_used,
            "gap": self.gap,
            "converged": self.converged,
        }


def _backward_bracket(ifs: Ifs, syms: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Apply inverse maps of syms[:, :depth], last symbol innermost, to both seeds.

    ``syms`` has one row per sample.  Returns the bracket columns (lo, hi).
    The composition is evaluated from scratch, which makes every returned
    bracket exact (up to roundoff) regardless of how depths are scheduled.
    """
    rows = syms.shape[0]
    z_lo = np.full(rows, SEED_LO)
    z_hi = np.full(rows, SEED_HI)
    for t in range(depth - 1, -1, -1):
        col = syms[:, t]
        for k, mp in enumerate(ifs.maps, start=1):
            mask = col == k
            if np.any(mask):
                z_lo[mask] = mp.invert_array(z_lo[mask])
                z_hi[mask] = mp.invert_array(z_hi[mask])
    return z_lo, z_hi


def _upsilon_batch(
    ifs: Ifs,
    streams: Sequence[SymbolStream],
    tol: float,
    max_depth: int,
) -> list[SyncSample]:
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    m = len(streams)
    ups = np.empty(m)
    gaps = np.empty(m)
    depths = np.zeros(m, dtype=int)
    done = np.zeros(m, dtype=bool)

    depth = 0
    active = np.arange(m)
    while active.size and depth < max_depth:
        depth = min(depth + RECOMP_CHUNK, max_depth)
        syms = np.stack([streams[j].take(depth) for j in active])
        if np.any(syms < 1) or np.any(syms > ifs.n_maps):
            raise ValueError("stream contains a symbol beyond the family size")
        z_lo, z_hi = _backward_bracket(ifs, syms, depth)
        gap = z_hi - z_lo
        ups[active] = 0.5 * (z_lo + z_hi)
        gaps[active] = gap
        depths[active] = depth
        finished = gap <= tol
        done[active[finished]] = True
        active = active[~finished]

    out = []
    for j, s in enumerate(streams):
        idx = s.stream_index if s.stream_index is not None else -1
        out.append(
            SyncSample(
                stream_index=int(idx),
                upsilon=float(ups[j]),
                depth_used=int(depths[j]),
                gap=float(gaps[j]),
                converged=bool(done[j]),
            )
        )
    return out


def upsilon(
    ifs: Ifs,
    stream: SymbolStream,
    tol: float = TOL_DEFAULT,
    max_depth: int = MAX_DEPTH_DEFAULT,
) -> SyncSample:
    """Backward-iteration threshold for one stream.

    The bracket is examined every RECOMP_CHUNK symbols, so ``depth_used`` is
    the first examined depth with gap <= tol, not the minimal such depth.
    """
    return _upsilon_batch(ifs, [stream], tol, max_depth)[0]


def upsilon_sample(
    ifs: Ifs,
    m: int,
    tol: float = TOL_DEFAULT,
    max_depth: int = MAX_DEPTH_DEFAULT,
    master_seed: int = 42,
    stream_factory: Callable[[int], SymbolStream] | None = None,
) -> list[SyncSample]:
    """m independent thresholds from streams (master_seed, 0..m-1).

    ``stream_factory`` substitutes arbitrary streams by index (a test hook);
    non-converged entries are carried through with ``converged=False``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if stream_factory is None:
        streams = [SymbolStream.random(ifs.weights, master_seed, j) for j in range(m)]
    else:
        streams = [stream_factory(j) for j in range(m)]
    return _upsilon_batch(ifs, streams, tol, max_depth)


def ks_uniform(samples: Sequence[float]) -> float:
    """Kolmogorov-Smirnov statistic of samples against the uniform law on [0,1]."""
    arr = np.sort(np.asarray(samples, dtype=float).ravel())
    if arr.size == 0:
        raise ValueError("need at least one sample")
    if arr[0] < 0.0 or arr[-1] > 1.0:
        raise ValueError("samples must lie in [0, 1]")
    m = arr.size
    grid_hi = np.arange(1, m + 1) / m
    grid_lo = np.arange(0, m) / m
    return float(max(np.max(grid_hi - arr), np.max(arr - grid_lo)))


def equivariance_residual(
    ifs: Ifs,
    stream: SymbolStream,
    tol: float = TOL_DEFAULT,
    max_depth: int = MAX_DEPTH_DEFAULT,
) -> float:
    """|upsilon(shifted stream) - f_{first symbol}(upsilon(stream))|.

    Raises UndecidedError when either threshold fails to converge.
    """
    base, shift = _upsilon_batch(ifs, [stream, stream.shifted()], tol, max_depth)
    if not (base.converged and shift.converged):
        raise UndecidedError(
            f"bracket gap above tol at max_depth (gaps {base.gap:g}, {shift.gap:g})"
        )
    mapped = ifs.maps[stream.first_symbol() - 1].eval(base.upsilon)
    return abs(shift.upsilon - mapped)


class Agreement(enum.Enum):
    AGREE = "agree"
    DISAGREE = "disagree"
    EXCLUDED = "excluded"


def _agreement_of(x: float, sample: SyncSample, cls: Classification, exclusion: float) -> Agreement:
    if (not sample.converged) or abs(x - sample.upsilon) < exclusion:
        return Agreement.EXCLUDED
    predicts_zero = x < sample.upsilon
    if (predicts_zero and cls is Classification.TO_ZERO) or (
        not predicts_zero and cls is Classification.TO_ONE
    ):
        return Agreement.AGREE
    return Agreement.DISAGREE


def threshold_agreement(
    ifs: Ifs,
    x: float,
    stream: SymbolStream,
    n: int,
    tol: float = TOL_DEFAULT,
    max_depth: int = MAX_DEPTH_DEFAULT,
    exclusion: float = EXCLUSION_BAND,
    threshold: float = 1e-6,
) -> Agreement:
    """Cross-check of forward endpoint classification against sign(x - upsilon).

    Excluded when |x - upsilon| < ``exclusion`` or the threshold is undecided;
    otherwise Agree exactly when the side of the threshold predicts the
    forward classification after n steps.
    """
    if not (0.0 < x < 1.0):
        raise ValueError(f"x must lie strictly inside (0, 1), got {x!r}")
    sample = _upsilon_batch(ifs, [stream], tol, max_depth)[0]
    final = trajectory_points(ifs, x, n, stream)[-1]
    return _agreement_of(x, sample, classify(final, threshold), exclusion)


def agreement_counts(
    ifs: Ifs,
    pairs: int,
    n: int,
    master_seed: int,
    tol: float = TOL_DEFAULT,
    max_depth: int = MAX_DEPTH_DEFAULT,
    exclusion: float = EXCLUSION_BAND,
    threshold: float = 1e-6,
) -> dict:
    """Vectorized agreement statistics over paired (x, stream) samples.

    Stream j drives both the threshold and the forward orbit of pair j; the
    start points x_j are drawn uniform from the reserved auxiliary stream.
    Returns counts plus the agreement fraction among non-excluded pairs.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    xs = make_generator(master_seed, AUX_STREAM_INDEX).random(pairs)
    streams = [SymbolStream.random(ifs.weights, master_seed, j) for j in range(pairs)]
    samples = _upsilon_batch(ifs, streams, tol, max_depth)

    starts = np.array([[UnitPoint.from_value(float(x)).raw for x in xs]])
    flips = np.array([[UnitPoint.from_value(float(x)).flipped for x in xs]])
    fv, ff, _ = _run_streams(ifs, starts, flips, n, pairs, master_seed)
    values = np.where(ff[0], 1.0 - fv[0], fv[0])
    complements = np.where(ff[0], fv[0], 1.0 - fv[0])

    agree = disagree = excluded = 0
    for j in range(pairs):
        if complements[j] <= threshold:
            cls = Classification.TO_ONE
        elif values[j] <= threshold:
            cls = Classification.TO_ZERO
        else:
            cls = Classification.UNDECIDED
        outcome = _agreement_of(float(xs[j]), samples[j], cls, exclusion)
        if outcome is Agreement.AGREE:
            agree += 1
        elif outcome is Agreement.DISAGREE:
            disagree += 1
        else:
            excluded += 1
    considered = agree + disagree
    return {
        "pairs": pairs,
        "agree": agree,
        "disagree": disagree,
        "excluded": excluded,
        "agreement_fraction": (agree / considered) if considered else math.nan,
        "exclusion": exclusion,
        "threshold": threshold,
        "steps": n,
        "master_seed": master_seed,
    }
