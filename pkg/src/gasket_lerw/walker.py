"""Simple random walk on the gasket and the conditioned crossing samplers.

Two crossing laws are sampled, both walks from the origin with uniform steps
over the four neighbors:

* ``Direct``: the walk's first visit to a coarse vertex other than the origin
  is the apex a_N (conditioning probability exactly 1/4),
* ``ViaCorner``: that first visit is the right corner b_N and the next coarse
  visit after it is a_N (probability exactly 1/16).

Coarse visits are counted with the once-in-a-row rule: consecutive returns to
the vertex counted last do not register again.

The ``rejection`` method simulates the fine walk and retries until the
conditioning event holds; it is the ground truth.  The ``hierarchical``
method samples the level-(N-1) crossing pattern by rejection and fills each
of its steps with an independent conditioned sub-crossing, recursing down to
unit edges.  Both produce the same law (given its endpoints, each segment
between coarse visits is an independent conditioned crossing of one cell),
which the test suite checks against the rejection sampler.

Samplers draw from an explicit ``numpy.random.Generator``; independent
replicas must use independently spawned streams (``replica_rng``).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .lattice import ORIGIN, Vertex, apex, corner, neighbors, on_grid

DEFAULT_STEP_BUDGET = 10**9


class StepBudgetExceeded(RuntimeError):
    """A sampler hit its raw-step cap.

    The budget is a failsafe against mis-set parameters: the expected number
    of raw steps per sample is about 5**N, far below the default cap for
    every supported level.
    """


class CrossingVariant(Enum):
    DIRECT = "direct"
    VIA_CORNER = "via-corner"


@dataclass(frozen=True)
class HittingTimes:
    """Indices at which a path visits the level-M grid, counted once in a row."""

    level: int
    times: tuple[int, ...]


class _Dice:
    """Buffered draws from a numpy Generator, with a global step budget.

    One direction draw corresponds to exactly one walk step, so the budget is
    enforced here instead of in every sampling loop.
    """

    __slots__ = ("_rng", "_dirs", "_di", "_budget", "used")

    def __init__(self, rng: np.random.Generator, budget: int = DEFAULT_STEP_BUDGET):
        self._rng = rng
        self._dirs: list[int] = []
        self._di = 0
        self._budget = budget
        self.used = 0

    def direction(self) -> int:
        i = self._di
        if i >= len(self._dirs):
            self.used += len(self._dirs)
            if self.used > self._budget:
                raise StepBudgetExceeded(f"step budget {self._budget} exhausted")
            self._dirs = self._rng.integers(0, 4, size=4096).tolist()
            i = 0
        self._di = i + 1
        return self._dirs[i]


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """An independent stream fully determined by (seed, replica-index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replica,)))


# ---------------------------------------------------------------------------
# Hitting times and coarse-graining
# ---------------------------------------------------------------------------


def hitting_indices(path: Sequence[Vertex], level: int) -> list[int]:
    """Path indices of the level-M grid visits, applying the once-in-a-row rule."""
    mask = (1 << level) - 1
    out: list[int] = []
    last: Vertex | None = None
    for t, v in enumerate(path):
        if ((v[0] | v[1]) & mask) == 0 and v != last:
            out.append(t)
            last = v
    return out


def hitting_times(path: Sequence[Vertex], level: int) -> HittingTimes:
    if not path:
        raise ValueError("empty path")
    return HittingTimes(level=level, times=tuple(hitting_indices(path, level)))


def coarse_grain(path: Sequence[Vertex], level: int, validate: bool = True) -> list[Vertex]:
    """The subsequence of a path at its level-M grid visits.

    Composing coarse-grainings keeps only the coarser one: applying level M
    after level K <= M equals applying level M directly.
    """
    if not path:
        raise ValueError("empty path")
    if validate and not (on_grid(path[0], level) and on_grid(path[-1], level)):
        raise ValueError(f"path endpoints must lie on the level-{level} grid")
    return [path[t] for t in hitting_indices(path, level)]


# ---------------------------------------------------------------------------
# Walk primitives
# ---------------------------------------------------------------------------


def _walk_until(v0: Vertex, mask: int, dice: _Dice, path: list[Vertex]) -> None:
    """Unit-lattice SRW from v0 until the first visit to a masked-grid vertex
    other than v0, appending every step to ``path`` (which must end with v0)."""
    cur = v0
    direction = dice.direction
    append = path.append
    while True:
        cur = neighbors(cur)[direction()]
        append(cur)
        if ((cur[0] | cur[1]) & mask) == 0 and cur != v0:
            return


def attempt_crossing(
    N: int,
    variant: CrossingVariant,
    rng: np.random.Generator,
    max_steps: int = DEFAULT_STEP_BUDGET,
) -> list[Vertex] | None:
    """Run one conditioning trial of the fine walk; None if the event fails."""
    dice = _Dice(rng, max_steps)
    return _attempt(N, variant, dice)


def _attempt(N: int, variant: CrossingVariant, dice: _Dice) -> list[Vertex] | None:
    mask = (1 << N) - 1
    a_N = apex(N)
    path = [ORIGIN]
    _walk_until(ORIGIN, mask, dice, path)
    if variant is CrossingVariant.DIRECT:
        return path if path[-1] == a_N else None
    b_N = corner(N)
    if path[-1] != b_N:
        return None
    _walk_until(b_N, mask, dice, path)
    return path if path[-1] == a_N else None


def sample_crossing(
    N: int,
    variant: CrossingVariant = CrossingVariant.DIRECT,
    method: str = "rejection",
    rng: np.random.Generator | None = None,
    max_steps: int = DEFAULT_STEP_BUDGET,
) -> list[Vertex]:
    """Sample one conditioned crossing path at level N (starts at O, ends at a_N)."""
    if N < 1:
        raise ValueError("crossing level must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    dice = _Dice(rng, max_steps)
    if method == "rejection":
        while True:
            path = _attempt(N, variant, dice)
            if path is not None:
                return path
    elif method == "hierarchical":
        return _sample_hierarchical(N, variant, dice)
    else:
        raise ValueError(f"unknown sampling method {method!r}")


def _unit_pattern(start: Vertex, dice: _Dice) -> list[Vertex]:
    """Walk from a unit-frame vertex until the first even-grid vertex differs."""
    seg = [start]
    _walk_until(start, 1, dice, seg)
    return seg


def _fill_step(u: Vertex, v: Vertex, m: int, dice: _Dice, out: list[Vertex]) -> None:
    """Append the fine continuation of the level-m coarse step u -> v.

    The segment is the walk from u stopped at its next level-m grid visit,
    conditioned to stop at v; it is sampled by drawing the level-(m-1)
    pattern inside the cell by rejection (acceptance exactly 1/4) and
    recursing on its steps.
    """
    if m == 0:
        out.append(v)
        return
    shift = m - 1
    u0 = (u[0] >> shift, u[1] >> shift)
    v0 = (v[0] >> shift, v[1] >> shift)
    while True:
        seg = _unit_pattern(u0, dice)
        if seg[-1] == v0:
            break
    if shift == 0:
        out.extend(seg[1:])
        return
    for a, b in zip(seg, seg[1:]):
        _fill_step(
            (a[0] << shift, a[1] << shift),
            (b[0] << shift, b[1] << shift),
            shift,
            dice,
            out,
        )


def _sample_hierarchical(N: int, variant: CrossingVariant, dice: _Dice) -> list[Vertex]:
    while True:
        pattern = _attempt(1, variant, dice)
        if pattern is not None:
            break
    if N == 1:
        return pattern
    shift = N - 1
    out = [ORIGIN]
    for a, b in zip(pattern, pattern[1:]):
        _fill_step(
            (a[0] << shift, a[1] << shift),
            (b[0] << shift, b[1] << shift),
            shift,
            dice,
            out,
        )
    return out
