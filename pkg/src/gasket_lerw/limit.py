"""Two-type branching refinement and the scaling-limit path sampler.

A depth-M approximation of the limit process is a chain of 2**-M-sided
upward triangles, each crossed either corner-to-corner (one time unit) or
through its third corner (two time units), with every time unit worth
lambda**-M.  Refinement replaces one triangle by the skeleton of a random
crossing shape: a one-visit triangle draws from the direct shape law, a
two-visit triangle from the via-corner law, and the children are placed by
the affine identification sending the shape frame's origin, apex and right
corner to the parent's entry, exit and third corner.  A parent whose draw
happens to avoid the third corner simply produces that shape's children;
its own recorded kind is not rewritten.

Cell geometry is kept in integer coordinates at the working depth (the
triangle side is the unit), so doubling at each refinement is exact and the
projective structure is an identity: refining depth M+1 with the same
stream reproduces the depth-M chain cell for cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import log, sqrt
from typing import NamedTuple, Sequence

import numpy as np

from . import eraser
from .exact import ShapeTable, mat_pow, moment_table, shape_table, spectral_data
from .lattice import Vertex

TYPE_ONE = 1
TYPE_TWO = 2


class InsufficientDepth(ValueError):
    """Box counting needs several levels to fit a slope."""


class SkeletonCell(NamedTuple):
    """One triangle of a refined skeleton, in integer depth-scale coordinates."""

    entry: Vertex
    exit: Vertex
    third: Vertex
    kind: int

    @property
    def corner(self) -> Vertex:
        pts = (self.entry, self.exit, self.third)
        return (min(p[0] for p in pts), min(p[1] for p in pts))

    @property
    def duration_units(self) -> int:
        return 1 if self.kind == TYPE_ONE else 2


ANCESTOR = SkeletonCell(entry=(0, 0), exit=(0, 1), third=(1, 0), kind=TYPE_ONE)


@dataclass(frozen=True)
class RefinementShape:
    """A crossing shape expressed as children placed inside a unit parent."""

    shape_id: str
    children: tuple[SkeletonCell, ...]  # in the side-2 shape frame


@dataclass(frozen=True)
class RefinementKernels:
    """Offspring laws of the branching refinement, per parent kind."""

    type_one: tuple[tuple[Fraction, RefinementShape], ...]
    type_two: tuple[tuple[Fraction, RefinementShape], ...]

    def law(self, kind: int) -> tuple[tuple[Fraction, RefinementShape], ...]:
        return self.type_one if kind == TYPE_ONE else self.type_two

    def mean_offspring(self, kind: int) -> tuple[Fraction, Fraction]:
        s1 = Fraction(0)
        s2 = Fraction(0)
        for p, shape in self.law(kind):
            s1 += p * sum(1 for c in shape.children if c.kind == TYPE_ONE)
            s2 += p * sum(1 for c in shape.children if c.kind == TYPE_TWO)
        return s1, s2


def _shape_children(path: tuple[Vertex, ...]) -> tuple[SkeletonCell, ...]:
    cells = []
    for e in eraser.skeleton(path, 0).entries:
        if e.kind is None:
            raise AssertionError("crossing shapes have one- or two-visit cells only")
        cells.append(SkeletonCell(entry=e.entry, exit=e.exit, third=e.third_corner, kind=e.kind))
    return tuple(cells)


def refinement_table(table: ShapeTable | None = None) -> RefinementKernels:
    """Kernel of the refinement: each shape's mass and child skeleton.

    All children stay inside the closed parent triangle; this is asserted at
    build time rather than assumed.
    """
    if table is None:
        table = shape_table()
    type_one = []
    type_two = []
    for s in table.shapes:
        shape = RefinementShape(shape_id=s.shape_id, children=_shape_children(s.path))
        for cell in shape.children:
            for p in (cell.entry, cell.exit, cell.third):
                if not (p[0] >= 0 and p[1] >= 0 and p[0] + p[1] <= 2):
                    raise AssertionError(f"shape {s.shape_id} leaves its frame at {p}")
        if s.p_direct:
            type_one.append((s.p_direct, shape))
        if s.p_via:
            type_two.append((s.p_via, shape))
    return RefinementKernels(type_one=tuple(type_one), type_two=tuple(type_two))


@dataclass(frozen=True)
class RefinedPath:
    """A depth-M skeleton chain with lambda-scaled traversal times."""

    depth: int
    cells: tuple[SkeletonCell, ...]
    level_counts: tuple[tuple[int, int], ...]  # (one-visit, two-visit) per level 0..depth

    def s_counts(self) -> tuple[int, int]:
        return self.level_counts[-1]

    def scaled_length(self) -> float:
        s1, s2 = self.s_counts()
        return float(growth_rate() ** -self.depth * (s1 + 2 * s2))

    def timestamps(self) -> list[float]:
        """Exit times of the cells: increments are lambda**-M times 1 or 2."""
        dt = float(growth_rate()) ** -self.depth
        out = []
        t = 0.0
        for cell in self.cells:
            t += dt * cell.duration_units
            out.append(t)
        return out

    def polyline(self) -> list[tuple[float, float, float]]:
        """(time, x, y) vertices of the time-parameterized path."""
        dt = float(growth_rate()) ** -self.depth
        scale = 0.5**self.depth
        root3_half = sqrt(3.0) / 2.0

        def emb(p: Vertex) -> tuple[float, float]:
            return ((p[0] + 0.5 * p[1]) * scale, p[1] * root3_half * scale)

        pts = [(0.0, *emb(self.cells[0].entry))]
        t = 0.0
        for cell in self.cells:
            if cell.kind == TYPE_TWO:
                t += dt
                pts.append((t, *emb(cell.third)))
            t += dt
            pts.append((t, *emb(cell.exit)))
        return pts


_GROWTH: list[object] = []


def growth_rate():
    """The Perron eigenvalue governing time scaling (cached mpf)."""
    if not _GROWTH:
        _GROWTH.append(spectral_data().lam)
    return _GROWTH[0]


class _UniformSource:
    __slots__ = ("_rng", "_buf", "_k")

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._buf: list[float] = []
        self._k = 0

    def draw(self) -> float:
        k = self._k
        if k >= len(self._buf):
            self._buf = self._rng.random(4096).tolist()
            k = 0
        self._k = k + 1
        return self._buf[k]


def _sampling_law(kernels: RefinementKernels, kind: int):
    law = kernels.law(kind)
    cum = []
    acc = 0.0
    for p, shape in law:
        acc += float(p)
        cum.append((acc, shape.children))
    cum[-1] = (1.0, cum[-1][1])
    return cum


def _map_child(cell: SkeletonCell, parent: SkeletonCell) -> SkeletonCell:
    """Place a frame cell inside a parent, doubling the parent's coordinates."""
    (ei, ej), (xi, xj), (ti, tj) = parent.entry, parent.exit, parent.third
    dxi, dxj = xi - ei, xj - ej
    dti, dtj = ti - ei, tj - ej
    bi, bj = 2 * ei, 2 * ej

    def place(p: Vertex) -> Vertex:
        return (bi + p[0] * dti + p[1] * dxi, bj + p[0] * dtj + p[1] * dxj)

    return SkeletonCell(
        entry=place(cell.entry), exit=place(cell.exit), third=place(cell.third), kind=cell.kind
    )


def sample_refined_family(
    depth: int,
    rng: np.random.Generator,
    kernels: RefinementKernels | None = None,
) -> list[RefinedPath]:
    """The coupled chain of approximations at depths 0..depth.

    One kernel draw is consumed per cell per level, in skeleton order, so
    the depth-m member is a deterministic prefix of the depth-(m+1) member's
    construction: coarse-graining the finer one recovers the coarser one
    exactly.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if kernels is None:
        kernels = refinement_table()
    laws = {TYPE_ONE: _sampling_law(kernels, TYPE_ONE), TYPE_TWO: _sampling_law(kernels, TYPE_TWO)}
    uniforms = _UniformSource(rng)

    cells: tuple[SkeletonCell, ...] = (ANCESTOR,)
    counts = [(1, 0)]
    family = [RefinedPath(depth=0, cells=cells, level_counts=tuple(counts))]
    for m in range(1, depth + 1):
        nxt: list[SkeletonCell] = []
        s1 = s2 = 0
        for parent in cells:
            r = uniforms.draw()
            for cum, children in laws[parent.kind]:
                if r <= cum:
                    break
            for child in children:
                mapped = _map_child(child, parent)
                nxt.append(mapped)
                if mapped.kind == TYPE_ONE:
                    s1 += 1
                else:
                    s2 += 1
        cells = tuple(nxt)
        counts.append((s1, s2))
        family.append(RefinedPath(depth=m, cells=cells, level_counts=tuple(counts)))
    return family


def sample_limit_path(
    depth: int,
    rng: np.random.Generator,
    kernels: RefinementKernels | None = None,
) -> RefinedPath:
    """Sample one depth-M approximation from the single one-visit ancestor."""
    return sample_refined_family(depth, rng, kernels)[-1]


def coarse_grain_refined(path: RefinedPath) -> RefinedPath:
    """Collapse a depth-M chain one level: group children by parent triangle
    and reread each parent's kind from whether the chain uses its third corner.

    The parent triangles, entries and exits reproduce the coupled coarser
    sample exactly.  Kinds are the finer path's own level-(M-1) reading: a
    two-visit parent whose offspring avoided the middle corner rereads as
    one-visit, which is the only kind change the erasure allows.  The
    returned history keeps the recorded branching counts for the untouched
    levels and carries the reread counts at the top.
    """
    if path.depth == 0:
        raise ValueError("depth-0 paths have no coarser level")
    parents: list[SkeletonCell] = []
    group: list[SkeletonCell] = []
    key: Vertex | None = None
    for cell in path.cells:
        q = cell.corner
        k = (2 * (q[0] >> 1), 2 * (q[1] >> 1))
        if key is None or k == key:
            group.append(cell)
        else:
            parents.append(_collapse_group(group, key))
            group = [cell]
        key = k
    parents.append(_collapse_group(group, key))
    s1 = sum(1 for c in parents if c.kind == TYPE_ONE)
    s2 = len(parents) - s1
    return RefinedPath(
        depth=path.depth - 1,
        cells=tuple(parents),
        level_counts=path.level_counts[:-2] + ((s1, s2),),
    )


def projects_onto(fine: RefinedPath, coarse: RefinedPath) -> bool:
    """Exact projective check between coupled depths.

    Triangles, entry points and exit points must agree cell for cell; a kind
    may only change from two-visit to one-visit when passing down a level.
    """
    if fine.depth != coarse.depth + 1:
        raise ValueError("projects_onto compares adjacent depths")
    collapsed = coarse_grain_refined(fine)
    if len(collapsed.cells) != len(coarse.cells):
        return False
    for got, want in zip(collapsed.cells, coarse.cells):
        if (got.entry, got.exit, got.third) != (want.entry, want.exit, want.third):
            return False
        if got.kind == TYPE_TWO and want.kind == TYPE_ONE:
            return False
    return True


def _collapse_group(group: list[SkeletonCell], corner_key: Vertex) -> SkeletonCell:
    entry = group[0].entry
    exit_ = group[-1].exit
    corners = {
        corner_key,
        (corner_key[0] + 2, corner_key[1]),
        (corner_key[0], corner_key[1] + 2),
    }
    (third,) = corners - {entry, exit_}
    junctions = {c.entry for c in group} | {c.exit for c in group}
    kind = TYPE_TWO if third in junctions else TYPE_ONE
    half = lambda p: (p[0] >> 1, p[1] >> 1)  # noqa: E731
    return SkeletonCell(entry=half(entry), exit=half(exit_), third=half(third), kind=kind)


# ---------------------------------------------------------------------------
# Statistics of samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LengthSummary:
    depth: int
    n: int
    mean: float
    variance: float
    mean_se: float
    variance_se: float
    predicted_mean: float
    predicted_variance: float
    histogram_counts: tuple[int, ...]
    histogram_edges: tuple[float, ...]

    @property
    def mean_z(self) -> float:
        return (self.mean - self.predicted_mean) / self.mean_se

    @property
    def variance_z(self) -> float:
        return (self.variance - self.predicted_variance) / self.variance_se


def length_statistics(samples: Sequence[RefinedPath], bins: int = 30) -> LengthSummary:
    """Moments of the rescaled lengths lambda**-M (S1 + 2 S2) against the
    branching-limit predictions."""
    if not samples:
        raise ValueError("no samples")
    depth = samples[0].depth
    if any(s.depth != depth for s in samples):
        raise ValueError("samples must share one depth")
    values = np.array([s.scaled_length() for s in samples])
    n = len(values)
    mean = float(values.mean())
    var = float(values.var(ddof=1)) if n > 1 else 0.0
    mean_se = sqrt(var / n) if n > 1 else float("inf")
    centered = values - mean
    m4 = float((centered**4).mean()) if n > 1 else 0.0
    var_se = sqrt(max(m4 - var * var, 0.0) / n) if n > 1 else float("inf")
    mt = moment_table(2)
    counts, edges = np.histogram(values, bins=bins)
    return LengthSummary(
        depth=depth,
        n=n,
        mean=mean,
        variance=var,
        mean_se=mean_se,
        variance_se=var_se,
        predicted_mean=float(mt.w_prime_mean),
        predicted_variance=float(mt.w_prime_variance),
        histogram_counts=tuple(int(c) for c in counts),
        histogram_edges=tuple(float(e) for e in edges),
    )


def box_count_dimension(path: RefinedPath, min_level: int = 2) -> float:
    """Least-squares slope of log cell count against log inverse mesh.

    Counts come from the coarse-grained skeletons recorded during
    refinement: K_m cells of side 2**-m at level m.
    """
    if path.depth < 6:
        raise InsufficientDepth("box counting needs depth >= 6")
    xs = []
    ys = []
    for m in range(min_level, path.depth + 1):
        s1, s2 = path.level_counts[m]
        xs.append(m * log(2.0))
        ys.append(log(s1 + s2))
    xbar = sum(xs) / len(xs)
    ybar = sum(ys) / len(ys)
    num = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    den = sum((x - xbar) ** 2 for x in xs)
    return num / den


# ---------------------------------------------------------------------------
# Count-only branching simulation (vectorized)
# ---------------------------------------------------------------------------


def sample_branching_counts(
    depth: int,
    runs: int,
    rng: np.random.Generator,
    ancestor: tuple[int, int] = (1, 0),
) -> np.ndarray:
    """(S1, S2) after ``depth`` refinements for many independent runs.

    Counts evolve exactly as under the geometric sampler (same offspring
    laws); dropping the geometry lets each generation be drawn with two
    multinomials across all runs.
    """
    table = shape_table()
    law1 = [(s.p_direct, (s.s1, s.s2)) for s in table.shapes if s.p_direct]
    law2 = [(s.p_via, (s.s1, s.s2)) for s in table.shapes if s.p_via]
    p1 = np.array([float(p) for p, _ in law1])
    p2 = np.array([float(p) for p, _ in law2])
    off1 = np.array([s for _, s in law1], dtype=np.int64)
    off2 = np.array([s for _, s in law2], dtype=np.int64)
    p1 /= p1.sum()
    p2 /= p2.sum()
    state = np.tile(np.array(ancestor, dtype=np.int64), (runs, 1))
    for _ in range(depth):
        d1 = rng.multinomial(state[:, 0], p1)
        d2 = rng.multinomial(state[:, 1], p2)
        state = d1 @ off1 + d2 @ off2
    return state


def branching_mean_prediction(depth: int, ancestor: tuple[int, int] = (1, 0)) -> tuple[float, float]:
    """Exact rational mean of (S1, S2), as floats for comparisons."""
    from .exact import build_phi_theta, mean_matrix

    phi, theta = build_phi_theta(shape_table())
    mn = mat_pow(mean_matrix(phi, theta), depth)
    return (
        float(ancestor[0] * mn[0][0] + ancestor[1] * mn[1][0]),
        float(ancestor[0] * mn[0][1] + ancestor[1] * mn[1][1]),
    )
