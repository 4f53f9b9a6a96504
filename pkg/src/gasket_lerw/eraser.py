"""Loop erasure with the larger-scale-loops-first rule.

``chronological_erase`` is the single-scale primitive: starting from the
first vertex, jump to the last index carrying the same vertex, step forward
once, and repeat.  It equals the familiar stack erasure (grow a self-avoiding
prefix, truncate on revisit), which is kept as an independent cross-check.

``loop_erase`` removes loops from a crossing path scale by scale, largest
first.  At stage M the path is split along its level-M skeleton (the ordered
filled 2**M-triangles it crosses); inside each triangle the level-(M-1)
coarse view of the segment is chronologically erased, and the surviving fine
sub-segments are spliced back together.  Surviving pieces are addressed by
half-open index ranges of the pre-stage path, matching the concatenation
formula wd = [w(T_{s_i}), ..., w(T_{s_i + 1} - 1)] plus the final exit
vertex.  After the stage, coarse-graining the output one level down yields a
loop-free path; the coarser skeletons never change again, although a
two-visit triangle can turn into a one-visit one when the erased mass
included the middle corner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .lattice import (
    ORIGIN,
    TriangleId,
    Vertex,
    apex,
    cell_of_step,
    corner,
    euclid_sq,
    on_grid,
    vertex_level,
)
from .walker import CrossingVariant, coarse_grain, hitting_indices

TYPE_ONE = 1
TYPE_TWO = 2


class ScaleLoopsRemain(ValueError):
    """A stage was asked to run while larger-scale loops are still present."""


class NotACrossing(ValueError):
    """The path does not have the hitting structure of a conditioned crossing."""


class UnknownShape(ValueError):
    """A unit-frame path is not one of the admissible loop-erased shapes."""


@dataclass(frozen=True)
class SkeletonEntry:
    triangle: TriangleId
    entry: Vertex
    exit: Vertex
    kind: int | None  # 1 = crossed corner to corner, 2 = via the third corner
    exit_index: int  # path index of the exit time

    @property
    def third_corner(self) -> Vertex:
        for c in self.triangle.corners():
            if c != self.entry and c != self.exit:
                return c
        raise AssertionError("degenerate skeleton entry")


@dataclass(frozen=True)
class Skeleton:
    level: int
    entries: tuple[SkeletonEntry, ...]

    def triangles(self) -> tuple[TriangleId, ...]:
        return tuple(e.triangle for e in self.entries)

    def s_counts(self) -> tuple[int, int]:
        """(number of one-visit triangles, number of two-visit triangles)."""
        s1 = s2 = 0
        for e in self.entries:
            if e.kind == TYPE_ONE:
                s1 += 1
            elif e.kind == TYPE_TWO:
                s2 += 1
            else:
                raise ValueError("skeleton entry with more than two grid visits")
        return s1, s2


def is_self_avoiding(path: Sequence[Vertex]) -> bool:
    return len(set(path)) == len(path)


# ---------------------------------------------------------------------------
# Single-scale erasure
# ---------------------------------------------------------------------------


def _sup_rule_keep(seq: Sequence[Vertex]) -> list[int]:
    """Kept indices under the last-occurrence jump rule."""
    last: dict[Vertex, int] = {}
    for t, v in enumerate(seq):
        last[v] = t
    keep = [last[seq[0]]]
    end = len(seq) - 1
    while keep[-1] < end:
        keep.append(last[seq[keep[-1] + 1]])
    return keep


def chronological_erase(path: Sequence[Vertex]) -> list[Vertex]:
    """Erase all loops from a finite path, oldest loop base first.

    Output is self-avoiding and keeps the path's first and last vertices.
    """
    if not path:
        raise ValueError("empty path")
    return [path[t] for t in _sup_rule_keep(path)]


def stack_erase(path: Sequence[Vertex]) -> list[Vertex]:
    """Single-pass erasure: grow a self-avoiding prefix, truncate on revisit."""
    out: list[Vertex] = []
    pos: dict[Vertex, int] = {}
    for v in path:
        k = pos.get(v)
        if k is None:
            pos[v] = len(out)
            out.append(v)
        else:
            while len(out) > k + 1:
                pos.pop(out.pop())
    return out


# ---------------------------------------------------------------------------
# Skeletons
# ---------------------------------------------------------------------------


def skeleton(path: Sequence[Vertex], level: int) -> Skeleton:
    """The ordered 2**level-triangles a path crosses, with exit times.

    The exit time of a triangle is the last grid visit before the coarse
    path moves to a vertex outside it; the next triangle is the unique
    filled cell containing that exit and the following grid visit.
    """
    if not path:
        raise ValueError("empty path")
    if not (on_grid(path[0], level) and on_grid(path[-1], level)):
        raise ValueError(f"path endpoints must lie on the level-{level} grid")
    ht = hitting_indices(path, level)
    m = len(ht) - 1
    entries: list[SkeletonEntry] = []
    n = 0
    while n < m:
        u = path[ht[n]]
        tri = cell_of_step(u, path[ht[n + 1]], level)
        j = n + 1
        while j < m and tri.contains(path[ht[j + 1]]):
            j += 1
        visits = j - n
        entries.append(
            SkeletonEntry(
                triangle=tri,
                entry=u,
                exit=path[ht[j]],
                kind=visits if visits <= 2 else None,
                exit_index=ht[j],
            )
        )
        n = j
    return Skeleton(level=level, entries=tuple(entries))


def skeleton_to_json(sk: Skeleton) -> str:
    records = [
        {
            "corner": list(e.triangle.corner),
            "level": e.triangle.level,
            "entry": list(e.entry),
            "exit": list(e.exit),
            "kind": e.kind,
            "exit_index": e.exit_index,
        }
        for e in sk.entries
    ]
    body = ",\n ".join(json.dumps(r) for r in records)
    return "[\n " + body + "\n]" if records else "[]"


# ---------------------------------------------------------------------------
# Staged erasure
# ---------------------------------------------------------------------------


def has_loops_at_or_above(path: Sequence[Vertex], level: int) -> bool:
    """Whether any coarse view at this level or above still has a loop."""
    k = level
    while True:
        hits = hitting_indices(path, k)
        if len(hits) <= 2:
            return False
        if not is_self_avoiding([path[t] for t in hits]):
            return True
        k += 1


def erase_scale(path: Sequence[Vertex], level: int, check: bool = True) -> list[Vertex]:
    """Remove every 2**(level-1)-scale loop from a path whose coarser views
    are already loop-free.

    Works triangle by triangle along the level-M skeleton; inside each
    triangle the level-(M-1) coarse sequence is chronologically erased and
    the fine sub-segments under the surviving coarse steps are spliced.
    """
    if level < 1:
        raise ValueError("erasure stage level must be >= 1")
    if check and has_loops_at_or_above(path, level):
        raise ScaleLoopsRemain(f"loops of scale 2**{level} or larger remain")
    sk = skeleton(path, level)
    out: list[Vertex] = [path[0]]
    prev_exit = 0
    for e in sk.entries:
        seg = list(path[prev_exit : e.exit_index + 1])
        prev_exit = e.exit_index
        ht = hitting_indices(seg, level - 1)
        keep = _sup_rule_keep([seg[t] for t in ht])
        first = True
        for i in range(len(keep) - 1):
            chunk = seg[ht[keep[i]] : ht[keep[i] + 1]]
            out.extend(chunk[1:] if first else chunk)
            first = False
        out.append(seg[ht[keep[-1]]])
    return out


def crossing_level(path: Sequence[Vertex]) -> tuple[int, CrossingVariant]:
    """Validate the hitting structure of a crossing path and read off its level."""
    if not path or path[0] != ORIGIN:
        raise NotACrossing("crossing paths start at the origin")
    i, j = path[-1]
    if i != 0 or j <= 0 or (j & (j - 1)) != 0:
        raise NotACrossing(f"endpoint {path[-1]} is not an apex vertex")
    n = j.bit_length() - 1
    hits = [path[t] for t in hitting_indices(path, n)]
    if hits == [ORIGIN, apex(n)]:
        return n, CrossingVariant.DIRECT
    if hits == [ORIGIN, corner(n), apex(n)]:
        return n, CrossingVariant.VIA_CORNER
    raise NotACrossing(f"level-{n} visit sequence {hits} is not a crossing pattern")


def erase_to_scale(path: Sequence[Vertex], down_to: int) -> list[Vertex]:
    """Run erasure stages from the top scale down to (and excluding) 2**down_to.

    The output has no loops of scale 2**down_to or larger; with down_to = 0
    the output is the fully loop-erased path.
    """
    n, _ = crossing_level(path)
    if not 0 <= down_to <= n:
        raise ValueError(f"down_to must be in 0..{n}")
    out = list(path)
    for m in range(n, down_to, -1):
        out = erase_scale(out, m, check=False)
    return out


def loop_erase(path: Sequence[Vertex]) -> list[Vertex]:
    """The fully loop-erased crossing: self-avoiding, origin to apex."""
    return erase_to_scale(path, 0)


def erased_coarse_path(path: Sequence[Vertex], level: int) -> list[Vertex]:
    """Coarse view of the partially erased path after stages above ``level``.

    This is the loop-free level-M path the remaining stages refine; at
    level = N-1 it equals the chronological erasure of the coarse-grained
    input, which is how callers in the Monte Carlo harness obtain it.
    """
    return coarse_grain(erase_to_scale(path, level), level)


# ---------------------------------------------------------------------------
# Scale classification of loops (test predicate)
# ---------------------------------------------------------------------------


def iter_loops(path: Sequence[Vertex]):
    """Yield (start, end) index pairs of minimal loops (no base revisit inside)."""
    seen: dict[Vertex, int] = {}
    for t, v in enumerate(path):
        if v in seen:
            yield seen[v], t
        seen[v] = t


def has_scale_loop(path: Sequence[Vertex], level: int, working_level: int) -> bool:
    """Whether the path has a loop whose base sits exactly on level M
    (capped at the working level) and whose diameter reaches 2**M.

    This is the direct, diameter-based reading of loop scale.  The staged
    eraser never computes it; it exists so tests can confirm that loops of a
    given scale are gone once the coarse view at that scale is loop-free.
    """
    need = 4**level
    for s, t in iter_loops(path):
        base = path[s]
        if vertex_level(base, cap=working_level) != level:
            continue
        if any(euclid_sq(path[k], base) >= need for k in range(s + 1, t + 1)):
            return True
    return False


# ---------------------------------------------------------------------------
# Shape classification
# ---------------------------------------------------------------------------


def classify_shape(path: Sequence[Vertex], table=None) -> str:
    """Canonical identifier of a unit-frame loop-erased crossing shape.

    The admissible vertex sequences are the ones enumerated by the exact
    shape-law solver, never transcribed by hand.
    """
    if table is None:
        from .exact import shape_table

        table = shape_table()
    key = tuple(path)
    info = table.by_path.get(key)
    if info is None:
        raise UnknownShape(f"not an admissible loop-erased crossing: {key}")
    return info.shape_id
