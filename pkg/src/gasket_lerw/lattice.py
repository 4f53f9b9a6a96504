"""Integer-exact geometry of the infinite pre-Sierpinski gasket.

Vertices are addressed in the oblique basis b0 = (1, 0), a0 = (1/2, sqrt(3)/2):
the pair (i, j) is the point i*b0 + j*a0, so the whole graph lives in the
closed upper half-plane j >= 0.  The right half of the gasket is grown from
the unit triangle O, a0, b0 by repeated doubling (each generation is three
shifted copies of the previous one), and the left half is the mirror image
across the y-axis, glued to the right half at the origin only.

In this addressing a filled upward unit triangle with lower-left corner
(i, j), i >= 0, exists exactly when the binary expansions of i and j share no
common 1-bit; a triangle of side 2**level scales that test by the side
length.  Mirrored triangles are tested through the reflection
(i, j) -> (-i - j - side, j).  All predicates below are pure functions of
integer inputs; floating point appears only in the Euclidean embedding used
for rendering.

Paths are plain lists/tuples of integer coordinate pairs.  A path of n+1
vertices has length n (the number of unit steps).
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Sequence

Vertex = tuple[int, int]
LatticePath = Sequence[Vertex]

ORIGIN: Vertex = (0, 0)

#: Unit steps of the triangular lattice that bound gasket edges.  Actual
#: adjacency is narrower (it depends on which triangles are filled).
_TRI_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1), (1, -1), (-1, 1))


class TriangleId(NamedTuple):
    """An upward filled triangle of side 2**level, keyed by its lower-left corner."""

    corner: Vertex
    level: int

    @property
    def side(self) -> int:
        return 1 << self.level

    def corners(self) -> tuple[Vertex, Vertex, Vertex]:
        (i, j), s = self.corner, self.side
        return ((i, j), (i + s, j), (i, j + s))

    def contains(self, v: Vertex) -> bool:
        """Whether a lattice point lies in the closed triangle."""
        di = v[0] - self.corner[0]
        dj = v[1] - self.corner[1]
        return di >= 0 and dj >= 0 and di + dj <= self.side


class NoCommonCell(ValueError):
    """Two vertices share no filled triangle of the requested size."""


def apex(level: int) -> Vertex:
    """The top corner a_N = (0, 2**N) of the level-N crossing frame."""
    return (0, 1 << level)


def corner(level: int) -> Vertex:
    """The right corner b_N = (2**N, 0) of the level-N crossing frame."""
    return (1 << level, 0)


def embed(v: Vertex) -> tuple[float, float]:
    """Euclidean coordinates of a lattice vertex."""
    i, j = v
    return (i + 0.5 * j, j * (math.sqrt(3.0) / 2.0))


def up_triangle_exists(corner: Vertex, level: int) -> bool:
    """Whether the upward triangle of side 2**level at ``corner`` is filled.

    Right half (corner.i >= 0): divide both coordinates by the side and test
    for disjoint binary digits.  Left half: apply the mirror map and reuse the
    right-half test.
    """
    i, j = corner
    s = 1 << level
    if j < 0:
        raise ValueError(f"triangle corner below the lattice half-plane: {corner}")
    if i % s or j % s:
        raise ValueError(f"corner {corner} not aligned to side {s}")
    if i < 0:
        i = -i - j - s
        if i < 0:
            return False
    return (i >> level) & (j >> level) == 0


def is_vertex(v: Vertex) -> bool:
    """Whether ``v`` is a corner of at least one filled unit triangle."""
    i, j = v
    if j < 0:
        return False
    for ci, cj in ((i, j), (i - 1, j), (i, j - 1)):
        if cj >= 0 and up_triangle_exists((ci, cj), 0):
            return True
    return False


def incident_cells(v: Vertex, level: int = 0) -> list[TriangleId]:
    """The filled 2**level-triangles having ``v`` (a G_level vertex) as a corner."""
    i, j = v
    s = 1 << level
    if i % s or j % s:
        raise ValueError(f"{v} is not on the level-{level} grid")
    cells = []
    for ci, cj in ((i, j), (i - s, j), (i, j - s)):
        if cj >= 0 and up_triangle_exists((ci, cj), level):
            cells.append(TriangleId((ci, cj), level))
    return cells


_NBRS: dict[Vertex, tuple[Vertex, ...]] = {}


def neighbors(v: Vertex) -> tuple[Vertex, ...]:
    """The four nearest neighbors of a gasket vertex.

    These are the corners of the exactly two filled unit triangles incident
    to ``v``, with ``v`` itself removed.  Results are memoized; the table is
    shared by every walker in the process.
    """
    cached = _NBRS.get(v)
    if cached is not None:
        return cached
    cells = incident_cells(v, 0)
    if not cells:
        raise ValueError(f"{v} is not a gasket vertex")
    out = []
    for cell in cells:
        for c in cell.corners():
            if c != v and c not in out:
                out.append(c)
    nbrs = tuple(out)
    if len(nbrs) != 4:
        raise AssertionError(f"vertex {v} has {len(nbrs)} neighbors, expected 4")
    _NBRS[v] = nbrs
    return nbrs


def neighbors_on_grid(v: Vertex, level: int) -> tuple[Vertex, ...]:
    """Neighbors of ``v`` in the coarse graph whose edges have length 2**level.

    The coarse graph is the gasket scaled by 2**level, so the unit-scale
    neighbor table is reused after shifting coordinates.
    """
    if level == 0:
        return neighbors(v)
    i, j = v
    base = neighbors((i >> level, j >> level))
    return tuple((x << level, y << level) for x, y in base)


def on_grid(v: Vertex, level: int) -> bool:
    """Whether both coordinates are divisible by 2**level (v in G_level)."""
    return ((v[0] | v[1]) & ((1 << level) - 1)) == 0


def vertex_level(v: Vertex, cap: int = 62) -> int:
    """The largest M with v in G_M, saturated at ``cap``.

    The origin belongs to every G_M; callers pass the working level as the
    cap, which is the only level ever queried there.
    """
    i, j = v
    if i == 0 and j == 0:
        return cap
    m = 0
    while ((i | j) & 1) == 0 and m < cap:
        i >>= 1
        j >>= 1
        m += 1
    return m


def cell_of_step(u: Vertex, v: Vertex, level: int) -> TriangleId:
    """The unique filled 2**level-triangle containing both u and v.

    The only candidates are the (at most two) filled cells incident to u.
    """
    for cell in incident_cells(u, level):
        if cell.contains(v):
            return cell
    raise NoCommonCell(f"{u} and {v} share no filled level-{level} cell")


def count_up_triangles(level_span: int) -> int:
    """Count unit upward triangles inside the doubled gasket of generation N.

    Scans every candidate corner of the right half (i + j <= 2**N - 1) and
    doubles the tally for the mirror half.  Equals 2 * 3**N.
    """
    if level_span < 0:
        raise ValueError("level_span must be >= 0")
    n = 1 << level_span
    count = 0
    for j in range(n):
        for i in range(n - j):
            if (i & j) == 0:
                count += 1
    return 2 * count


def is_lattice_path(path: LatticePath) -> bool:
    """Whether consecutive vertices are gasket neighbors throughout."""
    if not path:
        return False
    if not is_vertex(path[0]):
        return False
    for a, b in zip(path, path[1:]):
        if b not in neighbors(a):
            return False
    return True


def path_length(path: LatticePath) -> int:
    return len(path) - 1


def euclid_sq(u: Vertex, v: Vertex) -> int:
    """Squared Euclidean distance between two lattice vertices (an integer)."""
    di = u[0] - v[0]
    dj = u[1] - v[1]
    return di * di + di * dj + dj * dj


def path_to_csv(path: LatticePath) -> str:
    """Repo-wide path dump format: header step,i,j and exact integer rows."""
    lines = ["step,i,j"]
    lines.extend(f"{t},{i},{j}" for t, (i, j) in enumerate(path))
    return "\n".join(lines) + "\n"


def path_from_csv(text: str) -> list[Vertex]:
    rows = text.strip().splitlines()
    if not rows or rows[0].strip() != "step,i,j":
        raise ValueError("expected header 'step,i,j'")
    out: list[Vertex] = []
    for t, row in enumerate(rows[1:]):
        step, i, j = (int(x) for x in row.split(","))
        if step != t:
            raise ValueError(f"non-contiguous step column at row {t}")
        out.append((i, j))
    return out


def triangles_of_generation(level_span: int) -> list[TriangleId]:
    """All filled unit triangles of the doubled generation-N gasket (for rendering)."""
    n = 1 << level_span
    out = []
    for j in range(n):
        for i in range(-n, n - j):
            if up_triangle_exists((i, j), 0):
                out.append(TriangleId((i, j), 0))
    return out


def iter_vertices(level_span: int) -> Iterable[Vertex]:
    """Vertices of the doubled generation-N gasket, left and right halves."""
    n = 1 << level_span
    seen: set[Vertex] = set()
    for tri in triangles_of_generation(level_span):
        for c in tri.corners():
            if c not in seen:
                seen.add(c)
                yield c
