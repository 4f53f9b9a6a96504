"""Exact rational computation of the loop-erased crossing laws.

The level-1 conditioned walks take values in two glued cells, so the pair
(current loop-erased path from the origin, conditioning phase) is a finite
Markov chain: one uniform neighbor step followed by stack-erasure
truncation, absorbed at the surrounding coarse vertices.  Expected visit
counts of every transient state are solved by Gaussian elimination over
exact rationals; reading off the absorbing steps gives the unnormalized law
of each final self-avoiding shape, and dividing by the probability of the
conditioning event (exactly 1/4, or 1/16 via the corner) gives the two
shape distributions.  Nothing is transcribed from a drawing: the shapes are
whatever the chain produces, and an independent path enumeration pins the
supports.

From the shape table everything else is derived: the bivariate generating
functions of the one-visit/two-visit cell counts, their composition across
levels, the 2x2 mean matrix with its Perron eigenvalue

   lambda = (20 + sqrt(205)) / 15 = 2.28785...,

and the moments of the almost-sure branching limits, obtained by matching
Taylor coefficients in the fixed-point equations of the Laplace transforms,
phi1(lambda t) = Phi(phi1(t), phi2(t)) and the analogous equation for phi2.

The mean matrix is always the derivative pair of Phi and Theta at (1, 1);
its second column is (2/5, 13/15), the values forced by trace 8/3 and
determinant 13/15 of the eigenvalue pair above and confirmed by every Monte
Carlo gate in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import mpmath
from mpmath import mpf

from . import eraser
from .lattice import ORIGIN, Vertex, apex, corner, neighbors, on_grid
from .walker import CrossingVariant

Rational = Fraction
Matrix2 = tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]

PRECISION_DPS = 60


class SingularSystem(RuntimeError):
    """The absorption system lost rank; indicates a broken chain invariant."""


class GeneratingFunctionMismatch(RuntimeError):
    """A reconstructed generating function differs from its reference form."""


class CompositionCapExceeded(ValueError):
    """Exact composition was requested beyond the configured level cap."""


class IllConditionedSystem(RuntimeError):
    """A moment system pivot fell below tolerance (cannot happen for lambda > 1)."""


# ---------------------------------------------------------------------------
# Bivariate polynomials over the rationals
# ---------------------------------------------------------------------------


class BivariatePoly:
    """A finitely supported map (deg_x, deg_y) -> Fraction."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Mapping[tuple[int, int], Fraction | int] | None = None):
        clean: dict[tuple[int, int], Fraction] = {}
        if coeffs:
            for key, c in coeffs.items():
                c = Fraction(c)
                if c:
                    clean[key] = c
        self.coeffs = clean

    def __eq__(self, other) -> bool:
        return isinstance(other, BivariatePoly) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    def __repr__(self):
        terms = [f"{c}*x^{a}*y^{b}" for (a, b), c in sorted(self.coeffs.items())]
        return "BivariatePoly(" + " + ".join(terms) + ")"

    def __add__(self, other: "BivariatePoly") -> "BivariatePoly":
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            s = out.get(key, 0) + c
            if s:
                out[key] = s
            else:
                out.pop(key, None)
        res = BivariatePoly()
        res.coeffs = out
        return res

    def scale(self, c: Fraction | int) -> "BivariatePoly":
        c = Fraction(c)
        res = BivariatePoly()
        res.coeffs = {k: v * c for k, v in self.coeffs.items()} if c else {}
        return res

    def __mul__(self, other: "BivariatePoly") -> "BivariatePoly":
        # Multiply through integer polynomials with a common denominator;
        # large exact products are much faster this way than term-by-term
        # Fraction arithmetic.
        if not self.coeffs or not other.coeffs:
            return BivariatePoly()
        dl, il = self._as_integers()
        dr, ir = other._as_integers()
        if len(il) > len(ir):
            il, ir = ir, il
        # Degrees stay far below 2**12; packing exponent pairs into one int
        # keeps the accumulator off tuple hashing in the hot loop.
        left = [((a << 12) | b, c) for (a, b), c in il.items()]
        right = [((a << 12) | b, c) for (a, b), c in ir.items()]
        acc: dict[int, int] = {}
        get = acc.get
        for ka, c in left:
            for kb, c2 in right:
                key = ka + kb
                acc[key] = get(key, 0) + c * c2
        den = dl * dr
        res = BivariatePoly()
        res.coeffs = {
            (k >> 12, k & 0xFFF): Fraction(n, den) for k, n in acc.items() if n
        }
        return res

    def _as_integers(self) -> tuple[int, dict[tuple[int, int], int]]:
        den = 1
        for c in self.coeffs.values():
            den = den * c.denominator // _gcd(den, c.denominator)
        return den, {k: int(c * den) for k, c in self.coeffs.items()}

    def __call__(self, x, y):
        total = 0
        for (a, b), c in self.coeffs.items():
            if isinstance(x, Fraction) or isinstance(x, int):
                total += c * x**a * y**b
            else:
                total = total + mpf(c.numerator) / mpf(c.denominator) * x**a * y**b
        return total

    def compose(self, px: "BivariatePoly", py: "BivariatePoly") -> "BivariatePoly":
        """Substitute x -> px, y -> py, exactly."""
        pow_x: dict[int, BivariatePoly] = {0: BivariatePoly({(0, 0): 1})}
        pow_y: dict[int, BivariatePoly] = {0: BivariatePoly({(0, 0): 1})}

        def power(table, base, n):
            while n not in table:
                k = max(table)
                table[k + 1] = table[k] * base
            return table[n]

        out = BivariatePoly()
        for (a, b), c in sorted(self.coeffs.items()):
            term = power(pow_x, px, a) * power(pow_y, py, b)
            out = out + term.scale(c)
        return out

    def gradient_at_one(self) -> tuple[Fraction, Fraction]:
        """(d/dx, d/dy) evaluated at (1, 1)."""
        gx = sum((c * a for (a, b), c in self.coeffs.items()), Fraction(0))
        gy = sum((c * b for (a, b), c in self.coeffs.items()), Fraction(0))
        return gx, gy

    def min_total_degree(self) -> int:
        return min(a + b for a, b in self.coeffs)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


# ---------------------------------------------------------------------------
# The absorbing chain on loop-erased states
# ---------------------------------------------------------------------------


def _erased_step(path: tuple[Vertex, ...], v: Vertex) -> tuple[Vertex, ...]:
    """One stack-erasure update of a self-avoiding path."""
    if v in path:
        return path[: path.index(v) + 1]
    return path + (v,)


@dataclass(frozen=True)
class CrossingLaw:
    """Exact law of the loop-erased outcome of one conditioned crossing."""

    variant: CrossingVariant
    event_probability: Fraction
    masses: dict[tuple[Vertex, ...], Fraction]  # conditional, sums to 1


def solve_shape_distribution(variant: CrossingVariant) -> CrossingLaw:
    """Solve the absorbing chain for the loop-erased crossing law at level 1.

    States are (loop-erased path from the origin, phase); the phase flips
    when the via-corner walk registers its visit to b_1.  Transitions apply
    one uniform neighbor step followed by stack-erasure truncation.
    """
    via = variant is CrossingVariant.VIA_CORNER
    a1, b1 = apex(1), corner(1)
    start = ((ORIGIN,), 0)

    index: dict[tuple, int] = {start: 0}
    states: list[tuple] = [start]
    # per state: list of (successor index | None, absorbed vertex | None)
    moves: list[list[tuple[int | None, Vertex | None]]] = []
    k = 0
    while k < len(states):
        path, phase = states[k]
        row: list[tuple[int | None, Vertex | None]] = []
        for u in neighbors(path[-1]):
            absorbed = False
            if on_grid(u, 1):
                if phase == 0 and u != ORIGIN:
                    if via and u == b1:
                        succ = (_erased_step(path, u), 1)
                    else:
                        absorbed = True
                elif phase == 1 and u != b1:
                    absorbed = True
                else:
                    succ = (_erased_step(path, u), phase)
            else:
                succ = (_erased_step(path, u), phase)
            if absorbed:
                row.append((None, u))
            else:
                j = index.get(succ)
                if j is None:
                    j = len(states)
                    index[succ] = j
                    states.append(succ)
                row.append((j, None))
        moves.append(row)
        k += 1

    n = len(states)
    quarter = Fraction(1, 4)
    # Expected visit counts nu solve nu = delta_start + nu T, i.e. per state s:
    # nu_s - sum_{p -> s} nu_p / 4 = [s == start].
    rows: list[dict[int, Fraction]] = [{s: Fraction(1)} for s in range(n)]
    for p, row in enumerate(moves):
        for j, _ in row:
            if j is not None:
                rows[j][p] = rows[j].get(p, Fraction(0)) - quarter
    rhs = [Fraction(0)] * n
    rhs[0] = Fraction(1)
    visits = _solve_sparse(rows, rhs)

    success_vertex = a1
    raw: dict[tuple[Vertex, ...], Fraction] = {}
    event = Fraction(0)
    for s, row in enumerate(moves):
        path, phase = states[s]
        if via and phase == 0:
            continue  # phase-0 absorptions can never end at the apex via b_1
        for j, absorbed in row:
            if absorbed == success_vertex:
                shape = _erased_step(path, absorbed)
                w = visits[s] * quarter
                raw[shape] = raw.get(shape, Fraction(0)) + w
                event += w
    if event == 0:
        raise SingularSystem("conditioning event has zero mass")
    masses = {shape: w / event for shape, w in sorted(raw.items())}
    return CrossingLaw(variant=variant, event_probability=event, masses=masses)


def _solve_sparse(rows: list[dict[int, Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    """Gaussian elimination on sparse rational rows (pivot by row sparsity)."""
    n = len(rows)
    rows = [dict(r) for r in rows]
    rhs = list(rhs)
    used = [False] * n
    pivots: list[tuple[int, int]] = []
    for col in range(n):
        best = -1
        for r in range(n):
            if not used[r] and rows[r].get(col):
                if best < 0 or len(rows[r]) < len(rows[best]):
                    best = r
        if best < 0:
            raise SingularSystem(f"no pivot for column {col}")
        used[best] = True
        pivots.append((col, best))
        prow, pval = rows[best], rows[best][col]
        for r in range(n):
            if used[r]:
                continue
            c = rows[r].get(col)
            if not c:
                continue
            f = c / pval
            for k, v in prow.items():
                s = rows[r].get(k, Fraction(0)) - f * v
                if s:
                    rows[r][k] = s
                else:
                    rows[r].pop(k, None)
            rhs[r] -= f * rhs[best]
    x = [Fraction(0)] * n
    for col, r in reversed(pivots):
        acc = rhs[r]
        for k, v in rows[r].items():
            if k != col:
                acc -= v * x[k]
        x[col] = acc / rows[r][col]
    return x


# ---------------------------------------------------------------------------
# Shape table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShapeInfo:
    shape_id: str
    path: tuple[Vertex, ...]
    s1: int
    s2: int
    p_direct: Fraction
    p_via: Fraction


@dataclass(frozen=True)
class ShapeTable:
    shapes: tuple[ShapeInfo, ...]

    @property
    def by_path(self) -> dict[tuple[Vertex, ...], ShapeInfo]:
        return {s.path: s for s in self.shapes}

    @property
    def by_id(self) -> dict[str, ShapeInfo]:
        return {s.shape_id: s for s in self.shapes}

    def column(self, variant: CrossingVariant) -> dict[str, Fraction]:
        if variant is CrossingVariant.DIRECT:
            return {s.shape_id: s.p_direct for s in self.shapes if s.p_direct}
        return {s.shape_id: s.p_via for s in self.shapes if s.p_via}


def _shape_rank(path: tuple[Vertex, ...], s: tuple[int, int]) -> tuple:
    via = corner(1) in path
    if via:
        rank = {(2, 1): 0, (1, 2): 1}[s]
    else:
        rank = {(2, 0): 0, (1, 1): 1, (0, 2): 2, (2, 1): 2, (3, 0): 3}[s]
    return (via, rank, path)


@lru_cache(maxsize=None)
def shape_table() -> ShapeTable:
    """The 17-row table of loop-erased crossing shapes and their two laws.

    Seven shapes avoid b_1 and carry the direct law; all ten carry the
    via-corner law (erasure can remove the b_1 visit together with a loop).
    """
    direct = solve_shape_distribution(CrossingVariant.DIRECT)
    via = solve_shape_distribution(CrossingVariant.VIA_CORNER)
    paths = sorted(set(direct.masses) | set(via.masses), key=lambda p: _shape_rank(p, _s_counts(p)))
    shapes = []
    for k, path in enumerate(paths, start=1):
        s1, s2 = _s_counts(path)
        shapes.append(
            ShapeInfo(
                shape_id=f"w{k}",
                path=path,
                s1=s1,
                s2=s2,
                p_direct=direct.masses.get(path, Fraction(0)),
                p_via=via.masses.get(path, Fraction(0)),
            )
        )
    return ShapeTable(shapes=tuple(shapes))


def _s_counts(path: tuple[Vertex, ...]) -> tuple[int, int]:
    return eraser.skeleton(path, 0).s_counts()


def enumerate_self_avoiding_crossings(allow_corner: bool) -> set[tuple[Vertex, ...]]:
    """Independent support oracle: depth-first enumeration of self-avoiding
    origin-to-apex paths inside the closed level-1 cell."""
    from .lattice import TriangleId

    cell = TriangleId(ORIGIN, 1)
    a1, b1 = apex(1), corner(1)
    found: set[tuple[Vertex, ...]] = set()

    def extend(path: list[Vertex]):
        head = path[-1]
        if head == a1:
            found.add(tuple(path))
            return
        for u in neighbors(head):
            if not cell.contains(u) or u in path:
                continue
            if u == b1 and not allow_corner:
                continue
            path.append(u)
            extend(path)
            path.pop()

    extend([ORIGIN])
    return found


# ---------------------------------------------------------------------------
# Generating functions
# ---------------------------------------------------------------------------

PHI_REFERENCE = BivariatePoly(
    {
        (2, 0): Fraction(15, 30),
        (1, 1): Fraction(8, 30),
        (0, 2): Fraction(1, 30),
        (2, 1): Fraction(2, 30),
        (3, 0): Fraction(4, 30),
    }
)

THETA_REFERENCE = BivariatePoly(
    {
        (2, 0): Fraction(5, 45),
        (1, 1): Fraction(11, 45),
        (0, 2): Fraction(2, 45),
        (2, 1): Fraction(14, 45),
        (3, 0): Fraction(8, 45),
        (1, 2): Fraction(5, 45),
    }
)


def build_phi_theta(table: ShapeTable) -> tuple[BivariatePoly, BivariatePoly]:
    """Generating functions of (s1, s2) under the two laws, checked against
    their reference closed forms (a mismatch is a fatal error, not a fallback)."""
    phi = BivariatePoly({})
    theta = BivariatePoly({})
    for s in table.shapes:
        key = (s.s1, s.s2)
        if s.p_direct:
            phi = phi + BivariatePoly({key: s.p_direct})
        if s.p_via:
            theta = theta + BivariatePoly({key: s.p_via})
    if phi != PHI_REFERENCE:
        raise GeneratingFunctionMismatch(f"direct generating function {phi!r}")
    if theta != THETA_REFERENCE:
        raise GeneratingFunctionMismatch(f"via-corner generating function {theta!r}")
    return phi, theta


def compose_level(
    phi: BivariatePoly, theta: BivariatePoly, N: int, cap: int = 4
) -> tuple[BivariatePoly, BivariatePoly]:
    """Exact level-N generating functions by iterated substitution.

    Uses the one-step-at-the-root form of the recursion (substitute the
    level-N pair into the base pair), which composes the small polynomial
    with the large one; the result is the same chain of substitutions.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > cap:
        raise CompositionCapExceeded(f"exact composition capped at level {cap}")
    phi_n, theta_n = phi, theta
    for _ in range(N - 1):
        phi_n, theta_n = phi.compose(phi_n, theta_n), theta.compose(phi_n, theta_n)
    return phi_n, theta_n


def mean_matrix(phi: BivariatePoly, theta: BivariatePoly) -> Matrix2:
    """Formal partial derivatives at (1, 1): expected per-cell offspring counts."""
    return (phi.gradient_at_one(), theta.gradient_at_one())


def mat_mul(a: Matrix2, b: Matrix2) -> Matrix2:
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(2)) for j in range(2)) for i in range(2)
    )  # type: ignore[return-value]


def mat_pow(m: Matrix2, n: int) -> Matrix2:
    out: Matrix2 = ((Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
    for _ in range(n):
        out = mat_mul(out, m)
    return out


# ---------------------------------------------------------------------------
# Spectral data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenData:
    mean_matrix: Matrix2
    lam: mpf
    lam_prime: mpf
    u: tuple[mpf, mpf]  # right eigenvector, |u| = 1
    v: tuple[mpf, mpf]  # left eigenvector, |v| = 1
    c: mpf  # v . u
    dim: mpf  # log(lam) / log(2)

    @property
    def mean_b(self) -> tuple[mpf, mpf]:
        """Means of the per-type branching limits: u_i / (v . u).

        Unit-norm eigenvectors force this normalization; it is the one the
        Monte Carlo acceptance run validates.
        """
        return (self.u[0] / self.c, self.u[1] / self.c)


def _to_mpf(q: Fraction) -> mpf:
    return mpf(q.numerator) / mpf(q.denominator)


def eigen_data(m: Matrix2, dps: int = PRECISION_DPS) -> EigenData:
    """Closed-form spectral data of a strictly positive 2x2 rational matrix."""
    if any(entry <= 0 for row in m for entry in row):
        raise ValueError("mean matrix must be strictly positive")
    with mpmath.workdps(dps):
        tr = m[0][0] + m[1][1]
        det = m[0][0] * m[1][1] - m[0][1] * m[1][0]
        disc = tr * tr - 4 * det
        root = mpmath.sqrt(_to_mpf(disc))
        lam = (_to_mpf(tr) + root) / 2
        lam_prime = (_to_mpf(tr) - root) / 2
        # Right eigenvector (M12, lam - M11); left eigenvector (M21, lam - M11).
        u_raw = (_to_mpf(m[0][1]), lam - _to_mpf(m[0][0]))
        v_raw = (_to_mpf(m[1][0]), lam - _to_mpf(m[0][0]))
        u_norm = mpmath.sqrt(u_raw[0] ** 2 + u_raw[1] ** 2)
        v_norm = mpmath.sqrt(v_raw[0] ** 2 + v_raw[1] ** 2)
        u = (u_raw[0] / u_norm, u_raw[1] / u_norm)
        v = (v_raw[0] / v_norm, v_raw[1] / v_norm)
        c = u[0] * v[0] + u[1] * v[1]
        dim = mpmath.log(lam) / mpmath.log(2)
    return EigenData(mean_matrix=m, lam=lam, lam_prime=lam_prime, u=u, v=v, c=c, dim=dim)


@lru_cache(maxsize=None)
def spectral_data() -> EigenData:
    """Eigen data of the crossing-law mean matrix (cached)."""
    phi, theta = build_phi_theta(shape_table())
    return eigen_data(mean_matrix(phi, theta))


# ---------------------------------------------------------------------------
# Moments of the branching limits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentTable:
    """Raw moments m_k = (E[B1^k], E[B2^k]) for k = 1..K."""

    K: int
    moments: tuple[tuple[mpf, mpf], ...]
    eig: EigenData

    def moment(self, k: int) -> tuple[mpf, mpf]:
        return self.moments[k - 1]

    @property
    def w_prime_mean(self) -> mpf:
        """Mean of the limiting rescaled path length, (v1 + 2 v2) E[B1]."""
        v1, v2 = self.eig.v
        return (v1 + 2 * v2) * self.moments[0][0]

    @property
    def w_prime_variance(self) -> mpf:
        v1, v2 = self.eig.v
        m1, m2 = self.moments[0][0], self.moments[1][0]
        return (v1 + 2 * v2) ** 2 * (m2 - m1 * m1)


def _series_mul(a: list[mpf], b: list[mpf], K: int) -> list[mpf]:
    out = [mpf(0)] * (K + 1)
    for i, ai in enumerate(a):
        if i > K:
            break
        for j, bj in enumerate(b):
            if i + j > K:
                break
            out[i + j] += ai * bj
    return out


def _series_compose(poly: BivariatePoly, f: list[mpf], g: list[mpf], K: int) -> list[mpf]:
    """Taylor coefficients of poly(f(t), g(t)) through order K."""
    powers_f: dict[int, list[mpf]] = {0: [mpf(1)] + [mpf(0)] * K}
    powers_g: dict[int, list[mpf]] = {0: [mpf(1)] + [mpf(0)] * K}

    def power(table, base, n):
        while n not in table:
            k = max(table)
            table[k + 1] = _series_mul(table[k], base, K)
        return table[n]

    out = [mpf(0)] * (K + 1)
    for (a, b), c in sorted(poly.coeffs.items()):
        term = _series_mul(power(powers_f, f, a), power(powers_g, g, b), K)
        cm = _to_mpf(c)
        for i in range(K + 1):
            out[i] += cm * term[i]
    return out


def moment_table(
    K: int,
    eig: EigenData | None = None,
    phi: BivariatePoly | None = None,
    theta: BivariatePoly | None = None,
    dps: int = PRECISION_DPS,
) -> MomentTable:
    """Solve for moments of the limits by Taylor matching in the fixed-point
    equations of their Laplace transforms.

    Order k >= 2 gives the linear system (lambda^k I - M) m_k = r_k with r_k
    a polynomial in lower moments; it is solvable because lambda^k exceeds
    the spectral radius.  The first moment is the eigenvector normalization
    u / (v . u).
    """
    if not 1 <= K <= 12:
        raise ValueError("moment order must be in 1..12")
    if eig is None:
        eig = spectral_data()
    if phi is None or theta is None:
        phi, theta = build_phi_theta(shape_table())
    m = eig.mean_matrix
    with mpmath.workdps(dps):
        lam = eig.lam
        mb = eig.mean_b
        # Taylor coefficients a_k = m_k / k!.
        f = [mpf(1), mb[0]]
        g = [mpf(1), mb[1]]
        fact = mpf(1)
        moments: list[tuple[mpf, mpf]] = [(mb[0], mb[1])]
        for k in range(2, K + 1):
            fact *= k
            f.append(mpf(0))
            g.append(mpf(0))
            r1 = _series_compose(phi, f, g, k)[k]
            r2 = _series_compose(theta, f, g, k)[k]
            lk = lam**k
            a11 = lk - _to_mpf(m[0][0])
            a12 = -_to_mpf(m[0][1])
            a21 = -_to_mpf(m[1][0])
            a22 = lk - _to_mpf(m[1][1])
            det = a11 * a22 - a12 * a21
            if abs(det) < mpf(10) ** (-30):
                raise IllConditionedSystem(f"moment system at order {k}")
            x1 = (r1 * a22 - a12 * r2) / det
            x2 = (a11 * r2 - r1 * a21) / det
            f[k] = x1
            g[k] = x2
            moments.append((x1 * fact, x2 * fact))
    return MomentTable(K=K, moments=tuple(moments), eig=eig)


def functional_equation_residual(
    table: MomentTable,
    t: float | mpf,
    phi: BivariatePoly | None = None,
    theta: BivariatePoly | None = None,
) -> tuple[mpf, mpf, mpf]:
    """|phi_i(lambda t) - composition(phi1(t), phi2(t))| with both sides
    truncated at the table's order, plus a one-extra-term remainder estimate.

    The truncation matches coefficients, so the residual isolates numerical
    error in the moment solve; the estimate reports how far the degree-K
    polynomials can sit from the true entire functions at this t.
    """
    if phi is None or theta is None:
        phi, theta = build_phi_theta(shape_table())
    K = table.K
    with mpmath.workdps(PRECISION_DPS):
        t = mpf(t)
        lam = table.eig.lam
        fact = [mpf(1)]
        for k in range(1, K + 2):
            fact.append(fact[-1] * k)
        f = [mpf(1)] + [table.moments[k - 1][0] / fact[k] for k in range(1, K + 1)]
        g = [mpf(1)] + [table.moments[k - 1][1] / fact[k] for k in range(1, K + 1)]
        lhs1 = sum(f[k] * (lam * t) ** k for k in range(K + 1))
        lhs2 = sum(g[k] * (lam * t) ** k for k in range(K + 1))
        comp1 = _series_compose(phi, f, g, K)
        comp2 = _series_compose(theta, f, g, K)
        rhs1 = sum(comp1[k] * t**k for k in range(K + 1))
        rhs2 = sum(comp2[k] * t**k for k in range(K + 1))
        # Remainder scale: the first dropped Taylor term of the larger argument.
        ext = moment_table(min(K + 1, 12), table.eig, phi, theta)
        a_next = ext.moments[min(K, 11)][0] / fact[min(K + 1, 12)]
        remainder = abs(a_next * (lam * t) ** (min(K + 1, 12)))
        return abs(lhs1 - rhs1), abs(lhs2 - rhs2), remainder


# ---------------------------------------------------------------------------
# Exact finite-depth count moments (rational cross-checks for Monte Carlo)
# ---------------------------------------------------------------------------


def offspring_laws(table: ShapeTable | None = None) -> tuple[list, list]:
    """[(probability, (s1, s2))] per parent type (one-visit, two-visit)."""
    if table is None:
        table = shape_table()
    t1 = [(s.p_direct, (s.s1, s.s2)) for s in table.shapes if s.p_direct]
    t2 = [(s.p_via, (s.s1, s.s2)) for s in table.shapes if s.p_via]
    return t1, t2


def type_count_mean(depth: int, ancestor: tuple[int, int] = (1, 0)) -> tuple[Fraction, Fraction]:
    """Exact E[(S1, S2)] after ``depth`` refinements: ancestor row times M^depth."""
    phi, theta = build_phi_theta(shape_table())
    mn = mat_pow(mean_matrix(phi, theta), depth)
    a = (Fraction(ancestor[0]), Fraction(ancestor[1]))
    return (
        a[0] * mn[0][0] + a[1] * mn[1][0],
        a[0] * mn[0][1] + a[1] * mn[1][1],
    )


def length_mean(depth: int, ancestor: tuple[int, int] = (1, 0)) -> Fraction:
    s1, s2 = type_count_mean(depth, ancestor)
    return s1 + 2 * s2


def _offspring_raw_second(law) -> Matrix2:
    out = [[Fraction(0)] * 2 for _ in range(2)]
    for p, (s1, s2) in law:
        vec = (Fraction(s1), Fraction(s2))
        for i in range(2):
            for j in range(2):
                out[i][j] += p * vec[i] * vec[j]
    return tuple(tuple(row) for row in out)  # type: ignore[return-value]


def type_count_second_moment(depth: int, ancestor: tuple[int, int] = (1, 0)) -> Matrix2:
    """Exact E[(S1,S2)^T (S1,S2)] after ``depth`` refinements (rational)."""
    table = shape_table()
    phi, theta = build_phi_theta(table)
    m = mean_matrix(phi, theta)
    laws = offspring_laws(table)
    raw = [_offspring_raw_second(law) for law in laws]
    # Centered per-parent fluctuation matrices D_i = E[xi^T xi] - M_i^T M_i.
    d = []
    for i in range(2):
        mi = m[i]
        d.append(
            tuple(tuple(raw[i][a][b] - mi[a] * mi[b] for b in range(2)) for a in range(2))
        )
    mean = (Fraction(ancestor[0]), Fraction(ancestor[1]))
    second: list[list[Fraction]] = [
        [mean[0] * mean[0], mean[0] * mean[1]],
        [mean[1] * mean[0], mean[1] * mean[1]],
    ]
    for _ in range(depth):
        mt = tuple(zip(*m))  # transpose
        nxt = mat_mul(mat_mul(mt, tuple(tuple(r) for r in second)), m)  # type: ignore[arg-type]
        acc = [list(row) for row in nxt]
        for i in range(2):
            for a in range(2):
                for b in range(2):
                    acc[a][b] += mean[i] * d[i][a][b]
        second = acc
        mean = (
            mean[0] * m[0][0] + mean[1] * m[1][0],
            mean[0] * m[0][1] + mean[1] * m[1][1],
        )
    return tuple(tuple(row) for row in second)  # type: ignore[return-value]


def length_variance(depth: int, ancestor: tuple[int, int] = (1, 0)) -> Fraction:
    """Exact Var[S1 + 2 S2] after ``depth`` refinements."""
    second = type_count_second_moment(depth, ancestor)
    mean = type_count_mean(depth, ancestor)
    e2 = (
        second[0][0]
        + 2 * second[0][1]
        + 2 * second[1][0]
        + 4 * second[1][1]
    )
    e1 = mean[0] + 2 * mean[1]
    return e2 - e1 * e1


# ---------------------------------------------------------------------------
# Report assembly (CLI surface)
# ---------------------------------------------------------------------------


def _frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _poly_json(p: BivariatePoly) -> dict[str, str]:
    return {f"{a},{b}": _frac_str(c) for (a, b), c in sorted(p.coeffs.items())}


def exact_report(moment_order: int = 8) -> dict:
    """Everything the exact layer knows, JSON-ready and deterministic."""
    table = shape_table()
    phi, theta = build_phi_theta(table)
    eig = spectral_data()
    moments = moment_table(moment_order, eig, phi, theta)
    with mpmath.workdps(PRECISION_DPS):
        report = {
            "shapes": [
                {
                    "id": s.shape_id,
                    "path": [list(v) for v in s.path],
                    "s1": s.s1,
                    "s2": s.s2,
                    "p_direct": _frac_str(s.p_direct),
                    "p_via": _frac_str(s.p_via),
                }
                for s in table.shapes
            ],
            "phi": _poly_json(phi),
            "theta": _poly_json(theta),
            "mean_matrix": [[_frac_str(c) for c in row] for row in eig.mean_matrix],
            "lambda": mpmath.nstr(eig.lam, 50),
            "lambda_prime": mpmath.nstr(eig.lam_prime, 50),
            "u": [mpmath.nstr(x, 50) for x in eig.u],
            "v": [mpmath.nstr(x, 50) for x in eig.v],
            "c": mpmath.nstr(eig.c, 50),
            "dim": mpmath.nstr(eig.dim, 50),
            "moments": {
                str(k): [mpmath.nstr(x, 40) for x in moments.moment(k)]
                for k in range(1, moments.K + 1)
            },
            "w_prime_mean": mpmath.nstr(moments.w_prime_mean, 40),
        }
    return report
