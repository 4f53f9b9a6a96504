from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from gasket_lerw.eraser import chronological_erase
from gasket_lerw.lattice import ORIGIN, apex, corner, euclid_sq, neighbors, on_grid
from gasket_lerw.harness import chi_square
from gasket_lerw.walker import (
    CrossingVariant,
    StepBudgetExceeded,
    attempt_crossing,
    coarse_grain,
    hitting_indices,
    hitting_times,
    replica_rng,
    sample_crossing,
)

DIRECT = CrossingVariant.DIRECT
VIA = CrossingVariant.VIA_CORNER


def walk_from_dirs(dirs):
    path = [ORIGIN]
    for d in dirs:
        path.append(neighbors(path[-1])[d])
    return path


walks = st.lists(st.integers(0, 3), min_size=0, max_size=80).map(walk_from_dirs)


class TestHittingTimes:
    def test_counts_same_vertex_once_in_a_row(self):
        w = [(0, 0), (1, 0), (1, 1), (1, 0), (2, 0)]
        assert hitting_times(w, 1).times == (0, 4)

    def test_unit_level_counts_every_vertex(self):
        w = [(0, 0), (1, 0), (0, 1)]
        assert hitting_times(w, 0).times == (0, 1, 2)

    def test_apex_hit(self):
        w = [(0, 0), (1, 0), (1, 1), (0, 2)]
        assert hitting_times(w, 1).times == (0, 3)

    def test_repeated_coarse_vertex_countable_after_other_hit(self):
        # O, b_1, O: the second O visit counts because b_1 intervened.
        w = [(0, 0), (1, 0), (2, 0), (1, 0), (0, 0)]
        assert hitting_times(w, 1).times == (0, 2, 4)


class TestCoarseGrain:
    def test_example(self):
        assert coarse_grain([(0, 0), (1, 0), (1, 1), (0, 2)], 1) == [(0, 0), (0, 2)]

    def test_fixed_point(self):
        p = [(0, 0), (2, 0), (0, 2)]
        assert coarse_grain(p, 1) == p

    def test_endpoint_validation(self):
        with pytest.raises(ValueError):
            coarse_grain([(0, 0), (1, 0)], 1)

    @given(walks, st.integers(0, 3), st.integers(0, 3))
    def test_composition_keeps_the_coarser_level(self, w, k, extra):
        m = k + extra
        once = coarse_grain(w, m, validate=False)
        twice = coarse_grain(coarse_grain(w, k, validate=False), m, validate=False)
        assert once == twice

    @given(walks, st.integers(0, 3))
    def test_coarse_vertices_on_grid_and_distinct_in_a_row(self, w, m):
        g = coarse_grain(w, m, validate=False)
        assert all(on_grid(v, m) for v in g)
        assert all(a != b for a, b in zip(g, g[1:]))

    def test_coarse_law_matches_exact_crossing_law(self):
        # The level-1 coarse view of a level-2 crossing is itself a crossing
        # walk of the doubled cells; each specific coarse path w has exact
        # probability 4 * (1/4)**len(w).  Bucket short paths, pool the rest.
        rng = replica_rng(20240, 0)
        n = 1000
        seen: dict[tuple, int] = {}
        for _ in range(n):
            p = sample_crossing(2, DIRECT, "rejection", rng)
            key = tuple((i // 2, j // 2) for i, j in coarse_grain(p, 1))
            seen[key] = seen.get(key, 0) + 1

        def enumerate_crossings(max_len):
            out = {}

            def extend(path):
                head = path[-1]
                if on_grid(head, 1) and head != ORIGIN:
                    if head == apex(1):
                        out[tuple(path)] = 4.0 * 0.25 ** (len(path) - 1)
                    return
                if len(path) > max_len:
                    return
                for u in neighbors(head):
                    path.append(u)
                    extend(path)
                    path.pop()

            extend([ORIGIN])
            return out

        exact_mass = enumerate_crossings(7)
        rest = 1.0 - sum(exact_mass.values())
        observed = {"rest": 0}
        expected = {"rest": rest}
        for key, prob in exact_mass.items():
            expected[str(key)] = prob
        for key, cnt in seen.items():
            k = str(key) if key in exact_mass else "rest"
            observed[k] = observed.get(k, 0) + cnt
        _, p_value = chi_square(observed, expected)
        assert p_value > 1e-3


class TestConditioning:
    def test_acceptance_fractions(self):
        rng = replica_rng(11, 0)
        n = 30_000
        acc = sum(attempt_crossing(1, DIRECT, rng) is not None for _ in range(n)) / n
        sigma = (0.25 * 0.75 / n) ** 0.5
        assert abs(acc - 0.25) < 3 * sigma
        acc = sum(attempt_crossing(1, VIA, rng) is not None for _ in range(n)) / n
        p = 1 / 16
        sigma = (p * (1 - p) / n) ** 0.5
        assert abs(acc - p) < 3 * sigma

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("variant", [DIRECT, VIA])
    @pytest.mark.parametrize("method", ["rejection", "hierarchical"])
    def test_crossing_structure(self, n, variant, method):
        rng = replica_rng(5 * n, 1)
        for _ in range(40):
            p = sample_crossing(n, variant, method, rng)
            assert p[0] == ORIGIN and p[-1] == apex(n)
            hits = [p[t] for t in hitting_indices(p, n)]
            if variant is DIRECT:
                assert hits == [ORIGIN, apex(n)]
            else:
                assert hits == [ORIGIN, corner(n), apex(n)]
            # Absorption confines the walk near the origin.
            assert all(euclid_sq(v, ORIGIN) <= 4 * 4**n for v in p)
            assert all(b in neighbors(a) for a, b in zip(p, p[1:]))

    def test_invalid_method_and_level(self):
        with pytest.raises(ValueError):
            sample_crossing(0, DIRECT, "rejection", replica_rng(0, 0))
        with pytest.raises(ValueError):
            sample_crossing(1, DIRECT, "importance", replica_rng(0, 0))

    def test_step_budget(self):
        with pytest.raises(StepBudgetExceeded):
            sample_crossing(4, DIRECT, "rejection", replica_rng(0, 0), max_steps=10)


class TestHierarchicalAgreesWithRejection:
    @pytest.mark.parametrize("n,samples", [(2, 4000), (3, 10_000), (4, 1500)])
    def test_length_distributions_match(self, n, samples):
        r1 = replica_rng(100 + n, 0)
        r2 = replica_rng(200 + n, 1)
        a = [len(sample_crossing(n, DIRECT, "rejection", r1)) for _ in range(samples)]
        b = [len(sample_crossing(n, DIRECT, "hierarchical", r2)) for _ in range(samples)]
        assert ks_2samp(a, b).pvalue > 1e-3

    def test_coarse_shape_law_matches(self, table):
        # Chi-square of the erased coarse pattern, hierarchical vs exact law.
        from gasket_lerw.harness import classify_top_shape

        rng = replica_rng(303, 0)
        counts: dict[str, int] = {}
        n = 4000
        for _ in range(n):
            p = sample_crossing(3, DIRECT, "hierarchical", rng)
            sid = classify_top_shape(p, 3, table)
            counts[sid] = counts.get(sid, 0) + 1
        expected = {k: float(v) for k, v in table.column(DIRECT).items()}
        _, p_value = chi_square(counts, expected)
        assert p_value > 1e-3


@pytest.mark.slow
def test_mean_length_growth_band():
    # Raw crossing lengths average 5**N steps (all four first-exit corners
    # are exchangeable, so conditioning leaves the mean hitting time alone),
    # and consecutive levels grow by a factor inside (4.5, 5.5).
    rng = replica_rng(77, 0)
    means = {}
    plan = {
        2: ("rejection", 1200),
        3: ("rejection", 1200),
        4: ("rejection", 900),
        5: ("hierarchical", 800),
        6: ("hierarchical", 400),
    }
    for n, (method, cnt) in plan.items():
        lens = np.array(
            [len(sample_crossing(n, DIRECT, method, rng)) - 1 for _ in range(cnt)], dtype=float
        )
        means[n] = lens.mean()
        z = (lens.mean() - 5.0**n) / (lens.std(ddof=1) / cnt**0.5)
        assert abs(z) < 3.5, (n, z)
    for n in (2, 3, 4, 5):
        ratio = means[n + 1] / means[n]
        assert 4.5 < ratio < 5.5, (n, ratio)


def test_replica_rng_reproducible_and_disjoint():
    a1 = replica_rng(9, 0).integers(0, 1 << 30, 8).tolist()
    a2 = replica_rng(9, 0).integers(0, 1 << 30, 8).tolist()
    b = replica_rng(9, 1).integers(0, 1 << 30, 8).tolist()
    assert a1 == a2
    assert a1 != b


def test_unit_chronological_erasure_of_crossing_is_self_avoiding():
    rng = replica_rng(4, 2)
    for _ in range(200):
        p = sample_crossing(1, DIRECT, "rejection", rng)
        e = chronological_erase(p)
        assert len(set(e)) == len(e)
        assert e[0] == ORIGIN and e[-1] == apex(1)
