from __future__ import annotations

from fractions import Fraction
from math import sqrt

import numpy as np
import pytest

from gasket_lerw import limit
from gasket_lerw.exact import moment_table, spectral_data
from gasket_lerw.harness import chi_square
from gasket_lerw.limit import (
    ANCESTOR,
    InsufficientDepth,
    RefinementKernels,
    SkeletonCell,
    box_count_dimension,
    branching_mean_prediction,
    coarse_grain_refined,
    growth_rate,
    length_statistics,
    projects_onto,
    refinement_table,
    sample_branching_counts,
    sample_limit_path,
    sample_refined_family,
)
from gasket_lerw.walker import replica_rng

F = Fraction


class TestRefinementTable:
    def test_kernel_sizes(self, kernels):
        assert len(kernels.type_one) == 7
        assert len(kernels.type_two) == 10

    def test_kernels_normalize(self, kernels):
        assert sum(p for p, _ in kernels.type_one) == 1
        assert sum(p for p, _ in kernels.type_two) == 1

    def test_simplest_shape_has_half_mass(self, kernels):
        (p, shape), = [(p, s) for p, s in kernels.type_one if s.shape_id == "w1"]
        assert p == F(1, 2)
        assert [c.kind for c in shape.children] == [1, 1]

    def test_mean_offspring_vectors(self, kernels):
        assert kernels.mean_offspring(1) == (F(9, 5), F(2, 5))
        assert kernels.mean_offspring(2) == (F(26, 15), F(13, 15))

    def test_children_chain_inside_frame(self, kernels):
        for law in (kernels.type_one, kernels.type_two):
            for _, shape in law:
                cells = shape.children
                assert cells[0].entry == (0, 0)
                assert cells[-1].exit == (0, 2)
                assert all(a.exit == b.entry for a, b in zip(cells, cells[1:]))


class TestSampling:
    def test_depth_zero_is_the_ancestor(self):
        path = sample_limit_path(0, replica_rng(0, 0))
        assert path.cells == (ANCESTOR,)
        assert path.level_counts == ((1, 0),)
        poly = path.polyline()
        assert poly[0] == (0.0, 0.0, 0.0)
        assert poly[-1][0] == pytest.approx(1.0)
        assert (poly[-1][1], poly[-1][2]) == (pytest.approx(0.5), pytest.approx(sqrt(3) / 2))

    def test_projective_family(self):
        fam = sample_refined_family(8, replica_rng(42, 0))
        for m in range(1, 9):
            assert projects_onto(fam[m], fam[m - 1])

    def test_triangles_distinct_and_chained(self):
        fam = sample_refined_family(8, replica_rng(43, 0))
        for member in fam:
            corners = [c.corner for c in member.cells]
            assert len(set(corners)) == len(corners)
            assert all(a.exit == b.entry for a, b in zip(member.cells, member.cells[1:]))
            assert member.cells[0].entry == (0, 0)
            assert member.cells[-1].exit == (0, 1 << member.depth)

    def test_same_stream_reproduces(self):
        a = sample_limit_path(6, replica_rng(7, 3))
        b = sample_limit_path(6, replica_rng(7, 3))
        assert a == b

    def test_timestamps_increments(self):
        path = sample_limit_path(5, replica_rng(9, 0))
        lam = float(growth_rate())
        dt = lam**-5
        times = path.timestamps()
        assert len(times) == len(path.cells)
        prev = 0.0
        for t, cell in zip(times, path.cells):
            assert t - prev == pytest.approx(dt * cell.duration_units, rel=1e-12)
            prev = t
        s1, s2 = path.s_counts()
        assert times[-1] == pytest.approx(dt * (s1 + 2 * s2), rel=1e-12)

    def test_coarse_grain_rereads_kinds_monotonically(self):
        fam = sample_refined_family(7, replica_rng(11, 0))
        changed = 0
        for m in range(1, 8):
            got = coarse_grain_refined(fam[m])
            for a, b in zip(got.cells, fam[m - 1].cells):
                assert (a.entry, a.exit, a.third) == (b.entry, b.exit, b.third)
                assert a.kind == b.kind or (b.kind, a.kind) == (2, 1)
                changed += a.kind != b.kind
        assert changed > 0

    def test_coarse_grain_depth_zero_rejected(self):
        with pytest.raises(ValueError):
            coarse_grain_refined(sample_limit_path(0, replica_rng(0, 0)))


class TestBranchingStatistics:
    def test_one_step_offspring_frequencies(self, table):
        # 1e5 refinement draws per parent kind against the exact kernels.
        rng = np.random.default_rng(5)
        for kind in (1, 2):
            law = [
                (s.shape_id, float(s.p_direct if kind == 1 else s.p_via))
                for s in table.shapes
                if (s.p_direct if kind == 1 else s.p_via)
            ]
            probs = np.array([p for _, p in law])
            draws = rng.multinomial(100_000, probs / probs.sum())
            observed = {sid: int(c) for (sid, _), c in zip(law, draws)}
            expected = {sid: p for sid, p in law}
            _, p_value = chi_square(observed, expected)
            assert p_value > 1e-3

    def test_population_mean_matches_matrix_power(self):
        rng = np.random.default_rng(17)
        runs = 40_000
        for depth in (1, 2, 4, 6):
            counts = sample_branching_counts(depth, runs, rng)
            want = branching_mean_prediction(depth)
            for j in (0, 1):
                got = counts[:, j].mean()
                se = counts[:, j].std(ddof=1) / sqrt(runs)
                assert abs(got - want[j]) < 3.5 * se, (depth, j)

    def test_geometric_sampler_matches_count_sampler_mean(self):
        # The path sampler's per-level counts follow the same branching law.
        rng = replica_rng(23, 0)
        depth = 5
        counts = np.array(
            [sample_limit_path(depth, rng).s_counts() for _ in range(3000)], dtype=float
        )
        want = branching_mean_prediction(depth)
        for j in (0, 1):
            se = counts[:, j].std(ddof=1) / sqrt(len(counts))
            assert abs(counts[:, j].mean() - want[j]) < 3.5 * se

    def test_martingale_mean_is_flat(self, eig):
        rng = np.random.default_rng(29)
        lam = float(eig.lam)
        u = (float(eig.u[0]), float(eig.u[1]))
        runs = 30_000
        base = None
        for depth in (2, 4, 8):
            counts = sample_branching_counts(depth, runs, rng)
            vals = (counts[:, 0] * u[0] + counts[:, 1] * u[1]) * lam**-depth
            se = vals.std(ddof=1) / sqrt(runs)
            if base is None:
                base = vals.mean()
            else:
                assert abs(vals.mean() - base) < 3.5 * se

    def test_ancestor_type_two_starts_from_via_law(self):
        rng = np.random.default_rng(31)
        counts = sample_branching_counts(1, 30_000, rng, ancestor=(0, 1))
        want = branching_mean_prediction(1, ancestor=(0, 1))
        for j in (0, 1):
            se = counts[:, j].std(ddof=1) / sqrt(len(counts))
            assert abs(counts[:, j].mean() - want[j]) < 3.5 * se


class TestLengthStatistics:
    def test_summary_against_moment_engine(self):
        rng = replica_rng(37, 0)
        samples = [sample_limit_path(10, rng) for _ in range(400)]
        summary = length_statistics(samples)
        assert summary.n == 400 and summary.depth == 10
        assert abs(summary.mean_z) < 3.5
        assert abs(summary.variance_z) < 3.5
        assert all(v >= 0 for v in summary.histogram_counts)
        assert min(s.scaled_length() for s in samples) > 0

    def test_prediction_values(self, eig):
        mt = moment_table(2, eig)
        rng = replica_rng(38, 0)
        summary = length_statistics([sample_limit_path(6, rng) for _ in range(10)])
        assert summary.predicted_mean == pytest.approx(float(mt.w_prime_mean))
        assert summary.predicted_variance == pytest.approx(float(mt.w_prime_variance))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            length_statistics([])
        rng = replica_rng(39, 0)
        mixed = [sample_limit_path(2, rng), sample_limit_path(3, rng)]
        with pytest.raises(ValueError):
            length_statistics(mixed)


class TestBoxCounting:
    def test_deterministic_two_child_refinement_has_slope_one(self, kernels):
        w1 = next(s for p, s in kernels.type_one if s.shape_id == "w1")
        det = RefinementKernels(type_one=((F(1), w1),), type_two=kernels.type_two)
        path = sample_limit_path(8, replica_rng(0, 0), det)
        assert box_count_dimension(path) == pytest.approx(1.0)
        assert path.level_counts[-1] == (2**8, 0)

    def test_insufficient_depth(self):
        with pytest.raises(InsufficientDepth):
            box_count_dimension(sample_limit_path(3, replica_rng(0, 0)))

    def test_average_slope_near_dimension(self):
        target = float(spectral_data().dim)
        slopes = [
            box_count_dimension(sample_limit_path(10, replica_rng(50, k))) for k in range(60)
        ]
        assert abs(np.mean(slopes) - target) < 0.05


def test_skeleton_cell_helpers():
    cell = SkeletonCell(entry=(0, 0), exit=(0, 1), third=(1, 0), kind=2)
    assert cell.corner == (0, 0)
    assert cell.duration_units == 2
