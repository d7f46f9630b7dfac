import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regmc import (
    DimensionMismatch,
    EmptyBatch,
    EstimateReport,
    NonFiniteSample,
    RngConfig,
    SampleBatch,
    Solver,
    mc_estimate,
    mse,
    rel_mse,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
dyadic = st.integers(-(10**6), 10**6).map(lambda k: k / 64)


class TestSampleBatch:
    def test_flat_points_are_one_dimensional(self):
        b = SampleBatch([0.1, 0.2, 0.3], [1.0, 2.0, 3.0])
        assert b.dim == 1
        assert b.points.shape == (3, 1)
        assert len(b) == b.n == 3

    def test_arrays_are_read_only(self):
        b = SampleBatch(np.zeros((2, 2)), [1.0, 2.0])
        with pytest.raises(ValueError):
            b.values[0] = 5.0

    def test_empty(self):
        with pytest.raises(EmptyBatch):
            SampleBatch(np.zeros((0, 1)), [])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            SampleBatch(np.zeros((3, 2)), [1.0, 2.0])

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_nonfinite(self, bad):
        with pytest.raises(NonFiniteSample):
            SampleBatch([0.5, 0.5], [1.0, bad])

    def test_points_outside_cube(self):
        with pytest.raises(ValueError):
            SampleBatch([1.5], [1.0])

    def test_split_halves(self):
        b = SampleBatch(np.linspace(0, 1, 5), np.arange(5.0))
        first, second = b.split()
        np.testing.assert_array_equal(first.values, [0.0, 1.0])
        np.testing.assert_array_equal(second.values, [2.0, 3.0, 4.0])

    def test_split_needs_two(self):
        with pytest.raises(EmptyBatch):
            SampleBatch([0.5], [1.0]).split()


class TestRngConfig:
    def test_reproducible(self):
        a = RngConfig(3, 4).generator().random(5)
        b = RngConfig(3, 4).generator().random(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RngConfig(3, 0).generator().random(5)
        b = RngConfig(3, 1).generator().random(5)
        assert not np.array_equal(a, b)

    def test_range_checked(self):
        with pytest.raises(ValueError):
            RngConfig(-1, 0)


class TestSolver:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("mc", Solver.PLAIN_MC),
            ("PlainMC", Solver.PLAIN_MC),
            ("direct", Solver.DIRECT_MATRIX),
            ("direct_matrix", Solver.DIRECT_MATRIX),
            ("sgd", Solver.SGD),
            ("Incremental", Solver.INCREMENTAL),
        ],
    )
    def test_parse(self, text, expected):
        assert Solver.parse(text) is expected

    def test_parse_unknown(self):
        with pytest.raises(ValueError):
            Solver.parse("newton")


class TestMcEstimate:
    def test_constant(self):
        r = mc_estimate(SampleBatch([0.1, 0.2, 0.3, 0.4], [1.0, 1.0, 1.0, 1.0]))
        assert r.estimate == 1.0
        assert r.solver is Solver.PLAIN_MC

    def test_two_values(self):
        r = mc_estimate(SampleBatch([0.2, 0.7], [0.0, 1.0]))
        assert r.estimate == 0.5
        assert r.model_integral == 0.0
        assert r.difference_mean == 0.5
        assert r.residual_estimate == pytest.approx(0.25)

    def test_exp_million_samples(self, stream):
        u = stream.random(10**6)
        f = np.exp(u)
        r = mc_estimate(SampleBatch(u, f))
        sigma = f.std() / math.sqrt(f.size)
        assert abs(r.estimate - (math.e - 1.0)) <= 3 * sigma

    def test_unbiased_over_replications(self):
        est = np.array(
            [
                mc_estimate(SampleBatch(u, u**2)).estimate
                for u in (RngConfig(11, r).generator().random(16) for r in range(10_000))
            ]
        )
        assert abs(est.mean() - 1.0 / 3.0) <= 4 * est.std(ddof=1) / math.sqrt(est.size)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=40), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, values, rnd):
        u = np.linspace(0, 1, len(values))
        perm = list(range(len(values)))
        rnd.shuffle(perm)
        a = mc_estimate(SampleBatch(u, values)).estimate
        b = mc_estimate(SampleBatch(u[perm], np.asarray(values)[perm])).estimate
        assert a == pytest.approx(b, rel=1e-12, abs=1e-9)


class TestEstimateReport:
    def test_from_parts_sums(self):
        r = EstimateReport.from_parts(0.25, 0.5, 10, 0.1, "DirectMatrix")
        assert r.estimate == 0.75
        assert r.solver is Solver.DIRECT_MATRIX


class TestErrorMetrics:
    def test_mse_examples(self):
        assert mse([2, 2, 2], 2) == 0.0
        assert mse([1, 3], 2) == 1.0
        assert mse([0.4, 0.6, 0.5], 0.5) == pytest.approx(0.02 / 3, rel=1e-12)

    def test_rel_mse_examples(self):
        assert rel_mse([2, 2], 2) == 0.0
        assert rel_mse([1], 0) == pytest.approx(100.0)
        assert rel_mse([0.6], 0.5) == pytest.approx(0.01 / 0.26, rel=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyBatch):
            mse([], 1.0)
        with pytest.raises(EmptyBatch):
            rel_mse([], 1.0)

    def test_nonfinite_reference(self):
        with pytest.raises(ValueError):
            mse([1.0], math.nan)

    # Dyadic grid values, so squared errors never underflow to zero.
    @given(st.lists(dyadic, min_size=1, max_size=20), dyadic)
    def test_nonnegative_and_zero_iff_exact(self, est, ref):
        m, r = mse(est, ref), rel_mse(est, ref)
        assert m >= 0 and r >= 0
        assert (m == 0) == all(e == ref for e in est)
