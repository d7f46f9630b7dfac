import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regmc import (
    DimensionMismatch,
    EmptyBatch,
    ModelFunction,
    NonFiniteSample,
    NormalSystem,
    SampleBatch,
    SgdConfig,
    SgdDiverged,
    accumulate,
    eval_model,
    make_basis,
    model_integral,
    normal_system,
    residual_estimate,
    solve_direct,
    solve_sgd,
)
from regmc.basis import make_polynomial
from regmc.regression import constant_fit, sgd_gradient

LINE = make_polynomial(1, 1)
QUAD = make_polynomial(1, 2)


class TestAccumulate:
    def test_single_sample(self):
        s = accumulate(NormalSystem.empty(2), LINE, [0.5], 2.0)
        np.testing.assert_allclose(s.matrix, [[1.0, 0.5], [0.5, 0.25]])
        np.testing.assert_allclose(s.rhs, [2.0, 1.0])
        assert s.n_accumulated == 1

    def test_empty(self):
        s = NormalSystem.empty(3)
        np.testing.assert_array_equal(s.matrix, np.zeros((3, 3)))
        np.testing.assert_array_equal(s.rhs, np.zeros(3))

    def test_two_samples(self):
        s = NormalSystem.empty(2)
        for u in (0.0, 1.0):
            s = accumulate(s, LINE, [u], u)
        np.testing.assert_allclose(s.matrix, [[2.0, 1.0], [1.0, 1.0]])
        np.testing.assert_allclose(s.rhs, [1.0, 1.0])

    def test_matches_batch_normal_system(self, rng):
        basis = make_basis("gauss", 2, 2)
        u = rng.random((30, 2))
        f = rng.normal(size=30)
        s = NormalSystem.empty(basis.count)
        for ui, fi in zip(u, f):
            s = accumulate(s, basis, ui, fi)
        ref = normal_system(SampleBatch(u, f), basis)
        np.testing.assert_allclose(s.matrix, ref.matrix, rtol=1e-12)
        np.testing.assert_allclose(s.rhs, ref.rhs, rtol=1e-12)
        np.testing.assert_array_equal(s.matrix, s.matrix.T)

    def test_nonfinite(self):
        with pytest.raises(NonFiniteSample):
            accumulate(NormalSystem.empty(2), LINE, [0.5], np.nan)

    def test_merge_equals_whole(self, rng):
        u = rng.random(40)
        f = np.sin(u)
        whole = normal_system(SampleBatch(u, f), QUAD)
        merged = normal_system(SampleBatch(u[:15], f[:15]), QUAD) + normal_system(
            SampleBatch(u[15:], f[15:]), QUAD
        )
        np.testing.assert_allclose(merged.matrix, whole.matrix, rtol=1e-13)
        np.testing.assert_allclose(merged.rhs, whole.rhs, rtol=1e-13)
        assert merged.n_accumulated == 40

    def test_merge_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            NormalSystem.empty(2) + NormalSystem.empty(3)


class TestSolveDirect:
    def test_interpolating_line(self):
        m = solve_direct(normal_system(SampleBatch([0.0, 1.0], [0.0, 1.0]), LINE), LINE)
        np.testing.assert_allclose(m.theta, [0.0, 1.0], atol=1e-14)

    def test_constant_basis_gives_mean(self, rng):
        f = rng.normal(size=17)
        basis = make_polynomial(1, 0)
        m = solve_direct(normal_system(SampleBatch(rng.random(17), f), basis), basis)
        assert m.theta[0] == pytest.approx(f.mean(), rel=1e-13)

    @pytest.mark.parametrize("u, f", [(0.3, 2.0), (0.0, 1.5), (1.0, -4.0)])
    def test_single_sample_min_norm(self, u, f):
        m = solve_direct(accumulate(NormalSystem.empty(2), LINE, [u], f), LINE)
        # Every solution satisfies t0 + t1 u = f; the shortest is along [1, u].
        np.testing.assert_allclose(m.theta, f * np.array([1.0, u]) / (1.0 + u * u), rtol=1e-12)
        assert m([u]) == pytest.approx(f, rel=1e-12)
        np.testing.assert_allclose(m.theta, np.linalg.pinv([[1.0, u]]) @ [f], rtol=1e-10)

    def test_duplicated_points_are_rank_deficient(self):
        batch = SampleBatch([0.4] * 5, [1.0] * 5)
        m = solve_direct(normal_system(batch, QUAD), QUAD)
        assert residual_estimate(m, batch) <= 1e-20
        p = QUAD.evaluate([0.4])
        np.testing.assert_allclose(m.theta, p / (p @ p), rtol=1e-10)

    def test_matches_lstsq_oracle(self, rng):
        basis = make_basis("sine", 2, 2)
        u = rng.random((50, 2))
        f = np.exp(u.sum(axis=1))
        m = solve_direct(normal_system(SampleBatch(u, f), basis), basis)
        theta, *_ = np.linalg.lstsq(basis.evaluate(u), f, rcond=None)
        np.testing.assert_allclose(m.theta, theta, rtol=1e-6, atol=1e-8)

    def test_exact_span_recovery(self, rng):
        basis = make_polynomial(2, 2)
        u = rng.random((40, 2))
        f = 1.0 + u[:, 0] - 2.0 * u[:, 0] * u[:, 1] + 0.5 * u[:, 1] ** 2
        batch = SampleBatch(u, f)
        m = solve_direct(normal_system(batch, basis), basis)
        assert residual_estimate(m, batch) <= 1e-16 * max(1.0, np.mean(f**2))

    def test_gradient_zero_at_solution(self, rng):
        basis = make_polynomial(1, 4)
        batch = SampleBatch(rng.random(64), np.cos(5 * rng.random(64)))
        s = normal_system(batch, basis)
        th = solve_direct(s, basis).theta
        lhs = np.linalg.norm(s.matrix @ th - s.rhs)
        assert lhs <= 1e-9 * (np.linalg.norm(s.matrix) * np.linalg.norm(th) + np.linalg.norm(s.rhs))

    def test_permutation_invariant(self, rng):
        u = rng.random(30)
        f = u**3
        perm = rng.permutation(30)
        a = solve_direct(normal_system(SampleBatch(u, f), QUAD), QUAD).theta
        b = solve_direct(normal_system(SampleBatch(u[perm], f[perm]), QUAD), QUAD).theta
        np.testing.assert_allclose(a, b, rtol=1e-10)

    def test_empty_system(self):
        with pytest.raises(EmptyBatch):
            solve_direct(NormalSystem.empty(2), LINE)

    @settings(max_examples=60, deadline=None)
    @given(
        st.sampled_from(["poly", "step", "gauss", "sine"]),
        st.integers(1, 3),
        st.integers(1, 60),
        st.integers(0, 2**32 - 1),
    )
    def test_never_worse_than_constant(self, kind, param, n, seed):
        rng = np.random.default_rng(seed)
        basis = make_basis(kind, 2, param)
        u = rng.random((n, 2))
        batch = SampleBatch(u, np.sin(7 * u[:, 0]) + u[:, 1] ** 2)
        r_fit = residual_estimate(solve_direct(normal_system(batch, basis), basis), batch)
        r_const = residual_estimate(constant_fit(batch, basis), batch)
        assert r_fit <= r_const + 1e-12


class TestSgd:
    def test_single_step_lands(self):
        basis = make_polynomial(1, 0)
        m = solve_sgd(SampleBatch([0.3], [2.5]), basis, SgdConfig(0.5, 1))
        assert m.theta[0] == 2.5

    def test_zero_integrand(self, rng):
        m = solve_sgd(SampleBatch(rng.random(20), np.zeros(20)), QUAD, SgdConfig(0.3, 5))
        np.testing.assert_array_equal(m.theta, 0.0)

    def test_line_fit_near_direct(self, stream):
        u = stream.random(4096)
        sgd = SgdConfig(0.01, 4)
        for f in (u, u**2):
            batch = SampleBatch(u, f)
            r_dir = residual_estimate(solve_direct(normal_system(batch, LINE), LINE), batch)
            r_sgd = residual_estimate(solve_sgd(batch, LINE, sgd, np.random.default_rng(1)), batch)
            assert r_sgd <= max(1.1 * r_dir, 1e-3)
            assert r_sgd < np.var(f)

    def test_matches_hand_loop(self, rng):
        batch = SampleBatch(rng.random(12), rng.random(12))
        cfg = SgdConfig(0.05, 3, shuffle=False)
        theta = np.zeros(3)
        p = QUAD.evaluate(batch.points)
        for _ in range(3):
            for i in range(12):
                theta = theta + 2 * 0.05 * (batch.values[i] - p[i] @ theta) * p[i]
        np.testing.assert_allclose(solve_sgd(batch, QUAD, cfg).theta, theta, rtol=1e-12)

    def test_deterministic_for_seed(self, rng):
        batch = SampleBatch(rng.random(50), rng.random(50))
        a = solve_sgd(batch, QUAD, rng=np.random.default_rng(4)).theta
        b = solve_sgd(batch, QUAD, rng=np.random.default_rng(4)).theta
        np.testing.assert_array_equal(a, b)

    def test_divergence(self):
        batch = SampleBatch(np.full(50, 1.0), np.full(50, 1.0))
        with pytest.raises(SgdDiverged):
            solve_sgd(batch, make_polynomial(1, 3), SgdConfig(5.0, 10))

    def test_default_learning_rate(self):
        assert SgdConfig().learning_rate == 0.01

    @pytest.mark.parametrize("lr, epochs", [(0.0, 1), (0.1, 0)])
    def test_config_validation(self, lr, epochs):
        with pytest.raises(ValueError):
            SgdConfig(lr, epochs)

    def test_gradient_matches_finite_differences(self, rng):
        basis = make_basis("gauss", 2, 2)
        h = 1e-6
        for _ in range(20):
            theta = rng.normal(size=basis.count)
            u = rng.random(2)
            f = rng.normal()
            an = sgd_gradient(ModelFunction(basis, theta), u, f)
            p = basis.evaluate(u)
            fd = np.array(
                [
                    ((f - p @ (theta + h * e)) ** 2 - (f - p @ (theta - h * e)) ** 2) / (2 * h)
                    for e in np.eye(basis.count)
                ]
            )
            assert np.max(np.abs(fd - an)) <= 1e-6 * np.max(np.abs(an))


class TestModel:
    def test_eval_examples(self):
        assert eval_model(ModelFunction(LINE, [1.0, 2.0]), [0.5]) == 2.0
        assert eval_model(ModelFunction.zeros(QUAD), [0.3]) == 0.0
        assert eval_model(ModelFunction(QUAD, [0.25, 0.5, 0.25]), [1.0]) == 1.0

    def test_integral_examples(self):
        assert model_integral(ModelFunction(make_polynomial(1, 0), [3.0])) == 3.0
        assert model_integral(ModelFunction(LINE, [0.0, 1.0])) == 0.5
        assert model_integral(ModelFunction(QUAD, [1.0, 1.0, 1.0])) == pytest.approx(11 / 6)

    def test_theta_size_checked(self):
        with pytest.raises(DimensionMismatch):
            ModelFunction(LINE, [1.0, 2.0, 3.0])

    def test_dimension_checked(self):
        with pytest.raises(DimensionMismatch):
            eval_model(ModelFunction.zeros(make_polynomial(2, 1)), [0.5])


class TestResidual:
    def test_perfect_fit(self):
        batch = SampleBatch([0.2, 0.8], [0.2, 0.8])
        assert residual_estimate(ModelFunction(LINE, [0.0, 1.0]), batch) == 0.0

    def test_zero_model(self):
        assert residual_estimate(ModelFunction.zeros(LINE), SampleBatch([0.1, 0.2], [1.0, 1.0])) == 1.0

    def test_constant_fit(self):
        batch = SampleBatch([0.1, 0.9], [0.0, 2.0])
        m = constant_fit(batch, make_polynomial(1, 0))
        np.testing.assert_array_equal(m.theta, [1.0])
        assert residual_estimate(m, batch) == 1.0
