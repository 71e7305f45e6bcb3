"""Transport solvers: sinkhorn, closed-form weighting, GCG, barycentric map."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subot.errors import DimensionMismatch, ZeroMassRow
from subot.ot import (
    Coupling,
    OtParams,
    barycentric_map,
    entropic_objective,
    gcg_solve,
    group_lasso_value,
    partial_ot_source_weights,
    sinkhorn,
    zero_mass_rows,
)
from subot.substructure import CostMatrix

# frozen 2x2 closed form for C=[[0,1],[1,0]], lambda=1, uniform marginals:
# within a row the ratio is e, rows/cols sum to 0.5
A_2X2 = 0.36552928931500245  # 0.5 * e / (1 + e)
B_2X2 = 0.13447071068499755  # 0.5 / (1 + e)


def cost(values) -> CostMatrix:
    return CostMatrix(values=np.asarray(values, dtype=float), kind="center")


def unif(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def random_instance(seed: int, k_s: int = 5, k_t: int = 4, scale: float = 3.0):
    rng = np.random.default_rng(seed)
    C = cost(rng.uniform(0.0, scale, size=(k_s, k_t)))
    a = rng.uniform(0.2, 1.0, k_s)
    b = rng.uniform(0.2, 1.0, k_t)
    return C, a / a.sum(), b / b.sum()


def column_scaling_oracle(C: np.ndarray, w_t: np.ndarray, lam: float, sweeps: int = 25):
    """Independent fixed point of alternating projection with only the column
    constraint active: start from the entropic kernel and rescale columns
    until nothing moves."""
    plan = np.exp(-C / lam - 1.0)
    for _ in range(sweeps):
        plan = plan * (w_t / plan.sum(axis=0))[None, :]
    return plan


class TestSinkhorn:
    def test_2x2_closed_form(self):
        cpl = sinkhorn(cost([[0.0, 1.0], [1.0, 0.0]]), unif(2), unif(2), 1.0)
        np.testing.assert_allclose(
            cpl.plan, [[A_2X2, B_2X2], [B_2X2, A_2X2]], atol=1e-5
        )

    def test_constant_cost_gives_outer_product(self):
        a = np.array([0.2, 0.3, 0.5])
        b = np.array([0.6, 0.4])
        cpl = sinkhorn(cost(np.full((3, 2), 7.0)), a, b, 1.0)
        np.testing.assert_allclose(cpl.plan, np.outer(a, b), atol=1e-9)

    def test_row_permutation_equivariance(self):
        C, a, b = random_instance(0)
        perm = np.array([3, 0, 4, 1, 2])
        base = sinkhorn(C, a, b, 0.7).plan
        permuted = sinkhorn(cost(C.values[perm]), a[perm], b, 0.7).plan
        np.testing.assert_allclose(permuted, base[perm], atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_marginals_satisfied(self, seed):
        C, a, b = random_instance(seed)
        cpl = sinkhorn(C, a, b, 1.0, tol=1e-9)
        assert cpl.converged
        np.testing.assert_allclose(cpl.plan.sum(axis=1), a, atol=1e-8)
        np.testing.assert_allclose(cpl.plan.sum(axis=0), b, atol=1e-8)

    def test_large_lambda_approaches_independent_coupling(self):
        C, a, b = random_instance(1, 3, 3)
        cpl = sinkhorn(C, a, b, 1e3)
        np.testing.assert_allclose(cpl.plan, np.outer(a, b), atol=1e-3)

    def test_small_lambda_survives_log_domain(self):
        C, a, b = random_instance(2)
        cpl = sinkhorn(C, a, b, 1e-3, tol=1e-9, max_iter=20000)
        assert np.all(np.isfinite(cpl.plan))
        np.testing.assert_allclose(cpl.plan.sum(axis=0), b, atol=1e-8)

    def test_nonconvergence_flagged(self):
        C, a, b = random_instance(3)
        cpl = sinkhorn(C, a, b, 0.01, tol=1e-14, max_iter=3)
        assert not cpl.converged
        assert cpl.residual > 0


class TestPartialOtWeights:
    def test_symmetric_instance(self):
        w_s, _ = partial_ot_source_weights(cost([[0.0, 1.0], [1.0, 0.0]]), unif(2), 1.0)
        np.testing.assert_allclose(w_s, [0.5, 0.5], atol=1e-12)

    def test_frozen_asymmetric_instance(self):
        w_s, _ = partial_ot_source_weights(cost([[0.0, 0.0], [1.0, 1.0]]), unif(2), 1.0)
        np.testing.assert_allclose(
            w_s, [0.7310585786300049, 0.2689414213699951], atol=1e-12
        )

    def test_columns_proportional_to_kernel(self):
        C, _, b = random_instance(4)
        lam = 0.8
        w_s, cpl = partial_ot_source_weights(C, b, lam)
        kernel = np.exp(-C.values / lam)
        for j in range(C.values.shape[1]):
            expected = kernel[:, j] / kernel[:, j].sum() * b[j]
            np.testing.assert_allclose(cpl.plan[:, j], expected, rtol=1e-12)

    def test_column_marginal_exact(self):
        C, _, b = random_instance(5)
        _, cpl = partial_ot_source_weights(C, b, 0.5)
        np.testing.assert_allclose(cpl.plan.sum(axis=0), b, rtol=1e-12)

    def test_weights_sum_to_one(self):
        C, _, b = random_instance(6)
        w_s, _ = partial_ot_source_weights(C, b, 2.0)
        assert abs(w_s.sum() - 1.0) <= 1e-12

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_alternating_projection_oracle(self, seed):
        C, _, b = random_instance(seed, k_s=6, k_t=5)
        lam = 1.0
        _, cpl = partial_ot_source_weights(C, b, lam)
        oracle = column_scaling_oracle(C.values, b, lam)
        np.testing.assert_allclose(cpl.plan, oracle, atol=1e-6)

    def test_single_pass(self):
        C, _, b = random_instance(7)
        _, cpl = partial_ot_source_weights(C, b, 1.0)
        assert cpl.iterations == 0
        assert cpl.converged

    def test_extreme_costs_no_underflow(self):
        # kernel exp(-C/lam) underflows in the plain domain; the log-domain
        # per-column rescale must still produce the exact softmax
        C = cost([[0.0, 2000.0], [4000.0, 0.0]])
        w_s, cpl = partial_ot_source_weights(C, unif(2), 1.0)
        assert np.all(np.isfinite(cpl.plan))
        np.testing.assert_allclose(cpl.plan.sum(axis=0), unif(2), rtol=1e-12)


class TestGroupLassoValue:
    def test_singleton_groups_reduce_to_abs_sum(self):
        plan = np.array([[0.3, 0.2], [0.1, 0.4]])
        assert group_lasso_value(plan, np.array([0, 1])) == pytest.approx(1.0)

    def test_single_group_frozen_value(self):
        plan = np.array([[0.3, 0.2], [0.1, 0.4]])
        assert group_lasso_value(plan, np.array([0, 0])) == pytest.approx(
            0.7634413615167958
        )

    def test_zero_iff_zero_plan(self):
        assert group_lasso_value(np.zeros((3, 2)), np.array([0, 0, 1])) == 0.0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_positive_on_nonzero(self, seed):
        rng = np.random.default_rng(seed)
        plan = rng.uniform(0.0, 1.0, size=(4, 3))
        plan[rng.integers(4), rng.integers(3)] += 0.1
        assert group_lasso_value(plan, rng.integers(0, 2, 4)) > 0.0


class TestGcg:
    def test_eta_zero_equals_sinkhorn(self):
        C, a, b = random_instance(8)
        params = OtParams(eta=0.0)
        cls = np.array([0, 0, 1, 1, 1])
        got = gcg_solve(C, a, b, cls, params)
        want = sinkhorn(C, a, b, params.lambda_, params.tol, params.max_sinkhorn)
        np.testing.assert_allclose(got.plan, want.plan, atol=1e-8)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_objective_trace_non_increasing(self, seed):
        C, a, b = random_instance(seed)
        cls = np.random.default_rng(seed).integers(0, 2, 5)
        cpl = gcg_solve(C, a, b, cls, OtParams(eta=0.5, max_outer=15))
        trace = np.asarray(cpl.objective_trace)
        assert np.all(np.diff(trace) <= 1e-10)

    def test_trace_values_match_objective_definition(self):
        C, a, b = random_instance(9)
        cls = np.array([0, 1, 0, 1, 0])
        params = OtParams(eta=0.7, max_outer=8)
        cpl = gcg_solve(C, a, b, cls, params)
        recomputed = entropic_objective(
            cpl.plan, C.values, params.lambda_
        ) + params.eta * group_lasso_value(cpl.plan, cls)
        assert cpl.objective_trace[-1] == pytest.approx(recomputed, rel=1e-12)

    def test_single_class_still_valid(self):
        C, a, b = random_instance(10)
        cpl = gcg_solve(C, a, b, np.zeros(5, dtype=int), OtParams(eta=1.0))
        trace = np.asarray(cpl.objective_trace)
        assert np.all(np.diff(trace) <= 1e-10)
        np.testing.assert_allclose(cpl.plan.sum(axis=0), b, atol=1e-7)

    def test_marginals_hold(self):
        C, a, b = random_instance(11)
        cls = np.array([0, 0, 0, 1, 1])
        cpl = gcg_solve(C, a, b, cls, OtParams(eta=2.0))
        np.testing.assert_allclose(cpl.plan.sum(axis=1), a, atol=1e-7)
        np.testing.assert_allclose(cpl.plan.sum(axis=0), b, atol=1e-7)

    def test_plan_invariant_under_joint_scaling(self):
        # scaling (C, lambda, eta) together rescales the objective only
        C, a, b = random_instance(12)
        cls = np.array([0, 1, 1, 0, 0])
        s = 4.0
        base = gcg_solve(C, a, b, cls, OtParams(lambda_=0.9, eta=0.6, max_outer=10))
        scaled = gcg_solve(
            cost(C.values * s), a, b, cls,
            OtParams(lambda_=0.9 * s, eta=0.6 * s, max_outer=10),
        )
        np.testing.assert_allclose(base.plan, scaled.plan, atol=1e-7)


class TestBarycentricMap:
    def test_identity_coupling(self):
        plan = np.diag([0.5, 0.5])
        p_t = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose(barycentric_map(plan, p_t), p_t)

    def test_midpoint(self):
        plan = np.array([[0.25, 0.25], [0.25, 0.25]])
        p_t = np.array([[0.0, 0.0], [2.0, 2.0]])
        np.testing.assert_allclose(barycentric_map(plan, p_t), [[1.0, 1.0], [1.0, 1.0]])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_rows_in_convex_hull_box(self, seed):
        rng = np.random.default_rng(seed)
        plan = rng.uniform(0.01, 1.0, size=(3, 4))
        plan /= plan.sum()
        p_t = rng.normal(size=(4, 2))
        mapped = barycentric_map(plan, p_t)
        assert np.all(mapped >= p_t.min(axis=0) - 1e-12)
        assert np.all(mapped <= p_t.max(axis=0) + 1e-12)

    def test_column_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        plan = rng.uniform(0.01, 1.0, size=(3, 4))
        plan /= plan.sum()
        p_t = rng.normal(size=(4, 2))
        perm = np.array([2, 0, 3, 1])
        a = barycentric_map(plan, p_t)
        b = barycentric_map(plan[:, perm], p_t[perm])
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_zero_mass_row_raises_without_cost(self):
        plan = np.array([[0.0, 0.0], [0.5, 0.5]])
        with pytest.raises(ZeroMassRow):
            barycentric_map(plan, np.eye(2))

    def test_zero_mass_row_fallback_with_cost(self):
        plan = np.array([[0.0, 0.0], [0.5, 0.5]])
        p_t = np.array([[1.0, 1.0], [9.0, 9.0]])
        c = np.array([[0.3, 5.0], [1.0, 1.0]])
        mapped = barycentric_map(plan, p_t, cost=c)
        np.testing.assert_allclose(mapped[0], [1.0, 1.0])
        assert zero_mass_rows(plan) == (0,)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            barycentric_map(np.full((2, 3), 1 / 6), np.eye(2))


class TestCouplingInvariants:
    def test_marginal_fields_must_match(self):
        plan = np.full((2, 2), 0.25)
        with pytest.raises(ValueError):
            Coupling(
                plan=plan,
                row_marginal=np.array([0.9, 0.1]),
                col_marginal=plan.sum(axis=0),
                objective_trace=(0.0,),
                iterations=1,
                converged=True,
            )

    def test_mass_must_be_one(self):
        plan = np.full((2, 2), 0.3)
        with pytest.raises(ValueError):
            Coupling(
                plan=plan,
                row_marginal=plan.sum(axis=1),
                col_marginal=plan.sum(axis=0),
                objective_trace=(0.0,),
                iterations=1,
                converged=True,
            )
