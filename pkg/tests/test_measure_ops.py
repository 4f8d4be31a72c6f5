import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ifslab.measure_ops import (
    DEPTH_CAP_DEFAULT,
    DepthExceededError,
    DiscreteMeasure,
    MassMismatchError,
    TestFunction,
    cesaro_dual,
    dual_apply,
    endpoint_limit,
    push,
    push_n,
    wasserstein1,
)

try:
    from scipy.stats import wasserstein_distance as _scipy_w1
except ImportError:  # pragma: no cover - scipy is in the test extra
    _scipy_w1 = None


small_measures = st.lists(
    st.tuples(
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        st.floats(min_value=1e-6, max_value=1.0, allow_nan=False),
    ),
    min_size=1,
    max_size=8,
).map(lambda ps: DiscreteMeasure([p for p, _ in ps], [w for _, w in ps]))


def _normalized(mu):
    return DiscreteMeasure(mu.positions, mu.weights / mu.total_mass)


class TestDiscreteMeasure:
    def test_point(self):
        mu = DiscreteMeasure.point(0.3)
        assert len(mu) == 1 and mu.positions[0] == 0.3 and mu.weights[0] == 1.0
        assert mu.is_probability()

    def test_from_samples_collapses_duplicates(self):
        mu = DiscreteMeasure.from_samples([0.1, 0.5, 0.1, 0.5, 0.5, 0.9, 0.1, 0.1])
        assert mu.positions.tolist() == [0.1, 0.5, 0.9]
        assert mu.weights.tolist() == [0.5, 0.375, 0.125]

    def test_from_samples_empty_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure.from_samples([])

    def test_sorting_and_zero_drop(self):
        mu = DiscreteMeasure([0.9, 0.1, 0.5], [0.2, 0.0, 0.8])
        assert mu.positions.tolist() == [0.5, 0.9]
        assert mu.weights.tolist() == [0.8, 0.2]

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([0.5], [-0.1])

    def test_position_outside_unit_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([1.5], [1.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([0.1, 0.2], [1.0])

    def test_merge_chain_collapses(self):
        # consecutive gaps below tol merge greedily into one atom at the
        # weighted mean
        mu = DiscreteMeasure([0.5, 0.5 + 5e-14, 0.5 + 1e-13], [1.0, 2.0, 1.0], merge_tol=1e-13)
        assert len(mu) == 1
        assert mu.weights[0] == 4.0
        assert mu.positions[0] == pytest.approx(0.5 + 5e-14, abs=1e-15)

    def test_merge_respects_large_gaps(self):
        mu = DiscreteMeasure([0.1, 0.1 + 1e-12, 0.9], [1.0, 1.0, 1.0], merge_tol=1e-13)
        assert len(mu) == 3

    def test_total_mass_uses_compensated_sum(self):
        n = 10_000
        mu = DiscreteMeasure(np.linspace(0, 1, n), np.full(n, 1.0 / n))
        assert mu.total_mass == 1.0

    def test_integrate_matches_manual(self):
        mu = DiscreteMeasure([0.2, 0.6], [0.25, 0.75])
        assert mu.integrate(lambda x: x) == 0.25 * 0.2 + 0.75 * 0.6
        assert mu.integrate(np.square) == pytest.approx(0.25 * 0.04 + 0.75 * 0.36)

    def test_mass_of_interval_closed_ends(self):
        mu = DiscreteMeasure([0.2, 0.5, 0.8], [0.3, 0.3, 0.4])
        assert mu.mass_of_interval(0.2, 0.5) == pytest.approx(0.6)
        assert mu.mass_of_interval(0.21, 0.49) == 0.0
        with pytest.raises(ValueError):
            mu.mass_of_interval(0.6, 0.4)

    def test_cdf_right_continuous(self):
        mu = DiscreteMeasure([0.5], [1.0])
        grid = np.array([0.0, 0.5 - 1e-16, 0.5, 1.0])
        assert mu.cdf(grid).tolist() == [0.0, 0.0, 1.0, 1.0]

    def test_quantize_conserves_mass_and_bounds_support(self):
        rng = np.random.default_rng(7)
        mu = DiscreteMeasure(rng.random(5000), np.full(5000, 2e-4))
        q = mu.quantize(100)
        assert len(q) <= 101
        assert q.total_mass == pytest.approx(mu.total_mass, abs=1e-15)
        assert np.all(np.isin(q.positions, np.arange(101) / 100))

    def test_json_roundtrip(self):
        mu = DiscreteMeasure([0.1, 0.9], [0.4, 0.6])
        back = DiscreteMeasure.from_json_obj(json.loads(json.dumps(mu.to_json_obj())))
        assert back.positions.tolist() == mu.positions.tolist()
        assert back.weights.tolist() == mu.weights.tolist()

    def test_csv_roundtrip_exact(self):
        # 17 significant digits reproduce any double exactly
        mu = DiscreteMeasure([1.0 / 3.0, 2.0 / 7.0], [0.1, 0.9])
        back = DiscreteMeasure.from_csv(mu.to_csv())
        assert back.positions.tolist() == mu.positions.tolist()
        assert back.weights.tolist() == mu.weights.tolist()

    def test_csv_header_required(self):
        with pytest.raises(ValueError):
            DiscreteMeasure.from_csv("x,y\n0.1,1.0\n")


class TestTestFunction:
    def test_tent_shape(self):
        phi = TestFunction.tent(0.5)
        assert phi(0.0) == 1.0 and phi(0.5) == 0.0 and phi(1.0) == 0.0
        assert phi(0.25) == 0.5
        assert phi.value_at_0 == 1.0 and phi.sup_norm == 1.0 and phi.limit_at_1 == 0.0
        assert phi.is_compactly_supported_in_01
        assert not phi.is_nondecreasing

    def test_ramp_shape(self):
        psi = TestFunction.ramp(0.5)
        assert psi(0.0) == 0.0 and psi(0.5) == 1.0 and psi(1.0) == 1.0
        assert psi(0.25) == 0.5
        assert psi.is_nondecreasing and psi.is_constant_near_1
        assert not psi.is_compactly_supported_in_01

    def test_constant(self):
        phi = TestFunction.constant(0.7)
        assert phi(0.0) == phi(0.33) == phi(1.0) == 0.7
        assert phi.is_nondecreasing and phi.is_constant_near_1

    def test_pwl_nodes(self):
        phi = TestFunction.pwl([(0.0, 0.0), (0.2, 1.0), (0.4, 0.0), (1.0, 0.0)])
        assert phi(0.1) == 0.5
        assert phi(0.3) == pytest.approx(0.5, abs=1e-15)
        assert phi(0.7) == 0.0
        assert phi.is_compactly_supported_in_01

    def test_vector_call(self):
        phi = TestFunction.tent(0.5)
        out = phi(np.array([0.0, 0.25, 1.0]))
        assert isinstance(out, np.ndarray)
        assert out.tolist() == [1.0, 0.5, 0.0]

    def test_scaled(self):
        phi = TestFunction.tent(0.5).scaled(2.0)
        assert phi(0.0) == 2.0 and phi.sup_norm == 2.0
        zero = TestFunction.tent(0.5).scaled(0.0)
        assert zero(0.3) == 0.0 and zero.sup_norm == 0.0

    @pytest.mark.parametrize(
        "desc",
        ["tent:0.5", "ramp:0.9", "const:1", "pwl:[[0,0],[0.5,1],[1,1]]"],
    )
    def test_parse_descriptor_roundtrip(self, desc):
        phi = TestFunction.parse(desc)
        again = TestFunction.parse(phi.descriptor)
        for y in np.linspace(0, 1, 37):
            assert phi(float(y)) == again(float(y))

    def test_parse_pwl_from_file(self, tmp_path):
        path = tmp_path / "nodes.json"
        path.write_text(json.dumps([[0, 0], [0.5, 1], [1, 1]]))
        phi = TestFunction.parse(f"pwl:@{path}")
        assert phi(0.25) == 0.5 and phi(0.75) == 1.0

    @pytest.mark.parametrize(
        "bad",
        ["tent", "spike:0.5", "tent:0", "tent:1", "ramp:2", "pwl:[[0.1,0],[1,1]]"],
    )
    def test_parse_rejects(self, bad):
        with pytest.raises(ValueError):
            TestFunction.parse(bad)


class TestPushforward:
    def test_one_step_from_half(self, ifs03):
        mu = push_n(ifs03, 0.5, 1)
        assert mu.positions.tolist() == [0.3, 0.7]
        assert mu.weights.tolist() == [0.5, 0.5]

    def test_two_steps_from_half(self, ifs03):
        mu = push_n(ifs03, 0.5, 2)
        # decimal targets hold to the last ulp or two; the measure path
        # interpolates on the node table, the trajectory path on complements
        assert mu.positions == pytest.approx([0.18, 0.42, 0.58, 0.82], abs=5e-16)
        assert mu.weights.tolist() == [0.25, 0.25, 0.25, 0.25]

    def test_zero_steps_identity(self, ifs03):
        mu = push_n(ifs03, 0.37, 0)
        assert mu.positions.tolist() == [0.37] and mu.weights.tolist() == [1.0]

    def test_fixed_point_absorbs(self, ifs03):
        mu = push_n(ifs03, 0.0, 12)
        assert len(mu) == 1 and mu.positions[0] == 0.0

    def test_depth_cap(self, ifs03):
        with pytest.raises(DepthExceededError):
            push_n(ifs03, 0.5, DEPTH_CAP_DEFAULT + 1)
        with pytest.raises(ValueError):
            push_n(ifs03, 0.5, -1)

    def test_push_preserves_mass(self, ifs03):
        mu = DiscreteMeasure([0.2, 0.4, 0.9], [0.5, 0.25, 0.25])
        out = push(ifs03, mu)
        assert out.total_mass == pytest.approx(1.0, abs=1e-15)
        assert len(out) == 6

    def test_word_count_without_merge(self, ifs03):
        mu = push_n(ifs03, 0.5, 10, merge_tol=0.0)
        assert len(mu) == 1024
        assert mu.total_mass == pytest.approx(1.0, abs=1e-13)

    def test_merge_keeps_integrals(self, ifs03):
        # the two branch images overlap, so the default tolerance collapses
        # near-collisions; integrals must not notice
        exact = push_n(ifs03, 0.5, 12, merge_tol=0.0)
        merged = push_n(ifs03, 0.5, 12)
        assert len(merged) < len(exact)
        phi = TestFunction.tent(0.5)
        assert merged.integrate(phi) == pytest.approx(exact.integrate(phi), abs=1e-12)


class TestDual:
    def test_zero_steps_is_pointwise(self, ifs03):
        phi = TestFunction.tent(0.5)
        assert dual_apply(ifs03, phi, 0.25, 0) == phi(0.25)

    def test_one_step_example(self, ifs03):
        assert dual_apply(ifs03, TestFunction.tent(0.5), 0.25, 1) == 0.5

    def test_cesaro_example(self, ifs03):
        assert cesaro_dual(ifs03, TestFunction.tent(0.5), 0.25, 2) == 0.5

    def test_constant_fixed_by_dual(self, ifs03):
        for n in (0, 1, 5, 12):
            assert dual_apply(ifs03, TestFunction.constant(1.0), 0.5, n) == pytest.approx(
                1.0, abs=1e-14
            )

    def test_depth_cap(self, ifs03):
        phi = TestFunction.tent(0.5)
        with pytest.raises(DepthExceededError):
            dual_apply(ifs03, phi, 0.5, DEPTH_CAP_DEFAULT + 1)
        with pytest.raises(ValueError):
            cesaro_dual(ifs03, phi, 0.5, 0)

    @given(
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        st.integers(min_value=0, max_value=8),
    )
    def test_duality_with_pushforward(self, ifs03, x, n):
        # Koopman average at x equals integrating against the pushforward of
        # the point mass at x; the two sides share no code path
        phi = TestFunction.pwl([(0.0, 0.3), (0.35, 0.9), (0.62, 0.1), (1.0, 0.4)])
        lhs = dual_apply(ifs03, phi, x, n)
        rhs = push_n(ifs03, x, n, merge_tol=0.0).integrate(phi)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_deep_tail_block_agrees_with_shallow(self, ifs03):
        # depth 22 crosses the scalar-prefix/vector-tail split at 20
        phi = TestFunction.tent(0.5)
        mu = push_n(ifs03, 0.25, 22, merge_tol=0.0, depth_cap=25)
        assert dual_apply(ifs03, phi, 0.25, 22) == pytest.approx(
            mu.integrate(phi), abs=1e-12
        )


class TestWasserstein:
    def test_endpoint_masses(self):
        d0, d1 = DiscreteMeasure.point(0.0), DiscreteMeasure.point(1.0)
        assert wasserstein1(d0, d1) == 1.0

    def test_two_points(self):
        a, b = DiscreteMeasure.point(0.2), DiscreteMeasure.point(0.75)
        assert wasserstein1(a, b) == pytest.approx(0.55, abs=1e-15)

    def test_self_distance_zero(self):
        mu = DiscreteMeasure([0.1, 0.6], [0.5, 0.5])
        assert wasserstein1(mu, mu) == 0.0

    def test_mass_mismatch(self):
        with pytest.raises(MassMismatchError):
            wasserstein1(DiscreteMeasure.point(0.5), DiscreteMeasure([0.5], [0.5]))

    def test_split_against_point(self):
        mix = DiscreteMeasure([0.0, 1.0], [0.5, 0.5])
        mid = DiscreteMeasure.point(0.5)
        assert wasserstein1(mix, mid) == pytest.approx(0.5, abs=1e-15)

    @given(small_measures, small_measures)
    def test_symmetry(self, mu, nu):
        mu, nu = _normalized(mu), _normalized(nu)
        assert wasserstein1(mu, nu) == pytest.approx(wasserstein1(nu, mu), abs=1e-13)

    @given(small_measures, small_measures, small_measures)
    def test_triangle_inequality(self, mu, nu, rho):
        mu, nu, rho = _normalized(mu), _normalized(nu), _normalized(rho)
        lhs = wasserstein1(mu, rho)
        rhs = wasserstein1(mu, nu) + wasserstein1(nu, rho)
        assert lhs <= rhs + 1e-12

    @pytest.mark.skipif(_scipy_w1 is None, reason="scipy not installed")
    @given(small_measures, small_measures)
    def test_against_scipy_oracle(self, mu, nu):
        mu, nu = _normalized(mu), _normalized(nu)
        ref = _scipy_w1(mu.positions, nu.positions, mu.weights, nu.weights)
        assert wasserstein1(mu, nu) == pytest.approx(ref, abs=1e-12)


class TestEndpointLimit:
    def test_interior(self):
        mu = endpoint_limit(0.25)
        assert mu.positions.tolist() == [0.0, 1.0]
        assert mu.weights.tolist() == [0.75, 0.25]

    @pytest.mark.parametrize("x,pos", [(0.0, 0.0), (1.0, 1.0)])
    def test_degenerate(self, x, pos):
        mu = endpoint_limit(x)
        assert len(mu) == 1 and mu.positions[0] == pos

    def test_domain(self):
        with pytest.raises(ValueError):
            endpoint_limit(1.5)
