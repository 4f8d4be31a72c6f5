import math

import numpy as np
import pytest

from ifslab.measure_ops import TestFunction, dual_apply
from ifslab.mc_sim import (
    Classification,
    SymbolStream,
    birkhoff,
    classify,
    ensemble,
    expectation_at,
    make_generator,
    run_ensemble,
    trajectory,
    trajectory_points,
    trajectory_stats,
)
from ifslab.pwl_core import UnitPoint, am_map

SEED = 42


class TestGenerators:
    def test_same_key_same_draws(self):
        a = make_generator(SEED, 3).random(16)
        b = make_generator(SEED, 3).random(16)
        assert a.tolist() == b.tolist()

    def test_streams_distinct(self):
        a = make_generator(SEED, 0).random(16)
        b = make_generator(SEED, 1).random(16)
        assert not np.any(a == b)

    def test_seed_is_64bit_wrapped(self):
        # seeds beyond 64 bits collide only after masking
        a = make_generator(2**64 + 5, 0).random(4)
        b = make_generator(5, 0).random(4)
        assert a.tolist() == b.tolist()


class TestSymbolStream:
    def test_random_prefix_stable(self):
        s = SymbolStream.random((0.5, 0.5), SEED, 0)
        first = s.take(10).tolist()
        assert s.take(5).tolist() == first[:5]
        assert s.take(10).tolist() == first

    def test_random_chunking_invariant(self):
        # growing the buffer in odd increments must not change the sequence
        a = SymbolStream.random((0.5, 0.5), SEED, 7)
        for k in (1, 2, 3, 17, 40):
            a.take(k)
        b = SymbolStream.random((0.5, 0.5), SEED, 7)
        assert a.take(40).tolist() == b.take(40).tolist()

    def test_shifted_drops_first(self):
        s = SymbolStream.random((0.5, 0.5), SEED, 1)
        assert s.shifted().take(5).tolist() == s.take(6).tolist()[1:]
        assert s.shifted().first_symbol() == s.symbol(1)

    def test_cyclic(self):
        s = SymbolStream.cyclic([2, 1])
        assert s.take(5).tolist() == [2, 1, 2, 1, 2]
        assert s.shifted().take(4).tolist() == [1, 2, 1, 2]

    def test_fixed_exhausts(self):
        s = SymbolStream.fixed([1, 2])
        assert s.take(2).tolist() == [1, 2]
        with pytest.raises(IndexError):
            s.take(3)

    def test_symbol_frequency_matches_weights(self):
        s = SymbolStream.random((0.25, 0.75), SEED, 11)
        syms = s.take(20_000)
        frac2 = np.count_nonzero(syms == 2) / syms.size
        assert abs(frac2 - 0.75) < 0.01  # ~3 sigma is 0.009

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            SymbolStream.random((0.7, 0.2), SEED, 0)
        with pytest.raises(ValueError):
            SymbolStream.cyclic([])
        with pytest.raises(ValueError):
            SymbolStream.fixed([0, 1])


class TestClassify:
    def test_near_zero(self):
        assert classify(1e-9) is Classification.TO_ZERO

    def test_near_one(self):
        assert classify(1.0 - 1e-9) is Classification.TO_ONE

    def test_middle(self):
        assert classify(0.4) is Classification.UNDECIDED

    def test_dual_point_keeps_resolution(self):
        # a complement far below float spacing around 1.0 still counts as
        # "near one", which a bare float comparison would miss
        p = UnitPoint.from_complement(1e-40)
        assert classify(p) is Classification.TO_ONE

    @pytest.mark.parametrize("thr", [0.0, 0.5, -1e-3, 1.0])
    def test_threshold_domain(self, thr):
        with pytest.raises(ValueError):
            classify(0.3, threshold=thr)


class TestTrajectory:
    def test_fixed_stream_hand_composition(self, ifs03):
        traj = trajectory(ifs03, 0.5, 2, SymbolStream.fixed([1, 2]))
        assert traj[0] == 0.5 and traj[1] == 0.7
        assert traj[2] == pytest.approx(0.58, abs=1e-15)

    def test_length_and_start(self, ifs03):
        traj = trajectory(ifs03, 0.25, 10, SymbolStream.random((0.5, 0.5), SEED, 0))
        assert traj.shape == (11,) and traj[0] == 0.25

    def test_deterministic_given_stream(self, ifs03):
        t1 = trajectory(ifs03, 0.3, 50, SymbolStream.random((0.5, 0.5), SEED, 4))
        t2 = trajectory(ifs03, 0.3, 50, SymbolStream.random((0.5, 0.5), SEED, 4))
        assert t1.tolist() == t2.tolist()

    def test_matches_scalar_map_steps(self, ifs03):
        stream = SymbolStream.random((0.5, 0.5), SEED, 9)
        pts = trajectory_points(ifs03, 0.8, 30, stream)
        p = UnitPoint.from_value(0.8)
        for k, s in enumerate(stream.take(30), start=1):
            p = ifs03.maps[s - 1].step_point(p)
            assert pts[k] == p  # dataclass equality: raw and flip both match

    def test_rejects_foreign_symbols(self, ifs03):
        with pytest.raises(ValueError):
            trajectory(ifs03, 0.5, 2, SymbolStream.fixed([1, 3]))

    def test_birkhoff_zero_example(self, ifs03):
        # tent(1/2) vanishes at both visited states 0.7 and 0.58
        phi = TestFunction.tent(0.5)
        assert birkhoff(ifs03, phi, 0.5, 2, SymbolStream.fixed([1, 2])) == 0.0

    def test_birkhoff_matches_fsum(self, ifs03):
        phi = TestFunction.tent(0.5)
        stream = SymbolStream.random((0.5, 0.5), SEED, 2)
        n = 100
        got = birkhoff(ifs03, phi, 0.5, n, stream)
        vals = trajectory(ifs03, 0.5, n, SymbolStream.random((0.5, 0.5), SEED, 2))
        assert got == math.fsum(phi(v) for v in vals[1:]) / n

    def test_trajectory_stats_consistency(self, ifs03):
        phi = TestFunction.tent(0.5)
        stream = SymbolStream.random((0.5, 0.5), SEED, 5)
        st = trajectory_stats(ifs03, 0.5, 200, stream, phi=phi)
        assert st.steps == 200 and st.start == 0.5
        assert st.final_value + st.final_complement == pytest.approx(1.0, abs=1e-15)
        assert st.classification in (Classification.TO_ZERO, Classification.TO_ONE)
        d = st.to_dict()
        assert d["classification"] in ("to_zero", "to_one")
        assert d["birkhoff_value"] == st.birkhoff_value

    def test_trajectory_stats_without_phi(self, ifs03):
        st = trajectory_stats(ifs03, 0.5, 10, SymbolStream.fixed([1] * 10))
        assert st.birkhoff_value is None


class TestEnsembleKernel:
    def test_kernel_bitwise_matches_scalar(self, ifs03):
        # the blocked vector kernel must replay exactly what per-stream
        # scalar stepping produces, including upper-half states
        n, m = 137, 5
        res = run_ensemble(ifs03, None, 0.77, n, m, SEED)
        for j in range(m):
            pts = trajectory_points(ifs03, 0.77, n, SymbolStream.random((0.5, 0.5), SEED, j))
            assert res.final_values[j] == pts[-1].value
            assert res.final_complements[j] == pts[-1].complement

    def test_kernel_birkhoff_matches_scalar(self, ifs03):
        phi = TestFunction.tent(0.5)
        n, m = 64, 3
        res = run_ensemble(ifs03, phi, 0.5, n, m, SEED)
        for j in range(m):
            ref = birkhoff(ifs03, phi, 0.5, n, SymbolStream.random((0.5, 0.5), SEED, j))
            assert res.birkhoff_values[j] == pytest.approx(ref, abs=1e-15)

    def test_report_deterministic(self, ifs03):
        a = ensemble(ifs03, TestFunction.tent(0.5), 0.5, 100, 50, SEED)
        b = ensemble(ifs03, TestFunction.tent(0.5), 0.5, 100, 50, SEED)
        assert a.to_dict() == b.to_dict()

    def test_fractions_partition(self, ifs03):
        rep = ensemble(ifs03, None, 0.5, 300, 400, SEED)
        total = rep.fraction_to_zero + rep.fraction_to_one + rep.fraction_undecided
        assert total == pytest.approx(1.0, abs=1e-12)
        assert rep.fraction_undecided <= 0.01  # 300 steps is far past decision

    def test_report_fields(self, ifs03):
        phi = TestFunction.tent(0.5)
        rep = ensemble(ifs03, phi, 0.5, 50, 20, SEED)
        d = rep.to_dict()
        assert d["generator"] == "philox4x64"
        assert d["phi"] == "tent:0.5"
        assert d["trajectories"] == 20 and d["steps"] == 50
        assert 0.0 <= d["w1_to_endpoint_law"] <= 1.0

    def test_phi_none_omits_birkhoff(self, ifs03):
        rep = ensemble(ifs03, None, 0.5, 50, 20, SEED)
        assert rep.mean_birkhoff is None and rep.stderr_birkhoff is None

    def test_argument_validation(self, ifs03):
        with pytest.raises(ValueError):
            run_ensemble(ifs03, None, 0.5, 0, 10, SEED)
        with pytest.raises(ValueError):
            run_ensemble(ifs03, None, 0.5, 10, 0, SEED)

    def test_seed_changes_outcome(self, ifs03):
        a = run_ensemble(ifs03, None, 0.5, 100, 50, SEED)
        b = run_ensemble(ifs03, None, 0.5, 100, 50, SEED + 1)
        assert a.final_values.tolist() != b.final_values.tolist()


class TestExpectation:
    def test_zero_steps_exact(self, ifs03):
        phi = TestFunction.tent(0.5)
        assert expectation_at(ifs03, phi, 0.25, 0, 100, SEED) == (0.5, 0.0)

    def test_matches_word_tree_within_error(self, ifs03):
        phi = TestFunction.tent(0.5)
        exact = dual_apply(ifs03, phi, 0.5, 10)
        mean, se = expectation_at(ifs03, phi, 0.5, 10, 20_000, SEED)
        assert se > 0.0
        assert abs(mean - exact) <= 4.0 * se
