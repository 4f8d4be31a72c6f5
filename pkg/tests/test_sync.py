import numpy as np
import pytest

from ifslab.mc_sim import SymbolStream
from ifslab.sync import (
    EXCLUSION_BAND,
    RECOMP_CHUNK,
    Agreement,
    UndecidedError,
    agreement_counts,
    equivariance_residual,
    ks_uniform,
    threshold_agreement,
    upsilon,
    upsilon_sample,
)

SEED = 42


class TestKsUniform:
    def test_single_sample(self):
        assert ks_uniform([0.5]) == 0.5

    def test_three_samples(self):
        assert ks_uniform([0.25, 0.5, 0.75]) == 0.25

    def test_quantile_grid_is_best_case(self):
        m = 100
        grid = (np.arange(m) + 0.5) / m
        assert ks_uniform(grid) == pytest.approx(1.0 / (2 * m), abs=1e-15)

    def test_order_irrelevant(self):
        assert ks_uniform([0.75, 0.25, 0.5]) == ks_uniform([0.25, 0.5, 0.75])

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            ks_uniform([])
        with pytest.raises(ValueError):
            ks_uniform([-0.1, 0.5])
        with pytest.raises(ValueError):
            ks_uniform([0.5, 1.1])


class TestUpsilon:
    def test_periodic_12_golden(self, ifs03):
        # the period-2 word (1,2,1,2,...) pins the threshold at 5/12: its
        # first symbol pushes orbits up, so less than half the unit interval
        # escapes downward
        s = upsilon(ifs03, SymbolStream.cyclic([1, 2]))
        assert s.converged
        assert abs(s.upsilon - 5.0 / 12.0) <= 1e-12

    def test_periodic_21_golden(self, ifs03):
        s = upsilon(ifs03, SymbolStream.cyclic([2, 1]))
        assert s.converged
        assert abs(s.upsilon - 7.0 / 12.0) <= 1e-12

    def test_all_ones_drives_threshold_to_zero(self, ifs03):
        s = upsilon(ifs03, SymbolStream.cyclic([1]))
        assert s.converged and s.upsilon <= 1e-12

    def test_all_twos_drives_threshold_to_one(self, ifs03):
        s = upsilon(ifs03, SymbolStream.cyclic([2]))
        assert s.converged and s.upsilon >= 1.0 - 1e-12

    def test_sample_invariants(self, ifs03):
        samples = upsilon_sample(ifs03, 64, master_seed=SEED)
        assert len(samples) == 64
        for s in samples:
            assert s.converged
            assert 0.0 <= s.upsilon <= 1.0
            assert s.gap <= 1e-12
            assert s.depth_used % RECOMP_CHUNK == 0
            assert s.stream_index == samples.index(s)

    def test_deterministic(self, ifs03):
        a = upsilon_sample(ifs03, 16, master_seed=SEED)
        b = upsilon_sample(ifs03, 16, master_seed=SEED)
        assert [s.upsilon for s in a] == [s.upsilon for s in b]
        assert [s.depth_used for s in a] == [s.depth_used for s in b]

    def test_stream_factory_hook(self, ifs03):
        samples = upsilon_sample(
            ifs03, 3, stream_factory=lambda j: SymbolStream.cyclic([1])
        )
        assert all(s.upsilon <= 1e-12 for s in samples)

    def test_unconverged_flagged(self, ifs03):
        s = upsilon(ifs03, SymbolStream.random((0.5, 0.5), SEED, 0), tol=1e-30, max_depth=RECOMP_CHUNK)
        assert not s.converged
        assert s.depth_used == RECOMP_CHUNK
        assert s.gap > 1e-30

    def test_m_validation(self, ifs03):
        with pytest.raises(ValueError):
            upsilon_sample(ifs03, 0)

    def test_sample_looks_uniform(self, ifs03):
        samples = upsilon_sample(ifs03, 2000, master_seed=SEED)
        ks = ks_uniform([s.upsilon for s in samples])
        assert ks < 1.63 / np.sqrt(2000)  # 1% critical value

    def test_to_dict(self, ifs03):
        d = upsilon(ifs03, SymbolStream.cyclic([2, 1])).to_dict()
        assert set(d) == {"stream_index", "upsilon", "depth_used", "gap", "converged"}


class TestEquivariance:
    def test_shift_relation_on_seeded_streams(self, ifs03):
        # the acceptance bar is 1e-9; the checkpointed stopping rule can
        # overshoot the naive gap bound, so that is the honest calibration
        worst = 0.0
        for j in range(20):
            r = equivariance_residual(ifs03, SymbolStream.random((0.5, 0.5), SEED, j))
            worst = max(worst, r)
        assert worst <= 1e-9

    def test_periodic_exact_relation(self, ifs03):
        r = equivariance_residual(ifs03, SymbolStream.cyclic([2, 1]))
        assert r <= 1e-12

    def test_undecided_raises(self, ifs03):
        with pytest.raises(UndecidedError):
            equivariance_residual(
                ifs03, SymbolStream.random((0.5, 0.5), SEED, 0), tol=1e-30, max_depth=RECOMP_CHUNK
            )


class TestAgreement:
    def test_all_ones_sends_everything_up(self, ifs03):
        # upsilon = 0 for the all-1 stream, so any interior x predicts
        # convergence to 1, and the forward orbit agrees
        out = threshold_agreement(ifs03, 0.6, SymbolStream.cyclic([1]), 200)
        assert out is Agreement.AGREE

    def test_all_twos_sends_everything_down(self, ifs03):
        out = threshold_agreement(ifs03, 0.4, SymbolStream.cyclic([2]), 200)
        assert out is Agreement.AGREE

    def test_exclusion_band(self, ifs03):
        x = 7.0 / 12.0 + EXCLUSION_BAND / 2.0
        out = threshold_agreement(ifs03, x, SymbolStream.cyclic([2, 1]), 200)
        assert out is Agreement.EXCLUDED

    def test_x_domain(self, ifs03):
        with pytest.raises(ValueError):
            threshold_agreement(ifs03, 0.0, SymbolStream.cyclic([1]), 10)

    def test_counts_partition_and_fraction(self, ifs03):
        out = agreement_counts(ifs03, 200, 3000, SEED)
        assert out["agree"] + out["disagree"] + out["excluded"] == 200
        assert out["agreement_fraction"] >= 0.999
        assert out["steps"] == 3000 and out["master_seed"] == SEED

    def test_counts_deterministic(self, ifs03):
        a = agreement_counts(ifs03, 50, 2000, SEED)
        b = agreement_counts(ifs03, 50, 2000, SEED)
        assert a == b

    def test_pairs_validation(self, ifs03):
        with pytest.raises(ValueError):
            agreement_counts(ifs03, 0, 10, SEED)
