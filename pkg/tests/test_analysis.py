"""Complexity table, energy/bandwidth accounting and the running-time harness."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rispilot.analysis import (ResourceModel, RuntimeReport, complexity_csv, complexity_table,
                               energy_accounting, energy_csv, runtime_bench, runtime_csv)
from rispilot.models import CeNet, FusNet
from rispilot.pipeline import SystemConfig, TrainedPair, simulate_frames


class TestComplexity:
    def test_table_values(self):
        got = {(r.n, r.method): r.value for r in complexity_table([1, 32, 64])}
        assert got == {
            (1, "proposed"): 84, (1, "MMSE-CE+MMSE-SD"): 12,
            (32, "proposed"): 86_016, (32, "MMSE-CE+MMSE-SD"): 200_768,
            (64, "proposed"): 344_064, (64, "MMSE-CE+MMSE-SD"): 1_589_376,
        }

    @given(st.integers(1, 10_000))
    def test_closed_forms(self, n):
        rows = {r.method: r.value for r in complexity_table([n])}
        assert rows["proposed"] == 84 * n ** 2
        assert rows["MMSE-CE+MMSE-SD"] == 6 * n ** 3 + 4 * n ** 2 + 2 * n
        assert all(isinstance(v, int) for v in rows.values())

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            complexity_table([0])

    def test_csv(self):
        assert complexity_csv(complexity_table([32, 64])) == \
            "n,proposed,mmse_chain\n32,86016,200768\n64,344064,1589376\n"


class TestEnergy:
    def test_example(self):
        rep = energy_accounting(ResourceModel(32, 32, 1.0, 1.0, 0.15))
        assert (rep.e_nonsup, rep.e_prop, rep.e_saved) == (64, 32, 32)
        assert (rep.bw_nonsup, rep.bw_prop, rep.bw_saved) == (64, 32, 32)

    @pytest.mark.parametrize("lam", [0.0, 0.1, 0.5, 1.0])
    def test_equal_counts_independent_of_lambda(self, lam):
        rep = energy_accounting(ResourceModel(32, 32, 1.0, 1.0, lam))
        assert (rep.e_nonsup, rep.e_prop) == (64, 32)

    def test_degenerate_no_pilot(self):
        rep = energy_accounting(ResourceModel(40, 0, 2.0, 3.0, 0.0))
        assert rep.e_prop == 40 * 2 * 3 == rep.e_nonsup
        assert rep.e_saved == 0 and rep.bw_saved == 0

    @given(st.integers(0, 500), st.integers(0, 500), st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(0, 1))
    @settings(max_examples=200)
    def test_saved_identity(self, nd, npl, t0, p, lam):
        rep = energy_accounting(ResourceModel(nd, npl, t0, p, lam))
        oracle = nd * t0 * lam * p + npl * t0 * (1 - lam) * p
        assert abs(float(rep.e_saved) - oracle) <= 1e-12 * max(1.0, abs(oracle))
        assert rep.bw_saved == Fraction(npl) * Fraction(t0)

    def test_exact_rationals(self):
        rep = energy_accounting(ResourceModel(3, 5, 0.1, 0.3, 0.15))
        assert isinstance(rep.e_saved, Fraction)
        assert rep.e_nonsup - rep.e_prop == rep.e_saved

    @pytest.mark.parametrize("args", [(-1, 1), (1, -1)])
    def test_invalid_counts(self, args):
        with pytest.raises(ValueError):
            ResourceModel(*args)

    def test_invalid_lambda(self):
        with pytest.raises(ValueError):
            ResourceModel(1, 1, 1.0, 1.0, 1.5)

    def test_csv(self):
        lines = energy_csv(ResourceModel(32, 32, 1.0, 1.0, 0.15)).splitlines()
        assert lines[0] == "quantity,symbolic,value,n_data,n_pilot,lambda"
        assert lines[1] == "e_nonsup,64T0P,64.0,32,32,0.15"
        assert lines[2] == "e_prop,32T0P,32.0,32,32,0.15"
        assert lines[4] == "bw_nonsup,64T0,64.0,32,32,0.15"
        assert lines[5] == "bw_prop,32T0,32.0,32,32,0.15"


@pytest.fixture(scope="module")
def bench_setup():
    rng = np.random.default_rng(5)
    sys_cfg = SystemConfig()
    pair = TrainedPair(CeNet.initialize(32, rng), FusNet.initialize(32, rng), None, None)
    return pair, sys_cfg, simulate_frames(sys_cfg, 400, 1, (9,), (12,)).y


class TestRuntime:
    def test_rejects_few_frames(self, bench_setup):
        pair, sys_cfg, y = bench_setup
        with pytest.raises(ValueError, match="at least 100"):
            runtime_bench(pair, sys_cfg, y[:99])

    def test_report(self, bench_setup):
        pair, sys_cfg, y = bench_setup
        rep = runtime_bench(pair, sys_cfg, y[:100], repetitions=2)
        assert rep.t_proposed > 0 and rep.t_mmse_chain > 0 and rep.ratio > 0
        assert rep.n_frames == 100 and rep.repetitions == 2

    def test_linear_scaling(self, bench_setup):
        # total time for 2n frames is twice that for n frames, within 20%; a shared
        # machine can stall one bench, so the pair is re-measured up to three times
        pair, sys_cfg, y = bench_setup
        ratios = []
        for _ in range(3):
            short = runtime_bench(pair, sys_cfg, y[:200], repetitions=9)
            long = runtime_bench(pair, sys_cfg, y[:400], repetitions=9)
            ratios = [(400 * b) / (200 * a) / 2 for a, b in
                      ((short.t_proposed, long.t_proposed), (short.t_mmse_chain, long.t_mmse_chain))]
            if all(0.8 <= r <= 1.2 for r in ratios):
                break
        assert all(0.8 <= r <= 1.2 for r in ratios), ratios

    def test_csv(self):
        text = runtime_csv({12: RuntimeReport(1e-5, 2e-5, 1000, 5)})
        assert text == "G,n_frames,repetitions,t_proposed_s,t_mmse_chain_s,ratio\n12,1000,5,1e-05,2e-05,0.5\n"
