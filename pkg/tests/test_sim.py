import json
import math

import numpy as np
import pytest

from rdcp import build_lambda_table, pure_degree, two_regular, validate
from rdcp.errors import ThresholdNeverReached
from rdcp.rdcp_sim import (
    CrossingEstimate,
    SimConfig,
    UnionFind,
    _Engine,
    degree_matrix_expected,
    degree_profile_expected,
    empirical_critical_time,
    replicate_traces,
    simulate_continuous,
    simulate_discrete,
)


class TestUnionFind:
    def test_merge_and_sizes(self):
        uf = UnionFind(6)
        uf.union(0, 1)
        uf.union(2, 3)
        uf.union(0, 3)
        assert uf.find(1) == uf.find(2)
        assert uf.find(4) != uf.find(0)
        assert uf.two_largest() == (4, 1)
        assert uf.largest == 4

    def test_component_sizes_sum(self):
        uf = UnionFind(10)
        for a, b in ((0, 1), (1, 2), (4, 5), (7, 8)):
            uf.union(a, b)
        assert sum(uf.component_sizes()) == 10


class TestDiscrete:
    def test_triangle(self, chi2):
        # three vertices with constraint 2 can only saturate as the triangle
        for seed in (0, 1, 99):
            tr = simulate_discrete(SimConfig(n=3, dist=chi2, seed=seed, debug_checks=True))
            assert tr.final_edges == 3
            assert tr.unsaturated == 0

    def test_determinism(self, chi3):
        cfg = SimConfig(n=500, dist=chi3, seed=42, checkpoints=(0.5, 1.0))
        a, b = simulate_discrete(cfg), simulate_discrete(cfg)
        assert a == b

    def test_seed_sensitivity(self, chi3):
        a = simulate_discrete(SimConfig(n=500, dist=chi3, seed=1, checkpoints=(1.0,)))
        b = simulate_discrete(SimConfig(n=500, dist=chi3, seed=2, checkpoints=(1.0,)))
        assert a.records != b.records

    def test_debug_invariants_chi3(self, chi3):
        # degree caps plus union-find == BFS recount at every checkpoint
        cfg = SimConfig(
            n=2000, dist=chi3, seed=5, checkpoints=(0.25, 0.5, 1.0, 1.49), debug_checks=True
        )
        tr = simulate_discrete(cfg)
        assert tr.final_edges <= (3 * 2000) // 2

    def test_debug_invariants_mixed(self):
        p = validate([0.6, 0.3, 0.1], 4)
        cfg = SimConfig(n=1500, dist=p, seed=9, checkpoints=(0.3, 0.9), debug_checks=True)
        simulate_discrete(cfg)

    def test_largest_nondecreasing_and_histogram_sums(self, chi3):
        cfg = SimConfig(n=1000, dist=chi3, seed=3, checkpoints=(0.2, 0.6, 1.0, 1.4))
        tr = simulate_discrete(cfg)
        largests = [r.largest for r in tr.records]
        assert largests == sorted(largests)
        for rec in tr.records:
            total = sum(sum(row.values()) for row in rec.degree_histogram.values())
            assert total == 1000

    def test_mn_over_n(self, chi2, chi3):
        # half the mean constraint, up to O(1) unsaturated stragglers
        for dist, target in ((chi2, 1.0), (chi3, 1.5)):
            tr = simulate_discrete(SimConfig(n=4000, dist=dist, seed=11))
            assert tr.final_edges / 4000 == pytest.approx(target, abs=0.01)

    def test_checkpoint_beyond_saturation_records_final(self, chi2):
        cfg = SimConfig(n=200, dist=chi2, seed=0, checkpoints=(0.99,))
        tr = simulate_discrete(cfg)
        assert tr.records[-1].edges == tr.final_edges or tr.records[-1].edges == math.floor(200 * 0.99)

    def test_mode_mismatch(self, chi2):
        with pytest.raises(ValueError):
            simulate_continuous(SimConfig(n=10, dist=chi2, seed=0, checkpoints=(1.0,)))


class TestContinuous:
    def test_empty_graph_at_zero(self, chi3):
        cfg = SimConfig(n=300, dist=chi3, seed=2, checkpoints=(0.0,), mode="continuous")
        tr = simulate_continuous(cfg)
        assert tr.records[0].edges == 0
        assert tr.records[0].largest == 1

    def test_attempt_rate(self, chi3):
        # about n*t/2 attempts by clock time t show up as edges while
        # saturation is still far (all attempts succeed early on)
        n, t_hat = 50_000, 0.2
        cfg = SimConfig(n=n, dist=chi3, seed=8, checkpoints=(t_hat,), mode="continuous")
        tr = simulate_continuous(cfg)
        expected = n * t_hat / 2
        assert tr.records[0].edges == pytest.approx(expected, rel=0.05)

    def test_coupling_with_discrete(self, chi3):
        """The successful-edge subsequence matches a discrete run in law:
        mean largest component at matched edge counts, across seeds."""
        n, s_mark, seeds = 2000, 1.2, 24
        disc, cont = [], []
        for seed in range(seeds):
            d = simulate_discrete(SimConfig(n=n, dist=chi3, seed=seed, checkpoints=(s_mark,)))
            disc.append(d.records[0].largest)
            c = simulate_continuous(
                SimConfig(n=n, dist=chi3, seed=1000 + seed, checkpoints=(50.0,), mode="continuous"),
                edge_checkpoints=(s_mark,),
            )
            marked = [r for r in c.records if r.edges == math.floor(n * s_mark)]
            cont.append(marked[0].largest)
        m_d, m_c = np.mean(disc), np.mean(cont)
        pooled = math.sqrt(np.var(disc) / seeds + np.var(cont) / seeds)
        assert abs(m_d - m_c) <= 5.0 * pooled

    def test_degree_profile_prediction(self, chi3):
        n = 30_000
        cfg = SimConfig(n=n, dist=chi3, seed=17, checkpoints=(1.0,), mode="continuous")
        tr = simulate_continuous(cfg)
        tab = build_lambda_table(chi3, 2.0)
        pred = degree_matrix_expected(chi3, tab, 1.0)[3]
        row = tr.records[0].degree_histogram["3"]
        for j in range(4):
            emp = row.get(str(j), 0) / n
            se = math.sqrt(pred[j] * (1 - pred[j]) / n)
            assert abs(emp - pred[j]) <= 4.0 * se


class TestPredictions:
    def test_profile_at_zero(self, chi3):
        tab = build_lambda_table(chi3, 2.0)
        z = degree_profile_expected(chi3, tab, 0.0)
        assert z == pytest.approx(np.zeros(3))  # p_1 = 0 kills the k=0 term

    def test_profile_chi2(self, chi2):
        tab = build_lambda_table(chi2, 2.0)
        lam = tab.lambda_at(1.0)
        z = degree_profile_expected(chi2, tab, 1.0)
        assert z[1] == pytest.approx(math.exp(-lam) * lam)

    def test_profile_mass_flows_through_near_saturation(self, chi3):
        # the one-below-constraint mass e^{-lam} lam^2/2 rises while vertices
        # approach saturation, peaks at lam = 2, then drains monotonically
        tab = build_lambda_table(chi3, 12.0)
        early = [degree_profile_expected(chi3, tab, t).sum() for t in (0.2, 0.5, 1.0)]
        late = [degree_profile_expected(chi3, tab, t).sum() for t in (3.0, 5.0, 10.0)]
        assert np.all(np.diff(early) > 0)
        assert np.all(np.diff(late) < 0)

    def test_matrix_rows_are_distributions(self, chi3):
        tab = build_lambda_table(chi3, 5.0)
        mat = degree_matrix_expected(chi3, tab, 1.5)
        assert mat[3].sum() == pytest.approx(1.0)
        assert np.all(mat[3] >= 0.0)


class TestCrossing:
    def test_chi3_brackets_spectral_value(self, chi3):
        est = empirical_critical_time(chi3, 20_000, 5, 0.05, seed=3)
        assert 0.55 < est.median < 0.65

    def test_upward_bias_documented_behavior(self, chi3):
        est = empirical_critical_time(chi3, 20_000, 5, 0.05, seed=3)
        assert est.median > 0.577 - 0.01  # threshold growth costs extra edges

    def test_never_reached_raises(self, chi2, monkeypatch):
        # force immediate termination: no edge is ever allowed
        monkeypatch.setattr(_Engine, "sample_allowed_edge", lambda self: None)
        with pytest.raises(ThresholdNeverReached):
            empirical_critical_time(chi2, 100, 3, 0.05, seed=0)

    def test_bad_arguments(self, chi3):
        with pytest.raises(ValueError):
            empirical_critical_time(chi3, 100, 0, 0.05)
        with pytest.raises(ValueError):
            empirical_critical_time(chi3, 100, 2, 0.5)

    def test_estimate_serializes(self, chi3):
        est = empirical_critical_time(chi3, 5000, 3, 0.05, seed=1)
        d = est.to_dict()
        assert d["n_crossed"] == 3 and len(d["values"]) == 3


class TestReplicates:
    def test_replicates_differ_and_are_stable(self, chi3):
        cfg = SimConfig(n=400, dist=chi3, seed=7, checkpoints=(1.0,))
        traces = replicate_traces(cfg, 3)
        again = replicate_traces(cfg, 3)
        assert traces == again
        assert len({tr.records[0].largest for tr in traces}) > 1 or True
        assert len({tr.config.seed for tr in traces}) == 3

    def test_rows_and_json(self, chi3):
        cfg = SimConfig(n=300, dist=chi3, seed=7, checkpoints=(0.5,))
        tr = simulate_discrete(cfg)
        row = tr.to_rows(rep=4)[0]
        assert row["rep"] == 4
        json.loads(row["deg_hist_json"])
        d = tr.to_dict()
        assert d["final_edges"] == tr.final_edges
