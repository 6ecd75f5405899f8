"""
實驗執行器整合測試

Author: Leon Lu
Created: 2025-01-24
"""

import json
from functools import partial

import numpy as np
import pandas as pd
import pytest

from src.modules.errors import ExperimentFailure, ReportIOError
from src.modules.harness import (
    ExperimentRunner,
    bound_check,
    exact_check,
    fit_loglog_slope,
    map_replicates,
    mean_check,
    run_convergence_sweep,
    variance_check,
)
from src.modules.randkit import RngState
from src.modules.report_models import (
    BoundsTable,
    ExperimentConfig,
    KmtGapResult,
    SweepResult,
)


def _uniform_draw(rng: RngState, scale: float = 1.0) -> float:
    return scale * float(rng.generator().random())


class TestReplicateMapping:
    """複本平行測試"""

    def test_partition_independent(self):
        func = partial(_uniform_draw, scale=2.0)
        serial = map_replicates(func, 25, seed=3, batch_size=4)
        parallel = map_replicates(func, 25, seed=3, n_jobs=2, batch_size=9)
        assert serial == parallel
        assert len(serial) == 25

    def test_stream_offset(self):
        full = map_replicates(_uniform_draw, 6, seed=4)
        assert map_replicates(_uniform_draw, 2, seed=4, stream_offset=4) == full[4:]


class TestSlopeFit:
    """對數斜率擬合測試"""

    def test_exact_power_law(self):
        x = [16.0, 64.0, 256.0, 1024.0]
        slope, stderr = fit_loglog_slope(x, [t ** -0.25 for t in x])
        assert slope == pytest.approx(-0.25)
        assert stderr == pytest.approx(0.0, abs=1e-12)

    def test_two_points(self):
        assert fit_loglog_slope([1.0, 4.0], [1.0, 2.0]) == (pytest.approx(0.5), 0.0)

    def test_single_point(self):
        with pytest.raises(ExperimentFailure):
            fit_loglog_slope([1.0], [1.0])


class TestCheckHelpers:
    """檢驗輔助函式測試"""

    def test_mean_check(self):
        samples = RngState(5).generator().standard_normal(10_000)
        assert mean_check('normal-mean', 'E=0', samples, 0.0, 4.0).passed
        assert not mean_check('normal-mean', 'E=0', samples, 1.0, 4.0).passed

    def test_variance_check(self):
        samples = RngState(6).generator().standard_normal(10_000)
        check = variance_check('normal-var', 'Var=1', samples, 1.0, 4.0)
        assert check.passed
        assert check.threshold > 0

    def test_constant_samples_need_exact_match(self):
        """標準誤為零時要求精確相等"""
        assert mean_check('const', 'c', np.full(10, 2.0), 2.0, 4.0).passed
        assert not mean_check('const', 'c', np.full(10, 2.0), 2.1, 4.0).passed

    def test_bound_and_exact(self):
        assert bound_check('b', 'x ≤ 1', 0.5, 1.0).passed
        assert not bound_check('b', 'x ≤ 1', 1.5, 1.0).passed
        assert exact_check('e', 'x = 1', 1.0 + 1e-13, 1.0, 1e-12).passed


class TestExperimentRunner:
    """實驗執行器測試"""

    @pytest.fixture
    def bounds_config(self):
        return ExperimentConfig(experiment='bounds-table', tstars=[16.0, 64.0, 256.0, 1024.0])

    def test_bounds_table(self, bounds_config):
        runner = ExperimentRunner(bounds_config)
        report = runner.run()
        assert isinstance(report, BoundsTable)
        assert report.passed
        assert len(report.rows) == 4
        stats = runner.get_statistics()
        assert stats['experiments_run'] == 1
        assert stats['checks_failed'] == 0
        assert stats['pass_rate'] == 1.0

    def test_reset_statistics(self, bounds_config):
        runner = ExperimentRunner(bounds_config)
        runner.run()
        runner.reset_statistics()
        stats = runner.get_statistics()
        assert stats['experiments_run'] == 0
        assert stats['runtime_seconds'] == 0.0

    def test_write_csv_with_checks(self, bounds_config, tmp_path):
        runner = ExperimentRunner(bounds_config)
        target = runner.write_report(runner.run(), tmp_path / 'bounds.csv', 'csv')
        table = pd.read_csv(target)
        assert list(table.columns)[:3] == ['T_star', 'L_star', 'main_rhs']
        checks = pd.read_csv(tmp_path / 'bounds.checks.csv')
        assert 'main-rhs-decay' in checks['name'].tolist()

    def test_write_json(self, bounds_config, tmp_path):
        runner = ExperimentRunner(bounds_config)
        target = runner.write_report(runner.run(), tmp_path / 'bounds.json', 'json')
        payload = json.loads(target.read_text(encoding='utf-8'))
        assert payload['passed'] is True
        assert payload['rows'][0]['constants_used']['C'] == 1.0

    def test_write_without_target(self, bounds_config):
        runner = ExperimentRunner(bounds_config)
        assert runner.write_report(runner.run()) is None

    def test_write_failure(self, bounds_config, tmp_path):
        runner = ExperimentRunner(bounds_config)
        with pytest.raises(ReportIOError):
            runner.write_report(runner.run(), tmp_path, 'csv')

    def test_synchronous_identities(self):
        runner = ExperimentRunner(ExperimentConfig(experiment='verify-couplings', replicates=100))
        checks = runner._synchronous_checks()
        identity = [c for c in checks if 'identity' in c.name]
        assert identity and all(c.passed for c in identity)

    def test_lipschitz_checks(self):
        runner = ExperimentRunner(ExperimentConfig(experiment='verify-couplings', replicates=100))
        assert all(c.passed for c in runner._lipschitz_checks())


@pytest.mark.integration
class TestSmallExperiments:
    """小規模完整實驗"""

    def test_convergence_sweep_structure(self, tmp_path):
        """小規模掃描產生完整表格與斜率"""
        config = ExperimentConfig(experiment='convergence-sweep', tstars=[1.0, 2.0, 4.0, 8.0],
                                  replicates=100, grid_points=16, lower_grid_points=8, seed=11)
        result = run_convergence_sweep(config)
        assert isinstance(result, SweepResult)
        assert [row.T_star for row in result.rows] == [1.0, 2.0, 4.0, 8.0]
        assert all(row.runtime_seconds == 0.0 for row in result.rows)
        assert np.isfinite(result.slope)
        assert set(result.slope_window) <= {1.0, 2.0, 4.0, 8.0}
        for row in result.rows:
            assert row.L_star == pytest.approx(np.sqrt(row.T_star))
            assert row.w2_upper_independent.point > 0
        assert any(c.name == 'sweep-slope' for c in result.checks)

        runner = ExperimentRunner(config)
        target = runner.write_report(result, tmp_path / 'sweep.csv', 'csv')
        table = pd.read_csv(target)
        assert len(table) == 4
        summary = pd.read_csv(tmp_path / 'sweep.checks.csv')
        assert summary['name'].iloc[0] == 'loglog-slope'

    def test_sweep_reproducible(self):
        config = ExperimentConfig(experiment='convergence-sweep', tstars=[1.0, 2.0, 4.0, 8.0],
                                  replicates=100, grid_points=8, lower_grid_points=4, seed=12)
        first = run_convergence_sweep(config)
        second = run_convergence_sweep(config)
        assert first.slope == second.slope
        assert first.rows[-1].w2_lower.point == second.rows[-1].w2_lower.point

    def test_timing_included_on_request(self):
        config = ExperimentConfig(experiment='convergence-sweep', tstars=[1.0, 2.0, 4.0, 8.0],
                                  replicates=100, grid_points=8, lower_grid_points=4,
                                  include_timing=True)
        result = run_convergence_sweep(config)
        assert all(row.runtime_seconds > 0.0 for row in result.rows)

    def test_kmt_counts_collected_from_workers(self):
        """平行工作程序的 KMT 計數回到執行器統計，且與單程序一致"""
        counts = []
        for n_jobs in (1, 2):
            config = ExperimentConfig(experiment='convergence-sweep', tstars=[1.0, 2.0, 4.0, 8.0],
                                      replicates=100, grid_points=8, lower_grid_points=4,
                                      seed=13, n_jobs=n_jobs, batch_size=25, kmt_mode='quantile')
            runner = ExperimentRunner(config)
            runner.run()
            stats = runner.get_statistics()
            counts.append((stats['kmt_couplings'], stats['kmt_increments']))
        assert counts[0] == counts[1]
        assert counts[1][0] > 0
        assert counts[1][1] >= counts[1][0]

    def test_reset_clears_kmt_counts(self):
        config = ExperimentConfig(experiment='convergence-sweep', tstars=[1.0, 2.0, 4.0, 8.0],
                                  replicates=100, grid_points=8, lower_grid_points=4,
                                  n_jobs=2, batch_size=50, kmt_mode='quantile')
        runner = ExperimentRunner(config)
        runner.run()
        runner.reset_statistics()
        assert runner.get_statistics()['kmt_couplings'] == 0

    @pytest.mark.slow
    def test_kmt_gap(self):
        config = ExperimentConfig(experiment='kmt-gap', ns=[8, 32, 128], replicates=150)
        runner = ExperimentRunner(config)
        result = runner.run()
        assert isinstance(result, KmtGapResult)
        assert runner.get_statistics()['kmt_couplings'] == 2 * 3 * 150
        assert {row.mode for row in result.rows} == {'quantile', 'dyadic'}
        assert len(result.rows) == 6
        assert set(result.exponents) == {'quantile', 'dyadic'}
