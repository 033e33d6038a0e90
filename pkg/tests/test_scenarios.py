import json
import os

import numpy as np
import pytest

from impactbeam.continuation import StepControls, frequency_response
from impactbeam.io_cli import write_branch_csv
from impactbeam.model import ModelParams
from impactbeam.scenarios import (SCENARIOS, overlay_experiment,
                                  reporting_rescaling, run_scenario)


EXPECTED_NAMES = {"fig4_resonance", "fig5_nu0_alpha5.9", "fig6_nu0_alpha10",
                  "fig7_nu1_alpha5.9", "fig8_restoring_force", "fig9_isola",
                  "fig10_tongue", "table1_estimates"}


class TestRegistry:
    def test_all_presets_exist(self):
        assert set(SCENARIOS) == EXPECTED_NAMES

    def test_unknown_scenario_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="unknown scenario"):
            run_scenario("fig99", output_dir=str(tmp_path))


class TestFastScenarios:
    def test_table1(self, tmp_path):
        result = run_scenario("table1_estimates", output_dir=str(tmp_path))
        assert result["passed"]
        assert result["data"]["f_hz"] == pytest.approx(8.4, abs=0.1)
        assert result["data"]["alpha"] == pytest.approx(4.9, abs=0.1)
        report = json.load(open(os.path.join(result["output_dir"],
                                             "report.json")))
        assert report["passed"] is True

    def test_restoring_force_scenario(self, tmp_path):
        result = run_scenario("fig8_restoring_force",
                              output_dir=str(tmp_path))
        assert result["passed"]
        csv_path = os.path.join(result["output_dir"], "force_curves.csv")
        assert os.path.exists(csv_path)
        thr = result["data"]["monotone_thresholds_log10p"]
        assert thr[1] > thr[0]          # alpha=10 needs sharper switching

    def test_reruns_are_reproducible(self, tmp_path):
        a = run_scenario("table1_estimates", output_dir=str(tmp_path / "a"))
        b = run_scenario("table1_estimates", output_dir=str(tmp_path / "b"))
        assert a["data"] == b["data"]


class TestOverlay:
    @pytest.fixture(scope="class")
    def section_dir(self, tmp_path_factory):
        # one synthetic model section in the reported scale
        tmp = tmp_path_factory.mktemp("sections")
        rescaling = reporting_rescaling()
        pr = ModelParams(xi=0.03, beta=0.885, alpha=5.9, nu=1.0, p=100.0,
                         forcing=0.07 / rescaling.displacement_ratio)
        branch = frequency_response(pr, (0.7, 1.3),
                                    step=StepControls(ds=0.02, ds_max=0.06),
                                    rescaling=rescaling)
        write_branch_csv(os.path.join(tmp, "branch_il_0_07.csv"), branch,
                         rescaling)
        return str(tmp)

    def test_empty_data_empty_report(self, section_dir):
        report = overlay_experiment(section_dir,
                                    {"omega": np.array([]),
                                     "i_l": np.array([]),
                                     "amplitude": np.array([])})
        assert report["n_rows"] == 0
        assert report["sections"] == []

    def test_self_consistency(self, section_dir):
        from impactbeam.io_cli import read_branch_csv
        cols = read_branch_csv(os.path.join(section_dir,
                                            "branch_il_0_07.csv"))
        take = slice(2, 40, 3)
        data = {"omega": cols["omega"][take],
                "i_l": np.full_like(cols["omega"][take], 0.07),
                "amplitude": cols["max_abs_a_l"][take]}
        report = overlay_experiment(section_dir, data)
        section = report["sections"][0]
        assert section["count"] == data["omega"].size
        assert section["max_abs_residual"] < 1e-9

    def test_offset_recovery(self, section_dir):
        from impactbeam.io_cli import read_branch_csv
        rescaling = reporting_rescaling()
        offset_al = 0.5e-3 / rescaling.grazing_displacement  # +0.5 mm
        cols = read_branch_csv(os.path.join(section_dir,
                                            "branch_il_0_07.csv"))
        take = slice(2, 40, 3)
        data = {"omega": cols["omega"][take],
                "i_l": np.full_like(cols["omega"][take], 0.07),
                "amplitude": cols["max_abs_a_l"][take] + offset_al}
        report = overlay_experiment(section_dir, data, rescaling=rescaling)
        section = report["sections"][0]
        assert section["mean_residual"] == pytest.approx(offset_al,
                                                         rel=1e-6)
        assert section["mean_residual_m"] == pytest.approx(0.5e-3, rel=1e-6)


class TestReportingScale:
    def test_ratio_in_physical_range(self):
        rescaling = reporting_rescaling()
        # laser point between mass and beam tip: ratio strictly inside (0, 1)
        assert 0.7 < rescaling.displacement_ratio < 0.9

    def test_isola_values_map_inside_forcing_window(self):
        rescaling = reporting_rescaling()
        mapped = [v / rescaling.displacement_ratio
                  for v in (0.0463, 0.0475, 0.0487)]
        assert mapped[0] < 0.0597            # below the isola window
        assert 0.0598 < mapped[1] < 0.0605   # inside it
        assert mapped[2] > 0.0605            # beyond reconnection
