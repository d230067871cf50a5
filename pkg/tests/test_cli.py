import json

import numpy as np
import pytest

from qpburst import gamma_qp, gap_profile_from_gaps, QpEnvironment
from qpburst.cli import main
from qpburst.fitting import steady_state_curve
from qpburst.simulate import rng_stream


def write_config(tmp_path, **overrides):
    config = {
        "n_datasets": 2,
        "dataset_duration_s": 5.0,
        "event_rate_per_s": 0.6,
        "event_amplitude_range": [8e-6, 1e-5],
        "tau_mean_s": 8.5e-3,
        "tau_sigma_s": 2e-3,
        "master_seed": 314,
        "output_dir": str(tmp_path / "campaign"),
        "detection": {"threshold_sigma": 6.0, "template_tau_s": 0.010,
                      "min_separation_s": 0.050},
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    """A small simulated campaign with detections, shared across CLI tests."""
    tmp_path = tmp_path_factory.mktemp("cli_campaign")
    config = write_config(tmp_path)
    assert main(["simulate", "--config", str(config)]) == 0
    assert main(["detect", "--config", str(config)]) == 0
    return tmp_path, config


class TestSimulate:
    def test_outputs_and_sidecars(self, campaign):
        tmp_path, _ = campaign
        out = tmp_path / "campaign"
        datasets = sorted(out.glob("*.rrcs"))
        sidecars = sorted(p for p in out.glob("*.json") if p.stem.startswith("dataset"))
        assert len(datasets) == 2
        assert len(sidecars) == 2
        meta = json.loads(sidecars[0].read_text())
        assert {"seed", "truth_events", "device"} <= set(meta)

    def test_byte_identical_reruns(self, tmp_path):
        config = write_config(tmp_path, n_datasets=1, dataset_duration_s=2.0)
        assert main(["simulate", "--config", str(config)]) == 0
        first = (tmp_path / "campaign" / "dataset_0000.rrcs").read_bytes()
        assert main(["simulate", "--config", str(config)]) == 0
        second = (tmp_path / "campaign" / "dataset_0000.rrcs").read_bytes()
        assert first == second

    def test_seed_changes_output(self, tmp_path):
        config = write_config(tmp_path, n_datasets=1, dataset_duration_s=2.0)
        main(["simulate", "--config", str(config)])
        first = (tmp_path / "campaign" / "dataset_0000.rrcs").read_bytes()
        main(["simulate", "--config", str(config), "--seed", "999"])
        second = (tmp_path / "campaign" / "dataset_0000.rrcs").read_bytes()
        assert first != second

    def test_set_override(self, tmp_path, capsys):
        config = write_config(tmp_path, n_datasets=1, dataset_duration_s=2.0)
        assert main(["simulate", "--config", str(config),
                     "--set", "event_rate_per_s=0"]) == 0
        out = capsys.readouterr().out
        assert "injected 0 events" in out

    def test_unknown_config_key_rejected(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["simulate", "--config", str(config), "--set", "bogus=1"]) == 1

    def test_bad_usage_exit_code(self):
        assert main(["no-such-command"]) == 1


class TestDetect:
    def test_report_schema_and_truth_summary(self, campaign, capsys):
        tmp_path, config = campaign
        assert main(["detect", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "recall" in out
        report = json.loads((tmp_path / "campaign" / "detections.json").read_text())
        for entry in report:
            assert {"cycle_index", "time_s", "peak_height", "tau_fit_s",
                    "fit_rms_residual", "dataset"} <= set(entry)
            assert entry["tau_fit_s"] > 0.0
            assert entry["peak_height"] > 0.0

    def test_finds_injected_events(self, campaign):
        tmp_path, _ = campaign
        report = json.loads((tmp_path / "campaign" / "detections.json").read_text())
        # amplitudes 8e-6..1e-5 are far above threshold: every event with a
        # full template window before the dataset ends must be found
        observable = 0
        for sidecar in sorted(tmp_path.glob("campaign/dataset_*.json")):
            for ev in json.loads(sidecar.read_text())["truth_events"]:
                if ev["t0_s"] <= 5.0 - 5 * 0.010:
                    observable += 1
        assert len(report) == observable > 0

    def test_strong_subset_is_silent(self, campaign, capsys):
        tmp_path, config = campaign
        assert main(["detect", "--config", str(config), "--subset", "strong",
                     "--out", str(tmp_path / "strong_out")]) == 0
        report = json.loads((tmp_path / "strong_out" / "detections.json").read_text())
        assert report == []
        assert "0 events detected" in capsys.readouterr().out

    def test_no_datasets_is_data_error(self, tmp_path):
        config = write_config(tmp_path, output_dir=str(tmp_path / "empty"))
        assert main(["detect", "--config", str(config)]) == 2

    def test_corrupt_dataset_skipped_with_warning(self, campaign, tmp_path, capsys):
        src, config = campaign
        bad = src / "campaign" / "dataset_0000.rrcs"
        good_bytes = bad.read_bytes()
        try:
            bad.write_bytes(b"JUNKJUNKJUNK")
            assert main(["detect", "--config", str(config),
                         "--out", str(tmp_path / "partial")]) == 0
            assert "skipping" in capsys.readouterr().err
        finally:
            bad.write_bytes(good_bytes)


class TestHistogram:
    def test_csv_format_and_chi_square(self, campaign, capsys):
        tmp_path, config = campaign
        assert main(["histogram", "--config", str(config), "--subset", "strong"]) == 0
        out = capsys.readouterr().out
        assert "chi-square" in out
        csv_path = tmp_path / "campaign" / "histogram_strong.csv"
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "k,observed,predicted"
        assert len(lines) == 8  # k = 0..6
        total = sum(int(line.split(",")[1]) for line in lines[1:])
        assert total == 2 * 50_000  # 2 datasets x 5 s at 100 us


class TestFitCommands:
    def test_fit_spectrum_round_trip(self, tmp_path):
        f = np.linspace(4.0, 6.5, 40)
        profile = gap_profile_from_gaps(55.0, 50.0)
        env = QpEnvironment(x_qp=1e-5, T_qp_K=0.02, w_GHz=0.15)
        y = gamma_qp(f, profile, env)
        csv = tmp_path / "spectrum.csv"
        csv.write_text(
            "f_q_ghz,inv_t1_per_s\n"
            + "\n".join(f"{float(fi)!r},{float(yi)!r}" for fi, yi in zip(f, y))
        )
        assert main(["fit-spectrum", str(csv), "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "spectrum_fit.json").read_text())
        assert report["converged"]
        assert report["parameters"]["gap_difference_GHz"]["value"] == pytest.approx(
            5.0, rel=1e-4
        )

    def test_fit_spectrum_unbracketed_exit_code(self, tmp_path):
        f = np.linspace(6.0, 9.0, 20)
        profile = gap_profile_from_gaps(55.0, 50.0)
        env = QpEnvironment(x_qp=1e-5, T_qp_K=0.02, w_GHz=0.15)
        y = gamma_qp(f, profile, env)
        csv = tmp_path / "spectrum.csv"
        csv.write_text("\n".join(f"{float(fi)!r},{float(yi)!r}" for fi, yi in zip(f, y)))
        assert main(["fit-spectrum", str(csv), "--out", str(tmp_path)]) == 3

    def test_fit_power_reports_rate_ratio(self, tmp_path):
        u, v = 5.952e-3, 833.33
        p = np.geomspace(3e-5, 1.0, 20)
        x = steady_state_curve(p, u, v)
        rng = rng_stream(4, 0)
        x = x * (1.0 + 0.03 * rng.standard_normal(p.size))
        csv = tmp_path / "power.csv"
        csv.write_text(
            "power,x_qp\n"
            + "\n".join(f"{float(a)!r},{float(b)!r}" for a, b in zip(p, x))
        )
        assert main(["fit-power", str(csv), "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "power_fit.json").read_text())
        assert report["r_over_s"] == pytest.approx(v / u, rel=0.2)
        assert not report["v_indeterminate"]

    def test_missing_csv_is_data_error(self, tmp_path):
        assert main(["fit-power", str(tmp_path / "nope.csv")]) == 2


class TestReport:
    def test_bundle_contents(self, campaign, capsys):
        tmp_path, _ = campaign
        campaign_dir = tmp_path / "campaign"
        assert main(["report", str(campaign_dir)]) == 0
        out_dir = campaign_dir / "report"
        report = json.loads((out_dir / "report.json").read_text())
        # one injected event can start inside the final template window,
        # where the zero-padded filter cannot score it
        assert 0 < report["n_events_detected"] <= report["n_events_injected"]
        assert report["event_rate_per_s_per_chip"] == pytest.approx(
            report["event_flux_per_s_per_cm2"]
        )
        assert report["tau_decay_s"]["median"] == pytest.approx(8.5e-3, rel=0.5)
        for name in ("events.csv", "intervals.csv", "histogram_weak.csv",
                     "histogram_strong.csv", "histogram_all.csv"):
            assert (out_dir / name).exists()
        for name in ("event_parameters.png", "inter_event_intervals.png",
                     "simultaneous_errors.png"):
            figure = out_dir / "figures" / name
            assert figure.exists()
            assert figure.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_mean_inter_event_time_matches_rate(self, campaign):
        tmp_path, _ = campaign
        report = json.loads(
            (tmp_path / "campaign" / "report" / "report.json").read_text()
        )
        # all injected events were detected, so the estimate is n/duration
        assert report["mean_inter_event_time_s"] == pytest.approx(
            report["total_duration_s"] / report["n_events_detected"]
        )

    def test_missing_inputs_listed(self, tmp_path):
        empty = tmp_path / "nothing"
        empty.mkdir()
        assert main(["report", str(empty)]) == 2
