"""qpburst command line: simulate | detect | histogram | fit-spectrum | fit-power | report.

Commands are idempotent for a fixed config and seed: outputs are written
atomically and re-runs overwrite byte-identically.  Exit codes: 0 success,
1 usage or configuration error, 2 data error, 3 fit non-convergence.
"""

from __future__ import annotations

import argparse
import glob as globlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import detect as det
from . import figures, fitting, physics, simulate
from .device import DeviceConfig, build_reference_device, load_device
from .errors import ConfigError, DataError, DomainError, QpBurstError
from .ioutil import atomic_write_text
from .physics import QpEnvironment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NO_CONVERGENCE = 3

DATASET_SUFFIX = ".rrcs"


@dataclass(frozen=True)
class DetectionConfig:
    threshold_sigma: float = 6.0
    template_tau_s: float = 0.010
    min_separation_s: float = 0.050
    fit_window_s: float = 0.100


@dataclass(frozen=True)
class CampaignConfig:
    """Campaign parameters; defaults reproduce the reference protocol."""

    device_path: str | None = None
    n_datasets: int = 100
    dataset_duration_s: float = 60.0
    event_rate_per_s: float = 1.0 / 38.96
    event_amplitude_range: tuple[float, float] = (1.0e-6, 1.0e-5)
    tau_mean_s: float = 8.5e-3
    tau_sigma_s: float = 2.0e-3
    master_seed: int = 20240
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    output_dir: str = "campaign"
    t_qp_K: float = 0.02
    w_GHz: float = 0.15

    def __post_init__(self) -> None:
        if self.n_datasets < 1:
            raise ConfigError("n_datasets must be at least 1")
        if self.dataset_duration_s <= 0.0:
            raise ConfigError("dataset_duration_s must be strictly positive")
        if self.event_rate_per_s < 0.0:
            raise ConfigError("event_rate_per_s must be nonnegative")

    def environment(self) -> QpEnvironment:
        return QpEnvironment(x_qp=0.0, T_qp_K=self.t_qp_K, w_GHz=self.w_GHz)

    def load_device(self) -> DeviceConfig:
        if self.device_path is None:
            return build_reference_device()
        return load_device(self.device_path)


_CONFIG_KEYS = {
    "device_path", "n_datasets", "dataset_duration_s", "event_rate_per_s",
    "event_amplitude_range", "tau_mean_s", "tau_sigma_s", "master_seed",
    "detection", "output_dir", "t_qp_K", "w_GHz",
}
_DETECTION_KEYS = {"threshold_sigma", "template_tau_s", "min_separation_s", "fit_window_s"}


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_campaign_config(
    path: str | None, overrides: list[str] | None = None
) -> CampaignConfig:
    """Load the campaign config JSON and apply --set key=value overrides."""
    payload: dict = {}
    if path is not None:
        try:
            payload = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    for item in overrides or []:
        key, value = _parse_override(item)
        if key.startswith("detection."):
            payload.setdefault("detection", {})
            if not isinstance(payload["detection"], dict):
                raise ConfigError("detection section must be an object")
            payload["detection"][key.split(".", 1)[1]] = value
        else:
            payload[key] = value

    unknown = set(payload) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    detection_payload = payload.pop("detection", {})
    if not isinstance(detection_payload, dict):
        raise ConfigError("detection section must be an object")
    unknown = set(detection_payload) - _DETECTION_KEYS
    if unknown:
        raise ConfigError(f"unknown detection keys {sorted(unknown)}")
    try:
        detection = DetectionConfig(**{k: float(v) for k, v in detection_payload.items()})
        if "event_amplitude_range" in payload:
            lo, hi = payload["event_amplitude_range"]
            payload["event_amplitude_range"] = (float(lo), float(hi))
        return CampaignConfig(detection=detection, **payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def dataset_seed(master_seed: int, dataset_index: int) -> int:
    """Stable per-dataset seed derived from the campaign master seed."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(dataset_index,))
    return int(seq.generate_state(1, np.uint64)[0])


def _dataset_path(out_dir: Path, index: int) -> Path:
    return out_dir / f"dataset_{index:04d}{DATASET_SUFFIX}"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = load_campaign_config(args.config, args.set)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    device = config.load_device()
    n_cycles = int(round(config.dataset_duration_s / (device.cycle_period_us * 1e-6)))
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    total_events = 0
    env = config.environment()
    for i in range(config.n_datasets):
        seed = dataset_seed(config.master_seed, i)
        events = simulate.sample_impact_events(
            config.event_rate_per_s,
            config.dataset_duration_s,
            config.event_amplitude_range,
            config.tau_mean_s,
            config.tau_sigma_s,
            rng_seed=seed,
        )
        dataset = simulate.simulate_rrecs(
            device, events, env, rng_seed=seed, n_cycles=n_cycles
        )
        simulate.save_dataset_binary(dataset, _dataset_path(out_dir, i))
        total_events += len(events)
    total_time = config.n_datasets * config.dataset_duration_s
    print(
        f"simulated {config.n_datasets} datasets x {config.dataset_duration_s:g}s "
        f"into {out_dir}"
    )
    print(
        f"injected {total_events} events "
        f"(mean rate {total_events / total_time:.4g}/s over {total_time:g}s)"
    )
    return EXIT_OK


def _expand_datasets(patterns: list[str], default_dir: str) -> list[Path]:
    if not patterns:
        patterns = [str(Path(default_dir) / f"*{DATASET_SUFFIX}")]
    paths: list[Path] = []
    for pattern in patterns:
        paths.extend(Path(p) for p in sorted(globlib.glob(pattern)))
    return paths


def _load_datasets(paths: list[Path]) -> tuple[list, list[Path]]:
    datasets, kept = [], []
    for path in paths:
        try:
            datasets.append(simulate.load_dataset_binary(path))
            kept.append(path)
        except DataError as exc:
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)
    return datasets, kept


def cmd_detect(args) -> int:
    config = load_campaign_config(args.config, args.set)
    paths = _expand_datasets(args.datasets, config.output_dir)
    if not paths:
        raise DataError("no dataset files matched")
    datasets, kept = _load_datasets(paths)
    if not datasets:
        raise DataError("all dataset files were unreadable")

    dcfg = config.detection
    report: list[dict] = []
    truth_times: list[float] = []
    truth_taus: list[float] = []
    matched_truth = 0
    offset = 0.0
    fitted_taus: list[float] = []
    for path, dataset in zip(kept, datasets):
        dt = dataset.cycle_period_s
        subset = dataset.device_ref.subset_indices(args.subset)
        series = det.summed_error_series(dataset, subset)
        template = det.make_filter_template(dcfg.template_tau_s, dt)
        filtered = det.matched_filter(series, template)
        onsets = det.detect_events(
            filtered, dcfg.threshold_sigma, dcfg.min_separation_s, dt
        )
        local_detections = []
        for onset in onsets:
            try:
                fit = det.fit_event_decay(series, int(onset), dcfg.fit_window_s, dt)
            except DomainError:
                # onset too close to the end of the dataset to characterize
                continue
            event = det.DetectedEvent(
                cycle_index=int(onset),
                time_s=offset + int(onset) * dt,
                peak_height=fit.peak_height,
                tau_fit_s=fit.tau_s,
                fit_rms_residual=fit.rms_residual,
            )
            local_detections.append(event)
            fitted_taus.append(fit.tau_s)
            report.append(
                {
                    "cycle_index": event.cycle_index,
                    "time_s": event.time_s,
                    "peak_height": event.peak_height,
                    "tau_fit_s": event.tau_fit_s,
                    "fit_rms_residual": event.fit_rms_residual,
                    "dataset": path.name,
                }
            )
        for ev in dataset.truth_events:
            truth_times.append(offset + ev.t0_s)
            truth_taus.append(ev.tau_decay_s)
            if any(
                abs((offset + ev.t0_s) - d.time_s) <= dcfg.min_separation_s
                for d in local_detections
            ):
                matched_truth += 1
        offset += dataset.duration_s

    out_dir = Path(args.out) if args.out else Path(config.output_dir)
    out_path = out_dir / "detections.json"
    atomic_write_text(out_path, json.dumps(report, indent=2) + "\n")
    print(f"{len(report)} events detected on subset '{args.subset}' -> {out_path}")
    if truth_times:
        recall = matched_truth / len(truth_times)
        precision = matched_truth / len(report) if report else float("nan")
        print(f"truth present: recall {recall:.3f}, precision {precision:.3f}")
        if fitted_taus and truth_taus:
            med_fit = float(np.median(fitted_taus))
            med_true = float(np.median(truth_taus))
            print(
                f"median fitted tau {med_fit * 1e3:.2f} ms "
                f"vs injected median {med_true * 1e3:.2f} ms "
                f"({(med_fit / med_true - 1.0) * 100.0:+.1f}%)"
            )
    else:
        print("no ground truth in sidecars; skipping recall/precision")
    return EXIT_OK


def _histogram_for(datasets, subset_name: str) -> det.ErrorHistogram:
    device = datasets[0].device_ref
    indices = device.subset_indices(subset_name)
    if not indices:
        raise ConfigError(f"subset {subset_name!r} selects no qubits")
    width = len(indices) + 1
    observed = np.zeros(width, dtype=np.int64)
    total = 0
    for dataset in datasets:
        observed += det.simultaneous_error_histogram(dataset, indices)
        total += dataset.n_cycles
    probs = simulate.event_free_error_probs(device)[indices]
    predicted = det.poisson_binomial_prediction(probs, total)
    return det.ErrorHistogram(
        observed_counts=observed, predicted_counts=predicted, n_samples=total
    )


def _write_histogram_csv(hist: det.ErrorHistogram, path: Path) -> None:
    lines = ["k,observed,predicted"]
    for k, (o, p) in enumerate(zip(hist.observed_counts, hist.predicted_counts)):
        lines.append(f"{k},{int(o)},{float(p)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_histogram(args) -> int:
    config = load_campaign_config(args.config, args.set)
    paths = _expand_datasets(args.datasets, config.output_dir)
    if not paths:
        raise DataError("no dataset files matched")
    datasets, _ = _load_datasets(paths)
    if not datasets:
        raise DataError("all dataset files were unreadable")
    hist = _histogram_for(datasets, args.subset)
    out_dir = Path(args.out) if args.out else Path(config.output_dir)
    out_path = out_dir / f"histogram_{args.subset}.csv"
    _write_histogram_csv(hist, out_path)
    statistic, pvalue, dof = det.chi_square_pvalue(
        hist.observed_counts, hist.predicted_counts
    )
    print(f"histogram over {hist.n_samples} cycles -> {out_path}")
    print(
        f"chi-square vs independent prediction: stat {statistic:.2f} "
        f"(dof {dof}), p = {pvalue:.3g}"
    )
    if pvalue <= 0.01:
        print("excess correlated errors flagged (p <= 0.01)")
    return EXIT_OK


def _read_two_column_csv(path: str, names: tuple[str, str]) -> tuple[np.ndarray, np.ndarray]:
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path}: empty file")
    start = 0
    head = [h.strip().lower() for h in lines[0].split(",")]
    if head == list(names):
        start = 1
    a, b = [], []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 comma-separated fields")
        try:
            a.append(float(parts[0]))
            b.append(float(parts[1]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return np.asarray(a), np.asarray(b)


def _fit_report_dict(result: fitting.FitResult, names) -> dict:
    return {
        "parameters": {
            name: {"value": float(v), "sigma": float(s)}
            for name, v, s in zip(names, result.params, result.param_sigmas)
        },
        "rms_residual": result.rms_residual,
        "n_iterations": result.n_iterations,
        "converged": result.converged,
        "message": result.message,
    }


def cmd_fit_spectrum(args) -> int:
    f, inv_t1 = _read_two_column_csv(args.csv, ("f_q_ghz", "inv_t1_per_s"))
    try:
        data = fitting.SpectrumDataset.from_arrays(f, inv_t1, args.gamma_bkgd)
        result = fitting.fit_t1_spectrum(data)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    payload = _fit_report_dict(result, fitting.SPECTRUM_PARAM_NAMES)
    out_path = Path(args.out or ".") / "spectrum_fit.json"
    atomic_write_text(out_path, json.dumps(payload, indent=2) + "\n")
    print(f"spectrum fit -> {out_path}")
    for name, entry in payload["parameters"].items():
        print(f"  {name}: {entry['value']:.6g} +- {entry['sigma']:.3g}")
    if not result.converged:
        print(f"fit did not converge: {result.message}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_fit_power(args) -> int:
    powers, x_qp = _read_two_column_csv(args.csv, ("power", "x_qp"))
    try:
        ss = fitting.fit_steady_state_curve(powers, x_qp)
        exponent, prefactor = fitting.fit_power_scaling(powers, x_qp)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    payload = _fit_report_dict(ss.fit, ("u", "v"))
    payload["r_over_s"] = ss.r_over_s
    payload["r_over_s_sigma"] = ss.r_over_s_sigma
    payload["v_indeterminate"] = ss.v_indeterminate
    payload["power_law_exponent"] = exponent
    payload["power_law_prefactor"] = prefactor
    out_path = Path(args.out or ".") / "power_fit.json"
    atomic_write_text(out_path, json.dumps(payload, indent=2) + "\n")
    print(f"steady-state power fit -> {out_path}")
    print(f"  r/s = {ss.r_over_s:.4g} +- {ss.r_over_s_sigma:.3g}")
    if ss.v_indeterminate:
        print("  warning: crossover not constrained by the data; r/s indeterminate")
    print(f"  global power-law exponent {exponent:.4g}")
    if not ss.fit.converged:
        print(f"fit did not converge: {ss.fit.message}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_report(args) -> int:
    campaign_dir = Path(args.campaign_dir)
    out_dir = Path(args.out) if args.out else campaign_dir / "report"
    dataset_paths = sorted(campaign_dir.glob(f"*{DATASET_SUFFIX}"))
    detections_path = campaign_dir / "detections.json"
    missing = []
    if not dataset_paths:
        missing.append(f"{campaign_dir}/*{DATASET_SUFFIX} (run 'qpburst simulate')")
    if not detections_path.exists():
        missing.append(f"{detections_path} (run 'qpburst detect')")
    if missing:
        raise DataError("missing report inputs: " + "; ".join(missing))

    datasets, kept = _load_datasets(dataset_paths)
    if not datasets:
        raise DataError("all dataset files were unreadable")
    try:
        detections = json.loads(detections_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{detections_path}: invalid JSON: {exc.msg}") from exc

    device = datasets[0].device_ref
    durations = [ds.duration_s for ds in datasets]
    boundaries = np.concatenate(([0.0], np.cumsum(durations)))
    total_duration = float(boundaries[-1])

    times = sorted(d["time_s"] for d in detections)
    taus = [d["tau_fit_s"] for d in detections]
    heights = [d["peak_height"] for d in detections]
    stats = det.inter_event_stats(times, boundaries)

    truth_count = sum(len(ds.truth_events) for ds in datasets)
    n_events = len(detections)
    rate = n_events / total_duration if total_duration else 0.0

    report = {
        "n_datasets": len(datasets),
        "total_duration_s": total_duration,
        "n_events_detected": n_events,
        "n_events_injected": truth_count,
        "event_rate_per_s_per_chip": rate,
        "event_flux_per_s_per_cm2": rate / device.chip_area_cm2,
        "mean_inter_event_time_s": (total_duration / n_events) if n_events else None,
        "within_dataset_pairs": stats.n_pairs,
        "interval_ks_statistic": stats.ks_statistic,
        "tau_decay_s": {
            "mean": float(np.mean(taus)) if taus else None,
            "median": float(np.median(taus)) if taus else None,
        },
        "peak_height": {
            "mean": float(np.mean(heights)) if heights else None,
            "median": float(np.median(heights)) if heights else None,
        },
        "histograms": {},
    }

    out_dir.mkdir(parents=True, exist_ok=True)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)

    histograms = {}
    for subset in ("weak", "strong", "all"):
        hist = _histogram_for(datasets, subset)
        histograms[subset] = hist
        _write_histogram_csv(hist, out_dir / f"histogram_{subset}.csv")
        statistic, pvalue, dof = det.chi_square_pvalue(
            hist.observed_counts, hist.predicted_counts
        )
        report["histograms"][subset] = {
            "chi_square": statistic,
            "dof": dof,
            "p_value": pvalue,
            "csv": f"histogram_{subset}.csv",
        }

    events_lines = ["dataset,cycle_index,time_s,peak_height,tau_fit_s,fit_rms_residual"]
    for d in detections:
        events_lines.append(
            f"{d.get('dataset', '')},{d['cycle_index']},{d['time_s']!r},"
            f"{d['peak_height']!r},{d['tau_fit_s']!r},{d['fit_rms_residual']!r}"
        )
    atomic_write_text(out_dir / "events.csv", "\n".join(events_lines) + "\n")

    interval_lines = ["bin_lo_s,bin_hi_s,observed,expected"]
    for lo, hi, o, e in zip(
        stats.bin_edges_s[:-1], stats.bin_edges_s[1:],
        stats.observed_counts, stats.expected_counts,
    ):
        interval_lines.append(f"{float(lo)!r},{float(hi)!r},{int(o)},{float(e)!r}")
    atomic_write_text(out_dir / "intervals.csv", "\n".join(interval_lines) + "\n")

    figures.save_event_parameter_figure(taus, heights, fig_dir / "event_parameters.png")
    figures.save_interval_figure(stats, fig_dir / "inter_event_intervals.png")
    figures.save_simultaneous_error_figure(
        histograms, fig_dir / "simultaneous_errors.png"
    )

    atomic_write_text(
        out_dir / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    print(f"report bundle -> {out_dir}")
    print(
        f"  {n_events} events over {total_duration:g}s "
        f"(rate {rate:.4g}/s/chip, flux {rate / device.chip_area_cm2:.4g}/s/cm^2)"
    )
    if taus:
        print(
            f"  tau median {np.median(taus) * 1e3:.2f} ms, "
            f"height median {np.median(heights):.2f}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpburst",
        description="Simulate and analyze correlated error bursts in a "
        "gap-engineered transmon array.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="campaign config JSON")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (repeatable)")

    p = sub.add_parser("simulate", help="generate datasets with injected events")
    common(p)
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="locate and fit bursts in datasets")
    common(p)
    p.add_argument("datasets", nargs="*", help="dataset globs (default: output dir)")
    p.add_argument("--subset", choices=("weak", "strong", "all"), default="weak")
    p.add_argument("--out", help="report directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("histogram", help="simultaneous-error histogram vs prediction")
    common(p)
    p.add_argument("datasets", nargs="*", help="dataset globs (default: output dir)")
    p.add_argument("--subset", choices=("weak", "strong", "all"), default="all")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("fit-spectrum", help="fit a 1/T1 spectrum CSV")
    p.add_argument("csv", help="CSV of f_q_GHz,inv_t1_per_s")
    p.add_argument("--gamma-bkgd", type=float, default=0.0,
                   help="background rate (1/s) to subtract")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_fit_spectrum)

    p = sub.add_parser("fit-power", help="fit steady-state x_qp vs optical power")
    p.add_argument("csv", help="CSV of power,x_qp")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_fit_power)

    p = sub.add_parser("report", help="bundle campaign results (CSV + figures)")
    p.add_argument("campaign_dir", help="directory with datasets and detections.json")
    p.add_argument("--out", help="report directory (default: <campaign>/report)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except QpBurstError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
