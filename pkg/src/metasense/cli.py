"""Command-line experiment runner.

Subcommands: sweep-device, optimize-placement, generate-data, train,
evaluate, run-pipeline, sweep-n.  Every command is deterministic given
(config, seed); emitted CSVs carry a comment header with the config hash
and seed.  Stage failures exit nonzero with a stage-tagged message.

Wall-clock stage timings go to a timings.json sidecar rather than into
report.json, so reports and CSVs are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from . import __version__
from .circuit import (CONDITION_RANGES, REFERENCE_CONDITIONS, ClampDiagnostics,
                      calibrate_coupling, resonance_frequency, srr_reflection)
from .config import (ExperimentConfig, config_hash, fixed_placement, load_config,
                     make_arch, make_array, make_device, make_link_params,
                     make_plan, make_sa_params, make_scene, make_train_config)
from .datagen import Dataset, build_dataset, default_families, save_dataset, load_dataset
from .errors import ConfigError, StageError
from .estimator import (evaluate, load_params, predict_batch, save_params,
                        train_verbose, write_eval_csv)
from .placement import (GainTable, PlacementResult, SaParams, anneal,
                        write_placement_csv, write_placement_meta, write_trace_csv)
from .protocol import FrequencyPlan
from .scene import CONDITION_COLUMNS, PlacementSet, Scene
from .svgplot import svg_line_plot


@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, str(exc)) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def _header(cfg: ExperimentConfig) -> list:
    return [f"config_hash={config_hash(cfg)} seed={cfg['run']['seed']}"]


def _out_dir(cfg: ExperimentConfig) -> str:
    d = cfg["run"]["out_dir"]
    os.makedirs(d, exist_ok=True)
    return d


def _seeds(cfg: ExperimentConfig, extra=None) -> dict:
    """Derive the per-stage integer seeds from the run seed.

    Data seeds depend only on (run seed, pairing index), never on the
    placement mode, so optimized-vs-random comparisons share fields.
    """
    entropy = [int(cfg["run"]["seed"])]
    if extra is not None:
        entropy.append(int(extra))
    root = np.random.SeedSequence(entropy)
    kids = root.spawn(4)
    names = ("placement", "data_train", "data_test", "train")
    return {n: int(k.generate_state(1, dtype=np.uint64)[0]) for n, k in zip(names, kids)}


# ------------------------------------------------------------- placement

def _objective_freq(cfg: ExperimentConfig, plan: FrequencyPlan):
    return plan.frequencies if cfg["placement"]["band_average"] else plan.center_hz


def resolve_placement(cfg: ExperimentConfig, scene: Scene, seed: int,
                      mode: str = None, n_devices: int = None,
                      table: GainTable = None):
    """Placement per the configured mode -> (PlacementSet, objective, result)."""
    pcfg = cfg["placement"]
    mode = mode or pcfg["mode"]
    plan = make_plan(cfg)
    arr = make_array(cfg)
    f_obj = _objective_freq(cfg, plan)
    if table is None:
        table = GainTable(scene, f_obj, arr, arr)
    if mode == "fixed":
        placement = fixed_placement(cfg, scene)
        idx = [int(np.argmin(np.linalg.norm(scene.candidates - np.asarray(p), axis=1)))
               for p in placement.positions]
        obj = table.objective_of(idx)
        return placement, obj, None
    n = int(n_devices or pcfg["n_devices"])
    if mode == "random":
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(scene.candidates), size=n, replace=False)
        placement = PlacementSet(tuple(tuple(scene.candidates[i]) for i in idx))
        return placement, table.objective_of(idx), None
    # anneal, possibly multi-chain
    chains = int(pcfg["n_chains"])
    chain_seeds = [int(s.generate_state(1, dtype=np.uint64)[0])
                   for s in np.random.SeedSequence(seed).spawn(max(chains, 1))]
    best = None
    for cs in chain_seeds:
        params = make_sa_params(cfg, cs)
        result = anneal(scene, n, params, f_obj, arr, arr, table=table)
        if best is None or result.objective > best.objective:
            best = result
    return best.placement, best.objective, best


def cmd_optimize_placement(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    timings = {}
    with _stage("placement", timings):
        scene = make_scene(cfg)
        seeds = _seeds(cfg)
        placement, obj, result = resolve_placement(cfg, scene, seeds["placement"])
        if result is None:
            result = PlacementResult(placement=placement, objective=obj,
                                     trace=np.asarray([obj]))
        hdr = _header(cfg)
        write_placement_csv(os.path.join(out, "placement.csv"), result, hdr)
        write_placement_meta(os.path.join(out, "placement_meta.json"), result,
                             make_sa_params(cfg, seeds["placement"]))
        write_trace_csv(os.path.join(out, "placement_trace.csv"), result, hdr)
        if result.trace.size > 1:
            svg_line_plot(os.path.join(out, "placement_trace.svg"),
                          list(range(result.trace.size)),
                          [("best objective", list(result.trace))],
                          title="Annealing convergence", xlabel="iteration",
                          ylabel="best min gain ratio")
    print(f"placement objective {result.objective:.6g}; wrote {out}/placement.csv")
    return 0


# ----------------------------------------------------------- sweep-device

def cmd_sweep_device(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    timings = {}
    with _stage("sweep-device", timings):
        sw = cfg["sweep_device"]
        device = make_device(cfg)
        idx = int(sw["srr_index"])
        if not 0 <= idx < len(device.srrs):
            raise ConfigError(f"sweep_device.srr_index {idx} out of range")
        base = device.srrs[idx]
        band = (sw["f_low_hz"], sw["f_high_hz"])
        freqs = np.linspace(band[0], band[1], int(sw["n_samples"]))
        target_ref = REFERENCE_CONDITIONS[base.material.kind]
        others_ref = {k: v for k, v in REFERENCE_CONDITIONS.items()
                      if k != base.material.kind}
        curves, peaks = [], []
        for gap_mm in sw["gap_widths_mm"]:
            srr = replace(base, gap_width=gap_mm * 1e-3, coupling=0.0)
            srr = calibrate_coupling(srr, band)
            refl = srr_reflection(srr, freqs, target_ref, others_ref)
            res = resonance_frequency(srr, target_ref, others_ref, band)
            curves.append((f"{gap_mm:.3g} mm", refl))
            peaks.append((gap_mm, res.frequency_hz))
        hdr = _header(cfg)
        path = os.path.join(out, "sweep_device.csv")
        with open(path, "w", newline="") as fh:
            for line in hdr:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["frequency_hz"] + [f"reflection_gap_{g:.4g}mm" for g, _ in peaks])
            for k in range(freqs.size):
                w.writerow([repr(float(freqs[k]))] + [repr(float(c[k])) for _, c in curves])
        with open(os.path.join(out, "sweep_device_peaks.csv"), "w", newline="") as fh:
            for line in hdr:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["gap_width_mm", "peak_frequency_hz"])
            for g, f in peaks:
                w.writerow([repr(float(g)), repr(float(f))])
        svg_line_plot(os.path.join(out, "sweep_device.svg"), freqs / 1e9,
                      curves, title="Reflection vs frequency by gap width",
                      xlabel="frequency (GHz)", ylabel="reflection coefficient")
    print(f"swept {len(peaks)} gap widths; wrote {out}/sweep_device.csv")
    return 0


# ------------------------------------------------------------- data/train

def _build_datasets(cfg: ExperimentConfig, scene, device, plan, link, placement, seeds):
    fams = default_families(cfg["datagen"]["families"])
    noise = cfg["link"]["noise_std_db"]
    diag = ClampDiagnostics()
    train_ds = build_dataset(scene, placement, device, plan, fams,
                             int(cfg["datagen"]["n_per_family"]), link, noise,
                             seeds["data_train"], diag)
    test_ds = build_dataset(scene, placement, device, plan, fams,
                            int(cfg["datagen"]["n_test_per_family"]), link, noise,
                            seeds["data_test"], diag)
    return train_ds, test_ds, diag


def cmd_generate_data(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    timings = {}
    with _stage("placement", timings):
        scene = make_scene(cfg)
        seeds = _seeds(cfg)
        placement, obj, _ = resolve_placement(cfg, scene, seeds["placement"])
    with _stage("datagen", timings):
        device = make_device(cfg)
        plan = make_plan(cfg)
        link = make_link_params(cfg)
        train_ds, test_ds, diag = _build_datasets(cfg, scene, device, plan, link,
                                                  placement, seeds)
        hdr = _header(cfg)
        save_dataset(train_ds, os.path.join(out, "dataset_train"), scene, hdr)
        save_dataset(test_ds, os.path.join(out, "dataset_test"), scene, hdr)
    print(f"wrote {len(train_ds)} train / {len(test_ds)} test samples to {out}; "
          f"field clamp fraction {diag.clamp_fraction:.2e}")
    return 0


def cmd_train(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    timings = {}
    with _stage("train", timings):
        scene = make_scene(cfg)
        plan = make_plan(cfg)
        seeds = _seeds(cfg)
        train_ds = load_dataset(os.path.join(out, "dataset_train"))
        n_devices = len(train_ds.manifest["placement"])
        arch = make_arch(cfg, plan, n_devices, scene)
        tc = make_train_config(cfg, seeds["train"])
        params, history = train_verbose(arch, train_ds.measurement_array(),
                                        train_ds.truth_array(), tc)
        save_params(os.path.join(out, "params.npz"), params, arch, tc)
        _write_history(cfg, out, history)
    print(f"trained {arch.n_params()} params for {tc.epochs} epochs; "
          f"best val loss {min(history.val_loss):.6g} (epoch {history.best_epoch}); "
          f"wrote {out}/params.npz")
    return 0


def _write_history(cfg, out, history) -> None:
    hdr = _header(cfg)
    path = os.path.join(out, "train_history.csv")
    with open(path, "w", newline="") as fh:
        for line in hdr:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for e, (tr, vl) in enumerate(zip(history.train_loss, history.val_loss[1:]), start=1):
            w.writerow([e, repr(tr), repr(vl)])
    if history.train_loss:
        epochs = list(range(1, len(history.train_loss) + 1))
        svg_line_plot(os.path.join(out, "train_history.svg"), epochs,
                      [("train", history.train_loss), ("validation", history.val_loss[1:])],
                      title="Training loss", xlabel="epoch",
                      ylabel="mean normalized loss", logy=True)


# -------------------------------------------------------------- evaluate

def _range_normalized_rmse(est: np.ndarray, truth: np.ndarray) -> float:
    """RMSE over all cells/conditions with each condition scaled by its
    physical range width, so kelvins and fractions mix fairly."""
    widths = np.asarray([CONDITION_RANGES[k][1] - CONDITION_RANGES[k][0]
                         for k in CONDITION_COLUMNS[: est.shape[1]]])
    err = (est - truth) / widths.reshape(1, -1, 1)
    return float(np.sqrt(np.mean(err ** 2)))


def _heatmap_rows(scene: Scene, values: np.ndarray, z_height: float):
    """values: (N_s, M) -> per-cell rows of the z-slice nearest z_height."""
    zc = (np.arange(scene.nz) + 0.5) * scene.grid_res
    iz = int(np.argmin(np.abs(zc - z_height)))
    rows = []
    for iy in range(scene.ny):
        for ix in range(scene.nx):
            ci = scene.cell_index(ix, iy, iz)
            cx = (ix + 0.5) * scene.grid_res
            cy = (iy + 0.5) * scene.grid_res
            rows.append([ix, iy, cx, cy] + [float(values[s, ci])
                                            for s in range(values.shape[0])])
    return rows, iz


def _write_heatmap(path, scene, values, z_height, header_lines) -> None:
    rows, iz = _heatmap_rows(scene, values, z_height)
    cond_cols = list(CONDITION_COLUMNS[: values.shape[0]])
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# z_slice_index={iz}\n")
        w = csv.writer(fh)
        w.writerow(["ix", "iy", "cx", "cy"] + cond_cols)
        for r in rows:
            w.writerow(r[:4] + [repr(v) for v in r[4:]])


def _evaluate_and_emit(cfg, out, scene, arch, params, test_ds: Dataset,
                       baseline: np.ndarray = None) -> dict:
    hdr = _header(cfg)
    meas = test_ds.measurement_array()
    truth = test_ds.truth_array()
    report = evaluate(params, arch, meas, truth)
    write_eval_csv(os.path.join(out, "eval_report.csv"), report,
                   CONDITION_COLUMNS, hdr)
    with open(os.path.join(out, "cell_rmse.csv"), "w", newline="") as fh:
        for line in hdr:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["cell_index"] + [f"rmse_{c}" for c in
                                     CONDITION_COLUMNS[: report.cell_rmse.shape[0]]])
        for ci in range(report.cell_rmse.shape[1]):
            w.writerow([ci] + [repr(float(v)) for v in report.cell_rmse[:, ci]])
    est = predict_batch(params, arch, meas)
    z = cfg["run"]["heatmap_z"]
    _write_heatmap(os.path.join(out, "heatmap_truth.csv"), scene, truth[0], z, hdr)
    _write_heatmap(os.path.join(out, "heatmap_estimate.csv"), scene, est[0], z, hdr)
    metrics = {
        "rmse": {c: float(report.rmse[i]) for i, c in
                 enumerate(CONDITION_COLUMNS[: report.rmse.size])},
        "mae": {c: float(report.mae[i]) for i, c in
                enumerate(CONDITION_COLUMNS[: report.mae.size])},
        "rmse_range_normalized": _range_normalized_rmse(est, truth),
        "n_test_samples": report.n_samples,
    }
    if baseline is not None:
        base_est = np.broadcast_to(baseline.reshape(1, -1, 1), truth.shape)
        base_err = base_est - truth
        metrics["baseline_rmse"] = {
            c: float(np.sqrt(np.mean(base_err[:, i] ** 2)))
            for i, c in enumerate(CONDITION_COLUMNS[: truth.shape[1]])}
        metrics["baseline_rmse_range_normalized"] = _range_normalized_rmse(
            np.asarray(base_est), truth)
    return metrics


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    timings = {}
    with _stage("evaluate", timings):
        scene = make_scene(cfg)
        params, arch, _ = load_params(os.path.join(out, "params.npz"))
        test_ds = load_dataset(os.path.join(out, "dataset_test"))
        metrics = _evaluate_and_emit(cfg, out, scene, arch, params, test_ds)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


# ----------------------------------------------------------- run-pipeline

def run_pipeline_once(cfg: ExperimentConfig, mode: str = None, n_devices: int = None,
                      pair_index=None, out: str = None, table: GainTable = None,
                      timings: dict = None) -> dict:
    """Placement -> data -> train -> evaluate; returns the metrics dict.

    When `out` is given, all artifacts are written there; otherwise the
    pipeline runs in memory (used by sweep-n cells).
    """
    timings = {} if timings is None else timings
    hdr = None if out is None else _header(cfg)
    with _stage("placement", timings):
        scene = make_scene(cfg)
        seeds = _seeds(cfg, pair_index)
        placement, obj, result = resolve_placement(cfg, scene, seeds["placement"],
                                                   mode=mode, n_devices=n_devices,
                                                   table=table)
        if out is not None:
            if result is None:
                result = PlacementResult(placement=placement, objective=obj,
                                         trace=np.asarray([obj]))
            write_placement_csv(os.path.join(out, "placement.csv"), result, hdr)
            write_trace_csv(os.path.join(out, "placement_trace.csv"), result, hdr)
    with _stage("datagen", timings):
        device = make_device(cfg)
        plan = make_plan(cfg)
        link = make_link_params(cfg)
        train_ds, test_ds, diag = _build_datasets(cfg, scene, device, plan, link,
                                                  placement, seeds)
    with _stage("train", timings):
        arch = make_arch(cfg, plan, len(placement), scene)
        tc = make_train_config(cfg, seeds["train"])
        params, history = train_verbose(arch, train_ds.measurement_array(),
                                        train_ds.truth_array(), tc)
        if out is not None:
            save_params(os.path.join(out, "params.npz"), params, arch, tc)
            _write_history(cfg, out, history)
    with _stage("evaluate", timings):
        train_truth = train_ds.truth_array()
        baseline = train_truth.mean(axis=(0, 2))
        if out is not None:
            metrics = _evaluate_and_emit(cfg, out, scene, arch, params, test_ds, baseline)
        else:
            meas = test_ds.measurement_array()
            truth = test_ds.truth_array()
            report = evaluate(params, arch, meas, truth)
            est = predict_batch(params, arch, meas)
            base_est = np.broadcast_to(baseline.reshape(1, -1, 1), truth.shape)
            metrics = {
                "rmse": {c: float(report.rmse[i]) for i, c in
                         enumerate(CONDITION_COLUMNS[: report.rmse.size])},
                "mae": {c: float(report.mae[i]) for i, c in
                        enumerate(CONDITION_COLUMNS[: report.mae.size])},
                "rmse_range_normalized": _range_normalized_rmse(est, truth),
                "baseline_rmse_range_normalized": _range_normalized_rmse(
                    np.asarray(base_est), truth),
                "n_test_samples": report.n_samples,
            }
    metrics["placement_objective"] = float(obj)
    metrics["best_epoch"] = history.best_epoch
    metrics["field_clamp_fraction"] = diag.clamp_fraction
    return metrics


def cmd_run_pipeline(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    timings = {}
    metrics = run_pipeline_once(cfg, out=out, timings=timings)
    with _stage("report", timings):
        artifacts = ["placement.csv", "placement_trace.csv", "params.npz",
                     "train_history.csv", "train_history.svg", "eval_report.csv",
                     "cell_rmse.csv", "heatmap_truth.csv", "heatmap_estimate.csv"]
        report = {
            "version": __version__,
            "config_hash": config_hash(cfg),
            "seed": cfg["run"]["seed"],
            "metrics": metrics,
            "artifacts": artifacts,
        }
        for rel in artifacts:
            if not os.path.exists(os.path.join(out, rel)):
                raise ConfigError(f"expected artifact missing: {rel}")
        with open(os.path.join(out, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    with open(os.path.join(out, "timings.json"), "w") as fh:
        json.dump({k: round(v, 3) for k, v in timings.items()}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    print(f"pipeline done; temperature RMSE "
          f"{metrics['rmse']['temperature']:.3f} K; wrote {out}/report.json")
    return 0


# --------------------------------------------------------------- sweep-n

def cmd_sweep_n(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    sw = cfg["sweep_n"]
    n_list = [int(n) for n in sw["n_list"]]
    n_seeds = int(sw["n_seeds"])
    hdr = _header(cfg)
    scene = make_scene(cfg)
    plan = make_plan(cfg)
    arr = make_array(cfg)
    table = GainTable(scene, _objective_freq(cfg, plan), arr, arr)
    runs = []
    for n in n_list:
        for mode in ("optimized", "random"):
            pmode = "anneal" if mode == "optimized" else "random"
            for pair in range(n_seeds):
                try:
                    m = run_pipeline_once(cfg, mode=pmode, n_devices=n,
                                          pair_index=pair, table=table)
                    runs.append({"n_devices": n, "mode": mode, "pair_index": pair,
                                 "status": "ok",
                                 "rmse_range_normalized": m["rmse_range_normalized"],
                                 "rmse_temperature": m["rmse"]["temperature"],
                                 "rmse_humidity": m["rmse"].get("humidity"),
                                 "placement_objective": m["placement_objective"]})
                except StageError as exc:
                    runs.append({"n_devices": n, "mode": mode, "pair_index": pair,
                                 "status": f"error: {exc}",
                                 "rmse_range_normalized": None,
                                 "rmse_temperature": None, "rmse_humidity": None,
                                 "placement_objective": None})
                    print(f"warning: N={n} mode={mode} pair={pair} failed: {exc}",
                          file=sys.stderr)
    with open(os.path.join(out, "sweep_n_runs.csv"), "w", newline="") as fh:
        for line in hdr:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        cols = ["n_devices", "mode", "pair_index", "status", "rmse_range_normalized",
                "rmse_temperature", "rmse_humidity", "placement_objective"]
        w.writerow(cols)
        for r in runs:
            w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c])
                        for c in cols])
    # aggregate: one row per (N, mode) with the median over pair seeds
    agg = []
    for n in n_list:
        for mode in ("optimized", "random"):
            vals = [r["rmse_range_normalized"] for r in runs
                    if r["n_devices"] == n and r["mode"] == mode and r["status"] == "ok"]
            agg.append({"n_devices": n, "mode": mode, "n_ok": len(vals),
                        "median_rmse_range_normalized":
                            statistics.median(vals) if vals else None})
    with open(os.path.join(out, "rmse_vs_n.csv"), "w", newline="") as fh:
        for line in hdr:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["n_devices", "mode", "n_ok", "median_rmse_range_normalized"])
        for r in agg:
            v = r["median_rmse_range_normalized"]
            w.writerow([r["n_devices"], r["mode"], r["n_ok"],
                        "" if v is None else repr(v)])
    by_mode = {}
    for mode in ("optimized", "random"):
        ys = [r["median_rmse_range_normalized"] for r in agg if r["mode"] == mode]
        if all(v is not None for v in ys):
            by_mode[mode] = ys
    if by_mode:
        svg_line_plot(os.path.join(out, "rmse_vs_n.svg"), n_list,
                      list(by_mode.items()), title="Test RMSE vs device count",
                      xlabel="number of devices", ylabel="range-normalized RMSE")
    ok = sum(1 for r in runs if r["status"] == "ok")
    print(f"sweep-n finished: {ok}/{len(runs)} cells ok; wrote {out}/rmse_vs_n.csv")
    return 0 if ok == len(runs) else 1


# ------------------------------------------------------------------ main

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML config file")
    common.add_argument("--seed", type=int, metavar="U64", help="override run.seed")
    common.add_argument("--out", metavar="DIR", help="override run.out_dir")
    common.add_argument("--dry-run", action="store_true",
                        help="validate the config and exit without side effects")
    p = argparse.ArgumentParser(prog="metasense",
                                description="Meta-material IoT sensing simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    cmds = [
        ("sweep-device", cmd_sweep_device, "reflection curves over gap widths"),
        ("optimize-placement", cmd_optimize_placement, "anneal device positions"),
        ("generate-data", cmd_generate_data, "build and save train/test datasets"),
        ("train", cmd_train, "train the estimator on a saved dataset"),
        ("evaluate", cmd_evaluate, "evaluate saved params on the saved test set"),
        ("run-pipeline", cmd_run_pipeline, "placement + data + train + evaluate"),
        ("sweep-n", cmd_sweep_n, "RMSE vs device count, optimized vs random"),
    ]
    for name, func, help_ in cmds:
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    except (ValueError, OSError) as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        print(f"config ok: hash={config_hash(cfg)} seed={cfg['run']['seed']} "
              f"out={cfg['run']['out_dir']}")
        return 0
    try:
        return args.func(cfg, args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
