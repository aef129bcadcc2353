"""Command-line experiment harness.

Subcommands: generate, train-ae, train-estimator, evaluate, sensitivity.
Each takes --config <path> (flat key = value file) and --seed <u64>; paths
resolve against the config's data_dir, which defaults to $GUQ_DATA_DIR.
Exit codes: 0 success, 2 config error, 3 data/model mismatch, 4 numeric
failure. Every command writes a manifest with its effective configuration,
and all CSV output is byte-stable for a given (config, seed).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .autoencoder import (
    AutoencoderModel,
    ae_validation_field_mse,
    encoded_targets,
    pod_baseline_mse,
    read_latents_csv,
    train_autoencoder,
    write_latents_csv,
)
from .config import RunConfig, load_config, write_manifest
from .dataset import (
    Dataset,
    build_dataset,
    export_csv,
    format_float,
    load_dataset,
    preset_plan,
    sample_cases,
    save_dataset,
)
from .errors import ConfigError, DataMismatchError, NumericError
from .gaussian import tri_size
from .network import TrainConfig, load_network, save_network
from .pipeline import (
    InferenceSettings,
    LATENT_DIM,
    PLANES,
    check_targets_match,
    ellipsoid_coverage,
    evaluate_case,
    flag_max_uncertainty,
    sensitivity_series,
    train_deterministic_estimator,
    train_probabilistic_estimator,
)
from .svgplot import ellipse_overlay_svg, lift_band_svg, sensor_bars_svg
from .uncertainty import write_report_csv
from .gramian import write_sensitivity_csv
from .config import parse_config_text


def _require_file(path, what):
    if not os.path.exists(path):
        raise DataMismatchError(f"missing {what}: {path} (run the producing command first)")
    return path


def _load_dataset(cfg: RunConfig) -> Dataset:
    return load_dataset(_require_file(cfg.path("dataset"), "dataset"))


def _train_config(cfg: RunConfig, max_epochs, patience) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        batch_size=cfg.batch_size,
        max_epochs=max_epochs,
        patience=min(patience, max_epochs),
        rng_seed=cfg.seed,
    )


def _write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for i, (tr, va) in enumerate(zip(history.train_loss, history.val_loss)):
            fh.write(f"{i},{format_float(tr)},{format_float(va)}\n")


def _ae_paths(cfg: RunConfig):
    prefix = cfg.path("ae_prefix")
    return {
        "encoder": prefix + "_encoder.guqm",
        "field_decoder": prefix + "_field_decoder.guqm",
        "lift_decoder": prefix + "_lift_decoder.guqm",
        "meta": prefix + "_meta.txt",
    }


def _save_autoencoder(cfg: RunConfig, model: AutoencoderModel):
    paths = _ae_paths(cfg)
    save_network(paths["encoder"], model.encoder)
    save_network(paths["field_decoder"], model.field_decoder)
    save_network(paths["lift_decoder"], model.lift_decoder)
    with open(paths["meta"], "w", encoding="utf-8") as fh:
        fh.write(f"grid_ny = {model.grid_shape[0]}\n")
        fh.write(f"grid_nx = {model.grid_shape[1]}\n")
        fh.write(f"beta = {format_float(model.beta)}\n")
        for key in sorted(model.norms):
            fh.write(f"{key} = {format_float(model.norms[key])}\n")


def _load_autoencoder(cfg: RunConfig) -> AutoencoderModel:
    paths = _ae_paths(cfg)
    for what, p in paths.items():
        _require_file(p, f"autoencoder {what}")
    with open(paths["meta"], encoding="utf-8") as fh:
        meta = parse_config_text(fh.read())
    grid_shape = (int(meta.pop("grid_ny")), int(meta.pop("grid_nx")))
    beta = float(meta.pop("beta"))
    norms = {k: float(v) for k, v in meta.items()}
    return AutoencoderModel(load_network(paths["encoder"]),
                            load_network(paths["field_decoder"]),
                            load_network(paths["lift_decoder"]),
                            grid_shape, norms, beta)


def _settings(cfg: RunConfig) -> InferenceSettings:
    return InferenceSettings(seed=cfg.seed, T=cfg.T, M=cfg.M, gamma=cfg.gamma,
                             sigma_x2=cfg.sigma_x2,
                             gramian_samples=cfg.gramian_samples)


# --- subcommands -----------------------------------------------------------------


def cmd_generate(cfg: RunConfig):
    plan = preset_plan(cfg.preset)
    cases = sample_cases(cfg.preset, cfg.seed)
    ds = build_dataset(cases, split_seed=cfg.seed,
                       n_snapshots=plan["snapshots_per_case"])
    os.makedirs(cfg.data_dir, exist_ok=True)
    save_dataset(cfg.path("dataset"), ds)
    cases_csv = os.path.join(cfg.data_dir, "cases.csv")
    with open(cases_csv, "w", newline="") as fh:
        fh.write("case_id,alpha_deg,gust_strength,gust_radius,gust_y0,gust_x0,disturbed\n")
        for c in cases:
            fh.write(",".join([str(c.case_id), format_float(c.alpha_deg),
                               format_float(c.gust_strength), format_float(c.gust_radius),
                               format_float(c.gust_y0), format_float(c.gust_x0),
                               str(int(c.disturbed))]) + "\n")
    if cfg.write_csv:
        export_csv(os.path.join(cfg.data_dir, "dataset.csv"), ds)
    write_manifest(os.path.join(cfg.data_dir, "generate_manifest.txt"), cfg, {
        "n_cases": plan["n_cases"],
        "snapshots_per_case": plan["snapshots_per_case"],
        "total_snapshots": plan["total_snapshots"],
        "n_train": ds.train_indices().size,
        "n_validation": ds.val_indices().size,
    })
    print(f"generate: {plan['n_cases']} cases x {plan['snapshots_per_case']} snapshots "
          f"-> {cfg.path('dataset')}")
    return {"dataset": cfg.path("dataset"), "plan": plan}


def cmd_train_ae(cfg: RunConfig):
    ds = _load_dataset(cfg)
    # the autoencoder trains without weight decay; the published 1e-7
    # regularization constant belongs to the sensor estimator
    tc = _train_config(cfg, cfg.ae_max_epochs, cfg.ae_patience)
    tc = TrainConfig(learning_rate=tc.learning_rate, weight_decay=0.0,
                     batch_size=tc.batch_size, max_epochs=tc.max_epochs,
                     patience=tc.patience, rng_seed=tc.rng_seed)
    model, trajectories, history = train_autoencoder(ds, tc)
    _save_autoencoder(cfg, model)
    write_latents_csv(cfg.path("latents"), trajectories)
    _write_history_csv(os.path.join(cfg.data_dir, "ae_history.csv"), history)
    ae_mse = ae_validation_field_mse(model, ds)
    pod_mse = pod_baseline_mse(ds, rank=LATENT_DIM)
    write_manifest(os.path.join(cfg.data_dir, "train_ae_manifest.txt"), cfg, {
        "epochs_run": history.epochs_run,
        "best_epoch": history.best_epoch,
        "best_val_loss": format_float(history.best_val),
        "validation_field_mse": format_float(ae_mse),
        "pod_rank3_baseline_mse": format_float(pod_mse),
        "diverged": history.diverged,
    })
    print(f"train-ae: best val loss {history.best_val:.6f} at epoch "
          f"{history.best_epoch} ({history.epochs_run} epochs); field MSE "
          f"{ae_mse:.6f} vs POD baseline {pod_mse:.6f}")
    return {"history": history, "ae_mse": ae_mse, "pod_mse": pod_mse}


def cmd_train_estimator(cfg: RunConfig):
    ds = _load_dataset(cfg)
    if ds.layout.stacked_dim != 33:
        raise DataMismatchError(
            f"estimator expects a 33-entry stacked sensor vector, dataset has "
            f"{ds.layout.stacked_dim}")
    case_ids, _, targets = read_latents_csv(_require_file(cfg.path("latents"),
                                                          "latent targets"))
    check_targets_match(ds, case_ids, targets)
    tc = _train_config(cfg, cfg.est_max_epochs, cfg.est_patience)
    prob_net, prob_hist = train_probabilistic_estimator(
        ds, targets, tc, cfg.dropout_rate, noise_sigma=float(np.sqrt(cfg.sigma_x2)),
        copies=cfg.augment_copies)
    det_net, det_hist = train_deterministic_estimator(ds, targets, tc,
                                                      cfg.dropout_rate)
    save_network(cfg.path("estimator_prob"), prob_net)
    save_network(cfg.path("estimator_det"), det_net)
    _write_history_csv(os.path.join(cfg.data_dir, "estimator_prob_history.csv"), prob_hist)
    _write_history_csv(os.path.join(cfg.data_dir, "estimator_det_history.csv"), det_hist)
    write_manifest(os.path.join(cfg.data_dir, "train_estimator_manifest.txt"), cfg, {
        "prob_epochs_run": prob_hist.epochs_run,
        "prob_best_val_nll": format_float(prob_hist.best_val),
        "det_epochs_run": det_hist.epochs_run,
        "det_best_val_mse": format_float(det_hist.best_val),
        "input_dim": prob_net.input_dim,
        "head_dim": prob_net.output_dim,
    })
    print(f"train-estimator: prob val NLL {prob_hist.best_val:.4f} "
          f"({prob_hist.epochs_run} epochs), det val MSE {det_hist.best_val:.6f} "
          f"({det_hist.epochs_run} epochs)")
    return {"prob": prob_hist, "det": det_hist}


def _eval_case_ids(cfg: RunConfig, ds: Dataset):
    if cfg.eval_cases.strip() == "auto":
        base = [c.case_id for c in ds.cases if not c.disturbed]
        gust = [c.case_id for c in ds.cases if c.disturbed][:2]
        return base + gust
    try:
        ids = [int(tok) for tok in cfg.eval_cases.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"eval_cases must be 'auto' or comma-separated ids: {exc}")
    known = {c.case_id for c in ds.cases}
    for cid in ids:
        if cid not in known:
            raise DataMismatchError(f"eval case {cid} not present in dataset")
    return ids


def _load_estimators(cfg: RunConfig, ds: Dataset):
    prob_net = load_network(_require_file(cfg.path("estimator_prob"),
                                          "probabilistic estimator"))
    det_net = load_network(_require_file(cfg.path("estimator_det"),
                                         "deterministic estimator"))
    want = ds.layout.stacked_dim
    for name, net in (("probabilistic", prob_net), ("deterministic", det_net)):
        if net.input_dim != want:
            raise DataMismatchError(
                f"{name} estimator takes {net.input_dim} inputs, dataset provides {want}")
    if prob_net.output_dim != LATENT_DIM + tri_size(LATENT_DIM):
        raise DataMismatchError(
            f"probabilistic estimator head has {prob_net.output_dim} outputs, "
            f"need {LATENT_DIM + tri_size(LATENT_DIM)}")
    if det_net.output_dim != LATENT_DIM:
        raise DataMismatchError(
            f"deterministic estimator head has {det_net.output_dim} outputs, "
            f"need {LATENT_DIM}")
    return prob_net, det_net


def cmd_evaluate(cfg: RunConfig):
    ds = _load_dataset(cfg)
    ae = _load_autoencoder(cfg)
    if ae.n_pixels != ds.grid.n_pixels:
        raise DataMismatchError(
            f"autoencoder was trained on {ae.n_pixels} pixels, dataset grid has "
            f"{ds.grid.n_pixels}")
    prob_net, det_net = _load_estimators(cfg, ds)
    case_ids, _, targets = read_latents_csv(_require_file(cfg.path("latents"),
                                                          "latent targets"))
    check_targets_match(ds, case_ids, targets)
    settings = _settings(cfg)
    out = cfg.path("out_dir")
    os.makedirs(out, exist_ok=True)

    reports = []
    for cid in _eval_case_ids(cfg, ds):
        reports.extend(evaluate_case(ds, cid, ae, prob_net, det_net, targets,
                                     settings))
    flags = flag_max_uncertainty(reports)

    write_report_csv(os.path.join(out, "report.csv"), [
        (r.case_id, r.time_index, r.kind, r.lift_mean, r.lift_two_sigma,
         r.avg_ll, flags[i]) for i, r in enumerate(reports)
    ])

    with open(os.path.join(out, "latent_eval.csv"), "w", newline="") as fh:
        cols = ["case_id", "time_index", "kind", "mu1", "mu2", "mu3"]
        for i, j in PLANES:
            tag = f"p{i + 1}{j + 1}"
            cols += [f"{tag}_major", f"{tag}_minor", f"{tag}_angle"]
        fh.write(",".join(cols) + "\n")
        for r in reports:
            row = [str(r.case_id), str(r.time_index), r.kind]
            row += [format_float(v) for v in r.latent_mean]
            for p in PLANES:
                e = r.ellipses[p]
                row += [format_float(e.semi_axes[0]), format_float(e.semi_axes[1]),
                        format_float(e.angle)]
            fh.write(",".join(row) + "\n")

    with open(os.path.join(out, "field_stats.csv"), "w", newline="") as fh:
        fh.write("case_id,time_index,kind,lift_truth,lift_mean,lift_2sigma,"
                 "pixel_var_mean,pixel_var_max,avg_loglikelihood\n")
        for r in reports:
            fh.write(",".join([str(r.case_id), str(r.time_index), r.kind,
                               format_float(r.lift_truth), format_float(r.lift_mean),
                               format_float(r.lift_two_sigma),
                               format_float(r.pixel_var_mean),
                               format_float(r.pixel_var_max),
                               format_float(r.avg_ll)]) + "\n")

    # held-out latent-truth coverage of the 95% ellipsoids
    coverage = ellipsoid_coverage(ds, ds.val_indices(), prob_net, det_net,
                                  targets, settings)
    lift_cov = {}
    for i, r in enumerate(reports):
        key = (r.case_id, r.kind)
        n_in, n_all = lift_cov.get(key, (0, 0))
        inside = abs(r.lift_truth - r.lift_mean) <= r.lift_two_sigma
        lift_cov[key] = (n_in + int(inside), n_all + 1)
    with open(os.path.join(out, "coverage.csv"), "w", newline="") as fh:
        fh.write("case_id,kind,n_rows,lift_inside_2sigma_fraction,"
                 "n_heldout,ellipsoid_inside_fraction\n")
        for kind in ("aleatoric", "epistemic"):
            overall, per_case = coverage[kind]
            for cid in sorted({k[0] for k in lift_cov}):
                n_in, n_all = lift_cov.get((cid, kind), (0, 0))
                e_in, e_all = per_case.get(cid, (0, 0))
                fh.write(",".join([
                    str(cid), kind, str(n_all),
                    format_float(n_in / n_all if n_all else 0.0),
                    str(e_all),
                    format_float(e_in / e_all if e_all else 0.0)]) + "\n")
            total_rows = sum(v[1] for k, v in lift_cov.items() if k[1] == kind)
            total_in = sum(v[0] for k, v in lift_cov.items() if k[1] == kind)
            n_held = sum(v[1] for v in per_case.values())
            fh.write(",".join([
                "all", kind, str(total_rows),
                format_float(total_in / total_rows if total_rows else 0.0),
                str(n_held), format_float(overall)]) + "\n")

    _evaluation_svgs(out, ds, reports)
    write_manifest(os.path.join(out, "evaluate_manifest.txt"), cfg, {
        "n_report_rows": len(reports),
        "aleatoric_ellipsoid_coverage": format_float(coverage["aleatoric"][0]),
        "epistemic_ellipsoid_coverage": format_float(coverage["epistemic"][0]),
        "n_heldout": ds.val_indices().size,
    })
    print(f"evaluate: {len(reports)} report rows; held-out aleatoric ellipsoid "
          f"coverage {coverage['aleatoric'][0]:.3f}")
    return {"reports": reports, "coverage": coverage}


def _evaluation_svgs(out, ds: Dataset, reports):
    by_case_kind = {}
    for r in reports:
        by_case_kind.setdefault((r.case_id, r.kind), []).append(r)
    for (cid, kind), rows in by_case_kind.items():
        rows = sorted(rows, key=lambda r: r.time_index)
        idx = ds.case_indices(cid)
        times = ds.times[idx]
        truth = ds.lift[idx]
        mean = np.array([r.lift_mean for r in rows])
        two_s = np.array([r.lift_two_sigma for r in rows])
        lift_band_svg(os.path.join(out, f"lift_case{cid}_{kind}.svg"), times,
                      truth, mean, two_s, kind,
                      f"case {cid} lift, {kind} band")
        truth_xy = ds.xi_true[idx][:, :2]
        mean_xy = np.array([r.latent_mean[:2] for r in rows])
        step = max(1, len(rows) // 12)
        ellipses = [rows[k].ellipses[(0, 1)] for k in range(0, len(rows), step)]
        ellipse_overlay_svg(os.path.join(out, f"ellipses_case{cid}_{kind}_p12.svg"),
                            truth_xy, mean_xy, ellipses, ("1", "2"),
                            f"case {cid} xi1-xi2, {kind} 95% ellipses")


def cmd_sensitivity(cfg: RunConfig):
    ds = _load_dataset(cfg)
    _, det_net = _load_estimators(cfg, ds)
    if cfg.sensitivity_case.strip() == "auto":
        base = [c for c in ds.cases if not c.disturbed]
        cid = max(base, key=lambda c: c.alpha_deg).case_id
    else:
        cid = int(cfg.sensitivity_case)
        if cid not in {c.case_id for c in ds.cases}:
            raise DataMismatchError(f"sensitivity case {cid} not present in dataset")
    settings = _settings(cfg)
    rows = sensitivity_series(ds, cid, det_net, settings,
                              n_modes=cfg.sensitivity_modes)
    out = cfg.path("out_dir")
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, f"sensitivity_case{cid}.csv")
    write_sensitivity_csv(csv_path, rows, n_sensors=ds.layout.n_sensors)
    lead = [r for r in rows if r[1] == 0]
    step = max(1, len(lead) // 6)
    panels = [(f"t index {r[0]} (share {r[2]:.2f})", r[3])
              for r in lead[::step][:6]]
    sensor_bars_svg(os.path.join(out, f"sensitivity_case{cid}.svg"), panels,
                    f"case {cid}: leading Gramian mode per snapshot")
    write_manifest(os.path.join(out, "sensitivity_manifest.txt"), cfg, {
        "case_id": cid,
        "n_rows": len(rows),
        "mean_leading_share": format_float(float(np.mean([r[2] for r in lead]))),
    })
    print(f"sensitivity: case {cid}, {len(rows)} rows -> {csv_path}")
    return {"case_id": cid, "rows": rows}


# --- entry point --------------------------------------------------------------------


COMMANDS = {
    "generate": cmd_generate,
    "train-ae": cmd_train_ae,
    "train-estimator": cmd_train_estimator,
    "evaluate": cmd_evaluate,
    "sensitivity": cmd_sensitivity,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gustuq",
        description="Probabilistic gust-encounter flow reconstruction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value file")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    args = parser.parse_args(argv)
    try:
        overrides = {} if args.seed is None else {"seed": args.seed}
        cfg = load_config(args.config, overrides)
        t0 = time.perf_counter()
        COMMANDS[args.command](cfg)
        print(f"{args.command}: done in {time.perf_counter() - t0:.1f}s")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataMismatchError as exc:
        print(f"data/model mismatch: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
