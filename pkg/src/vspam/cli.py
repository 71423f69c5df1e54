"""Command-line entry point: ``vspam {gen,fit,predict,decode,tune,bold} ...``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 missing or
unreadable input (or any other I/O failure), 4 numerical failure (a fit raised, or flagged fits are
present under ``--strict``).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import bold, decoding, encoding, gabor, harness
from .bundle import read_bundle, write_bundle
from .config import RunConfig
from .errors import InvalidArgument, InvalidConfig, SingularDesign

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class NumericalFailure(RuntimeError):
    pass


def _path(cfg, *parts):
    return os.path.join(cfg.out, *parts)


def _require(path, what):
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing {what}: expected {path}")
    return path


def _write_csv(path, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def _features(cfg, names):
    data = read_bundle(_require(_path(cfg, "features"), "feature bundle"), names)
    return {n: gabor.FeatureMatrix(a, tags.get("transform", "raw"), tags.get("bank_hash", ""))
            for n, (a, tags) in data.items()}


def _responses(cfg, names):
    data = read_bundle(_require(_path(cfg, "responses"), "response bundle"), names)
    return {n: a for n, (a, _) in data.items()}


def _model_paths(cfg, kind):
    d = _require(_path(cfg, "models", kind), f"{kind} model directory")
    files = sorted(f for f in os.listdir(d) if f.endswith(".json"))
    if not files:
        raise FileNotFoundError(f"no model files in {d}")
    return [os.path.join(d, f) for f in files]


def _load_models(cfg, kind):
    return [encoding.VoxelModel.load(p) for p in _model_paths(cfg, kind)]


# ------------------------------------------------------------------ commands

def cmd_gen(cfg, args):
    bank = harness.build_bank(cfg)
    sets = harness.build_stimuli(cfg)
    feats = harness.featurize(bank, sets)
    write_bundle(_path(cfg, "stimuli"),
                 {n: s.images.reshape(len(s), -1) for n, s in sets.items()},
                 {n: {"image_size": cfg.image_size, "seed": s.seed} for n, s in sets.items()})
    write_bundle(_path(cfg, "features"), {n: F.values for n, F in feats.items()},
                 {n: {"transform": "raw", "bank_hash": bank.hash, "seed": cfg.stream(n)}
                  for n in feats})
    specs = harness.build_population(cfg, bank, feats["train"])
    Y_train, Y_valid = harness.population_responses(specs, feats["train"], feats["valid"])
    write_bundle(_path(cfg, "responses"), {"train": Y_train, "valid": Y_valid})
    with open(_path(cfg, "population.json"), "w") as fh:
        json.dump([s.to_dict() for s in specs], fh, indent=1, sort_keys=True)
    with open(_path(cfg, "config.json"), "w") as fh:
        fh.write(cfg.to_json())
    print(f"wrote {len(sets)} stimulus sets, p={bank.p} features, {len(specs)} voxels to {cfg.out}")
    return EXIT_OK


def cmd_fit(cfg, args):
    kinds = cfg.kinds if args.kind == "all" else [args.kind]
    feats = _features(cfg, ["train", "valid"])
    Y = _responses(cfg, ["train", "valid"])
    models, failed, flagged = {}, [], []
    for kind in kinds:
        fitted, errors = harness.fit_population(feats["train"], Y["train"], kind, cfg.fit_options(),
                                                jobs=args.jobs)
        mdir = harness.ensure_dir(_path(cfg, "models", kind))
        pdir = harness.ensure_dir(_path(cfg, "paths", kind))
        for v, (m, err) in enumerate(zip(fitted, errors)):
            if err is not None:
                failed.append((kind, v, err))
                continue
            m.save(os.path.join(mdir, f"voxel_{v:04d}.json"))
            _write_csv(os.path.join(pdir, f"voxel_{v:04d}.csv"),
                       [("lambda", "rss", "df", "bic")] + m.path.rows())
            if not m.flags.get("converged", True):
                flagged.append((kind, v))
        models[kind] = fitted
    ok_kinds = {k: ms for k, ms in models.items() if all(m is not None for m in ms)}
    if ok_kinds:
        report = encoding.build_report(ok_kinds, feats["valid"], Y["valid"])
        report.to_csv(_path(cfg, f"encoding_report_{args.kind}.csv"))
        for k, med in report.medians().items():
            print(f"{k}: median predictive R2 {med:.4f}")
    for kind, v, err in failed:
        print(f"fit failed: {kind} voxel {v}: {err}", file=sys.stderr)
    for kind, v in flagged:
        print(f"flagged: {kind} voxel {v} did not converge", file=sys.stderr)
    if failed or (args.strict and flagged):
        raise NumericalFailure(f"{len(failed)} failed and {len(flagged)} flagged fits")
    return EXIT_OK


def cmd_predict(cfg, args):
    kinds = cfg.kinds if args.kind == "all" else [args.kind]
    F = _features(cfg, [args.on])[args.on]
    arrays = {}
    for kind in kinds:
        arrays[kind] = np.column_stack([encoding.predict(m, F) for m in _load_models(cfg, kind)])
    write_bundle(_path(cfg, "predictions", args.on), arrays)
    print(f"wrote predictions for {', '.join(kinds)} on {args.on}")
    return EXIT_OK


def cmd_decode(cfg, args):
    kinds = cfg.kinds if args.kind == "all" else [args.kind]
    feats = _features(cfg, ["valid", "database"])
    Y_valid = _responses(cfg, ["valid"])["valid"]
    for kind in kinds:
        models = _load_models(cfg, kind)
        result, mc_rows = harness.identification(models, Y_valid, feats["valid"], feats["database"], cfg,
                                                 mc=not args.no_mc)
        mc = {b: (est, se) for b, _, est, se in mc_rows}
        rows = [("b", "average_error", "mc_error", "mc_se")]
        for b, e in zip(result.b_grid, result.error):
            est, se = mc.get(int(b), ("", ""))
            rows.append((int(b), float(e), est, se))
        _write_csv(_path(cfg, "decode", f"{kind}_curve.csv"), rows)
        _write_csv(_path(cfg, "decode", f"{kind}_pairs.csv"), result.pair_rows())
        sweep = decoding.threshold_sweep(models, Y_valid, feats["valid"], feats["database"],
                                         feats["database"].n, thresholds=cfg.sweep_thresholds)
        _write_csv(_path(cfg, "decode", f"{kind}_sweep.csv"),
                   [("rule", "value", "n_voxels", "error_at_N")] + sweep)
        print(f"{kind}: error at b={result.N} is {result.error[-1]:.4f}")
    return EXIT_OK


def cmd_tune(cfg, args):
    model = encoding.VoxelModel.load(_require(args.model, "model file"))
    bank = harness.build_bank(cfg)
    if model.bank_hash and model.bank_hash != bank.hash:
        raise InvalidArgument(f"model was fit on bank {model.bank_hash}, config builds {bank.hash}")
    train_images = None
    if os.path.exists(_path(cfg, "stimuli", "manifest.json")):
        imgs = read_bundle(_path(cfg, "stimuli"), ["train"])["train"][0]
        train_images = imgs.reshape(-1, cfg.image_size, cfg.image_size)
    stem = os.path.splitext(os.path.basename(args.model))[0]
    outdir = harness.ensure_dir(_path(cfg, "tune"))
    for name, result in harness.tuning_probes(model, bank, cfg, train_images).items():
        result.to_csv(os.path.join(outdir, f"{stem}_{name}.csv"))
    print(f"wrote tuning curves for {args.model} to {outdir}")
    return EXIT_OK


def cmd_bold(cfg, args):
    bdir = _path(cfg, "bold")
    if args.action == "sim":
        series = harness.bold_experiment(cfg)
        harness.ensure_dir(bdir)
        with open(os.path.join(bdir, "schedule.json"), "w") as fh:
            fh.write(series.schedule.to_json())
        t = series.truth
        write_bundle(os.path.join(bdir, "series"),
                     {"series": series.samples, "amplitudes_true": t["amplitudes"],
                      "hrf_true": t["hrf"].coefficients, "nuisance_true": t["nuisance"]},
                     {"series": {"rho": t["rho"], "noise_sd": t["noise_sd"]}})
        print(f"simulated {series.schedule.n_samples} samples for {series.schedule.n_images} images")
        return EXIT_OK
    with open(_require(os.path.join(bdir, "schedule.json"), "schedule")) as fh:
        schedule = bold.EventSchedule.from_json(fh.read())
    data = read_bundle(_require(os.path.join(bdir, "series"), "series bundle"))
    z = data["series"][0][:, 0]
    fit = bold.estimate(z, schedule, bold.EstimateConfig(prewhiten=args.prewhiten))
    write_bundle(os.path.join(bdir, "fit"),
                 {"amplitudes": fit.amplitudes, "hrf": fit.hrf.coefficients,
                  "nuisance": fit.nuisance, "fitted": fit.fitted})
    if "amplitudes_true" in data:
        truth = data["amplitudes_true"][0][:, 0]
        h_true = bold.HrfSpec(fit.hrf.window, fit.hrf.n_fourier, data["hrf_true"][0][:, 0])
        ca = np.corrcoef(fit.amplitudes, truth)[0, 1]
        ch = np.corrcoef(fit.hrf.sample(schedule.rate), h_true.sample(schedule.rate))[0, 1]
        print(f"amplitude correlation {ca:.6f}, response correlation {ch:.6f}")
    print(f"iterations {fit.iterations}, converged {fit.converged}")
    if args.strict and not fit.converged:
        raise NumericalFailure("amplitude fit did not converge")
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="base seed for every random stream")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for voxel fits")
    common.add_argument("--strict", action="store_true", help="exit 4 when any fit is flagged")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config value (JSON literal)")

    parser = argparse.ArgumentParser(prog="vspam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate stimuli, features and a synthetic population")
    kinds = ["all", *encoding.KINDS]
    p = sub.add_parser("fit", parents=[common], help="fit voxel models")
    p.add_argument("--kind", choices=kinds, default="all")
    p = sub.add_parser("predict", parents=[common], help="predict responses from saved models")
    p.add_argument("--kind", choices=kinds, default="all")
    p.add_argument("--on", default="valid", choices=["train", "valid", "database"],
                   help="which feature set to predict")
    p = sub.add_parser("decode", parents=[common], help="identification error curves")
    p.add_argument("--kind", choices=kinds, default="all")
    p.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo check")
    p = sub.add_parser("tune", parents=[common], help="tuning curves of one model")
    p.add_argument("model", help="voxel model JSON file")
    p = sub.add_parser("bold", parents=[common], help="simulate or fit a BOLD series")
    p.add_argument("action", choices=["sim", "fit"])
    p.add_argument("--prewhiten", action="store_true", help="AR(1) refinement step")
    return parser


def load_config(args):
    cfg = RunConfig.load(_require(args.config, "config file")) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise InvalidConfig(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    return cfg.with_overrides(overrides) if overrides else cfg


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "predict": cmd_predict, "decode": cmd_decode,
            "tune": cmd_tune, "bold": cmd_bold}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (InvalidConfig, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:  # missing or unreadable inputs, bad bundles, unwritable outputs
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, SingularDesign, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
