"""Command line entry point: ``tddcsi <subcommand> --config FILE --seed N --out DIR``."""
import argparse
import logging
import os
import sys

from .bench import pipeline, sweeps
from .bench.config import ExperimentConfig, load_config
from .bench.data import dataset_path, gen_dataset, gen_multilink, load_dataset, save_dataset
from .cascade import TddnetModel, load_bundle, save_bundle
from .chanmodel import ChannelClass
from .errors import TddcsiError
from .seeding import SPLITS

log = logging.getLogger("tddcsi")


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    return cfg


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _classes(args, cfg):
    return [ChannelClass.parse(c) for c in args.cls] if getattr(args, "cls", None) else list(cfg.classes)


def _load_or_gen(cfg, data_dir, split, cls, count, grid):
    if data_dir:
        path = dataset_path(data_dir, split, cls, cfg.link_id)
        if os.path.exists(path):
            ds = load_dataset(path)
            if ds.n_pilots != grid.n_pilots or ds.n_subcarriers != grid.n_subcarriers:
                raise TddcsiError(f"{path} was generated for a different pilot grid")
            log.info("loaded %s (%d samples)", path, len(ds))
            return ds
    return gen_dataset(cfg, {cls: count}, split, grid=grid, tag=f"spacing{grid.spacing}")[cls]


def _open_bundle(cfg, directory):
    if directory and os.path.exists(os.path.join(directory, "manifest.txt")):
        model = load_bundle(directory)
        if model.grid != cfg.grid():
            raise TddcsiError(f"model in {directory} uses pilot spacing {model.grid.spacing}, "
                              f"config asks for {cfg.pilot_spacing}")
        if model.manifest.get("config_hash") not in (None, cfg.config_hash):
            log.warning("model in %s was trained under config %s, evaluating under %s", directory,
                        model.manifest.get("config_hash"), cfg.config_hash)
        return model
    return pipeline.empty_model(cfg)


def cmd_gen_data(args, cfg):
    counts = {"train": cfg.n_train, "val": cfg.n_val, "classifier": cfg.n_classifier, "test": cfg.n_test}
    splits = args.split or ["train", "val", "classifier"]
    snr = float("inf") if args.no_noise else None
    classes = _classes(args, cfg)
    for split in splits:
        per_class = {c: args.count or counts[split] for c in classes}
        if cfg.m_aps * cfg.k_ues > 1:
            links = gen_multilink(cfg, cfg.m_aps, cfg.k_ues, per_class, split, snr_db=snr)
            for ds_map in links.values():
                for ds in ds_map.values():
                    _save(args.out, ds, cfg)
        else:
            gen_dataset(cfg, per_class, split, snr_db=snr, out_dir=args.out)
    print(args.out)


def _save(out, ds, cfg):
    os.makedirs(out, exist_ok=True)
    save_dataset(ds, dataset_path(out, ds.split, ds.channel_class, ds.link_id), cfg.chains(ds.link_id))


def cmd_train_predictor(args, cfg):
    cls = ChannelClass.parse(args.cls[0])
    grid = cfg.grid()
    train_set = _load_or_gen(cfg, args.data, "train", cls, cfg.n_train, grid)
    val_set = _load_or_gen(cfg, args.data, "val", cls, cfg.n_val, grid)
    model = _open_bundle(cfg, args.out)
    model.predictors[cls], _ = pipeline.train_predictor(cfg, cls, train_set, val_set)
    model.manifest.update(pipeline.manifest_entries(cfg))
    save_bundle(model, args.out)
    print(args.out)


def cmd_train_classifier(args, cfg):
    grid = cfg.grid()
    sets = {c: _load_or_gen(cfg, args.data, "classifier", c, cfg.n_classifier, grid) for c in ChannelClass}
    model = _open_bundle(cfg, args.out)
    model.classifier, _ = pipeline.train_classifier(cfg, sets)
    model.manifest.update(pipeline.manifest_entries(cfg))
    save_bundle(model, args.out)
    print(args.out)


def cmd_train_all(args, cfg):
    grid = cfg.grid()
    counts = {"train": cfg.n_train, "val": cfg.n_val, "classifier": cfg.n_classifier}
    sets = {split: {c: _load_or_gen(cfg, args.data, split, c, n, grid) for c in ChannelClass}
            for split, n in counts.items()}
    model, _ = pipeline.train_all(cfg, sets=sets)
    save_bundle(model, args.out)
    print(args.out)


def _require(model, directory, classifier=True, predictors=()):
    if classifier and model.classifier is None:
        raise TddcsiError(f"no trained classifier in {directory}")
    missing = [c.letter for c in predictors if c not in model.predictors]
    if missing:
        raise TddcsiError(f"no trained predictor for class(es) {', '.join(missing)} in {directory}")


def _write(result, args, name):
    path = result.write(os.path.join(args.out, name))
    print(path)


def cmd_eval_accuracy(args, cfg):
    model = _open_bundle(cfg, args.model)
    _require(model, args.model)
    _write(sweeps.run_accuracy_sweep(model, cfg, no_noise=args.no_noise), args, "accuracy.csv")


def cmd_eval_mse(args, cfg):
    model = _open_bundle(cfg, args.model)
    _require(model, args.model, not args.oracle_classifier, cfg.classes)
    result = sweeps.run_mse_sweep(model, cfg, no_noise=args.no_noise, oracle_classifier=args.oracle_classifier,
                                  baselines=not args.no_baselines)
    _write(result, args, "mse.csv")


def cmd_eval_mismatch(args, cfg):
    model = _open_bundle(cfg, args.model)
    _require(model, args.model, False, set(cfg.classes) | {ChannelClass.TDL_A})
    _write(sweeps.run_mismatch(model, cfg, no_noise=args.no_noise), args, "mismatch.csv")


def cmd_eval_pilot_sweep(args, cfg):
    cls = ChannelClass.parse(args.cls[0]) if args.cls else ChannelClass.TDL_C
    root = args.model or os.path.join(args.out, "models")
    predictors = {}
    for spacing in args.spacings:
        directory = os.path.join(root, f"spacing{spacing}")
        if os.path.exists(os.path.join(directory, "manifest.txt")):
            bundle = load_bundle(directory)
            if cls in bundle.predictors:
                predictors[spacing] = bundle.predictors[cls]

    def trainer(c, spacing):
        model = pipeline.train_spacing_predictor(c, spacing, cls)
        bundle = TddnetModel(None, {cls: model}, c.grid(spacing), pipeline.manifest_entries(c))
        save_bundle(bundle, os.path.join(root, f"spacing{spacing}"))
        return model

    result = sweeps.run_pilot_sweep(cfg, predictors, args.spacings, cls, args.snr, trainer)
    _write(result, args, "pilot_sweep.csv")


def _spacings(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad spacing list {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value experiment config (defaults if omitted)")
    common.add_argument("--seed", type=_seed, help="master seed, overrides the config")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log training progress")

    parser = argparse.ArgumentParser(prog="tddcsi", description="Downlink CSI prediction experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate dataset files")
    p.add_argument("--split", action="append", choices=sorted(SPLITS))
    p.add_argument("--class", dest="cls", action="append", help="class to generate (repeatable)")
    p.add_argument("--count", type=int, help="samples per class, overrides the config sizes")
    p.add_argument("--no-noise", action="store_true", help="noiseless uplink pilots")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-predictor", parents=[common], help="train one class's predictor")
    p.add_argument("--class", dest="cls", action="append", required=True)
    p.add_argument("--data", help="directory with dataset files (generated if absent)")
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("train-classifier", parents=[common], help="train the channel classifier")
    p.add_argument("--data")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-all", parents=[common], help="train classifier and all predictors")
    p.add_argument("--data")
    p.set_defaults(func=cmd_train_all)

    for name, func, help_text in (("eval-accuracy", cmd_eval_accuracy, "classifier accuracy vs SNR"),
                                  ("eval-mse", cmd_eval_mse, "downlink NMSE vs SNR"),
                                  ("eval-mismatch", cmd_eval_mismatch, "TDL-A predictor on every class")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--model", required=True, help="model bundle directory")
        p.add_argument("--no-noise", action="store_true")
        if name == "eval-mse":
            p.add_argument("--oracle-classifier", action="store_true", help="route with the true class")
            p.add_argument("--no-baselines", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("eval-pilot-sweep", parents=[common], help="NMSE vs pilot spacing")
    p.add_argument("--model", help="root holding spacing<k>/ bundles (default OUT/models); missing ones are trained")
    p.add_argument("--spacings", type=_spacings, default=list(sweeps.DEFAULT_SPACINGS))
    p.add_argument("--class", dest="cls", action="append")
    p.add_argument("--snr", type=float, default=sweeps.PILOT_SWEEP_SNR_DB)
    p.set_defaults(func=cmd_eval_pilot_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        args.func(args, cfg)
    except (TddcsiError, OSError) as exc:
        print(f"tddcsi: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
