"""Command line interface: train / eval / analyze / check."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import analyze as analyze_mod
from .checkpoint import load_checkpoint, restore_params, save_checkpoint
from .checks import run_all
from .config import RunConfig, config_lines, load_config, set_key
from .data import LabeledDataset, load_digits_dataset, load_mnist_dir, synthetic_dataset
from .errors import ConfigError, NanGradientError, NsmError
from .layers import MODE_CONCRETE, MODE_SAMPLE
from .network import Network
from .noise import NoiseModel
from .presets import NSM_FAMILY, build_network, parse_preset
from .rng import NS_EVAL, NS_INIT, RngStream
from .training import (Adam, TrainConfig, TrainState, data_dependent_init,
                       evaluate_mc, make_optimizer, train)

# config keys exposed as --flags (dashes for underscores)
_OVERRIDE_KEYS = [
    "preset", "model", "dataset", "data_dir", "noise", "noise_param", "site",
    "epochs", "batch_size", "optimizer", "lr", "adam_beta1", "adam_beta2",
    "adam_eps", "decay_start_epoch", "late_beta1", "max_iterations",
    "eval_every", "mc_samples", "seed", "head_bias", "init_batch",
    "record_percentiles", "dim", "train_size", "test_size",
]


def _add_override_flags(parser: argparse.ArgumentParser):
    for key in _OVERRIDE_KEYS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            set_key(cfg, key, str(value))
    return cfg.validate()


def _noise_model(cfg: RunConfig) -> NoiseModel:
    if cfg.noise == "gaussian":
        return NoiseModel.gaussian(cfg.noise_param)
    return NoiseModel.bernoulli(cfg.noise_param)


def resolve_datasets(cfg: RunConfig):
    """(train, test) LabeledDatasets for the configured source."""
    arch = parse_preset(cfg.preset)
    conv = len(arch.input_shape) == 3
    if cfg.dataset.startswith("synthetic:"):
        kind = cfg.dataset.split(":", 1)[1]
        total = synthetic_dataset(kind, cfg.train_size + cfg.test_size,
                                  cfg.seed, dim=cfg.dim, for_conv=conv)
        return (LabeledDataset(total.inputs[:cfg.train_size],
                               total.labels[:cfg.train_size], total.num_classes),
                LabeledDataset(total.inputs[cfg.train_size:],
                               total.labels[cfg.train_size:], total.num_classes))
    if cfg.dataset == "digits":
        return load_digits_dataset(cfg.seed, conv=conv)
    if cfg.dataset == "mnist":
        root = cfg.data_dir or os.environ.get("NSM_MNIST_DIR", "")
        if not root:
            raise ConfigError("dataset mnist needs --data-dir or NSM_MNIST_DIR")
        return (load_mnist_dir(root, "train", conv=conv),
                load_mnist_dir(root, "t10k", conv=conv))
    raise ConfigError(f"unknown dataset {cfg.dataset!r}")


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch_size, optimizer=cfg.optimizer,
        lr=cfg.lr, adam_beta1=cfg.adam_beta1, adam_beta2=cfg.adam_beta2,
        adam_eps=cfg.adam_eps,
        decay_start_epoch=None if cfg.decay_start_epoch < 0 else cfg.decay_start_epoch,
        late_beta1=cfg.late_beta1,
        max_iterations=None if cfg.max_iterations < 0 else cfg.max_iterations,
        eval_every=cfg.eval_every, mc_samples=cfg.mc_samples,
        record_percentiles=cfg.record_percentiles)


def _descriptor(cfg: RunConfig, state: TrainState) -> dict:
    return {"preset": cfg.preset, "model": cfg.model, "noise": cfg.noise,
            "noise_param": repr(cfg.noise_param), "site": cfg.site,
            "head_bias": "on" if cfg.head_bias else "off",
            "seed": str(cfg.seed), "epoch": str(state.epoch),
            "iteration": str(state.iteration), "optimizer": cfg.optimizer,
            "dataset": cfg.dataset, "dim": str(cfg.dim)}


def _moments(state: TrainState) -> dict:
    opt = state.optimizer
    if not isinstance(opt, Adam):
        return {}
    out = {"t": np.array([float(opt.t)])}
    for name, arr in opt.m.items():
        out[f"m/{name}"] = arr
    for name, arr in opt.v.items():
        out[f"v/{name}"] = arr
    return out


def _restore_moments(state: TrainState, moments: dict):
    opt = state.optimizer
    if not isinstance(opt, Adam) or not moments:
        return
    m = {k[2:]: v for k, v in moments.items() if k.startswith("m/")}
    v = {k[2:]: v for k, v in moments.items() if k.startswith("v/")}
    opt.load_state({"t": int(moments["t"][0]), "m": m, "v": v})


def build_from_config(cfg: RunConfig) -> Network:
    return build_network(parse_preset(cfg.preset), cfg.model, _noise_model(cfg),
                         cfg.site, cfg.head_bias, cfg.seed)


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    train_ds, test_ds = resolve_datasets(cfg)   # before any output is created
    os.makedirs(args.out, exist_ok=True)
    net = build_from_config(cfg)
    tc = _train_config(cfg)
    state = TrainState(network=net, optimizer=make_optimizer(tc), config=tc,
                       seed=cfg.seed,
                       mode=MODE_CONCRETE if cfg.model == "binconcrete" else MODE_SAMPLE)
    if args.resume:
        desc, params, moments = load_checkpoint(args.resume)
        restore_params(net, params)
        state.epoch = int(desc["epoch"])
        state.iteration = int(desc["iteration"])
        _restore_moments(state, moments)
    elif cfg.init_batch > 0:
        n = min(cfg.init_batch, len(train_ds))
        data_dependent_init(net, train_ds.inputs[:n],
                            RngStream(cfg.seed).child(NS_INIT, 101))
    grad_log = {} if args.log_gradients else None
    blew_up = None
    try:
        train(state, train_ds.inputs, train_ds.labels, test_ds.inputs,
              test_ds.labels, grad_log=grad_log)
    except NanGradientError as e:
        blew_up = e   # keep the partial artifacts below, then exit nonzero
    analyze_mod.write_metrics_csv(os.path.join(args.out, "metrics.csv"), state.records)
    save_checkpoint(os.path.join(args.out, "model.ckpt"), net.params(),
                    _descriptor(cfg, state), _moments(state))
    if grad_log:
        analyze_mod.save_gradient_log(os.path.join(args.out, "grads.npz"), grad_log)
    with open(os.path.join(args.out, "config.txt"), "w") as f:
        f.write(config_lines(cfg))
    if blew_up is not None:
        print(f"error: {blew_up} (partial checkpoint kept in {args.out})",
              file=sys.stderr)
        return 3
    last_err = next((r.test_error for r in reversed(state.records)
                     if r.test_error is not None), None)
    err_text = "n/a" if last_err is None else f"{last_err:.4f}"
    print(f"trained {cfg.model} {cfg.preset} for {state.epoch} epochs "
          f"({state.iteration} iterations); test error {err_text}; "
          f"artifacts in {args.out}")
    return 0


def _apply_scale(net: Network, alpha: float, model: str):
    if model not in NSM_FAMILY:
        raise ConfigError("--scale applies to the weight-normalized family only")
    for layer in net.layers:
        params = layer.params()
        if "beta" in params or "g" in params:
            params["w"][...] *= alpha


def cmd_eval(args) -> int:
    desc, params, _ = load_checkpoint(args.checkpoint)
    cfg = RunConfig(preset=desc["preset"], model=desc["model"], noise=desc["noise"],
                    noise_param=float(desc["noise_param"]), site=desc["site"],
                    head_bias=desc["head_bias"] == "on", seed=int(desc["seed"]),
                    dataset=desc.get("dataset", "synthetic:two-gaussians"),
                    dim=int(desc.get("dim", 16)))
    for key in ("dataset", "data_dir", "seed", "mc_samples", "dim",
                "train_size", "test_size"):
        value = getattr(args, key, None)
        if value is not None:
            set_key(cfg, key, str(value))
    cfg.validate()
    net = build_from_config(cfg)
    restore_params(net, params)
    if args.scale is not None:
        _apply_scale(net, float(args.scale), cfg.model)
    _, test_ds = resolve_datasets(cfg)
    mc = cfg.mc_samples
    err = evaluate_mc(net, test_ds.inputs, test_ds.labels, mc,
                      RngStream(cfg.seed).child(NS_EVAL, 999))
    print(f"test_error {repr(err)} ({len(test_ds)} examples, {mc} passes)")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.txt"), "w") as f:
            f.write(f"test_error = {repr(err)}\n")
    return 0


def cmd_analyze(args) -> int:
    kind = args.kind
    if kind == "drift":
        rows = []
        for path in args.inputs:
            metrics = analyze_mod.read_metrics_csv(path)
            window = args.window if args.window and args.window > 0 else None
            summary = analyze_mod.percentile_drift(metrics, window)
            summary = {"metrics": path, **summary}
            rows.append(summary)
            print(f"{path}: p50 std {summary['p50_std']:.6f} over "
                  f"{summary['records']} records (band {summary['band_mean']:.4f})")
    elif kind == "weights":
        rows = []
        for path in args.inputs:
            for row in analyze_mod.weight_statistics(path):
                rows.append({"checkpoint": path, **row})
                print(f"{path} {row['parameter']}: mean {row['mean']:.5f} "
                      f"std {row['std']:.5f} l2 {row['l2']:.5f}")
        if args.hist_out:
            hist_rows = []
            for path in args.inputs:
                hist_rows.extend({"checkpoint": path, **row}
                                 for row in analyze_mod.weight_histograms(path, args.bins))
            analyze_mod.write_rows_csv(args.hist_out, hist_rows)
    elif kind == "error":
        rows = []
        window = args.window if args.window and args.window > 0 else None
        for path in args.inputs:
            summary = analyze_mod.error_window(analyze_mod.read_metrics_csv(path), window)
            rows.append({"metrics": path, **summary})
            print(f"{path}: mean error {summary['mean_error']:.4f} over "
                  f"{summary['evaluations']} evaluations (best {summary['best_error']:.4f})")
    elif kind == "cosine":
        if len(args.inputs) != 2:
            raise ConfigError("analyze cosine needs exactly two gradient dumps")
        rows = analyze_mod.gradient_cosine_table(*args.inputs)
        for row in rows:
            print(f"{row['layer']}: mean cosine {row['mean_cosine']:.4f} "
                  f"over {row['iterations']} iterations")
    elif kind == "compare-metrics":
        if len(args.inputs) != 2:
            raise ConfigError("analyze compare-metrics needs exactly two files")
        same = analyze_mod.metrics_equal_excluding_time(*args.inputs)
        print("identical (excluding seconds)" if same else "DIFFERENT")
        return 0 if same else 1
    else:
        raise ConfigError(f"unknown analysis {kind!r}")
    if args.out and rows:
        analyze_mod.write_rows_csv(args.out, rows)
    return 0


def cmd_check(args) -> int:
    results = run_all()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsm",
        description="Stochastic binary networks that normalize themselves "
                    "through multiplicative synaptic noise")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write artifacts")
    p_train.add_argument("--config", help="key = value config file")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.add_argument("--log-gradients", action="store_true",
                         help="dump per-iteration weight gradients to grads.npz")
    _add_override_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--scale", type=float,
                        help="multiply every weight matrix by this factor first")
    p_eval.add_argument("--mc-samples", dest="mc_samples", default=None)
    p_eval.add_argument("--seed", default=None)
    p_eval.add_argument("--dataset", default=None)
    p_eval.add_argument("--data-dir", dest="data_dir", default=None)
    p_eval.add_argument("--dim", default=None)
    p_eval.add_argument("--train-size", dest="train_size", default=None)
    p_eval.add_argument("--test-size", dest="test_size", default=None)
    p_eval.add_argument("--out", help="directory for eval.txt")
    p_eval.set_defaults(func=cmd_eval)

    p_an = sub.add_parser("analyze", help="summarize run artifacts")
    p_an.add_argument("kind", choices=["drift", "weights", "error", "cosine",
                                       "compare-metrics"])
    p_an.add_argument("inputs", nargs="+")
    p_an.add_argument("--window", type=int, default=0,
                      help="drift: first N records; error: last N evaluations")
    p_an.add_argument("--bins", type=int, default=20,
                      help="weights: histogram bin count")
    p_an.add_argument("--hist-out", dest="hist_out",
                      help="weights: write per-parameter histograms as CSV")
    p_an.add_argument("--out", help="write the summary rows as CSV")
    p_an.set_defaults(func=cmd_analyze)

    p_check = sub.add_parser("check", help="run the numeric self-diagnostics")
    p_check.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NsmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
