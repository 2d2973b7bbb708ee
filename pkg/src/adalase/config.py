"""Experiment configuration: strict JSON parsing, presets, and object assembly.

Configs are a nested key tree. Unknown keys are rejected with their dotted
path; values are type-checked and range-checked before anything runs.
"""

import copy
import json
import os

from .augment import ALL_KINDS, AugSpec
from .data import (gen_synthetic, load_cifar_bin, load_idx, load_raw,
                   split_dataset, subsample)
from .engine.builders import build_network
from .errors import ConfigError
from .ratios import SCHEDULE_SHAPES, AdaLaseConfig, RatioSchedule
from .trainer import Splits, TrainConfig

PRESET_DIR = os.path.join(os.path.dirname(__file__), "presets")

_AUG_DEFAULTS = {
    "kind": "none",
    "alpha": 1.0,
    "mask_fraction": 0.5,
    "shift_fraction_max": 0.2,
    "degree_range": 10.0,
    "pad": 4,
}

DEFAULTS = {
    "preset": "",
    "out_dir": "runs/out",
    "dataset": {
        "kind": "synthetic",
        "synthetic_kind": "striped_patches",
        "n": 1200,
        "side": 8,
        "noise": 0.1,
        "seed": 0,
        "train_count": 1000,
        "val_count": 0,
        "test_count": 200,
        "subsample_count": 0,
        "subsample_seed": 0,
        "images_path": "",
        "labels_path": "",
        "test_images_path": "",
        "test_labels_path": "",
        "path": "",
        "test_path": "",
    },
    "model": {
        "kind": "mlp",
        "hidden": 36,
        "width": 8,
        "init_checkpoint": "",
    },
    "train": {
        "epochs": 20,
        "batch_size": 64,
        "base_lr": 0.1,
        "momentum": 0.9,
        "seed": 0,
        "val_mode": "pseudo",
        "probe": False,
        "ratio_updates": True,
        "update_cadence": "epoch",
        "eval_batch_size": 256,
        "schedule": {"shape": "adaptive", "fixed_index": 0},
        "train_aug": dict(_AUG_DEFAULTS, kind="mixup"),
        "pseudo_val_aug": dict(_AUG_DEFAULTS, kind="rotation"),
        "adalase": {
            "eta": 1.0,
            "avg_window": 1,
            "d_scale": 0.1,
            "dot_normalization": "raw",
        },
    },
}


def _merge_strict(defaults, user, path=""):
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        dotted = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key {dotted!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"expected an object at {dotted!r}")
            out[key] = _merge_strict(defaults[key], value, dotted)
        else:
            if isinstance(defaults[key], bool) != isinstance(value, bool):
                raise ConfigError(f"expected {type(defaults[key]).__name__} at {dotted!r}")
            out[key] = value
    return out


def _check(cond, message, field):
    if not cond:
        raise ConfigError(message, field=field)


def validate_config(raw):
    """Merge over defaults and range-check; returns the effective config dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = _merge_strict(DEFAULTS, raw)
    ds = cfg["dataset"]
    _check(ds["kind"] in ("synthetic", "idx", "cifar", "raw"),
           f"unknown dataset kind {ds['kind']!r}", "dataset.kind")
    if ds["kind"] == "synthetic":
        _check(ds["synthetic_kind"] in ("two_gaussians", "striped_patches"),
               f"unknown synthetic kind {ds['synthetic_kind']!r}", "dataset.synthetic_kind")
        _check(ds["n"] >= 2, "n must be >= 2", "dataset.n")
        _check(ds["train_count"] + ds["val_count"] + ds["test_count"] <= ds["n"],
               "train+val+test counts exceed n", "dataset")
    else:
        path_fields = {
            "idx": ["images_path", "labels_path", "test_images_path", "test_labels_path"],
            "cifar": ["path", "test_path"],
            "raw": ["path", "test_path"],
        }[ds["kind"]]
        for f in path_fields:
            _check(bool(ds[f]), f"{f} is required for kind {ds['kind']!r}", f"dataset.{f}")
            _check(os.path.exists(ds[f]), f"path does not exist: {ds[f]}", f"dataset.{f}")
    tr = cfg["train"]
    _check(tr["epochs"] >= 1, "epochs must be >= 1", "train.epochs")
    _check(tr["batch_size"] >= 1, "batch_size must be >= 1", "train.batch_size")
    _check(tr["base_lr"] > 0, "base_lr must be > 0", "train.base_lr")
    _check(0 <= tr["momentum"] < 1, "momentum must be in [0,1)", "train.momentum")
    _check(tr["val_mode"] in ("pseudo", "true"), "val_mode must be 'pseudo' or 'true'",
           "train.val_mode")
    _check(tr["update_cadence"] in ("epoch", "window"),
           "update_cadence must be 'epoch' or 'window'", "train.update_cadence")
    _check(tr["schedule"]["shape"] in SCHEDULE_SHAPES,
           f"unknown schedule shape {tr['schedule']['shape']!r}", "train.schedule.shape")
    ada = tr["adalase"]
    _check(ada["eta"] > 0, "adalase.eta must be > 0", "train.adalase.eta")
    _check(ada["avg_window"] >= 1, "avg_window must be >= 1", "train.adalase.avg_window")
    _check(0 < ada["d_scale"] < 1, "d_scale must be in (0,1)", "train.adalase.d_scale")
    _check(ada["dot_normalization"] in ("raw", "cosine"),
           "dot_normalization must be 'raw' or 'cosine'", "train.adalase.dot_normalization")
    for aug_key in ("train_aug", "pseudo_val_aug"):
        kind = tr[aug_key]["kind"]
        _check(kind in ALL_KINDS, f"unknown augmentation kind {kind!r}",
               f"train.{aug_key}.kind")
    mdl = cfg["model"]
    _check(mdl["kind"] in ("mlp", "tiny_cnn"), f"unknown model kind {mdl['kind']!r}",
           "model.kind")
    if mdl["init_checkpoint"]:
        _check(os.path.exists(mdl["init_checkpoint"]),
               f"path does not exist: {mdl['init_checkpoint']}", "model.init_checkpoint")
    return cfg


def list_presets():
    return sorted(p[:-5] for p in os.listdir(PRESET_DIR) if p.endswith(".json"))


def load_config(path_or_preset):
    """Load from a JSON file path, or from a shipped preset by name."""
    preset_path = os.path.join(PRESET_DIR, f"{path_or_preset}.json")
    path = path_or_preset if os.path.exists(path_or_preset) else preset_path
    if not os.path.exists(path):
        raise ConfigError(f"config not found: {path_or_preset!r} "
                          f"(presets: {', '.join(list_presets())})")
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: line {exc.lineno} col {exc.colno}: "
                              f"{exc.msg}") from exc
    return validate_config(raw)


def _aug_from_cfg(d):
    return AugSpec(kind=d["kind"], alpha=float(d["alpha"]),
                   mask_fraction=float(d["mask_fraction"]),
                   shift_fraction_max=float(d["shift_fraction_max"]),
                   degree_range=float(d["degree_range"]), pad=int(d["pad"]))


def make_train_config(cfg):
    tr = cfg["train"]
    return TrainConfig(
        epochs=int(tr["epochs"]),
        batch_size=int(tr["batch_size"]),
        base_lr=float(tr["base_lr"]),
        momentum=float(tr["momentum"]),
        schedule=RatioSchedule(shape=tr["schedule"]["shape"],
                               fixed_index=int(tr["schedule"]["fixed_index"])),
        train_aug=_aug_from_cfg(tr["train_aug"]),
        pseudo_val_aug=_aug_from_cfg(tr["pseudo_val_aug"]),
        adalase=AdaLaseConfig(eta=float(tr["adalase"]["eta"]),
                              avg_window=int(tr["adalase"]["avg_window"]),
                              d_scale=float(tr["adalase"]["d_scale"]),
                              dot_normalization=tr["adalase"]["dot_normalization"]),
        seed=int(tr["seed"]),
        val_mode=tr["val_mode"],
        probe=bool(tr["probe"]),
        ratio_updates=bool(tr["ratio_updates"]),
        update_cadence=tr["update_cadence"],
        eval_batch_size=int(tr["eval_batch_size"]),
    )


def make_splits(cfg):
    ds = cfg["dataset"]
    if ds["kind"] == "synthetic":
        full = gen_synthetic(ds["synthetic_kind"], int(ds["n"]), int(ds["seed"]),
                             side=int(ds["side"]), noise=float(ds["noise"]))
        train, val, test = split_dataset(full, int(ds["train_count"]),
                                         int(ds["val_count"]), int(ds["test_count"]),
                                         int(ds["seed"]))
    elif ds["kind"] == "idx":
        train = load_idx(ds["images_path"], ds["labels_path"])
        test = load_idx(ds["test_images_path"], ds["test_labels_path"])
        val = None
        if ds["val_count"]:
            train, val, _ = split_dataset(train, len(train) - int(ds["val_count"]),
                                          int(ds["val_count"]), 0, int(ds["seed"]))
    elif ds["kind"] == "cifar":
        train = load_cifar_bin(ds["path"])
        test = load_cifar_bin(ds["test_path"])
        val = None
    else:
        train = load_raw(ds["path"])
        test = load_raw(ds["test_path"])
        val = None
    if ds["subsample_count"]:
        train = subsample(train, int(ds["subsample_count"]), int(ds["subsample_seed"]))
    return Splits(train=train, test=test, val=val)


def make_network(cfg, splits, seed=None):
    from .engine.checkpoint import load_weights

    tr_seed = int(cfg["train"]["seed"]) if seed is None else seed
    net = build_network(cfg["model"], splits.train.input_shape,
                        splits.train.num_classes, tr_seed)
    if cfg["model"]["init_checkpoint"]:
        load_weights(net, cfg["model"]["init_checkpoint"])
    return net
