"""Experiment protocols: standard runs, label-ratio sweeps, ablations,
mislabel injection, unseen-class holdout, and active-resampling rounds."""

from __future__ import annotations

import math
import time
from dataclasses import replace
from functools import lru_cache

import numpy as np

from . import metrics
from .aar import aar_round
from .config import DataConfig, ExperimentConfig
from .data import (DatasetSplit, FeatureMatrix, LabelVector, RawTable, Schema,
                   downsample, load_csv, merge_rare_labels, split_dataset)
from .model import RBMLPConfig, RBMLPModel
from .rng import substream
from .synth import SynthConfig, generate_table
from .training import TrainConfig, TrainHistory, predict, rpm_loop


@lru_cache(maxsize=4)
def _synthetic_table(seed: int, total: int, sep: float, tail: float, noise: float,
                     scale_spread: float, noise_cols: int):
    return generate_table(seed, SynthConfig(n_total=total, class_sep=sep,
                                            tail_offset=tail, noise=noise,
                                            scale_spread=scale_spread,
                                            n_noise=noise_cols))


def build_table(data: DataConfig) -> RawTable:
    if data.path == "synthetic":
        return _synthetic_table(data.synth_seed, data.synth_total,
                                data.synth_class_sep, data.synth_tail_offset,
                                data.synth_noise, data.synth_scale_spread,
                                data.synth_noise_cols)
    if not data.schema:
        raise FileNotFoundError("data.schema is required for file-backed datasets")
    schema = Schema.load(data.schema)
    return load_csv(data.path, schema, delimiter=data.delimiter,
                    has_header=data.has_header)


def prepare_split(data: DataConfig, seed: int, table: RawTable | None = None) -> DatasetSplit:
    if table is None:
        table = build_table(data)
    table = downsample(table, data.downsample_cap, seed)
    return split_dataset(table, data.label_ratio, data.val_ratio,
                         data.test_ratio, seed, xi=data.xi,
                         standardize=data.standardize)


def train_on_split(cfg: ExperimentConfig, split: DatasetSplit,
                   seed: int) -> tuple[RBMLPModel, TrainHistory]:
    lab_fm, lab_lv = split.labeled_train
    model = RBMLPModel(
        RBMLPConfig(lab_fm.n_features, lab_lv.num_classes,
                    use_residual=cfg.model.use_residual,
                    use_batchnorm=cfg.model.use_batchnorm),
        seed=seed)
    train_cfg = replace(cfg.train, seed=seed)
    return rpm_loop(model, (lab_fm.data, lab_lv.labels),
                    split.unlabeled_train.data,
                    (split.validation[0].data, split.validation[1].labels),
                    train_cfg)


def test_report(model: RBMLPModel, split: DatasetSplit) -> dict:
    test_fm, test_lv = split.test
    cm = metrics.confusion(predict(model, test_fm.data), test_lv.labels,
                           test_lv.num_classes)
    return metrics.metrics_report(cm, test_lv.class_vocab)


def run_standard(cfg: ExperimentConfig, seed: int):
    t0 = time.perf_counter()
    split = prepare_split(cfg.data, seed)
    model, history = train_on_split(cfg, split, seed)
    report = test_report(model, split)
    report["seed"] = seed
    report["wall_time_s"] = round(time.perf_counter() - t0, 2)
    return report, history, model, split


def swap_labels(labels: np.ndarray, swap_fraction: float, seed: int) -> tuple[np.ndarray, int]:
    """Seeded pairwise label swap of 2*floor(fraction*N) distinct rows."""
    if swap_fraction > 0.5:
        raise ValueError("swap_fraction must be <= 0.5")
    out = labels.copy()
    k = math.floor(swap_fraction * len(labels))
    if k == 0:
        return out, 0
    rng = substream(seed, "swap")
    picked = rng.permutation(len(labels))[:2 * k]
    a, b = picked[:k], picked[k:]
    out[a], out[b] = labels[b], labels[a]
    return out, k


def run_mislabel(cfg: ExperimentConfig, seed: int):
    split = prepare_split(cfg.data, seed)
    lab_fm, lab_lv = split.labeled_train
    swapped, pairs = swap_labels(lab_lv.labels, cfg.swap_fraction, seed)
    split.labeled_train = (lab_fm, LabelVector(swapped, lab_lv.class_vocab))
    model, history = train_on_split(cfg, split, seed)
    report = test_report(model, split)
    report["seed"] = seed
    report["swapped_pairs"] = pairs
    return report, history, model, split


def select_unseen_classes(vocab: list[str], seed: int) -> list[str]:
    k = math.ceil(len(vocab) / 10)
    rng = substream(seed, "holdout")
    return sorted(rng.choice(vocab, size=k, replace=False).tolist())


def run_unseen(cfg: ExperimentConfig, seed: int):
    """Hold out ceil(C/10) classes from training; all their rows go to test."""
    table = build_table(cfg.data)
    schema = table.schema
    unseen = select_unseen_classes(schema.class_vocab, seed)
    merged = merge_rare_labels(table.labels(), schema)
    unseen_rows = [i for i, lab in enumerate(merged) if lab in unseen]
    seen_rows = [i for i, lab in enumerate(merged) if lab not in unseen]

    split = prepare_split(cfg.data, seed, table=table.subset(seen_rows))
    unseen_table = table.subset(unseen_rows)
    unseen_fm = split.encoder.transform(unseen_table)
    from .data import encode_labels
    unseen_lv = encode_labels(unseen_table.labels(), schema)
    test_fm, test_lv = split.test
    split.test = (
        FeatureMatrix(np.concatenate([test_fm.data, unseen_fm.data]),
                      test_fm.feature_names),
        LabelVector(np.concatenate([test_lv.labels, unseen_lv.labels]),
                    test_lv.class_vocab))
    split.row_ids["test"] = split.row_ids["test"] + unseen_table.row_ids

    model, history = train_on_split(cfg, split, seed)
    report = test_report(model, split)
    report["seed"] = seed
    report["unseen_classes"] = ",".join(unseen)
    cm = metrics.confusion(predict(model, split.test[0].data),
                           split.test[1].labels, split.test[1].num_classes)
    tp, _, fn, _ = metrics._per_class(cm)
    idx = [schema.class_vocab.index(u) for u in unseen]
    with np.errstate(invalid="ignore"):
        recalls = [tp[i] / (tp[i] + fn[i]) for i in idx if tp[i] + fn[i] > 0]
    report["unseen_recall"] = round(100 * float(np.mean(recalls)), 2) if recalls else None
    return report, history, model, split


def _holdout_from_labeled(split: DatasetSplit, unseen_idx: list[int]) -> tuple[DatasetSplit, np.ndarray]:
    """Move unseen-class rows out of labeled_train into the unlabeled pool.

    Returns the updated split and the pool indices of the unseen samples.
    """
    lab_fm, lab_lv = split.labeled_train
    is_unseen = np.isin(lab_lv.labels, unseen_idx)
    keep = ~is_unseen
    unl = split.unlabeled_train
    sealed = split.sealed_unlabeled_labels
    moved = lab_fm.data[is_unseen]
    moved_labels = lab_lv.labels[is_unseen]

    split.labeled_train = (FeatureMatrix(lab_fm.data[keep], lab_fm.feature_names),
                           LabelVector(lab_lv.labels[keep], lab_lv.class_vocab))
    split.unlabeled_train = FeatureMatrix(
        np.concatenate([unl.data, moved]), unl.feature_names)
    split.sealed_unlabeled_labels = LabelVector(
        np.concatenate([sealed.labels, moved_labels]), sealed.class_vocab)
    if split.row_ids:
        lab_ids = np.array(split.row_ids["labeled_train"])
        split.row_ids["unlabeled_train"] = (
            split.row_ids["unlabeled_train"] + lab_ids[is_unseen].tolist())
        split.row_ids["labeled_train"] = lab_ids[keep].tolist()
    pool = np.where(np.isin(split.sealed_unlabeled_labels.labels, unseen_idx))[0]
    return split, pool


def run_aar(cfg: ExperimentConfig, seed: int):
    """Unseen-class holdout, then periodic core-sample injection rounds."""
    split = prepare_split(cfg.data, seed)
    vocab = split.labeled_train[1].class_vocab
    unseen = select_unseen_classes(vocab, seed)
    unseen_idx = [vocab.index(u) for u in unseen]
    split, pool = _holdout_from_labeled(split, unseen_idx)

    model, history = train_on_split(cfg, split, seed)
    rounds = [{"epoch": 0, **test_report(model, split)}]

    train_cfg = replace(cfg.train, seed=seed)
    for r in range(1, cfg.aar_rounds + 1):
        sealed = split.sealed_unlabeled_labels
        pool = np.where(np.isin(sealed.labels, unseen_idx))[0]
        if len(pool) == 0:
            rounds.append({"epoch": r * cfg.aar.cadence_epochs, "note": "pool exhausted"})
            break
        oracle = lambda idx: sealed.labels[np.asarray(idx)]
        split, model, round_info = aar_round(model, split, pool, cfg.aar,
                                             oracle, train_cfg)
        rounds.append({"epoch": r * cfg.aar.cadence_epochs,
                       **round_info, **test_report(model, split)})
    report = {
        "seed": seed,
        "unseen_classes": ",".join(unseen),
        "rounds": rounds,
    }
    return report, history, model, split


def mean_metrics(reports: list[dict], keys=("accuracy", "macro_f1", "tpr", "fpr")) -> dict:
    return {k: round(float(np.mean([r[k] for r in reports])), 2) for k in keys}


def run_ratio_sweep(cfg: ExperimentConfig) -> dict:
    rows = []
    for ratio in cfg.ratios:
        sub = replace(cfg, data=replace(cfg.data, label_ratio=ratio))
        reports = [run_standard(sub, s)[0] for s in cfg.seeds]
        rows.append({"label_ratio": ratio, **mean_metrics(reports)})
    return {"rows": rows}


ABLATION_CELLS = (
    ("mlp", False, False),
    ("mlp+wtc", False, True),
    ("rbmlp", True, False),
    ("rbmlp+wtc", True, True),
)


def _cell_config(cfg: ExperimentConfig, rb: bool, wtc: bool) -> ExperimentConfig:
    model = replace(cfg.model, use_residual=rb, use_batchnorm=rb)
    train = cfg.train if wtc else replace(cfg.train, use_class_weights=False,
                                          alpha_sup=0.0, alpha_unsup=0.0)
    return replace(cfg, model=model, train=train)


def run_ablation(cfg: ExperimentConfig) -> dict:
    cells = {}
    for name, rb, wtc in ABLATION_CELLS:
        sub = _cell_config(cfg, rb, wtc)
        reports = [run_standard(sub, s)[0] for s in cfg.seeds]
        cells[name] = mean_metrics(reports)
    for name, cum_on in (("cum_off", False), ("cum_on", True)):
        sub = replace(cfg, train=replace(cfg.train, cum_enabled=cum_on))
        reports = [run_standard(sub, s)[0] for s in cfg.seeds]
        cells[name] = mean_metrics(reports)
    return {"cells": cells}
