"""Active Adaption Resampling.

Four stages: (1) fit a linear dilation projector that spreads class-mean
embeddings apart, (2) run flat-kernel mean shift on the projected pool to
find density centers, (3) take the samples nearest the dominant center, and
(4) move them, with oracle labels, from the unlabeled pool into the labeled
training set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSplit, LabelVector
from .losses import dilation_loss, dilation_loss_grad
from .model import RBMLPModel
from .nn import Adam, DenseLayer
from .rng import substream


@dataclass
class MeanShiftConfig:
    bandwidth: float | None = None  # None: median pairwise distance of a subsample
    max_iters: int = 300
    tol: float = 1e-4
    merge_radius: float | None = None  # None: bandwidth / 2

    def __post_init__(self):
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class AarConfig:
    sample_fraction: float = 0.01
    cadence_epochs: int = 5
    margin: float = 1.0
    dilation_epochs: int = 20
    dilation_batch: int = 512
    mean_shift: MeanShiftConfig = field(default_factory=MeanShiftConfig)

    def __post_init__(self):
        if not (0 < self.sample_fraction <= 1):
            raise ValueError("sample_fraction must be in (0, 1]")


def median_bandwidth(points: np.ndarray, seed: int = 0, subsample: int = 512) -> float:
    """Median pairwise distance of a seeded subsample."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) > subsample:
        rng = substream(seed, "bandwidth")
        pts = pts[rng.choice(len(pts), size=subsample, replace=False)]
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    dists = np.sqrt(d2[np.triu_indices(len(pts), k=1)])
    med = float(np.median(dists)) if len(dists) else 1.0
    return med if med > 0 else 1.0


def fit_dilation(embeddings: np.ndarray, assignments: np.ndarray, margin: float = 1.0,
                 epochs: int = 20, batch_size: int = 512, seed: int = 0,
                 projection_dim: int | None = None) -> DenseLayer:
    """Train a bias-free linear projector minimizing the dilation loss, where
    each class feature vector is the mean projected embedding of that class
    within a minibatch."""
    emb = np.asarray(embeddings, dtype=np.float64)
    assignments = np.asarray(assignments)
    p = projection_dim or emb.shape[1]
    rng = substream(seed, "dilation-init")
    projector = DenseLayer(emb.shape[1], p, rng, bias=False)
    optimizer = Adam(projector.params())
    shuffle = substream(seed, "dilation-shuffle")
    stepped = False
    for _ in range(epochs):
        order = shuffle.permutation(len(emb))
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            classes = np.unique(assignments[idx])
            if len(classes) < 2:
                continue
            means = np.stack([emb[idx[assignments[idx] == c]].mean(axis=0)
                              for c in classes])
            feats = means @ projector.W.T.astype(np.float64)
            # cosine is undefined for zero-norm class vectors; leave them out
            ok = np.linalg.norm(feats, axis=1) > 0
            if ok.sum() < 2:
                continue
            grad_feats = dilation_loss_grad(feats[ok], margin)
            grad_w = grad_feats.T @ means[ok]
            optimizer.step([grad_w.astype(projector.W.dtype)])
            stepped = True
    if not stepped:
        raise ValueError("dilation loss undefined: fewer than two classes per batch")
    return projector


def mean_shift(points: np.ndarray, config: MeanShiftConfig,
               seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Flat-kernel mean shift. Returns (centers, assignment of each point)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("points must be a non-empty 2-D array")
    h = config.bandwidth if config.bandwidth is not None else median_bandwidth(pts, seed)
    merge_radius = config.merge_radius if config.merge_radius is not None else h / 2
    cur = pts.copy()
    pts_sq = (pts * pts).sum(axis=1)
    block = 1024  # cap the pairwise-distance workspace at block x n
    for _ in range(config.max_iters):
        new = np.empty_like(cur)
        for lo in range(0, len(cur), block):
            blk = cur[lo:lo + block]
            d2 = ((blk * blk).sum(axis=1)[:, None] + pts_sq[None, :]
                  - 2.0 * (blk @ pts.T))
            within = d2 < h * h
            # every point is within h of itself, so counts >= 1
            counts = np.maximum(within.sum(axis=1), 1)
            new[lo:lo + block] = (within @ pts) / counts[:, None]
        disp = np.linalg.norm(new - cur, axis=1).max()
        cur = new
        if disp < config.tol:
            break
    centers: list[np.ndarray] = []
    assignment = np.empty(len(pts), dtype=np.int64)
    for i, pos in enumerate(cur):  # input order keeps merging deterministic
        for k, c in enumerate(centers):
            if np.linalg.norm(pos - c) <= merge_radius:
                assignment[i] = k
                break
        else:
            centers.append(pos)
            assignment[i] = len(centers) - 1
    return np.stack(centers), assignment


def extract_core_samples(points: np.ndarray, center: np.ndarray, count: int) -> np.ndarray:
    """Indices of the `count` points nearest the center; ties break to lower index."""
    pts = np.asarray(points, dtype=np.float64)
    if count > len(pts):
        raise ValueError(f"requested {count} samples from {len(pts)} points")
    dists = np.linalg.norm(pts - np.asarray(center, dtype=np.float64), axis=1)
    return np.argsort(dists, kind="stable")[:count]


def resample_and_update(split: DatasetSplit, pool_indices: np.ndarray,
                        oracle_labels: np.ndarray) -> DatasetSplit:
    """Move the given unlabeled rows, with their oracle labels, into labeled_train."""
    pool_indices = np.asarray(pool_indices)
    if len(np.unique(pool_indices)) != len(pool_indices):
        raise ValueError("duplicate pool index")
    if len(pool_indices) == 0:
        return split
    lab_fm, lab_lv = split.labeled_train
    unl = split.unlabeled_train
    keep = np.setdiff1d(np.arange(len(unl.data)), pool_indices)

    new_lab_data = np.concatenate([lab_fm.data, unl.data[pool_indices]], axis=0)
    new_lab_labels = np.concatenate([lab_lv.labels, np.asarray(oracle_labels)])
    new_unl_data = unl.data[keep]

    from .data import FeatureMatrix  # local import avoids cycle at module load
    new_split = DatasetSplit(
        labeled_train=(FeatureMatrix(new_lab_data, lab_fm.feature_names),
                       LabelVector(new_lab_labels, lab_lv.class_vocab)),
        unlabeled_train=FeatureMatrix(new_unl_data, unl.feature_names),
        validation=split.validation,
        test=split.test,
        seed=split.seed,
        encoder=split.encoder,
        row_ids=dict(split.row_ids),
        sealed_unlabeled_labels=None,
    )
    if split.row_ids:
        unl_ids = split.row_ids["unlabeled_train"]
        new_split.row_ids["labeled_train"] = (
            split.row_ids["labeled_train"] + [unl_ids[i] for i in pool_indices])
        new_split.row_ids["unlabeled_train"] = [unl_ids[i] for i in keep]
    if split.sealed_unlabeled_labels is not None:
        sealed = split.sealed_unlabeled_labels
        new_split.sealed_unlabeled_labels = LabelVector(
            sealed.labels[keep], sealed.class_vocab)
    return new_split


def select_resample_indices(model: RBMLPModel, split: DatasetSplit,
                            pool_indices: np.ndarray, config: AarConfig,
                            seed: int = 0) -> np.ndarray:
    """Stages 1-3: dilation fit, mean shift, core-sample extraction.

    `pool_indices` are rows of the unlabeled pool forming the unseen-sample
    pool; returns the subset selected for labeling (as unlabeled-pool indices).
    """
    pool_indices = np.asarray(pool_indices)
    if len(pool_indices) == 0:
        raise ValueError("unseen pool is empty")
    unl = split.unlabeled_train.data

    # dilation is fit on the model's view of all unlabeled embeddings,
    # grouped by its own predictions
    from .training import predict  # avoid cycle at module load
    _, _, emb_all = _batched_embeddings(model, unl)
    preds = predict(model, unl)
    pool_emb = emb_all[pool_indices]
    if len(np.unique(preds)) >= 2:
        projector = fit_dilation(emb_all, preds, config.margin,
                                 epochs=config.dilation_epochs,
                                 batch_size=config.dilation_batch, seed=seed)
        projected = pool_emb @ projector.W.T.astype(np.float64)
    else:
        # predictions collapsed to one class: no pairs to spread apart, so
        # cluster the raw embeddings instead
        projected = pool_emb
    centers, assignment = mean_shift(projected, config.mean_shift, seed=seed)
    dominant = np.bincount(assignment).argmax()
    count = math.ceil(config.sample_fraction * len(pool_indices))
    core = extract_core_samples(projected, centers[dominant], count)
    return pool_indices[core]


def _batched_embeddings(model: RBMLPModel, x: np.ndarray, batch_size: int = 4096):
    sups, unsups, embs = [], [], []
    for lo in range(0, len(x), batch_size):
        p_sup, p_unsup, emb = model.forward(x[lo:lo + batch_size], train=False)
        sups.append(p_sup)
        unsups.append(p_unsup)
        embs.append(emb)
    return (np.concatenate(sups), np.concatenate(unsups),
            np.concatenate(embs).astype(np.float64))


def aar_round(model: RBMLPModel, split: DatasetSplit, pool_indices: np.ndarray,
              config: AarConfig, oracle, train_config) -> tuple[DatasetSplit, RBMLPModel, dict]:
    """One full round: select core samples, inject with oracle labels, retrain.

    `oracle(pool_indices) -> class indices` simulates human annotation.
    Returns the updated split, the retrained model, and a round report.
    """
    from .training import rpm_loop  # avoid cycle at module load
    pool_indices = np.asarray(pool_indices)
    if len(pool_indices) == 0:
        return split, model, {"injected": 0, "note": "pool exhausted"}
    chosen = select_resample_indices(model, split, pool_indices, config,
                                     seed=train_config.seed)
    labels = np.asarray(oracle(chosen))
    new_split = resample_and_update(split, chosen, labels)

    import dataclasses
    cont_config = dataclasses.replace(train_config,
                                      max_outer_iters=config.cadence_epochs)
    x_lab, y_lab = new_split.labeled_train[0].data, new_split.labeled_train[1].labels
    x_val, y_val = new_split.validation[0].data, new_split.validation[1].labels
    model, _ = rpm_loop(model, (x_lab, y_lab), new_split.unlabeled_train.data,
                        (x_val, y_val), cont_config)
    report = {"pool_size": int(len(pool_indices)), "injected": int(len(chosen))}
    return new_split, model, report
