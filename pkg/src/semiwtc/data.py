"""Tabular flow-data ingestion, preprocessing, and split generation.

Pipeline: load a delimited text table against a schema, merge rare labels
into a catch-all class, downsample oversized classes, log-transform skewed
numeric columns, one-hot encode categoricals (train-time vocabularies only),
and produce disjoint labeled/unlabeled/validation/test partitions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .rng import substream


class ParseError(ValueError):
    pass


class SchemaError(ValueError):
    pass


COLUMN_KINDS = ("numeric", "categorical", "label", "ignore")


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    log_transform: bool = False


@dataclass
class Schema:
    columns: list[Column]
    keep_labels: list[str]
    merged_label_name: str = "other"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        labels = [c for c in self.columns if c.kind == "label"]
        if len(labels) != 1:
            raise SchemaError(f"schema needs exactly one label column, got {len(labels)}")
        if not self.keep_labels:
            raise SchemaError("keep_labels must be non-empty")
        for c in self.columns:
            if c.kind not in COLUMN_KINDS:
                raise SchemaError(f"unknown column kind {c.kind!r}")

    @property
    def label_column(self) -> int:
        return next(i for i, c in enumerate(self.columns) if c.kind == "label")

    @property
    def class_vocab(self) -> list[str]:
        vocab = sorted(self.keep_labels)
        if self.merged_label_name not in vocab:
            vocab.append(self.merged_label_name)
        return vocab

    @classmethod
    def load(cls, path) -> "Schema":
        columns: list[Column] = []
        keep: list[str] = []
        merged = "other"
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if parts[0] == "column":
                    if len(parts) < 3:
                        raise SchemaError(f"{path}:{lineno}: column line needs name and kind")
                    columns.append(Column(parts[1], parts[2], "log" in parts[3:]))
                elif parts[0] == "keep":
                    keep.extend(x for x in " ".join(parts[1:]).split(",") if x)
                elif parts[0] == "merged":
                    merged = parts[1]
                else:
                    raise SchemaError(f"{path}:{lineno}: unknown directive {parts[0]!r}")
        return cls(columns, keep, merged)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for c in self.columns:
                flags = " log" if c.log_transform else ""
                fh.write(f"column {c.name} {c.kind}{flags}\n")
            fh.write(f"keep {','.join(self.keep_labels)}\n")
            fh.write(f"merged {self.merged_label_name}\n")


@dataclass
class RawTable:
    schema: Schema
    rows: list[list[str]]
    row_ids: list[int]  # source-row ids, stable across downsampling/splits

    def __len__(self) -> int:
        return len(self.rows)

    def labels(self) -> list[str]:
        j = self.schema.label_column
        return [r[j] for r in self.rows]

    def subset(self, indices) -> "RawTable":
        return RawTable(self.schema, [self.rows[i] for i in indices],
                        [self.row_ids[i] for i in indices])


@dataclass
class FeatureMatrix:
    data: np.ndarray  # N x D float32
    feature_names: list[str]

    def __post_init__(self):
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature matrix contains NaN/Inf")

    @property
    def n_features(self) -> int:
        return self.data.shape[1]


@dataclass
class LabelVector:
    labels: np.ndarray  # N int indices in [0, C)
    class_vocab: list[str]

    def __post_init__(self):
        if len(self.labels) and self.labels.max() >= len(self.class_vocab):
            raise ValueError("label index out of range")

    @property
    def num_classes(self) -> int:
        return len(self.class_vocab)


def load_csv(path, schema: Schema, delimiter: str = ",", has_header: bool = False) -> RawTable:
    """Load a delimited text file, checking row arity against the schema."""
    ncol = len(schema.columns)
    rows: list[list[str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if has_header and lineno == 1:
                continue
            fields = line.split(delimiter)
            if len(fields) != ncol:
                raise ParseError(
                    f"{path}:{lineno}: expected {ncol} fields, got {len(fields)}")
            rows.append(fields)
    return RawTable(schema, rows, list(range(len(rows))))


def log_transform(values: np.ndarray, xi: float) -> np.ndarray:
    """Replace each value v by ln(v + xi)."""
    if xi <= 0:
        raise ValueError("xi must be positive")
    shifted = np.asarray(values, dtype=np.float64) + xi
    if np.any(shifted <= 0):
        raise ValueError("log transform undefined: value + xi <= 0")
    return np.log(shifted)


def merge_rare_labels(labels: list[str], schema: Schema) -> list[str]:
    keep = set(schema.keep_labels)
    return [lab if lab in keep else schema.merged_label_name for lab in labels]


def encode_labels(labels: list[str], schema: Schema) -> LabelVector:
    vocab = schema.class_vocab
    index = {name: i for i, name in enumerate(vocab)}
    merged = merge_rare_labels(labels, schema)
    return LabelVector(np.array([index[lab] for lab in merged], dtype=np.int64), vocab)


def downsample(table: RawTable, per_class_cap: int, seed: int) -> RawTable:
    """Cap each class at `per_class_cap` rows via seeded sampling without replacement."""
    if per_class_cap <= 0:
        raise ValueError("per_class_cap must be positive")
    rng = substream(seed, "downsample")
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(table.labels()):
        by_class.setdefault(lab, []).append(i)
    kept: list[int] = []
    for lab in sorted(by_class):
        idx = by_class[lab]
        if len(idx) > per_class_cap:
            pick = rng.choice(len(idx), size=per_class_cap, replace=False)
            idx = [idx[j] for j in pick]
        kept.extend(idx)
    kept.sort()
    return table.subset(kept)


ENCODER_MAGIC = "SEMIWTC-ENC v1"


@dataclass
class EncoderState:
    """Fitted preprocessing state: column order, vocabularies, optional z-score stats."""

    numeric_names: list[str]
    log_flags: list[bool]
    categorical_names: list[str]
    vocabs: dict[str, list[str]]
    xi: float = 1e-6
    standardize: bool = False
    means: np.ndarray | None = None
    stds: np.ndarray | None = None

    @property
    def feature_names(self) -> list[str]:
        names = list(self.numeric_names)
        for col in self.categorical_names:
            names.extend(f"{col}={v}" for v in self.vocabs[col])
        return names

    def transform(self, table: RawTable) -> FeatureMatrix:
        schema = table.schema
        col_index = {c.name: i for i, c in enumerate(schema.columns)}
        n = len(table)
        blocks: list[np.ndarray] = []
        num = np.empty((n, len(self.numeric_names)), dtype=np.float64)
        for k, (name, do_log) in enumerate(zip(self.numeric_names, self.log_flags)):
            j = col_index[name]
            col = np.array([float(r[j]) for r in table.rows], dtype=np.float64)
            num[:, k] = log_transform(col, self.xi) if do_log else col
        if self.standardize and self.means is not None:
            num = (num - self.means) / self.stds
        blocks.append(num)
        for name in self.categorical_names:
            j = col_index[name]
            vocab = self.vocabs[name]
            index = {v: i for i, v in enumerate(vocab)}
            block = np.zeros((n, len(vocab)), dtype=np.float64)
            for i, r in enumerate(table.rows):
                k = index.get(r[j])
                if k is not None:  # unseen categories encode as all-zero
                    block[i, k] = 1.0
            blocks.append(block)
        data = np.concatenate(blocks, axis=1).astype(np.float32) if blocks else \
            np.zeros((n, 0), dtype=np.float32)
        return FeatureMatrix(data, self.feature_names)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(ENCODER_MAGIC + "\n")
            fh.write(f"xi\t{self.xi!r}\n")
            fh.write(f"standardize\t{int(self.standardize)}\n")
            for name, flag in zip(self.numeric_names, self.log_flags):
                fh.write(f"numeric\t{name}\t{int(flag)}")
                if self.standardize and self.means is not None:
                    k = self.numeric_names.index(name)
                    fh.write(f"\t{float(self.means[k]).hex()}\t{float(self.stds[k]).hex()}")
                fh.write("\n")
            for name in self.categorical_names:
                fh.write("categorical\t" + name + "\t" + "\t".join(self.vocabs[name]) + "\n")

    @classmethod
    def load(cls, path) -> "EncoderState":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != ENCODER_MAGIC:
            raise ValueError(f"{path}: not a {ENCODER_MAGIC} file")
        state = cls([], [], [], {})
        means: list[float] = []
        stds: list[float] = []
        for ln in lines[1:]:
            if not ln:
                continue
            parts = ln.split("\t")
            if parts[0] == "xi":
                state.xi = float(parts[1])
            elif parts[0] == "standardize":
                state.standardize = bool(int(parts[1]))
            elif parts[0] == "numeric":
                state.numeric_names.append(parts[1])
                state.log_flags.append(bool(int(parts[2])))
                if len(parts) >= 5:
                    means.append(float.fromhex(parts[3]))
                    stds.append(float.fromhex(parts[4]))
            elif parts[0] == "categorical":
                state.categorical_names.append(parts[1])
                state.vocabs[parts[1]] = parts[2:]
        if means:
            state.means = np.array(means)
            state.stds = np.array(stds)
        return state


def one_hot_encode(table: RawTable, schema: Schema, xi: float = 1e-6,
                   standardize: bool = False) -> tuple[FeatureMatrix, EncoderState]:
    """Fit preprocessing on `table` (the training partition) and transform it."""
    numeric = [c for c in schema.columns if c.kind == "numeric"]
    categorical = [c for c in schema.columns if c.kind == "categorical"]
    col_index = {c.name: i for i, c in enumerate(schema.columns)}
    vocabs = {}
    for c in categorical:
        j = col_index[c.name]
        vocabs[c.name] = sorted({r[j] for r in table.rows})
    state = EncoderState(
        numeric_names=[c.name for c in numeric],
        log_flags=[c.log_transform for c in numeric],
        categorical_names=[c.name for c in categorical],
        vocabs=vocabs, xi=xi, standardize=standardize)
    if standardize:
        raw = np.empty((len(table), len(numeric)), dtype=np.float64)
        for k, c in enumerate(numeric):
            j = col_index[c.name]
            col = np.array([float(r[j]) for r in table.rows], dtype=np.float64)
            raw[:, k] = log_transform(col, xi) if c.log_transform else col
        state.means = raw.mean(axis=0)
        stds = raw.std(axis=0)
        stds[stds == 0] = 1.0
        state.stds = stds
    return state.transform(table), state


@dataclass
class DatasetSplit:
    labeled_train: tuple[FeatureMatrix, LabelVector]
    unlabeled_train: FeatureMatrix
    validation: tuple[FeatureMatrix, LabelVector]
    test: tuple[FeatureMatrix, LabelVector]
    seed: int
    encoder: EncoderState = None
    row_ids: dict[str, list[int]] = field(default_factory=dict)
    # Sealed true labels of the "unlabeled" pool. Harness-only oracle for
    # pseudo-label accuracy and simulated annotation; training code must not
    # read it.
    sealed_unlabeled_labels: LabelVector = None

    def save_manifests(self, out_dir) -> None:
        import os
        os.makedirs(out_dir, exist_ok=True)
        for part, ids in self.row_ids.items():
            with open(os.path.join(out_dir, f"manifest_{part}.txt"), "w") as fh:
                fh.writelines(f"{i}\n" for i in ids)


def _stratified_take(rng, by_class: dict[int, list[int]], total: int) -> list[int]:
    """Take `total` indices stratified by class using largest-remainder rounding."""
    classes = sorted(by_class)
    pool = sum(len(by_class[c]) for c in classes)
    quotas = {c: total * len(by_class[c]) / pool for c in classes}
    take = {c: int(np.floor(quotas[c])) for c in classes}
    short = total - sum(take.values())
    for c in sorted(classes, key=lambda c: (quotas[c] - take[c], c), reverse=True)[:short]:
        take[c] += 1
    chosen: list[int] = []
    for c in classes:
        idx = by_class[c]
        k = min(take[c], len(idx))
        pick = rng.choice(len(idx), size=k, replace=False)
        chosen.extend(idx[j] for j in pick)
    # rounding edge: per-class pools exhausted; top up globally
    if len(chosen) < total:
        have = set(chosen)
        rest = [i for c in classes for i in by_class[c] if i not in have]
        extra = rng.choice(len(rest), size=total - len(chosen), replace=False)
        chosen.extend(rest[j] for j in extra)
    return sorted(chosen)


def split_dataset(table: RawTable, label_ratio: float, val_ratio: float,
                  test_ratio: float, seed: int, xi: float = 1e-6,
                  standardize: bool = False) -> DatasetSplit:
    """Stratified split into labeled / unlabeled / validation / test partitions.

    `val_ratio` and `test_ratio` are fractions of the whole table; the
    remainder forms the training pool, of which round(label_ratio * size)
    rows keep their labels.
    """
    if not (0 < label_ratio <= 1):
        raise ValueError("label_ratio must be in (0, 1]")
    if val_ratio + test_ratio >= 1:
        raise ValueError("val_ratio + test_ratio must be < 1")
    schema = table.schema
    merged = merge_rare_labels(table.labels(), schema)
    vocab_index = {name: i for i, name in enumerate(schema.class_vocab)}
    y = np.array([vocab_index[lab] for lab in merged])

    n = len(table)
    by_class: dict[int, list[int]] = {}
    for i, c in enumerate(y):
        by_class.setdefault(int(c), []).append(i)
    tiny = [c for c in by_class if len(by_class[c]) < 4]
    if tiny:
        warnings.warn(f"classes {tiny} too small for stratification; sampling globally")
        spill = [i for c in tiny for i in by_class[c]]
        for c in tiny:
            del by_class[c]
        if by_class:
            key = min(by_class)
            by_class[key] = sorted(by_class[key] + spill)
        else:
            by_class[0] = sorted(spill)

    rng = substream(seed, "split")
    test_idx = _stratified_take(rng, by_class, round(test_ratio * n))
    taken = set(test_idx)
    remaining = {c: [i for i in idx if i not in taken] for c, idx in by_class.items()}
    val_idx = _stratified_take(rng, remaining, round(val_ratio * n))
    taken |= set(val_idx)
    train_pool = {c: [i for i in idx if i not in taken] for c, idx in remaining.items()}
    pool_size = sum(len(v) for v in train_pool.values())
    labeled_idx = _stratified_take(rng, train_pool, round(label_ratio * pool_size))
    taken |= set(labeled_idx)
    unlabeled_idx = sorted(i for idx in train_pool.values() for i in idx if i not in taken)

    train_table = table.subset(sorted(labeled_idx + unlabeled_idx))
    _, encoder = one_hot_encode(train_table, schema, xi=xi, standardize=standardize)

    def part(indices):
        sub = table.subset(indices)
        return encoder.transform(sub), encode_labels(sub.labels(), schema)

    lab_fm, lab_lv = part(labeled_idx)
    unl_fm, unl_lv = part(unlabeled_idx)
    val_fm, val_lv = part(val_idx)
    test_fm, test_lv = part(test_idx)

    ids = table.row_ids
    return DatasetSplit(
        labeled_train=(lab_fm, lab_lv),
        unlabeled_train=unl_fm,
        validation=(val_fm, val_lv),
        test=(test_fm, test_lv),
        seed=seed,
        encoder=encoder,
        row_ids={
            "labeled_train": [ids[i] for i in labeled_idx],
            "unlabeled_train": [ids[i] for i in unlabeled_idx],
            "validation": [ids[i] for i in val_idx],
            "test": [ids[i] for i in test_idx],
        },
        sealed_unlabeled_labels=unl_lv,
    )
