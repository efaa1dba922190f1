"""Synthetic flow-record generator.

Produces a long-tailed labeled table with the same shape as common NetFlow
benchmarks: 41 features (38 numeric, of which the first block is heavy-tailed
and flagged for log transform, plus 3 categorical columns) and a label column
with ten kept attack names and a handful of rare raw labels that merge into
"other". Used by the test harness and as a stand-in when no real dataset is
on disk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Column, RawTable, Schema
from .rng import substream

KEEP_LABELS = ["normal", "neptune", "satan", "ipsweep", "portsweep", "smurf",
               "nmap", "back", "teardrop", "warezclient"]

# long-tailed class counts; at the default 32,772 total no class exceeds the
# default 5,000-row downsampling cap, so partition sizes stay exact
CLASS_WEIGHTS = {
    "back": 350, "ipsweep": 5000, "neptune": 5000, "nmap": 2772,
    "normal": 5000, "other": 250, "portsweep": 4800, "satan": 5000,
    "smurf": 4000, "teardrop": 300, "warezclient": 300,
}

# tail classes sit near a head class in feature space
TAIL_ANCHOR = {
    "back": "neptune", "other": "normal", "teardrop": "smurf",
    "warezclient": "normal", "nmap": "ipsweep",
}

RARE_RAW_LABELS = ["buffer_overflow", "guess_passwd", "rootkit", "ftp_write"]

PROTO_VALUES = [f"proto{i}" for i in range(3)]
SERVICE_VALUES = [f"svc{i:02d}" for i in range(70)]
FLAG_VALUES = [f"fl{i:02d}" for i in range(11)]


@dataclass
class SynthConfig:
    n_total: int = 32772
    n_numeric: int = 38
    n_log: int = 8  # leading numeric columns drawn heavy-tailed, schema-flagged for log
    n_noise: int = 6  # trailing numeric columns carry no class signal
    class_sep: float = 1.55
    tail_offset: float = 2.0
    noise: float = 1.4
    scale_spread: float = 1.30  # per-column magnitudes span 10^±scale_spread
    # flow records are coarse: head classes emit near-duplicate "profiles"
    # rather than a diffuse cloud. 0 disables the mixture.
    n_profiles: int = 1
    profile_noise: float = 0.05  # within-profile spread, in units of `noise`
    tail_profiles: int = -1  # profiles for classes below tail_threshold rows; 0: same, -1: diffuse
    tail_threshold: int = 1500
    discrete_noise: bool = True  # noise columns take 3 levels, like flag/count fields
    diffuse_noise: float = 1.0  # spread multiplier for mid-size diffuse classes
    mid_threshold: int = 1500  # diffuse classes at/above this size use diffuse_noise
    tail_lobes: int = 1  # diffuse tail classes split into this many distant modes
    class_weights: dict[str, int] = field(default_factory=lambda: dict(CLASS_WEIGHTS))


def synthetic_schema(config: SynthConfig = SynthConfig()) -> Schema:
    cols = [Column(f"f{i:02d}", "numeric", log_transform=i < config.n_log)
            for i in range(config.n_numeric)]
    cols += [Column("proto", "categorical"), Column("service", "categorical"),
             Column("flag", "categorical"), Column("label", "label")]
    return Schema(cols, list(KEEP_LABELS), "other")


def _class_means(config: SynthConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    means: dict[str, np.ndarray] = {}
    for name in sorted(config.class_weights):
        if name not in TAIL_ANCHOR:
            means[name] = config.class_sep * rng.standard_normal(config.n_numeric)
    for name, anchor in sorted(TAIL_ANCHOR.items()):
        means[name] = means[anchor] + config.tail_offset * rng.standard_normal(
            config.n_numeric)
    if config.n_noise:
        # trailing columns are identical across classes: pure nuisance features
        for mu in means.values():
            mu[config.n_numeric - config.n_noise:] = 0.0
    return means


def _categorical_dists(config: SynthConfig, rng: np.random.Generator):
    dists = {}
    for name in sorted(config.class_weights):
        proto = rng.dirichlet(np.ones(len(PROTO_VALUES)))
        svc = np.full(len(SERVICE_VALUES), 0.15 / len(SERVICE_VALUES))
        preferred = rng.choice(len(SERVICE_VALUES), size=5, replace=False)
        svc[preferred] += 0.85 * rng.dirichlet(np.ones(5))
        flag = np.full(len(FLAG_VALUES), 0.2 / len(FLAG_VALUES))
        preferred = rng.choice(len(FLAG_VALUES), size=3, replace=False)
        flag[preferred] += 0.8 * rng.dirichlet(np.ones(3))
        dists[name] = (proto, svc / svc.sum(), flag / flag.sum())
    return dists


def generate_table(seed: int, config: SynthConfig = SynthConfig()) -> RawTable:
    schema = synthetic_schema(config)
    rng = substream(seed, "synth")
    means = _class_means(config, rng)
    cats = _categorical_dists(config, rng)
    # heterogeneous raw units (bytes vs counts vs rates); same factor per column
    # for every class, so separability is untouched but conditioning is not
    col_scale = 10.0 ** rng.uniform(-config.scale_spread, config.scale_spread,
                                    size=config.n_numeric)

    total_w = sum(config.class_weights.values())
    counts = {name: round(config.n_total * w / total_w)
              for name, w in sorted(config.class_weights.items())}
    drift = config.n_total - sum(counts.values())
    counts[max(counts, key=counts.get)] += drift

    noise_cols = slice(config.n_numeric - config.n_noise, None)
    rows: list[list[str]] = []
    for name in sorted(counts):
        n = counts[name]
        mu = np.broadcast_to(means[name], (n, config.n_numeric))
        n_prof = config.n_profiles
        if config.tail_profiles and n < config.tail_threshold:
            n_prof = config.tail_profiles
        if n_prof > 0:
            # mixture of tight sub-clusters: rows of one profile are
            # near-duplicates, as in coarse real-world flow features
            centers = rng.standard_normal((n_prof, config.n_numeric))
            centers *= config.noise
            pick = rng.integers(n_prof, size=n)
            z = centers[pick] + (rng.standard_normal((n, config.n_numeric))
                                 * config.noise * config.profile_noise)
            if config.n_noise:
                # keep the trailing columns diffuse and class-free
                z[:, noise_cols] = (rng.standard_normal((n, config.n_noise))
                                    * config.noise)
        else:
            spread = config.noise * (config.diffuse_noise
                                     if n >= config.mid_threshold else 1.0)
            z = rng.standard_normal((n, config.n_numeric)) * spread
            if config.tail_lobes > 1 and name in TAIL_ANCHOR:
                # multi-modal tail: each mode is its own hop off the anchor,
                # so covering the class takes one labeled sample per mode
                lobes = (means[TAIL_ANCHOR[name]]
                         + config.tail_offset * rng.standard_normal(
                             (config.tail_lobes, config.n_numeric)))
                lobes[0] = means[name]
                if config.n_noise:
                    lobes[:, noise_cols] = 0.0
                mu = lobes[rng.integers(config.tail_lobes, size=n)]
        if config.n_noise and config.discrete_noise:
            z[:, noise_cols] = (rng.integers(-1, 2, size=(n, config.n_noise))
                                * config.noise)
        x = mu + z
        # heavy-tailed block: exponentiate so the raw scale spans decades
        x[:, :config.n_log] = np.exp(0.8 * mu[:, :config.n_log] + 0.7 * z[:, :config.n_log])
        x *= col_scale
        proto_p, svc_p, flag_p = cats[name]
        proto = rng.choice(PROTO_VALUES, size=n, p=proto_p)
        svc = rng.choice(SERVICE_VALUES, size=n, p=svc_p)
        flag = rng.choice(FLAG_VALUES, size=n, p=flag_p)
        if name == "other":
            labels = rng.choice(RARE_RAW_LABELS, size=n)
        else:
            labels = np.full(n, name)
        for i in range(n):
            rows.append([f"{v:.6g}" for v in x[i]]
                        + [proto[i], svc[i], flag[i], labels[i]])
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]
    return RawTable(schema, rows, list(range(len(rows))))


def write_synthetic(csv_path, schema_path, seed: int,
                    config: SynthConfig = SynthConfig()) -> None:
    table = generate_table(seed, config)
    table.schema.save(schema_path)
    with open(csv_path, "w", encoding="utf-8") as fh:
        for row in table.rows:
            fh.write(",".join(row) + "\n")
