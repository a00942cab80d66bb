"""Planted-structure affinity matrices with known ground truth.

Instances get cyclic class labels (instance i belongs to class i mod K),
so any tail slice of the instance list is class-balanced and can serve as
the development set. Good functions draw within-class scores from a
distribution shifted above the cross-class one by ``separation`` noise
standard deviations; noise functions are i.i.d. regardless of class.

Two families: "gaussian" matches the base models' own likelihood (planted
recovery then isolates inference correctness), while "beta" produces
skewed scores with self-anchor entries pinned at 1, closer to real
affinity matrices, for robustness checks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import PipelineConfig
from .dataio import (AffinityFunctionDescriptor, AffinityMatrix, DatasetManifest,
                     DevSet)
from .errors import ConfigError

CROSS_CLASS_MEAN = 0.2
NOISE_STD = 0.05
BETA_CONCENTRATION = 25.0


@dataclass(frozen=True)
class PlantedSpec:
    """Shape and difficulty of one synthetic labeling problem."""

    n_instances: int
    n_classes: int
    alpha_good: int
    alpha_noise: int
    separation: float
    seed: int = 0
    family: str = "gaussian"

    def __post_init__(self):
        if self.alpha_good < 0 or self.alpha_noise < 0 or self.alpha_good + self.alpha_noise < 1:
            raise ConfigError("need at least one affinity function")
        if self.n_classes < 2 or self.n_instances < 2 * self.n_classes:
            raise ConfigError(
                f"need N >= 2K, got N={self.n_instances}, K={self.n_classes}")
        if self.separation < 0:
            raise ConfigError(f"separation must be >= 0, got {self.separation}")
        if self.family not in ("gaussian", "beta"):
            raise ConfigError(f"unknown family {self.family!r}")

    @property
    def alpha(self) -> int:
        return self.alpha_good + self.alpha_noise


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    """A generated matrix, its ground truth, and a balanced dev split."""

    matrix: AffinityMatrix
    labels: np.ndarray            # (N,) true class per row
    devset: DevSet
    spec: PlantedSpec

    @property
    def dev_rows(self) -> np.ndarray:
        return self.devset.row_indices(self.matrix.manifest)

    @property
    def eval_rows(self) -> np.ndarray:
        """Rows whose labels are reported on: everything outside the dev set."""
        n = self.matrix.manifest.n_total
        dev = set(self.dev_rows.tolist())
        return np.array([i for i in range(n) if i not in dev], dtype=np.intp)


def _instance_ids(n: int) -> tuple[str, ...]:
    width = max(4, len(str(n - 1)))
    return tuple(f"s{i:0{width}d}" for i in range(n))


def _descriptors(spec: PlantedSpec) -> tuple[AffinityFunctionDescriptor, ...]:
    names = [f"good{i:02d}" for i in range(spec.alpha_good)]
    names += [f"noise{i:02d}" for i in range(spec.alpha_noise)]
    return tuple(AffinityFunctionDescriptor(layer=name, z=1) for name in names)


def _sample_block(rng: np.random.Generator, same_class: np.ndarray,
                  separation: float, family: str, good: bool) -> np.ndarray:
    n = same_class.shape[0]
    if family == "gaussian":
        block = rng.normal(CROSS_CLASS_MEAN, NOISE_STD, size=(n, n))
        if good:
            block += separation * NOISE_STD * same_class
        return block
    # beta family: skewed scores in [0, 1]
    kappa = BETA_CONCENTRATION
    mu_cross = 0.3
    std_cross = float(np.sqrt(mu_cross * (1 - mu_cross) / (kappa + 1.0)))
    mu_within = min(0.95, mu_cross + separation * std_cross) if good else mu_cross
    mu = np.where(same_class if good else np.zeros_like(same_class, dtype=bool),
                  mu_within, mu_cross)
    block = rng.beta(mu * kappa, (1.0 - mu) * kappa)
    return block


def generate_planted(spec: PlantedSpec, dev_per_class: int = 5) -> PlantedInstance:
    """Generate a planted instance. Deterministic for a fixed spec."""
    if dev_per_class < 1:
        raise ConfigError(f"dev_per_class must be >= 1, got {dev_per_class}")
    n, k = spec.n_instances, spec.n_classes
    m = k * dev_per_class
    if m >= n:
        raise ConfigError(f"dev set of {m} rows leaves no unlabeled rows out of {n}")

    labels = np.arange(n) % k
    same_class = (labels[:, None] == labels[None, :]).astype(np.float64)
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 7301)))

    blocks = []
    for f in range(spec.alpha):
        good = f < spec.alpha_good
        block = _sample_block(rng, same_class, spec.separation, spec.family, good)
        if spec.family == "beta":
            np.fill_diagonal(block, 1.0)  # self-anchor entries, as in real matrices
        blocks.append(block)
    scores = np.clip(np.concatenate(blocks, axis=1), -1.0, 1.0).astype(np.float32)

    manifest = DatasetManifest(
        instance_ids=_instance_ids(n),
        n_unlabeled=n - m,
        m_dev=m,
        layer_names=tuple(d.layer for d in _descriptors(spec)),
        notes=f"planted {spec.family} separation={spec.separation}",
    )
    matrix = AffinityMatrix(scores=scores, function_descriptors=_descriptors(spec),
                            manifest=manifest)
    devset = _devset_from_tail(manifest, labels, dev_per_class)
    return PlantedInstance(matrix=matrix, labels=labels, devset=devset, spec=spec)


def _devset_from_tail(manifest: DatasetManifest, labels: np.ndarray,
                      dev_per_class: int) -> DevSet:
    k = int(labels.max()) + 1
    entries = [(manifest.instance_ids[i], int(labels[i]))
               for i in range(manifest.n_unlabeled, manifest.n_total)]
    dev = DevSet(entries=tuple(entries), n_classes=k)
    if dev.per_class_count != dev_per_class:
        raise ConfigError("tail rows are not balanced; labels must be cyclic")
    return dev


def resplit(instance: PlantedInstance, dev_per_class: int) -> PlantedInstance:
    """Same scores, different unlabeled/development split (cyclic labels keep
    every tail balanced)."""
    spec = instance.spec
    n, k = spec.n_instances, spec.n_classes
    m = k * dev_per_class
    if m >= n:
        raise ConfigError(f"dev set of {m} rows leaves no unlabeled rows out of {n}")
    old = instance.matrix.manifest
    manifest = DatasetManifest(
        instance_ids=old.instance_ids,
        n_unlabeled=n - m,
        m_dev=m,
        layer_names=old.layer_names,
        notes=old.notes,
    )
    matrix = AffinityMatrix(scores=instance.matrix.scores,
                            function_descriptors=instance.matrix.function_descriptors,
                            manifest=manifest)
    devset = _devset_from_tail(manifest, instance.labels, dev_per_class)
    return PlantedInstance(matrix=matrix, labels=instance.labels, devset=devset, spec=spec)


def sweep(axis: str, grid, spec: PlantedSpec, config: PipelineConfig,
          seeds=(0,), dev_per_class: int = 5) -> list[tuple[float, float, int]]:
    """Accuracy versus dev-set size or number of affinity functions.

    Returns (x, accuracy, seed) rows, accuracy measured on non-dev rows.
    For the dev-size axis the mixture fits do not depend on the dev set, so
    one fit per seed is shared across grid points; outputs are identical to
    rerunning the pipeline per point.
    """
    from .pipeline import fit_matrix, labeling_accuracy, map_fit_to_classes

    grid = [int(x) for x in grid]
    if not grid:
        raise ConfigError("sweep grid is empty")
    if axis not in ("dev_size", "num_functions"):
        raise ConfigError(f"unknown sweep axis {axis!r}")

    rows: list[tuple[float, float, int]] = []
    for seed in seeds:
        seeded = replace(spec, seed=int(seed))
        if axis == "dev_size":
            base = generate_planted(seeded, dev_per_class=max(grid))
            bundle = fit_matrix(base.matrix, config)
            for d in grid:
                inst = resplit(base, d)
                labels = map_fit_to_classes(bundle, inst.devset, inst.matrix.manifest)
                acc = labeling_accuracy(labels.hard, inst.labels, inst.eval_rows)
                rows.append((float(d), acc, int(seed)))
        else:
            ratio = spec.alpha_good / spec.alpha
            for alpha in grid:
                if alpha < 1:
                    raise ConfigError("num_functions grid values must be >= 1")
                good = int(round(alpha * ratio))
                point_spec = replace(seeded, alpha_good=good, alpha_noise=alpha - good)
                inst = generate_planted(point_spec, dev_per_class=dev_per_class)
                bundle = fit_matrix(inst.matrix, config)
                labels = map_fit_to_classes(bundle, inst.devset, inst.matrix.manifest)
                acc = labeling_accuracy(labels.hard, inst.labels, inst.eval_rows)
                rows.append((float(alpha), acc, int(seed)))
    return rows
