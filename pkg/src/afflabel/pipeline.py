"""End-to-end labeling runs: maps -> prototypes -> affinity -> mixtures -> labels.

The label output is line-oriented text: ``#``-prefixed header lines carry
run metadata (N, K, alpha, Z, seed, the cluster-to-class mapping, and an
optional accuracy section computed against supplied ground truth on
non-development rows only), followed by one
``instance_id<TAB>p_0..p_{K-1}<TAB>hard`` row per instance in manifest
order. Output files are written atomically; a failed run leaves no output.

Base-model fits are independent per affinity function and can run in a
process pool; every fit derives its RNG from (seed, function index,
restart index), so results do not depend on scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .affinity import build_affinity_matrix
from .config import PipelineConfig
from .dataio import (AffinityMatrix, DatasetManifest, DevSet, FinalLabels,
                     load_affinity, load_filtermaps, read_devset, read_manifest,
                     read_truth, save_affinity)
from .ensemble import EnsembleFitResult, fit_ensemble, one_hot_concat
from .errors import ParseError, StageError
from .gmm import FitResult, fit_base_model
from .mapping import ClusterClassMapping, apply_mapping, mapping_weights, solve_mapping
from .prototypes import select_top_z

ENSEMBLE_SEED_TAG = 986301


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


@dataclass(frozen=True, eq=False)
class FitBundle:
    """Everything the hierarchical model produced before class mapping."""

    base_fits: tuple[FitResult, ...]
    concat: np.ndarray
    ensemble: EnsembleFitResult

    @property
    def gamma(self) -> np.ndarray:
        return self.ensemble.label_probs

    @property
    def label_predictions(self) -> list[np.ndarray]:
        return [fit.label_probs for fit in self.base_fits]


@dataclass(frozen=True, eq=False)
class LabelingResult:
    labels: FinalLabels
    bundle: FitBundle

    @property
    def mapping(self) -> ClusterClassMapping:
        return self.labels.mapping


def _fit_base_worker(payload):
    f, data, n_classes, controls, var_floor, seed = payload
    return f, fit_base_model(data, n_classes, controls, var_floor, seed=(seed, f))


def fit_base_models(matrix: AffinityMatrix, config: PipelineConfig) -> tuple[FitResult, ...]:
    """Fit one diagonal-Gaussian mixture per affinity function block."""
    payloads = [
        (f, matrix.slice_of(f).astype(np.float64), config.n_classes,
         config.em, config.var_floor, config.seed)
        for f in range(matrix.n_functions)
    ]
    results: list[FitResult | None] = [None] * matrix.n_functions
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for f, fit in pool.map(_fit_base_worker, payloads):
                results[f] = fit
    else:
        for payload in payloads:
            f, fit = _fit_base_worker(payload)
            results[f] = fit
    return tuple(results)


def fit_matrix(matrix: AffinityMatrix, config: PipelineConfig) -> FitBundle:
    """Base fits plus the Bernoulli ensemble, no development set involved."""
    with _stage("base-models"):
        base_fits = fit_base_models(matrix, config)
    with _stage("ensemble"):
        concat = one_hot_concat([fit.label_probs for fit in base_fits])
        ens = fit_ensemble(concat, config.n_classes, config.em,
                           clip=config.bernoulli_floor,
                           seed=(config.seed, ENSEMBLE_SEED_TAG))
    return FitBundle(base_fits=base_fits, concat=concat, ensemble=ens)


def map_fit_to_classes(bundle: FitBundle, devset: DevSet,
                       manifest: DatasetManifest) -> FinalLabels:
    """Resolve cluster identity with the dev set and rearrange columns."""
    with _stage("mapping"):
        weights = mapping_weights(bundle.gamma, devset.rows_by_class(manifest))
        mapping = solve_mapping(weights)
        probs = apply_mapping(bundle.gamma, mapping.g)
        return FinalLabels(probs=probs, mapping=mapping)


def run_from_matrix(matrix: AffinityMatrix, devset: DevSet,
                    config: PipelineConfig) -> LabelingResult:
    bundle = fit_matrix(matrix, config)
    labels = map_fit_to_classes(bundle, devset, matrix.manifest)
    return LabelingResult(labels=labels, bundle=bundle)


def labeling_accuracy(hard: np.ndarray, truth: np.ndarray,
                      rows: Sequence[int]) -> float:
    """Fraction of the given rows whose hard label matches the truth."""
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        raise ValueError("no rows to evaluate")
    return float(np.mean(np.asarray(hard)[rows] == np.asarray(truth)[rows]))


# ---------------------------------------------------------------------------
# Label file output
# ---------------------------------------------------------------------------

def format_labels(manifest: DatasetManifest, result: LabelingResult, *,
                  alpha: int, z_top: int | None, seed: int,
                  accuracy: tuple[float, int] | None = None) -> str:
    labels = result.labels
    k = labels.n_classes
    mapping = result.mapping
    lines = ["# afflabel labels v1"]
    z_text = str(z_top) if z_top is not None else "-"
    lines.append(f"# N={manifest.n_total} K={k} alpha={alpha} Z={z_text} seed={seed}")
    g_text = ",".join(f"{cluster}:{cls}" for cluster, cls in enumerate(mapping.g))
    lines.append(f"# mapping={g_text} objective={mapping.objective:.9f}")
    lines.append("# dev_ids=" + ",".join(manifest.dev_ids))
    if accuracy is not None:
        acc, n_eval = accuracy
        lines.append(f"# accuracy_nondev={acc:.6f} n_eval={n_eval}")
    for i, instance_id in enumerate(manifest.instance_ids):
        probs = "\t".join(f"{p:.9f}" for p in labels.probs[i])
        lines.append(f"{instance_id}\t{probs}\t{int(labels.hard[i])}")
    return "\n".join(lines) + "\n"


def read_labels(path) -> tuple[dict[str, str], list[str], np.ndarray, np.ndarray]:
    """Parse a label file back into (metadata, ids, probs, hard)."""
    meta: dict[str, str] = {}
    ids: list[str] = []
    prob_rows: list[list[float]] = []
    hard: list[int] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            for token in line[1:].strip().split():
                if "=" in token:
                    key, _, value = token.partition("=")
                    meta[key] = value
            continue
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise ParseError(f"label row has {len(fields)} fields", path=path)
        ids.append(fields[0])
        prob_rows.append([float(x) for x in fields[1:-1]])
        hard.append(int(fields[-1]))
    return meta, ids, np.array(prob_rows), np.array(hard, dtype=np.intp)


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _accuracy_section(manifest: DatasetManifest, result: LabelingResult,
                      truth: Mapping[str, int] | None) -> tuple[float, int] | None:
    if truth is None:
        return None
    dev = set(manifest.dev_ids)
    rows = [i for i, s in enumerate(manifest.instance_ids)
            if s not in dev and s in truth]
    if not rows:
        return None
    truth_arr = np.zeros(manifest.n_total, dtype=np.intp)
    for i in rows:
        truth_arr[i] = truth[manifest.instance_ids[i]]
    acc = labeling_accuracy(result.labels.hard, truth_arr, rows)
    return acc, len(rows)


# ---------------------------------------------------------------------------
# Entry points used by the CLI
# ---------------------------------------------------------------------------

def run_label(manifest_path, maps_dir, dev_path, out_path, config: PipelineConfig,
              cache_dir=None, truth_path=None) -> LabelingResult:
    """Full flow from filter-map files to a written label file."""
    with _stage("ingest"):
        manifest = read_manifest(manifest_path)
        devset = read_devset(dev_path, manifest, config.n_classes)
        truth = read_truth(truth_path, config.n_classes) if truth_path else None
        maps = load_filtermaps(maps_dir, manifest)
    with _stage("prototypes"):
        sets = {key: select_top_z(fmap, config.z_top) for key, fmap in maps.items()}
    with _stage("affinity"):
        matrix = build_affinity_matrix(maps, sets, manifest)
    return _label_from_matrix(matrix, devset, config, out_path,
                              z_top=config.z_top, cache_dir=cache_dir, truth=truth)


def run_from_affinity(affinity_path, manifest_path, dev_path, out_path,
                      config: PipelineConfig, cache_dir=None,
                      truth_path=None) -> LabelingResult:
    """Inference starting from a saved affinity matrix (no filter maps needed)."""
    with _stage("ingest"):
        manifest = read_manifest(manifest_path)
        devset = read_devset(dev_path, manifest, config.n_classes)
        truth = read_truth(truth_path, config.n_classes) if truth_path else None
        matrix = load_affinity(affinity_path, manifest)
    z_top = max(d.z for d in matrix.function_descriptors)
    return _label_from_matrix(matrix, devset, config, out_path,
                              z_top=z_top, cache_dir=cache_dir, truth=truth)


def _label_from_matrix(matrix: AffinityMatrix, devset: DevSet, config: PipelineConfig,
                       out_path, *, z_top: int | None, cache_dir=None,
                       truth: Mapping[str, int] | None = None) -> LabelingResult:
    result = run_from_matrix(matrix, devset, config)
    with _stage("output"):
        if cache_dir is not None:
            _write_cache(cache_dir, matrix, result)
        accuracy = _accuracy_section(matrix.manifest, result, truth)
        text = format_labels(matrix.manifest, result, alpha=matrix.n_functions,
                             z_top=z_top, seed=config.seed, accuracy=accuracy)
        _atomic_write_text(out_path, text)
    return result


def _write_cache(cache_dir, matrix: AffinityMatrix, result: LabelingResult) -> None:
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    save_affinity(matrix, cache / "affinity.ggam")
    for f, fit in enumerate(result.bundle.base_fits):
        descriptor = matrix.function_descriptors[f]
        mapped = apply_mapping(fit.label_probs, result.mapping.g)
        lines = [f"# layer={descriptor.layer} z={descriptor.z}"]
        for i, instance_id in enumerate(matrix.manifest.instance_ids):
            row = "\t".join(f"{p:.9f}" for p in mapped[i])
            lines.append(f"{instance_id}\t{row}")
        (cache / f"lp_f{f:03d}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
