"""Affinity functions and affinity-matrix assembly.

One affinity function is identified by a (layer, prototype rank) pair. Its
score for an ordered instance pair (target i, anchor j) is the maximum
cosine similarity between anchor j's rank-z prototype at that layer and
every prototype of target i's filter map at the same layer. The full
matrix is N x (alpha*N): column j belongs to function ``j // N`` and
anchor instance ``j % N``.

Scores are accumulated in float64 and stored as float32 (the on-disk
width), clipped to the cosine range [-1, 1].
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .dataio import AffinityFunctionDescriptor, AffinityMatrix, DatasetManifest, FilterMap
from .errors import ConfigError
from .prototypes import Prototype, PrototypeSet

__all__ = [
    "AffinityFunctionDescriptor",
    "cosine",
    "affinity_score",
    "build_affinity_matrix",
]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two equal-length vectors; 0 if either is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError(f"cosine needs equal-length vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _normalized_patches(fmap: FilterMap) -> np.ndarray:
    """(H*W, C) unit-norm prototype rows; all-zero patches stay zero."""
    c = fmap.data.shape[0]
    flat = fmap.data.reshape(c, -1).T.astype(np.float64)
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    nonzero = norms[:, 0] > 0.0
    out = np.zeros_like(flat)
    out[nonzero] = flat[nonzero] / norms[nonzero]
    return out


def affinity_score(anchor: Prototype | np.ndarray, target: FilterMap) -> float:
    """Max cosine similarity between an anchor prototype and any target patch."""
    vec = anchor.vector if isinstance(anchor, Prototype) else np.asarray(anchor)
    if vec.shape != (target.data.shape[0],):
        raise ConfigError(
            f"anchor length {vec.shape} does not match target channel count "
            f"{target.data.shape[0]}")
    norm = np.linalg.norm(vec.astype(np.float64))
    if norm == 0.0:
        return 0.0
    unit = vec.astype(np.float64) / norm
    sims = _normalized_patches(target) @ unit
    return float(sims.max())


def build_affinity_matrix(
    maps: Mapping[tuple[str, str], FilterMap],
    sets: Mapping[tuple[str, str], PrototypeSet],
    manifest: DatasetManifest,
) -> AffinityMatrix:
    """Assemble the N x (alpha*N) matrix over all (layer, rank) functions.

    ``maps`` and ``sets`` are keyed by (instance_id, layer) and must cover
    every instance in the manifest at every manifest layer. All prototype
    sets must share one requested Z; alpha = len(layers) * Z, with functions
    ordered layer-major then rank.
    """
    ids = manifest.instance_ids
    layers = manifest.layer_names
    n = manifest.n_total

    z_values = set()
    for instance_id in ids:
        for layer in layers:
            if (instance_id, layer) not in maps:
                raise ConfigError(f"missing filter map for ({instance_id!r}, {layer!r})")
            if (instance_id, layer) not in sets:
                raise ConfigError(f"missing prototype set for ({instance_id!r}, {layer!r})")
            z_values.add(sets[(instance_id, layer)].z_requested)
    if len(z_values) != 1:
        raise ConfigError(f"prototype sets disagree on Z: {sorted(z_values)}")
    z_top = z_values.pop()

    descriptors = tuple(
        AffinityFunctionDescriptor(layer=layer, z=z)
        for layer in layers for z in range(1, z_top + 1)
    )
    scores = np.empty((n, len(descriptors) * n), dtype=np.float64)

    for l_idx, layer in enumerate(layers):
        channels = {maps[(s, layer)].data.shape[0] for s in ids}
        if len(channels) != 1:
            raise ConfigError(f"layer {layer!r} has inconsistent channel counts: "
                              f"{sorted(channels)}")
        # anchors: (N*Z, C) unit rows, image-major then rank
        anchors = np.stack([
            _unit_or_zero(sets[(s, layer)].prototype_for_rank(z).vector)
            for s in ids for z in range(1, z_top + 1)
        ])
        for i, target_id in enumerate(ids):
            patches = _normalized_patches(maps[(target_id, layer)])
            sims = anchors @ patches.T          # (N*Z, H*W)
            best = sims.max(axis=1).reshape(n, z_top)
            for z_idx in range(z_top):
                f = l_idx * z_top + z_idx
                scores[i, f * n:(f + 1) * n] = best[:, z_idx]

    np.clip(scores, -1.0, 1.0, out=scores)
    return AffinityMatrix(
        scores=scores.astype(np.float32),
        function_descriptors=descriptors,
        manifest=manifest,
    )


def _unit_or_zero(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0.0 else np.zeros_like(v)
