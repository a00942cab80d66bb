"""Prototype extraction and top-Z selection from filter maps.

A prototype is the channel-axis vector of a filter map at one spatial
position. Channel activation is the global max over that channel's H x W
matrix; the top-Z channels by activation each nominate the position of
their own maximum, and the channel vectors at those positions form the
ranked prototype list. Duplicate positions are dropped and the ranking is
walked further down to backfill, so an image contributes Z prototypes
whenever Z unique positions exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import FilterMap
from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class Prototype:
    """A channel-spanning vector at one (h, w) position of a filter map."""

    vector: np.ndarray
    position: tuple[int, int]
    channel: int | None = None     # source channel for ranked prototypes
    rank: int | None = None        # 1-based rank by channel activation
    activation: float | None = None

    def __post_init__(self):
        v = np.asarray(self.vector)
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    """The ranked unique prototypes of one image at one layer.

    ``prototypes`` holds at most ``z_requested`` entries with pairwise
    distinct positions, sorted by rank. When fewer unique positions exist
    than requested, ``padded`` is set and ``prototype_for_rank`` repeats the
    last unique prototype so every image still serves ranks 1..z_requested.
    """

    instance_id: str
    layer: str
    prototypes: tuple[Prototype, ...]
    z_requested: int
    padded: bool = False

    def __post_init__(self):
        object.__setattr__(self, "prototypes", tuple(self.prototypes))
        if not self.prototypes:
            raise ConfigError("prototype set is empty")
        if len(self.prototypes) > self.z_requested:
            raise ConfigError("more prototypes than requested ranks")
        positions = [p.position for p in self.prototypes]
        if len(set(positions)) != len(positions):
            raise ConfigError("prototype positions must be unique")
        ranks = [p.rank for p in self.prototypes]
        if ranks != sorted(ranks) or ranks[0] != 1:
            raise ConfigError("prototypes must be sorted by rank starting at 1")

    def prototype_for_rank(self, z: int) -> Prototype:
        """Prototype serving rank z (1-based); repeats the last one when padded."""
        if not 1 <= z <= self.z_requested:
            raise ConfigError(f"rank {z} out of range [1, {self.z_requested}]")
        return self.prototypes[min(z, len(self.prototypes)) - 1]


def extract_all_prototypes(fmap: FilterMap) -> list[Prototype]:
    """All H*W prototypes of a filter map, in row-major position order."""
    c, h, w = fmap.data.shape
    out = []
    for i in range(h):
        for j in range(w):
            out.append(Prototype(vector=fmap.data[:, i, j].copy(), position=(i, j)))
    return out


def channel_activations(fmap: FilterMap) -> np.ndarray:
    """Per-channel activation: the max over each channel's spatial matrix."""
    return fmap.data.max(axis=(1, 2))


def select_top_z(fmap: FilterMap, z_top: int) -> PrototypeSet:
    """Select the prototypes nominated by the top-Z most activated channels.

    Ties between equal channel activations go to the lower channel index;
    ties between equal values inside a channel go to the lower (h, w) in
    row-major order. Duplicate positions are dropped and lower-ranked
    channels backfill until Z unique positions are found or channels run
    out; a set that still comes up short is marked ``padded``.
    """
    if z_top < 1:
        raise ConfigError(f"z_top must be >= 1, got {z_top}")
    data = fmap.data
    c, h, w = data.shape
    acts = channel_activations(fmap)
    # stable sort on -activation keeps lower channel indices first on ties
    order = np.argsort(-acts, kind="stable")

    chosen: list[Prototype] = []
    seen: set[tuple[int, int]] = set()
    for ch in order:
        if len(chosen) == z_top:
            break
        flat = int(np.argmax(data[ch]))
        pos = (flat // w, flat % w)
        if pos in seen:
            continue
        seen.add(pos)
        chosen.append(Prototype(
            vector=data[:, pos[0], pos[1]].copy(),
            position=pos,
            channel=int(ch),
            rank=len(chosen) + 1,
            activation=float(acts[ch]),
        ))
    return PrototypeSet(
        instance_id=fmap.instance_id,
        layer=fmap.layer,
        prototypes=tuple(chosen),
        z_requested=z_top,
        padded=len(chosen) < z_top,
    )
