"""Run a pretrained classification network over an image directory and dump
every max-pooling layer's activations as GGFM files plus a manifest.

Determinism: exports run on CPU with a single torch thread and a fixed seed,
so re-exporting identical inputs with identical weights reproduces files
byte for byte. Preprocessing follows the pretrained model's published
recipe: shorter-side resize to 256, center crop 224, per-channel
normalization.

When pretrained weights are unavailable (offline environments), the
``random`` weight mode initializes the same architecture from the seed;
activations are then untrained features, which is still sufficient for
format/integration work and for coarse visual classes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision import models, transforms

from .ggfm import filtermap_filename, write_filtermap, write_manifest

POOL_LAYERS = ("pool1", "pool2", "pool3", "pool4", "pool5")
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class ExportJob:
    image_dir: Path
    out_dir: Path
    model: str = "vgg16"
    weights: str = "pretrained"      # "pretrained" | "random" | path to a state dict
    layers: tuple[str, ...] = POOL_LAYERS
    resize: int = 256
    crop: int = 224
    dev_count: int = 0               # last N ids become the manifest's dev rows
    seed: int = 0
    notes: str = ""

    def __post_init__(self):
        self.image_dir = Path(self.image_dir)
        self.out_dir = Path(self.out_dir)
        unknown = set(self.layers) - set(POOL_LAYERS)
        if unknown:
            raise ValueError(f"unknown layers {sorted(unknown)}; choose from {POOL_LAYERS}")
        self.layers = tuple(name for name in POOL_LAYERS if name in self.layers)


@dataclass
class ExportResult:
    instance_ids: list[str]
    skipped: list[str]
    manifest_path: Path
    channel_counts: dict[str, int] = field(default_factory=dict)


def build_model(name: str, weights: str, seed: int) -> torch.nn.Module:
    if name != "vgg16":
        raise ValueError(f"unsupported model {name!r}")
    torch.manual_seed(seed)
    if weights == "pretrained":
        net = models.vgg16(weights=models.VGG16_Weights.IMAGENET1K_V1)
    elif weights == "random":
        net = models.vgg16(weights=None)
    else:
        net = models.vgg16(weights=None)
        state = torch.load(weights, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
    net.eval()
    return net


def _preprocess(resize: int, crop: int):
    return transforms.Compose([
        transforms.Resize(resize),
        transforms.CenterCrop(crop),
        transforms.ToTensor(),
        transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
    ])


def pool_activations(net: torch.nn.Module, batch: torch.Tensor) -> dict[str, np.ndarray]:
    """Forward through the convolutional stack, capturing each max-pool output."""
    acts: dict[str, np.ndarray] = {}
    h = batch
    pool_idx = 0
    with torch.no_grad():
        for module in net.features:
            h = module(h)
            if isinstance(module, torch.nn.MaxPool2d):
                acts[POOL_LAYERS[pool_idx]] = h[0].numpy().copy()
                pool_idx += 1
    return acts


def list_images(image_dir: Path) -> list[Path]:
    paths = [p for p in sorted(image_dir.iterdir())
             if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS]
    if not paths:
        raise ValueError(f"no images found under {image_dir}")
    return paths


def export(job: ExportJob) -> ExportResult:
    """Export every decodable image; undecodable files are skipped with a warning."""
    torch.set_num_threads(1)
    net = build_model(job.model, job.weights, job.seed)
    prep = _preprocess(job.resize, job.crop)
    job.out_dir.mkdir(parents=True, exist_ok=True)

    instance_ids: list[str] = []
    skipped: list[str] = []
    channel_counts: dict[str, int] = {}
    for path in list_images(job.image_dir):
        instance_id = path.stem
        try:
            with Image.open(path) as img:
                rgb = img.convert("RGB")
        except (UnidentifiedImageError, OSError) as e:
            warnings.warn(f"skipping undecodable image {path.name}: {e}")
            skipped.append(path.name)
            continue
        batch = prep(rgb).unsqueeze(0)
        acts = pool_activations(net, batch)
        for layer in job.layers:
            data = acts[layer]
            channel_counts[layer] = data.shape[0]
            write_filtermap(job.out_dir / filtermap_filename(instance_id, layer),
                            instance_id, layer, data)
        instance_ids.append(instance_id)

    if not instance_ids:
        raise ValueError("every image failed to decode; nothing exported")
    if job.dev_count > len(instance_ids):
        raise ValueError(f"dev_count {job.dev_count} exceeds {len(instance_ids)} "
                         "exported instances")
    manifest_path = job.out_dir / "manifest.txt"
    write_manifest(manifest_path, instance_ids, job.dev_count, job.layers,
                   notes=job.notes)
    return ExportResult(instance_ids=instance_ids, skipped=skipped,
                        manifest_path=manifest_path, channel_counts=channel_counts)
