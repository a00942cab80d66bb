"""Synthetic two-class test images: bright blobs versus vertical stripes.

Class labels alternate along the sorted filename order, so any tail slice
of the exported manifest is class-balanced.
"""

import numpy as np
from PIL import Image, ImageDraw


def _blob_image(rng, size):
    img = Image.new("RGB", (size, size), (12, 12, 20))
    draw = ImageDraw.Draw(img)
    for _ in range(6):
        r = int(rng.integers(size // 10, size // 4))
        x = int(rng.integers(r, size - r))
        y = int(rng.integers(r, size - r))
        shade = int(rng.integers(170, 255))
        draw.ellipse([x - r, y - r, x + r, y + r], fill=(shade, shade, int(shade * 0.6)))
    return img


def _stripe_image(rng, size):
    img = Image.new("RGB", (size, size), (230, 230, 235))
    draw = ImageDraw.Draw(img)
    period = int(rng.integers(8, 20))
    offset = int(rng.integers(0, period))
    for x in range(-offset, size, period):
        draw.rectangle([x, 0, x + period // 2, size], fill=(25, 30, 70))
    return img


def write_two_class_images(directory, n_per_class=20, size=224, seed=0):
    """Write alternating blob/stripe images; returns {instance_id: class}."""
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    labels = {}
    for i in range(2 * n_per_class):
        cls = i % 2
        img = _blob_image(rng, size) if cls == 0 else _stripe_image(rng, size)
        name = f"im{i:03d}_c{cls}"
        img.save(directory / f"{name}.png")
        labels[name] = cls
    return labels
