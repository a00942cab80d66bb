"""Export runs: channel counts, determinism, skipping, and the end-to-end
sanity check through the labeling engine.

Pretrained weights are not downloadable in this environment, so all runs
use the seeded random-weight mode; the channel counts are fixed by the
architecture either way, and untrained convolutional features still
separate the strongly distinct synthetic classes used here.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from afflabel.dataio import load_filtermaps, read_filtermap, read_manifest
from afflabel.pipeline import read_labels

from _images import write_two_class_images
from fmexport.cli import main as fmexport_main
from fmexport.export import ExportJob, export
from fmexport.ggfm import filtermap_filename

EXPECTED_CHANNELS = {"pool1": 64, "pool2": 128, "pool3": 256, "pool4": 512, "pool5": 512}


def small_job(images, out, layers=("pool4", "pool5"), **kwargs):
    defaults = dict(weights="random", seed=3, dev_count=0)
    defaults.update(kwargs)
    return ExportJob(image_dir=images, out_dir=out, layers=layers, **defaults)


def test_channel_counts_at_224(tmp_path):
    images = tmp_path / "images"
    write_two_class_images(images, n_per_class=1, seed=1)
    result = export(small_job(images, tmp_path / "out", layers=tuple(EXPECTED_CHANNELS)))
    assert result.channel_counts == EXPECTED_CHANNELS
    for instance_id in result.instance_ids:
        for layer, channels in EXPECTED_CHANNELS.items():
            fmap = read_filtermap(tmp_path / "out" / filtermap_filename(instance_id, layer))
            assert fmap.channels == channels


def test_black_image_exports_finite_readable_files(tmp_path):
    from PIL import Image

    images = tmp_path / "images"
    images.mkdir()
    Image.new("RGB", (224, 224), (0, 0, 0)).save(images / "black.png")
    result = export(small_job(images, tmp_path / "out"))
    assert result.instance_ids == ["black"]
    for layer in ("pool4", "pool5"):
        fmap = read_filtermap(tmp_path / "out" / filtermap_filename("black", layer))
        assert np.all(np.isfinite(fmap.data))  # reader enforces this too


def test_reexport_is_byte_identical(tmp_path):
    images = tmp_path / "images"
    write_two_class_images(images, n_per_class=1, seed=2)
    export(small_job(images, tmp_path / "out1"))
    export(small_job(images, tmp_path / "out2"))
    files1 = sorted((tmp_path / "out1").iterdir())
    files2 = sorted((tmp_path / "out2").iterdir())
    assert [p.name for p in files1] == [p.name for p in files2]
    for p1, p2 in zip(files1, files2):
        assert p1.read_bytes() == p2.read_bytes(), p1.name


def test_undecodable_image_skipped_with_warning(tmp_path):
    images = tmp_path / "images"
    write_two_class_images(images, n_per_class=1, seed=4)
    (images / "broken.png").write_bytes(b"this is not an image")
    with pytest.warns(UserWarning, match="broken.png"):
        result = export(small_job(images, tmp_path / "out"))
    assert result.skipped == ["broken.png"]
    manifest = read_manifest(result.manifest_path)
    assert "broken" not in manifest.instance_ids
    assert len(manifest.instance_ids) == 2


def test_cli_export(tmp_path, capsys):
    images = tmp_path / "images"
    write_two_class_images(images, n_per_class=1, seed=5)
    code = fmexport_main(["export", "--images", str(images), "--out",
                          str(tmp_path / "out"), "--weights", "random",
                          "--layers", "pool5", "--seed", "1"])
    captured = capsys.readouterr()
    assert code == 0
    assert "exported 2 instances" in captured.out
    assert (tmp_path / "out" / "manifest.txt").exists()


def test_two_class_pipeline_beats_chance(tmp_path):
    """Cross-component acceptance: export 40 images, label them end to end."""
    start = time.perf_counter()
    images = tmp_path / "images"
    labels = write_two_class_images(images, n_per_class=20, seed=7)
    out = tmp_path / "export"

    job = ExportJob(image_dir=images, out_dir=out, weights="random",
                    seed=7, dev_count=10, notes="two-class sanity check")
    result = export(job)
    assert len(result.instance_ids) == 40
    assert result.channel_counts == EXPECTED_CHANNELS

    # every exported file parses in the labeling engine with matching dims
    manifest = read_manifest(result.manifest_path)
    maps = load_filtermaps(out, manifest)
    for (instance_id, layer), fmap in maps.items():
        assert fmap.channels == EXPECTED_CHANNELS[layer]
    del maps

    # dev/truth labels come from the generator, not the exporter
    dev_rows = [f"{s}\t{labels[s]}" for s in manifest.dev_ids]
    (tmp_path / "dev.tsv").write_text("\n".join(dev_rows) + "\n")
    truth_rows = [f"{s}\t{labels[s]}" for s in manifest.instance_ids]
    (tmp_path / "truth.tsv").write_text("\n".join(truth_rows) + "\n")

    labels_out = tmp_path / "labels.tsv"
    proc = subprocess.run(
        [sys.executable, "-m", "afflabel.cli", "label",
         "--manifest", str(result.manifest_path),
         "--maps", str(out),
         "--dev", str(tmp_path / "dev.tsv"),
         "--truth", str(tmp_path / "truth.tsv"),
         "--out", str(labels_out),
         "--K", "2", "--Z", "10", "--restarts", "3", "--seed", "7"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr

    meta, ids, probs, hard = read_labels(labels_out)
    assert ids == list(manifest.instance_ids)
    assert meta["alpha"] == "50"  # 5 layers x Z=10
    accuracy = float(meta["accuracy_nondev"])
    print(f"[ACCEPTANCE] exporter round-trip + two-class accuracy: "
          f"{accuracy:.3f} ({time.perf_counter() - start:.0f}s)")
    assert accuracy > 0.5 + 0.15
