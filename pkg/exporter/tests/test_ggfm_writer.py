"""The exporter's writer must round-trip through the labeling engine's reader."""

import numpy as np
import pytest

from afflabel.dataio import read_filtermap, read_manifest

from fmexport.ggfm import filtermap_filename, write_filtermap, write_manifest


def test_round_trip_through_labeling_engine(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(3, 4, 5)).astype(np.float32)
    path = tmp_path / filtermap_filename("img_a", "pool2")
    write_filtermap(path, "img_a", "pool2", data)
    fmap = read_filtermap(path)
    assert fmap.instance_id == "img_a"
    assert fmap.layer == "pool2"
    np.testing.assert_array_equal(fmap.data, data)


def test_float64_input_is_stored_as_float32(tmp_path):
    data = np.array([[[0.1, 0.2]], [[0.3, 0.4]]])
    path = tmp_path / "x.ggfm"
    write_filtermap(path, "x", "pool1", data)
    fmap = read_filtermap(path)
    np.testing.assert_array_equal(fmap.data, data.astype(np.float32))


def test_writer_rejects_bad_tensors(tmp_path):
    with pytest.raises(ValueError, match="positive dims"):
        write_filtermap(tmp_path / "x.ggfm", "x", "L", np.zeros((0, 1, 1)))
    with pytest.raises(ValueError, match="non-finite"):
        write_filtermap(tmp_path / "x.ggfm", "x", "L", np.full((1, 1, 1), np.nan))


def test_manifest_round_trips_through_labeling_engine(tmp_path):
    ids = [f"im{i}" for i in range(6)]
    path = tmp_path / "manifest.txt"
    write_manifest(path, ids, dev_count=2, layers=("pool1", "pool5"), notes="test")
    manifest = read_manifest(path)
    assert manifest.instance_ids == tuple(ids)
    assert manifest.n_unlabeled == 4 and manifest.m_dev == 2
    assert manifest.layer_names == ("pool1", "pool5")
    assert manifest.dev_ids == ("im4", "im5")
