import struct

import numpy as np
import pytest

from selar.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from selar.exceptions import DataError


def test_roundtrip_preserves_values_and_order(tmp_path):
    rng = np.random.default_rng(0)
    groups = {
        "enc/W0": rng.normal(size=(4, 3)),
        "enc/b0": rng.normal(size=(3,)),
        "head.scale": np.array(2.5),
        "vnet/W": rng.normal(size=(2, 2, 2)),
    }
    path = str(tmp_path / "model.slrt")
    save_checkpoint(path, groups)
    loaded = load_checkpoint(path)
    assert list(loaded.keys()) == list(groups.keys())
    for k in groups:
        assert loaded[k].shape == np.asarray(groups[k]).shape
        assert np.array_equal(loaded[k], groups[k])


def test_header_layout(tmp_path):
    path = str(tmp_path / "m.slrt")
    save_checkpoint(path, {"w": np.array([1.0])})
    blob = open(path, "rb").read()
    assert blob[:4] == MAGIC == b"SLRT"
    assert struct.unpack("<I", blob[4:8])[0] == VERSION
    # name length, name, rank, dim, one f64
    assert struct.unpack("<I", blob[8:12])[0] == 1
    assert blob[12:13] == b"w"
    assert struct.unpack("<I", blob[13:17])[0] == 1
    assert struct.unpack("<I", blob[17:21])[0] == 1
    assert struct.unpack("<d", blob[21:29])[0] == 1.0
    assert len(blob) == 29


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.slrt"
    path.write_bytes(b"XXXX" + b"\x00" * 10)
    with pytest.raises(DataError, match="magic"):
        load_checkpoint(str(path))


def test_unsupported_version_rejected(tmp_path):
    path = tmp_path / "bad.slrt"
    path.write_bytes(MAGIC + struct.pack("<I", 99))
    with pytest.raises(DataError, match="version"):
        load_checkpoint(str(path))


def test_truncated_file_rejected(tmp_path):
    path = str(tmp_path / "m.slrt")
    save_checkpoint(path, {"w": np.ones((4, 4))})
    blob = open(path, "rb").read()
    (tmp_path / "cut.slrt").write_bytes(blob[:-7])
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(str(tmp_path / "cut.slrt"))


def test_unicode_names_roundtrip(tmp_path):
    path = str(tmp_path / "m.slrt")
    save_checkpoint(path, {"poids/étape": np.arange(3.0)})
    assert list(load_checkpoint(path)) == ["poids/étape"]
