import csv

import numpy as np
import pytest

from pwshed import build_hierarchy
from pwshed.fileio import (
    FormatError,
    RunRecord,
    boundary_overlay,
    compact_labels,
    encode_pgm,
    encode_pwv,
    export_labels,
    load_image,
    parse_report,
    save_pgm,
    save_pwv,
)


def test_minimal_pgm(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x01\x02\x03\x04")
    img = load_image(path)
    assert img.dims == (2, 2)
    assert img.data.tolist() == [[1, 2], [3, 4]]


def test_pgm_comments_and_16_bit(tmp_path):
    path = tmp_path / "b.pgm"
    path.write_bytes(b"P5 # note\n3 # w\n1\n1000\n\x00\x01\x03\xe8\x01\x00")
    img = load_image(path, "pgm")
    assert img.data.dtype == np.uint16
    assert img.data.tolist() == [[1, 1000, 256]]


def test_minimal_pwv(tmp_path):
    path = tmp_path / "v.pwv"
    payload = bytes(range(32))
    path.write_bytes(b"PWV1" + np.array([4, 4, 2], "<u4").tobytes() + b"\x08" + payload)
    img = load_image(path)
    assert img.dims == (4, 4, 2)
    assert img.data.reshape(-1).tolist() == list(range(32))


@pytest.mark.parametrize("dtype", [np.uint8, np.uint16])
def test_pgm_round_trip(tmp_path, dtype):
    rng = np.random.default_rng(1)
    img = rng.integers(0, np.iinfo(dtype).max, (13, 21), endpoint=True).astype(dtype)
    save_pgm(tmp_path / "x.pgm", img)
    back = load_image(tmp_path / "x.pgm").data
    assert back.dtype == dtype and np.array_equal(back, img)


@pytest.mark.parametrize("dtype", [np.uint8, np.uint16, np.uint32])
def test_pwv_round_trip(tmp_path, dtype):
    rng = np.random.default_rng(2)
    img = rng.integers(0, np.iinfo(dtype).max, (3, 5, 7), endpoint=True).astype(dtype)
    save_pwv(tmp_path / "x.pwv", img)
    back = load_image(tmp_path / "x.pwv").data
    assert back.dtype == dtype and np.array_equal(back, img)


GOOD_PGM = b"P5\n2 2\n255\n\x01\x02\x03\x04"
GOOD_PWV = b"PWV1" + np.array([1, 2, 2], "<u4").tobytes() + b"\x08\x01\x02\x03\x04"


@pytest.mark.parametrize("data,offset", [
    (b"P6\n2 2\n255\n\x00\x00\x00\x00", 0),
    (b"P5\n2 x\n255\n\x00\x00\x00\x00", 5),
    (b"P5\n2 2\n70000\n" + b"\x00" * 8, 7),
    (b"P5\n2 2\n0\n\x00\x00\x00\x00", 7),
    (b"P5\n2 2\n255\n\x00\x00\x00", 14),
    (GOOD_PGM + b"\x00", 15),
    (b"P5\n2 2\n", 7),
    (b"P5\n2 2\n3\n\x00\x09\x00\x00", 10),
    (b"PWV2" + GOOD_PWV[4:], 0),
    (GOOD_PWV[:10], 10),
    (GOOD_PWV[:16] + b"\x0c" + GOOD_PWV[17:], 16),
    (GOOD_PWV[:-1], 20),
    (b"PWV1" + np.array([0, 2, 2], "<u4").tobytes() + b"\x08", 4),
    (b"GIF89a", 0),
])
def test_malformed_files(tmp_path, data, offset):
    path = tmp_path / "bad"
    path.write_bytes(data)
    with pytest.raises(FormatError) as info:
        load_image(path)
    assert info.value.offset == offset
    assert f"byte offset {offset}" in str(info.value)


def test_compaction_first_appearance():
    assert compact_labels(np.array([7, 7, 3, 3, 9])).tolist() == [0, 0, 1, 1, 2]


def test_overlay_examples():
    assert not boundary_overlay(np.zeros((4, 4), np.int32)).any()
    assert boundary_overlay(np.array([0, 0, 0, 3, 3, 3])).tolist() == [0, 0, 255, 255, 0, 0]


def test_overlay_3d_matches_direct_check():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 3, (4, 5, 6))
    mask = boundary_overlay(labels)
    for z, y, x in np.ndindex(labels.shape):
        nbrs = [(z + dz, y + dy, x + dx) for dz, dy, dx in
                [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]]
        differs = any(
            all(0 <= c < s for c, s in zip(n, labels.shape)) and labels[n] != labels[z, y, x]
            for n in nbrs
        )
        assert (mask[z, y, x] == 255) == differs


def test_export_labels(tmp_path):
    img = np.array([[30, 10, 20, 12, 40, 90, 45, 8, 25, 14, 35]], np.uint8)
    h = build_hierarchy(img, None, 3)
    export_labels(h, tmp_path)
    for k, layer in enumerate(h.layers):
        stored = load_image(tmp_path / f"labels_{k}.pwv").data
        assert stored.dtype == np.uint32
        assert np.array_equal(stored.reshape(-1), compact_labels(layer).reshape(-1))
        assert len(np.unique(stored)) == h.region_counts[k]
        overlay = load_image(tmp_path / f"overlay_{k}.pgm").data
        assert overlay.shape == img.shape
    with open(tmp_path / "regions.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["layer", "region_count"]
    assert [int(r[1]) for r in rows[1:]] == h.region_counts


def test_export_3d_overlay(tmp_path):
    img = np.random.default_rng(4).integers(0, 4, (4, 6, 6)).astype(np.uint8)
    export_labels(build_hierarchy(img, None, 1), tmp_path)
    assert load_image(tmp_path / "overlay_0.pwv").dims == (4, 6, 6)


def test_run_record_keeps_minimum():
    rec = RunRecord(config={"variant": "pruf"})
    rec.add_run([{"I": 3.0, "II": 1.0}])
    rec.add_run([{"I": 2.0, "II": 5.0}])
    rec.region_counts = [7]
    rec.verification = "pass"
    kv = parse_report(rec.to_text())
    assert kv["layer.0.time_ms.I"] == "2.0"
    assert kv["layer.0.time_ms.II"] == "1.0"
    assert kv["repeats"] == "2"
    assert kv["config.variant"] == "pruf"
    assert kv["layer.0.region_count"] == "7"
    assert kv["verification"] == "pass"


def test_encoders_reject_unsupported():
    with pytest.raises(ValueError):
        encode_pgm(np.zeros((2, 2, 2), np.uint8))
    with pytest.raises(ValueError):
        encode_pwv(np.array([300]), width=8)
