import numpy as np
import pytest

import stochnet as sn
from stochnet.data import (
    DataError,
    ImageDataset,
    VectorDataset,
    load_images,
    load_vectors,
    save_images,
    save_vectors,
    split,
    synth_blob_task,
)
from stochnet.pnm import PnmError, read_pnm, write_pgm, write_ppm


class TestPnm:
    def test_pgm_roundtrip(self, tmp_path):
        img = np.arange(12, dtype=np.uint8).reshape(3, 4)
        path = tmp_path / "img.pgm"
        write_pgm(str(path), img)
        assert np.array_equal(read_pnm(str(path)), img)

    def test_ppm_roundtrip(self, tmp_path):
        img = np.arange(24, dtype=np.uint8).reshape(2, 4, 3)
        path = tmp_path / "img.ppm"
        write_ppm(str(path), img)
        assert np.array_equal(read_pnm(str(path)), img)

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x01\x02")
        assert np.array_equal(read_pnm(str(path)), [[1, 2]])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(PnmError):
            read_pnm(str(path))

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(PnmError):
            read_pnm(str(path))


class TestVectors:
    def test_xor_file(self, tmp_path):
        path = tmp_path / "xor.csv"
        path.write_text("0,0,0\n0,1,1\n1,0,1\n1,1,0\n")
        data = load_vectors(str(path))
        assert len(data) == 4
        assert data.feature_count == 2 and data.output_count == 1
        assert np.array_equal(data.y.ravel(), [0, 1, 1, 0])

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,0,0\n0,1\n")
        with pytest.raises(DataError, match=":2:"):
            load_vectors(str(path))

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,zero,0\n")
        with pytest.raises(DataError, match="non-numeric"):
            load_vectors(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataError, match="no data rows"):
            load_vectors(str(path))

    def test_header_flag(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("f1,f2,label\n0.5,1.5,1\n")
        data = load_vectors(str(path), header=True)
        assert len(data) == 1

    def test_roundtrip(self, tmp_path):
        data = VectorDataset(np.array([[0.25, -1.5], [3.0, 0.125]]),
                             np.array([[1.0], [0.0]]))
        path = tmp_path / "out.csv"
        save_vectors(str(path), data)
        back = load_vectors(str(path))
        assert np.array_equal(back.x, data.x)
        assert np.array_equal(back.y, data.y)


class TestImages:
    def _write_pair(self, d, stem, h=4, w=4, mask_value=200):
        img = np.random.default_rng(1).integers(0, 255, (h, w, 3)).astype(np.uint8)
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[1:3, 1:3] = mask_value
        write_ppm(str(d / f"{stem}.ppm"), img)
        write_pgm(str(d / f"{stem}.pgm"), mask)

    def test_loads_pairs(self, tmp_path):
        self._write_pair(tmp_path, "a")
        self._write_pair(tmp_path, "b")
        data = load_images(str(tmp_path))
        assert len(data) == 2
        assert data.shape == (4, 4)
        assert (data.images >= 0).all() and (data.images <= 1).all()

    def test_mask_binarization_threshold(self, tmp_path):
        self._write_pair(tmp_path, "a", mask_value=200)
        data = load_images(str(tmp_path))
        assert data.masks[0, 1, 1] == 1.0
        self._write_pair(tmp_path, "a", mask_value=100)
        data = load_images(str(tmp_path))
        assert data.masks[0, 1, 1] == 0.0

    def test_missing_mask(self, tmp_path):
        self._write_pair(tmp_path, "a")
        (tmp_path / "a.pgm").unlink()
        with pytest.raises(DataError, match="missing mask"):
            load_images(str(tmp_path))

    def test_mismatched_sizes_names_both_files(self, tmp_path):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        mask = np.zeros((2, 2), dtype=np.uint8)
        write_ppm(str(tmp_path / "a.ppm"), img)
        write_pgm(str(tmp_path / "a.pgm"), mask)
        with pytest.raises(DataError) as err:
            load_images(str(tmp_path))
        assert "a.ppm" in str(err.value) and "a.pgm" in str(err.value)

    def test_save_load_roundtrip(self, tmp_path):
        data = synth_blob_task(3, 8, 8, seed=5)
        save_images(str(tmp_path / "imgs"), data)
        back = load_images(str(tmp_path / "imgs"))
        assert np.array_equal(back.masks, data.masks)
        assert np.abs(back.images - data.images).max() <= 0.5 / 255 + 1e-12


class TestSynthBlobs:
    def test_deterministic_per_seed(self):
        a = synth_blob_task(4, 16, 16, seed=9)
        b = synth_blob_task(4, 16, 16, seed=9)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.masks, b.masks)

    def test_different_seeds_differ(self):
        a = synth_blob_task(2, 16, 16, seed=1)
        b = synth_blob_task(2, 16, 16, seed=2)
        assert not np.array_equal(a.images, b.images)

    def test_masks_nonempty_and_balanced(self):
        data = synth_blob_task(20, 16, 16, seed=3)
        fractions = data.masks.mean(axis=(1, 2))
        assert (fractions >= 0.05).all()
        assert (fractions <= 0.6).all()

    def test_pairs_flatten(self):
        data = synth_blob_task(2, 8, 8, seed=4)
        x, y = data.pairs()[0]
        assert x.shape == (8 * 8 * 3,)
        assert y.shape == (64,)


class TestSplit:
    def test_sizes(self):
        data = synth_blob_task(10, 8, 8, seed=1)
        train, test = split(data, 3, seed=42)
        assert len(train) == 3 and len(test) == 7

    def test_same_seed_same_split(self):
        data = synth_blob_task(10, 8, 8, seed=1)
        a_train, _ = split(data, 4, seed=7)
        b_train, _ = split(data, 4, seed=7)
        assert np.array_equal(a_train.images, b_train.images)

    def test_union_is_original_multiset(self):
        data = synth_blob_task(8, 8, 8, seed=2)
        train, test = split(data, 5, seed=3)
        combined = np.concatenate([train.images, test.images])
        want = np.sort(data.images.reshape(8, -1), axis=0)
        got = np.sort(combined.reshape(8, -1), axis=0)
        assert np.array_equal(got, want)

    def test_count_out_of_range(self):
        data = synth_blob_task(5, 8, 8, seed=2)
        for bad in (0, 5, 6):
            with pytest.raises(ValueError):
                split(data, bad, seed=1)
