import numpy as np
import pytest
from sklearn.neighbors import KNeighborsClassifier

from hybridqnn.data import (
    SYNTHETIC_CLASSES,
    LabeledImage,
    DatasetSplit,
    generate_synthetic,
    load_dataset,
    load_images,
    materialize,
    normalize_image,
    read_pgm,
    stratified_split,
    write_pgm,
)
from hybridqnn.exceptions import ConfigurationError, IngestionError


def fake_images(per_class, n_classes=4):
    return [
        LabeledImage(np.zeros((20, 20)), label, f"c{label}/{k}")
        for label in range(n_classes)
        for k in range(per_class)
    ]


class TestNormalize:
    def test_white_pixel(self):
        out = normalize_image(np.full((20, 20), 255))
        np.testing.assert_array_equal(out, 0.99609375)
        assert out.max() < 1.0

    def test_box_downsample(self):
        raw = np.kron(np.arange(400).reshape(20, 20), np.ones((2, 2)))  # 40x40 of 2x2 blocks
        np.testing.assert_allclose(normalize_image(raw), np.arange(400).reshape(20, 20) / 256)

    def test_fractional_box(self):
        # 30 -> 20: each output averages 1.5 source pixels
        raw = np.tile(np.arange(30.0), (30, 1))
        out = normalize_image(raw)
        expected = [(np.arange(30.0)[int(1.5 * j) : int(1.5 * j) + 2] @ ([1, 0.5] if j % 2 == 0 else [0.5, 1])) / 1.5
                    for j in range(20)]
        np.testing.assert_allclose(out[0], np.array(expected) / 256)

    def test_center_crop(self):
        raw = np.zeros((20, 30))
        raw[:, 5:25] = 128
        np.testing.assert_array_equal(normalize_image(raw), 0.5)

    def test_upsample_range(self):
        out = normalize_image(np.random.default_rng(0).integers(0, 256, (7, 7)))
        assert out.shape == (20, 20)
        assert out.min() >= 0 and out.max() < 1


class TestPGM:
    def test_round_trip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, (5, 7)).astype(np.uint8)
        write_pgm(tmp_path / "a.pgm", img)
        np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)

    def test_header_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 2\n# max\n255\n" + bytes([0, 10, 20, 255]))
        np.testing.assert_array_equal(read_pgm(path), [[0, 10], [20, 255]])

    @pytest.mark.parametrize("payload", [b"P2\n2 2\n255\n0 1 2 3", b"P5\n2 2\n65535\n" + bytes(8), b"P5\n4 4\n255\n\x00"])
    def test_rejects(self, tmp_path, payload):
        path = tmp_path / "bad.pgm"
        path.write_bytes(payload)
        with pytest.raises(IngestionError):
            read_pgm(path)

    def test_missing(self, tmp_path):
        with pytest.raises(IngestionError):
            read_pgm(tmp_path / "none.pgm")


class TestSplit:
    def test_1200_images(self):
        split = stratified_split(fake_images(300), 0.5, seed=0)
        assert len(split.train) == len(split.test) == 600
        counts = split.class_counts()
        assert counts["train"] == counts["test"] == {0: 150, 1: 150, 2: 150, 3: 150}

    def test_seeded(self):
        ids = lambda s: [im.source_id for im in s.train]
        assert ids(stratified_split(fake_images(10), 0.5, 1)) == ids(stratified_split(fake_images(10), 0.5, 1))
        assert ids(stratified_split(fake_images(10), 0.5, 1)) != ids(stratified_split(fake_images(10), 0.5, 2))

    def test_disjoint(self):
        split = stratified_split(fake_images(9), 0.7, 3)
        assert not {im.source_id for im in split.train} & {im.source_id for im in split.test}

    def test_overlap_rejected(self):
        im = fake_images(1)[0]
        with pytest.raises(ConfigurationError):
            DatasetSplit([im], [im])

    @pytest.mark.parametrize("ratio", [0.0, 1.0, 1.5])
    def test_bad_ratio(self, ratio):
        with pytest.raises(ConfigurationError):
            stratified_split(fake_images(4), ratio, 0)

    def test_class_too_small(self):
        with pytest.raises(ConfigurationError):
            stratified_split(fake_images(1), 0.5, 0)


class TestSynthetic:
    def test_balanced_and_in_domain(self):
        split = generate_synthetic(20, seed=0)
        X, y = split.train_arrays()
        assert X.shape == (40, 1, 20, 20)
        assert np.bincount(y).tolist() == [10] * 4
        assert X.min() >= 0 and X.max() < 1
        assert split.class_names == list(SYNTHETIC_CLASSES)

    def test_reproducible(self):
        a, b = generate_synthetic(5, 3), generate_synthetic(5, 3)
        np.testing.assert_array_equal(a.train_arrays()[0], b.train_arrays()[0])

    def test_nearest_neighbour_baseline(self):
        split = generate_synthetic(60, seed=7)
        (Xtr, ytr), (Xte, yte) = split.train_arrays(), split.test_arrays()
        knn = KNeighborsClassifier(3).fit(Xtr.reshape(len(Xtr), -1), ytr)
        assert knn.score(Xte.reshape(len(Xte), -1), yte) >= 0.9


class TestLoading:
    def test_materialized_round_trip(self, tmp_path):
        split = generate_synthetic(4, seed=1)
        materialize(split, tmp_path)
        loaded = load_dataset(tmp_path, 0.5, seed=0)
        assert loaded.class_names == list(SYNTHETIC_CLASSES)
        assert len(loaded.train) + len(loaded.test) == 16
        X, _ = loaded.train_arrays()
        # 8-bit quantization error is at most one grey level
        originals = {im.source_id.replace("/", "_"): im.pixels for im in split.train + split.test}
        for im in loaded.train:
            key = im.source_id.split("/")[-1][:-4]
            assert np.max(np.abs(im.pixels - originals[key])) <= 1 / 256 + 1e-12

    def test_manifest(self, tmp_path):
        for i, label in enumerate(["cat", "dog", "cat", "dog"]):
            write_pgm(tmp_path / f"{i}.pgm", np.full((4, 4), 64 * i))
        (tmp_path / "manifest.csv").write_text("path,label\n" + "".join(
            f"{i}.pgm,{label}\n" for i, label in enumerate(["cat", "dog", "cat", "dog"])))
        images, names = load_images(tmp_path)
        assert names == ["cat", "dog"]
        assert [im.label for im in images] == [0, 1, 0, 1]

    def test_too_many_classes(self, tmp_path):
        for c in "abcde":
            (tmp_path / c).mkdir()
            write_pgm(tmp_path / c / "x.pgm", np.zeros((2, 2)))
        with pytest.raises(ConfigurationError):
            load_images(tmp_path)

    def test_empty_class_dir(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        write_pgm(tmp_path / "a" / "x.pgm", np.zeros((2, 2)))
        with pytest.raises(ConfigurationError):
            load_images(tmp_path)

    def test_missing_root(self, tmp_path):
        with pytest.raises(IngestionError):
            load_images(tmp_path / "nothing")

    def test_corrupt_image(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "a" / "x.pgm").write_bytes(b"garbage")
        with pytest.raises(IngestionError):
            load_images(tmp_path)
