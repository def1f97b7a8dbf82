"""Image ingestion, normalization, stratified splitting and synthetic data.

Images are read either from ``root/<class_name>/*.pgm`` or from a
``root/manifest.csv`` with ``path,label`` rows (paths relative to
``root``). Every image is center-cropped to a square, box-filtered to
20x20 and mapped ``v -> v / 256`` so that all pixels lie in ``[0, 1)``.
Class indices follow the lexicographic order of class names.
"""
from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import ConfigurationError, IngestionError

logger = logging.getLogger(__name__)

IMAGE_SIZE = 20
MAX_CLASSES = 4
# numbered so that lexicographic order matches the label order on reload
SYNTHETIC_CLASSES = ("0_horizontal_bar", "1_vertical_bar", "2_disk", "3_diagonal_stripe")
MANIFEST = "manifest.csv"


@dataclass
class LabeledImage:
    pixels: np.ndarray
    label: int
    source_id: str


@dataclass
class DatasetSplit:
    train: List[LabeledImage]
    test: List[LabeledImage]
    class_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        overlap = {im.source_id for im in self.train} & {im.source_id for im in self.test}
        if overlap:
            raise ConfigurationError(f"train and test share source ids: {sorted(overlap)[:5]}")

    @staticmethod
    def _arrays(images):
        if not images:
            return np.zeros((0, 1, IMAGE_SIZE, IMAGE_SIZE)), np.zeros(0, dtype=int)
        X = np.stack([im.pixels for im in images])[:, None].astype(float)
        y = np.array([im.label for im in images], dtype=int)
        return X, y

    def train_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._arrays(self.train)

    def test_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._arrays(self.test)

    def class_counts(self) -> Dict[str, Dict[int, int]]:
        return {
            "train": dict(sorted(Counter(im.label for im in self.train).items())),
            "test": dict(sorted(Counter(im.label for im in self.test).items())),
        }


# -- PGM -------------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Decode a binary (P5) 8-bit PGM file into a ``uint8`` array."""
    path = Path(path)
    try:
        data = path.read_bytes()
        tokens, offset = _pgm_tokens(data, 4)
        if tokens[0] != b"P5":
            raise ValueError(f"unsupported magic {tokens[0]!r}; only binary P5 is read")
        width, height, maxval = (int(t) for t in tokens[1:])
        if not 0 < maxval < 256:
            raise ValueError(f"only 8-bit PGM is supported (maxval {maxval})")
        raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
        return raster.reshape(height, width).copy()
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc


def write_pgm(path, image) -> None:
    image = np.asarray(image, dtype=np.uint8)
    height, width = image.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (width, height) + image.tobytes())


# -- normalization ---------------------------------------------------------------


def _box_matrix(src: int, dst: int) -> np.ndarray:
    """``(dst, src)`` area-averaging weights: overlap of each source pixel with each target cell."""
    edges = np.arange(src + 1)
    cells = np.linspace(0, src, dst + 1)
    lo = np.maximum(edges[None, :-1], cells[:-1, None])
    hi = np.minimum(edges[None, 1:], cells[1:, None])
    return np.clip(hi - lo, 0, None) / (src / dst)


def normalize_image(raw, size: int = IMAGE_SIZE) -> np.ndarray:
    """Center crop, box-filter resample to ``size x size``, scale by 1/256."""
    raw = np.asarray(raw, dtype=float)
    h, w = raw.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    square = raw[top : top + side, left : left + side]
    box = _box_matrix(side, size)
    return (box @ square @ box.T) / 256.0


def _labels_from_names(names: Sequence[str]) -> Dict[str, int]:
    classes = sorted(set(names))
    if len(classes) > MAX_CLASSES:
        raise ConfigurationError(f"at most {MAX_CLASSES} classes are supported, found {classes}")
    return {name: i for i, name in enumerate(classes)}


def load_images(root) -> Tuple[List[LabeledImage], List[str]]:
    """Read every image below ``root``, sorted by path."""
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"data root {root} is not a directory")
    manifest = root / MANIFEST
    if manifest.exists():
        with manifest.open(newline="") as fh:
            entries = [(root / row["path"], row["label"]) for row in csv.DictReader(fh)]
        for _, label in entries:
            if not label:
                raise ConfigurationError(f"{manifest}: empty label")
    else:
        class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
        entries = []
        for d in class_dirs:
            files = sorted(d.glob("*.pgm"))
            if not files:
                raise ConfigurationError(f"class directory {d} holds no .pgm files")
            entries.extend((f, d.name) for f in files)
    if not entries:
        raise ConfigurationError(f"no images found under {root}")
    label_of = _labels_from_names([label for _, label in entries])
    entries.sort(key=lambda e: str(e[0]))
    images = [
        LabeledImage(normalize_image(read_pgm(path)), label_of[label], str(path.relative_to(root)))
        for path, label in entries
    ]
    logger.info("loaded %d images in %d classes from %s", len(images), len(label_of), root)
    return images, sorted(label_of)


def stratified_split(images: Sequence[LabeledImage], ratio: float, seed: int) -> DatasetSplit:
    """Seeded per-class shuffle, then the first ``round(ratio * n)`` go to train."""
    if not 0 < ratio < 1:
        raise ConfigurationError(f"split ratio must be in (0, 1), got {ratio}")
    by_class = defaultdict(list)
    for im in images:
        by_class[im.label].append(im)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in sorted(by_class):
        members = by_class[label]
        n_train = int(round(ratio * len(members)))
        if n_train == 0 or n_train == len(members):
            raise ConfigurationError(
                f"class {label} has {len(members)} images, too few for split ratio {ratio}"
            )
        order = rng.permutation(len(members))
        train.extend(members[i] for i in order[:n_train])
        test.extend(members[i] for i in order[n_train:])
    return DatasetSplit(train, test)


def load_dataset(root, ratio: float = 0.5, seed: int = 0) -> DatasetSplit:
    images, names = load_images(root)
    split = stratified_split(images, ratio, seed)
    split.class_names = names
    return split


# -- synthetic classes -------------------------------------------------------------

_ONE_BELOW = np.nextafter(1.0, 0.0)


def _synthetic_image(label: int, rng: np.random.Generator, size: int = IMAGE_SIZE) -> np.ndarray:
    rows, cols = np.mgrid[0:size, 0:size]
    img = np.full((size, size), 0.1)
    if label in (0, 1):
        start = rng.integers(3, size - 7)
        thick = rng.integers(3, 5)
        lo, hi = rng.integers(1, 4), size - rng.integers(1, 4)
        along, across = (cols, rows) if label == 0 else (rows, cols)
        mask = (across >= start) & (across < start + thick) & (along >= lo) & (along < hi)
    elif label == 2:
        cy, cx = size / 2 - 0.5 + rng.uniform(-2, 2, size=2)
        radius = rng.uniform(3.5, 5.5)
        mask = (rows - cy) ** 2 + (cols - cx) ** 2 <= radius**2
    else:
        offset = rng.uniform(-4, 4)
        mask = np.abs(rows - cols - offset) <= 1.5
    img[mask] = rng.uniform(0.7, 0.9)
    img += rng.normal(0.0, 0.08, size=img.shape)
    return np.clip(img, 0.0, _ONE_BELOW)


def generate_synthetic(n_per_class: int, seed: int) -> DatasetSplit:
    """Four separable 20x20 classes with seeded jitter and noise, split 50/50."""
    if n_per_class < 2:
        raise ConfigurationError(f"n_per_class must be >= 2, got {n_per_class}")
    rng = np.random.default_rng(seed)
    images = [
        LabeledImage(_synthetic_image(label, rng), label, f"synthetic/{name}/{k:04d}")
        for label, name in enumerate(SYNTHETIC_CLASSES)
        for k in range(n_per_class)
    ]
    split = stratified_split(images, 0.5, seed)
    split.class_names = list(SYNTHETIC_CLASSES)
    return split


def materialize(split: DatasetSplit, root) -> Path:
    """Write both halves of ``split`` as ``root/<class>/<name>.pgm`` (8-bit)."""
    root = Path(root)
    names = split.class_names or [f"class{i}" for i in range(MAX_CLASSES)]
    for im in split.train + split.test:
        target = root / names[im.label]
        target.mkdir(parents=True, exist_ok=True)
        stem = im.source_id.replace("/", "_")
        write_pgm(target / f"{stem}.pgm", np.clip(np.floor(im.pixels * 256), 0, 255))
    return root
