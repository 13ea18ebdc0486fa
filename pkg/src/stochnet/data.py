"""Datasets: CSV feature/label tables, paired image/mask directories, the
synthetic ellipse segmentation task, and seeded train/test splitting."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .pnm import read_pnm, write_pgm, write_ppm
from .rng import RngStream

__all__ = [
    "DataError",
    "VectorDataset",
    "ImageDataset",
    "load_vectors",
    "save_vectors",
    "load_images",
    "synth_blob_task",
    "split",
]

MASK_THRESHOLD = 128  # mask pixels >= this binarize to foreground


class DataError(Exception):
    pass


@dataclass
class VectorDataset:
    """Rows of (features, label events); homogeneous widths."""

    x: np.ndarray  # (n, feature_count)
    y: np.ndarray  # (n, output_count)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2 or self.y.ndim != 2 or len(self.x) != len(self.y):
            raise DataError("features and labels must be 2-D with equal row counts")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def feature_count(self) -> int:
        return self.x.shape[1]

    @property
    def output_count(self) -> int:
        return self.y.shape[1]

    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.x[i], self.y[i]) for i in range(len(self))]

    def subset(self, idx) -> "VectorDataset":
        return VectorDataset(self.x[idx], self.y[idx])


@dataclass
class ImageDataset:
    """(h, w, 3) images in [0, 1] with binary (h, w) masks."""

    images: np.ndarray  # (n, h, w, 3)
    masks: np.ndarray   # (n, h, w) of {0, 1}

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.masks = np.asarray(self.masks, dtype=float)
        if self.images.ndim != 4 or self.masks.ndim != 3:
            raise DataError("images must be (n,h,w,3), masks (n,h,w)")
        if self.images.shape[:3] != self.masks.shape:
            raise DataError("image and mask shapes disagree")
        if not np.isin(self.masks, (0.0, 1.0)).all():
            raise DataError("masks must be binary")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        n = len(self)
        return [(self.images[i].reshape(-1), self.masks[i].reshape(-1))
                for i in range(n)]

    def subset(self, idx) -> "ImageDataset":
        return ImageDataset(self.images[idx], self.masks[idx])


def load_vectors(path: str, label_count: int = 1, header: bool = False) -> VectorDataset:
    """CSV rows of features followed by the last `label_count` label
    columns; '.' decimal, optional single header line."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if header and lineno == 1:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
                if width <= label_count:
                    raise DataError(
                        f"{path}:{lineno}: rows need features plus {label_count} labels")
            elif len(cells) != width:
                raise DataError(
                    f"{path}:{lineno}: ragged row, {len(cells)} cells, expected {width}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric cell: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.asarray(rows)
    return VectorDataset(arr[:, :-label_count], arr[:, -label_count:])


def save_vectors(path: str, data: VectorDataset) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for i in range(len(data)):
            row = list(data.x[i]) + list(data.y[i])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_images(directory: str) -> ImageDataset:
    """Paired <stem>.ppm image and <stem>.pgm mask files; masks binarize
    at threshold 128, image bytes scale to [0, 1]."""
    stems = sorted(os.path.splitext(f)[0] for f in os.listdir(directory)
                   if f.endswith(".ppm"))
    if not stems:
        raise DataError(f"{directory}: no .ppm images found")
    images, masks = [], []
    shape = None
    for stem in stems:
        ppm = os.path.join(directory, stem + ".ppm")
        pgm = os.path.join(directory, stem + ".pgm")
        if not os.path.exists(pgm):
            raise DataError(f"missing mask {pgm} for image {ppm}")
        img = read_pnm(ppm)
        mask = read_pnm(pgm)
        if img.ndim != 3:
            raise DataError(f"{ppm}: expected a color PPM image")
        if mask.ndim != 2:
            raise DataError(f"{pgm}: expected a grayscale PGM mask")
        if img.shape[:2] != mask.shape:
            raise DataError(
                f"size mismatch: {ppm} is {img.shape[:2]}, {pgm} is {mask.shape}")
        if shape is None:
            shape = img.shape[:2]
        elif img.shape[:2] != shape:
            raise DataError(
                f"{ppm}: size {img.shape[:2]} differs from dataset size {shape}")
        images.append(img.astype(float) / 255.0)
        masks.append((mask >= MASK_THRESHOLD).astype(float))
    return ImageDataset(np.stack(images), np.stack(masks))


def save_images(directory: str, data: ImageDataset, prefix: str = "ex") -> None:
    os.makedirs(directory, exist_ok=True)
    for i in range(len(data)):
        img = np.floor(data.images[i] * 255.0 + 0.5).astype(np.uint8)
        mask = (data.masks[i] * 255.0).astype(np.uint8)
        write_ppm(os.path.join(directory, f"{prefix}{i:04d}.ppm"), img)
        write_pgm(os.path.join(directory, f"{prefix}{i:04d}.pgm"), mask)


def synth_blob_task(n: int, h: int, w: int, seed: int) -> ImageDataset:
    """Synthetic segmentation task: one filled ellipse on a noisy textured
    background; the mask is the ellipse support.  Foreground colors are
    drawn warm (red-leaning) and backgrounds cool (blue-leaning) so the
    labeling is learnable across examples, while per-example color jitter
    and pixel noise leave room to overfit a small training set.
    Foreground fraction stays within [0.05, 0.6] by resampling the
    ellipse.  Deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = RngStream(seed)
    images = np.empty((n, h, w, 3))
    masks = np.empty((n, h, w))
    ii, jj = np.mgrid[0:h, 0:w]
    for t in range(n):
        ex = rng.substream(t)
        # warm-vs-cool with deliberately overlapping ranges: color is
        # informative but not sufficient, so small training sets leave
        # room for memorization
        fg = np.array([ex.uniform_range(0.25, 0.9),
                       ex.uniform_range(0.15, 0.8),
                       ex.uniform_range(0.1, 0.75)])
        bg = np.array([ex.uniform_range(0.1, 0.75),
                       ex.uniform_range(0.25, 0.75),
                       ex.uniform_range(0.25, 0.9)])
        lo, hi = 0.05 * h * w, 0.6 * h * w
        while True:
            ci = ex.uniform_range(0.25 * h, 0.75 * h)
            cj = ex.uniform_range(0.25 * w, 0.75 * w)
            ri = ex.uniform_range(0.12 * h, 0.45 * h)
            rj = ex.uniform_range(0.12 * w, 0.45 * w)
            mask = (((ii - ci) / ri) ** 2 + ((jj - cj) / rj) ** 2) <= 1.0
            if lo <= mask.sum() <= hi:
                break
        img = np.empty((h, w, 3))
        img[:] = bg
        img[mask] = fg
        img += ex.normal(0.16, (h, w, 3))
        images[t] = np.clip(img, 0.0, 1.0)
        masks[t] = mask.astype(float)
    return ImageDataset(images, masks)


def split(dataset, train_count: int, seed: int):
    """Disjoint, exhaustive, seed-deterministic (train, test) split."""
    n = len(dataset)
    if not 1 <= train_count < n:
        raise ValueError(f"train_count must be in [1, {n - 1}], got {train_count}")
    perm = RngStream(seed).permutation(n)
    return dataset.subset(perm[:train_count]), dataset.subset(perm[train_count:])
