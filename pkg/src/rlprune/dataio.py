"""Procedural shapes dataset and the RLPD1 binary container.

File layout: magic "RLPD1", then five little-endian uint32 (sample count,
class count, channels, height, width), then the u8 image payload
(n*c*h*w bytes, row-major), then n u8 labels.  The loader normalizes
images to [0, 1] float32.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

MAGIC = b"RLPD1"
SPLITS = ("train", "reward", "test")


@dataclass
class Split:
    images: np.ndarray  # (N, C, H, W) float32 in [0,1]
    labels: np.ndarray  # (N,) int64
    classes: int


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    reward_x: np.ndarray
    reward_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    classes: int

    @property
    def input_shape(self):
        return tuple(self.train_x.shape[1:])


def write_rlpd(path, images_u8: np.ndarray, labels: np.ndarray, classes: int):
    n, c, h, w = images_u8.shape
    if images_u8.dtype != np.uint8:
        raise DataError("images must be uint8")
    if labels.min() < 0 or labels.max() >= classes:
        raise DataError("label out of range")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<5I", n, classes, c, h, w))
        f.write(images_u8.tobytes())
        f.write(labels.astype(np.uint8).tobytes())


def read_rlpd(path) -> Split:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise DataError(f"{path}: bad magic {raw[:5]!r}, expected {MAGIC!r}")
    n, classes, c, h, w = struct.unpack("<5I", raw[5:25])
    need = 25 + n * c * h * w + n
    if len(raw) != need:
        raise DataError(f"{path}: expected {need} bytes, got {len(raw)}")
    imgs = np.frombuffer(raw, dtype=np.uint8, count=n * c * h * w, offset=25)
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=25 + n * c * h * w)
    images = (imgs.reshape(n, c, h, w).astype(np.float32) / 255.0)
    return Split(images, labels.astype(np.int64), classes)


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    splits = {}
    for name in SPLITS:
        path = directory / f"{name}.rlpd"
        if not path.exists():
            raise DataError(f"missing dataset split {path}")
        splits[name] = read_rlpd(path)
    classes = {s.classes for s in splits.values()}
    if len(classes) != 1:
        raise DataError("dataset splits disagree on class count")
    return Dataset(splits["train"].images, splits["train"].labels,
                   splits["reward"].images, splits["reward"].labels,
                   splits["test"].images, splits["test"].labels, classes.pop())


# ----------------------------------------------------------- shape renderer

SIZE = 32
N_SHAPES = 10


def _render(cls: int, rng: np.random.Generator) -> np.ndarray:
    """One 3x32x32 uint8 image of shape class `cls` with jitter and noise."""
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float32)
    cx = 16 + rng.integers(-4, 5)
    cy = 16 + rng.integers(-4, 5)
    r = float(rng.integers(7, 11))
    dx, dy = xx - cx, yy - cy
    d = np.sqrt(dx * dx + dy * dy)
    box = np.maximum(np.abs(dx), np.abs(dy)) <= r
    if cls == 0:      # filled circle
        mask = d <= r
    elif cls == 1:    # filled square
        mask = np.maximum(np.abs(dx), np.abs(dy)) <= r * 0.8
    elif cls == 2:    # upward triangle
        mask = (dy >= -r * 0.6) & (dy <= r * 0.6) & (np.abs(dx) <= (dy + r * 0.6) * 0.7)
    elif cls == 3:    # plus sign
        mask = ((np.abs(dx) <= 2) & (np.abs(dy) <= r)) | ((np.abs(dy) <= 2) & (np.abs(dx) <= r))
    elif cls == 4:    # ring
        mask = np.abs(d - r * 0.8) <= 1.8
    elif cls == 5:    # diagonal cross
        mask = ((np.abs(dx - dy) <= 2.2) | (np.abs(dx + dy) <= 2.2)) & (d <= r)
    elif cls == 6:    # horizontal stripes
        mask = box & (yy.astype(np.int64) % 6 < 3)
    elif cls == 7:    # vertical stripes
        mask = box & (xx.astype(np.int64) % 6 < 3)
    elif cls == 8:    # checkerboard
        mask = box & (((xx.astype(np.int64) // 4) + (yy.astype(np.int64) // 4)) % 2 == 0)
    elif cls == 9:    # diamond
        mask = (np.abs(dx) + np.abs(dy)) <= r
    else:
        raise ConfigError(f"shape classes limited to {N_SHAPES}, got class {cls}")
    bg = rng.integers(0, 80, 3)
    fg = rng.integers(140, 256, 3)
    img = np.empty((3, SIZE, SIZE), dtype=np.float32)
    for ch in range(3):
        img[ch] = np.where(mask, fg[ch], bg[ch])
    img += rng.normal(0, 12, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def generate_shapes(count: int, classes: int, seed: int):
    """Deterministic dataset: label i % classes, per-sample RNG from (seed, i)."""
    if not 2 <= classes <= N_SHAPES:
        raise ConfigError(f"classes must be in [2, {N_SHAPES}]")
    if count % classes != 0:
        raise ConfigError(f"sample count {count} not divisible by {classes} classes")
    images = np.empty((count, 3, SIZE, SIZE), dtype=np.uint8)
    labels = np.empty(count, dtype=np.int64)
    for i in range(count):
        labels[i] = i % classes
        images[i] = _render(int(labels[i]), np.random.default_rng([seed, i]))
    return images, labels


def generate_dataset(out_dir, classes=10, train=4000, reward=1000, test=1000,
                     seed=0):
    """Write train/reward/test RLPD1 files; byte-deterministic per seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, count, salt in (("train", train, 0), ("reward", reward, 1),
                              ("test", test, 2)):
        imgs, labels = generate_shapes(count, classes, seed * 3 + salt)
        write_rlpd(out_dir / f"{name}.rlpd", imgs, labels, classes)
    return out_dir
