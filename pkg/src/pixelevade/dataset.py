"""Synthetic traffic-sign-like corpus, normalization, and image ingestion.

Images are channels-first float32 arrays of shape (3, 32, 32) with values in
[0, 1]. Each class renders one glyph/color combination on a textured
background with position and scale jitter; a per-class noise amplitude
controls how visually noisy the class is.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .nn.checkpoint import read_container, write_container

IMAGE_SIZE = 32
CHANNELS = 3

# ImageNet-style normalization constants, applied only at the classifier
# boundary; the attack itself always operates in raw [0, 1] pixel space.
DEFAULT_MEAN = (0.485, 0.456, 0.406)
DEFAULT_STD = (0.229, 0.224, 0.225)

_SHAPES = ("circle", "triangle", "octagon", "diamond",
           "hbar", "vbar", "cross", "ring")
_COLORS = np.array([
    (0.85, 0.10, 0.10),   # red
    (0.10, 0.75, 0.15),   # green
    (0.15, 0.25, 0.90),   # blue
    (0.95, 0.85, 0.10),   # yellow
    (0.85, 0.15, 0.80),   # magenta
    (0.10, 0.80, 0.85),   # cyan
    (0.95, 0.95, 0.95),   # white
    (0.95, 0.55, 0.10),   # orange
], dtype=np.float32)

MAX_CLASSES = len(_SHAPES) * len(_COLORS)


@dataclass
class CorpusConfig:
    class_count: int = 8
    samples_per_class: int = 500
    noise_levels: list = field(default_factory=list)  # defaults to 0.1 each
    seed: int = 142
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if self.class_count > MAX_CLASSES:
            raise ValueError(
                f"class_count {self.class_count} exceeds the "
                f"{MAX_CLASSES} available glyph/color combinations"
            )
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if not self.noise_levels:
            self.noise_levels = [0.1] * self.class_count
        if len(self.noise_levels) != self.class_count:
            raise ValueError("noise_levels length must equal class_count")
        for lvl in self.noise_levels:
            if not 0.0 <= lvl <= 1.0:
                raise ValueError("noise_levels entries must be in [0, 1]")


@dataclass
class LabeledImage:
    image: np.ndarray  # (3, 32, 32) float32 in [0, 1]
    label: int


class ImageSet:
    """Immutable stack of labeled images, stored as dense arrays."""

    def __init__(self, images, labels):
        self.images = np.ascontiguousarray(images, dtype=np.float32)
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[1:] != (CHANNELS, IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"expected (N, 3, 32, 32) images, got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError("images/labels length mismatch")

    def __len__(self):
        return len(self.images)

    def __getitem__(self, i):
        return LabeledImage(self.images[i], int(self.labels[i]))

    @property
    def class_count(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def class_indices(self, label):
        return np.flatnonzero(self.labels == label)


def _glyph_mask(shape, cx, cy, r):
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE].astype(np.float32) + 0.5
    dx = xx - cx
    dy = yy - cy
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "triangle":
        depth = yy - (cy - r)
        return (depth >= 0) & (depth <= 1.5 * r) & (np.abs(dx) <= depth / np.sqrt(3.0))
    if shape == "octagon":
        return (np.abs(dx) <= 0.92 * r) & (np.abs(dy) <= 0.92 * r) \
            & (np.abs(dx) + np.abs(dy) <= 1.3 * r)
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    if shape == "hbar":
        return (np.abs(dy) <= 0.35 * r) & (np.abs(dx) <= r)
    if shape == "vbar":
        return (np.abs(dx) <= 0.35 * r) & (np.abs(dy) <= r)
    if shape == "cross":
        return ((np.abs(dy) <= 0.3 * r) & (np.abs(dx) <= r)) \
            | ((np.abs(dx) <= 0.3 * r) & (np.abs(dy) <= r))
    if shape == "ring":
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    raise ValueError(f"unknown shape {shape!r}")


def class_style(label):
    """Deterministic (shape, color) pair per class; a Latin-square pairing
    keeps all combinations distinct up to MAX_CLASSES classes."""
    shape_idx = label % len(_SHAPES)
    color_idx = (shape_idx + label // len(_SHAPES)) % len(_COLORS)
    return _SHAPES[shape_idx], _COLORS[color_idx]


def _render_sample(label, noise_level, rng):
    shape, color = class_style(label)

    base = rng.uniform(0.15, 0.45, size=3).astype(np.float32)
    img = np.repeat(base[:, None, None], IMAGE_SIZE, axis=1)
    img = np.repeat(img, IMAGE_SIZE, axis=2).copy()
    # low-frequency gradient texture
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE].astype(np.float32) / (IMAGE_SIZE - 1)
    gx, gy = rng.uniform(-0.12, 0.12, size=2)
    img += (gx * xx + gy * yy)[None, :, :]
    img += rng.uniform(-0.03, 0.03, size=img.shape).astype(np.float32)

    cx = 16.0 + rng.uniform(-4.0, 4.0)
    cy = 16.0 + rng.uniform(-4.0, 4.0)
    r = rng.uniform(8.0, 12.0)
    mask = _glyph_mask(shape, cx, cy, r)
    tint = np.clip(color + rng.uniform(-0.05, 0.05, size=3).astype(np.float32), 0.0, 1.0)
    img[:, mask] = tint[:, None]

    if noise_level > 0.0:
        img += rng.uniform(-noise_level, noise_level, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_corpus(config):
    """Render the corpus and return (train, test) ImageSets.

    Fully determined by the config (including the seed); the split is
    stratified per class with counts within 1 of the exact fraction.
    """
    rng = np.random.default_rng(config.seed)
    n_train_per_class = int(round(config.samples_per_class * config.train_fraction))
    n_train_per_class = min(max(n_train_per_class, 0), config.samples_per_class)

    train_imgs, train_labels, test_imgs, test_labels = [], [], [], []
    for c in range(config.class_count):
        for i in range(config.samples_per_class):
            img = _render_sample(c, config.noise_levels[c], rng)
            if i < n_train_per_class:
                train_imgs.append(img)
                train_labels.append(c)
            else:
                test_imgs.append(img)
                test_labels.append(c)
    train = ImageSet(np.stack(train_imgs), np.array(train_labels))
    test = ImageSet(np.stack(test_imgs) if test_imgs else
                    np.empty((0, CHANNELS, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32),
                    np.array(test_labels, dtype=np.int64))
    return train, test


@dataclass
class NormalizationSpec:
    mean: tuple = DEFAULT_MEAN
    std: tuple = DEFAULT_STD

    def __post_init__(self):
        # canonicalize to float32 precision so specs round-trip checkpoints
        self.mean = tuple(float(np.float32(m)) for m in self.mean)
        self.std = tuple(float(np.float32(s)) for s in self.std)
        if len(self.mean) != CHANNELS or len(self.std) != CHANNELS:
            raise ValueError("mean/std must have 3 channels")
        if any(s <= 0 for s in self.std):
            raise ValueError("std entries must be strictly positive")


def normalize(image, spec):
    """(x - mean) / std per channel; applied only at the classifier boundary."""
    mean = np.asarray(spec.mean, dtype=np.float32)[:, None, None]
    std = np.asarray(spec.std, dtype=np.float32)[:, None, None]
    return ((image - mean) / std).astype(np.float32)


def denormalize(tensor, spec):
    mean = np.asarray(spec.mean, dtype=np.float32)[:, None, None]
    std = np.asarray(spec.std, dtype=np.float32)[:, None, None]
    return (tensor * std + mean).astype(np.float32)


def normalize_batch(images, spec):
    mean = np.asarray(spec.mean, dtype=np.float32)[None, :, None, None]
    std = np.asarray(spec.std, dtype=np.float32)[None, :, None, None]
    return ((images - mean) / std).astype(np.float32)


def ingest_directory(path, pattern="*.png"):
    """Load a per-class-subfolder image directory.

    Subdirectories sorted by name become class indices. Images are decoded,
    bilinearly resized to 32x32, and scaled to [0, 1]. Returns
    (ImageSet, skipped_count); unreadable files are skipped with a warning.
    """
    root = Path(path)
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise ValueError(f"{root}: no class subdirectories found")
    images, labels = [], []
    skipped = 0
    for label, class_dir in enumerate(class_dirs):
        loaded = 0
        for file in sorted(class_dir.glob(pattern)):
            try:
                with PILImage.open(file) as im:
                    im = im.convert("RGB")
                    if im.size != (IMAGE_SIZE, IMAGE_SIZE):
                        im = im.resize((IMAGE_SIZE, IMAGE_SIZE), PILImage.BILINEAR)
                    arr = np.asarray(im, dtype=np.float32) / 255.0
            except (OSError, ValueError) as exc:
                warnings.warn(f"skipping unreadable image {file}: {exc}")
                skipped += 1
                continue
            images.append(arr.transpose(2, 0, 1))
            labels.append(label)
            loaded += 1
        if loaded == 0:
            raise ValueError(f"{class_dir}: class directory has no readable images")
    return ImageSet(np.stack(images), np.array(labels)), skipped


_CORPUS_MAGIC = "EVDS"
_TAG_TRAIN, _TAG_TEST = 20, 21


def save_corpus(path, train, test):
    entries = [
        (_TAG_TRAIN, [], [train.images, train.labels.astype(np.float32)]),
        (_TAG_TEST, [], [test.images, test.labels.astype(np.float32)]),
    ]
    write_container(path, _CORPUS_MAGIC, entries)


def load_corpus(path):
    entries = {tag: tensors for tag, _, tensors in read_container(path, _CORPUS_MAGIC)}
    train = ImageSet(entries[_TAG_TRAIN][0], entries[_TAG_TRAIN][1].astype(np.int64))
    test = ImageSet(entries[_TAG_TEST][0], entries[_TAG_TEST][1].astype(np.int64))
    return train, test
