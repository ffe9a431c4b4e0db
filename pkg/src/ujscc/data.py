"""Dataset ingestion: CIFAR-10 binary batches, splits, deterministic batching.

The CIFAR-10 binary format is 3073-byte records: one label byte then
3072 pixel bytes, channel-major R,G,B with each channel a row-major
32x32 grid. Pixels map affinely onto [-1, 1] (byte/127.5 - 1), which
is the symmetric range the decoder's final tanh produces; no
per-channel standardization is applied. A sinusoid-based synthetic
generator stands in for CIFAR in tests and offline environments.
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from ujscc.nn.rng import seeded_rng

RECORD_BYTES = 3073
IMAGE_SHAPE = (3, 32, 32)
TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_FILES = ["test_batch.bin"]
DATA_DIR_ENV = "UJSCC_DATA_DIR"


@dataclass
class ImageDataset:
    images: np.ndarray  # (M, 3, 32, 32) float64 in [-1, 1]
    labels: np.ndarray | None
    split: str

    def __len__(self) -> int:
        return self.images.shape[0]

    def take(self, count: int) -> "ImageDataset":
        return ImageDataset(self.images[:count],
                            None if self.labels is None else self.labels[:count],
                            self.split)


def _read_batch_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    if not path.is_file():
        raise FileNotFoundError(f"CIFAR-10 batch file missing: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES != 0:
        complete = raw.size - raw.size % RECORD_BYTES
        raise ValueError(
            f"{path}: {raw.size} bytes is not a multiple of the {RECORD_BYTES}-byte "
            f"record size (truncated after byte {complete})"
        )
    records = raw.reshape(-1, RECORD_BYTES)
    labels = records[:, 0].copy()
    pixels = records[:, 1:].reshape(-1, *IMAGE_SHAPE)
    return pixels, labels


def load_cifar10(path: str | os.PathLike, split: str = "train") -> ImageDataset:
    """Load the binary-format CIFAR-10 batches under `path`.

    `split` is "train" (the five data batches, in order) or "test".
    """
    if split not in ("train", "test"):
        raise ValueError(f"unknown split {split!r}")
    base = Path(path)
    files = TRAIN_FILES if split == "train" else TEST_FILES
    pixel_blocks, label_blocks = [], []
    for name in files:
        pixels, labels = _read_batch_file(base / name)
        pixel_blocks.append(pixels)
        label_blocks.append(labels)
    pixels = np.concatenate(pixel_blocks)
    images = pixels.astype(np.float64) / 127.5 - 1.0
    return ImageDataset(images, np.concatenate(label_blocks), split)


def encode_cifar10(images: np.ndarray, labels: np.ndarray) -> bytes:
    """Inverse of the loader's byte mapping, for round-trip checks."""
    pixels = np.clip(np.round((images + 1.0) * 127.5), 0, 255).astype(np.uint8)
    records = np.empty((images.shape[0], RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = pixels.reshape(images.shape[0], -1)
    return records.tobytes()


def default_data_dir() -> Path | None:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    local = Path("data") / "cifar-10-batches-bin"
    return local if local.is_dir() else None


def split_train_val(
    ds: ImageDataset, fraction: float = 0.2, seed: int = 0
) -> tuple[ImageDataset, ImageDataset]:
    """Seed-deterministic shuffle, then carve off `fraction` as validation."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("validation fraction must be in (0, 1)")
    n = len(ds)
    perm = seeded_rng(seed).permutation(n)
    n_val = int(round(n * fraction))
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    def pick(idx, tag):
        return ImageDataset(
            ds.images[idx],
            None if ds.labels is None else ds.labels[idx],
            tag,
        )

    return pick(train_idx, "train"), pick(val_idx, "val")


def batches(
    ds: ImageDataset, batch_size: int = 64, seed: int = 0, epoch: int = 0
) -> Iterator[np.ndarray]:
    """Reshuffled every epoch, keyed by (seed, epoch); keeps the last
    partial batch."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, epoch))))
    order = rng.permutation(len(ds))
    for lo in range(0, len(ds), batch_size):
        yield ds.images[order[lo : lo + batch_size]]


def synthetic_dataset(count: int, seed: int = 0) -> ImageDataset:
    """Smooth random images: per channel, a sum of three random 2-D
    sinusoids, clipped to [-1, 1]."""
    rng = seeded_rng(seed)
    c, h, w = IMAGE_SHAPE
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    images = np.empty((count, c, h, w))
    for i in range(count):
        for ch in range(c):
            img = np.zeros((h, w))
            for _ in range(3):
                fy, fx = rng.uniform(0.5, 3.0, size=2)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                amp = rng.uniform(0.2, 0.5)
                img += amp * np.sin(2.0 * np.pi * (fy * yy + fx * xx) / h + phase)
            images[i, ch] = img
    np.clip(images, -1.0, 1.0, out=images)
    return ImageDataset(images, None, "synthetic")
