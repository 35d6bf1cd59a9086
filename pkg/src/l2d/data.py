"""IDX ingestion, pixel preprocessing and synthetic target-domain shifts.

Images are stored as (N, 3, 32, 32) float arrays in [-1, 1]. Grayscale
sources are resized to 32x32 and triplicated across the color channels.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import checkpoint
from .utils import substream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIZE = 32


class IDXError(ValueError):
    pass


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    n_classes: int = 10
    name: str = "source"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"{self.name}: images must be (N, C, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{self.name}: {len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"{self.name}: labels outside [0, {self.n_classes})")
        if self.images.size and (self.images.min() < -1.0 or self.images.max() > 1.0):
            raise ValueError(f"{self.name}: pixel values outside [-1, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index, name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(self.images[index], self.labels[index], self.n_classes, name or self.name)

    def replace(self, images: np.ndarray, name: str) -> "LabeledDataset":
        return LabeledDataset(images, self.labels.copy(), self.n_classes, name)


# -- IDX -----------------------------------------------------------------

_IDX_DTYPES = {0x08: np.uint8, 0x09: np.int8, 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    """Parse an IDX file (optionally gzip-compressed) into an array."""
    path = Path(path)
    try:
        with _open(path) as fh:
            payload = fh.read()
    except OSError as exc:
        raise IDXError(f"{path}: cannot read ({exc})") from exc
    if len(payload) < 4:
        raise IDXError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", payload[:4])
    if expected_magic is not None and magic != expected_magic:
        raise IDXError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    zero, code, ndim = magic >> 16, (magic >> 8) & 0xFF, magic & 0xFF
    if zero != 0 or code not in _IDX_DTYPES or ndim == 0:
        raise IDXError(f"{path}: invalid IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(payload) < header:
        raise IDXError(f"{path}: truncated dimension header")
    shape = struct.unpack(f">{ndim}I", payload[4:header])
    dtype = np.dtype(_IDX_DTYPES[code])
    expected = int(np.prod(shape)) * dtype.itemsize
    body = payload[header:]
    if len(body) != expected:
        raise IDXError(f"{path}: expected {expected} data bytes for shape {shape}, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(shape)


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (gzip-compressed when the name ends in .gz)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("write_idx only emits unsigned-byte IDX files")
    payload = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)


def preprocess(raw: np.ndarray) -> np.ndarray:
    """uint8 (N, H, W) grayscale -> (N, 3, 32, 32) float in [-1, 1].

    Bilinear resize with half-pixel centers, channel triplication, then the
    affine map ``p / 127.5 - 1``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3:
        raise ValueError(f"expected (N, H, W) grayscale images, got {raw.shape}")
    n, h, w = raw.shape
    if (h, w) != (IMAGE_SIZE, IMAGE_SIZE):
        zoom = (1.0, IMAGE_SIZE / h, IMAGE_SIZE / w)
        raw = ndimage.zoom(raw, zoom, order=1, mode="nearest", grid_mode=True)
    scaled = np.clip(raw / 127.5 - 1.0, -1.0, 1.0)
    return np.repeat(scaled[:, None], 3, axis=1)


def load_idx(image_path, label_path, limit: int | None = None, name: str = "mnist") -> LabeledDataset:
    images = read_idx(image_path, IMAGE_MAGIC)
    labels = read_idx(label_path, LABEL_MAGIC)
    if images.ndim != 3 or labels.ndim != 1:
        raise IDXError(f"{image_path}: expected 3-D images and 1-D labels, got {images.shape} and {labels.shape}")
    if len(images) != len(labels):
        raise IDXError(f"{image_path} has {len(images)} images but {label_path} has {len(labels)} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    n_classes = max(10, int(labels.max()) + 1) if len(labels) else 10
    return LabeledDataset(preprocess(images), labels.astype(np.int64), n_classes, name)


def save_cache(path, dataset: LabeledDataset) -> None:
    checkpoint.save(path, {"images": dataset.images, "labels": dataset.labels.astype(np.float64),
                           "n_classes": np.array(dataset.n_classes, dtype=float)})


def load_cache(path, name: str = "cached") -> LabeledDataset:
    arrays = checkpoint.load(path)
    return LabeledDataset(arrays["images"], arrays["labels"].astype(np.int64), int(arrays["n_classes"]), name)


# -- shifts ---------------------------------------------------------------

FAMILY_KINDS = {
    "noise": ("gaussian",),
    "blur": ("gaussian",),
    "weather": ("fog",),
    "digital": ("pixelate", "contrast", "invert"),
}

# index 0 is the identity extension; 1..5 are the severity levels
SEVERITY_TABLES = {
    ("noise", "gaussian"): (0.0, 0.04, 0.08, 0.12, 0.18, 0.26),  # additive sigma on the [-1, 1] scale
    ("blur", "gaussian"): (0.0, 0.5, 0.8, 1.1, 1.5, 2.0),  # kernel sigma in pixels
    ("weather", "fog"): (0.0, 0.15, 0.25, 0.35, 0.45, 0.55),  # fog blend weight
    ("digital", "pixelate"): (32, 26, 20, 16, 12, 9),  # intermediate resolution
    ("digital", "contrast"): (1.0, 0.8, 0.6, 0.45, 0.3, 0.2),  # contrast factor
}


@dataclass(frozen=True)
class ShiftSpec:
    family: str
    severity: int
    kind: str | None = None
    params: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.family not in FAMILY_KINDS:
            raise ValueError(f"unknown shift family {self.family!r}; expected one of {sorted(FAMILY_KINDS)}")
        kind = self.kind or FAMILY_KINDS[self.family][0]
        if kind not in FAMILY_KINDS[self.family]:
            raise ValueError(f"family {self.family!r} has no kind {kind!r}")
        object.__setattr__(self, "kind", kind)
        if not 0 <= int(self.severity) <= 5:
            raise ValueError(f"severity must be in [0, 5], got {self.severity}")
        table = SEVERITY_TABLES.get((self.family, kind), ())
        object.__setattr__(self, "params", tuple(table))

    @property
    def value(self):
        """The family parameter for this severity (None for parameter-free kinds)."""
        return self.params[self.severity] if self.params else None

    @property
    def label(self) -> str:
        # a kind shared by several families (gaussian) is named after its family
        shared = sum(self.kind in kinds for kinds in FAMILY_KINDS.values()) > 1
        return f"{self.family if shared else self.kind}-s{self.severity}"


def _smooth_field(rng, n, channels, cells=4):
    coarse = rng.uniform(-1.0, 1.0, (n, channels, cells, cells))
    return ndimage.zoom(coarse, (1, 1, IMAGE_SIZE / cells, IMAGE_SIZE / cells), order=1, grid_mode=True, mode="nearest")


def shift_images(images: np.ndarray, spec: ShiftSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.severity == 0:
        return images.copy()
    x = images
    v = spec.value
    if spec.family == "noise":
        out = x + rng.normal(0.0, v, x.shape)
    elif spec.family == "blur":
        out = ndimage.gaussian_filter(x, sigma=(0, 0, v, v), mode="nearest")
    elif spec.family == "weather":
        fog = _smooth_field(rng, len(x), 1, cells=4) * 0.5 + 0.5
        out = (1.0 - v) * x + v * fog
    elif spec.kind == "pixelate":
        small = ndimage.zoom(x, (1, 1, v / IMAGE_SIZE, v / IMAGE_SIZE), order=1, grid_mode=True, mode="nearest")
        out = ndimage.zoom(small, (1, 1, IMAGE_SIZE / v, IMAGE_SIZE / v), order=0, grid_mode=True, mode="nearest")
    elif spec.kind == "contrast":
        mean = x.mean(axis=(1, 2, 3), keepdims=True)
        out = (x - mean) * v + mean
    else:  # invert
        out = -x
    return np.clip(out, -1.0, 1.0)


def apply_shift(dataset: LabeledDataset, spec: ShiftSpec, seed: int = 0) -> LabeledDataset:
    """Label-preserving corruption of every image; deterministic per ``seed``."""
    rng = substream(seed, f"shift:{spec.family}:{spec.kind}:{spec.severity}")
    return dataset.replace(shift_images(dataset.images, spec, rng), f"{dataset.name}/{spec.label}")


def colored_background(dataset: LabeledDataset, seed: int = 0) -> LabeledDataset:
    """Blend each digit over a random smooth color patch, digit in the complementary color."""
    rng = substream(seed, "shift:colored")
    x = dataset.images
    alpha = (x.mean(axis=1, keepdims=True) + 1.0) / 2.0  # digit intensity in [0, 1]
    background = _smooth_field(rng, len(x), 3, cells=rng.integers(2, 6))
    foreground = -background
    out = alpha * foreground + (1.0 - alpha) * background
    return dataset.replace(np.clip(out, -1.0, 1.0), f"{dataset.name}/colored")


EVAL_SUITE = ("inverted", "colored", "noise-s3", "blur-s3", "pixelate-s3")


def make_eval_suite(source: LabeledDataset, seed: int = 0) -> list[LabeledDataset]:
    """Fixed list of shifted target domains built from ``source``."""
    suite = [
        apply_shift(source, ShiftSpec("digital", 5, "invert"), seed),
        colored_background(source, seed),
        apply_shift(source, ShiftSpec("noise", 3), seed),
        apply_shift(source, ShiftSpec("blur", 3), seed),
        apply_shift(source, ShiftSpec("digital", 3, "pixelate"), seed),
    ]
    for name, ds in zip(EVAL_SUITE, suite):
        ds.name = name
    return suite


def split(dataset: LabeledDataset, n_train: int, n_eval: int, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Disjoint random train / held-out subsets drawn with the ``data`` stream."""
    if n_train + n_eval > len(dataset):
        raise ValueError(f"requested {n_train} + {n_eval} images from a dataset of {len(dataset)}")
    order = substream(seed, "data").permutation(len(dataset))
    return (dataset.subset(order[:n_train], "source-train"),
            dataset.subset(order[n_train : n_train + n_eval], "source"))
