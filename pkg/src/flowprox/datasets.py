"""Seeded target-distribution generators and a bit-exact MNIST IDX reader.

All generators run on Philox streams (see :mod:`flowprox.rng`), so a seed
identifies the same cloud on every platform.
"""

import struct
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .rng import make_rng
from .transport import PointCloud

__all__ = [
    "GaussianSpec",
    "CircleSpec",
    "TwoMoonsSpec",
    "LineManifoldSpec",
    "MnistSpec",
    "DatasetSpec",
    "sample",
    "load_mnist_idx",
    "write_mnist_idx",
    "dataset_from_config",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class GaussianSpec:
    """m + cov_sqrt @ z with z ~ N(0, I)."""

    mean: np.ndarray
    cov_sqrt: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        s = np.asarray(self.cov_sqrt, dtype=float)
        if s.shape != (m.shape[0], m.shape[0]):
            raise ValueError("cov_sqrt must be (d, d) matching mean")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov_sqrt", s)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class CircleSpec:
    """Uniform distribution on the circle of radius r."""

    r: float = 1.0
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("circle radius must be positive")


@dataclass(frozen=True)
class TwoMoonsSpec:
    """Two interleaved half-circles plus isotropic Gaussian noise.

    Standard benchmark construction: upper moon (cos a, sin a), lower moon
    (1 - cos a, 0.5 - sin a), a uniform on [0, pi].
    """

    noise: float = 0.05
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")


@dataclass(frozen=True)
class LineManifoldSpec:
    """N(0,1) x delta_c: first coordinate Gaussian, second pinned at c."""

    c: float = 0.0
    dim: int = field(default=2, init=False)


@dataclass(frozen=True)
class MnistSpec:
    images_path: str
    labels_path: str
    normalize: bool = True
    dim: int = field(default=784, init=False)


DatasetSpec = Union[GaussianSpec, CircleSpec, TwoMoonsSpec, LineManifoldSpec, MnistSpec]

_mnist_cache: dict = {}


def sample(spec: DatasetSpec, n: int, seed: int) -> PointCloud:
    """Draw n points from the target; deterministic given (spec, n, seed)."""
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = make_rng(seed, stream=11)
    if isinstance(spec, GaussianSpec):
        z = rng.standard_normal((n, spec.dim))
        pts = spec.mean[None, :] + z @ spec.cov_sqrt.T
    elif isinstance(spec, CircleSpec):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        pts = spec.r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    elif isinstance(spec, TwoMoonsSpec):
        theta = rng.uniform(0.0, np.pi, size=n)
        lower = rng.integers(0, 2, size=n).astype(bool)
        pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        pts[lower, 0] = 1.0 - pts[lower, 0]
        pts[lower, 1] = 0.5 - pts[lower, 1]
        if spec.noise > 0:
            pts = pts + spec.noise * rng.standard_normal((n, 2))
    elif isinstance(spec, LineManifoldSpec):
        u = rng.standard_normal(n)
        pts = np.stack([u, np.full(n, spec.c)], axis=1)
    elif isinstance(spec, MnistSpec):
        images, _ = load_mnist_idx(spec.images_path, spec.labels_path,
                                   normalize=spec.normalize)
        idx = rng.choice(images.n, size=n, replace=n > images.n)
        pts = images.points[np.sort(idx)]
    else:
        raise TypeError(f"unknown dataset spec: {type(spec).__name__}")
    return PointCloud(pts)


def _read_exact(fh, nbytes: int, offset: int, what: str) -> bytes:
    data = fh.read(nbytes)
    if len(data) != nbytes:
        raise ValueError(
            f"truncated IDX file: expected {nbytes} bytes for {what} at offset "
            f"{offset}, got {len(data)}")
    return data


def _load_idx_images_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = _read_exact(fh, 16, 0, "image header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IMAGE_MAGIC:
            raise ValueError(
                f"bad IDX image magic: expected 0x{IMAGE_MAGIC:08x}, found 0x{magic:08x}")
        payload = _read_exact(fh, count * rows * cols, 16, "image payload")
        if fh.read(1):
            raise ValueError("trailing bytes after IDX image payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def _load_idx_labels_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = _read_exact(fh, 8, 0, "label header")
        magic, count = struct.unpack(">II", header)
        if magic != LABEL_MAGIC:
            raise ValueError(
                f"bad IDX label magic: expected 0x{LABEL_MAGIC:08x}, found 0x{magic:08x}")
        payload = _read_exact(fh, count, 8, "label payload")
        if fh.read(1):
            raise ValueError("trailing bytes after IDX label payload")
    return np.frombuffer(payload, dtype=np.uint8)


def load_mnist_idx(images_path, labels_path, normalize: bool = True):
    """Parse big-endian IDX image/label files.

    Returns (images, labels) with images flattened to (n, rows*cols) and
    scaled to [0, 1] when ``normalize``.  Header magics, counts, and
    payload sizes are checked strictly.
    """
    key = (str(images_path), str(labels_path), normalize)
    if key in _mnist_cache:
        return _mnist_cache[key]
    raw = _load_idx_images_raw(images_path)
    labels = _load_idx_labels_raw(labels_path)
    if raw.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image/label count mismatch: {raw.shape[0]} vs {labels.shape[0]}")
    flat = raw.reshape(raw.shape[0], -1).astype(float)
    if normalize:
        flat /= 255.0
    result = (PointCloud(flat), [int(v) for v in labels])
    _mnist_cache[key] = result
    return result


def write_mnist_idx(images: np.ndarray, labels, images_path, labels_path) -> None:
    """Serialize uint8 images (n, rows, cols) and labels back to IDX bytes."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must be (n, rows, cols) uint8")
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    if labels.shape != (n,):
        raise ValueError("labels length must match image count")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, n))
        fh.write(labels.tobytes())


def dataset_from_config(cfg: dict) -> DatasetSpec:
    """Build a dataset spec from its JSON-config form."""
    kind = cfg.get("kind")
    known = {
        "gaussian": {"kind", "mean", "cov_sqrt"},
        "circle": {"kind", "r"},
        "two_moons": {"kind", "noise"},
        "line_manifold": {"kind", "c"},
        "mnist": {"kind", "images_path", "labels_path", "normalize"},
    }
    if kind not in known:
        raise ValueError(f"unknown dataset kind: {kind!r}")
    extra = set(cfg) - known[kind]
    if extra:
        raise ValueError(f"unknown dataset keys: {sorted(extra)}")
    if kind == "gaussian":
        mean = np.asarray(cfg["mean"], dtype=float)
        cov_sqrt = np.asarray(cfg.get("cov_sqrt", np.eye(mean.shape[0])), dtype=float)
        return GaussianSpec(mean=mean, cov_sqrt=cov_sqrt)
    if kind == "circle":
        return CircleSpec(r=float(cfg.get("r", 1.0)))
    if kind == "two_moons":
        return TwoMoonsSpec(noise=float(cfg.get("noise", 0.05)))
    if kind == "line_manifold":
        return LineManifoldSpec(c=float(cfg.get("c", 0.0)))
    return MnistSpec(images_path=cfg["images_path"], labels_path=cfg["labels_path"],
                     normalize=bool(cfg.get("normalize", True)))
