"""Projection datasets: normalization, train/test split, noise, disk format.

A dataset directory holds a ``meta.json`` plus one flat little-endian
float32 file per view: ``proj_0000.f32`` (the captured image, noisy once
noise is applied) and ``clean_0000.f32`` (the noise-free reference used for
held-out evaluation).  Pixels are row-major, detector_height rows of
detector_width.  Images are stored as float32 in memory too, so a save/load
round trip is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DatasetError, InvalidParameterError
from .geometry import ScannerConfig
from .phantom import DEFAULT_NOISE_LEVEL, VoxelPhantom, project_all

META_NAME = "meta.json"
FORMAT_VERSION = 1


@dataclass
class ProjectionSet:
    """Normalized projections for one scan, with an alternating view split."""

    images: np.ndarray  # (n, H, W) float32, the captured (possibly noisy) data
    clean_images: np.ndarray  # (n, H, W) float32, before noise
    scanner: ScannerConfig
    train_indices: np.ndarray
    test_indices: np.ndarray
    normalization: float  # raw global max the clean set was divided by
    noise_level: float = 0.0
    noise_seed: int | None = None
    phantom_spec: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.clean_images = np.ascontiguousarray(self.clean_images, dtype=np.float32)
        self.train_indices = np.asarray(self.train_indices, dtype=np.int64)
        self.test_indices = np.asarray(self.test_indices, dtype=np.int64)
        n = len(self.scanner.angles)
        if self.images.shape != self.clean_images.shape or self.images.shape[0] != n:
            raise InvalidParameterError(
                f"image stack {self.images.shape} inconsistent with {n} angles"
            )
        if np.intersect1d(self.train_indices, self.test_indices).size:
            raise InvalidParameterError("train and test splits overlap")

    @property
    def n_views(self) -> int:
        return self.images.shape[0]

    @property
    def angles(self) -> np.ndarray:
        return self.scanner.angles

    def view(self, i: int) -> tuple[float, np.ndarray]:
        return float(self.angles[i]), self.images[i]


def make_projection_set(ph: VoxelPhantom, scanner: ScannerConfig) -> ProjectionSet:
    """Project every angle, normalize by the global max, split alternately.

    Even view indices train, odd test, so both splits sample the full
    angular range.
    """
    raw = project_all(ph, scanner)
    peak = float(raw.max())
    if peak <= 0:
        raise InvalidParameterError("phantom projects to an all-zero set")
    images = (raw / peak).astype(np.float32)
    idx = np.arange(raw.shape[0])
    return ProjectionSet(
        images=images,
        clean_images=images.copy(),
        scanner=scanner,
        train_indices=idx[idx % 2 == 0],
        test_indices=idx[idx % 2 == 1],
        normalization=peak,
        phantom_spec={
            "primitives": [p.to_dict() for p in ph.primitives],
            "grid": list(ph.grid),
            "voxel_size": ph.voxel_size.tolist(),
        },
    )


def add_noise(
    pset: ProjectionSet, level: float = DEFAULT_NOISE_LEVEL, seed: int = 0
) -> ProjectionSet:
    """Additive Gaussian noise, sigma = level * global max, clamped to >= 0.

    Applies to the captured images only; the clean stack is preserved for
    evaluation.  level 0 returns an identical set.
    """
    if level < 0:
        raise InvalidParameterError(f"noise level must be >= 0, got {level}")
    if level == 0:
        return replace(pset)
    rng = np.random.default_rng(seed)
    sigma = level * float(pset.images.max())
    noisy = pset.images.astype(np.float64) + rng.normal(
        0.0, sigma, size=pset.images.shape
    )
    return replace(
        pset,
        images=np.maximum(noisy, 0.0).astype(np.float32),
        noise_level=float(level),
        noise_seed=int(seed),
    )


def _pixel_path(root: Path, prefix: str, i: int) -> Path:
    return root / f"{prefix}_{i:04d}.f32"


def save_dataset(pset: ProjectionSet, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "scanner": pset.scanner.to_dict(),
        "detector_shape": [int(s) for s in pset.images.shape[1:]],
        "train_indices": pset.train_indices.tolist(),
        "test_indices": pset.test_indices.tolist(),
        "normalization": pset.normalization,
        "noise_level": pset.noise_level,
        "noise_seed": pset.noise_seed,
        "phantom": pset.phantom_spec,
    }
    (root / META_NAME).write_text(json.dumps(meta, indent=2) + "\n")
    for i in range(pset.n_views):
        _pixel_path(root, "proj", i).write_bytes(
            np.ascontiguousarray(pset.images[i], dtype="<f4").tobytes()
        )
        _pixel_path(root, "clean", i).write_bytes(
            np.ascontiguousarray(pset.clean_images[i], dtype="<f4").tobytes()
        )


def _read_stack(root: Path, prefix: str, n: int, h: int, w: int) -> np.ndarray:
    out = np.empty((n, h, w), dtype=np.float32)
    for i in range(n):
        f = _pixel_path(root, prefix, i)
        if not f.exists():
            raise DatasetError(f"missing pixel file {f}")
        buf = f.read_bytes()
        if len(buf) != h * w * 4:
            raise DatasetError(
                f"size mismatch in {f}: expected {h * w * 4} bytes, found {len(buf)}"
            )
        out[i] = np.frombuffer(buf, dtype="<f4").reshape(h, w)
    return out


def load_dataset(path) -> ProjectionSet:
    root = Path(path)
    meta_path = root / META_NAME
    if not meta_path.exists():
        raise DatasetError(f"missing metadata file {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"corrupt metadata file {meta_path}: {e}") from e
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetError(
            f"unsupported dataset format version {meta.get('format_version')!r}"
        )
    scanner = ScannerConfig.from_dict(meta["scanner"])
    n = len(scanner.angles)
    n_files = len(list(root.glob("proj_*.f32")))
    if n_files != n:
        raise DatasetError(
            f"metadata lists {n} angles but {root} holds {n_files} projection files"
        )
    h, w = meta["detector_shape"]
    return ProjectionSet(
        images=_read_stack(root, "proj", n, h, w),
        clean_images=_read_stack(root, "clean", n, h, w),
        scanner=scanner,
        train_indices=np.array(meta["train_indices"], dtype=np.int64),
        test_indices=np.array(meta["test_indices"], dtype=np.int64),
        normalization=float(meta["normalization"]),
        noise_level=float(meta["noise_level"]),
        noise_seed=meta["noise_seed"],
        phantom_spec=meta.get("phantom"),
    )
