"""Run configuration: one JSON file describing a whole experiment.

Validation is strict and happens before any compute or output: unknown keys
anywhere in the document are rejected, so typos fail fast instead of
silently falling back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acui import CuboidSpec
from .errors import ConfigError, InvalidParameterError
from .geometry import ScannerConfig, equal_interval_angles
from .phantom import default_phantom_primitives, primitive_from_dict
from .trainer import TrainConfig

INIT_STRATEGIES = ("cuboid", "random", "spherical")


@dataclass
class RunConfig:
    """Aggregated, validated experiment description."""

    seed: int = 0
    n_features: int = 16
    basis_weights: list | None = None  # None -> all-ones vector of length n_features
    init: str = "cuboid"
    scanner: dict = field(default_factory=lambda: dict(DEFAULT_SCANNER))
    cuboid: CuboidSpec = field(
        default_factory=lambda: CuboidSpec(extent=(100.0, 100.0, 100.0), grid=(64, 64, 64))
    )
    phantom_primitives: list | None = None  # None -> default layout
    noise_level: float = 0.03
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset_dir: str | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")
        if self.init not in INIT_STRATEGIES:
            raise ConfigError(f"init must be one of {INIT_STRATEGIES}, got {self.init!r}")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")
        if self.basis_weights is not None and len(self.basis_weights) != self.n_features:
            raise ConfigError(
                f"basis_weights has {len(self.basis_weights)} entries, n_features is "
                f"{self.n_features}"
            )
        unknown = set(self.scanner) - set(DEFAULT_SCANNER)
        if unknown:
            raise ConfigError(f"unknown scanner keys: {sorted(unknown)}")
        merged = dict(DEFAULT_SCANNER)
        merged.update(self.scanner)
        self.scanner = merged
        if self.scanner["n_views"] < 1:
            raise ConfigError("scanner.n_views must be >= 1")
        # Fail now, not at compute time, if the geometry is inconsistent.
        self.scanner_config()

    def resolved_basis_weights(self) -> np.ndarray:
        if self.basis_weights is None:
            return np.ones(self.n_features)
        return np.asarray(self.basis_weights, dtype=np.float64)

    def scanner_config(self) -> ScannerConfig:
        s = self.scanner
        try:
            return ScannerConfig(
                source_object_distance=float(s["source_object_distance"]),
                source_detector_distance=float(s["source_detector_distance"]),
                detector_width=int(s["detector_width"]),
                detector_height=int(s["detector_height"]),
                pixel_pitch=float(s["pixel_pitch"]),
                angles=equal_interval_angles(int(s["n_views"])),
            )
        except InvalidParameterError as e:
            raise ConfigError(f"invalid scanner block: {e}") from e

    def phantom_list(self) -> list:
        if self.phantom_primitives is None:
            return default_phantom_primitives(self.cuboid.extent)
        return [primitive_from_dict(p) for p in self.phantom_primitives]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_features": self.n_features,
            "basis_weights": self.basis_weights,
            "init": self.init,
            "scanner": dict(self.scanner),
            "cuboid": self.cuboid.to_dict(),
            "phantom": {
                "primitives": self.phantom_primitives,
                "noise_level": self.noise_level,
            },
            "train": self.train.to_dict(),
            "paths": {"dataset": self.dataset_dir, "output": self.output_dir},
        }


DEFAULT_SCANNER = {
    "source_object_distance": 1000.0,
    "source_detector_distance": 1500.0,
    "detector_width": 64,
    "detector_height": 64,
    "pixel_pitch": 3.0,
    "n_views": 100,
}

_TOP_KEYS = {
    "seed",
    "n_features",
    "basis_weights",
    "init",
    "scanner",
    "cuboid",
    "phantom",
    "train",
    "paths",
}


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    kwargs: dict = {}
    for key in ("seed", "n_features", "basis_weights", "init"):
        if key in doc:
            kwargs[key] = doc[key]
    if "scanner" in doc:
        kwargs["scanner"] = dict(doc["scanner"])
    if "cuboid" in doc:
        cub = dict(doc["cuboid"])
        unknown = set(cub) - {"extent", "grid", "interval"}
        if unknown:
            raise ConfigError(f"unknown cuboid keys: {sorted(unknown)}")
        try:
            kwargs["cuboid"] = CuboidSpec.from_dict(cub)
        except (KeyError, InvalidParameterError) as e:
            raise ConfigError(f"invalid cuboid block: {e}") from e
    if "phantom" in doc:
        ph = dict(doc["phantom"])
        unknown = set(ph) - {"primitives", "noise_level"}
        if unknown:
            raise ConfigError(f"unknown phantom keys: {sorted(unknown)}")
        kwargs["phantom_primitives"] = ph.get("primitives")
        if "noise_level" in ph:
            kwargs["noise_level"] = float(ph["noise_level"])
    if "train" in doc:
        try:
            kwargs["train"] = TrainConfig.from_dict(doc["train"])
        except (TypeError, InvalidParameterError) as e:
            raise ConfigError(f"invalid train block: {e}") from e
    if "paths" in doc:
        paths = dict(doc["paths"])
        unknown = set(paths) - {"dataset", "output"}
        if unknown:
            raise ConfigError(f"unknown paths keys: {sorted(unknown)}")
        kwargs["dataset_dir"] = paths.get("dataset")
        kwargs["output_dir"] = paths.get("output")
    try:
        return RunConfig(**kwargs)
    except (TypeError, InvalidParameterError) as e:
        raise ConfigError(str(e)) from e


def load_run_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"configuration file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON: {e}") from e
    return run_config_from_dict(doc)


def save_run_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
