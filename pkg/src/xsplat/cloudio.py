"""Checkpoint serialization for Gaussian clouds.

Checkpoints are PLY files (binary little-endian) with one ``vertex`` element
per Gaussian and double-precision properties

    x y z q0 q1 q2 q3 s0 s1 s2 raw_opacity f_0 ... f_{n-1}

The header carries ``comment n_features <k>`` and ``comment basis_weights
<w0> <w1> ...`` lines; weights are written with ``repr`` so the float64 bit
pattern survives a round trip.  Save followed by load is bit-exact.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DatasetError
from .gaussians import GaussianCloud

_MAGIC = b"ply"


def _property_names(n_features: int) -> list[str]:
    names = ["x", "y", "z", "q0", "q1", "q2", "q3", "s0", "s1", "s2", "raw_opacity"]
    names += [f"f_{k}" for k in range(n_features)]
    return names


def save_cloud(cloud: GaussianCloud, path: str | os.PathLike):
    """Write a cloud checkpoint; see the module docstring for the layout."""
    nf = cloud.n_features
    names = _property_names(nf)
    data = np.concatenate(
        [
            cloud.positions,
            cloud.rotations,
            cloud.log_scales,
            cloud.raw_opacities[:, None],
            cloud.features,
        ],
        axis=1,
    )
    header = ["ply", "format binary_little_endian 1.0"]
    header.append(f"comment n_features {nf}")
    # repr of a Python float round-trips the exact bit pattern; numpy scalar
    # reprs ("np.float64(...)") would not parse back.
    header.append(
        "comment basis_weights " + " ".join(repr(float(w)) for w in cloud.basis_weights)
    )
    header.append(f"element vertex {cloud.n_points}")
    header += [f"property double {name}" for name in names]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def load_cloud(path: str | os.PathLike) -> GaussianCloud:
    """Read a checkpoint written by :func:`save_cloud`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_MAGIC):
        raise DatasetError(f"{path}: not a PLY file")
    end_marker = b"end_header\n"
    pos = blob.find(end_marker)
    if pos < 0:
        raise DatasetError(f"{path}: missing end_header")
    header_lines = blob[:pos].decode("ascii").splitlines()
    body = blob[pos + len(end_marker):]

    n_vertices = None
    n_features = None
    weights = None
    properties: list[str] = []
    for line in header_lines:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "element" and parts[1] == "vertex":
            n_vertices = int(parts[2])
        elif parts[0] == "property":
            if parts[1] != "double":
                raise DatasetError(f"{path}: unsupported property type {parts[1]}")
            properties.append(parts[2])
        elif parts[0] == "comment" and len(parts) >= 2 and parts[1] == "n_features":
            n_features = int(parts[2])
        elif parts[0] == "comment" and len(parts) >= 2 and parts[1] == "basis_weights":
            weights = np.array([float(w) for w in parts[2:]])
    if n_vertices is None or n_features is None or weights is None:
        raise DatasetError(f"{path}: header missing vertex count, n_features or basis_weights")
    expected = _property_names(n_features)
    if properties != expected:
        raise DatasetError(f"{path}: property list does not match the checkpoint schema")
    width = len(expected)
    need = n_vertices * width * 8
    if len(body) < need:
        raise DatasetError(f"{path}: body holds {len(body)} bytes, expected {need}")
    data = np.frombuffer(body[:need], dtype="<f8").reshape(n_vertices, width)
    return GaussianCloud(
        positions=data[:, 0:3],
        rotations=data[:, 3:7],
        log_scales=data[:, 7:10],
        raw_opacities=data[:, 10],
        features=data[:, 11:],
        basis_weights=weights,
    )


def export_viewer_ply(cloud: GaussianCloud, path: str | os.PathLike):
    """Write a float32 PLY digestible by standard point-cloud viewers.

    Properties: position, per-Gaussian radiation intensity, opacity, and the
    mean scale in mm.  This is a lossy export; use :func:`save_cloud` for
    checkpoints.
    """
    intens = cloud.intensities()
    opac = cloud.opacities
    mean_scale = np.exp(cloud.log_scales).mean(axis=1)
    data = np.column_stack([cloud.positions, intens, opac, mean_scale]).astype("<f4")
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {cloud.n_points}",
        "property float x",
        "property float y",
        "property float z",
        "property float intensity",
        "property float opacity",
        "property float mean_scale",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(data).tobytes())
