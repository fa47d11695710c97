"""Micro-benchmark of the kernel backends on synthetic scenes."""

from __future__ import annotations

import time

import numpy as np

from .gaussians import GaussianCloud, logit
from .geometry import ScannerConfig, extrinsic_from_angle, intrinsic_from_config
from .rasterizer import render, render_backward
from .rasterizer.backend import active_backend, available_backends, set_backend


def _scene(n: int, rng: np.random.Generator) -> tuple[GaussianCloud, ScannerConfig]:
    sc = ScannerConfig(1000.0, 1500.0, 128, 128, 1.5)
    cloud = GaussianCloud(
        positions=rng.uniform(-45, 45, (n, 3)),
        rotations=rng.normal(size=(n, 4)),
        log_scales=np.log(rng.uniform(2.0, 6.0, (n, 3))),
        raw_opacities=np.full(n, logit(0.2)),
        features=rng.uniform(-0.5, 0.5, (n, 16)),
    )
    return cloud, sc


def run_benchmark(sizes=(256, 1024, 4096), repeats: int = 3, seed: int = 0) -> list[dict]:
    """Time forward+backward per backend; returns one row per (size, backend)."""
    rng = np.random.default_rng(seed)
    rows = []
    previous = active_backend()
    try:
        for n in sizes:
            cloud, sc = _scene(n, rng)
            ext = extrinsic_from_angle(sc, 0.7)
            intr = intrinsic_from_config(sc)
            shape = (sc.detector_height, sc.detector_width)
            upstream = np.ones(shape)
            for backend in available_backends():
                set_backend(backend)
                render(cloud, ext, intr, shape)  # warm-up / JIT-free sanity
                fwd = bwd = float("inf")
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    proj, splats = render(cloud, ext, intr, shape)
                    t1 = time.perf_counter()
                    render_backward(cloud, splats, upstream)
                    t2 = time.perf_counter()
                    fwd = min(fwd, t1 - t0)
                    bwd = min(bwd, t2 - t1)
                rows.append(
                    {
                        "n_gaussians": n,
                        "backend": backend,
                        "forward_ms": 1e3 * fwd,
                        "backward_ms": 1e3 * bwd,
                        "checksum": float(proj.pixels.sum()),
                    }
                )
    finally:
        set_backend(previous)
    return rows


def format_rows(rows: list[dict]) -> str:
    lines = ["n_gaussians\tbackend\tforward_ms\tbackward_ms"]
    for r in rows:
        lines.append(
            f"{r['n_gaussians']}\t{r['backend']}\t{r['forward_ms']:.2f}\t{r['backward_ms']:.2f}"
        )
    by_n: dict[int, dict[str, float]] = {}
    for r in rows:
        by_n.setdefault(r["n_gaussians"], {})[r["backend"]] = (
            r["forward_ms"] + r["backward_ms"]
        )
    for n, t in sorted(by_n.items()):
        if "compiled" in t and "python" in t:
            lines.append(f"# n={n}: compiled is {t['python'] / t['compiled']:.1f}x faster")
    return "\n".join(lines)
