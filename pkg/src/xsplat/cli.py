"""Command-line entry points: gen-data, train, render, eval, export, bench.

Flags override configuration-file values.  Angles are degrees on the
command line and radians internally.  The ``--threads`` flag (default from
``XSPLAT_NUM_THREADS``, else 1) is accepted for interface stability; the
current kernel backends are sequential, and single-thread runs are the
bit-reproducible mode the determinism guarantees refer to.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acui import init_alternative
from .bench import format_rows, run_benchmark
from .cloudio import export_viewer_ply, load_cloud
from .config import RunConfig, load_run_config
from .dataset import add_noise, load_dataset, make_projection_set, save_dataset
from .errors import XSplatError
from .phantom import make_phantom
from .rasterizer import active_backend, render_view
from .trainer import evaluate, train


def _default_threads() -> int:
    env = os.environ.get("XSPLAT_NUM_THREADS")
    try:
        return max(1, int(env)) if env else (os.cpu_count() or 1)
    except ValueError:
        return os.cpu_count() or 1


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.train.rng_seed = args.seed
    if getattr(args, "views", None) is not None:
        cfg.scanner["n_views"] = args.views
    if getattr(args, "noise", None) is not None:
        cfg.noise_level = args.noise
    if getattr(args, "iterations", None) is not None:
        cfg.train.iterations = args.iterations
    if getattr(args, "init", None) is not None:
        cfg.init = args.init
    if getattr(args, "n_features", None) is not None:
        cfg.n_features = args.n_features
        if cfg.basis_weights is not None and len(cfg.basis_weights) != args.n_features:
            cfg.basis_weights = None
    if getattr(args, "interval", None) is not None:
        cfg.cuboid.interval = args.interval
    if getattr(args, "gamma", None) is not None:
        cfg.train.gamma = args.gamma
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    scanner = cfg.scanner_config()
    phantom = make_phantom(
        cfg.phantom_list(), cfg.cuboid.grid, np.asarray(cfg.cuboid.extent) / np.asarray(cfg.cuboid.grid)
    )
    pset = make_projection_set(phantom, scanner)
    pset = add_noise(pset, cfg.noise_level, cfg.seed)
    save_dataset(pset, args.out)
    print(
        f"wrote {pset.n_views} projections ({pset.train_indices.size} train / "
        f"{pset.test_indices.size} test) to {args.out}"
    )
    print(f"normalization constant: {pset.normalization!r}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.threads > 1:
        print(
            "warning: kernels run sequentially; --threads > 1 has no effect",
            file=sys.stderr,
        )
    dataset = load_dataset(args.dataset)
    meta_phantom = dataset.phantom_spec
    if meta_phantom is not None:
        # The initialization cuboid must cover the scanned volume; trust the
        # dataset's own record of it over the config block.
        grid = tuple(meta_phantom["grid"])
        voxel = np.asarray(meta_phantom["voxel_size"])
        cfg.cuboid.extent = tuple(float(g * v) for g, v in zip(grid, voxel))
        cfg.cuboid.grid = grid
    cloud = init_alternative(
        cfg.init,
        cfg.cuboid,
        cfg.n_features,
        cfg.seed,
        basis_weights=cfg.resolved_basis_weights(),
    )
    print(
        f"initialized {cloud.n_points} Gaussians ({cfg.init}), N_f={cfg.n_features}, "
        f"backend={active_backend()}, threads={args.threads}"
    )
    result = train(dataset, cloud, cfg.train, out_dir=args.out, verbose=not args.quiet)
    final = result.metrics[-1] if result.metrics else {}
    print(
        f"finished {cfg.train.iterations} iterations; final test PSNR "
        f"{final.get('test_psnr')} dB, checkpoint in {args.out}"
    )
    return 0


def _write_pgm(path: Path, image: np.ndarray) -> None:
    arr = np.clip(image, 0.0, 1.0)
    data = (arr * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def cmd_render(args) -> int:
    angles_deg = [float(a) for a in args.angles.split(",") if a.strip()] if args.angles else []
    if not angles_deg:
        print("warning: no angles requested, nothing to do", file=sys.stderr)
        return 0
    cfg = _load_config(args)
    cloud = load_cloud(args.checkpoint)
    scanner = cfg.scanner_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for deg in angles_deg:
        proj, _ = render_view(cloud, scanner, np.deg2rad(deg))
        stem = out / f"render_{deg:07.2f}deg"
        _write_pgm(Path(f"{stem}.pgm"), proj.pixels)
        Path(f"{stem}.f32").write_bytes(
            np.ascontiguousarray(proj.pixels, dtype="<f4").tobytes()
        )
        print(f"rendered {deg:.2f} deg -> {stem}.pgm")
    return 0


def cmd_eval(args) -> int:
    cloud = load_cloud(args.checkpoint)
    dataset = load_dataset(args.dataset)
    splits = {
        "train": [("train", dataset.train_indices)],
        "test": [("test", dataset.test_indices)],
        "both": [
            ("train", dataset.train_indices),
            ("test", dataset.test_indices),
        ],
    }[args.split]
    payload = {}
    for name, indices in splits:
        report = evaluate(cloud, dataset, indices, use_clean=not args.noisy_reference)
        payload[name] = {
            "psnr": report.psnr,
            "ssim": report.ssim,
            "per_view": report.per_view,
        }
        if not args.json:
            print(f"== {name} split ==")
            print(report.as_table())
    if args.json:
        print(json.dumps(payload, indent=2))
    return 0


def cmd_export(args) -> int:
    cloud = load_cloud(args.checkpoint)
    export_viewer_ply(cloud, args.out)
    print(f"exported {cloud.n_points} points to {args.out}")
    return 0


def cmd_bench(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    print(format_rows(run_benchmark(sizes=sizes, repeats=args.repeats, seed=args.seed or 0)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xsplat",
        description="Radiative Gaussian splatting for X-ray novel view synthesis",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=False, checkpoint=False, out=True):
        p.add_argument("--config", help="JSON run configuration; flags override it")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument(
            "--threads",
            type=int,
            default=_default_threads(),
            help="worker threads (kernels are currently sequential; 1 = reproducible)",
        )
        if dataset:
            p.add_argument("--dataset", required=True, help="dataset directory")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="cloud checkpoint (.ply)")
        if out:
            p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("gen-data", help="generate a synthetic phantom dataset")
    common(p)
    p.add_argument("--views", type=int, help="number of projection angles")
    p.add_argument("--noise", type=float, help="noise level as a fraction of max intensity")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="optimize a cloud against a dataset")
    common(p, dataset=True)
    p.add_argument("--iterations", type=int, help="override training iterations")
    p.add_argument("--init", choices=("cuboid", "random", "spherical"), help="center init strategy")
    p.add_argument("--n-features", type=int, dest="n_features", help="feature vector length")
    p.add_argument("--interval", type=int, help="lattice sampling interval (voxels)")
    p.add_argument("--gamma", type=float, help="SSIM weight in the loss")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render a checkpoint at given angles")
    common(p, checkpoint=True)
    p.add_argument("--angles", required=True, help="comma-separated azimuths in degrees")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint against a dataset")
    common(p, dataset=True, checkpoint=True, out=False)
    p.add_argument("--split", choices=("train", "test", "both"), default="test")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument(
        "--noisy-reference",
        action="store_true",
        help="compare against the captured (noisy) images instead of the clean ones",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="export a checkpoint for point-cloud viewers")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bench", help="compare kernel backends")
    p.add_argument("--sizes", default="256,1024,4096", help="comma-separated cloud sizes")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except XSplatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
