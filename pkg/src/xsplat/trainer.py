"""Cloud optimization: composite loss, per-attribute Adam, density control.

The training loop is a single logical thread: render one training view,
form the L1/SSIM loss and its pixel gradient, run the analytic backward
pass, apply one Adam step per attribute group, and periodically adapt the
number of Gaussians.  Everything is deterministic for a fixed seed; the
metrics log contains no timing columns so identical runs produce identical
bytes (wall time goes to the console instead).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .cloudio import save_cloud
from .dataset import ProjectionSet
from .errors import InvalidParameterError, TrainingDivergenceError, XSplatError
from .gaussians import GaussianCloud, logit
from .geometry import extrinsic_from_angle, intrinsic_from_config
from .metrics import MetricReport, psnr, ssim, ssim_and_gradient
from .rasterizer import RenderGradients, render, render_backward

PARAM_FIELDS = ("positions", "rotations", "log_scales", "raw_opacities", "features")


@dataclass
class TrainConfig:
    """All optimization hyperparameters, JSON-serializable."""

    iterations: int = 20_000
    # SSIM weight in the composite loss.  Off by default: against noisy
    # targets the SSIM term matches the clipped-noise background mean and
    # leaves a haze floor that caps held-out SSIM; pure L1 drives the
    # background to the noise median (zero) instead.
    gamma: float = 0.0
    lr_position_init: float = 1.9e-4
    lr_position_final: float = 1.9e-6
    lr_feature: float = 2e-3
    lr_opacity: float = 8e-3
    lr_scaling: float = 5e-3
    lr_rotation: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15
    densify_interval: int = 100
    densify_grad_threshold: float = 2e-5
    prune_opacity_threshold: float = 0.005
    densify_from_iter: int = 500
    densify_until_iter: int = 15_000
    split_factor: float = 1.6
    # None -> 1% of the initial cloud's spatial span.
    densify_size_threshold: float | None = None
    max_points: int = 500_000
    opacity_reset_interval: int = 0  # 0 disables periodic opacity clamping
    rng_seed: int = 0
    log_interval: int = 10
    eval_interval: int = 200
    checkpoint_iterations: tuple[int, ...] = ()

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must be in [0, 1], got {self.gamma}")
        for name in (
            "lr_position_init",
            "lr_position_final",
            "lr_feature",
            "lr_opacity",
            "lr_scaling",
            "lr_rotation",
        ):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1 or not self.eps > 0:
            raise InvalidParameterError("invalid Adam parameters")
        for name in ("densify_interval", "log_interval", "eval_interval"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
        if self.split_factor <= 1.0:
            raise InvalidParameterError("split_factor must be > 1")
        self.checkpoint_iterations = tuple(int(i) for i in self.checkpoint_iterations)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["checkpoint_iterations"] = list(self.checkpoint_iterations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise InvalidParameterError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


def position_learning_rate(cfg: TrainConfig, t: int) -> float:
    """Exponential decay from lr_position_init at t=0 to lr_position_final at t=T."""
    frac = t / cfg.iterations
    return cfg.lr_position_init * (cfg.lr_position_final / cfg.lr_position_init) ** frac


def loss(rendered, target, gamma: float) -> tuple[float, np.ndarray]:
    """Composite image loss (1-gamma)*L1 + gamma*(1-SSIM) and its pixel gradient."""
    img = np.asarray(getattr(rendered, "pixels", rendered), dtype=np.float64)
    ref = np.asarray(getattr(target, "pixels", target), dtype=np.float64)
    if img.shape != ref.shape:
        raise InvalidParameterError(f"shape mismatch {img.shape} vs {ref.shape}")
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParameterError(f"gamma must be in [0, 1], got {gamma}")
    diff = img - ref
    l1 = float(np.mean(np.abs(diff)))
    grad = (1.0 - gamma) * np.sign(diff) / diff.size
    if gamma == 0.0:
        return l1, grad
    s, ds = ssim_and_gradient(img, ref)
    return (1.0 - gamma) * l1 + gamma * (1.0 - s), grad - gamma * ds


class OptimizerState:
    """Adam moments per attribute group plus a shared step counter.

    Shapes always mirror the cloud; densification events rebuild the moment
    arrays congruently (zeros for newborn Gaussians).
    """

    def __init__(self, cloud: GaussianCloud):
        self.step = 0
        self.exp_avg = {f: np.zeros_like(getattr(cloud, f)) for f in PARAM_FIELDS}
        self.exp_avg_sq = {f: np.zeros_like(getattr(cloud, f)) for f in PARAM_FIELDS}

    def check_congruent(self, cloud: GaussianCloud) -> None:
        for f in PARAM_FIELDS:
            if self.exp_avg[f].shape != getattr(cloud, f).shape:
                raise InvalidParameterError(
                    f"optimizer state for {f} has shape {self.exp_avg[f].shape}, "
                    f"cloud has {getattr(cloud, f).shape}"
                )


def adam_step(
    cloud: GaussianCloud,
    grads: RenderGradients,
    state: OptimizerState,
    lr_table: dict[str, float],
    cfg: TrainConfig,
) -> None:
    """One Adam update per attribute group, in place; quaternions re-normalized."""
    state.check_congruent(cloud)
    state.step += 1
    bc1 = 1.0 - cfg.beta1**state.step
    bc2 = 1.0 - cfg.beta2**state.step
    for f in PARAM_FIELDS:
        g = getattr(grads, f)
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(f)
        m = state.exp_avg[f]
        v = state.exp_avg_sq[f]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        getattr(cloud, f)[...] -= lr_table[f] * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    cloud.normalize_rotations()


@dataclass
class DensifyStats:
    """Screen-gradient statistics accumulated between densification events."""

    norm_sum: np.ndarray
    obs_count: np.ndarray
    world_grad_sum: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "DensifyStats":
        return cls(np.zeros(n), np.zeros(n, dtype=np.int64), np.zeros((n, 3)))

    def accumulate(self, grads: RenderGradients) -> None:
        self.norm_sum += grads.screen_norms
        self.obs_count += grads.visible
        self.world_grad_sum += grads.positions


def densify_and_prune(
    cloud: GaussianCloud,
    state: OptimizerState,
    stats: DensifyStats,
    cfg: TrainConfig,
    size_threshold: float,
    rng: np.random.Generator,
) -> tuple[GaussianCloud, OptimizerState, dict]:
    """Clone small / split large high-gradient Gaussians, prune faint ones.

    Clones are nudged one half mean-scale along the descent direction of the
    accumulated positional gradient; split children sample their parent's
    own distribution and shrink by the split factor.  Optimizer moments are
    carried over for survivors and zeroed for newcomers.
    """
    state.check_congruent(cloud)
    avg = stats.norm_sum / np.maximum(stats.obs_count, 1)
    high = avg >= cfg.densify_grad_threshold
    large = cloud.scales.max(axis=1) > size_threshold
    prune = cloud.opacities < cfg.prune_opacity_threshold
    clone = high & ~large & ~prune
    split = high & large & ~prune

    n_after = cloud.n_points - int(prune.sum()) + int(clone.sum()) + int(split.sum())
    if n_after > cfg.max_points:
        warnings.warn(
            f"densification skipped: {n_after} Gaussians would exceed cap {cfg.max_points}",
            stacklevel=2,
        )
        clone[:] = False
        split[:] = False

    keep = ~prune & ~split
    if not (keep.any() or clone.any() or split.any()):
        raise XSplatError("density control pruned every Gaussian")

    def gather(arr_field: str) -> np.ndarray:
        arr = getattr(cloud, arr_field)
        parts = [arr[keep]]
        if clone.any():
            parts.append(arr[clone])
        if split.any():
            parts.append(np.repeat(arr[split], 2, axis=0))
        return np.concatenate(parts, axis=0)

    new = {f: gather(f) for f in PARAM_FIELDS}
    n_keep, n_clone, n_split = int(keep.sum()), int(clone.sum()), int(split.sum())

    if n_clone:
        g = stats.world_grad_sum[clone]
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        direction = np.where(norms > 0, g / np.where(norms > 0, norms, 1.0), 0.0)
        step_len = 0.5 * cloud.scales[clone].mean(axis=1, keepdims=True)
        new["positions"][n_keep : n_keep + n_clone] -= step_len * direction

    if n_split:
        from .gaussians import quaternions_to_rotations

        rot = quaternions_to_rotations(cloud.rotations[split])
        local = rng.standard_normal((n_split, 2, 3)) * cloud.scales[split][:, None, :]
        offsets = np.einsum("aij,akj->aki", rot, local).reshape(2 * n_split, 3)
        sl = slice(n_keep + n_clone, None)
        new["positions"][sl] += offsets
        new["log_scales"][sl] -= np.log(cfg.split_factor)

    new_cloud = GaussianCloud(**new, basis_weights=cloud.basis_weights)
    new_state = OptimizerState(new_cloud)
    new_state.step = state.step
    for f in PARAM_FIELDS:
        new_state.exp_avg[f][:n_keep] = state.exp_avg[f][keep]
        new_state.exp_avg_sq[f][:n_keep] = state.exp_avg_sq[f][keep]
    report = {
        "pruned": int(prune.sum()),
        "cloned": n_clone,
        "split": n_split,
        "n_points": new_cloud.n_points,
    }
    return new_cloud, new_state, report


@dataclass
class TrainResult:
    cloud: GaussianCloud
    metrics: list[dict]
    out_dir: Path | None = None

    def test_psnr_at(self, iteration: int) -> float | None:
        for row in self.metrics:
            if row["iteration"] == iteration and row.get("test_psnr") is not None:
                return row["test_psnr"]
        return None


def evaluate(
    cloud: GaussianCloud,
    dataset: ProjectionSet,
    indices: np.ndarray,
    use_clean: bool = True,
) -> MetricReport:
    """Mean and per-view PSNR/SSIM of renders against dataset projections.

    Held-out evaluation compares against the noise-free stack; training
    diagnostics may compare against the captured (noisy) images.
    """
    stack = dataset.clean_images if use_clean else dataset.images
    intr = intrinsic_from_config(dataset.scanner)
    shape = (dataset.scanner.detector_height, dataset.scanner.detector_width)
    per_view = []
    for i in indices:
        ext = extrinsic_from_angle(dataset.scanner, float(dataset.angles[i]))
        proj, _ = render(cloud, ext, intr, shape)
        ref = stack[i].astype(np.float64)
        per_view.append(
            {
                "view": int(i),
                "angle": float(dataset.angles[i]),
                "psnr": psnr(proj.pixels, ref),
                "ssim": ssim(proj.pixels, ref),
            }
        )
    return MetricReport(
        psnr=float(np.mean([v["psnr"] for v in per_view])),
        ssim=float(np.mean([v["ssim"] for v in per_view])),
        per_view=per_view,
    )


METRICS_HEADER = "iteration\tloss\ttrain_psnr\ttest_psnr\ttest_ssim\tn_points\n"


def _metrics_row(row: dict) -> str:
    tp = "-" if row.get("test_psnr") is None else f"{row['test_psnr']:.6f}"
    ts = "-" if row.get("test_ssim") is None else f"{row['test_ssim']:.6f}"
    return (
        f"{row['iteration']}\t{row['loss']:.10e}\t{row['train_psnr']:.6f}"
        f"\t{tp}\t{ts}\t{row['n_points']}\n"
    )


def train(
    dataset: ProjectionSet,
    cloud: GaussianCloud,
    cfg: TrainConfig,
    out_dir=None,
    verbose: bool = False,
) -> TrainResult:
    """Optimize the cloud against the dataset's training projections."""
    if dataset.train_indices.size < 1:
        raise InvalidParameterError("dataset has no training projections")
    cloud = cloud.copy()
    state = OptimizerState(cloud)
    rng = np.random.default_rng(cfg.rng_seed)
    stats = DensifyStats.zeros(cloud.n_points)

    span = np.ptp(cloud.positions, axis=0).max()
    size_threshold = (
        cfg.densify_size_threshold
        if cfg.densify_size_threshold is not None
        else 0.01 * max(span, 1.0)
    )

    scanner = dataset.scanner
    intr = intrinsic_from_config(scanner)
    shape = (scanner.detector_height, scanner.detector_width)
    extrinsics = {
        int(i): extrinsic_from_angle(scanner, float(dataset.angles[i]))
        for i in dataset.train_indices
    }
    targets = {int(i): dataset.images[i].astype(np.float64) for i in dataset.train_indices}

    out_path = Path(out_dir) if out_dir is not None else None
    log_handle = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_handle = open(out_path / "metrics.tsv", "w")
        log_handle.write(METRICS_HEADER)

    metrics: list[dict] = []
    order: list[int] = []
    t_start = time.perf_counter()
    try:
        for it in range(1, cfg.iterations + 1):
            if not order:
                order = [int(i) for i in rng.permutation(dataset.train_indices)]
            view = order.pop()
            proj, splats = render(cloud, extrinsics[view], intr, shape)
            value, dl = loss(proj.pixels, targets[view], cfg.gamma)
            grads = render_backward(cloud, splats, dl)
            stats.accumulate(grads)
            lr_table = {
                "positions": position_learning_rate(cfg, it - 1),
                "rotations": cfg.lr_rotation,
                "log_scales": cfg.lr_scaling,
                "raw_opacities": cfg.lr_opacity,
                "features": cfg.lr_feature,
            }
            adam_step(cloud, grads, state, lr_table, cfg)

            if (
                cfg.densify_from_iter < it <= cfg.densify_until_iter
                and it % cfg.densify_interval == 0
            ):
                cloud, state, dreport = densify_and_prune(
                    cloud, state, stats, cfg, size_threshold, rng
                )
                stats = DensifyStats.zeros(cloud.n_points)
                if verbose:
                    print(f"[{it}] density control: {dreport}")

            if cfg.opacity_reset_interval and it % cfg.opacity_reset_interval == 0:
                ceiling = logit(0.01)
                np.minimum(cloud.raw_opacities, ceiling, out=cloud.raw_opacities)
                state.exp_avg["raw_opacities"][:] = 0.0
                state.exp_avg_sq["raw_opacities"][:] = 0.0

            if it % cfg.log_interval == 0 or it == cfg.iterations:
                row = {
                    "iteration": it,
                    "loss": value,
                    "train_psnr": psnr(proj.pixels, targets[view]),
                    "test_psnr": None,
                    "test_ssim": None,
                    "n_points": cloud.n_points,
                }
                if it % cfg.eval_interval == 0 or it == cfg.iterations:
                    report = evaluate(cloud, dataset, dataset.test_indices)
                    row["test_psnr"] = report.psnr
                    row["test_ssim"] = report.ssim
                    if verbose:
                        elapsed = time.perf_counter() - t_start
                        print(
                            f"[{it}] loss {value:.5f} test PSNR {report.psnr:.2f} dB "
                            f"SSIM {report.ssim:.4f} N {cloud.n_points} ({elapsed:.1f}s)"
                        )
                metrics.append(row)
                if log_handle is not None:
                    log_handle.write(_metrics_row(row))
                    log_handle.flush()

            if out_path is not None and it in cfg.checkpoint_iterations:
                save_cloud(cloud, out_path / f"ckpt_{it:06d}.ply")
    finally:
        if log_handle is not None:
            log_handle.close()

    if out_path is not None:
        save_cloud(cloud, out_path / "cloud_final.ply")
    return TrainResult(cloud=cloud, metrics=metrics, out_dir=out_path)
