"""Training loop, learning-rate schedule, checkpointing and inference."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import metrics
from .fmaug import PATCH_COUNT_RANGE, PATCH_FRAC_RANGE, AugmentedSample, build_training_samples
from .frequency_views import RADIUS_RANGE, SIGMA_RANGE, GaussianParams, high_pass_view
from .losses import LossConfig, total_loss
from .network import CoupledNetwork, ModelConfig, build_network

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    image_size: int = 512
    batch_size: int = 2
    total_epochs: int = 200
    warm_epochs: int = 80
    decay_epochs: int = 120
    base_lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    n_views: int = 3
    subsample: int | None = None
    alpha: float = 1.0
    bce_epsilon: float = 1e-7
    use_fmaug: bool = True
    use_ssl: bool = True
    use_att: bool = True
    anchor_radius: int = 27
    anchor_sigma: float = 9.0
    radius_range: tuple[int, int] = RADIUS_RANGE
    sigma_range: tuple[float, float] = SIGMA_RANGE
    patch_count_range: tuple[int, int] = PATCH_COUNT_RANGE
    patch_frac_range: tuple[float, float] = PATCH_FRAC_RANGE
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.warm_epochs + self.decay_epochs != self.total_epochs:
            raise ValueError("warm_epochs + decay_epochs must equal total_epochs "
                             f"({self.warm_epochs} + {self.decay_epochs} != {self.total_epochs})")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.decay_epochs < 1:
            raise ValueError("decay_epochs must be >= 1")

    @property
    def anchor(self) -> GaussianParams:
        return GaussianParams(self.anchor_radius, self.anchor_sigma)

    def objective_terms(self) -> tuple[str, ...]:
        return ("L_sel", "L_seg") if self.use_ssl else ("L_seg",)


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Constant for the warm phase, then linear decay that would reach 0 at `total_epochs`."""
    if not 0 <= epoch < cfg.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs})")
    if epoch < cfg.warm_epochs:
        return cfg.base_lr
    return cfg.base_lr * (cfg.total_epochs - epoch) / cfg.decay_epochs


def set_deterministic(threads: int = 1):
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)


def _to_tensor(arrays, dtype=torch.float32) -> torch.Tensor:
    x = np.stack([np.asarray(a) for a in arrays])
    if x.ndim == 3:
        x = x[:, :, :, None]
    return torch.from_numpy(np.ascontiguousarray(x.transpose(0, 3, 1, 2))).to(dtype)


def _epoch_samples(data, cfg: TrainConfig, rng: np.random.Generator) -> list[AugmentedSample]:
    stream = []
    for idx in range(len(data)):
        image, mask = data[idx]
        if cfg.use_fmaug:
            stream += build_training_samples(
                image, mask, cfg.anchor, rng, cfg.n_views, cfg.subsample,
                radius_range=cfg.radius_range, sigma_range=cfg.sigma_range,
                patch_count_range=cfg.patch_count_range, patch_frac_range=cfg.patch_frac_range)
        else:
            view = high_pass_view(image, cfg.anchor).pixels
            stream.append(AugmentedSample(view, view, np.asarray(mask), (0, 0), 0))
    return stream


def train_epoch(net: CoupledNetwork, data, cfg: TrainConfig, rng: np.random.Generator,
                optimizer: torch.optim.Optimizer, epoch: int = 0) -> dict:
    """One pass over the flattened (image, k) stream in sequential batches."""
    net.train()
    stream = _epoch_samples(data, cfg, rng)
    if not stream:
        raise TrainingError("training data is empty")
    loss_cfg = LossConfig(alpha=cfg.alpha, bce_epsilon=cfg.bce_epsilon)
    sums = {"L_sel": 0.0, "L_seg": 0.0, "L_total": 0.0}
    steps = 0
    for step, start in enumerate(range(0, len(stream), cfg.batch_size)):
        batch = stream[start:start + cfg.batch_size]
        x = _to_tensor([s.mixed for s in batch])
        target = _to_tensor([s.target for s in batch])
        mask = _to_tensor([s.seg_mask.astype(np.float32) for s in batch])
        out = net(x)
        terms = total_loss(out.recon, out.seg_prob, target, mask, loss_cfg, use_ssl=cfg.use_ssl)
        if not torch.isfinite(terms.total):
            raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}: {terms.total.item()}")
        optimizer.zero_grad(set_to_none=True)
        terms.total.backward()
        optimizer.step()
        sums["L_sel"] += terms.sel.item()
        sums["L_seg"] += terms.seg.item()
        sums["L_total"] += terms.total.item()
        steps += 1
    return {k: v / steps for k, v in sums.items()}


@dataclass
class Prediction:
    mask: np.ndarray  # H x W uint8
    prob: np.ndarray  # H x W float
    resized: bool = False


@torch.no_grad()
def predict_batch(net: CoupledNetwork, images, cfg: TrainConfig, batch_size: int = 8) -> list[Prediction]:
    """Anchor view -> E -> D_sel -> D_seg -> threshold at 0.5.

    Inputs whose size differs from the network's are resized to fit and the
    probability map is resized back.
    """
    net.eval()
    size = net.config.image_size
    preds = []
    for start in range(0, len(images), batch_size):
        chunk = images[start:start + batch_size]
        views, shapes = [], []
        for img in chunk:
            view = high_pass_view(img, cfg.anchor).pixels
            shapes.append(view.shape[:2])
            t = _to_tensor([view])
            if view.shape[:2] != (size, size):
                t = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
            views.append(t)
        prob = net(torch.cat(views)).seg_prob
        for p, shape in zip(prob, shapes):
            resized = tuple(shape) != (size, size)
            if resized:
                p = F.interpolate(p[None], size=shape, mode="bilinear", align_corners=False)[0]
            arr = p[0].double().numpy()
            preds.append(Prediction((arr >= 0.5).astype(np.uint8), arr, resized))
    return preds


def predict(net: CoupledNetwork, image, cfg: TrainConfig) -> Prediction:
    return predict_batch(net, [image], cfg)[0]


def evaluate(net: CoupledNetwork, data, cfg: TrainConfig) -> list[tuple[float, float]]:
    """Per-image (dice, mcc)."""
    images = [data[i][0] for i in range(len(data))]
    preds = predict_batch(net, images, cfg)
    return [metrics.score(p.prob, data[i][1]) for i, p in enumerate(preds)]


@dataclass
class Checkpoint:
    state_dict: dict
    model_config: dict
    seed: int
    epoch: int
    val_dice: float
    train_config: dict = field(default_factory=dict)
    optimizer_state: dict | None = None
    rng_state: dict | None = None
    best_val_dice: float | None = None

    def build(self) -> CoupledNetwork:
        net = CoupledNetwork(ModelConfig(**self.model_config))
        net.load_state_dict(self.state_dict)
        return net


def save_checkpoint(path, ckpt: Checkpoint):
    torch.save(asdict(ckpt), path)


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint(**torch.load(path, map_location="cpu", weights_only=False))


@dataclass
class FitResult:
    best: Checkpoint
    last: Checkpoint
    history: list[dict]


def _snapshot(net, cfg, epoch, val_dice, optimizer=None, rng=None, best=None) -> Checkpoint:
    return Checkpoint(
        state_dict=copy.deepcopy(net.state_dict()),
        model_config=net.config.to_dict(),
        seed=cfg.seed,
        epoch=epoch,
        val_dice=val_dice,
        train_config=asdict(cfg),
        optimizer_state=copy.deepcopy(optimizer.state_dict()) if optimizer else None,
        rng_state=copy.deepcopy(rng.bit_generator.state) if rng else None,
        best_val_dice=best,
    )


def fit(net: CoupledNetwork, train_set, val_set, cfg: TrainConfig, out_dir=None,
        resume: Checkpoint | None = None, deterministic: bool = True,
        stop_epoch: int | None = None) -> FitResult:
    """Train for `total_epochs` and keep the epoch with the best validation DICE.

    With `out_dir`, writes ``train_log.jsonl`` (one record per epoch),
    ``best.pt`` and ``last.pt``.  `resume` continues from a ``last.pt``
    checkpoint, restoring optimizer and augmentation RNG state.  `stop_epoch`
    ends the run early (after that epoch) without changing the schedule.
    """
    if net.config.attention_enabled != cfg.use_att:
        raise ValueError("network attention_enabled does not match TrainConfig.use_att")
    if deterministic:
        set_deterministic(cfg.threads)
    if val_set is None or len(val_set) == 0:
        log.warning("empty validation set; selecting on the training set")
        val_set = train_set

    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.base_lr, betas=tuple(cfg.betas))
    rng = np.random.default_rng(cfg.seed)
    history: list[dict] = []
    start = 0
    best: Checkpoint | None = None
    out_dir = Path(out_dir) if out_dir is not None else None
    log_path = out_dir / "train_log.jsonl" if out_dir else None

    if resume is not None:
        net.load_state_dict(resume.state_dict)
        if resume.optimizer_state:
            optimizer.load_state_dict(resume.optimizer_state)
        if resume.rng_state:
            rng.bit_generator.state = resume.rng_state
        start = resume.epoch + 1
        if log_path and log_path.exists():
            history = [json.loads(l) for l in log_path.read_text().splitlines() if l.strip()][:start]
        if out_dir and (out_dir / "best.pt").exists():
            best = load_checkpoint(out_dir / "best.pt")
    if log_path:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path.write_text("".join(json.dumps(r) + "\n" for r in history))

    last = None
    end = cfg.total_epochs if stop_epoch is None else min(cfg.total_epochs, stop_epoch + 1)
    for epoch in range(start, end):
        lr = lr_at_epoch(cfg, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        stats = train_epoch(net, train_set, cfg, rng, optimizer, epoch)
        scores = evaluate(net, val_set, cfg)
        val_dice = float(np.mean([s[0] for s in scores]))
        val_mcc = float(np.mean([s[1] for s in scores]))
        record = {"epoch": epoch, "lr": lr, **stats, "val_dice": val_dice, "val_mcc": val_mcc}
        if not cfg.use_ssl:
            record["objective"] = "alpha*L_seg"
        history.append(record)
        log.info("epoch %d lr %.3g L_total %.4f val_dice %.4f", epoch, lr, stats["L_total"], val_dice)

        if best is None or val_dice > best.val_dice:
            best = _snapshot(net, cfg, epoch, val_dice)
            if out_dir:
                save_checkpoint(out_dir / "best.pt", best)
        last = _snapshot(net, cfg, epoch, val_dice, optimizer, rng, best.val_dice)
        if out_dir:
            save_checkpoint(out_dir / "last.pt", last)
            with log_path.open("a") as fh:
                fh.write(json.dumps(record) + "\n")

    if last is None:
        raise TrainingError(f"nothing to train: start epoch {start} >= total_epochs {cfg.total_epochs}")
    return FitResult(best, last, history)


def new_network(model_cfg: ModelConfig, cfg: TrainConfig) -> CoupledNetwork:
    if model_cfg.attention_enabled != cfg.use_att:
        model_cfg = ModelConfig(**{**model_cfg.to_dict(), "attention_enabled": cfg.use_att})
    return build_network(model_cfg, cfg.seed)
