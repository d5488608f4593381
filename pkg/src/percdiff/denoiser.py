"""Tiny conditional denoising MLP trained from scratch.

The network maps (noisy target, conditioning image, condition encoding,
sinusoidal timestep embedding) to either a noise estimate or a clean-target
estimate. Forward and reverse passes are written out explicitly (tanh
hidden layers, so finite-difference gradient checks are clean) and updated
with decoupled-weight-decay Adam.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augmentation import AugmentationSpec, augment
from .contribution import ContributionProfile
from .schedule import NoiseSchedule, corrected_epsilon, forward_diffuse
from .strategy import TimestepStrategy, loss_weight, make_strategy, sample_timestep
from .toytask import COND_DIM, Dataset, render_target

TIME_EMB_DIM = 32
TARGET_KINDS = ("eps", "eps_corrected", "x0")

CHECKPOINT_MAGIC = b"PDCK"


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class ModelConfig:
    grid_size: int = 16
    cond_dim: int = COND_DIM
    hidden: tuple[int, ...] = (256, 256)
    time_emb_dim: int = TIME_EMB_DIM
    # linear input->output bypass; without it the hidden width caps the rank
    # of the learned map below the output dimension and the noise estimate
    # cannot track the noisy input itself
    skip: bool = True

    @property
    def field_dim(self) -> int:
        return 3 * self.grid_size * self.grid_size

    @property
    def input_dim(self) -> int:
        return 2 * self.field_dim + self.cond_dim + self.time_emb_dim

    @property
    def output_dim(self) -> int:
        return self.field_dim

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    def param_count(self) -> int:
        n = sum(di * do + do for di, do in self.layer_dims())
        if self.skip:
            n += self.input_dim * self.output_dim
        return n


@dataclass
class DenoiserParams:
    config: ModelConfig
    weights: list[np.ndarray]  # weights[i]: (d_in, d_out)
    biases: list[np.ndarray]
    skip_weight: np.ndarray | None = None  # (input_dim, output_dim)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(
            self.config, [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.skip_weight is None else self.skip_weight.copy())

    def flat(self) -> np.ndarray:
        arrays = list(self.weights)
        if self.skip_weight is not None:
            arrays.append(self.skip_weight)
        arrays += self.biases
        return np.concatenate([a.ravel() for a in arrays])


def init_params(config: ModelConfig, rng: np.random.Generator) -> DenoiserParams:
    """Fan-in-scaled uniform weights, zero biases, zero bypass."""
    weights, biases = [], []
    for d_in, d_out in config.layer_dims():
        limit = np.sqrt(1.0 / d_in)
        weights.append(rng.uniform(-limit, limit, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    skip = np.zeros((config.input_dim, config.output_dim)) if config.skip else None
    return DenoiserParams(config=config, weights=weights, biases=biases,
                          skip_weight=skip)


def time_embedding(t: np.ndarray | int, dim: int = TIME_EMB_DIM) -> np.ndarray:
    """Sinusoidal embedding of (possibly batched) integer timesteps."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    return emb if emb.shape[0] > 1 else emb


def build_input(x_t: np.ndarray, scene_grid: np.ndarray, cond_enc: np.ndarray,
                t: np.ndarray | int, config: ModelConfig) -> np.ndarray:
    """Stack a batch of network inputs; leading batch axis is optional."""
    x_t = np.asarray(x_t, dtype=np.float64)
    single = x_t.ndim == 3
    if single:
        x_t = x_t[None]
        scene_grid = np.asarray(scene_grid)[None]
        cond_enc = np.asarray(cond_enc)[None]
    n = x_t.shape[0]
    emb = time_embedding(np.broadcast_to(np.asarray(t), (n,)), config.time_emb_dim)
    X = np.concatenate([
        x_t.reshape(n, -1),
        np.asarray(scene_grid, dtype=np.float64).reshape(n, -1),
        np.asarray(cond_enc, dtype=np.float64).reshape(n, -1),
        emb,
    ], axis=1)
    if X.shape[1] != config.input_dim:
        raise ValueError(f"input dim {X.shape[1]} != expected {config.input_dim}")
    return X


def forward_raw(params: DenoiserParams, X: np.ndarray,
                keep_cache: bool = False):
    """Batched forward pass; optionally returns activations for backprop."""
    acts = [X]
    h = X
    n_layers = len(params.weights)
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        h = np.tanh(z) if i < n_layers - 1 else z
        acts.append(h)
    if params.skip_weight is not None:
        h = h + X @ params.skip_weight
        acts[-1] = h
    if keep_cache:
        return acts[-1], acts
    return acts[-1]


def forward(params: DenoiserParams, x_t: np.ndarray, scene_grid: np.ndarray,
            cond_enc: np.ndarray, t: int) -> np.ndarray:
    """Single- or batch-sample network output, shaped like x_t."""
    cfg = params.config
    X = build_input(x_t, scene_grid, cond_enc, t, cfg)
    out = forward_raw(params, X)
    G = cfg.grid_size
    shaped = out.reshape(-1, 3, G, G)
    return shaped[0] if np.asarray(x_t).ndim == 3 else shaped


def backward(params: DenoiserParams, acts: list[np.ndarray], d_out: np.ndarray
             ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray | None]:
    """Reverse-mode gradients for the tanh MLP given dL/d(output)."""
    grads_w = [np.zeros_like(w) for w in params.weights]
    grads_b = [np.zeros_like(b) for b in params.biases]
    grads_s = None if params.skip_weight is None else acts[0].T @ d_out
    delta = d_out
    for i in reversed(range(len(params.weights))):
        h_in = acts[i]
        grads_w[i] = h_in.T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (1.0 - acts[i] ** 2)
    return grads_w, grads_b, grads_s


@dataclass
class OptimizerState:
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    m_s: np.ndarray | None = None
    v_s: np.ndarray | None = None
    step: int = 0

    @classmethod
    def init(cls, params: DenoiserParams) -> "OptimizerState":
        has_skip = params.skip_weight is not None
        return cls(m_w=[np.zeros_like(w) for w in params.weights],
                   v_w=[np.zeros_like(w) for w in params.weights],
                   m_b=[np.zeros_like(b) for b in params.biases],
                   v_b=[np.zeros_like(b) for b in params.biases],
                   m_s=np.zeros_like(params.skip_weight) if has_skip else None,
                   v_s=np.zeros_like(params.skip_weight) if has_skip else None)


def adamw_update(params: DenoiserParams, opt: OptimizerState,
                 grads_w: list[np.ndarray], grads_b: list[np.ndarray],
                 grads_s: np.ndarray | None,
                 lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place decoupled-weight-decay Adam step (decay on weights only)."""
    opt.step += 1
    t = opt.step

    def update(value, grad, m, v, decay):
        m *= beta1
        m += (1 - beta1) * grad
        v *= beta2
        v += (1 - beta2) * grad ** 2
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        value -= lr * (m_hat / (np.sqrt(v_hat) + eps) + decay * value)

    for i in range(len(params.weights)):
        update(params.weights[i], grads_w[i], opt.m_w[i], opt.v_w[i], weight_decay)
        update(params.biases[i], grads_b[i], opt.m_b[i], opt.v_b[i], 0.0)
    if params.skip_weight is not None:
        if grads_s is None:
            raise ValueError("missing bypass gradient for a bypass-enabled model")
        update(params.skip_weight, grads_s, opt.m_s, opt.v_s, weight_decay)


@dataclass(frozen=True)
class TrainConfig:
    target_kind: str = "eps"
    strategy_kind: str = "uniform"
    aug: AugmentationSpec = field(default_factory=lambda: AugmentationSpec(enabled=False))
    cond_drop_prob: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 20
    weight_decay: float = 1e-4
    seed: int = 0
    groups: int = 10

    def __post_init__(self):
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"unknown target_kind {self.target_kind!r}")
        if not 0 <= self.cond_drop_prob <= 1:
            raise ValueError("cond_drop_prob must be in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def train_step(params: DenoiserParams, opt: OptimizerState, batch: list[tuple],
               cfg: TrainConfig, schedule: NoiseSchedule, strategy: TimestepStrategy,
               rng: np.random.Generator) -> float:
    """One gradient step over a batch of (scene, condition, gt_mask[, x0]).

    Per item: render the clean target, corrupt it per the augmentation spec,
    diffuse at a strategy-sampled timestep, pick the regression target per
    ``cfg.target_kind``, and drop the condition / image independently with
    ``cond_drop_prob`` for classifier-free training.
    """
    if not batch:
        raise ValueError("empty batch")
    mc = params.config
    G = mc.grid_size
    n = len(batch)
    xs, scenes, conds, ts, targets, weights = [], [], [], [], [], []
    for item in batch:
        scene, cond, gt_mask = item[0], item[1], item[2]
        x0 = item[3] if len(item) > 3 else render_target(scene, gt_mask)
        t = sample_timestep(strategy, rng)
        x0_aug = augment(x0, gt_mask, t, schedule.T, cfg.aug, rng,
                         scene_grid=scene.grid) if cfg.aug.enabled else x0
        eps = rng.standard_normal(x0.shape)
        x_t = forward_diffuse(x0_aug, t, eps, schedule)
        if cfg.target_kind == "eps":
            target = eps
        elif cfg.target_kind == "eps_corrected":
            target = corrected_epsilon(x0, x0_aug, eps, t, schedule)
        else:
            target = x0
        cond_enc = cond.encode()
        if rng.uniform() < cfg.cond_drop_prob:
            cond_enc = np.zeros_like(cond_enc)
        scene_grid = scene.grid
        if rng.uniform() < cfg.cond_drop_prob:
            scene_grid = np.zeros_like(scene_grid)
        xs.append(x_t)
        scenes.append(scene_grid)
        conds.append(cond_enc)
        ts.append(t)
        targets.append(target)
        weights.append(loss_weight(strategy, t))

    X = build_input(np.stack(xs), np.stack(scenes), np.stack(conds), np.asarray(ts), mc)
    Y = np.stack(targets).reshape(n, -1)
    W = np.asarray(weights)[:, None]
    out, acts = forward_raw(params, X, keep_cache=True)
    resid = out - Y
    loss = float(np.mean(W * resid ** 2))
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")
    d_out = 2.0 * W * resid / resid.size
    grads_w, grads_b, grads_s = backward(params, acts, d_out)
    adamw_update(params, opt, grads_w, grads_b, grads_s,
                 cfg.learning_rate, cfg.weight_decay)
    return loss


@dataclass
class TrainLogEntry:
    epoch: int
    step: int
    loss: float
    val_oiou: float | None = None


def train(dataset: Dataset, cfg: TrainConfig, schedule: NoiseSchedule,
          profile: ContributionProfile | None = None,
          model_config: ModelConfig | None = None,
          eval_hook=None) -> tuple[DenoiserParams, list[TrainLogEntry]]:
    """Full training loop; returns final parameters and the per-epoch log.

    ``eval_hook(params, epoch) -> float`` computes validation oIoU when
    provided (sampling is expensive, so it is opt-in).
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    mc = model_config or ModelConfig(grid_size=dataset.config.grid_size)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(mc, rng)
    opt = OptimizerState.init(params)
    strategy = make_strategy(cfg.strategy_kind, schedule.T, profile, B=cfg.groups)
    # clean targets never change across epochs
    x0s = [render_target(s, m) for s, m in zip(dataset.scenes, dataset.gt_masks)]
    items = [(s, c, m, x0) for s, c, m, x0 in
             zip(dataset.scenes, dataset.conditions, dataset.gt_masks, x0s)]
    log: list[TrainLogEntry] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(items))
        losses = []
        for start in range(0, len(items), cfg.batch_size):
            batch = [items[i] for i in order[start:start + cfg.batch_size]]
            try:
                losses.append(train_step(params, opt, batch, cfg, schedule, strategy, rng))
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch} step {step}: {exc}") from exc
            step += 1
        val = eval_hook(params, epoch) if eval_hook is not None else None
        log.append(TrainLogEntry(epoch=epoch, step=step, loss=float(np.mean(losses)),
                                 val_oiou=val))
    return params, log


def log_to_csv(log: list[TrainLogEntry]) -> str:
    lines = ["epoch,step,loss,val_oiou"]
    for e in log:
        val = "" if e.val_oiou is None else repr(e.val_oiou)
        lines.append(f"{e.epoch},{e.step},{e.loss!r},{val}")
    return "\n".join(lines) + "\n"


def save_checkpoint(path: str | Path, params: DenoiserParams, cfg: TrainConfig,
                    extra: dict | None = None) -> None:
    """JSON header (topology, config hash, seed) followed by a float64 blob."""
    header = {
        "grid_size": params.config.grid_size,
        "cond_dim": params.config.cond_dim,
        "hidden": list(params.config.hidden),
        "time_emb_dim": params.config.time_emb_dim,
        "skip": params.config.skip,
        "target_kind": cfg.target_kind,
        "seed": cfg.seed,
        "config_hash": hashlib.sha256(
            json.dumps(cfg.__dict__, default=str, sort_keys=True).encode()).hexdigest(),
        **(extra or {}),
    }
    blob = params.flat().astype("<f8").tobytes()
    raw = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        f.write(blob)


def load_checkpoint(path: str | Path) -> tuple[DenoiserParams, dict]:
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        flat = np.frombuffer(f.read(), dtype="<f8")
    mc = ModelConfig(grid_size=header["grid_size"], cond_dim=header["cond_dim"],
                     hidden=tuple(header["hidden"]), time_emb_dim=header["time_emb_dim"],
                     skip=bool(header.get("skip", False)))
    if len(flat) != mc.param_count():
        raise ValueError("parameter blob size does not match topology")
    params = DenoiserParams(config=mc, weights=[], biases=[])
    pos = 0
    for d_in, d_out in mc.layer_dims():
        params.weights.append(flat[pos:pos + d_in * d_out].reshape(d_in, d_out).copy())
        pos += d_in * d_out
    if mc.skip:
        n = mc.input_dim * mc.output_dim
        params.skip_weight = flat[pos:pos + n].reshape(mc.input_dim, mc.output_dim).copy()
        pos += n
    for _, d_out in mc.layer_dims():
        params.biases.append(flat[pos:pos + d_out].copy())
        pos += d_out
    return params, header
