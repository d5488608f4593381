"""Batched guided-DDIM evaluation over a dataset.

Runs every sample's denoising trajectory in lockstep so the network passes
are single large matrix products. Per-sample noise is drawn from per-sample
child seeds, so results are bit-identical to running each trajectory alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contribution import MetricTrace, group_partition
from .denoiser import DenoiserParams, build_input, forward_raw
from .guidance import GuidanceWeights, compose_guidance, step_grid
from .schedule import NoiseSchedule, ddim_step, snapshot_x0
from .toytask import Dataset, MaskExtractionConfig, extract_mask, iou, oiou


@dataclass
class EvalReport:
    final_oiou: float
    per_sample_iou: list[float]
    checkpoint_ts: list[int]
    checkpoint_oiou: list[float]

    @property
    def best_checkpoint(self) -> tuple[int, float]:
        """(t, oIoU) of the best checkpoint, final step included as t=0."""
        ts = self.checkpoint_ts + [0]
        vals = self.checkpoint_oiou + [self.final_oiou]
        i = int(np.argmax(vals))
        return ts[i], vals[i]

    def to_dict(self) -> dict:
        best_t, best_v = self.best_checkpoint
        return {
            "final_oiou": self.final_oiou,
            "checkpoint_ts": self.checkpoint_ts,
            "checkpoint_oiou": self.checkpoint_oiou,
            "best_checkpoint_t": best_t,
            "best_checkpoint_oiou": best_v,
        }


def sample_batch(params: DenoiserParams, grids: np.ndarray, cond_encs: np.ndarray,
                 neg_encs: np.ndarray | None, w: GuidanceWeights, schedule: NoiseSchedule,
                 steps: int, checkpoint_ts: list[int], seeds: list[int],
                 target_kind: str = "eps"):
    """Guided DDIM over a batch; returns (finals, {t: x0 snapshots})."""
    n = grids.shape[0]
    G = params.config.grid_size
    mc = params.config
    xs = np.stack([np.random.default_rng(s).standard_normal((3, G, G)) for s in seeds])
    empty_img = np.zeros_like(grids)
    empty_cond = np.zeros_like(cond_encs)
    grid = step_grid(schedule.T, steps)
    snapshots: dict[int, np.ndarray] = {}

    def net(x, scene, cond, t):
        X = build_input(x, scene, cond, np.full(n, t), mc)
        return forward_raw(params, X).reshape(n, 3, G, G)

    prev_grid = grid[1:] + [0]
    for t, t_prev in zip(grid, prev_grid):
        e_uncond = net(xs, empty_img, empty_cond, t)
        e_img = net(xs, grids, empty_cond, t)
        e_full = net(xs, grids, cond_encs, t)
        e_neg = net(xs, grids, neg_encs, t) if neg_encs is not None else None
        out = compose_guidance(e_uncond, e_img, e_neg, e_full, w,
                               has_negative=neg_encs is not None)
        if t in checkpoint_ts:
            snapshots[t] = np.clip(snapshot_x0(xs, out, target_kind, t, schedule), -1, 1)
        xs = ddim_step(xs, out, target_kind, t, t_prev, schedule, clip=True)
    return np.clip(xs, -1, 1), snapshots


def trajectory_seeds(base_seed: int, count: int) -> list[int]:
    return [int(s.generate_state(1)[0])
            for s in np.random.SeedSequence(base_seed).spawn(count)]


def evaluate_model(params: DenoiserParams, dataset: Dataset, schedule: NoiseSchedule,
                   steps: int = 50, weights: GuidanceWeights | None = None,
                   target_kind: str = "eps", seed: int = 1234,
                   checkpoint_ts: list[int] | None = None,
                   extraction: MaskExtractionConfig | None = None) -> EvalReport:
    """oIoU of guided sampling over a dataset, plus per-checkpoint oIoU."""
    weights = weights or GuidanceWeights()
    extraction = extraction or MaskExtractionConfig()
    checkpoint_ts = checkpoint_ts if checkpoint_ts is not None else []
    grids = np.stack([s.grid for s in dataset.scenes])
    cond_encs = np.stack([c.encode() for c in dataset.conditions])
    seeds = trajectory_seeds(seed, len(dataset))
    finals, snaps = sample_batch(params, grids, cond_encs, None, weights, schedule,
                                 steps, checkpoint_ts, seeds, target_kind)
    pred_masks = [extract_mask(finals[i], extraction) for i in range(len(dataset))]
    per_sample = [iou(m, g) for m, g in zip(pred_masks, dataset.gt_masks)]
    cp_oiou = []
    for t in checkpoint_ts:
        masks = [extract_mask(snaps[t][i], extraction) for i in range(len(dataset))]
        cp_oiou.append(oiou(masks, dataset.gt_masks))
    return EvalReport(final_oiou=oiou(pred_masks, dataset.gt_masks),
                      per_sample_iou=per_sample,
                      checkpoint_ts=list(checkpoint_ts), checkpoint_oiou=cp_oiou)


def group_checkpoints(T: int, B: int, steps: int) -> list[int]:
    """One step-grid timestep per contribution group: the last grid step
    inside each group along the denoising direction (its lowest t)."""
    bounds = group_partition(T, B)
    grid = step_grid(T, steps)
    out = []
    for b in range(B):
        lo, hi = int(bounds[b]), int(bounds[b + 1] - 1)
        members = [t for t in grid if lo <= t <= hi]
        if not members:
            raise ValueError(f"no sampling step inside group {b} ({lo}..{hi}); "
                             f"increase steps")
        out.append(min(members))
    return out  # ascending in t


def collect_trace(params: DenoiserParams, dataset: Dataset, schedule: NoiseSchedule,
                  steps: int = 50, B: int = 10, weights: GuidanceWeights | None = None,
                  target_kind: str = "eps", seed: int = 1234,
                  extraction: MaskExtractionConfig | None = None) -> MetricTrace:
    """Per-sample IoU at each group's checkpoint plus the final IoU."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    weights = weights or GuidanceWeights()
    extraction = extraction or MaskExtractionConfig()
    cps_asc = group_checkpoints(schedule.T, B, steps)
    cps_desc = list(reversed(cps_asc))  # t=T-side group first, per trace layout
    grids = np.stack([s.grid for s in dataset.scenes])
    cond_encs = np.stack([c.encode() for c in dataset.conditions])
    seeds = trajectory_seeds(seed, len(dataset))
    finals, snaps = sample_batch(params, grids, cond_encs, None, weights, schedule,
                                 steps, cps_desc, seeds, target_kind)
    n = len(dataset)
    Q = np.zeros((n, B))
    for j, t in enumerate(cps_desc):
        for i in range(n):
            Q[i, j] = iou(extract_mask(snaps[t][i], extraction), dataset.gt_masks[i])
    Q0 = np.array([iou(extract_mask(finals[i], extraction), dataset.gt_masks[i])
                   for i in range(n)])
    return MetricTrace(checkpoints=Q, finals=Q0, timesteps=np.array(cps_desc))
