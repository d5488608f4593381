"""Classifier-free guidance composition and correction workflows.

The correctional form extends the two-condition image-editing guidance with
a negative condition: the composed noise estimate walks from the fully
unconditional prediction through image conditioning, then away from the
negative reading and toward the intended one. A rule-based advisor stands in
for an external language model when proposing negatives, and a pixel-wise
strict-majority vote fuses the per-negative masks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .denoiser import DenoiserParams, forward
from .schedule import NoiseSchedule, ddim_step, snapshot_x0
from .toytask import (Condition, MaskExtractionConfig, ToyScene, extract_mask, iou,
                      match_objects)

DEFAULT_WEIGHTS_PLAIN = (1.5, 3.0)            # (w_I, w_D) without a negative
DEFAULT_WEIGHTS_CORRECTIONAL = (1.5, 3.0, 2.0)  # (w_I, w_D, w_D_neg)


@dataclass(frozen=True)
class GuidanceWeights:
    w_img: float = 1.5
    w_cond: float = 3.0
    w_neg: float = 2.0

    def __post_init__(self):
        if not all(np.isfinite([self.w_img, self.w_cond, self.w_neg])):
            raise ValueError("guidance weights must be finite")
        if self.w_cond <= self.w_neg:
            warnings.warn("correctional guidance expects w_cond > w_neg",
                          stacklevel=2)


def compose_guidance(e_uncond: np.ndarray, e_img: np.ndarray, e_neg: np.ndarray | None,
                     e_full: np.ndarray, w: GuidanceWeights,
                     has_negative: bool) -> np.ndarray:
    """Combine the 3 or 4 network passes into one guided estimate."""
    shapes = {e_uncond.shape, e_img.shape, e_full.shape}
    if has_negative:
        if e_neg is None:
            raise ValueError("e_neg required when has_negative")
        shapes.add(e_neg.shape)
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch across guidance passes: {shapes}")
    out = e_uncond + w.w_img * (e_img - e_uncond)
    if has_negative:
        return out + w.w_neg * (e_neg - e_img) + w.w_cond * (e_full - e_neg)
    return out + w.w_cond * (e_full - e_img)


def step_grid(T: int, steps: int) -> list[int]:
    """Descending DDIM timesteps: T, ..., down to T/steps."""
    if not 1 <= steps <= T:
        raise ValueError(f"need 1 <= steps <= T, got steps={steps}, T={T}")
    ts = [int(round(T * i / steps)) for i in range(steps, 0, -1)]
    # rounding may duplicate at small T; enforce strict decrease
    for i in range(1, len(ts)):
        if ts[i] >= ts[i - 1]:
            ts[i] = ts[i - 1] - 1
    if ts[-1] < 1:
        raise ValueError("step grid collapsed below t = 1")
    return ts


@dataclass
class TrajectoryCheckpoint:
    t: int
    x_t: np.ndarray
    x0_snapshot: np.ndarray
    mask: np.ndarray
    metric: float | None


@dataclass
class Trajectory:
    checkpoints: list[TrajectoryCheckpoint]
    final: np.ndarray
    final_mask: np.ndarray
    final_metric: float | None
    seed: int
    weights: GuidanceWeights
    steps: int

    def metric_list(self) -> list[float | None]:
        return [c.metric for c in self.checkpoints]


def sample_trajectory(params: DenoiserParams, scene: ToyScene, cond: Condition,
                      neg: Condition | None, w: GuidanceWeights, schedule: NoiseSchedule,
                      steps: int, checkpoint_ts: list[int], rng_or_seed,
                      target_kind: str = "eps", gt_mask: np.ndarray | None = None,
                      extraction: MaskExtractionConfig | None = None) -> Trajectory:
    """Deterministic guided DDIM run with x0-snapshot checkpoints.

    The 3 (or 4, with a negative) network passes share the unconditional and
    image-only evaluations. Checkpoints record the clean-data estimate, its
    extracted mask and, when ``gt_mask`` is given, the IoU against it.
    """
    grid = step_grid(schedule.T, steps)
    bad = [t for t in checkpoint_ts if t not in set(grid)]
    if bad:
        raise ValueError(f"checkpoints {bad} not on the {steps}-step grid")
    seed = rng_or_seed if isinstance(rng_or_seed, (int, np.integer)) else None
    rng = np.random.default_rng(rng_or_seed) if seed is not None else rng_or_seed
    extraction = extraction or MaskExtractionConfig()

    G = params.config.grid_size
    x = rng.standard_normal((3, G, G))
    empty_cond = np.zeros_like(cond.encode())
    empty_img = np.zeros_like(scene.grid)
    cond_enc = cond.encode()
    neg_enc = neg.encode() if neg is not None else None
    checkpoints: list[TrajectoryCheckpoint] = []

    prev_grid = grid[1:] + [0]
    for t, t_prev in zip(grid, prev_grid):
        e_uncond = forward(params, x, empty_img, empty_cond, t)
        e_img = forward(params, x, scene.grid, empty_cond, t)
        e_full = forward(params, x, scene.grid, cond_enc, t)
        e_neg = forward(params, x, scene.grid, neg_enc, t) if neg_enc is not None else None
        model_out = compose_guidance(e_uncond, e_img, e_neg, e_full, w,
                                     has_negative=neg_enc is not None)
        if t in checkpoint_ts:
            snap = np.clip(snapshot_x0(x, model_out, target_kind, t, schedule), -1, 1)
            mask = extract_mask(snap, extraction)
            metric = iou(mask, gt_mask) if gt_mask is not None else None
            checkpoints.append(TrajectoryCheckpoint(t=t, x_t=x.copy(), x0_snapshot=snap,
                                                    mask=mask, metric=metric))
        x = ddim_step(x, model_out, target_kind, t, t_prev, schedule, clip=True)

    final = np.clip(x, -1, 1)
    final_mask = extract_mask(final, extraction)
    final_metric = iou(final_mask, gt_mask) if gt_mask is not None else None
    return Trajectory(checkpoints=checkpoints, final=final, final_mask=final_mask,
                      final_metric=final_metric, seed=seed if seed is not None else -1,
                      weights=w, steps=steps)


class NegativeAdvisor:
    """Interface for proposing correctional (negative) conditions."""

    def propose(self, scene: ToyScene, cond: Condition, k: int) -> list[Condition]:
        raise NotImplementedError


class RuleBasedAdvisor(NegativeAdvisor):
    """Ranks distractor objects by attribute overlap with the referred one.

    Color match scores 2, shape match 2, spatial-qualifier compatibility 1;
    ties break toward larger visible area, then lower object index.
    """

    def propose(self, scene: ToyScene, cond: Condition, k: int) -> list[Condition]:
        from .toytask import resolve_condition
        target_idx = resolve_condition(scene, cond)
        if target_idx is None:
            target_idx = (match_objects(scene, cond) or [0])[0]
        target = scene.objects[target_idx]
        scored = []
        for i, obj in enumerate(scene.objects):
            if i == target_idx:
                continue
            score = 0
            if obj.color == target.color:
                score += 2
            if obj.shape == target.shape:
                score += 2
            if self._qualifier_compatible(scene, cond, i):
                score += 1
            area = int(scene.masks[i].sum())
            scored.append((-score, -area, i, obj))
        scored.sort()
        out = []
        for _, _, i, obj in scored[:k]:
            out.append(Condition(shape=obj.shape, color=obj.color,
                                 qualifier="any", negated=True))
        return out

    @staticmethod
    def _qualifier_compatible(scene: ToyScene, cond: Condition, idx: int) -> bool:
        if cond.qualifier == "any":
            return False
        # a distractor is qualifier-compatible if it also matches the
        # condition's attribute part (it could plausibly be the extreme one)
        return idx in match_objects(scene, cond)


def propose_negatives(scene: ToyScene, cond: Condition, k: int,
                      advisor: NegativeAdvisor | None = None) -> list[Condition]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return (advisor or RuleBasedAdvisor()).propose(scene, cond, k)


def majority_vote(masks: list[np.ndarray]) -> np.ndarray:
    """Pixel on iff strictly more than half the masks are on there."""
    if not masks:
        raise ValueError("empty mask list")
    shapes = {m.shape for m in masks}
    if len(shapes) != 1:
        raise ValueError(f"mask shape mismatch: {shapes}")
    stack = np.stack([m.astype(np.int64) for m in masks])
    return stack.sum(axis=0) * 2 > len(masks)


@dataclass
class WorkflowProvenance:
    condition: dict
    negatives: list[dict]
    seeds: list[int]
    branch_ious: list[float | None]
    weights: tuple[float, float, float]
    steps: int

    def to_dict(self) -> dict:
        return {"condition": self.condition, "negatives": self.negatives,
                "seeds": self.seeds, "branch_ious": self.branch_ious,
                "weights": list(self.weights), "steps": self.steps}


def run_correction_workflow(params: DenoiserParams, scene: ToyScene, cond: Condition,
                            k: int, w: GuidanceWeights, schedule: NoiseSchedule,
                            steps: int, base_seed: int, target_kind: str = "eps",
                            gt_mask: np.ndarray | None = None,
                            advisor: NegativeAdvisor | None = None
                            ) -> tuple[np.ndarray, WorkflowProvenance]:
    """One trajectory per proposed negative, fused by strict-majority vote.

    With no distractors to negate, a single plain-guidance trajectory is run
    instead.
    """
    negatives = propose_negatives(scene, cond, k, advisor)
    branch_seeds = [int(s.generate_state(1)[0])
                    for s in np.random.SeedSequence(base_seed).spawn(max(len(negatives), 1))]
    masks, ious = [], []
    if negatives:
        for neg, seed in zip(negatives, branch_seeds):
            traj = sample_trajectory(params, scene, cond, neg, w, schedule, steps,
                                     checkpoint_ts=[], rng_or_seed=seed,
                                     target_kind=target_kind, gt_mask=gt_mask)
            masks.append(traj.final_mask)
            ious.append(traj.final_metric)
    else:
        traj = sample_trajectory(params, scene, cond, None, w, schedule, steps,
                                 checkpoint_ts=[], rng_or_seed=branch_seeds[0],
                                 target_kind=target_kind, gt_mask=gt_mask)
        masks.append(traj.final_mask)
        ious.append(traj.final_metric)
    final = majority_vote(masks)
    prov = WorkflowProvenance(condition=cond.to_dict(),
                              negatives=[n.to_dict() for n in negatives],
                              seeds=branch_seeds[:len(masks)], branch_ious=ious,
                              weights=(w.w_img, w.w_cond, w.w_neg), steps=steps)
    return final, prov
