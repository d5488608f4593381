"""Watch a guided denoising trajectory improve (or drift) over time.

Sampling composes three network passes - unconditional, image-conditioned,
and fully conditioned - into one guided estimate per step. Checkpoints
record the clean-image snapshot and its IoU against ground truth, exposing
the late-trajectory behavior that training choices are meant to fix.
"""

import dataclasses

import numpy as np

from percdiff import (GuidanceWeights, ModelConfig, TaskConfig, TrainConfig,
                      generate_dataset, generate_scene, make_schedule,
                      sample_trajectory, train)
from percdiff.guidance import step_grid

schedule = make_schedule(200, 1e-4, 0.05)
train_ds = generate_dataset(TaskConfig(), 1024, seed=0)
cfg = TrainConfig(target_kind="x0", epochs=40, batch_size=128,
                  learning_rate=3e-3, seed=0)
params, _ = train(train_ds, cfg, schedule,
                  model_config=ModelConfig(grid_size=16, hidden=(256, 256),
                                           time_emb_dim=32))

scene, cond, gt = generate_scene(TaskConfig(), np.random.default_rng(123))
print(f"condition: {cond.describe()}")

steps = 25
grid = step_grid(schedule.T, steps)
traj = sample_trajectory(params, scene, cond, None, GuidanceWeights(),
                         schedule, steps, checkpoint_ts=grid[::4],
                         rng_or_seed=5, target_kind="x0", gt_mask=gt)
print(f"\nIoU along the trajectory ({steps} steps):")
for cp in traj.checkpoints:
    print(f"  t={cp.t:4d}: IoU {cp.metric:.3f} {'#' * int(cp.metric * 40)}")
print(f"  final : IoU {traj.final_metric:.3f} "
      f"{'#' * int(traj.final_metric * 40)}")

weak = sample_trajectory(params, scene, cond, None,
                         GuidanceWeights(w_img=1.0, w_cond=1.0), schedule,
                         steps, checkpoint_ts=[], rng_or_seed=5,
                         target_kind="x0", gt_mask=gt)
print(f"\nsame seed, weak guidance (1.0/1.0): final IoU {weak.final_metric:.3f}")
