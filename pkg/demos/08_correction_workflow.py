"""Negative-prompt correction: advisor, branches, majority vote.

When the plain run segments a confusing distractor, the rule-based advisor
proposes the most plausible confusions as negated conditions. One guided
run per negative pushes the trajectory away from that reading; a pixel-wise
strict-majority vote fuses the branch masks.
"""

import numpy as np

from percdiff import (GuidanceWeights, ModelConfig, TaskConfig, TrainConfig,
                      generate_dataset, generate_scene, iou, make_schedule,
                      propose_negatives, run_correction_workflow, train)

schedule = make_schedule(200, 1e-4, 0.05)
train_ds = generate_dataset(TaskConfig(), 1024, seed=0)
cfg = TrainConfig(target_kind="x0", epochs=40, batch_size=128,
                  learning_rate=3e-3, seed=0)
params, _ = train(train_ds, cfg, schedule,
                  model_config=ModelConfig(grid_size=16, hidden=(256, 256),
                                           time_emb_dim=32))

scene, cond, gt = generate_scene(TaskConfig(), np.random.default_rng(31))
print(f"condition: {cond.describe()}")
print("objects in scene:")
for i, obj in enumerate(scene.objects):
    print(f"  [{i}] {obj.color} {obj.shape} at {obj.center}, "
          f"visible {int(scene.masks[i].sum())} px")

negatives = propose_negatives(scene, cond, k=3)
print("\nadvisor suggestions (most confusable first):")
for n in negatives:
    print(f"  NOT {n.describe()}")

mask, prov = run_correction_workflow(params, scene, cond, k=3,
                                     w=GuidanceWeights(), schedule=schedule,
                                     steps=25, base_seed=9, target_kind="x0",
                                     gt_mask=gt)
print(f"\nbranch IoUs: {[f'{v:.3f}' for v in prov.branch_ious]}")
print(f"voted mask IoU: {iou(mask, gt):.3f}")
print(f"provenance seeds: {prov.seeds}")
