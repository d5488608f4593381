"""Timestep-scaled target augmentation.

The training target's referred object gets jittered in color, position and
shape. The corruption is scaled by t: near t = 0 the target must stay
faithful (the model's output is taken almost verbatim), while at high t a
heavily corrupted target is fine and teaches robustness.
"""

import numpy as np

from percdiff import AugmentationSpec, TaskConfig, augment, generate_scene, render_target

scene, cond, gt = generate_scene(TaskConfig(), np.random.default_rng(7))
x0 = render_target(scene, gt)
spec = AugmentationSpec()

print(f"scene condition: {cond.describe()}, target area {int(gt.sum())} px")
print("\nmean L2 distortion of the training target vs timestep:")
for t in (0, 100, 300, 500, 700, 900, 1000):
    dists = [np.linalg.norm(augment(x0, gt, t, 1000, spec,
                                    np.random.default_rng(s),
                                    scene_grid=scene.grid) - x0)
             for s in range(200)]
    bar = "#" * int(np.mean(dists) * 8)
    print(f"  t={t:4d}: {np.mean(dists):6.3f} {bar}")

print("\ndoubling the intensity multiplier doubles the schedule:")
strong = AugmentationSpec(intensity_multiplier=2.0)
for t in (500, 1000):
    d_base = np.mean([np.linalg.norm(augment(x0, gt, t, 1000, spec,
                                             np.random.default_rng(s),
                                             scene_grid=scene.grid) - x0)
                      for s in range(200)])
    d_strong = np.mean([np.linalg.norm(augment(x0, gt, t, 1000, strong,
                                               np.random.default_rng(s),
                                               scene_grid=scene.grid) - x0)
                        for s in range(200)])
    print(f"  t={t}: x1.0 -> {d_base:.3f}, x2.0 -> {d_strong:.3f}")
