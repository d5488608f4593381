"""Synthetic referring-segmentation world and its metrics.

Scenes are small G x G x 3 grids holding 2-4 colored shapes; a condition is
an attribute triple (shape, color, spatial qualifier) that uniquely refers
to one object. The segmentation target is the scene with the referred
object's visible pixels painted a solid anchor color (a saturated red
analog); masks are recovered from generated images by color thresholding.

Object paint colors are deliberately muted so that no scene pixel falls
within the extraction threshold of the anchor color.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensorio import load_tensor, save_tensor

SHAPES = ("square", "cross", "disk")
COLORS = ("red", "green", "blue")
QUALIFIERS = ("any", "left", "right", "top", "bottom")

# painted-mask anchor (saturated red analog in [-1, 1] space)
ANCHOR = np.array([1.0, -1.0, -1.0])
# muted object colors, all further than the extraction threshold from ANCHOR
COLOR_VALUES = {
    "red": np.array([0.45, -0.55, -0.55]),
    "green": np.array([-0.55, 0.45, -0.55]),
    "blue": np.array([-0.55, -0.55, 0.45]),
}
BACKGROUND = np.array([-0.85, -0.85, -0.85])

COND_DIM = len(SHAPES) + len(COLORS) + len(QUALIFIERS)  # 11


class GenerationError(RuntimeError):
    """No uniquely referable scene found within the retry budget."""


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    center: tuple[int, int]   # (row, col)
    size: int                 # radius
    z_order: int              # larger is drawn on top


@dataclass(frozen=True)
class Condition:
    shape: str | None = None
    color: str | None = None
    qualifier: str = "any"
    negated: bool = False

    def encode(self) -> np.ndarray:
        v = np.zeros(COND_DIM)
        if self.shape is not None:
            v[SHAPES.index(self.shape)] = 1.0
        if self.color is not None:
            v[len(SHAPES) + COLORS.index(self.color)] = 1.0
        v[len(SHAPES) + len(COLORS) + QUALIFIERS.index(self.qualifier)] = 1.0
        return v

    def describe(self) -> str:
        parts = [self.color or "any-color", self.shape or "any-shape"]
        if self.qualifier != "any":
            parts.append(self.qualifier + "most")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {"shape": self.shape, "color": self.color,
                "qualifier": self.qualifier, "negated": self.negated}

    @classmethod
    def from_dict(cls, d: dict) -> "Condition":
        return cls(shape=d.get("shape"), color=d.get("color"),
                   qualifier=d.get("qualifier", "any"), negated=bool(d.get("negated", False)))


EMPTY_CONDITION_ENCODING = np.zeros(COND_DIM)


@dataclass(frozen=True)
class ToyScene:
    grid: np.ndarray                 # 3 x G x G in [-1, 1]
    objects: tuple[SceneObject, ...]
    masks: tuple[np.ndarray, ...]    # per-object visible masks (G x G bool)

    @property
    def size(self) -> int:
        return self.grid.shape[-1]


@dataclass(frozen=True)
class MaskExtractionConfig:
    anchor: np.ndarray = field(default_factory=lambda: ANCHOR.copy())
    delta: float = 0.4

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class TaskConfig:
    grid_size: int = 16
    min_objects: int = 2
    max_objects: int = 4
    min_size: int = 2
    max_size: int = 3
    shapes: tuple[str, ...] = SHAPES
    colors: tuple[str, ...] = COLORS
    qualifiers: tuple[str, ...] = QUALIFIERS
    retry_budget: int = 64


def shape_footprint(shape: str, center: tuple[int, int], size: int, G: int) -> np.ndarray:
    """Boolean G x G footprint of a shape, clipped to the grid."""
    r, c = center
    rows, cols = np.mgrid[0:G, 0:G]
    dr, dc = rows - r, cols - c
    if shape == "square":
        return (np.abs(dr) <= size) & (np.abs(dc) <= size)
    if shape == "disk":
        return dr * dr + dc * dc <= size * size + 0.5
    if shape == "cross":
        arm = max(size // 3, 0)  # 1-pixel arms at toy sizes
        return ((np.abs(dr) <= size) & (np.abs(dc) <= arm)) | \
               ((np.abs(dc) <= size) & (np.abs(dr) <= arm))
    raise ValueError(f"unknown shape {shape!r}")


def render_scene_grid(objects: list[SceneObject], G: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Paint objects by z-order; returns the grid and per-object visible masks."""
    grid = np.tile(BACKGROUND[:, None, None], (1, G, G)).copy()
    order = sorted(objects, key=lambda o: o.z_order)
    owner = np.full((G, G), -1, dtype=np.int64)
    for obj in order:
        fp = shape_footprint(obj.shape, obj.center, obj.size, G)
        owner[fp] = obj.z_order
        grid[:, fp] = COLOR_VALUES[obj.color][:, None]
    visible = [owner == obj.z_order for obj in objects]
    return grid, visible


def match_objects(scene: ToyScene, cond: Condition) -> list[int]:
    """Indices of objects matching the condition's attribute part."""
    out = []
    for i, obj in enumerate(scene.objects):
        if cond.shape is not None and obj.shape != cond.shape:
            continue
        if cond.color is not None and obj.color != cond.color:
            continue
        out.append(i)
    return out


def resolve_condition(scene: ToyScene, cond: Condition) -> int | None:
    """Index of the object the condition uniquely refers to, or None.

    ``any`` requires exactly one attribute match. Directional qualifiers
    select the strict extreme (by center coordinate) among the matches.
    """
    cands = match_objects(scene, cond)
    if not cands:
        return None
    if cond.qualifier == "any":
        return cands[0] if len(cands) == 1 else None
    axis = 0 if cond.qualifier in ("top", "bottom") else 1
    sign = 1 if cond.qualifier in ("bottom", "right") else -1
    keys = [sign * scene.objects[i].center[axis] for i in cands]
    best = max(keys)
    if keys.count(best) != 1:
        return None
    return cands[keys.index(best)]


def attribute_sharing_distractors(scene: ToyScene, target_idx: int) -> int:
    """Number of non-target objects sharing the target's shape or color.

    Scenes with many such distractors are the hard cases for referring
    segmentation: the condition's attributes alone no longer isolate the
    target, so corrective negative conditions have the most room to help.
    """
    target = scene.objects[target_idx]
    return sum(1 for i, obj in enumerate(scene.objects)
               if i != target_idx
               and (obj.shape == target.shape or obj.color == target.color))


def generate_scene(config: TaskConfig, rng: np.random.Generator
                   ) -> tuple[ToyScene, Condition, np.ndarray]:
    """Random scene plus a uniquely-referring condition and its gt mask."""
    if config.grid_size < 8:
        raise ValueError("grid size must be >= 8")
    G = config.grid_size
    for _ in range(config.retry_budget):
        n = int(rng.integers(config.min_objects, config.max_objects + 1))
        objects = []
        for z in range(n):
            size = int(rng.integers(config.min_size, config.max_size + 1))
            r = int(rng.integers(size, G - size))
            c = int(rng.integers(size, G - size))
            objects.append(SceneObject(
                shape=str(rng.choice(config.shapes)),
                color=str(rng.choice(config.colors)),
                center=(r, c), size=size, z_order=z))
        grid, visible = render_scene_grid(objects, G)
        if any(not m.any() for m in visible):
            continue
        scene = ToyScene(grid=grid, objects=tuple(objects), masks=tuple(visible))
        valid: list[tuple[Condition, int]] = []
        for shape in (None, *config.shapes):
            for color in (None, *config.colors):
                if shape is None and color is None:
                    continue
                for q in config.qualifiers:
                    cond = Condition(shape=shape, color=color, qualifier=q)
                    idx = resolve_condition(scene, cond)
                    if idx is not None:
                        valid.append((cond, idx))
        if not valid:
            continue
        cond, idx = valid[int(rng.integers(len(valid)))]
        return scene, cond, visible[idx].copy()
    raise GenerationError(f"no uniquely referable scene in {config.retry_budget} tries")


def render_target(scene: ToyScene, mask: np.ndarray) -> np.ndarray:
    """Scene image with masked pixels painted the anchor color."""
    out = scene.grid.copy()
    out[:, mask.astype(bool)] = ANCHOR[:, None]
    return out


def extract_mask(image: np.ndarray, cfg: MaskExtractionConfig | None = None) -> np.ndarray:
    """Pixels whose channel-space distance to the anchor is within delta."""
    cfg = cfg or MaskExtractionConfig()
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected 3 x H x W image, got {image.shape}")
    dist = np.sqrt(((image - cfg.anchor[:, None, None]) ** 2).sum(axis=0))
    return dist <= cfg.delta


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = a.astype(bool), b.astype(bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def oiou(predicted: list[np.ndarray], truth: list[np.ndarray]) -> float:
    """Dataset-level sum-of-intersections over sum-of-unions."""
    if len(predicted) != len(truth) or not predicted:
        raise ValueError("predicted and truth must be non-empty aligned lists")
    inter = sum(int(np.logical_and(p.astype(bool), t.astype(bool)).sum())
                for p, t in zip(predicted, truth))
    union = sum(int(np.logical_or(p.astype(bool), t.astype(bool)).sum())
                for p, t in zip(predicted, truth))
    if union == 0:
        return 1.0 if all(not p.any() for p in predicted) else 0.0
    return inter / union


def render_depth(scene: ToyScene) -> np.ndarray:
    """Scalar depth analog in [-1, 1]: planar background plus object plateaus."""
    G = scene.size
    rows = np.linspace(-0.9, -0.1, G)
    depth = np.tile(rows[:, None], (1, G))
    zmax = max((o.z_order for o in scene.objects), default=0) + 1
    for obj, mask in zip(scene.objects, scene.masks):
        depth[mask] = 0.1 + 0.8 * (obj.z_order + 1) / zmax
    return depth


def depth_metrics(predicted: np.ndarray, truth: np.ndarray,
                  align: bool = True) -> tuple[float, float]:
    """(AbsRel, delta1) after least-squares affine alignment to the truth."""
    p = np.asarray(predicted, dtype=np.float64).ravel()
    g = np.asarray(truth, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise ValueError("shape mismatch between predicted and truth")
    if align:
        A = np.stack([p, np.ones_like(p)], axis=1)
        if np.ptp(p) < 1e-12:
            p = np.full_like(g, g.mean())  # constant prediction: mean fallback
        else:
            a, b = np.linalg.lstsq(A, g, rcond=None)[0]
            p = a * p + b
    if np.any(g <= 0):
        raise ValueError("truth must be strictly positive for relative metrics")
    abs_rel = float(np.mean(np.abs(p - g) / g))
    ratio = np.maximum(p / g, g / np.where(p > 0, p, np.inf))
    delta1 = float(np.mean(ratio < 1.25))
    return abs_rel, delta1


@dataclass
class Dataset:
    """In-memory toy dataset with index + blob persistence."""

    config: TaskConfig
    scenes: list[ToyScene]
    conditions: list[Condition]
    gt_masks: list[np.ndarray]
    seeds: list[int]

    def __len__(self) -> int:
        return len(self.scenes)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        G = self.config.grid_size
        grids = np.stack([s.grid for s in self.scenes]) if self.scenes else np.zeros((0, 3, G, G))
        masks = np.stack(self.gt_masks).astype(np.uint8) if self.gt_masks else np.zeros((0, G, G), np.uint8)
        save_tensor(directory / "grids.bin", grids)
        save_tensor(directory / "gt_masks.bin", masks)
        index = {
            "config": vars(self.config) | {"shapes": list(self.config.shapes),
                                           "colors": list(self.config.colors),
                                           "qualifiers": list(self.config.qualifiers)},
            "seeds": self.seeds,
            "samples": [
                {"condition": cond.to_dict(),
                 "objects": [vars(o) | {"center": list(o.center)} for o in scene.objects]}
                for scene, cond in zip(self.scenes, self.conditions)
            ],
        }
        (directory / "index.json").write_text(json.dumps(index, indent=2))

    @classmethod
    def load(cls, directory: str | Path) -> "Dataset":
        directory = Path(directory)
        index = json.loads((directory / "index.json").read_text())
        cfg_raw = dict(index["config"])
        for k in ("shapes", "colors", "qualifiers"):
            cfg_raw[k] = tuple(cfg_raw[k])
        config = TaskConfig(**cfg_raw)
        grids = load_tensor(directory / "grids.bin")
        masks = load_tensor(directory / "gt_masks.bin").astype(bool)
        scenes, conditions, gt_masks = [], [], []
        G = config.grid_size
        for i, rec in enumerate(index["samples"]):
            objects = tuple(SceneObject(shape=o["shape"], color=o["color"],
                                        center=tuple(o["center"]), size=o["size"],
                                        z_order=o["z_order"]) for o in rec["objects"])
            _, visible = render_scene_grid(list(objects), G)
            scenes.append(ToyScene(grid=grids[i], objects=objects, masks=tuple(visible)))
            conditions.append(Condition.from_dict(rec["condition"]))
            gt_masks.append(masks[i])
        return cls(config=config, scenes=scenes, conditions=conditions,
                   gt_masks=gt_masks, seeds=list(index["seeds"]))


def generate_dataset(config: TaskConfig, count: int, seed: int) -> Dataset:
    """Deterministic dataset: sample i is generated from a child seed of ``seed``."""
    root = np.random.SeedSequence(seed)
    seeds = [int(s.generate_state(1)[0]) for s in root.spawn(count)]
    scenes, conds, masks = [], [], []
    for s in seeds:
        scene, cond, mask = generate_scene(config, np.random.default_rng(s))
        scenes.append(scene)
        conds.append(cond)
        masks.append(mask)
    return Dataset(config=config, scenes=scenes, conditions=conds, gt_masks=masks, seeds=seeds)
