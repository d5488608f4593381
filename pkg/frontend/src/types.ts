/** Wire types of the studio backend API, mirrored field-for-field. */

export interface RleMask {
  size: number[];
  counts: number[];
}

export interface ConditionDto {
  shape: string | null;
  color: string | null;
  qualifier: string;
  negated: boolean;
}

export interface CheckpointInfo {
  id: string;
  target_kind: string;
  grid_size: number | null;
  hidden: number[] | null;
  seed: number | null;
}

export interface SceneSummary {
  scene_seed: number;
  image_b64: string;
  condition: ConditionDto;
  condition_text: string;
  gt_rle: RleMask;
  objects: { shape: string; color: string; center: number[]; size: number }[];
}

export interface SessionInfo {
  session_id: string;
  checkpoint_id: string;
  scene_seed: number;
  image_b64: string;
  condition: ConditionDto;
  condition_text: string;
  gt_rle: RleMask;
}

export interface GuidanceWeightsDto {
  w_img: number;
  w_cond: number;
  w_neg: number;
}

export interface Frame {
  t: number;
  image_b64: string;
  mask_rle: RleMask;
  iou: number | null;
}

export interface RunResult {
  frames: Frame[];
  final_iou: number | null;
  final_image_b64: string;
  final_mask_rle: RleMask;
  provenance: {
    condition: ConditionDto;
    negative: ConditionDto | null;
    weights: number[];
    steps: number;
    seed: number;
    checkpoint_id: string;
  };
}

export interface AdviceItem extends ConditionDto {
  text: string;
}

export interface WorkflowResult {
  mask_rle: RleMask;
  iou: number;
  provenance: {
    condition: ConditionDto;
    negatives: ConditionDto[];
    seeds: number[];
    branch_ious: (number | null)[];
    weights: number[];
    steps: number;
  };
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export const SHAPES = ["square", "cross", "disk"] as const;
export const COLORS = ["red", "green", "blue"] as const;
export const QUALIFIERS = ["any", "left", "right", "top", "bottom"] as const;
