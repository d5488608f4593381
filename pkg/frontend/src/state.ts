import type { ConditionDto, GuidanceWeightsDto } from "./types.js";
import { QUALIFIERS } from "./types.js";

/**
 * Everything needed to replay a session against the same backend:
 * which checkpoint and scene, how many steps, the guidance weights,
 * and the negative condition (if any). Serializes to a URL fragment
 * so a session can be shared as a link.
 */
export interface StudioState {
  checkpointId: string;
  sceneSeed: number;
  steps: number;
  weights: GuidanceWeightsDto;
  negative: ConditionDto | null;
}

export const DEFAULT_STATE: StudioState = {
  checkpointId: "",
  sceneSeed: 0,
  steps: 50,
  weights: { w_img: 1.5, w_cond: 3.0, w_neg: 2.0 },
  negative: null,
};

/** Clamp a slider value to the allowed [0, 10] range. */
export function clampWeight(value: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(10, Math.max(0, value));
}

function conditionToToken(cond: ConditionDto): string {
  return [
    cond.shape ?? "",
    cond.color ?? "",
    cond.qualifier,
    cond.negated ? "1" : "0",
  ].join(".");
}

function conditionFromToken(token: string): ConditionDto | null {
  const parts = token.split(".");
  if (parts.length !== 4) return null;
  const [shape, color, qualifier, negated] = parts;
  if (!(QUALIFIERS as readonly string[]).includes(qualifier)) return null;
  if (negated !== "0" && negated !== "1") return null;
  return {
    shape: shape === "" ? null : shape,
    color: color === "" ? null : color,
    qualifier,
    negated: negated === "1",
  };
}

/** Encode the state as a URL fragment, e.g. `#ckpt=m&scene=3&...`. */
export function serializeState(state: StudioState): string {
  const params = new URLSearchParams();
  params.set("ckpt", state.checkpointId);
  params.set("scene", String(state.sceneSeed));
  params.set("steps", String(state.steps));
  params.set("wi", String(state.weights.w_img));
  params.set("wc", String(state.weights.w_cond));
  params.set("wn", String(state.weights.w_neg));
  if (state.negative) params.set("neg", conditionToToken(state.negative));
  return "#" + params.toString();
}

/**
 * Parse a URL fragment back into a state. Missing or malformed fields
 * fall back to defaults, so stale links degrade instead of breaking.
 */
export function parseState(fragment: string): StudioState {
  const raw = fragment.startsWith("#") ? fragment.slice(1) : fragment;
  const params = new URLSearchParams(raw);
  const num = (key: string, fallback: number): number => {
    const v = Number(params.get(key));
    return Number.isFinite(v) && params.get(key) !== null ? v : fallback;
  };
  const negToken = params.get("neg");
  return {
    checkpointId: params.get("ckpt") ?? DEFAULT_STATE.checkpointId,
    sceneSeed: Math.trunc(num("scene", DEFAULT_STATE.sceneSeed)),
    steps: Math.trunc(num("steps", DEFAULT_STATE.steps)),
    weights: {
      w_img: clampWeight(num("wi", DEFAULT_STATE.weights.w_img)),
      w_cond: clampWeight(num("wc", DEFAULT_STATE.weights.w_cond)),
      w_neg: clampWeight(num("wn", DEFAULT_STATE.weights.w_neg)),
    },
    negative: negToken ? conditionFromToken(negToken) : null,
  };
}
