import { ApiError, StudioApi } from "./api.js";
import { clampWeight, type StudioState } from "./state.js";
import type {
  AdviceItem,
  ConditionDto,
  Frame,
  GuidanceWeightsDto,
  RunResult,
  SessionInfo,
} from "./types.js";

/** One cell of the frame strip: a denoising snapshot at timestep t. */
export interface StripCell {
  t: number;
  imageB64: string;
  maskRle: Frame["mask_rle"];
  iou: number | null;
}

/**
 * Pure session view-model: holds the session, the current run, and the
 * previous run in the comparison slot. All numbers shown come from API
 * fields; the only local arithmetic is the IoU delta between two runs.
 */
export class SessionViewModel {
  session: SessionInfo | null = null;
  currentRun: RunResult | null = null;
  /** Previous run, kept for side-by-side comparison after a correction. */
  comparisonRun: RunResult | null = null;
  suggestions: AdviceItem[] = [];
  negative: ConditionDto | null = null;
  weights: GuidanceWeightsDto;
  steps: number;
  scrubIndex = 0;
  overlayEnabled = true;
  lastError: string | null = null;
  private inFlight = false;

  constructor(
    private readonly api: StudioApi,
    private readonly state: StudioState,
  ) {
    this.weights = { ...state.weights };
    this.steps = state.steps;
    this.negative = state.negative ? { ...state.negative } : null;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  /** Frame strip, guaranteed ordered by decreasing timestep. */
  get frames(): StripCell[] {
    if (!this.currentRun) return [];
    return [...this.currentRun.frames]
      .sort((a, b) => b.t - a.t)
      .map((f) => ({
        t: f.t,
        imageB64: f.image_b64,
        maskRle: f.mask_rle,
        iou: f.iou,
      }));
  }

  /** Scrub slider bounds: 0..frames-1, or 0..0 for the empty state. */
  get scrubMax(): number {
    return Math.max(0, this.frames.length - 1);
  }

  get selectedFrame(): StripCell | null {
    const frames = this.frames;
    if (frames.length === 0) return null;
    return frames[Math.min(this.scrubIndex, frames.length - 1)];
  }

  /**
   * IoU change of the current run relative to the comparison slot.
   * Null until both runs exist with reported IoUs.
   */
  get deltaIou(): number | null {
    const cur = this.currentRun?.final_iou;
    const prev = this.comparisonRun?.final_iou;
    if (cur == null || prev == null) return null;
    return cur - prev;
  }

  setScrub(index: number): void {
    this.scrubIndex = Math.min(Math.max(0, Math.trunc(index)), this.scrubMax);
  }

  toggleOverlay(): void {
    this.overlayEnabled = !this.overlayEnabled;
  }

  setWeight(key: keyof GuidanceWeightsDto, value: number): void {
    this.weights[key] = clampWeight(value);
  }

  setNegative(negative: ConditionDto | null): void {
    this.negative = negative ? { ...negative } : null;
  }

  /** Replayable state for the shareable URL. */
  snapshotState(): StudioState {
    return {
      checkpointId: this.state.checkpointId,
      sceneSeed: this.state.sceneSeed,
      steps: this.steps,
      weights: { ...this.weights },
      negative: this.negative ? { ...this.negative } : null,
    };
  }

  async open(): Promise<void> {
    this.session = await this.api.createSession(
      this.state.checkpointId,
      this.state.sceneSeed,
    );
  }

  /**
   * Run guided denoising with the current weights and negative. The
   * previous run moves into the comparison slot. API errors are surfaced
   * in `lastError` and leave both runs untouched. At most one run may be
   * in flight; overlapping calls are rejected.
   */
  async run(): Promise<boolean> {
    if (!this.session) throw new Error("session not opened");
    if (this.inFlight) throw new Error("a run is already in flight");
    this.inFlight = true;
    this.lastError = null;
    try {
      const result = await this.api.run(this.session.session_id, {
        steps: this.steps,
        weights: { ...this.weights },
        negative: this.negative,
      });
      this.comparisonRun = this.currentRun;
      this.currentRun = result;
      this.scrubIndex = 0;
      return true;
    } catch (err) {
      this.lastError =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      return false;
    } finally {
      this.inFlight = false;
    }
  }

  async fetchSuggestions(k = 3): Promise<AdviceItem[]> {
    if (!this.session) throw new Error("session not opened");
    this.suggestions = await this.api.advise(this.session.session_id, k);
    return this.suggestions;
  }
}
