import { decodeRle } from "./rle.js";
import type { SessionViewModel, StripCell } from "./viewmodel.js";
import { COLORS, QUALIFIERS, SHAPES, type ConditionDto } from "./types.js";

const MASK_TINT = "rgba(255, 220, 0, 0.45)";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Draw a base64 PNG with an optional RLE mask tint on a canvas. */
function renderFrameCanvas(
  cell: { imageB64: string; maskRle: StripCell["maskRle"] },
  overlay: boolean,
  scale = 12,
): HTMLCanvasElement {
  const [rows, cols] = cell.maskRle.size;
  const canvas = el("canvas", "frame-canvas");
  canvas.width = cols * scale;
  canvas.height = rows * scale;
  const ctx = canvas.getContext("2d");
  if (!ctx) return canvas;
  ctx.imageSmoothingEnabled = false;
  const img = new Image();
  img.onload = () => {
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    if (overlay) {
      const mask = decodeRle(cell.maskRle);
      ctx.fillStyle = MASK_TINT;
      for (let r = 0; r < rows; r++) {
        for (let c = 0; c < cols; c++) {
          if (mask[r * cols + c]) {
            ctx.fillRect(c * scale, r * scale, scale, scale);
          }
        }
      }
    }
  };
  img.src = "data:image/png;base64," + cell.imageB64;
  return canvas;
}

function fmtIou(iou: number | null | undefined): string {
  return iou == null ? "—" : iou.toFixed(3);
}

function conditionPicker(
  current: ConditionDto | null,
  onChange: (cond: ConditionDto | null) => void,
): HTMLElement {
  const box = el("div", "negative-manual");
  const shapeSel = el("select");
  const colorSel = el("select");
  const qualSel = el("select");
  for (const [sel, options] of [
    [shapeSel, ["", ...SHAPES]],
    [colorSel, ["", ...COLORS]],
    [qualSel, [...QUALIFIERS]],
  ] as const) {
    for (const opt of options) {
      const o = el("option", undefined, opt === "" ? "(any)" : opt);
      o.value = opt;
      sel.appendChild(o);
    }
  }
  if (current) {
    shapeSel.value = current.shape ?? "";
    colorSel.value = current.color ?? "";
    qualSel.value = current.qualifier;
  }
  const emit = () => {
    if (!shapeSel.value && !colorSel.value && qualSel.value === "any") {
      onChange(null);
      return;
    }
    onChange({
      shape: shapeSel.value || null,
      color: colorSel.value || null,
      qualifier: qualSel.value,
      negated: true,
    });
  };
  for (const sel of [shapeSel, colorSel, qualSel]) {
    sel.addEventListener("change", emit);
  }
  box.append("shape ", shapeSel, " color ", colorSel, " region ", qualSel);
  return box;
}

/** Render the whole session view into `root`, replacing prior content. */
export function renderSession(
  root: HTMLElement,
  vm: SessionViewModel,
  actions: {
    onRun: () => void;
    onAdvise: () => void;
    onShare: () => string;
  },
): void {
  root.replaceChildren();
  if (!vm.session) {
    root.appendChild(el("p", "empty", "No session open."));
    return;
  }

  const header = el("div", "session-header");
  header.appendChild(el("h2", undefined, `Scene ${vm.session.scene_seed}`));
  header.appendChild(
    el("p", "condition", `target: ${vm.session.condition_text}`),
  );
  const thumb = renderFrameCanvas(
    { imageB64: vm.session.image_b64, maskRle: vm.session.gt_rle },
    vm.overlayEnabled,
  );
  header.appendChild(thumb);
  root.appendChild(header);

  if (vm.lastError) {
    root.appendChild(el("p", "error", vm.lastError));
  }

  // weight sliders, bounded to [0, 10]
  const controls = el("div", "controls");
  const sliderSpecs = [
    ["w_img", "image weight"],
    ["w_cond", "condition weight"],
    ["w_neg", "negative weight"],
  ] as const;
  for (const [key, label] of sliderSpecs) {
    const wrap = el("label", "slider", `${label}: `);
    const slider = el("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = "10";
    slider.step = "0.1";
    slider.value = String(vm.weights[key]);
    const readout = el("span", "value", vm.weights[key].toFixed(1));
    slider.addEventListener("input", () => {
      vm.setWeight(key, Number(slider.value));
      readout.textContent = vm.weights[key].toFixed(1);
    });
    wrap.append(slider, readout);
    controls.appendChild(wrap);
  }

  const overlayToggle = el("label", "toggle", "mask overlay ");
  const toggleBox = el("input");
  toggleBox.type = "checkbox";
  toggleBox.checked = vm.overlayEnabled;
  toggleBox.addEventListener("change", () => {
    vm.toggleOverlay();
    renderSession(root, vm, actions);
  });
  overlayToggle.appendChild(toggleBox);
  controls.appendChild(overlayToggle);

  const runButton = el("button", "run", vm.busy ? "running…" : "run");
  runButton.disabled = vm.busy;
  runButton.addEventListener("click", actions.onRun);
  controls.appendChild(runButton);

  const shareButton = el("button", "share", "copy share link");
  shareButton.addEventListener("click", () => {
    void navigator.clipboard?.writeText(actions.onShare());
  });
  controls.appendChild(shareButton);
  root.appendChild(controls);

  // negative picker: advisor suggestions plus manual attribute choice
  const negBox = el("div", "negative-picker");
  negBox.appendChild(el("h3", undefined, "negative condition"));
  const adviseButton = el("button", "advise", "ask advisor");
  adviseButton.addEventListener("click", actions.onAdvise);
  negBox.appendChild(adviseButton);
  const sugList = el("div", "suggestions");
  for (const s of vm.suggestions) {
    const b = el("button", "suggestion", s.text);
    b.addEventListener("click", () => {
      vm.setNegative(s);
      renderSession(root, vm, actions);
    });
    sugList.appendChild(b);
  }
  negBox.appendChild(sugList);
  negBox.appendChild(conditionPicker(vm.negative, (c) => vm.setNegative(c)));
  negBox.appendChild(
    el(
      "p",
      "negative-current",
      vm.negative
        ? `active negative: ${vm.negative.shape ?? "any shape"} / ${vm.negative.color ?? "any color"} / ${vm.negative.qualifier}`
        : "no negative set",
    ),
  );
  root.appendChild(negBox);

  // frame strip, ordered by decreasing timestep, with a scrub slider
  const strip = el("div", "frame-strip");
  const frames = vm.frames;
  if (frames.length === 0) {
    strip.appendChild(el("p", "empty", "No run yet."));
  } else {
    for (const [i, cell] of frames.entries()) {
      const cellBox = el(
        "div",
        i === vm.scrubIndex ? "strip-cell selected" : "strip-cell",
      );
      cellBox.appendChild(renderFrameCanvas(cell, vm.overlayEnabled, 6));
      cellBox.appendChild(el("p", "meta", `t=${cell.t} IoU ${fmtIou(cell.iou)}`));
      cellBox.addEventListener("click", () => {
        vm.setScrub(i);
        renderSession(root, vm, actions);
      });
      strip.appendChild(cellBox);
    }
    const scrub = el("input", "scrub");
    scrub.type = "range";
    scrub.min = "0";
    scrub.max = String(vm.scrubMax);
    scrub.step = "1";
    scrub.value = String(vm.scrubIndex);
    scrub.addEventListener("input", () => {
      vm.setScrub(Number(scrub.value));
      renderSession(root, vm, actions);
    });
    strip.appendChild(scrub);
    const sel = vm.selectedFrame;
    if (sel) {
      const detail = el("div", "frame-detail");
      detail.appendChild(renderFrameCanvas(sel, vm.overlayEnabled));
      detail.appendChild(
        el("p", "meta", `t=${sel.t} IoU ${fmtIou(sel.iou)}`),
      );
      strip.appendChild(detail);
    }
  }
  root.appendChild(strip);

  // current result and the comparison slot with the previous run
  if (vm.currentRun) {
    const results = el("div", "results");
    const cur = el("div", "result current");
    cur.appendChild(el("h3", undefined, "current run"));
    cur.appendChild(
      renderFrameCanvas(
        {
          imageB64: vm.currentRun.final_image_b64,
          maskRle: vm.currentRun.final_mask_rle,
        },
        vm.overlayEnabled,
      ),
    );
    cur.appendChild(
      el("p", "meta", `final IoU ${fmtIou(vm.currentRun.final_iou)}`),
    );
    results.appendChild(cur);
    if (vm.comparisonRun) {
      const prev = el("div", "result comparison");
      prev.appendChild(el("h3", undefined, "previous run"));
      prev.appendChild(
        renderFrameCanvas(
          {
            imageB64: vm.comparisonRun.final_image_b64,
            maskRle: vm.comparisonRun.final_mask_rle,
          },
          vm.overlayEnabled,
        ),
      );
      prev.appendChild(
        el("p", "meta", `final IoU ${fmtIou(vm.comparisonRun.final_iou)}`),
      );
      results.appendChild(prev);
      const delta = vm.deltaIou;
      results.appendChild(
        el(
          "p",
          "delta",
          delta == null
            ? "ΔIoU —"
            : `ΔIoU ${delta >= 0 ? "+" : ""}${delta.toFixed(3)}`,
        ),
      );
    }
    const prov = vm.currentRun.provenance;
    results.appendChild(
      el(
        "p",
        "provenance",
        `weights [${prov.weights.join(", ")}] steps ${prov.steps} seed ${prov.seed}` +
          (prov.negative
            ? ` negative ${prov.negative.shape ?? "*"}/${prov.negative.color ?? "*"}/${prov.negative.qualifier}`
            : ""),
      ),
    );
    root.appendChild(results);
  }
}
