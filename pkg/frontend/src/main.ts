// Wires the console together: sliders and trackball write the pose into the
// store, two debounced gates poll /api/slice and /api/guidance on any pose
// change, and the canvas redraws from whatever the store holds.

import { Client, Guidance, PoseJson, SlicePayload } from "./api.js";
import { blindReport, blindText, runBlindRegister } from "./blind.js";
import { quatFromAxisAngle, quatMultiply, quatNormalize } from "./math.js";
import { LatestGate } from "./poller.js";
import { drawGuidance, drawSlice } from "./render.js";
import { Store } from "./state.js";

const SLICE_SIZE = 160;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const overlay = document.getElementById("overlay") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const spSelect = document.getElementById("sp") as HTMLSelectElement;
const blindButton = document.getElementById("blind") as HTMLButtonElement;
const blindOut = document.getElementById("blind-out") as HTMLDivElement;
const guidanceOut = document.getElementById("guidance-out") as HTMLDivElement;

const sliders = {
  yawDeg: document.getElementById("yaw") as HTMLInputElement,
  pitchDeg: document.getElementById("pitch") as HTMLInputElement,
  rollDeg: document.getElementById("roll") as HTMLInputElement,
};
const depthSlider = document.getElementById("depth") as HTMLInputElement;
const readouts = {
  yawDeg: document.getElementById("yaw-val") as HTMLSpanElement,
  pitchDeg: document.getElementById("pitch-val") as HTMLSpanElement,
  rollDeg: document.getElementById("roll-val") as HTMLSpanElement,
  depth: document.getElementById("depth-val") as HTMLSpanElement,
};

const store = new Store();
const client = new Client("");

const sliceGate = new LatestGate<PoseJson, SlicePayload>(
  (pose) => client.slice(pose, SLICE_SIZE, SLICE_SIZE),
  (slice) => {
    store.update({ slice, serviceUp: true });
  },
  markUnreachable,
);

const guidanceGate = new LatestGate<{ pose: PoseJson; spId: string }, Guidance>(
  ({ pose, spId }) => client.guidance(pose, spId),
  (guidance) => {
    store.update({ guidance, serviceUp: true });
  },
  markUnreachable,
);

function markUnreachable(err: unknown): void {
  console.error(err);
  store.update({ serviceUp: false });
}

function poseChanged(): void {
  const pose = store.poseJson();
  sliceGate.request(pose);
  guidanceGate.request({ pose, spId: store.get().spId });
}

function syncSliders(): void {
  const e = store.get().euler;
  sliders.yawDeg.value = e.yawDeg.toFixed(1);
  sliders.pitchDeg.value = e.pitchDeg.toFixed(1);
  sliders.rollDeg.value = e.rollDeg.toFixed(1);
  readouts.yawDeg.textContent = `${e.yawDeg.toFixed(1)}°`;
  readouts.pitchDeg.textContent = `${e.pitchDeg.toFixed(1)}°`;
  readouts.rollDeg.textContent = `${e.rollDeg.toFixed(1)}°`;
  readouts.depth.textContent = store.get().depth.toFixed(2);
}

for (const key of ["yawDeg", "pitchDeg", "rollDeg"] as const) {
  sliders[key].addEventListener("input", () => {
    const e = { ...store.get().euler };
    e[key] = parseFloat(sliders[key].value);
    store.setEuler(e);
    poseChanged();
  });
}
depthSlider.addEventListener("input", () => {
  store.update({ depth: parseFloat(depthSlider.value), blind: null });
  poseChanged();
});

spSelect.addEventListener("change", () => {
  store.update({ spId: spSelect.value });
  // a new target changes guidance only; the slice depends only on the pose
  guidanceGate.request({ pose: store.poseJson(), spId: spSelect.value });
});

blindButton.addEventListener("click", () => {
  blindOut.textContent = "registering…";
  runBlindRegister(client, store).catch(markUnreachable);
});

// drag on the view acts as a trackball: horizontal drag rotates about the
// vertical screen axis, vertical drag about the horizontal one
let dragging: { x: number; y: number } | null = null;
overlay.addEventListener("pointerdown", (ev) => {
  dragging = { x: ev.clientX, y: ev.clientY };
  overlay.setPointerCapture(ev.pointerId);
});
overlay.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  const scale = 0.4 * (Math.PI / 180);
  const dx = (ev.clientX - dragging.x) * scale;
  const dy = (ev.clientY - dragging.y) * scale;
  dragging = { x: ev.clientX, y: ev.clientY };
  const spin = quatMultiply(quatFromAxisAngle([0, 1, 0], dx), quatFromAxisAngle([1, 0, 0], dy));
  store.setQuat(quatNormalize(quatMultiply(store.quat(), spin)));
  syncSliders();
  poseChanged();
});
overlay.addEventListener("pointerup", () => {
  dragging = null;
});

store.subscribe((state) => {
  banner.hidden = state.serviceUp;
  for (const el of [
    ...Object.values(sliders),
    depthSlider,
    spSelect,
    blindButton,
  ]) {
    el.disabled = !state.serviceUp;
  }

  const ctx = canvas.getContext("2d");
  if (ctx && state.slice) drawSlice(ctx, state.slice);
  const octx = overlay.getContext("2d");
  if (octx) {
    octx.clearRect(0, 0, overlay.width, overlay.height);
    if (state.guidance) {
      drawGuidance(octx, state.guidance, overlay.width);
      guidanceOut.textContent =
        `${state.guidance.target_sp.toUpperCase()} via ${state.guidance.chosen_direction}`;
    }
  }
  blindOut.textContent = state.blind ? blindText(blindReport(state.blind)) : "";
});

async function boot(): Promise<void> {
  try {
    const info = await client.volume();
    const ids = info.standard_planes.map((sp) => sp.id);
    store.update({ spIds: ids, spId: ids[0] ?? "tvp", serviceUp: true });
    spSelect.innerHTML = "";
    for (const id of ids) {
      const opt = document.createElement("option");
      opt.value = id;
      opt.textContent = id.toUpperCase();
      spSelect.appendChild(opt);
    }
    syncSliders();
    poseChanged();
  } catch (err) {
    markUnreachable(err);
  }
}

void boot();
