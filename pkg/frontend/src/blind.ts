// Blind registration: ship the currently displayed bitmap to the service
// with the pose withheld, then overlay how close the engine's estimate came
// to the pose the user actually set. The estimate itself comes verbatim from
// the service; only the estimate-vs-truth comparison happens client-side,
// since the truth never leaves the console.

import { Client, RegisterResult } from "./api.js";
import { Quat, quatAngleDeg } from "./math.js";
import { BlindOverlay, Store } from "./state.js";

export interface BlindReport {
  degenerate: boolean;
  angleErrDeg: number;
  translationErr: number;
  score: number;
}

export function blindReport(overlay: BlindOverlay): BlindReport {
  const est = overlay.result.pose;
  const dq = est.delta;
  const dt = overlay.trueDelta;
  return {
    degenerate: overlay.result.degenerate,
    angleErrDeg: quatAngleDeg(est.q as Quat, overlay.trueQ),
    translationErr: Math.hypot(dq[0] - dt[0], dq[1] - dt[1], dq[2] - dt[2]),
    score: overlay.result.score,
  };
}

export function blindText(report: BlindReport): string {
  if (report.degenerate) return "insufficient structure";
  return `est err ${report.angleErrDeg.toFixed(1)}°, |Δt| ${report.translationErr.toFixed(3)}`;
}

export async function runBlindRegister(client: Client, store: Store): Promise<BlindOverlay | null> {
  const state = store.get();
  if (!state.slice) return null;
  const result: RegisterResult = await client.register(
    state.slice.pixels,
    state.slice.width,
    state.slice.height,
  );
  const overlay: BlindOverlay = {
    result,
    trueQ: store.quat(),
    trueDelta: store.delta(),
  };
  store.update({ blind: overlay });
  return overlay;
}
