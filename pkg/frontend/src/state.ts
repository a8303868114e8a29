// Console state: the pose controls, the chosen target plane, and the latest
// service responses. Views subscribe and re-render on every change; nothing
// here derives guidance numbers on its own.

import { Guidance, PoseJson, RegisterResult, SlicePayload } from "./api.js";
import { EulerZyx, Quat, eulerToQuat, quatToEuler, rotateVector } from "./math.js";

export interface BlindOverlay {
  result: RegisterResult;
  trueQ: Quat;
  trueDelta: [number, number, number];
}

export interface ConsoleState {
  euler: EulerZyx;
  depth: number;
  spId: string;
  spIds: string[];
  slice: SlicePayload | null;
  guidance: Guidance | null;
  blind: BlindOverlay | null;
  serviceUp: boolean;
}

export type Listener = (state: ConsoleState) => void;

export class Store {
  private state: ConsoleState = {
    euler: { yawDeg: 0, pitchDeg: 0, rollDeg: 0 },
    depth: 0,
    spId: "tvp",
    spIds: [],
    slice: null,
    guidance: null,
    blind: null,
    serviceUp: true,
  };
  private listeners: Listener[] = [];

  get(): ConsoleState {
    return this.state;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  update(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  quat(): Quat {
    return eulerToQuat(this.state.euler);
  }

  // depth slides the plane along its own viewing normal
  delta(): [number, number, number] {
    const n = rotateVector(this.quat(), [0, 0, 1]);
    return [n[0] * this.state.depth, n[1] * this.state.depth, n[2] * this.state.depth];
  }

  poseJson(): PoseJson {
    return { q: Array.from(this.quat()), delta: Array.from(this.delta()) };
  }

  setEuler(euler: EulerZyx): void {
    this.update({ euler, blind: null });
  }

  // trackball drags hand in a quaternion; controls snap to its Euler reading
  setQuat(q: Quat): void {
    this.update({ euler: quatToEuler(q), blind: null });
  }
}
