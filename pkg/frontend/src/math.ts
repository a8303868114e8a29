// Quaternion and Euler helpers for the pose controls. Convention matches the
// engine: scalar-first [w, x, y, z], Euler order ZYX (yaw about z, then pitch
// about y, then roll about x). Guidance numbers are never computed here; the
// service is the single source of truth for angles to the standard plane.

export type Quat = [number, number, number, number];
export type Vec3 = [number, number, number];

export const DEG = Math.PI / 180;

export function quatMultiply(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  if (n === 0) return [1, 0, 0, 0];
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  if (n === 0) return [1, 0, 0, 0];
  const s = Math.sin(angle / 2) / n;
  return [Math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s];
}

export function rotateVector(q: Quat, v: Vec3): Vec3 {
  // q v q* with v as a pure quaternion
  const p = quatMultiply(quatMultiply(q, [0, v[0], v[1], v[2]]), [q[0], -q[1], -q[2], -q[3]]);
  return [p[1], p[2], p[3]];
}

export interface EulerZyx {
  yawDeg: number;
  pitchDeg: number;
  rollDeg: number;
}

export function eulerToQuat(e: EulerZyx): Quat {
  const qz = quatFromAxisAngle([0, 0, 1], e.yawDeg * DEG);
  const qy = quatFromAxisAngle([0, 1, 0], e.pitchDeg * DEG);
  const qx = quatFromAxisAngle([1, 0, 0], e.rollDeg * DEG);
  return quatNormalize(quatMultiply(quatMultiply(qz, qy), qx));
}

export function quatToEuler(q: Quat): EulerZyx {
  const [w, x, y, z] = quatNormalize(q);
  const sinPitch = Math.max(-1, Math.min(1, 2 * (w * y - z * x)));
  return {
    yawDeg: Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z)) / DEG,
    pitchDeg: Math.asin(sinPitch) / DEG,
    rollDeg: Math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y)) / DEG,
  };
}

// Angular difference ignoring the sign ambiguity; used only by control
// round-trip checks, never for displayed guidance.
export function quatAngleDeg(a: Quat, b: Quat): number {
  const an = quatNormalize(a);
  const bn = quatNormalize(b);
  const dot = Math.abs(an[0] * bn[0] + an[1] * bn[1] + an[2] * bn[2] + an[3] * bn[3]);
  return (2 * Math.acos(Math.min(1, dot))) / DEG;
}
