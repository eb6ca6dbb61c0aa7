/**
 * First-person viewer state and input handling.
 *
 * WASD translates in the horizontal plane of the current yaw; mouse drag
 * looks around with pitch clamped short of the poles. handleInput is
 * pure: it returns the same object when nothing changed, so callers can
 * use identity to decide whether a new server render is needed.
 */

export type Quality = "preview" | "full";

export interface ViewerState {
  /** World position, y down (negative y is above the floor). */
  position: [number, number, number];
  yaw: number;
  pitch: number;
  fovDeg: number;
  quality: Quality;
  inFlight: boolean;
}

export interface InputSample {
  /** Currently held keys, lowercase (e.g. "w"). */
  keys: Set<string>;
  /** Mouse drag delta in pixels since the last sample. */
  dragX: number;
  dragY: number;
  /** Seconds since the last sample. */
  dt: number;
}

export const PITCH_LIMIT = Math.PI / 2 - 1e-3;

export interface MotionConfig {
  /** Meters per second. */
  moveSpeed: number;
  /** Radians per dragged pixel. */
  lookSpeed: number;
}

export const DEFAULT_MOTION: MotionConfig = { moveSpeed: 1.5, lookSpeed: 0.005 };

export function initialState(
  position: [number, number, number], fovDeg = 90,
): ViewerState {
  return { position, yaw: 0, pitch: 0, fovDeg, quality: "full", inFlight: false };
}

const clamp = (v: number, lo: number, hi: number) =>
  Math.min(Math.max(v, lo), hi);

export function handleInput(
  state: ViewerState, input: InputSample,
  motion: MotionConfig = DEFAULT_MOTION,
): ViewerState {
  let dx = 0, dz = 0;
  if (input.keys.has("w")) dz += 1;
  if (input.keys.has("s")) dz -= 1;
  if (input.keys.has("d")) dx += 1;
  if (input.keys.has("a")) dx -= 1;
  const looked = input.dragX !== 0 || input.dragY !== 0;
  if (dx === 0 && dz === 0 && !looked) return state;

  const yaw = state.yaw + input.dragX * motion.lookSpeed;
  // dragging down (positive dragY) looks down, i.e. decreases pitch
  const pitch = clamp(state.pitch - input.dragY * motion.lookSpeed,
    -PITCH_LIMIT, PITCH_LIMIT);
  const step = motion.moveSpeed * input.dt;
  // forward is the horizontal projection of the look direction
  const fx = Math.sin(yaw), fz = Math.cos(yaw);
  const position: [number, number, number] = [
    state.position[0] + (dz * fx + dx * fz) * step,
    state.position[1],
    state.position[2] + (dz * fz - dx * fx) * step,
  ];
  return { ...state, position, yaw, pitch };
}
