/** Correction builders and canonical JSON serialization.
 *
 * The service hashes and logs correction batches after serializing them
 * with sorted keys and no whitespace. stableStringify reproduces those
 * bytes so recorded interactions can be compared against stored fixtures
 * and so request bodies are reproducible across clients. */

import type { Correction, Side } from "./types.js";

export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}

function requireInt(value: number, label: string): number {
  if (!Number.isInteger(value)) {
    throw new ValidationError(`${label} must be an integer, got ${value}`);
  }
  return value;
}

/** Pair corrections are stored with action ids ascending; the frame list
 * travels with its action so the service sees (action, frame) intact. */
function orderedPair(
  actionA: number,
  frameA: number,
  actionB: number,
  frameB: number,
): { pair: [number, number]; frames: [number, number] } {
  requireInt(actionA, "action id");
  requireInt(actionB, "action id");
  requireInt(frameA, "frame");
  requireInt(frameB, "frame");
  if (actionA === actionB) {
    throw new ValidationError("pair corrections need two distinct actions");
  }
  if (actionA < actionB) {
    return { pair: [actionA, actionB], frames: [frameA, frameB] };
  }
  return { pair: [actionB, actionA], frames: [frameB, frameA] };
}

export function mustLink(
  actionA: number,
  frameA: number,
  actionB: number,
  frameB: number,
): Correction {
  return { kind: "must_link", ...orderedPair(actionA, frameA, actionB, frameB) };
}

export function cannotLink(
  actionA: number,
  frameA: number,
  actionB: number,
  frameB: number,
): Correction {
  return { kind: "cannot_link", ...orderedPair(actionA, frameA, actionB, frameB) };
}

export function boundary(action: number, side: Side, frame: number): Correction {
  requireInt(action, "action id");
  requireInt(frame, "frame");
  if (side !== "left" && side !== "right") {
    throw new ValidationError(`side must be "left" or "right", got ${side}`);
  }
  return { kind: "boundary", action, side, frame };
}

export function relabel(action: number, category: number): Correction {
  requireInt(action, "action id");
  requireInt(category, "category id");
  return { kind: "relabel", action, category };
}

export function markBackground(action: number): Correction {
  requireInt(action, "action id");
  return { kind: "mark_background", action };
}

/** Serialize with keys sorted recursively and separators (",", ":"),
 * matching Python's json.dumps(obj, sort_keys=True, separators=(",", ":")).
 * Only finite numbers, strings, booleans, nulls, arrays and plain objects
 * appear in correction payloads, so JSON.stringify handles each scalar. */
export function stableStringify(value: unknown): string {
  if (value === null || typeof value !== "object") {
    if (typeof value === "number" && !Number.isFinite(value)) {
      throw new ValidationError("cannot serialize non-finite number");
    }
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map((item) => stableStringify(item)).join(",") + "]";
  }
  const record = value as Record<string, unknown>;
  const keys = Object.keys(record).sort();
  const parts = keys.map(
    (key) => JSON.stringify(key) + ":" + stableStringify(record[key]),
  );
  return "{" + parts.join(",") + "}";
}

/** Bytes of the POST body for a correction batch. */
export function encodeBatch(corrections: Correction[]): string {
  return stableStringify({ corrections });
}
