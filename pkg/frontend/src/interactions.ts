/** Translate review gestures into corrections.
 *
 * Each helper validates what the client can check locally and returns a
 * correction for the pending queue (or null for a recognized no-op).
 * Nothing here talks to the service except the boundary recommendation
 * round-trip, which goes through the injected ApiClient.
 */

import type { ApiClient } from "./api.js";
import {
  ValidationError,
  boundary,
  cannotLink,
  markBackground,
  mustLink,
  relabel,
} from "./corrections.js";
import type { Correction, LayoutPayload, Side } from "./types.js";

interface FramePlacement {
  action: number;
  col: number;
  y: number;
}

/** Where each sampled frame sits in the rendered storyline. */
export function frameIndex(layout: LayoutPayload): Map<number, FramePlacement> {
  const index = new Map<number, FramePlacement>();
  for (const line of layout.lines) {
    for (const point of line.points) {
      index.set(point.frame, { action: line.action, col: point.col, y: point.y });
    }
  }
  return index;
}

export type DragDirection = "closer" | "apart";

/** Dragging one frame toward or away from another while both sit in the
 * same column asserts that the two actions should (or should not) pass
 * through the same unit there. Emits the matching pair correction. */
export function dragAlign(
  layout: LayoutPayload,
  frameA: number,
  frameB: number,
  direction: DragDirection,
): Correction {
  const index = frameIndex(layout);
  const a = index.get(frameA);
  const b = index.get(frameB);
  if (a === undefined || b === undefined) {
    const missing = a === undefined ? frameA : frameB;
    throw new ValidationError(`frame ${missing} is not in the current layout`);
  }
  if (a.col !== b.col) {
    throw new ValidationError(
      `frames must share a column, got ${a.col} and ${b.col}`,
    );
  }
  if (a.action === b.action) {
    throw new ValidationError("cannot align an action with itself");
  }
  if (direction === "closer") {
    return mustLink(a.action, frameA, b.action, frameB);
  }
  if (direction === "apart") {
    return cannotLink(a.action, frameA, b.action, frameB);
  }
  throw new ValidationError(`unknown drag direction ${String(direction)}`);
}

export interface VideoRange {
  start: number;
  end: number;
}

function checkFrameInVideo(frame: number, video: VideoRange): void {
  if (!Number.isInteger(frame) || frame < video.start || frame > video.end) {
    throw new ValidationError(
      `frame ${frame} is outside the video [${video.start}, ${video.end}]`,
    );
  }
}

/** Place a boundary by hand. The frame must fall inside the action's
 * video; everything else is validated server side. */
export function annotateBoundary(
  action: number,
  side: Side,
  frame: number,
  video: VideoRange,
): Correction {
  checkFrameInVideo(frame, video);
  return boundary(action, side, frame);
}

export type BoundaryDecision =
  | { accept: true }
  | { accept: false; roughFrame: number };

/** Ask the service where the boundary most likely sits near a rough
 * guess, then let the caller confirm or refine. Each refinement costs
 * one more recommendation round-trip; acceptance produces exactly one
 * correction, submitted later with the rest of the batch. */
export async function annotateBoundaryWithRecommendation(
  api: ApiClient,
  sessionId: string,
  action: number,
  side: Side,
  roughFrame: number,
  video: VideoRange,
  decide: (suggested: number, round: number) => BoundaryDecision | Promise<BoundaryDecision>,
  maxRounds = 16,
): Promise<Correction> {
  let rough = roughFrame;
  for (let round = 0; round < maxRounds; round += 1) {
    checkFrameInVideo(rough, video);
    const recommendation = await api.recommendBoundary(sessionId, action, side, rough);
    const decision = await decide(recommendation.frame, round);
    if (decision.accept) {
      checkFrameInVideo(recommendation.frame, video);
      return boundary(action, side, recommendation.frame);
    }
    rough = decision.roughFrame;
  }
  throw new ValidationError(`no boundary accepted after ${maxRounds} rounds`);
}

export interface CategoryOption {
  id: number;
  name: string;
}

export const BACKGROUND = "background";

/** Move an action to another category, or mark it as background.
 * Returns null when the target equals the current category (a no-op
 * the service never needs to see). */
export function relabelAction(
  action: number,
  currentCategory: number,
  target: number | string,
  categories: CategoryOption[],
): Correction | null {
  if (target === BACKGROUND) {
    return markBackground(action);
  }
  let resolved: number | undefined;
  if (typeof target === "number") {
    resolved = categories.find((c) => c.id === target)?.id;
  } else {
    resolved = categories.find((c) => c.name === target)?.id;
  }
  if (resolved === undefined) {
    throw new ValidationError(`unknown category ${String(target)}`);
  }
  if (resolved === currentCategory) {
    return null;
  }
  return relabel(action, resolved);
}
