/** Client-side session state.
 *
 * Holds the current selection, the queue of corrections that have not
 * been accepted by the service yet, and the last revision observed.
 * Rendering reads this state but never mutates it; all transitions go
 * through the methods below so the submit lifecycle stays auditable:
 *
 *   - queued corrections render optimistically until resolved
 *   - only one submit may be in flight at a time
 *   - an accepted batch is cleared from the queue
 *   - a rejected batch is dropped (the optimistic view reverts) and the
 *     error is surfaced for a toast
 *   - a response carrying an unexpected revision marks the view stale
 *     so the caller refetches its layout
 */

import type { Correction, CorrectionDiff, SubmitResponse } from "./types.js";

export interface ToastMessage {
  code: string;
  message: string;
}

export class SubmitInFlightError extends Error {
  constructor() {
    super("a correction batch is already being submitted");
    this.name = "SubmitInFlightError";
  }
}

export interface Selection {
  category: number | null;
  cluster: number | null;
  action: number | null;
}

export class ViewState {
  sessionId: string;
  selection: Selection;
  lastRevision: number;
  needsRefetch: boolean;
  lastToast: ToastMessage | null;

  private queue: Correction[];
  private inFlight: number;

  constructor(sessionId: string, revision = 0) {
    this.sessionId = sessionId;
    this.selection = { category: null, cluster: null, action: null };
    this.lastRevision = revision;
    this.needsRefetch = false;
    this.lastToast = null;
    this.queue = [];
    this.inFlight = 0;
  }

  get pending(): Correction[] {
    return this.queue.slice();
  }

  get submitting(): boolean {
    return this.inFlight > 0;
  }

  selectCategory(category: number | null): void {
    this.selection = { category, cluster: null, action: null };
  }

  selectCluster(cluster: number | null): void {
    this.selection = { ...this.selection, cluster, action: null };
  }

  selectAction(action: number | null): void {
    this.selection = { ...this.selection, action };
  }

  /** Queue a correction for the next submit; it renders optimistically
   * from this point on. null (a recognized no-op) is ignored. */
  enqueue(correction: Correction | null): void {
    if (correction !== null) {
      this.queue.push(correction);
    }
  }

  discardPending(): void {
    if (this.submitting) {
      throw new SubmitInFlightError();
    }
    this.queue = [];
  }

  /** Claim the queued corrections for submission. Throws when a submit
   * is already in flight; returns null when there is nothing to send.
   * The claimed batch keeps rendering optimistically until resolved. */
  beginSubmit(): Correction[] | null {
    if (this.submitting) {
      throw new SubmitInFlightError();
    }
    if (this.queue.length === 0) {
      return null;
    }
    this.inFlight = this.queue.length;
    return this.queue.slice(0, this.inFlight);
  }

  /** The service accepted the batch: drop it from the queue (corrections
   * enqueued during the flight stay) and adopt the new revision. */
  completeSubmit(response: SubmitResponse): CorrectionDiff {
    const expected = this.lastRevision + 1;
    this.queue = this.queue.slice(this.inFlight);
    this.inFlight = 0;
    if (response.revision !== expected) {
      this.needsRefetch = true;
    }
    this.lastRevision = response.revision;
    return response.diff;
  }

  /** The service rejected the batch: drop it so the optimistic view
   * reverts, and surface the error for a toast. */
  failSubmit(error: { code?: string; message?: string }): void {
    this.queue = this.queue.slice(this.inFlight);
    this.inFlight = 0;
    this.lastToast = {
      code: error.code ?? "unknown_error",
      message: error.message ?? "correction rejected",
    };
  }

  /** Record the revision stamped on a fetched payload. Returns true when
   * the payload disagrees with the revision this view was rendered at,
   * in which case the caller should refetch whatever it displays. */
  observeRevision(revision: number): boolean {
    if (revision === this.lastRevision) {
      return false;
    }
    if (revision > this.lastRevision) {
      this.lastRevision = revision;
    }
    this.needsRefetch = true;
    return true;
  }

  acknowledgeRefetch(): void {
    this.needsRefetch = false;
  }

  clearToast(): void {
    this.lastToast = null;
  }
}
