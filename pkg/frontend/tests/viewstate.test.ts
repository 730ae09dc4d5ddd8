import { describe, expect, it } from "vitest";

import { boundary, relabel } from "../src/corrections.js";
import type { SubmitResponse } from "../src/types.js";
import { SubmitInFlightError, ViewState } from "../src/viewstate.js";

function accepted(revision: number): SubmitResponse {
  return {
    revision,
    diff: { spans: [], alignments: [], relabeled: [], removed: [], anomalies: [] },
    hash: "h",
  };
}

describe("pending corrections", () => {
  it("queued corrections render optimistically until resolved", () => {
    const view = new ViewState("s");
    const c = boundary(4, "left", 168);
    view.enqueue(c);
    expect(view.pending).toEqual([c]);
    expect(view.submitting).toBe(false);
  });

  it("ignores the null no-op", () => {
    const view = new ViewState("s");
    view.enqueue(null);
    expect(view.pending).toEqual([]);
  });

  it("clears the batch on a successful submit", () => {
    const view = new ViewState("s");
    view.enqueue(boundary(4, "left", 168));
    const batch = view.beginSubmit();
    expect(batch).toHaveLength(1);
    view.completeSubmit(accepted(1));
    expect(view.pending).toEqual([]);
    expect(view.lastRevision).toBe(1);
    expect(view.needsRefetch).toBe(false);
    expect(view.submitting).toBe(false);
  });

  it("keeps corrections enqueued while a submit is in flight", () => {
    const view = new ViewState("s");
    const first = boundary(4, "left", 168);
    const late = relabel(2, 1);
    view.enqueue(first);
    view.beginSubmit();
    view.enqueue(late);
    expect(view.pending).toEqual([first, late]);
    view.completeSubmit(accepted(1));
    expect(view.pending).toEqual([late]);
  });

  it("reverts the optimistic batch and surfaces a toast on rejection", () => {
    const view = new ViewState("s");
    view.enqueue(boundary(4, "left", 168));
    view.beginSubmit();
    view.failSubmit({ code: "conflicting_constraint", message: "pair conflicts" });
    expect(view.pending).toEqual([]);
    expect(view.submitting).toBe(false);
    expect(view.lastToast).toEqual({
      code: "conflicting_constraint",
      message: "pair conflicts",
    });
    expect(view.lastRevision).toBe(0);
    view.clearToast();
    expect(view.lastToast).toBeNull();
  });
});

describe("submit locking", () => {
  it("disallows a second submit while one is in flight", () => {
    const view = new ViewState("s");
    view.enqueue(boundary(4, "left", 168));
    view.beginSubmit();
    expect(view.submitting).toBe(true);
    expect(() => view.beginSubmit()).toThrow(SubmitInFlightError);
    expect(() => view.discardPending()).toThrow(SubmitInFlightError);
  });

  it("has nothing to submit on an empty queue", () => {
    const view = new ViewState("s");
    expect(view.beginSubmit()).toBeNull();
    expect(view.submitting).toBe(false);
  });

  it("can submit again after the previous batch resolves", () => {
    const view = new ViewState("s");
    view.enqueue(boundary(4, "left", 168));
    view.beginSubmit();
    view.completeSubmit(accepted(1));
    view.enqueue(relabel(2, 1));
    expect(view.beginSubmit()).toHaveLength(1);
  });
});

describe("revision tracking", () => {
  it("flags a refetch when a submit lands on an unexpected revision", () => {
    const view = new ViewState("s");
    view.enqueue(boundary(4, "left", 168));
    view.beginSubmit();
    view.completeSubmit(accepted(5));
    expect(view.lastRevision).toBe(5);
    expect(view.needsRefetch).toBe(true);
    view.acknowledgeRefetch();
    expect(view.needsRefetch).toBe(false);
  });

  it("flags a refetch when a payload arrives from another revision", () => {
    const view = new ViewState("s", 2);
    expect(view.observeRevision(2)).toBe(false);
    expect(view.needsRefetch).toBe(false);
    expect(view.observeRevision(4)).toBe(true);
    expect(view.lastRevision).toBe(4);
    expect(view.needsRefetch).toBe(true);
  });

  it("treats an older payload as stale without moving backwards", () => {
    const view = new ViewState("s", 3);
    expect(view.observeRevision(1)).toBe(true);
    expect(view.lastRevision).toBe(3);
    expect(view.needsRefetch).toBe(true);
  });
});

describe("selection", () => {
  it("narrows from category to cluster to action and resets downstream", () => {
    const view = new ViewState("s");
    view.selectCategory(1);
    view.selectCluster(10);
    view.selectAction(4);
    expect(view.selection).toEqual({ category: 1, cluster: 10, action: 4 });
    view.selectCluster(11);
    expect(view.selection).toEqual({ category: 1, cluster: 11, action: null });
    view.selectCategory(0);
    expect(view.selection).toEqual({ category: 0, cluster: null, action: null });
  });
});
