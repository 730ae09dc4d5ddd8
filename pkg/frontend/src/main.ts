/** Browser bootstrap.
 *
 * Wires the API client, the view state and the renderer into a minimal
 * page: open a session against a bundle path, pick a category from the
 * overview, inspect cluster layouts, queue corrections and submit them
 * as a batch. All review logic lives in the imported modules; this file
 * only moves data between them and the DOM.
 */

import { ApiClient, ServiceError } from "./api.js";
import type { LayoutPayload, OverviewPayload } from "./types.js";
import { ViewState } from "./viewstate.js";
import { dragAlign } from "./interactions.js";
import { renderStoryline } from "./render.js";

interface AppElements {
  bundleInput: HTMLInputElement;
  openButton: HTMLButtonElement;
  status: HTMLElement;
  categories: HTMLElement;
  canvas: HTMLElement;
  submitButton: HTMLButtonElement;
  pendingCount: HTMLElement;
}

function requireElement<T extends Element>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing #${id}`);
  }
  return el as unknown as T;
}

export function startApp(baseUrl: string): void {
  const els: AppElements = {
    bundleInput: requireElement<HTMLInputElement>("bundle-path"),
    openButton: requireElement<HTMLButtonElement>("open-session"),
    status: requireElement<HTMLElement>("status"),
    categories: requireElement<HTMLElement>("categories"),
    canvas: requireElement<HTMLElement>("canvas"),
    submitButton: requireElement<HTMLButtonElement>("submit"),
    pendingCount: requireElement<HTMLElement>("pending-count"),
  };

  const api = new ApiClient(baseUrl);
  let view: ViewState | null = null;
  let overview: OverviewPayload | null = null;
  let layout: LayoutPayload | null = null;
  let dragStart: number | null = null;

  function setStatus(text: string): void {
    els.status.textContent = text;
  }

  function repaint(): void {
    if (view === null) {
      return;
    }
    els.pendingCount.textContent = String(view.pending.length);
    els.submitButton.disabled = view.submitting || view.pending.length === 0;
    if (view.lastToast !== null) {
      setStatus(`${view.lastToast.code}: ${view.lastToast.message}`);
      view.clearToast();
    }
    if (layout !== null) {
      const category = overview?.categories.find(
        (c) => c.id === view?.selection.category,
      );
      els.canvas.innerHTML = renderStoryline(layout, {
        selectedAction: view.selection.action,
        pending: view.pending,
        categoryName: category?.name ?? null,
      });
    }
  }

  async function refetchLayout(): Promise<void> {
    if (view === null || view.selection.cluster === null) {
      return;
    }
    layout = await api.clusterLayout(view.sessionId, view.selection.cluster, 1);
    view.observeRevision(layout.revision ?? view.lastRevision);
    view.acknowledgeRefetch();
    repaint();
  }

  async function refreshOverview(): Promise<void> {
    if (view === null) {
      return;
    }
    overview = await api.overview(view.sessionId);
    els.categories.innerHTML = "";
    for (const row of overview.categories) {
      const button = document.createElement("button");
      button.textContent = `${row.name} (${row.actions})`;
      button.addEventListener("click", () => {
        if (view === null || row.root_cluster === null) {
          return;
        }
        view.selectCategory(row.id);
        view.selectCluster(row.root_cluster);
        void refetchLayout();
      });
      els.categories.appendChild(button);
    }
  }

  els.openButton.addEventListener("click", () => {
    void (async () => {
      try {
        const info = await api.createSession(els.bundleInput.value);
        view = new ViewState(info.session_id, info.revision);
        setStatus(`session ${info.session_id} at revision ${info.revision}`);
        await refreshOverview();
        repaint();
      } catch (error) {
        setStatus(error instanceof ServiceError ? error.message : String(error));
      }
    })();
  });

  els.submitButton.addEventListener("click", () => {
    void (async () => {
      if (view === null) {
        return;
      }
      const batch = view.beginSubmit();
      if (batch === null) {
        return;
      }
      repaint();
      try {
        const response = await api.submitCorrections(view.sessionId, batch);
        view.completeSubmit(response);
        setStatus(`revision ${response.revision}`);
      } catch (error) {
        view.failSubmit(
          error instanceof ServiceError
            ? error
            : { code: "unknown_error", message: String(error) },
        );
      }
      if (view.needsRefetch) {
        await refetchLayout();
      }
      repaint();
    })();
  });

  els.canvas.addEventListener("click", (event) => {
    if (view === null || layout === null) {
      return;
    }
    const target = event.target as Element | null;
    const frameAttr = target?.getAttribute?.("data-frame");
    if (frameAttr == null) {
      return;
    }
    const frame = Number(frameAttr);
    if (dragStart === null) {
      dragStart = frame;
      setStatus(`aligning from frame ${frame}; pick a frame in the same column`);
      return;
    }
    try {
      const direction = event.shiftKey ? "apart" : "closer";
      view.enqueue(dragAlign(layout, dragStart, frame, direction));
    } catch (error) {
      setStatus(String(error));
    }
    dragStart = null;
    repaint();
  });
}

declare global {
  interface Window {
    actionloomStart?: (baseUrl: string) => void;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.actionloomStart = startApp;
}
