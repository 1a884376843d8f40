/** Application bootstrap: cluster browser + neighbor grids. */

import { ApiError, fetchClusters, fetchContext, fetchGrid, postLabel } from "./api.js";
import { openContextViewer } from "./context.js";
import { applyLabelOverlay, renderGrid, renderGridError } from "./grid.js";
import { openLabelEditor } from "./labeler.js";
import type { GridPayload, PatchDescriptor } from "./types.js";

const GRID_K = 15;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function loadGrids(queryIds: string[]): Promise<void> {
  const gridHost = el<HTMLDivElement>("grid");
  const status = el<HTMLSpanElement>("status");
  status.textContent = `loading ${queryIds.length} grids...`;
  try {
    const payloads: GridPayload[] = [];
    for (const id of queryIds) {
      payloads.push(await fetchGrid(id, GRID_K));
    }
    renderGrid(gridHost, payloads, {
      onLabel: (cell: PatchDescriptor) => {
        openLabelEditor(el("editor-host"), cell, async (draft) => {
          const record = await postLabel(draft.patchId, draft.taxonomyCode, draft.classId, null);
          applyLabelOverlay(gridHost, record.patch_id, record.taxonomy_code);
        });
      },
      onContext: (cell: PatchDescriptor) => {
        openContextViewer(el("viewer-host"), cell.patch_id, fetchContext);
      },
    });
    status.textContent = `${payloads.length} queries, K=${GRID_K}`;
  } catch (err) {
    const message =
      err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
    renderGridError(gridHost, message, () => void loadGrids(queryIds));
    status.textContent = "error";
  }
}

async function boot(): Promise<void> {
  const clusterList = el<HTMLUListElement>("clusters");
  const lookup = el<HTMLInputElement>("patch-lookup");
  const lookupButton = el<HTMLButtonElement>("patch-lookup-go");
  lookupButton.addEventListener("click", () => {
    if (lookup.value.trim()) void loadGrids([lookup.value.trim()]);
  });
  try {
    const clusters = await fetchClusters(4);
    for (const group of clusters) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      link.href = "#";
      link.textContent = `cluster ${group.cluster} (${group.members.length} samples)`;
      link.addEventListener("click", (event) => {
        event.preventDefault();
        void loadGrids(group.members);
      });
      item.appendChild(link);
      clusterList.appendChild(item);
    }
    if (clusters.length > 0) {
      void loadGrids(clusters[0].members);
    }
  } catch (err) {
    el<HTMLSpanElement>("status").textContent = `cluster list unavailable: ${err}`;
  }
}

document.addEventListener("DOMContentLoaded", () => void boot());
