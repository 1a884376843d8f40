/**
 * Neighbor-grid rendering: one row per query, the query patch leftmost,
 * then the neighbors in exactly the order the server returned them.
 * Border colors follow the review convention: query green, neighbor red
 * when it comes from a different site/drive, blue when from the same one.
 */

import type { GridNeighbor, GridPayload, PatchDescriptor } from "./types.js";

export interface GridCallbacks {
  onLabel: (cell: PatchDescriptor) => void;
  onContext: (cell: PatchDescriptor) => void;
}

export function neighborColorClass(neighbor: GridNeighbor): string {
  return neighbor.same_site_drive ? "same-site" : "different-site";
}

function makeCell(
  cell: PatchDescriptor,
  extraClass: string,
  callbacks: GridCallbacks,
  title: string,
): HTMLElement {
  const fig = document.createElement("figure");
  fig.className = `cell ${extraClass}`;
  fig.dataset.patchId = cell.patch_id;
  fig.title = title;
  const img = document.createElement("img");
  img.src = cell.image_url;
  img.alt = cell.patch_id;
  fig.appendChild(img);
  if (cell.label) {
    const overlay = document.createElement("figcaption");
    overlay.className = "label-overlay";
    overlay.textContent = cell.label.taxonomy_code;
    fig.appendChild(overlay);
  }
  fig.addEventListener("click", () => callbacks.onLabel(cell));
  fig.addEventListener("contextmenu", (event) => {
    event.preventDefault();
    callbacks.onContext(cell);
  });
  return fig;
}

export function renderGrid(
  container: HTMLElement,
  payloads: GridPayload[],
  callbacks: GridCallbacks,
): void {
  container.textContent = "";
  for (const payload of payloads) {
    const row = document.createElement("div");
    row.className = "grid-row";
    row.dataset.queryId = payload.query.patch_id;
    row.appendChild(makeCell(payload.query, "query", callbacks, `query ${payload.query.patch_id}`));
    if (payload.neighbors.length === 0) {
      const empty = document.createElement("span");
      empty.className = "no-neighbors";
      empty.textContent = "no eligible neighbors";
      row.appendChild(empty);
    }
    for (const neighbor of payload.neighbors) {
      row.appendChild(
        makeCell(
          neighbor,
          `neighbor ${neighborColorClass(neighbor)}`,
          callbacks,
          `d=${neighbor.distance.toFixed(4)}`,
        ),
      );
    }
    container.appendChild(row);
  }
}

export function renderGridError(container: HTMLElement, message: string, onRetry: () => void): void {
  container.textContent = "";
  const box = document.createElement("div");
  box.className = "grid-error";
  const text = document.createElement("span");
  text.textContent = message;
  const retry = document.createElement("button");
  retry.textContent = "retry";
  retry.addEventListener("click", onRetry);
  box.appendChild(text);
  box.appendChild(retry);
  container.appendChild(box);
}

/** Update the label overlay of every cell showing `patchId` in place. */
export function applyLabelOverlay(container: HTMLElement, patchId: string, code: string): void {
  const cells = container.querySelectorAll<HTMLElement>(`.cell[data-patch-id="${patchId}"]`);
  cells.forEach((cell) => {
    let overlay = cell.querySelector<HTMLElement>(".label-overlay");
    if (!overlay) {
      overlay = document.createElement("figcaption");
      overlay.className = "label-overlay";
      cell.appendChild(overlay);
    }
    overlay.textContent = code;
  });
}
