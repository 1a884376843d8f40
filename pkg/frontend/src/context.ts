/**
 * Source-image context viewer: shows the original image the patch was cut
 * from with the patch outlined in red, and zooms around that rectangle.
 */

import { ApiError } from "./api.js";
import type { PatchContext } from "./types.js";

const ZOOM_LEVELS = [0.5, 1, 2, 4];

export function openContextViewer(
  host: HTMLElement,
  patchId: string,
  fetcher: (patchId: string) => Promise<PatchContext>,
): HTMLElement {
  host.querySelector(".context-viewer")?.remove();
  const modal = document.createElement("div");
  modal.className = "context-viewer";
  modal.dataset.patchId = patchId;
  const close = document.createElement("button");
  close.className = "close";
  close.textContent = "close";
  close.addEventListener("click", () => modal.remove());
  modal.appendChild(close);
  host.appendChild(modal);

  fetcher(patchId)
    .then((ctx) => renderContext(modal, ctx))
    .catch((err) => {
      const notice = document.createElement("p");
      notice.className = "notice";
      notice.textContent =
        err instanceof ApiError && err.status === 410
          ? "source image unavailable"
          : `failed to load context: ${err instanceof Error ? err.message : err}`;
      modal.appendChild(notice);
    });
  return modal;
}

function renderContext(modal: HTMLElement, ctx: PatchContext): void {
  let zoomIndex = 1;
  const toolbar = document.createElement("div");
  toolbar.className = "toolbar";
  const out = document.createElement("button");
  out.textContent = "-";
  const level = document.createElement("span");
  const zin = document.createElement("button");
  zin.textContent = "+";
  const caption = document.createElement("span");
  caption.className = "caption";
  caption.textContent = `${ctx.imageId} (${ctx.x}, ${ctx.y}, ${ctx.side})`;
  toolbar.append(out, level, zin, caption);

  const stage = document.createElement("div");
  stage.className = "stage";
  const frame = document.createElement("div");
  frame.className = "frame";
  const img = document.createElement("img");
  img.src = ctx.imageUrl;
  img.alt = ctx.imageId;
  const box = document.createElement("div");
  box.className = "patch-box";
  box.style.left = `${ctx.x}px`;
  box.style.top = `${ctx.y}px`;
  box.style.width = `${ctx.side}px`;
  box.style.height = `${ctx.side}px`;
  frame.append(img, box);
  stage.appendChild(frame);

  const apply = () => {
    const z = ZOOM_LEVELS[zoomIndex];
    frame.style.transform = `scale(${z})`;
    frame.style.transformOrigin = `${ctx.x + ctx.side / 2}px ${ctx.y + ctx.side / 2}px`;
    level.textContent = `${z}x`;
    modal.dataset.zoom = String(z);
  };
  out.addEventListener("click", () => {
    zoomIndex = Math.max(0, zoomIndex - 1);
    apply();
  });
  zin.addEventListener("click", () => {
    zoomIndex = Math.min(ZOOM_LEVELS.length - 1, zoomIndex + 1);
    apply();
  });
  apply();
  modal.append(toolbar, stage);
}
