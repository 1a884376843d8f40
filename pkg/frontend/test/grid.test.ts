import { beforeEach, describe, expect, it, vi } from "vitest";

import { applyLabelOverlay, renderGrid, renderGridError } from "../src/grid.js";
import type { GridNeighbor, GridPayload, PatchDescriptor } from "../src/types.js";

function descriptor(id: string, label: string | null = null): PatchDescriptor {
  return {
    patch_id: id,
    image_id: "img0",
    x: 0,
    y: 0,
    side: 64,
    sol: 1,
    site: 1,
    drive: 0,
    eye: "Right",
    split: "Test",
    image_url: `/api/patch/${id}/image`,
    label: label
      ? { patch_id: id, taxonomy_code: label, class_id: null, free_text: null, annotator: "x", timestamp: 1 }
      : null,
  };
}

function neighbor(id: string, distance: number, same: boolean, label: string | null = null): GridNeighbor {
  return { ...descriptor(id, label), distance, same_site_drive: same };
}

function payload(k: number): GridPayload {
  return {
    query: descriptor("q0"),
    k,
    neighbors: Array.from({ length: k }, (_, i) => neighbor(`n${i}`, i * 0.1, i % 3 === 0)),
  };
}

describe("renderGrid", () => {
  let host: HTMLElement;
  beforeEach(() => {
    document.body.innerHTML = "<div id='host'></div>";
    host = document.getElementById("host")!;
  });

  it("renders k+1 columns per row for k=15", () => {
    renderGrid(host, [payload(15)], { onLabel: () => {}, onContext: () => {} });
    const row = host.querySelector(".grid-row")!;
    expect(row.querySelectorAll(".cell").length).toBe(16);
    expect(row.querySelector(".cell")!.classList.contains("query")).toBe(true);
  });

  it("keeps neighbors in server order without re-sorting", () => {
    const p = payload(5);
    // server order is authoritative even if distances look shuffled
    p.neighbors.reverse();
    renderGrid(host, [p], { onLabel: () => {}, onContext: () => {} });
    const ids = [...host.querySelectorAll<HTMLElement>(".cell.neighbor")].map(
      (c) => c.dataset.patchId,
    );
    expect(ids).toEqual(["n4", "n3", "n2", "n1", "n0"]);
  });

  it("applies the red/blue convention from same_site_drive", () => {
    renderGrid(
      host,
      [{ query: descriptor("q0"), k: 2, neighbors: [neighbor("a", 0.1, false), neighbor("b", 0.2, true)] }],
      { onLabel: () => {}, onContext: () => {} },
    );
    const cells = host.querySelectorAll<HTMLElement>(".cell.neighbor");
    expect(cells[0].classList.contains("different-site")).toBe(true);
    expect(cells[1].classList.contains("same-site")).toBe(true);
  });

  it("renders the query plus a notice when no neighbor is eligible", () => {
    renderGrid(host, [{ query: descriptor("q0"), k: 15, neighbors: [] }], {
      onLabel: () => {},
      onContext: () => {},
    });
    expect(host.querySelectorAll(".cell").length).toBe(1);
    expect(host.querySelector(".no-neighbors")!.textContent).toBe("no eligible neighbors");
  });

  it("shows existing labels as overlays", () => {
    renderGrid(
      host,
      [{ query: descriptor("q0", "C1"), k: 1, neighbors: [neighbor("a", 0.1, false, "D4")] }],
      { onLabel: () => {}, onContext: () => {} },
    );
    const overlays = [...host.querySelectorAll(".label-overlay")].map((o) => o.textContent);
    expect(overlays).toEqual(["C1", "D4"]);
  });

  it("routes left click to labeling and right click to context", () => {
    const onLabel = vi.fn();
    const onContext = vi.fn();
    renderGrid(host, [payload(2)], { onLabel, onContext });
    const cell = host.querySelector<HTMLElement>(".cell.neighbor")!;
    cell.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    expect(onLabel).toHaveBeenCalledTimes(1);
    expect(onLabel.mock.calls[0][0].patch_id).toBe("n0");
    cell.dispatchEvent(new MouseEvent("contextmenu", { bubbles: true, cancelable: true }));
    expect(onContext).toHaveBeenCalledTimes(1);
  });

  it("updates overlays in place after a label post", () => {
    renderGrid(host, [payload(3)], { onLabel: () => {}, onContext: () => {} });
    applyLabelOverlay(host, "n1", "B1-G2-T2");
    const cell = host.querySelector<HTMLElement>(`.cell[data-patch-id="n1"]`)!;
    expect(cell.querySelector(".label-overlay")!.textContent).toBe("B1-G2-T2");
  });

  it("renders a retry affordance on fetch failure", () => {
    const retry = vi.fn();
    renderGridError(host, "503: unavailable", retry);
    expect(host.querySelector(".grid-error")!.textContent).toContain("503");
    host.querySelector("button")!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    expect(retry).toHaveBeenCalled();
  });
});
