import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiError } from "../src/api.js";
import { openLabelEditor } from "../src/labeler.js";
import type { PatchDescriptor } from "../src/types.js";

const cell: PatchDescriptor = {
  patch_id: "p1",
  image_id: "img0",
  x: 0,
  y: 0,
  side: 64,
  sol: 1,
  site: 1,
  drive: 0,
  eye: "Right",
  split: "Test",
  image_url: "/api/patch/p1/image",
  label: null,
};

function type(input: HTMLInputElement, value: string) {
  input.value = value;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

describe("openLabelEditor", () => {
  let host: HTMLElement;
  beforeEach(() => {
    document.body.innerHTML = "<div id='host'></div>";
    host = document.getElementById("host")!;
  });

  it("enables submit only for a complete valid code", () => {
    const panel = openLabelEditor(host, cell, async () => {});
    const input = panel.querySelector<HTMLInputElement>(".code-input")!;
    const submit = panel.querySelector<HTMLButtonElement>(".submit")!;
    expect(submit.disabled).toBe(true);
    type(input, "E1");
    expect(submit.disabled).toBe(true);
    expect(panel.querySelector(".hint")!.classList.contains("invalid")).toBe(true);
    type(input, "A-G2-T1-L2-N1-F2f");
    expect(submit.disabled).toBe(false);
    expect(panel.querySelector(".hint")!.classList.contains("ok")).toBe(true);
  });

  it("shows a segment-level hint while typing", () => {
    const panel = openLabelEditor(host, cell, async () => {});
    const input = panel.querySelector<HTMLInputElement>(".code-input")!;
    type(input, "A-G2-T1");
    const hint = panel.querySelector(".hint")!;
    expect(hint.classList.contains("incomplete")).toBe(true);
    expect(hint.textContent).toContain("L");
  });

  it("submits the canonical code and closes", async () => {
    const submit = vi.fn(async () => {});
    const panel = openLabelEditor(host, cell, submit);
    type(panel.querySelector<HTMLInputElement>(".code-input")!, "C3");
    const classInput = panel.querySelector<HTMLInputElement>(".class-input")!;
    type(classInput, "21");
    panel.querySelector<HTMLButtonElement>(".submit")!.click();
    await vi.waitFor(() => expect(submit).toHaveBeenCalled());
    expect(submit.mock.calls[0][0]).toEqual({ patchId: "p1", taxonomyCode: "C3", classId: 21 });
    await vi.waitFor(() => expect(host.querySelector(".label-editor")).toBeNull());
  });

  it("keeps the draft and shows the message on a server 422", async () => {
    const submit = vi.fn(async () => {
      throw new ApiError(422, 'rejected: segment "G9"');
    });
    const panel = openLabelEditor(host, cell, submit);
    const input = panel.querySelector<HTMLInputElement>(".code-input")!;
    type(input, "B1-G2-T1");
    panel.querySelector<HTMLButtonElement>(".submit")!.click();
    await vi.waitFor(() =>
      expect(panel.querySelector(".hint")!.textContent).toContain("G9"),
    );
    expect(host.querySelector(".label-editor")).not.toBeNull();
    expect(input.value).toBe("B1-G2-T1");
    expect(panel.querySelector<HTMLButtonElement>(".submit")!.disabled).toBe(false);
  });
});
