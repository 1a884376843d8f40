/**
 * Click-to-label editor. The code input validates live against the shared
 * grammar; submit stays disabled until the draft is a complete valid code.
 * A rejected submission (e.g. a 422 from a racing validator change)
 * surfaces the server message and preserves the draft.
 */

import { validateCode } from "./grammar.js";
import type { PatchDescriptor } from "./types.js";

export interface LabelSubmit {
  patchId: string;
  taxonomyCode: string;
  classId: number | null;
}

export function openLabelEditor(
  host: HTMLElement,
  cell: PatchDescriptor,
  submit: (draft: LabelSubmit) => Promise<void>,
): HTMLElement {
  host.querySelector(".label-editor")?.remove();
  const panel = document.createElement("div");
  panel.className = "label-editor";
  panel.dataset.patchId = cell.patch_id;

  const title = document.createElement("h3");
  title.textContent = `label ${cell.patch_id}`;
  const codeInput = document.createElement("input");
  codeInput.className = "code-input";
  codeInput.placeholder = "taxonomy code, e.g. A-G2-T1-L2-N1-F2f";
  codeInput.value = cell.label?.taxonomy_code ?? "";
  const classInput = document.createElement("input");
  classInput.className = "class-input";
  classInput.type = "number";
  classInput.placeholder = "class id (optional)";
  if (cell.label?.class_id != null) classInput.value = String(cell.label.class_id);
  const hint = document.createElement("p");
  hint.className = "hint";
  const submitButton = document.createElement("button");
  submitButton.className = "submit";
  submitButton.textContent = "save label";
  const cancel = document.createElement("button");
  cancel.className = "cancel";
  cancel.textContent = "cancel";
  cancel.addEventListener("click", () => panel.remove());

  const refresh = () => {
    const verdict = validateCode(codeInput.value);
    if (verdict.state === "valid") {
      submitButton.disabled = false;
      hint.textContent = "ok";
      hint.className = "hint ok";
    } else {
      submitButton.disabled = true;
      hint.textContent = verdict.state === "incomplete" ? verdict.hint : verdict.message;
      hint.className = `hint ${verdict.state}`;
    }
  };
  codeInput.addEventListener("input", refresh);
  refresh();

  submitButton.addEventListener("click", async () => {
    const verdict = validateCode(codeInput.value);
    if (verdict.state !== "valid") return;
    submitButton.disabled = true;
    try {
      await submit({
        patchId: cell.patch_id,
        taxonomyCode: verdict.canonical,
        classId: classInput.value === "" ? null : Number(classInput.value),
      });
      panel.remove();
    } catch (err) {
      // keep the draft; show what the server said
      hint.textContent = err instanceof Error ? err.message : String(err);
      hint.className = "hint invalid";
      submitButton.disabled = false;
    }
  });

  panel.append(title, codeInput, classInput, hint, submitButton, cancel);
  host.appendChild(panel);
  codeInput.focus();
  return panel;
}
