import type { CompletionController } from "./controller.js";
import type { SessionState } from "./session.js";

/** Mounts the translator workspace: source pane, left/right translation
 * panes around the completion point, typed-prefix input, candidate list.
 * All behavior lives in the controller; this file only moves DOM. */
export function mountWorkspace(root: HTMLElement, controller: CompletionController): () => void {
  root.innerHTML = "";
  const src = textarea(root, "wlac-src", "source text");
  const left = textarea(root, "wlac-left", "translation before the cursor");
  const typed = input(root, "wlac-typed", "typed prefix");
  const list = document.createElement("ol");
  list.className = "wlac-candidates";
  root.appendChild(list);
  const right = textarea(root, "wlac-right", "translation after the cursor");
  const banner = document.createElement("div");
  banner.className = "wlac-error";
  banner.hidden = true;
  root.appendChild(banner);

  src.addEventListener("input", () => controller.setSource(src.value));
  left.addEventListener("input", () => controller.setLeft(left.value));
  right.addEventListener("input", () => controller.setRight(right.value));
  typed.addEventListener("input", () => controller.setTyped(typed.value));
  typed.addEventListener("keydown", (ev) => {
    if (controller.handleKey(ev.key)) ev.preventDefault();
  });

  const render = (state: SessionState) => {
    if (left.value !== state.leftText) left.value = state.leftText;
    if (typed.value !== state.typed) typed.value = state.typed;
    list.innerHTML = "";
    state.candidates.forEach((c, i) => {
      const item = document.createElement("li");
      item.textContent = `${i + 1}. ${c.word}`;
      item.addEventListener("click", () => {
        controller.acceptCandidate(i);
        typed.focus();
      });
      list.appendChild(item);
    });
    banner.hidden = state.error === null;
    banner.textContent = state.error ?? "";
  };
  const unsubscribe = controller.subscribe(render);
  render(controller.getState());
  return unsubscribe;
}

function textarea(root: HTMLElement, cls: string, label: string): HTMLTextAreaElement {
  const el = document.createElement("textarea");
  el.className = cls;
  el.setAttribute("aria-label", label);
  root.appendChild(el);
  return el;
}

function input(root: HTMLElement, cls: string, label: string): HTMLInputElement {
  const el = document.createElement("input");
  el.className = cls;
  el.setAttribute("aria-label", label);
  root.appendChild(el);
  return el;
}
