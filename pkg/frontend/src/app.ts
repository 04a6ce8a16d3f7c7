/**
 * Wires the textarea, dropdown and completion client together.
 *
 * State matches the editor contract: one buffer + cursor, at most one
 * in-flight request (enforced by the client), and the last suggestion list
 * lives inside the dropdown. Typing is never blocked — requests ride along
 * asynchronously and failures only light up a badge.
 */

import { CompletionClient } from "./client.js";
import { SuggestionDropdown } from "./dropdown.js";
import { API_TABLE, allMembers } from "./api_table.js";
import { insertCompletion, resolveCandidates, triggerAt } from "./editor.js";

export interface AppHandles {
  editor: HTMLTextAreaElement;
  dropdown: SuggestionDropdown;
  client: CompletionClient;
}

export function setupApp(
  doc: Document,
  client: CompletionClient = new CompletionClient(""),
): AppHandles {
  const editor = doc.getElementById("editor") as HTMLTextAreaElement;
  const dropdownRoot = doc.getElementById("dropdown") as HTMLElement;
  const badge = doc.getElementById("badge") as HTMLElement;
  const status = doc.getElementById("status") as HTMLElement;
  const union = allMembers(API_TABLE);

  const dropdown = new SuggestionDropdown(dropdownRoot, (name) => {
    const next = insertCompletion(editor.value, cursor(), name);
    editor.value = next.buffer;
    editor.setSelectionRange(next.cursor, next.cursor);
    editor.focus();
  });

  function cursor(): number {
    return editor.selectionStart ?? editor.value.length;
  }

  function flash(message: string): void {
    badge.textContent = message;
    badge.style.display = message ? "inline-block" : "none";
  }

  editor.addEventListener("keydown", (ev) => {
    if (dropdown.handleKey(ev.key)) ev.preventDefault();
  });

  editor.addEventListener("input", () => {
    const trig = triggerAt(editor.value, cursor());
    if (!trig) {
      dropdown.hide();
      client.cancel();
      return;
    }
    const candidates = resolveCandidates(
      API_TABLE, trig.context, trig.receiver, union);
    client.request(
      { context: trig.context, receiver: trig.receiver, candidates },
      (resp) => {
        flash("");
        dropdown.show(resp.suggestions);
      },
      (err) => flash(err.message),
    );
  });

  editor.addEventListener("blur", () => {
    // let a click on a dropdown row land first
    setTimeout(() => dropdown.hide(), 100);
  });

  client.health().then(
    (h) => {
      status.textContent =
        `model ${h.model} — ${h.param_count.toLocaleString()} parameters`;
    },
    () => {
      status.textContent = "service unreachable — is `codecomplete serve` running?";
    },
  );

  return { editor, dropdown, client };
}
