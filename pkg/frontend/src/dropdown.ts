/**
 * The suggestion dropdown: at most five rows, each with a probability bar,
 * arrow-key navigation and Enter-to-accept.
 */

import type { Suggestion } from "./client.js";

export const MAX_ROWS = 5;

export class SuggestionDropdown {
  private items: Suggestion[] = [];
  private index = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly onAccept: (name: string) => void,
  ) {
    root.classList.add("suggestions");
    root.setAttribute("role", "listbox");
    this.hide();
  }

  get visible(): boolean {
    return this.root.style.display !== "none";
  }

  /** Replace the contents; empty input hides the dropdown instead. */
  show(suggestions: Suggestion[]): void {
    this.items = suggestions.slice(0, MAX_ROWS);
    if (this.items.length === 0) {
      this.hide();
      return;
    }
    this.index = 0;
    this.render();
    this.root.style.display = "block";
  }

  hide(): void {
    this.items = [];
    this.root.style.display = "none";
    this.root.replaceChildren();
  }

  selected(): string | null {
    return this.items.length ? this.items[this.index].name : null;
  }

  /**
   * Route a keydown. Returns true when the key was consumed (so the editor
   * should preventDefault), false when typing should proceed normally.
   */
  handleKey(key: string): boolean {
    if (!this.visible) return false;
    switch (key) {
      case "ArrowDown":
        this.index = Math.min(this.index + 1, this.items.length - 1);
        this.render();
        return true;
      case "ArrowUp":
        this.index = Math.max(this.index - 1, 0);
        this.render();
        return true;
      case "Enter":
      case "Tab": {
        const name = this.selected();
        this.hide();
        if (name !== null) this.onAccept(name);
        return true;
      }
      case "Escape":
        this.hide();
        return true;
      default:
        return false;
    }
  }

  private render(): void {
    this.root.replaceChildren(...this.items.map((s, i) => {
      const row = document.createElement("div");
      row.className = i === this.index ? "row selected" : "row";
      row.setAttribute("role", "option");
      row.setAttribute("aria-selected", String(i === this.index));

      const bar = document.createElement("div");
      bar.className = "bar";
      bar.style.width = `${Math.round(s.prob * 100)}%`;

      const name = document.createElement("span");
      name.className = "name";
      name.textContent = s.name;

      const prob = document.createElement("span");
      prob.className = "prob";
      prob.textContent = s.prob.toFixed(2);

      row.append(bar, name, prob);
      row.addEventListener("mouseenter", () => {
        this.index = i;
        this.render();
      });
      row.addEventListener("mousedown", (ev) => {
        ev.preventDefault(); // keep editor focus
        this.hide();
        this.onAccept(s.name);
      });
      return row;
    }));
  }
}
