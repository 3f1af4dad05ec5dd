// App shell: three tabs over one CoachApi client. The base URL and the static
// clips host are the only configuration; everything else comes off the wire.

import { CoachApi } from "./api.js";
import { ConsoleView } from "./console.js";
import { ResultsView } from "./results.js";
import { StudyView } from "./study.js";

export interface AppConfig {
  baseUrl: string;
  clipsBase: string;
  fetchFn?: (input: string, init?: RequestInit) => Promise<Response>;
}

const TABS = [
  { id: "console", title: "Coach console" },
  { id: "study", title: "Listening study" },
  { id: "results", title: "Results" },
] as const;

export type TabId = (typeof TABS)[number]["id"];

export class App {
  readonly api: CoachApi;
  private root: HTMLElement;
  private config: AppConfig;
  private views: Partial<Record<TabId, HTMLElement>> = {};
  private mounted: Partial<Record<TabId, boolean>> = {};
  private results: ResultsView | null = null;

  constructor(root: HTMLElement, config: AppConfig) {
    this.root = root;
    this.config = config;
    this.api = new CoachApi(config.baseUrl, config.fetchFn);
    this.render();
    this.show("console");
  }

  private render(): void {
    const buttons = TABS.map(
      (tab) => `<button type="button" data-tab="${tab.id}">${tab.title}</button>`,
    ).join("");
    this.root.innerHTML = `
      <header class="app-header">
        <h1>Performance coach</h1>
        <nav class="tabs">${buttons}</nav>
      </header>
      <main data-role="view"></main>
    `;
    const host = this.root.querySelector<HTMLElement>(`[data-role="view"]`)!;
    for (const tab of TABS) {
      const pane = document.createElement("div");
      pane.dataset.pane = tab.id;
      pane.style.display = "none";
      host.appendChild(pane);
      this.views[tab.id] = pane;
    }
    this.root.querySelectorAll<HTMLButtonElement>("[data-tab]").forEach((button) => {
      button.addEventListener("click", () => this.show(button.dataset.tab as TabId));
    });
  }

  show(tab: TabId): void {
    for (const { id } of TABS) {
      const pane = this.views[id]!;
      pane.style.display = id === tab ? "" : "none";
    }
    this.root.querySelectorAll<HTMLButtonElement>("[data-tab]").forEach((button) => {
      button.classList.toggle("active", button.dataset.tab === tab);
    });
    if (!this.mounted[tab]) {
      this.mounted[tab] = true;
      const pane = this.views[tab]!;
      if (tab === "console") new ConsoleView(pane, this.api);
      if (tab === "study") new StudyView(pane, this.api, { clipsBase: this.config.clipsBase });
      if (tab === "results") this.results = new ResultsView(pane, this.api);
    }
    if (tab === "results" && this.results) {
      void this.results.load(); // refresh on every visit
    }
  }
}

export function createApp(root: HTMLElement, config: AppConfig): App {
  return new App(root, config);
}

interface WindowConfig {
  PERFCOACH_BASE_URL?: string;
  PERFCOACH_CLIPS_BASE?: string;
}

export function bootstrap(): App | null {
  const root = document.getElementById("app");
  if (!root) return null;
  const win = window as unknown as WindowConfig;
  return createApp(root, {
    baseUrl: win.PERFCOACH_BASE_URL ?? "",
    clipsBase: win.PERFCOACH_CLIPS_BASE ?? "/clips",
  });
}
