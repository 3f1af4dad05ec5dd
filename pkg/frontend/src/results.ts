// Results panel: per-category mean/SEM bars straight from the study export
// summary. The panel formats the server's numbers and never recomputes them.

import { CoachApi, ExportSummary, SummaryCell } from "./api.js";
import { RATING_MAX, formatPValue, formatStat } from "./state.js";

export class ResultsView {
  private root: HTMLElement;
  private api: CoachApi;

  constructor(root: HTMLElement, api: CoachApi) {
    this.root = root;
    this.api = api;
    this.root.innerHTML = `<p class="loading">Loading study results...</p>`;
  }

  async load(): Promise<void> {
    let summary: ExportSummary;
    try {
      summary = await this.api.exportSummary();
    } catch (err) {
      this.root.innerHTML = "";
      const p = document.createElement("p");
      p.className = "notice";
      p.textContent = `could not load the export summary: ${String(err)}`;
      this.root.appendChild(p);
      return;
    }
    this.render(summary);
  }

  private render(summary: ExportSummary): void {
    if (!summary.cells.length) {
      this.root.innerHTML = `
        <section class="results results-empty" data-role="empty">
          <h2>No ratings yet</h2>
          <p>The results panel fills in once study ratings are recorded.</p>
        </section>
      `;
      return;
    }
    const categories = [...new Set(summary.cells.map((c) => c.category))].sort();
    const groupsHTML = categories
      .map((category) => this.categoryHTML(category, summary.cells))
      .join("");
    this.root.innerHTML = `
      <section class="results">
        ${groupsHTML}
        ${this.comparisonsHTML(summary)}
      </section>
    `;
  }

  private categoryHTML(category: string, cells: SummaryCell[]): string {
    const rows = cells
      .filter((c) => c.category === category)
      .map((cell) => this.barHTML(cell))
      .join("");
    return `
      <div class="category-block" data-category="${category}">
        <h2>${category}</h2>
        <div class="bars">${rows}</div>
      </div>
    `;
  }

  private barHTML(cell: SummaryCell): string {
    const mean = formatStat(cell.mean);
    const sem = formatStat(cell.sem);
    const widthPct = (cell.mean / RATING_MAX) * 100;
    // whisker spans mean +/- SEM, scaled the same way as the bar
    const semPct = cell.sem === null ? 0 : (cell.sem / RATING_MAX) * 100;
    const whisker =
      cell.sem === null
        ? ""
        : `<span class="whisker" style="left:${widthPct - semPct}%;width:${2 * semPct}%"></span>`;
    return `
      <div class="bar-row" data-category="${cell.category}"
           data-group="${cell.dataset_group}" data-model="${cell.model}"
           data-mean="${mean}" data-sem="${sem}" data-n="${cell.n}">
        <span class="bar-name">${cell.dataset_group} / ${cell.model}</span>
        <span class="bar-track">
          <span class="bar-fill" style="width:${widthPct}%"></span>
          ${whisker}
        </span>
        <span class="bar-value">${mean}${cell.sem === null ? "" : ` ± ${sem}`} (n=${cell.n})</span>
      </div>
    `;
  }

  private comparisonsHTML(summary: ExportSummary): string {
    if (!summary.comparisons.length) return "";
    const rows = summary.comparisons
      .map(
        (c) => `
          <tr data-category="${c.category}" data-group="${c.dataset_group}"
              data-pair="${c.model_a} vs ${c.model_b}">
            <td>${c.category}</td>
            <td>${c.model_a} vs ${c.model_b}</td>
            <td>${c.dataset_group}</td>
            <td data-role="u">${formatStat(c.u)}</td>
            <td data-role="p">${formatPValue(c.p)}</td>
            <td data-role="p-holm">${formatPValue(c.p_holm)}</td>
          </tr>
        `,
      )
      .join("");
    return `
      <div class="comparisons">
        <h2>Pairwise tests</h2>
        <table>
          <thead>
            <tr><th>category</th><th>models</th><th>group</th>
                <th>U</th><th>p</th><th>p (Holm)</th></tr>
          </thead>
          <tbody>${rows}</tbody>
        </table>
      </div>
    `;
  }
}
