import { describe, expect, it } from "vitest";

import { CoachApi, SummaryCell, SummaryComparison } from "../src/api.js";
import { ResultsView } from "../src/results.js";
import { formatPValue, formatStat } from "../src/state.js";
import { FakeCoachService, fiveItemStudy } from "./fake_service.js";
import { flush, mount, query } from "./helpers.js";

async function rate(
  fake: FakeCoachService,
  participant: string,
  itemId: string,
  label: string,
  rating: number,
  category = "match",
): Promise<void> {
  const res = await fake.fetch("http://fake.test/v1/study/rating", {
    method: "POST",
    body: JSON.stringify({ participant, item_id: itemId, label, category, rating }),
  });
  if (res.status !== 200) throw new Error(`seed rating failed: ${await res.text()}`);
}

async function mountResults(fake: FakeCoachService): Promise<HTMLElement> {
  const root = mount();
  const view = new ResultsView(root, new CoachApi("http://fake.test", fake.fetch));
  await view.load();
  await flush();
  return root;
}

describe("results panel", () => {
  it("shows the empty state when no ratings exist", async () => {
    const root = await mountResults(new FakeCoachService(fiveItemStudy()));
    expect(root.querySelector("[data-role=empty]")).not.toBeNull();
    expect(root.querySelectorAll(".bar-row")).toHaveLength(0);
  });

  it("every displayed number equals the server summary, formatted only", async () => {
    const fake = new FakeCoachService(fiveItemStudy());
    // three raters with staggered ratings over all five items
    for (let r = 0; r < 3; r++) {
      for (const item of fake.items) {
        await rate(fake, `rater-${r}`, item.item_id, "A", ((r + 1) % 4) + 1);
        await rate(fake, `rater-${r}`, item.item_id, "B", ((r + 2) % 4) + 1);
      }
    }
    const root = await mountResults(fake);

    const summary = (await (
      await fake.fetch("http://fake.test/v1/study/export?format=summary")
    ).json()) as { cells: SummaryCell[]; comparisons: SummaryComparison[] };

    expect(summary.cells.length).toBeGreaterThan(0);
    for (const cell of summary.cells) {
      const row = query(
        root,
        `.bar-row[data-category="${cell.category}"][data-group="${cell.dataset_group}"]` +
          `[data-model="${cell.model}"]`,
      );
      expect(row.dataset.mean).toBe(formatStat(cell.mean));
      expect(row.dataset.sem).toBe(formatStat(cell.sem));
      expect(row.dataset.n).toBe(String(cell.n));
      const valueText = query(row, ".bar-value").textContent ?? "";
      expect(valueText).toContain(formatStat(cell.mean));
      if (cell.sem !== null) expect(valueText).toContain(formatStat(cell.sem));
    }

    expect(summary.comparisons.length).toBeGreaterThan(0);
    const rows = [...root.querySelectorAll(".comparisons tbody tr")];
    expect(rows).toHaveLength(summary.comparisons.length);
    summary.comparisons.forEach((cmp, i) => {
      expect(query(rows[i] as HTMLElement, "[data-role=u]").textContent).toBe(formatStat(cmp.u));
      expect(query(rows[i] as HTMLElement, "[data-role=p]").textContent).toBe(
        formatPValue(cmp.p),
      );
      expect(query(rows[i] as HTMLElement, "[data-role=p-holm]").textContent).toBe(
        formatPValue(cmp.p_holm),
      );
    });
  });

  it("constant ratings draw a zero-length error bar", async () => {
    const fake = new FakeCoachService({
      items: [
        {
          item_id: "only",
          audio_ref: "g/p0/c.wav",
          dataset_group: "g",
          responses: { "model-alnico-9b": "steady", "model-borate-54m": "uneven" },
        },
      ],
      categories: ["match"],
      seed: 3,
    });
    for (const rater of ["r0", "r1", "r2"]) {
      const blind = fake.blinding(rater, fake.items[0]);
      const label = Object.entries(blind).find(([, m]) => m === "model-alnico-9b")![0];
      await rate(fake, rater, "only", label, 4);
      const other = Object.entries(blind).find(([, m]) => m === "model-borate-54m")![0];
      await rate(fake, rater, "only", other, 2);
    }
    const root = await mountResults(fake);

    const row = query(root, `.bar-row[data-model="model-alnico-9b"]`);
    expect(row.dataset.mean).toBe("4.000");
    expect(row.dataset.sem).toBe("0.000");
    const whisker = query(row, ".whisker");
    expect(whisker.getAttribute("style")).toContain("width:0%");
  });

  it("single ratings show n/a instead of a fabricated spread", async () => {
    const fake = new FakeCoachService(fiveItemStudy());
    await rate(fake, "solo", "itm-0", "A", 3);
    const root = await mountResults(fake);
    const row = query(root, ".bar-row");
    expect(row.dataset.n).toBe("1");
    expect(row.dataset.sem).toBe("n/a");
  });
});
