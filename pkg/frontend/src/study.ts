// Rating-study workstation: listen to the clip, read the blinded responses,
// rate each one on the 1..4 scale in every category, submit, advance. The
// screen only ever sees presentation labels; model identities stay server-side.

import { ApiError, CoachApi, StudyItemPayload, isStudyDone } from "./api.js";
import { RATING_CHOICES, Selections, allRated, ratingKey } from "./state.js";

export interface StudyViewConfig {
  clipsBase: string; // static host for study clips, joined with audio_ref
}

export class StudyView {
  private root: HTMLElement;
  private api: CoachApi;
  private config: StudyViewConfig;
  private participant = "";
  private item: StudyItemPayload | null = null;
  private selections: Selections = new Map();
  private submitting = false;

  constructor(root: HTMLElement, api: CoachApi, config: StudyViewConfig) {
    this.root = root;
    this.api = api;
    this.config = config;
    this.renderEntry();
  }

  // -- participant entry ------------------------------------------------------

  private renderEntry(message = ""): void {
    this.root.innerHTML = `
      <section class="study-entry">
        <h2>Listening study</h2>
        <p>Enter your participant token to begin or resume your session.</p>
        <input type="text" data-role="participant" placeholder="participant token" />
        <button type="button" data-role="start">Start</button>
        <p class="notice" data-role="entry-notice"></p>
      </section>
    `;
    this.notice("entry-notice", message);
    const input = this.element<HTMLInputElement>("participant");
    const start = this.element<HTMLButtonElement>("start");
    start.addEventListener("click", () => {
      const token = input.value.trim();
      if (!token) {
        this.notice("entry-notice", "a participant token is required");
        return;
      }
      this.participant = token;
      void this.loadNext();
    });
  }

  private element<T extends HTMLElement>(role: string): T {
    const el = this.root.querySelector<T>(`[data-role="${role}"]`);
    if (!el) throw new Error(`study screen is missing its ${role} element`);
    return el;
  }

  private notice(role: string, message: string): void {
    const el = this.root.querySelector<HTMLElement>(`[data-role="${role}"]`);
    if (el) el.textContent = message;
  }

  // -- item loop ---------------------------------------------------------------

  private async loadNext(notice = ""): Promise<void> {
    let payload;
    try {
      payload = await this.api.studyNext(this.participant);
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err);
      this.renderEntry(`could not fetch the next item: ${message}`);
      return;
    }
    if (isStudyDone(payload)) {
      this.renderComplete(payload.progress.total);
      return;
    }
    this.item = payload;
    this.selections = new Map();
    this.renderItem(payload, notice);
  }

  private renderItem(item: StudyItemPayload, notice: string): void {
    const cards = item.responses
      .map((card, i) => {
        const rows = item.categories
          .map((category) => this.ratingRowHTML(card.label, category))
          .join("");
        return `
          <div class="response-card" data-label="${card.label}">
            <h3>Response ${card.label}</h3>
            <p class="response-text" data-role="text-${i}"></p>
            <table class="rating-grid">${rows}</table>
          </div>
        `;
      })
      .join("");
    this.root.innerHTML = `
      <section class="study-item">
        <div class="study-header">
          <span class="progress" data-role="progress">
            Item ${item.progress.completed + 1} of ${item.progress.total}
          </span>
        </div>
        <audio controls data-role="player"></audio>
        <p class="notice" data-role="player-notice"></p>
        <div class="responses">${cards}</div>
        <button type="button" data-role="submit" disabled>Submit ratings</button>
        <p class="notice" data-role="item-notice"></p>
      </section>
    `;
    this.notice("item-notice", notice);

    // response text rendered via textContent, never parsed as markup
    item.responses.forEach((card, i) => {
      this.element<HTMLParagraphElement>(`text-${i}`).textContent = card.text;
    });

    const player = this.element<HTMLAudioElement>("player");
    player.src = `${this.config.clipsBase.replace(/\/+$/, "")}/${item.audio_ref}`;
    player.addEventListener("error", () => {
      this.notice("player-notice", "audio unavailable; you can still rate the responses");
    });

    const submit = this.element<HTMLButtonElement>("submit");
    this.root.querySelectorAll<HTMLInputElement>("input[type=radio]").forEach((radio) => {
      radio.addEventListener("change", () => {
        this.selections.set(
          ratingKey(radio.dataset.label ?? "", radio.dataset.category ?? ""),
          Number(radio.value),
        );
        submit.disabled = this.submitting || !allRated(item, this.selections);
      });
    });
    submit.addEventListener("click", () => {
      void this.submit();
    });
  }

  private ratingRowHTML(label: string, category: string): string {
    const name = `rate-${encodeURIComponent(label)}-${encodeURIComponent(category)}`;
    const buttons = RATING_CHOICES.map(
      (value) => `
        <td><label class="rating-choice">
          <input type="radio" name="${name}" value="${value}"
                 data-label="${label}" data-category="${category}" />
          ${value}
        </label></td>
      `,
    ).join("");
    return `<tr><th class="category-name">${category}</th>${buttons}</tr>`;
  }

  private async submit(): Promise<void> {
    const item = this.item;
    if (!item || this.submitting || !allRated(item, this.selections)) return;
    this.submitting = true;
    this.element<HTMLButtonElement>("submit").disabled = true;

    let conflicts = 0;
    for (const card of item.responses) {
      for (const category of item.categories) {
        const rating = this.selections.get(ratingKey(card.label, category));
        if (rating === undefined) continue;
        try {
          await this.api.submitRating({
            participant: this.participant,
            item_id: item.item_id,
            label: card.label,
            category,
            rating,
          });
        } catch (err) {
          if (err instanceof ApiError && err.status === 409) {
            conflicts += 1; // already recorded server-side; keep advancing
            continue;
          }
          const message = err instanceof ApiError ? err.message : String(err);
          this.submitting = false;
          this.notice("item-notice", `submit failed: ${message}; nothing was lost, try again`);
          this.element<HTMLButtonElement>("submit").disabled = false;
          return;
        }
      }
    }
    this.submitting = false;
    const notice = conflicts
      ? `${conflicts} rating(s) were already recorded; moving on`
      : "";
    await this.loadNext(notice);
  }

  private renderComplete(total: number): void {
    this.root.innerHTML = `
      <section class="study-complete">
        <h2>Study complete</h2>
        <p data-role="complete-text">
          You rated all ${total} items in your session. Thank you!
        </p>
      </section>
    `;
  }
}
