// Coach console: pick or upload a clip, ask a free question or a rubric
// question, read the answer cards. History is append-only for the session.

import { ApiError, AskRequest, CoachApi } from "./api.js";
import {
  ConsoleState,
  HistoryCard,
  RUBRIC_QUESTION_IDS,
  canSend,
  emptyConsoleState,
} from "./state.js";

export class ConsoleView {
  private root: HTMLElement;
  private api: CoachApi;
  private state: ConsoleState;
  private pending = false;

  constructor(root: HTMLElement, api: CoachApi) {
    this.root = root;
    this.api = api;
    this.state = emptyConsoleState();
    this.render();
    this.attach();
  }

  private render(): void {
    const options = RUBRIC_QUESTION_IDS.map(
      (name) => `<option value="${name}">${name}</option>`,
    ).join("");
    this.root.innerHTML = `
      <section class="console">
        <div class="console-form">
          <label class="field">
            <span>Upload a recording (wav or flac)</span>
            <input type="file" data-role="clip-file" accept=".wav,.flac,audio/*" />
          </label>
          <label class="field">
            <span>or stored clip id</span>
            <input type="text" data-role="clip-id" placeholder="e.g. demo-clip-003" />
          </label>
          <label class="field">
            <span>Rubric question</span>
            <select data-role="rubric">
              <option value="">(free question below)</option>
              ${options}
            </select>
          </label>
          <label class="field">
            <span>Your question</span>
            <textarea data-role="question" rows="2"
              placeholder="How would you rate the tempo consistency, in a scale of 6?"></textarea>
          </label>
          <button type="button" data-role="send" disabled>Ask the coach</button>
        </div>
        <div class="history" data-role="history"></div>
      </section>
    `;
  }

  private element<T extends HTMLElement>(role: string): T {
    const el = this.root.querySelector<T>(`[data-role="${role}"]`);
    if (!el) throw new Error(`console is missing its ${role} element`);
    return el;
  }

  private attach(): void {
    const fileInput = this.element<HTMLInputElement>("clip-file");
    const clipId = this.element<HTMLInputElement>("clip-id");
    const rubric = this.element<HTMLSelectElement>("rubric");
    const question = this.element<HTMLTextAreaElement>("question");
    const send = this.element<HTMLButtonElement>("send");

    const sync = () => {
      this.state.file = fileInput.files && fileInput.files.length ? fileInput.files[0] : null;
      this.state.clipId = clipId.value;
      this.state.rubricId = rubric.value;
      this.state.question = question.value;
      send.disabled = this.pending || !canSend(this.state);
    };
    fileInput.addEventListener("change", sync);
    clipId.addEventListener("input", sync);
    rubric.addEventListener("change", sync);
    question.addEventListener("input", sync);
    send.addEventListener("click", () => {
      void this.send();
    });
  }

  private currentRequest(): AskRequest {
    return {
      file: this.state.file,
      clipId: this.state.clipId.trim() || null,
      question: this.state.question.trim(),
      questionId: this.state.rubricId || null,
    };
  }

  private async send(request?: AskRequest): Promise<void> {
    if (this.pending) return;
    const req = request ?? this.currentRequest();
    this.pending = true;
    this.element<HTMLButtonElement>("send").disabled = true;
    const asked = req.questionId ?? req.question ?? "";
    try {
      const answer = await this.api.ask(req);
      this.appendCard(
        {
          kind: "answer",
          question: answer.question,
          text: answer.response,
          value: answer.value,
          scale: answer.scale,
          transcriptId: answer.transcript_id,
        },
        req,
      );
    } catch (err) {
      const apiErr = err instanceof ApiError ? err : new ApiError(0, String(err));
      this.appendCard(
        {
          kind: "error",
          question: asked,
          text: apiErr.message,
          value: null,
          scale: null,
          transcriptId: apiErr.transcriptId,
        },
        req,
      );
    } finally {
      this.pending = false;
      this.element<HTMLButtonElement>("send").disabled = !canSend(this.state);
    }
  }

  private appendCard(card: HistoryCard, request: AskRequest): void {
    this.state.history.push(card);
    const host = this.element<HTMLDivElement>("history");
    const div = document.createElement("div");
    div.className = `card ${card.kind}`;

    const questionLine = document.createElement("div");
    questionLine.className = "card-question";
    questionLine.textContent = card.question;
    div.appendChild(questionLine);

    // answer text goes through textContent so the service's words render
    // exactly, with no markup interpretation
    const body = document.createElement("div");
    body.className = "card-text";
    body.textContent = card.text;
    div.appendChild(body);

    const badge = document.createElement("span");
    badge.className = "badge";
    if (card.kind === "error") {
      badge.classList.add("badge-error");
      badge.textContent = card.transcriptId
        ? `error (transcript ${card.transcriptId})`
        : "error";
      const retry = document.createElement("button");
      retry.type = "button";
      retry.className = "retry";
      retry.textContent = "Retry";
      retry.addEventListener("click", () => {
        void this.send(request);
      });
      div.appendChild(retry);
    } else if (card.value !== null && card.scale) {
      badge.textContent = `${card.value} / ${card.scale[1]}`;
    } else {
      badge.textContent = "no rating";
    }
    div.appendChild(badge);
    host.appendChild(div);
  }
}
