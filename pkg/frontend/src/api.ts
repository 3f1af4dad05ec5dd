// Typed client for the coach service HTTP+JSON API. The UI talks to the
// service through this module only, so swapping the backend host is a
// one-line configuration change.

export interface HealthPayload {
  status: string;
  model_id: string;
  records: number;
}

export interface AskResponse {
  question: string;
  audio: string;
  response: string;
  value: number | null;
  scale: [number, number] | null;
  truncated: boolean;
  model_id: string;
  transcript_id: string;
  latency_ms: number;
}

export interface ResponseCard {
  label: string;
  text: string;
}

export interface StudyProgress {
  completed: number;
  total: number;
}

export interface StudyItemPayload {
  participant: string;
  item_id: string;
  audio_ref: string;
  dataset_group: string;
  categories: string[];
  responses: ResponseCard[];
  progress: StudyProgress;
}

export interface StudyDonePayload {
  participant: string;
  complete: true;
  progress: StudyProgress;
}

export type StudyNextPayload = StudyItemPayload | StudyDonePayload;

export function isStudyDone(p: StudyNextPayload): p is StudyDonePayload {
  return "complete" in p && p.complete === true;
}

export interface RatingRequest {
  participant: string;
  item_id: string;
  label: string;
  category: string;
  rating: number;
}

export interface RatingAck {
  status: string;
  seq: number;
}

export interface RatingRecord extends RatingRequest {
  model: string;
  dataset_group: string;
}

export interface SummaryCell {
  category: string;
  dataset_group: string;
  model: string;
  n: number;
  mean: number;
  sem: number | null;
}

export interface SummaryComparison {
  category: string;
  model_a: string;
  model_b: string;
  dataset_group: string;
  u: number;
  p: number;
  p_holm: number;
}

export interface ExportSummary {
  cells: SummaryCell[];
  comparisons: SummaryComparison[];
}

export interface AskRequest {
  file?: File | null;
  clipId?: string | null;
  question?: string;
  questionId?: string | null;
}

export class ApiError extends Error {
  status: number;
  transcriptId: string | null;

  constructor(status: number, message: string, transcriptId: string | null = null) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.transcriptId = transcriptId;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class CoachApi {
  readonly baseUrl: string;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    // bind so the default works when fetch is an own-method of window
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    let body: unknown = null;
    const text = await res.text();
    if (text) {
      try {
        body = JSON.parse(text);
      } catch {
        body = null;
      }
    }
    if (!res.ok) {
      const obj = (body ?? {}) as { error?: string; transcript_id?: string };
      throw new ApiError(
        res.status,
        obj.error ?? `request failed with status ${res.status}`,
        obj.transcript_id ?? null,
      );
    }
    return body as T;
  }

  health(): Promise<HealthPayload> {
    return this.request<HealthPayload>("/v1/health");
  }

  ask(req: AskRequest): Promise<AskResponse> {
    if (req.file) {
      const form = new FormData();
      form.append("audio", req.file);
      if (req.questionId) form.append("question_id", req.questionId);
      if (req.question) form.append("question", req.question);
      return this.request<AskResponse>("/v1/ask", { method: "POST", body: form });
    }
    const payload: Record<string, string> = {};
    if (req.clipId) payload.clip_id = req.clipId;
    if (req.questionId) payload.question_id = req.questionId;
    if (req.question) payload.question = req.question;
    return this.request<AskResponse>("/v1/ask", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  studyNext(participant: string): Promise<StudyNextPayload> {
    const q = encodeURIComponent(participant);
    return this.request<StudyNextPayload>(`/v1/study/next?participant=${q}`);
  }

  submitRating(rating: RatingRequest): Promise<RatingAck> {
    return this.request<RatingAck>("/v1/study/rating", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(rating),
    });
  }

  exportRaw(): Promise<{ ratings: RatingRecord[] }> {
    return this.request<{ ratings: RatingRecord[] }>("/v1/study/export?format=raw");
  }

  exportSummary(): Promise<ExportSummary> {
    return this.request<ExportSummary>("/v1/study/export?format=summary");
  }
}
