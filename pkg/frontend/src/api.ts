/** Typed client for the annotation endpoints of the evaluation service. */

export type AnnotationKind = 'preference' | 'mqm' | 'hallucination' | 'ambiguity';

export interface Progress {
  done: number;
  total: number;
}

export interface PreferencePayload {
  source: string;
  left: string;
  right: string;
}

export interface JudgmentPayload {
  source: string;
  translation: string;
  taxonomy?: Record<string, string[]>;
}

export interface TaskView {
  task_id: string;
  kind: AnnotationKind;
  status: 'open' | 'done';
  payload: PreferencePayload & JudgmentPayload;
  progress: Progress;
}

export interface MqmErrorLabel {
  category: string;
  severity: 'minor' | 'major';
  span: [number, number] | null;
}

export type Label =
  | { choice: 'left' | 'right' | 'tie' }
  | { errors: MqmErrorLabel[] }
  | { is_hallucination: boolean }
  | { disambiguated: boolean };

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let code = 'http_error';
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as { error?: string; message?: string };
    code = body.error ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep the defaults
  }
  throw new ServiceError(resp.status, code, message);
}

export class AnnotationApi {
  private readonly baseUrl: string;

  constructor(serviceUrl: string) {
    this.baseUrl = serviceUrl.replace(/\/+$/, '');
  }

  /** Lowest-index task this annotator has not labeled, or null when done. */
  async nextTask(batchId: string, annotatorId: string): Promise<TaskView | null> {
    const url =
      `${this.baseUrl}/annotation/next?batch=${encodeURIComponent(batchId)}` +
      `&annotator=${encodeURIComponent(annotatorId)}`;
    const resp = await fetch(url);
    if (resp.status === 204) return null;
    await raiseForStatus(resp);
    return (await resp.json()) as TaskView;
  }

  /**
   * Records a label. A duplicate (409) is absorbed and reported as
   * 'duplicate' so a double-submitted click still stores exactly one label.
   */
  async postLabel(
    taskId: string,
    annotatorId: string,
    label: Label,
  ): Promise<'stored' | 'duplicate'> {
    const resp = await fetch(`${this.baseUrl}/annotation/labels`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ task_id: taskId, annotator: annotatorId, label }),
    });
    if (resp.status === 409) return 'duplicate';
    await raiseForStatus(resp);
    return 'stored';
  }

  async batchSummary(batchId: string): Promise<Record<string, unknown>> {
    const resp = await fetch(
      `${this.baseUrl}/annotation/batches/${encodeURIComponent(batchId)}/summary`,
    );
    await raiseForStatus(resp);
    return (await resp.json()) as Record<string, unknown>;
  }
}
