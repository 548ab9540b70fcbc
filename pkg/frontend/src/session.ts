/**
 * Annotation session state machine, free of any DOM dependency.
 *
 * One session is one annotator working one batch. A submit that fails on
 * the network keeps the pending label so the view can offer a retry
 * without losing the choice; a duplicate-label response from the server
 * is absorbed as success.
 */

import { AnnotationApi, Label, MqmErrorLabel, Progress, ServiceError, TaskView } from './api.js';

export interface SessionConfig {
  serviceUrl: string;
  batchId: string;
  annotatorId: string;
}

export function parseSessionConfig(query: string): SessionConfig {
  const params = new URLSearchParams(query);
  const serviceUrl = params.get('service') ?? '';
  const batchId = params.get('batch') ?? '';
  const annotatorId = params.get('annotator') ?? '';
  if (!serviceUrl || !batchId || !annotatorId) {
    throw new Error('query parameters ?service=&batch=&annotator= are all required');
  }
  return { serviceUrl, batchId, annotatorId };
}

export type SessionState = 'loading' | 'task' | 'done' | 'error';

export class ConsoleSession {
  state: SessionState = 'loading';
  current: TaskView | null = null;
  progress: Progress = { done: 0, total: 0 };
  pendingLabel: Label | null = null;
  lastError: string | null = null;
  private submitting = false;

  constructor(
    private readonly api: AnnotationApi,
    readonly batchId: string,
    readonly annotatorId: string,
  ) {
    if (!annotatorId) throw new Error('annotator id must be non-empty');
  }

  /** Fetches the next open task; transitions to 'done' when none remain. */
  async advance(): Promise<TaskView | null> {
    this.state = 'loading';
    try {
      this.current = await this.api.nextTask(this.batchId, this.annotatorId);
    } catch (err) {
      this.lastError = String(err);
      this.state = 'error';
      throw err;
    }
    this.lastError = null;
    if (this.current === null) {
      this.state = 'done';
    } else {
      this.progress = this.current.progress;
      this.state = 'task';
    }
    return this.current;
  }

  /**
   * Posts a label for the current task and advances. Returns false (and
   * keeps the label pending) when the network failed; a server 409 counts
   * as success because the label is already stored.
   */
  async submit(label: Label): Promise<boolean> {
    if (this.current === null || this.submitting) return false;
    this.submitting = true;
    this.pendingLabel = label;
    try {
      await this.api.postLabel(this.current.task_id, this.annotatorId, label);
    } catch (err) {
      if (err instanceof ServiceError) {
        // A definite server-side rejection: drop the pending label.
        this.pendingLabel = null;
        this.lastError = err.message;
        this.state = 'error';
        this.submitting = false;
        throw err;
      }
      this.lastError = String(err); // network failure: keep pendingLabel for retry
      this.submitting = false;
      return false;
    }
    this.pendingLabel = null;
    this.submitting = false;
    await this.advance();
    return true;
  }

  /** Retries the pending label after a network failure. */
  async retry(): Promise<boolean> {
    if (this.pendingLabel === null) return false;
    return this.submit(this.pendingLabel);
  }

  /** Skips the current task; it stays open for this annotator. */
  async skip(): Promise<TaskView | null> {
    return this.advance();
  }

  async summary(): Promise<Record<string, unknown>> {
    return this.api.batchSummary(this.batchId);
  }
}

/** Error list under construction in the MQM view; spans may overlap. */
export class MqmDraft {
  readonly errors: MqmErrorLabel[] = [];

  addError(category: string, severity: 'minor' | 'major', span: [number, number] | null): void {
    if (!category) throw new Error('category must be chosen');
    if (span !== null && !(span[0] >= 0 && span[0] < span[1])) {
      throw new Error(`bad span [${span[0]}, ${span[1]})`);
    }
    this.errors.push({ category, severity, span });
  }

  removeError(index: number): void {
    this.errors.splice(index, 1);
  }

  /** Zero-error submissions are allowed: an error-free segment is a label. */
  toLabel(): { errors: MqmErrorLabel[] } {
    return { errors: [...this.errors] };
  }
}
