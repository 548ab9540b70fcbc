/** DOM rendering for the three task kinds plus progress and completion. */

import { TaskView } from './api.js';
import { ConsoleSession, MqmDraft } from './session.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function button(label: string, className: string, onClick: () => void): HTMLButtonElement {
  const node = el('button', className, label);
  node.addEventListener('click', () => {
    node.disabled = true; // double clicks post at most once; server 409 absorbs races
    onClick();
  });
  return node;
}

/** Character offsets of the current selection within a container's text. */
export function selectionSpan(container: HTMLElement): [number, number] | null {
  const selection = window.getSelection();
  if (!selection || selection.rangeCount === 0 || selection.isCollapsed) return null;
  const range = selection.getRangeAt(0);
  if (!container.contains(range.startContainer) || !container.contains(range.endContainer)) {
    return null;
  }
  const prefix = document.createRange();
  prefix.selectNodeContents(container);
  prefix.setEnd(range.startContainer, range.startOffset);
  const start = prefix.toString().length;
  const length = range.toString().length;
  return length > 0 ? [start, start + length] : null;
}

export class ConsoleView {
  private keyHandler: ((event: KeyboardEvent) => void) | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly session: ConsoleSession,
  ) {}

  async start(): Promise<void> {
    await this.refresh(() => this.session.advance());
  }

  private async refresh(action: () => Promise<unknown>): Promise<void> {
    try {
      await action();
    } catch {
      // session.lastError carries the message; fall through to render
    }
    this.render();
  }

  private setKeyHandler(handler: ((event: KeyboardEvent) => void) | null): void {
    if (this.keyHandler) document.removeEventListener('keydown', this.keyHandler);
    this.keyHandler = handler;
    if (handler) document.addEventListener('keydown', handler);
  }

  private render(): void {
    this.root.replaceChildren();
    this.setKeyHandler(null);
    const session = this.session;

    const bar = el('div', 'progress');
    bar.textContent = `annotator ${session.annotatorId} · ${session.progress.done}/${session.progress.total} done`;
    this.root.append(bar);

    if (session.state === 'error') {
      this.renderError();
      return;
    }
    if (session.state === 'done') {
      void this.renderDone();
      return;
    }
    const task = session.current;
    if (!task) return;
    if (task.kind === 'preference') this.renderPreference(task);
    else if (task.kind === 'mqm') this.renderMqm(task);
    else this.renderBinary(task);
  }

  private renderError(): void {
    const box = el('div', 'error-box', this.session.lastError ?? 'request failed');
    const actions = el('div', 'actions');
    if (this.session.pendingLabel !== null) {
      actions.append(
        button('Retry submit', 'primary', () => void this.refresh(() => this.session.retry())),
      );
    } else {
      actions.append(
        button('Reload', 'primary', () => void this.refresh(() => this.session.advance())),
      );
    }
    this.root.append(box, actions);
  }

  private async renderDone(): Promise<void> {
    this.root.append(el('h2', undefined, 'All tasks done'));
    try {
      const summary = await this.session.summary();
      const pre = el('pre', 'summary');
      pre.textContent = JSON.stringify(summary, null, 2);
      this.root.append(pre);
    } catch {
      this.root.append(el('p', undefined, 'Summary not available yet.'));
    }
  }

  private renderPreference(task: TaskView): void {
    this.root.append(
      el('h2', undefined, 'Which translation is better?'),
      labeledText('Source', task.payload.source),
      labeledText('Left', task.payload.left),
      labeledText('Right', task.payload.right),
    );
    const submit = (choice: 'left' | 'right' | 'tie') =>
      void this.refresh(() => this.session.submit({ choice }));
    const actions = el('div', 'actions');
    actions.append(
      button('Left better (1)', 'primary', () => submit('left')),
      button('Right better (2)', 'primary', () => submit('right')),
      button('Neither (0)', 'secondary', () => submit('tie')),
    );
    this.root.append(actions);
    this.setKeyHandler((event) => {
      if (event.key === '1') submit('left');
      else if (event.key === '2') submit('right');
      else if (event.key === '0') submit('tie');
    });
  }

  private renderMqm(task: TaskView): void {
    const draft = new MqmDraft();
    this.root.append(
      el('h2', undefined, 'Mark translation errors'),
      labeledText('Source', task.payload.source),
    );
    const translation = el('div', 'selectable', task.payload.translation);
    translation.id = 'mqm-text';
    this.root.append(labeled('Translation (select a span)', translation));

    const category = el('select', 'category');
    for (const [cls, categories] of Object.entries(task.payload.taxonomy ?? {})) {
      const group = document.createElement('optgroup');
      group.label = cls;
      for (const name of categories) {
        const option = document.createElement('option');
        option.value = name;
        option.textContent = name;
        group.append(option);
      }
      category.append(group);
    }
    const severity = el('select', 'severity');
    for (const level of ['minor', 'major']) {
      const option = document.createElement('option');
      option.value = level;
      option.textContent = level;
      severity.append(option);
    }
    const errorList = el('ul', 'errors');
    const redrawErrors = () => {
      errorList.replaceChildren();
      draft.errors.forEach((error, index) => {
        const item = el(
          'li',
          undefined,
          `${error.severity} ${error.category}` +
            (error.span ? ` [${error.span[0]}, ${error.span[1]})` : ' (whole segment)'),
        );
        item.append(
          button('remove', 'link', () => {
            draft.removeError(index);
            redrawErrors();
          }),
        );
        errorList.append(item);
      });
    };
    const addError = button('Add error from selection', 'secondary', () => {
      const span = selectionSpan(translation);
      draft.addError(category.value, severity.value as 'minor' | 'major', span);
      redrawErrors();
      addError.disabled = false;
    });
    const controls = el('div', 'controls');
    controls.append(category, severity, addError);
    const actions = el('div', 'actions');
    actions.append(
      button('Submit annotation', 'primary', () =>
        void this.refresh(() => this.session.submit(draft.toLabel())),
      ),
    );
    this.root.append(controls, errorList, actions);
  }

  private renderBinary(task: TaskView): void {
    const question =
      task.kind === 'hallucination'
        ? 'Is this translation a hallucination (content unrelated to the source)?'
        : 'Is the ambiguity resolved correctly?';
    this.root.append(
      el('h2', undefined, question),
      labeledText('Source', task.payload.source),
      labeledText('Translation', task.payload.translation),
    );
    const submit = (value: boolean) =>
      void this.refresh(() =>
        this.session.submit(
          task.kind === 'hallucination'
            ? { is_hallucination: value }
            : { disambiguated: value },
        ),
      );
    const actions = el('div', 'actions');
    actions.append(
      button('Yes', 'primary', () => submit(true)),
      button('No', 'primary', () => submit(false)),
      button('Skip', 'secondary', () => void this.refresh(() => this.session.skip())),
    );
    this.root.append(actions);
  }
}

function labeled(label: string, node: HTMLElement): HTMLElement {
  const wrap = el('div', 'field');
  wrap.append(el('div', 'label', label), node);
  return wrap;
}

function labeledText(label: string, text: string): HTMLElement {
  return labeled(label, el('div', 'text', text));
}
