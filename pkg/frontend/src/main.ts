import { AnnotationApi } from './api.js';
import { ConsoleSession, parseSessionConfig } from './session.js';
import { ConsoleView } from './views.js';

function fail(message: string): void {
  const root = document.getElementById('app');
  if (root) root.textContent = message;
}

function boot(): void {
  const root = document.getElementById('app');
  if (!root) return;
  let config;
  try {
    config = parseSessionConfig(window.location.search);
  } catch (err) {
    fail(String(err));
    return;
  }
  const session = new ConsoleSession(
    new AnnotationApi(config.serviceUrl),
    config.batchId,
    config.annotatorId,
  );
  void new ConsoleView(root, session).start();
}

boot();
