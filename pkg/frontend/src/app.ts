import type { ApiClient, SearchResponse } from './api.js';
import { ServiceError } from './api.js';
import { renderResults } from './grid.js';
import { renderSidebar } from './sidebar.js';
import { SearchSession } from './state.js';
import { prepareUpload, UploadError, type MeasureFn } from './upload.js';

const DEFAULT_K = 50;

export interface AppOptions {
  // test hook: happy-dom has no createImageBitmap
  measure?: MeasureFn;
}

export interface App {
  session: SearchSession;
  modelTag: string;
  ready: Promise<void>;
  runTextSearch(query: string): Promise<void>;
  pivotTo(elementId: string): Promise<void>;
  runImageSearch(file: Blob): Promise<void>;
  setModel(tag: string): Promise<void>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function createApp(root: HTMLElement, api: ApiClient, options: AppOptions = {}): App {
  root.textContent = '';

  const header = el('header', 'topbar');
  const form = el('form', 'search-form');
  const input = el('input') as HTMLInputElement;
  input.type = 'search';
  input.name = 'q';
  input.placeholder = 'Search context text, e.g. kat';
  const submit = el('button', undefined, 'Search') as HTMLButtonElement;
  submit.type = 'submit';
  form.appendChild(input);
  form.appendChild(submit);

  const uploadLabel = el('label', 'upload-label', 'Image query ');
  const fileInput = el('input') as HTMLInputElement;
  fileInput.type = 'file';
  fileInput.accept = 'image/*';
  uploadLabel.appendChild(fileInput);

  header.appendChild(form);
  header.appendChild(uploadLabel);

  const banner = el('div', 'error-banner');
  banner.hidden = true;

  const layout = el('div', 'layout');
  const sidebar = el('aside', 'sidebar');
  const main = el('main', 'content');
  const preview = el('div', 'query-preview');
  preview.hidden = true;
  const results = el('section', 'results');
  main.appendChild(preview);
  main.appendChild(results);
  layout.appendChild(sidebar);
  layout.appendChild(main);

  root.appendChild(header);
  root.appendChild(banner);
  root.appendChild(layout);

  const session = new SearchSession(api);
  const app: App = {
    session,
    modelTag: '',
    ready: Promise.resolve(),
    runTextSearch,
    pivotTo,
    runImageSearch,
    setModel,
  };

  function showError(message: string): void {
    banner.textContent = message;
    banner.hidden = false;
  }

  function clearError(): void {
    banner.hidden = true;
    banner.textContent = '';
  }

  function paint(response: SearchResponse | null): void {
    if (response === null) return; // superseded by a newer query
    renderResults(results, response, (id) => void pivotTo(id));
  }

  function showPreview(image: Blob): void {
    preview.textContent = '';
    const img = document.createElement('img');
    img.alt = 'query image';
    if (typeof URL.createObjectURL === 'function') {
      img.src = URL.createObjectURL(image);
    }
    preview.appendChild(img);
    preview.hidden = false;
  }

  async function guarded(run: () => Promise<void>): Promise<void> {
    clearError();
    try {
      await run();
    } catch (err) {
      if (err instanceof ServiceError) {
        showError(`${err.message}${err.detail ? `: ${err.detail}` : ''}`);
      } else if (err instanceof UploadError) {
        showError(err.message);
      } else {
        showError(String(err));
      }
    }
  }

  async function runTextSearch(query: string): Promise<void> {
    await guarded(async () => {
      preview.hidden = true;
      paint(await session.submit({ mode: 'text', query, modelTag: app.modelTag, k: DEFAULT_K }));
    });
  }

  async function pivotTo(elementId: string): Promise<void> {
    await guarded(async () => {
      preview.hidden = true;
      paint(
        await session.submit({
          mode: 'similar',
          query: elementId,
          modelTag: app.modelTag,
          k: DEFAULT_K,
        }),
      );
    });
  }

  async function runImageSearch(file: Blob): Promise<void> {
    await guarded(async () => {
      const image = await prepareUpload(file, options.measure);
      showPreview(image);
      paint(await session.submit({ mode: 'image', query: image, modelTag: app.modelTag, k: DEFAULT_K }));
    });
  }

  async function setModel(tag: string): Promise<void> {
    app.modelTag = tag;
    await guarded(async () => {
      paint(await session.switchModel(tag));
    });
  }

  form.addEventListener('submit', (event) => {
    event.preventDefault();
    void runTextSearch(input.value.trim());
  });

  fileInput.addEventListener('change', () => {
    const file = fileInput.files?.[0];
    if (file) void runImageSearch(file);
  });

  app.ready = api
    .health()
    .then((health) => {
      app.modelTag = health.default_model;
      renderSidebar(sidebar, {
        tags: health.models,
        selected: health.default_model,
        onSelect: (tag) => void setModel(tag),
      });
    })
    .catch((err) => showError(`service unreachable: ${String(err)}`));

  return app;
}
