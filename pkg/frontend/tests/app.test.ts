// UI contract: the assembled app against the recorded fake service.

import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { createApp, type App } from '../src/app.js';
import { FakeService } from './fake-service.js';

async function settle(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
  await new Promise((resolve) => setTimeout(resolve, 0));
}

describe('app', () => {
  let service: FakeService;
  let root: HTMLElement;
  let app: App;

  beforeEach(async () => {
    service = new FakeService();
    root = document.createElement('div');
    document.body.textContent = '';
    document.body.appendChild(root);
    app = createApp(root, new ApiClient('', service.fetch), {
      measure: async () => ({ width: 320, height: 240 }),
    });
    await app.ready;
  });

  it('a text query for "kat" renders a non-empty grid', async () => {
    await app.runTextSearch('kat');

    const thumbs = root.querySelectorAll('.thumb');
    expect(thumbs.length).toBeGreaterThan(0);
    // fixture contexts: 12 elements cycle through 6 texts, 4 mention a cat
    expect(thumbs.length).toBe(4);
    expect(root.querySelector('.empty-state')).toBeNull();
  });

  it('clicking a result issues exactly one /similar request and re-renders', async () => {
    await app.runTextSearch('kat');
    const first = root.querySelector<HTMLButtonElement>('.thumb')!;
    const pickedId = first.dataset.elementId!;
    const before = service.log.length;

    first.click();
    await settle();

    const since = service.log.slice(before);
    expect(since.length).toBe(1);
    expect(since[0]!.path).toBe(`/similar/${pickedId}`);

    // re-rendered around the picked element: it is now rank 1 of 12
    const thumbs = root.querySelectorAll<HTMLButtonElement>('.thumb');
    expect(thumbs.length).toBe(12);
    expect(thumbs[0]!.dataset.elementId).toBe(pickedId);
    expect(thumbs[0]!.querySelector('.score')?.textContent).toBe('1.000');
  });

  it('switching the sidebar model re-issues the active query with the new tag', async () => {
    await app.runTextSearch('kat');
    const before = service.log.length;

    const radios = root.querySelectorAll<HTMLInputElement>('input[type=radio]');
    expect([...radios].map((r) => r.value)).toEqual(service.models);
    const other = radios[1]!;
    other.checked = true;
    other.dispatchEvent(new Event('change'));
    await settle();

    const since = service.log.slice(before);
    expect(since.length).toBe(1);
    expect(since[0]!.path).toBe('/search/text');
    expect(since[0]!.params.get('q')).toBe('kat');
    expect(since[0]!.params.get('model')).toBe('vit-b16');
    expect(root.querySelectorAll('.thumb').length).toBe(4);
  });

  it('pivot queries also follow the selected model tag', async () => {
    const id = service.elements[3]!.id;
    await app.setModel('vit-b16');
    await app.pivotTo(id);

    const record = service.log[service.log.length - 1]!;
    expect(record.path).toBe(`/similar/${id}`);
    expect(record.params.get('model')).toBe('vit-b16');
  });

  it('uploads an image, shows the query preview, renders results', async () => {
    await app.runImageSearch(new Blob(['jpeg bytes']));

    const last = service.log[service.log.length - 1]!;
    expect(last.path).toBe('/search/image');
    expect(last.method).toBe('POST');
    expect(root.querySelectorAll('.thumb').length).toBe(7);

    const preview = root.querySelector<HTMLElement>('.query-preview')!;
    expect(preview.hidden).toBe(false);
    expect(preview.querySelector('img')).not.toBeNull();
  });

  it('rejects an oversized upload before any request', async () => {
    const before = service.log.length;
    await app.runImageSearch(new Blob([new Uint8Array(10 * 1024 * 1024 + 1)]));

    expect(service.log.length).toBe(before);
    const banner = root.querySelector<HTMLElement>('.error-banner')!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain('10 MiB');
  });

  it('shows a banner when the server answers 422 for an image search', async () => {
    await app.setModel('vit-b16');
    await app.runImageSearch(new Blob(['jpeg bytes']));

    const banner = root.querySelector<HTMLElement>('.error-banner')!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toContain('cannot embed server-side');
  });

  it('a query with no hits shows the empty state', async () => {
    await app.runTextSearch('zeppelin');

    expect(root.querySelector('.empty-state')).not.toBeNull();
    expect(root.querySelectorAll('.thumb').length).toBe(0);
  });

  it('form submit drives the same path as runTextSearch', async () => {
    const input = root.querySelector<HTMLInputElement>('input[type=search]')!;
    input.value = 'kart';
    root.querySelector('form')!.dispatchEvent(new Event('submit'));
    await settle();

    const record = service.log[service.log.length - 1]!;
    expect(record.path).toBe('/search/text');
    expect(record.params.get('q')).toBe('kart');
    expect(root.querySelectorAll('.thumb').length).toBeGreaterThan(0);
  });
});
