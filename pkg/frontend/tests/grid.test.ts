import { describe, expect, it } from 'vitest';

import type { ResultItem, SearchResponse } from '../src/api.js';
import { renderResults } from '../src/grid.js';

function item(i: number, overrides: Partial<ResultItem> = {}): ResultItem {
  return {
    element_id: `el-${i}`,
    score: 1 - i * 0.01,
    page_urn: 'URN:NBN:no-nb_x',
    box: { left: 0, top: 0, width: 10, height: 10 },
    iiif_url: `http://img/el-${i}.jpg`,
    predicted_label: 'Map',
    ...overrides,
  };
}

function makeResponse(n: number): SearchResponse {
  return {
    results: Array.from({ length: n }, (_, i) => item(i)),
    model: 'mock64',
    took_ms: 3,
  };
}

describe('renderResults', () => {
  it('lays 12 results out as rows of 5, 5 and 2', () => {
    const container = document.createElement('div');
    renderResults(container, makeResponse(12), () => {});

    const rows = container.querySelectorAll('.result-row');
    expect(rows.length).toBe(3);
    expect(rows[0]!.querySelectorAll('.thumb').length).toBe(5);
    expect(rows[1]!.querySelectorAll('.thumb').length).toBe(5);
    expect(rows[2]!.querySelectorAll('.thumb').length).toBe(2);
  });

  it('shows an empty-state message for zero results', () => {
    const container = document.createElement('div');
    renderResults(container, makeResponse(0), () => {});

    expect(container.querySelector('.empty-state')).not.toBeNull();
    expect(container.querySelectorAll('.result-row').length).toBe(0);
  });

  it('renders score, label badge and a lazy iiif thumbnail', () => {
    const container = document.createElement('div');
    renderResults(container, makeResponse(1), () => {});

    const thumb = container.querySelector('.thumb')!;
    expect(thumb.querySelector('.score')?.textContent).toBe('1.000');
    expect(thumb.querySelector('.label-badge')?.textContent).toBe('Map');
    const img = thumb.querySelector('img')!;
    expect(img.getAttribute('src')).toBe('http://img/el-0.jpg');
    expect(img.getAttribute('loading')).toBe('lazy');
  });

  it('omits the badge and image when the server has neither', () => {
    const container = document.createElement('div');
    const response: SearchResponse = {
      results: [item(0, { iiif_url: null, predicted_label: null })],
      model: 'mock64',
      took_ms: 0,
    };
    renderResults(container, response, () => {});

    const thumb = container.querySelector('.thumb')!;
    expect(thumb.querySelector('img')).toBeNull();
    expect(thumb.querySelector('.thumb-missing')).not.toBeNull();
    expect(thumb.querySelector('.label-badge')).toBeNull();
  });

  it('re-rendering replaces the previous grid', () => {
    const container = document.createElement('div');
    renderResults(container, makeResponse(12), () => {});
    renderResults(container, makeResponse(2), () => {});

    expect(container.querySelectorAll('.result-row').length).toBe(1);
    expect(container.querySelectorAll('.thumb').length).toBe(2);
  });

  it('clicking a thumbnail reports that element id exactly once', () => {
    const container = document.createElement('div');
    const picks: string[] = [];
    renderResults(container, makeResponse(7), (id) => picks.push(id));

    const thumbs = container.querySelectorAll<HTMLButtonElement>('.thumb');
    thumbs[3]!.click();
    expect(picks).toEqual(['el-3']);
  });
});
