import type { ResultItem, SearchResponse } from './api.js';

export const ROW_SIZE = 5;

function thumbnail(item: ResultItem, onPick: (elementId: string) => void): HTMLElement {
  const cell = document.createElement('button');
  cell.type = 'button';
  cell.className = 'thumb';
  cell.dataset.elementId = item.element_id;
  cell.title = item.element_id;

  if (item.iiif_url) {
    const img = document.createElement('img');
    img.loading = 'lazy';
    img.src = item.iiif_url;
    img.alt = item.element_id;
    cell.appendChild(img);
  } else {
    const missing = document.createElement('div');
    missing.className = 'thumb-missing';
    missing.textContent = 'no image';
    cell.appendChild(missing);
  }

  const meta = document.createElement('div');
  meta.className = 'thumb-meta';

  const score = document.createElement('span');
  score.className = 'score';
  score.textContent = item.score.toFixed(3);
  meta.appendChild(score);

  if (item.predicted_label) {
    const badge = document.createElement('span');
    badge.className = 'label-badge';
    badge.textContent = item.predicted_label;
    meta.appendChild(badge);
  }

  cell.appendChild(meta);
  cell.addEventListener('click', () => onPick(item.element_id));
  return cell;
}

/**
 * Paint a search response as rows of five thumbnails, so the first row is
 * the Top 5. Clicking a thumbnail hands its element id to onPick; the
 * caller decides what a pick means (normally a similarity pivot).
 */
export function renderResults(
  container: HTMLElement,
  response: SearchResponse,
  onPick: (elementId: string) => void,
): void {
  container.textContent = '';

  if (response.results.length === 0) {
    const empty = document.createElement('p');
    empty.className = 'empty-state';
    empty.textContent = 'No results.';
    container.appendChild(empty);
    return;
  }

  for (let start = 0; start < response.results.length; start += ROW_SIZE) {
    const row = document.createElement('div');
    row.className = 'result-row';
    for (const item of response.results.slice(start, start + ROW_SIZE)) {
      row.appendChild(thumbnail(item, onPick));
    }
    container.appendChild(row);
  }

  const footer = document.createElement('p');
  footer.className = 'result-footer';
  footer.textContent = `${response.results.length} results, model ${response.model}, ${response.took_ms} ms`;
  container.appendChild(footer);
}
