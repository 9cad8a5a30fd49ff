import type { SearchApi, SearchResponse } from './api.js';

export type SearchMode = 'text' | 'image' | 'similar';

export interface UiSearchState {
  mode: SearchMode;
  // text query, element id for similar-mode, or the upload blob
  query: string | Blob;
  modelTag: string;
  k: number;
}

// Responses may resolve out of order; only the newest submitted request is
// allowed to paint. Every submit takes a ticket, and a response is applied
// only if its ticket is still the latest one issued.
export class RequestSequencer {
  private issued = 0;

  next(): number {
    return ++this.issued;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.issued;
  }
}

export class SearchSession {
  private sequencer = new RequestSequencer();
  private current: UiSearchState | null = null;

  constructor(private readonly api: SearchApi) {}

  get state(): UiSearchState | null {
    return this.current;
  }

  /** Run one search. Resolves to null when a newer submit superseded it;
   * failures of superseded requests are swallowed the same way. */
  async submit(state: UiSearchState): Promise<SearchResponse | null> {
    this.current = state;
    const ticket = this.sequencer.next();
    try {
      const response = await this.dispatch(state);
      return this.sequencer.isCurrent(ticket) ? response : null;
    } catch (err) {
      if (this.sequencer.isCurrent(ticket)) throw err;
      return null;
    }
  }

  /** Re-run the active query under a different model tag. */
  async switchModel(modelTag: string): Promise<SearchResponse | null> {
    if (this.current === null) {
      this.current = { mode: 'text', query: '', modelTag, k: 50 };
      return null;
    }
    return this.submit({ ...this.current, modelTag });
  }

  private dispatch(state: UiSearchState): Promise<SearchResponse> {
    switch (state.mode) {
      case 'text':
        return this.api.searchText(state.query as string, state.k, state.modelTag);
      case 'similar':
        return this.api.similar(state.query as string, state.k, state.modelTag);
      case 'image':
        return this.api.searchImage(state.query as Blob, state.k, state.modelTag);
    }
  }
}
