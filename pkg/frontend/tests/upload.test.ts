import { describe, expect, it } from 'vitest';

import { MAX_UPLOAD_BYTES, UploadError, fitWithin, prepareUpload } from '../src/upload.js';

describe('fitWithin', () => {
  it('leaves small images alone', () => {
    expect(fitWithin(1000, 800)).toEqual({ width: 1000, height: 800 });
    expect(fitWithin(1024, 1024)).toEqual({ width: 1024, height: 1024 });
  });

  it('anchors the longer side at 1024', () => {
    expect(fitWithin(2048, 1024)).toEqual({ width: 1024, height: 512 });
    expect(fitWithin(1024, 4096)).toEqual({ width: 256, height: 1024 });
  });

  it('rounds the shorter side to the nearest pixel', () => {
    // 1000 * 1024 / 2049 = 499.75..., rounds to 500
    expect(fitWithin(2049, 1000)).toEqual({ width: 1024, height: 500 });
  });

  it('never collapses a side below one pixel', () => {
    expect(fitWithin(100000, 10)).toEqual({ width: 1024, height: 1 });
  });

  it('never upscales', () => {
    expect(fitWithin(64, 64)).toEqual({ width: 64, height: 64 });
  });
});

describe('prepareUpload', () => {
  it('rejects oversized files before asking for dimensions', async () => {
    const big = new Blob([new Uint8Array(MAX_UPLOAD_BYTES + 1)]);
    let measured = false;

    const err = await prepareUpload(big, async () => {
      measured = true;
      return { width: 10, height: 10 };
    }).catch((e: unknown) => e);

    expect(err).toBeInstanceOf(UploadError);
    expect((err as UploadError).message).toContain('10 MiB');
    expect(measured).toBe(false);
  });

  it('passes already-small images through untouched', async () => {
    const small = new Blob(['jpeg bytes']);
    const out = await prepareUpload(small, async () => ({ width: 640, height: 480 }));
    expect(out).toBe(small);
  });
});
