// Client-side preparation of an uploaded query image. Large images are
// downscaled on a canvas before anything touches the network, both to stay
// under the server's 10 MiB cap and because the embedding resolution makes
// anything beyond ~1k pixels wasted bytes.

export const MAX_UPLOAD_BYTES = 10 * 1024 * 1024;
export const MAX_SIDE = 1024;

export class UploadError extends Error {}

export interface Dimensions {
  width: number;
  height: number;
}

/** Scale (width, height) so the longer side is at most maxSide. Never
 * upscales; aspect ratio preserved with rounding, floor at 1 px. */
export function fitWithin(width: number, height: number, maxSide: number = MAX_SIDE): Dimensions {
  const longer = Math.max(width, height);
  if (longer <= maxSide) {
    return { width, height };
  }
  const factor = maxSide / longer;
  return {
    width: Math.max(1, Math.round(width * factor)),
    height: Math.max(1, Math.round(height * factor)),
  };
}

export type MeasureFn = (file: Blob) => Promise<Dimensions>;

async function measureWithBitmap(file: Blob): Promise<Dimensions> {
  const bitmap = await createImageBitmap(file);
  const dims = { width: bitmap.width, height: bitmap.height };
  bitmap.close();
  return dims;
}

/**
 * Validate and, when needed, downscale an upload. Files over the byte cap
 * are rejected here, client-side, before any request is issued. Returns
 * the original blob untouched when it already fits.
 */
export async function prepareUpload(
  file: Blob,
  measure: MeasureFn = measureWithBitmap,
): Promise<Blob> {
  if (file.size > MAX_UPLOAD_BYTES) {
    throw new UploadError(
      `file is ${(file.size / 1024 / 1024).toFixed(1)} MiB, limit is 10 MiB`,
    );
  }
  const dims = await measure(file);
  const target = fitWithin(dims.width, dims.height);
  if (target.width === dims.width && target.height === dims.height) {
    return file;
  }

  const bitmap = await createImageBitmap(file);
  const canvas = document.createElement('canvas');
  canvas.width = target.width;
  canvas.height = target.height;
  const ctx = canvas.getContext('2d');
  if (!ctx) {
    bitmap.close();
    throw new UploadError('canvas 2d context unavailable');
  }
  ctx.drawImage(bitmap, 0, 0, target.width, target.height);
  bitmap.close();

  return new Promise((resolve, reject) => {
    canvas.toBlob(
      (blob) => (blob ? resolve(blob) : reject(new UploadError('image encode failed'))),
      'image/jpeg',
      0.9,
    );
  });
}
