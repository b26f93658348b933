/**
 * Mask overlay rendering and hit-testing.
 *
 * Server masks arrive as full-image 0/255 grayscale PNGs. The pure helpers
 * here (colorize, hit-test) operate on decoded pixel buffers so they are
 * testable without a canvas; the decode/paint glue needs a real browser.
 */

export interface DecodedMask {
  width: number;
  height: number;
  data: Uint8Array; // one byte per pixel, 0 outside the entity, 255 inside
}

export interface RgbColor {
  r: number;
  g: number;
  b: number;
}

// distinct per-entity colors, cycled when there are more masks than entries
export const MASK_COLORS: readonly RgbColor[] = Object.freeze([
  { r: 251, g: 146, b: 60 }, // orange
  { r: 59, g: 130, b: 246 }, // blue
  { r: 34, g: 197, b: 94 }, // green
  { r: 168, g: 85, b: 247 }, // purple
  { r: 236, g: 72, b: 153 }, // pink
  { r: 6, g: 182, b: 212 }, // cyan
]);

export const colorFor = (index: number): RgbColor =>
  MASK_COLORS[index % MASK_COLORS.length];

/** RGBA buffer with `color` at `alpha` (0..255) inside the mask, clear outside. */
export function maskToRgba(
  mask: DecodedMask,
  color: RgbColor,
  alpha: number
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(mask.width * mask.height * 4);
  for (let i = 0; i < mask.data.length; i++) {
    if (mask.data[i] > 0) {
      const j = i * 4;
      out[j] = color.r;
      out[j + 1] = color.g;
      out[j + 2] = color.b;
      out[j + 3] = alpha;
    }
  }
  return out;
}

/**
 * Index of the first mask covering pixel (x, y), or -1.
 * First wins so overlapping masks resolve to the lowest entity id,
 * matching how the server orders them.
 */
export function hitTest(masks: readonly DecodedMask[], x: number, y: number): number {
  for (let k = 0; k < masks.length; k++) {
    const mask = masks[k];
    if (x < 0 || y < 0 || x >= mask.width || y >= mask.height) {
      continue;
    }
    if (mask.data[y * mask.width + x] > 0) {
      return k;
    }
  }
  return -1;
}

/** Decode a base64 grayscale mask PNG into a per-pixel buffer (browser only). */
export async function decodeMaskPng(b64: string): Promise<DecodedMask> {
  const image = await loadImage(`data:image/png;base64,${b64}`);
  const canvas = document.createElement('canvas');
  canvas.width = image.naturalWidth;
  canvas.height = image.naturalHeight;
  const ctx = canvas.getContext('2d');
  if (ctx === null) {
    throw new Error('canvas 2d context unavailable');
  }
  ctx.drawImage(image, 0, 0);
  const rgba = ctx.getImageData(0, 0, canvas.width, canvas.height).data;
  const data = new Uint8Array(canvas.width * canvas.height);
  for (let i = 0; i < data.length; i++) {
    data[i] = rgba[i * 4]; // grayscale, red channel carries the value
  }
  return { width: canvas.width, height: canvas.height, data };
}

export function loadImage(src: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const image = new Image();
    image.onload = () => resolve(image);
    image.onerror = () => reject(new Error('image decode failed'));
    image.src = src;
  });
}

export interface OverlayState {
  highlighted: number; // index highlighted by selection, -1 for none
}

/**
 * Paint the base image plus entity overlays onto `canvas` at native size.
 * The highlighted mask gets a stronger fill; others stay faint.
 */
export async function paintPreview(
  canvas: HTMLCanvasElement,
  baseImageB64: string,
  masks: readonly DecodedMask[],
  state: OverlayState
): Promise<void> {
  const image = await loadImage(`data:image/png;base64,${baseImageB64}`);
  canvas.width = image.naturalWidth;
  canvas.height = image.naturalHeight;
  const ctx = canvas.getContext('2d');
  if (ctx === null) {
    throw new Error('canvas 2d context unavailable');
  }
  ctx.drawImage(image, 0, 0);
  for (let k = 0; k < masks.length; k++) {
    const alpha = k === state.highlighted ? 150 : 60;
    const rgba = maskToRgba(masks[k], colorFor(k), alpha);
    const layer = new OffscreenCanvas(masks[k].width, masks[k].height);
    const layerCtx = layer.getContext('2d');
    if (layerCtx === null) {
      continue;
    }
    layerCtx.putImageData(new ImageData(rgba, masks[k].width, masks[k].height), 0, 0);
    ctx.drawImage(layer, 0, 0);
  }
}

/** Map a click on the displayed canvas to native pixel coordinates. */
export function displayToPixel(
  canvas: HTMLCanvasElement,
  clientX: number,
  clientY: number
): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor(((clientX - rect.left) / rect.width) * canvas.width);
  const y = Math.floor(((clientY - rect.top) / rect.height) * canvas.height);
  return { x, y };
}
