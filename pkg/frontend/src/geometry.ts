/**
 * Rectangle math shared with the server.
 *
 * The latent-grid mapping must match the server's outward rounding exactly
 * (floor on the low edge, ceil on the high edge, clamped to the grid), so
 * the overlay shown while drawing is the set of latent cells the server
 * will actually transmit.
 */

export interface Rect {
  x: number
  y: number
  w: number
  h: number
}

export interface LatentTile {
  y0: number
  x0: number
  th: number
  tw: number
}

/** Order a drag gesture's corners into a non-negative rectangle. */
export function normalizeDrag(x0: number, y0: number, x1: number, y1: number): Rect {
  const x = Math.min(x0, x1)
  const y = Math.min(y0, y1)
  return { x, y, w: Math.abs(x1 - x0), h: Math.abs(y1 - y0) }
}

/** Snap to the pixel grid and clamp into the image; empty rects stay empty. */
export function clampRect(rect: Rect, width: number, height: number): Rect {
  const x = Math.max(0, Math.min(Math.round(rect.x), width - 1))
  const y = Math.max(0, Math.min(Math.round(rect.y), height - 1))
  const w = Math.max(0, Math.min(Math.round(rect.w), width - x))
  const h = Math.max(0, Math.min(Math.round(rect.h), height - y))
  return { x, y, w, h }
}

export function hasArea(rect: Rect | null): rect is Rect {
  return rect !== null && rect.w > 0 && rect.h > 0
}

/** Outward-rounded latent tile covering an image rectangle (server formula). */
export function latentTileForRect(rect: Rect, factor: number, latH: number, latW: number): LatentTile {
  const x0 = Math.max(0, Math.floor(rect.x / factor))
  const y0 = Math.max(0, Math.floor(rect.y / factor))
  const x1 = Math.min(latW, Math.ceil((rect.x + rect.w) / factor))
  const y1 = Math.min(latH, Math.ceil((rect.y + rect.h) / factor))
  return { y0, x0, th: y1 - y0, tw: x1 - x0 }
}

/** Image-space footprint of a latent tile, for drawing the expansion overlay. */
export function tileToImageRect(tile: LatentTile, factor: number, width: number, height: number): Rect {
  const x = tile.x0 * factor
  const y = tile.y0 * factor
  return {
    x,
    y,
    w: Math.min(width, (tile.x0 + tile.tw) * factor) - x,
    h: Math.min(height, (tile.y0 + tile.th) * factor) - y,
  }
}

export function rectsEqual(a: Rect, b: Rect): boolean {
  return a.x === b.x && a.y === b.y && a.w === b.w && a.h === b.h
}
