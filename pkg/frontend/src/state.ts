/**
 * Viewer state and its pure transitions.
 *
 * All rate counters come from server responses; this module never computes
 * a bpp figure on its own.  ROIs committed here mirror the server's
 * cumulative set returned by each enhance call.  One enhancement request is
 * in flight at a time; additional commits queue until it settles.
 */

import type { EnhanceResponse, SessionResponse, StatsResponse } from "./api.js"
import { clampRect, hasArea, Rect } from "./geometry.js"

export type ViewMode = "image" | "spectrum" | "compare"

export interface ViewerState {
  sessionId: string | null
  width: number
  height: number
  draft: Rect | null
  committedRois: Rect[]
  bppBase: number
  bppEnhTotal: number
  bppEnhSent: number
  lastDelta: number
  psnrCurrent: number | null
  viewMode: ViewMode
  inFlight: boolean
  queue: Rect[]
}

export function initialState(): ViewerState {
  return {
    sessionId: null,
    width: 0,
    height: 0,
    draft: null,
    committedRois: [],
    bppBase: 0,
    bppEnhTotal: 0,
    bppEnhSent: 0,
    lastDelta: 0,
    psnrCurrent: null,
    viewMode: "image",
    inFlight: false,
    queue: [],
  }
}

export function openSession(state: ViewerState, resp: SessionResponse): ViewerState {
  return {
    ...initialState(),
    sessionId: resp.id,
    width: resp.width,
    height: resp.height,
    bppBase: resp.bpp_base,
    bppEnhTotal: resp.bpp_enh_total,
    viewMode: state.viewMode,
  }
}

/** Update the draft rectangle from a drag, clamped into the image. */
export function setDraft(state: ViewerState, rect: Rect | null): ViewerState {
  if (rect === null) {
    return { ...state, draft: null }
  }
  return { ...state, draft: clampRect(rect, state.width, state.height) }
}

/**
 * Commit the draft: either it becomes the in-flight request or it queues
 * behind one.  Returns the new state and the rect to send now (if any).
 */
export function commitDraft(state: ViewerState): { state: ViewerState; send: Rect | null } {
  if (!hasArea(state.draft)) {
    return { state, send: null }
  }
  const rect = state.draft
  if (state.inFlight) {
    return { state: { ...state, draft: null, queue: [...state.queue, rect] }, send: null }
  }
  return { state: { ...state, draft: null, inFlight: true }, send: rect }
}

/** Fold in an enhance response; counters mirror the server exactly. */
export function applyEnhance(state: ViewerState, resp: EnhanceResponse): { state: ViewerState; send: Rect | null } {
  const next: ViewerState = {
    ...state,
    committedRois: resp.cumulative_rois.map(([x, y, w, h]) => ({ x, y, w, h })),
    bppEnhSent: resp.bpp_enh_sent,
    lastDelta: resp.bpp_enh_sent_delta,
    inFlight: false,
  }
  if (next.queue.length > 0) {
    const [head, ...rest] = next.queue
    return { state: { ...next, queue: rest, inFlight: true }, send: head }
  }
  return { state: next, send: null }
}

export function applyStats(state: ViewerState, stats: StatsResponse): ViewerState {
  return {
    ...state,
    bppBase: stats.bpp_base,
    bppEnhTotal: stats.bpp_enh_total,
    bppEnhSent: stats.bpp_enh_sent,
    committedRois: stats.rois.map(([x, y, w, h]) => ({ x, y, w, h })),
    psnrCurrent: stats.psnr_current ?? null,
  }
}

export function failEnhance(state: ViewerState): { state: ViewerState; send: Rect | null } {
  // Drop the failed request but keep the queue draining.
  const next = { ...state, inFlight: false }
  if (next.queue.length > 0) {
    const [head, ...rest] = next.queue
    return { state: { ...next, queue: rest, inFlight: true }, send: head }
  }
  return { state: next, send: null }
}

export function toggleView(state: ViewerState, mode: ViewMode): ViewerState {
  return { ...state, viewMode: mode }
}
