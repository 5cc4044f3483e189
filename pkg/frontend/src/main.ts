/**
 * ROI enhancement viewer: upload an image, see the base-layer
 * reconstruction, drag rectangles to pull in enhancement tiles, watch the
 * rate counters, and flip between image, spectrum, and base-vs-current
 * views.  The session id persists in the URL hash; everything else reloads
 * from the server.
 */

import { imageDataUrl, ServiceClient } from "./api.js"
import { hasArea, latentTileForRect, normalizeDrag, Rect, tileToImageRect } from "./geometry.js"
import {
  applyEnhance,
  applyStats,
  commitDraft,
  failEnhance,
  initialState,
  openSession,
  setDraft,
  toggleView,
  ViewerState,
  ViewMode,
} from "./state.js"

const serviceBase = (window as { FREQCODEC_SERVICE?: string }).FREQCODEC_SERVICE ?? ""
const client = new ServiceClient(serviceBase)

let state: ViewerState = initialState()
let factor = 16
let latentH = 0
let latentW = 0
let currentImage: HTMLImageElement | null = null
let baseImage: HTMLImageElement | null = null
let dragStart: { x: number; y: number } | null = null

const fileInput = document.getElementById("file") as HTMLInputElement
const canvas = document.getElementById("view") as HTMLCanvasElement
const statusLine = document.getElementById("status") as HTMLElement
const counters = document.getElementById("counters") as HTMLElement
const enhanceButton = document.getElementById("enhance") as HTMLButtonElement
const modeButtons = Array.from(document.querySelectorAll<HTMLButtonElement>("[data-mode]"))

function setStatus(text: string) {
  statusLine.textContent = text
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image()
    img.onload = () => resolve(img)
    img.onerror = () => reject(new Error(`failed to load ${url.slice(0, 64)}`))
    img.src = url
  })
}

function renderCounters() {
  const parts = [
    `base ${state.bppBase.toFixed(3)} bpp`,
    `enhancement sent ${state.bppEnhSent.toFixed(3)} / ${state.bppEnhTotal.toFixed(3)} bpp`,
    `last request +${state.lastDelta.toFixed(3)} bpp`,
    `${state.committedRois.length} ROI(s)`,
  ]
  if (state.psnrCurrent !== null) {
    parts.push(`current ${state.psnrCurrent.toFixed(2)} dB`)
  }
  counters.textContent = parts.join("  ·  ")
}

function drawRect(ctx: CanvasRenderingContext2D, rect: Rect, color: string, xOff = 0) {
  ctx.strokeStyle = color
  ctx.lineWidth = 1
  ctx.strokeRect(rect.x + xOff + 0.5, rect.y + 0.5, rect.w, rect.h)
}

function render() {
  const ctx = canvas.getContext("2d")
  if (!ctx) return
  const compare = state.viewMode === "compare"
  canvas.width = compare ? state.width * 2 + 4 : Math.max(state.width, 320)
  canvas.height = Math.max(state.height, 120)
  ctx.fillStyle = "#181818"
  ctx.fillRect(0, 0, canvas.width, canvas.height)

  if (!state.sessionId || !currentImage) {
    ctx.fillStyle = "#888"
    ctx.fillText("upload an image to begin", 12, 24)
    return
  }
  if (compare && baseImage) {
    ctx.drawImage(baseImage, 0, 0)
    ctx.drawImage(currentImage, state.width + 4, 0)
    ctx.fillStyle = "#ccc"
    ctx.fillText("base", 4, 12)
    ctx.fillText("current", state.width + 8, 12)
  } else {
    ctx.drawImage(currentImage, 0, 0)
  }

  const xOff = 0
  for (const roi of state.committedRois) {
    drawRect(ctx, roi, "#3fa34d", xOff)
  }
  if (hasArea(state.draft)) {
    // The outward-rounded latent footprint the server would transmit.
    const tile = latentTileForRect(state.draft, factor, latentH, latentW)
    if (tile.th > 0 && tile.tw > 0) {
      drawRect(ctx, tileToImageRect(tile, factor, state.width, state.height), "#e0b040", xOff)
    }
    drawRect(ctx, state.draft, "#e04040", xOff)
  }
  renderCounters()
}

async function refreshImages() {
  if (!state.sessionId) return
  if (state.viewMode === "spectrum") {
    currentImage = await loadImage(client.spectrumUrl(state.sessionId, "current"))
  } else {
    currentImage = await loadImage(client.imageUrl(state.sessionId, "current"))
    baseImage = await loadImage(client.imageUrl(state.sessionId, "base"))
  }
  render()
}

async function refreshStats() {
  if (!state.sessionId) return
  const stats = await client.stats(state.sessionId)
  factor = stats.factor
  latentH = stats.latent_h
  latentW = stats.latent_w
  state = applyStats(state, stats)
  render()
}

async function openFromFile(file: File) {
  setStatus(`encoding ${file.name}…`)
  try {
    const bytes = new Uint8Array(await file.arrayBuffer())
    const resp = await client.createSession(bytes)
    state = openSession(state, resp)
    factor = resp.factor
    latentH = resp.latent_h
    latentW = resp.latent_w
    window.location.hash = resp.id
    currentImage = await loadImage(imageDataUrl(resp.image_b64, resp.image_format))
    baseImage = currentImage
    setStatus(`session ${resp.id}: base layer shown`)
    render()
  } catch (err) {
    setStatus(`upload failed: ${(err as Error).message}`)
  }
}

async function sendEnhance(rect: Rect) {
  if (!state.sessionId) return
  setStatus("requesting enhancement…")
  try {
    const resp = await client.enhance(state.sessionId, [rect])
    const { state: next, send } = applyEnhance(state, resp)
    state = next
    currentImage = await loadImage(imageDataUrl(resp.image_b64, resp.image_format))
    await refreshStats()
    setStatus(resp.bpp_enh_sent_delta > 0
      ? `received ${resp.bpp_enh_sent_delta.toFixed(3)} bpp of enhancement tiles`
      : "region already covered; nothing sent")
    if (send) void sendEnhance(send)
  } catch (err) {
    const { state: next, send } = failEnhance(state)
    state = next
    setStatus(`enhancement failed: ${(err as Error).message}`)
    if (send) void sendEnhance(send)
  }
  render()
}

function canvasPoint(ev: MouseEvent): { x: number; y: number } {
  const bounds = canvas.getBoundingClientRect()
  return { x: ev.clientX - bounds.left, y: ev.clientY - bounds.top }
}

canvas.addEventListener("mousedown", (ev) => {
  if (!state.sessionId || state.viewMode !== "image") return
  dragStart = canvasPoint(ev)
})

canvas.addEventListener("mousemove", (ev) => {
  if (!dragStart) return
  const p = canvasPoint(ev)
  state = setDraft(state, normalizeDrag(dragStart.x, dragStart.y, p.x, p.y))
  render()
})

window.addEventListener("mouseup", () => {
  dragStart = null
})

enhanceButton.addEventListener("click", () => {
  const { state: next, send } = commitDraft(state)
  state = next
  render()
  if (send) void sendEnhance(send)
})

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0]
  if (file) void openFromFile(file)
})

for (const button of modeButtons) {
  button.addEventListener("click", () => {
    state = toggleView(state, button.dataset.mode as ViewMode)
    void refreshImages()
  })
}

// Stateless across reloads except the session id in the hash.
const existing = window.location.hash.replace("#", "")
if (existing) {
  state = { ...state, sessionId: existing }
  void (async () => {
    try {
      const stats = await client.stats(existing)
      state = { ...applyStats(state, stats), width: stats.width, height: stats.height }
      factor = stats.factor
      latentH = stats.latent_h
      latentW = stats.latent_w
      await refreshImages()
      setStatus(`resumed session ${existing}`)
    } catch {
      setStatus("stored session expired; upload a new image")
      state = initialState()
      window.location.hash = ""
      render()
    }
  })()
} else {
  render()
}
