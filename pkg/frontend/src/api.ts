/** Typed client for the codec service endpoints. */

import type { Rect } from "./geometry.js"

export interface SessionResponse {
  id: string
  width: number
  height: number
  factor: number
  latent_h: number
  latent_w: number
  bpp_base: number
  bpp_enh_total: number
  image_b64: string
  image_format: "png" | "ppm"
}

export interface EnhanceResponse {
  bpp_enh_sent_delta: number
  bpp_enh_sent: number
  cumulative_rois: number[][]
  image_b64: string
  image_format: "png" | "ppm"
}

export interface StatsResponse {
  id: string
  width: number
  height: number
  factor: number
  latent_h: number
  latent_w: number
  bpp_base: number
  bpp_enh_total: number
  bpp_enh_sent: number
  bpp_total: number
  rois: number[][]
  latent_tiles: number[][]
  psnr_base?: number
  psnr_current?: number
  psnr_full?: number
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message)
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({ error: `bad JSON from ${resp.url}` }))
  if (!resp.ok) {
    throw new ApiError(resp.status, (body as { error?: string }).error ?? resp.statusText)
  }
  return body as T
}

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  async createSession(imageBytes: Uint8Array | ArrayBuffer): Promise<SessionResponse> {
    const resp = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: imageBytes instanceof Uint8Array
        ? imageBytes.slice().buffer as ArrayBuffer
        : imageBytes,
    })
    return expectJson<SessionResponse>(resp)
  }

  async enhance(sessionId: string, rois: Rect[]): Promise<EnhanceResponse> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/enhance`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ rois: rois.map((r) => [r.x, r.y, r.w, r.h]) }),
    })
    return expectJson<EnhanceResponse>(resp)
  }

  async stats(sessionId: string): Promise<StatsResponse> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}`)
    return expectJson<StatsResponse>(resp)
  }

  imageUrl(sessionId: string, mode: "base" | "current" | "full"): string {
    return `${this.baseUrl}/sessions/${sessionId}/image?mode=${mode}`
  }

  spectrumUrl(sessionId: string, mode: "base" | "current" | "full"): string {
    return `${this.baseUrl}/sessions/${sessionId}/spectrum?mode=${mode}`
  }
}

export function imageDataUrl(b64: string, format: "png" | "ppm"): string {
  const mime = format === "png" ? "image/png" : "image/x-portable-pixmap"
  return `data:${mime};base64,${b64}`
}
