/**
 * Typed client for the layout service. Every call is stateless; seeds in
 * the response make any result replayable.
 */

import type {
  ConstraintBox,
  DetectResponse,
  LikelihoodsResponse,
  PlaceResponse,
  Scene,
  ServiceMeta,
  SuggestResponse,
  SynthesizeResponse,
} from './types'

/** HTTP-level failure: the service answered with a non-2xx status. */
export class ApiError extends Error {
  status: number

  constructor(status: number, message: string) {
    super(message)
    this.status = status
  }
}

/** Transport-level failure: the service did not answer at all. */
export class ServiceDownError extends Error {
  constructor(cause: unknown) {
    super(cause instanceof Error ? cause.message : 'service unreachable')
  }
}

export interface SamplingOptions {
  seed?: number
  temperature?: number
  maxObjects?: number
}

export class LayoutApi {
  baseUrl: string
  private fetchFn: typeof fetch

  constructor(baseUrl = '', fetchFn: typeof fetch = fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, '')
    this.fetchFn = fetchFn
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
        body: body === undefined ? undefined : JSON.stringify(body),
      })
    } catch (err) {
      throw new ServiceDownError(err)
    }
    if (!response.ok) {
      let message = `${response.status} ${response.statusText}`
      try {
        const doc = (await response.json()) as { error?: string; detail?: string }
        message = doc.error || doc.detail || message
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, message)
    }
    return (await response.json()) as T
  }

  meta(): Promise<ServiceMeta> {
    return this.request('GET', '/meta')
  }

  synthesize(
    floorPolygon: Array<[number, number]>,
    opts: SamplingOptions = {},
  ): Promise<SynthesizeResponse> {
    return this.request('POST', '/synthesize', {
      floor_polygon: floorPolygon,
      ...(opts.seed !== undefined && { seed: opts.seed }),
      ...(opts.temperature !== undefined && { temperature: opts.temperature }),
      ...(opts.maxObjects !== undefined && { max_objects: opts.maxObjects }),
    })
  }

  complete(scene: Scene, opts: SamplingOptions = {}): Promise<SynthesizeResponse> {
    return this.request('POST', '/complete', {
      scene,
      ...(opts.seed !== undefined && { seed: opts.seed }),
      ...(opts.temperature !== undefined && { temperature: opts.temperature }),
      ...(opts.maxObjects !== undefined && { max_objects: opts.maxObjects }),
    })
  }

  suggest(
    scene: Scene,
    box: ConstraintBox,
    opts: SamplingOptions = {},
  ): Promise<SuggestResponse> {
    return this.request('POST', '/suggest', {
      scene,
      constraint_box: box,
      ...(opts.seed !== undefined && { seed: opts.seed }),
      ...(opts.temperature !== undefined && { temperature: opts.temperature }),
    })
  }

  place(scene: Scene, category: number, opts: SamplingOptions = {}): Promise<PlaceResponse> {
    return this.request('POST', '/place', {
      scene,
      category,
      ...(opts.seed !== undefined && { seed: opts.seed }),
      ...(opts.temperature !== undefined && { temperature: opts.temperature }),
    })
  }

  detect(scene: Scene, seed?: number): Promise<DetectResponse> {
    return this.request('POST', '/detect', {
      scene,
      ...(seed !== undefined && { seed }),
    })
  }

  likelihoods(scene: Scene): Promise<LikelihoodsResponse> {
    return this.request('POST', '/likelihoods', { scene })
  }
}
