/**
 * An in-memory stand-in for the layout service: a fetch-compatible
 * function with programmable per-route handlers, so client code runs
 * its real request path.
 */

import type { SceneObject } from '../src/types'

type Handler = (body: any) => { status: number; json: unknown }

export interface FakeService {
  fetchFn: typeof fetch
  /** ordered log of (path, parsed body) pairs */
  calls: Array<{ path: string; body: any }>
  route: (path: string, handler: Handler) => void
  /** fail every request at the transport level */
  down: boolean
}

export function makeService(): FakeService {
  const handlers = new Map<string, Handler>()
  const service: FakeService = {
    calls: [],
    down: false,
    route: (path, handler) => handlers.set(path, handler),
    fetchFn: (async (input: any, init?: any) => {
      const url = String(input)
      const path = url.replace(/^https?:\/\/[^/]+/, '')
      if (service.down) throw new TypeError('fetch failed')
      const body = init?.body ? JSON.parse(init.body) : undefined
      service.calls.push({ path, body })
      const handler = handlers.get(path)
      if (!handler) return jsonResponse(404, { error: `no route ${path}` })
      const { status, json } = handler(body)
      return jsonResponse(status, json)
    }) as typeof fetch,
  }
  return service
}

function jsonResponse(status: number, json: unknown): Response {
  return new Response(JSON.stringify(json), {
    status,
    headers: { 'Content-Type': 'application/json' },
  })
}

export function chair(location: [number, number, number]): SceneObject {
  return {
    category: 1,
    category_name: 'chair',
    size: [0.2, 0.45, 0.2],
    location,
    orientation: 0.3,
  }
}

export const META = {
  categories: ['table', 'chair', 'lamp'],
  n_categories: 3,
  room_type: 'toy',
  likelihood_threshold: 8.0,
  max_objects: 30,
  config: { ordering_mode: 'permutation_invariant' },
}
