import { describe, expect, it } from 'vitest'

import { LayoutApi } from '../src/api'
import { cloneScene } from '../src/schema'
import { EditorStore, emptyScene } from '../src/store'
import { chair, makeService, type FakeService } from './fakeService'

function makeStore(svc: FakeService): EditorStore {
  return new EditorStore(new LayoutApi('', svc.fetchFn))
}

describe('editing and undo', () => {
  it('addObject commits and undo restores', () => {
    const store = makeStore(makeService())
    const before = cloneScene(store.scene)
    store.addObject(1)
    expect(store.scene.objects).toHaveLength(1)
    store.undo()
    expect(store.scene).toEqual(before)
  })

  it('a drag gesture is one undo step', () => {
    const store = makeStore(makeService())
    store.addObject(0)
    store.checkpoint()
    store.moveObject(0, 0.5, 0.5)
    store.moveObject(0, 1.0, 1.0)
    expect(store.scene.objects[0].location[0]).toBe(1.0)
    store.undo()
    expect(store.scene.objects[0].location[0]).toBe(0)
  })

  it('setFloor recomputes bounds and is undoable', () => {
    const store = makeStore(makeService())
    const before = cloneScene(store.scene)
    store.setFloor([
      [0, 0],
      [4, 0],
      [4, 3],
      [0, 3],
    ])
    expect(store.scene.bounds[0]).toBeCloseTo(2 - 2.55, 10)
    store.undo()
    expect(store.scene).toEqual(before)
  })

  it('scene edits invalidate the likelihood overlay', async () => {
    const svc = makeService()
    svc.route('/likelihoods', () => ({ status: 200, json: { scores: [1, 2] } }))
    const store = makeStore(svc)
    store.addObject(0)
    store.addObject(1)
    await store.requestLikelihoods()
    expect(store.likelihoodScores).toEqual([1, 2])
    store.moveObject(0, 1, 1)
    expect(store.likelihoodScores).toBeNull()
  })
})

describe('proposal lifecycle', () => {
  it('suggestion stays ghosted until accepted', async () => {
    const svc = makeService()
    svc.route('/suggest', () => ({
      status: 200,
      json: { suggestion: chair([0.5, 0.45, 0.5]), seed: 9 },
    }))
    const store = makeStore(svc)
    store.setConstraintBox({ min: [-1, 0, -1], max: [1, 3, 1] })
    const before = cloneScene(store.scene)
    await store.requestSuggest()
    expect(store.proposal?.kind).toBe('object')
    expect(store.scene).toEqual(before)
    store.acceptProposal()
    expect(store.scene.objects).toHaveLength(1)
    expect(store.proposal).toBeNull()
  })

  it('reject restores the pre-call scene exactly', async () => {
    const svc = makeService()
    svc.route('/complete', (body) => {
      const scene = cloneScene(body.scene)
      scene.objects.push(chair([0.2, 0.45, 0.2]))
      return { status: 200, json: { scene, truncated: false, seed: 2 } }
    })
    const store = makeStore(svc)
    store.addObject(0)
    const before = cloneScene(store.scene)
    await store.requestComplete()
    expect(store.proposal?.kind).toBe('scene')
    store.rejectProposal()
    expect(store.scene).toEqual(before)
    expect(store.proposal).toBeNull()
  })

  it('accepting a completion replaces the scene and undo returns', async () => {
    const svc = makeService()
    svc.route('/complete', (body) => {
      const scene = cloneScene(body.scene)
      scene.objects.push(chair([0.2, 0.45, 0.2]))
      return { status: 200, json: { scene, truncated: false, seed: 2 } }
    })
    const store = makeStore(svc)
    store.addObject(0)
    const before = cloneScene(store.scene)
    await store.requestComplete()
    store.acceptProposal()
    expect(store.scene.objects).toHaveLength(2)
    store.undo()
    expect(store.scene).toEqual(before)
  })

  it('a null suggestion reports "nothing fits" without a proposal', async () => {
    const svc = makeService()
    svc.route('/suggest', () => ({ status: 200, json: { suggestion: null, seed: 1 } }))
    const store = makeStore(svc)
    store.setConstraintBox({ min: [0, 0, 0], max: [0.1, 1, 0.1] })
    await store.requestSuggest()
    expect(store.proposal).toBeNull()
    expect(store.status?.text).toMatch(/nothing fits/)
  })

  it('suggest without a box asks for one and makes no request', async () => {
    const svc = makeService()
    const store = makeStore(svc)
    await store.requestSuggest()
    expect(svc.calls).toHaveLength(0)
    expect(store.status?.tone).toBe('error')
  })
})

describe('error contract', () => {
  it('a 4xx leaves the scene unchanged and shows the message inline', async () => {
    const svc = makeService()
    svc.route('/complete', () => ({
      status: 422,
      json: { error: 'floor polygon must not self-intersect' },
    }))
    const store = makeStore(svc)
    store.addObject(0)
    const before = cloneScene(store.scene)
    await store.requestComplete()
    expect(store.scene).toEqual(before)
    expect(store.proposal).toBeNull()
    expect(store.status).toEqual({
      text: 'floor polygon must not self-intersect',
      tone: 'error',
    })
    expect(store.offline).toBe(false)
  })

  it('transport failure flips offline; a later success clears it', async () => {
    const svc = makeService()
    svc.route('/likelihoods', () => ({ status: 200, json: { scores: [] } }))
    const store = makeStore(svc)
    svc.down = true
    await store.requestLikelihoods()
    expect(store.offline).toBe(true)
    svc.down = false
    await store.requestLikelihoods()
    expect(store.offline).toBe(false)
  })

  it('only one request is in flight at a time', async () => {
    const svc = makeService()
    let release: (() => void) | null = null
    const gate = new Promise<void>((resolve) => {
      release = resolve
    })
    svc.route('/complete', () => ({
      status: 200,
      json: { scene: emptyScene(), truncated: false, seed: 1 },
    }))
    const api = new LayoutApi('', (async (input: any, init?: any) => {
      await gate
      return svc.fetchFn(input, init)
    }) as typeof fetch)
    const store = new EditorStore(api)
    const first = store.requestComplete()
    expect(store.busy).toBe(true)
    const second = store.requestComplete()
    release!()
    await Promise.all([first, second])
    expect(svc.calls).toHaveLength(1)
    expect(store.busy).toBe(false)
  })
})
