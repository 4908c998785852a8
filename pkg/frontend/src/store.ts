/**
 * Editor state machine. Owns the scene document, the undo stack, and the
 * proposal lifecycle. Service responses only land in the scene through an
 * explicit accept, so rejecting always leaves the pre-call state intact.
 * At most one request is in flight at a time.
 */

import { ApiError, LayoutApi, ServiceDownError } from './api'
import { boundsForPolygon } from './geometry'
import { cloneScene, sceneToJson } from './schema'
import type {
  AnomalyReport,
  ConstraintBox,
  Scene,
  SceneObject,
  ServiceMeta,
} from './types'

const MAX_UNDO = 100

/** Pending service result, rendered ghosted until accepted or rejected. */
export type Proposal =
  | { kind: 'object'; object: SceneObject; label: string }
  | { kind: 'scene'; scene: Scene; label: string; report?: AnomalyReport }

export interface StatusMessage {
  text: string
  tone: 'info' | 'error'
}

export function emptyScene(roomType = 'scene'): Scene {
  return {
    room_type: roomType,
    bounds: [-2.05, 0, -2.05, 2.05, 3, 2.05],
    floor_polygon: [
      [-2, -2],
      [2, -2],
      [2, 2],
      [-2, 2],
    ],
    objects: [],
  }
}

export class EditorStore {
  api: LayoutApi
  meta: ServiceMeta | null = null
  scene: Scene
  selection: number = -1
  proposal: Proposal | null = null
  busy = false
  offline = false
  status: StatusMessage | null = null
  seed: number | null = null
  temperature = 1.0
  /** last /likelihoods result, index-aligned with scene.objects */
  likelihoodScores: number[] | null = null
  /** constraint box for Suggest, in world coordinates */
  constraintBox: ConstraintBox | null = null

  private undoStack: Scene[] = []
  private listeners: Array<() => void> = []

  constructor(api: LayoutApi, scene: Scene = emptyScene()) {
    this.api = api
    this.scene = scene
  }

  subscribe(fn: () => void): () => void {
    this.listeners.push(fn)
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn)
    }
  }

  private notify() {
    for (const fn of this.listeners) fn()
  }

  // ----- scene mutation (all user-driven, all undoable) -----

  /** Snapshot the scene so the next undo returns here. */
  checkpoint() {
    this.undoStack.push(cloneScene(this.scene))
    if (this.undoStack.length > MAX_UNDO) this.undoStack.shift()
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0
  }

  undo() {
    const prev = this.undoStack.pop()
    if (!prev) return
    this.scene = prev
    this.selection = -1
    this.proposal = null
    this.likelihoodScores = null
    this.notify()
  }

  private commitScene(next: Scene) {
    this.checkpoint()
    this.scene = next
    this.likelihoodScores = null
    this.notify()
  }

  loadScene(scene: Scene) {
    this.commitScene(cloneScene(scene))
    this.selection = -1
    this.proposal = null
  }

  setFloor(polygon: Array<[number, number]>) {
    if (polygon.length < 3) {
      this.setStatus('floor needs at least 3 vertices', 'error')
      return
    }
    const next = cloneScene(this.scene)
    next.floor_polygon = polygon.map((p) => [p[0], p[1]] as [number, number])
    next.bounds = boundsForPolygon(polygon)
    this.commitScene(next)
  }

  addObject(category: number) {
    const name = this.meta?.categories[category]
    const next = cloneScene(this.scene)
    const obj: SceneObject = {
      category,
      size: [0.3, 0.4, 0.3],
      location: [0, 0.4, 0],
      orientation: 0,
    }
    if (name) obj.category_name = name
    next.objects.push(obj)
    this.commitScene(next)
    this.selection = next.objects.length - 1
  }

  /** Move without a checkpoint; call checkpoint() when the drag starts. */
  moveObject(index: number, x: number, z: number) {
    const o = this.scene.objects[index]
    if (!o) return
    o.location = [x, o.location[1], z]
    this.likelihoodScores = null
    this.notify()
  }

  rotateObject(index: number, orientation: number) {
    const o = this.scene.objects[index]
    if (!o) return
    o.orientation = orientation
    this.likelihoodScores = null
    this.notify()
  }

  deleteObject(index: number) {
    if (!this.scene.objects[index]) return
    const next = cloneScene(this.scene)
    next.objects.splice(index, 1)
    this.commitScene(next)
    this.selection = -1
  }

  select(index: number) {
    this.selection = index
    this.notify()
  }

  setConstraintBox(box: ConstraintBox | null) {
    this.constraintBox = box
    this.notify()
  }

  setStatus(text: string | null, tone: 'info' | 'error' = 'info') {
    this.status = text === null ? null : { text, tone }
    this.notify()
  }

  exportJson(): string {
    return sceneToJson(this.scene)
  }

  // ----- service calls -----

  private samplingOpts() {
    return {
      ...(this.seed !== null && { seed: this.seed }),
      temperature: this.temperature,
    }
  }

  /**
   * Run one request, enforcing the single-flight rule and the error
   * contract: HTTP errors surface as inline messages, transport errors
   * flip the offline banner, and the scene is untouched either way.
   */
  private async call<T>(work: () => Promise<T>, onDone: (result: T) => void): Promise<void> {
    if (this.busy) return
    this.busy = true
    this.status = null
    this.notify()
    try {
      const result = await work()
      this.offline = false
      onDone(result)
    } catch (err) {
      if (err instanceof ServiceDownError) {
        this.offline = true
        this.setStatus('service unreachable; editing offline', 'error')
      } else if (err instanceof ApiError) {
        this.setStatus(err.message, 'error')
      } else {
        this.setStatus(err instanceof Error ? err.message : String(err), 'error')
      }
    } finally {
      this.busy = false
      this.notify()
    }
  }

  async requestSynthesize(): Promise<void> {
    await this.call(
      () => this.api.synthesize(this.scene.floor_polygon, this.samplingOpts()),
      (res) => {
        this.proposal = {
          kind: 'scene',
          scene: res.scene,
          label: `synthesized ${res.scene.objects.length} objects (seed ${res.seed})`,
        }
        if (res.truncated) this.setStatus('generation hit the object cap', 'info')
      },
    )
  }

  async requestComplete(): Promise<void> {
    await this.call(
      () => this.api.complete(this.scene, this.samplingOpts()),
      (res) => {
        const added = res.scene.objects.length - this.scene.objects.length
        this.proposal = {
          kind: 'scene',
          scene: res.scene,
          label: `completion adds ${added} objects (seed ${res.seed})`,
        }
      },
    )
  }

  async requestSuggest(): Promise<void> {
    const box = this.constraintBox
    if (!box) {
      this.setStatus('drag a constraint box first', 'error')
      return
    }
    await this.call(
      () => this.api.suggest(this.scene, box, this.samplingOpts()),
      (res) => {
        if (res.suggestion === null) {
          this.setStatus('nothing fits in that box', 'info')
        } else {
          this.proposal = {
            kind: 'object',
            object: res.suggestion,
            label: `suggestion (seed ${res.seed})`,
          }
        }
      },
    )
  }

  async requestPlace(category: number): Promise<void> {
    await this.call(
      () => this.api.place(this.scene, category, this.samplingOpts()),
      (res) => {
        this.proposal = {
          kind: 'object',
          object: res.object,
          label: `placed ${res.object.category_name ?? `category ${category}`} (seed ${res.seed})`,
        }
      },
    )
  }

  async requestDetect(): Promise<void> {
    await this.call(
      () => this.api.detect(this.scene, this.seed ?? undefined),
      (res) => {
        if (res.report.flagged.length === 0) {
          this.setStatus('no anomalies found', 'info')
        } else {
          this.proposal = {
            kind: 'scene',
            scene: res.scene,
            label: `moved object ${res.report.flagged.join(', ')}`,
            report: res.report,
          }
        }
      },
    )
  }

  async requestLikelihoods(): Promise<void> {
    await this.call(
      () => this.api.likelihoods(this.scene),
      (res) => {
        this.likelihoodScores = res.scores
      },
    )
  }

  async loadMeta(): Promise<void> {
    await this.call(
      () => this.api.meta(),
      (res) => {
        this.meta = res
      },
    )
  }

  // ----- proposal lifecycle -----

  acceptProposal() {
    const p = this.proposal
    if (!p) return
    const next = p.kind === 'object' ? cloneScene(this.scene) : cloneScene(p.scene)
    if (p.kind === 'object') next.objects.push(p.object)
    this.proposal = null
    this.commitScene(next)
  }

  rejectProposal() {
    this.proposal = null
    this.notify()
  }
}
